"""Code generation: turn exact rational functions into fast float evaluators.

The generated function takes one positional argument per variable and
returns a tuple, one entry per input function. Arguments may be floats or
numpy arrays (everything is written with ``+ - * / **``), so the same
evaluator serves single states and vectorized ensembles.
"""

from __future__ import annotations

from typing import Sequence

from geoflow.expr.polynomial import Polynomial
from geoflow.expr.rational import RationalFunction


def _poly_source(p: Polynomial, names: Sequence[str]) -> str:
    if p.is_zero():
        return "0.0"
    parts = []
    for exp, c in p.sorted_terms():
        factors = [repr(float(c))] if c != 1 else []
        for name, e in zip(names, exp):
            if e == 1:
                factors.append(name)
            elif e:
                factors.append(f"{name}**{e}")
        parts.append("*".join(factors) if factors else "1.0")
    return "(" + " + ".join(parts) + ")"


class CompiledFunctions:
    """Callable evaluating a list of rational functions in float arithmetic."""

    def __init__(self, funcs: Sequence[RationalFunction], variables: Sequence[str]):
        self.variables = tuple(variables)
        self.size = len(funcs)
        names = [f"a{i}" for i in range(len(self.variables))]
        bases: dict = {}
        lines = []
        exprs = []
        for f in funcs:
            f = RationalFunction.lift(f, self.variables).with_vars(self.variables)
            num = _poly_source(f.num, names)
            if not f.factors:
                exprs.append(num)
                continue
            dparts = []
            for b, e in f.factors:
                if b not in bases:
                    bname = f"b{len(bases)}"
                    bases[b] = bname
                    lines.append(f"    {bname} = {_poly_source(b, names)}")
                dparts.append(bases[b] if e == 1 else f"{bases[b]}**{e}")
            exprs.append(f"{num}/({'*'.join(dparts)})")
        src = f"def _compiled({', '.join(names)}):\n"
        src += "\n".join(lines) + ("\n" if lines else "")
        src += f"    return ({', '.join(exprs)}{',' if len(exprs) == 1 else ''})\n"
        self.source = src
        scope: dict = {}
        exec(compile(src, "<geoflow-compiled>", "exec"), scope)
        self._fn = scope["_compiled"]

    def __call__(self, *args):
        return self._fn(*args)


def compile_functions(funcs: Sequence[RationalFunction], variables: Sequence[str]) -> CompiledFunctions:
    return CompiledFunctions(funcs, variables)
