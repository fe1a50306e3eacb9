"""Builtin test functions with their intended verdicts.

=================  ==========================================================
name               field
=================  ==========================================================
gaussian           ``exp(-|x|^2)``
cosh2              ``cosh(2|x|)``
rational           ``1 / (1 + |x|^2)``
spike              unit-mass Dirac surrogate at the origin
constant           ``1``
boxcar-smoothed    indicator of ``[-1, 1]^d`` convolved with a unit-mass
                   bump of radius 1/2
=================  ==========================================================
"""
from __future__ import annotations

import numpy as np

from .grid import FUNCTION, Grid, SampledField, convolve, sample, spike

NAMES = ("gaussian", "cosh2", "rational", "spike", "constant", "boxcar-smoothed")

# Intended verdicts (d=1, Lp(2)); keys are (name, system) -> class -> decision.
INTENDED = {
    ("gaussian", "exp"): {"membership": "in", "convolutor": "in", "multiplier": "in"},
    ("cosh2", "exp"): {"membership": "out", "convolutor": "out", "multiplier": "in"},
    ("spike", "one"): {"membership": "out", "convolutor": "in", "multiplier": "out"},
    ("rational", "pol"): {"membership": "out", "multiplier": "in"},
    ("constant", "one"): {"membership": "out", "multiplier": "out"},
    ("boxcar-smoothed", "exp"): {"membership": "in", "convolutor": "in", "multiplier": "in"},
}


def _r2(*xs):
    return sum(x * x for x in xs)


def small_bump(grid: Grid, radius: float = 0.5) -> SampledField:
    """Unit-mass ``exp(-1/(1 - (r/radius)^2))`` supported in the ball of ``radius``."""
    def ev(*xs):
        t = _r2(*xs) / radius ** 2
        out = np.zeros_like(t)
        m = t < 1.0
        out[m] = np.exp(-1.0 / (1.0 - t[m]))
        return out

    b = sample(ev, grid, "bump")
    return b * (1.0 / b.integral())


def make(name: str, grid: Grid) -> SampledField:
    if name == "gaussian":
        return sample(lambda *xs: np.exp(-_r2(*xs)), grid, name)
    if name == "cosh2":
        return sample(lambda *xs: np.cosh(2.0 * np.sqrt(_r2(*xs))), grid, name)
    if name == "rational":
        return sample(lambda *xs: 1.0 / (1.0 + _r2(*xs)), grid, name)
    if name == "spike":
        return spike(grid)
    if name == "constant":
        return sample(lambda *xs: np.ones_like(xs[0]), grid, name)
    if name == "boxcar-smoothed":
        box = sample(lambda *xs: np.all(np.abs(np.stack(xs)) <= 1.0, axis=0).astype(float), grid)
        out = convolve(box, small_bump(grid))
        return SampledField(grid, out.values, FUNCTION, name)
    raise ValueError(f"unknown corpus function {name!r}; expected one of {NAMES}")
