"""Weight function systems and numeric checks of their growth axioms.

A weight system is an increasing family ``n -> w_n`` of functions ``>= 1``.
All evaluation happens in the log domain (``log w_n``) so that exponential
weights on a box of half width 16 never overflow; ratios such as
``w_n / w_m`` are formed as differences of logs.

The checks are truncation-aware proxies: they scan a finite box and report
the box half width together with a diagnostic tail curve, so a failing tail
can be told apart from a genuine failure.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .expr import compile_expression
from .grid import FUNCTION, Grid, SampledField, inner_mask

TAGS = ("one", "log", "pol", "exp", "custom")
C_LIMIT = 1e6
M_CAP_OFFSET = 8
Y_LATTICE = 17
TAIL_DROP = 0.1
# local log-log decay exponent of w_n/w_m must beat -(d + N_MARGIN) at the edge
N_MARGIN = 0.5
N_TREND_TOL = 0.05

LogWeight = Callable[[int, tuple], np.ndarray]


@dataclass(frozen=True)
class WeightSystem:
    """``w_n = exp(log_weight(n, coords))``.

    Attributes
    ----------
    tag : str
        One of ``one, log, pol, exp, custom``.
    generator : str
        Human-readable description of omega (``w_n = e^{n omega}``).
    log_weight : callable
        ``(n, coords) -> log w_n`` evaluated on coordinate arrays.
    meta : dict
        Extra information, e.g. the sandwich report of a smoothed system.
    """

    tag: str
    generator: str
    log_weight: LogWeight = field(repr=False, compare=False)
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown weight tag {self.tag!r}; expected one of {TAGS}")

    def log_w(self, n: int, *coords) -> np.ndarray:
        coords = tuple(np.asarray(c, dtype=float) for c in coords)
        return np.broadcast_to(np.asarray(self.log_weight(int(n), coords), dtype=float), coords[0].shape)

    def __call__(self, n: int, *coords) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_w(n, *coords))

    def sample(self, n: int, grid: Grid) -> SampledField:
        return SampledField(grid, self(n, *grid.coords()), FUNCTION, f"{self.tag}_{n}")

    def scaled(self, c: float) -> "WeightSystem":
        """The equivalent system ``c * w_n`` (``c >= 1`` keeps weights >= 1)."""
        logc = math.log(c)
        base = self.log_weight
        return WeightSystem(self.tag, f"{c}*({self.generator})", lambda n, xs: base(n, xs) + logc, dict(self.meta))


def _norm(coords) -> np.ndarray:
    return np.sqrt(sum(c * c for c in coords))


def _log_japanese(coords) -> np.ndarray:
    return 0.5 * np.log1p(sum(c * c for c in coords))


_OMEGA = {
    "one": ("0", lambda xs: np.zeros_like(xs[0])),
    # log(1 + log<x>) instead of log log<x>, which is negative near 0
    "log": ("log(1 + log<x>)", lambda xs: np.log1p(_log_japanese(xs))),
    "pol": ("log<x>", _log_japanese),
    "exp": ("|x|", _norm),
}


def builtin_system(tag: str) -> WeightSystem:
    """Return ``W_omega = (exp(n omega))_n`` for a builtin tag.

    Examples
    --------
    >>> float(builtin_system("exp")(1, np.array(3.0)))  # doctest: +ELLIPSIS
    20.08...
    """
    if tag not in _OMEGA:
        raise ValueError(f"unknown builtin weight tag {tag!r}; expected one of {tuple(_OMEGA)}")
    desc, omega = _OMEGA[tag]
    return WeightSystem(tag, desc, lambda n, xs: n * omega(xs))


def custom_system(expression: str) -> WeightSystem:
    """``w_n = exp(n * omega)`` with omega given in the expression grammar."""
    omega = compile_expression(expression)
    return WeightSystem("custom", expression, lambda n, xs: n * omega(*xs))


def system_from_spec(spec: str) -> WeightSystem:
    """Builtin tag, or ``custom:<expression>``."""
    if spec.startswith("custom:"):
        return custom_system(spec[len("custom:"):])
    return builtin_system(spec)


# -- results -------------------------------------------------------------------

@dataclass
class CheckResult:
    passed: bool
    witness_m: int | None = None
    constant_C: float | None = None
    curve: list[tuple[float, float]] = field(default_factory=list)
    box: float | None = None
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "passed": bool(self.passed),
            "m": self.witness_m,
            "C": self.constant_C,
            "tail": [[float(a), float(b)] for a, b in self.curve],
            "box": self.box,
            "note": self.note,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _exp_or_inf(v: float) -> float:
    return math.exp(v) if v < 709.0 else math.inf


def _subsample(points: tuple[np.ndarray, ...], limit: int) -> tuple[np.ndarray, ...]:
    count = points[0].size
    stride = max(1, int(math.ceil(count / limit)))
    return tuple(p[::stride] for p in points)


def _inner_points(grid: Grid, margin: float, limit: int) -> tuple[np.ndarray, ...]:
    mask = inner_mask(grid, min(margin, 0.5 * grid.X))
    if grid.dim == 2:
        # subsample per axis so the retained nodes stay a tensor lattice
        ax = grid.axis()
        keep = np.abs(ax) <= grid.X - min(margin, 0.5 * grid.X) + 1e-12 * grid.X
        ax = ax[keep]
        per_axis = max(2, int(math.isqrt(limit)))
        ax = ax[:: max(1, int(math.ceil(ax.size / per_axis)))]
        xx, yy = np.meshgrid(ax, ax, indexing="ij")
        return xx.ravel(), yy.ravel()
    return _subsample(tuple(c[mask] for c in grid.coords()), limit)


def _unit_ball_lattice(dim: int, count: int = Y_LATTICE) -> tuple[np.ndarray, ...]:
    t = np.linspace(-1.0, 1.0, count)
    if dim == 1:
        return (t,)
    yy = np.meshgrid(t, t, indexing="ij")
    keep = yy[0] ** 2 + yy[1] ** 2 <= 1.0 + 1e-12
    return yy[0][keep], yy[1][keep]


def _radial_curve(r: np.ndarray, logv: np.ndarray, radii) -> list[tuple[float, float]]:
    out = []
    for R in radii:
        sel = r <= R + 1e-12
        out.append((float(R), _exp_or_inf(float(np.max(logv[sel])))))
    return out


def _m_range(n: int, m_cap: int | None) -> range:
    if m_cap is None:
        m_cap = n + M_CAP_OFFSET
    if m_cap < n:
        raise ValueError(f"m_cap ({m_cap}) must be >= n ({n})")
    return range(n, m_cap + 1)


# -- axiom checks -------------------------------------------------------------

def check_wM(W: WeightSystem, n: int, m_cap: int | None, grid: Grid,
             C_limit: float = C_LIMIT, margin: float = 1.0) -> CheckResult:
    """Search the smallest m with ``sup_{|y|<=1} w_n(x+y) <= C w_m(x)``.

    x runs over inner-box nodes, y over a 17-point-per-axis lattice of the
    unit ball.
    """
    xs = _inner_points(grid, margin, 1 << 16)
    ys = _unit_ball_lattice(grid.dim)
    shifted = tuple(x[:, None] + y[None, :] for x, y in zip(xs, ys))
    logn = np.max(W.log_w(n, *shifted), axis=1)
    r = _norm(xs)
    radii = [grid.X * 2.0 ** -k for k in range(5, -1, -1)]
    last = None
    for m in _m_range(n, m_cap):
        logratio = logn - W.log_w(m, *xs)
        top = float(np.max(logratio))
        C = _exp_or_inf(top)
        last = (m, C, _radial_curve(r, logratio, radii))
        if math.isfinite(C) and C <= C_limit:
            return CheckResult(True, m, C, last[2], grid.X)
    return CheckResult(False, None, None, last[2], grid.X, f"smallest constant {last[1]:.3g} at m={last[0]}")


def _shell_log_max(r: np.ndarray, logv: np.ndarray, R: float, width: float) -> float:
    sel = (r <= R + 1e-12) & (r >= R * (1.0 - width) - 1e-12)
    if not np.any(sel):
        sel = np.abs(r - R) == np.min(np.abs(r - R))
    return float(np.max(logv[sel]))


def check_wN(W: WeightSystem, n: int, m_cap: int | None, grid: Grid,
             tail_drop: float = TAIL_DROP) -> CheckResult:
    """Search m with ``w_n/w_m`` decaying towards the box edge.

    The ratio on the outermost shell must be at most ``tail_drop`` times its
    value at the origin, and the shell maxima over the outer half of the box
    must be non-increasing.
    """
    coords = tuple(c.ravel() for c in grid.coords())
    r = _norm(coords)
    zero = tuple(np.zeros(1) for _ in range(grid.dim))
    shells = grid.X * np.linspace(0.5, 1.0, 9)
    width = 1.0 / 16.0
    last = None
    for m in _m_range(n, m_cap):
        logratio = W.log_w(n, *coords) - W.log_w(m, *coords)
        at0 = float((W.log_w(n, *zero) - W.log_w(m, *zero))[0])
        prof = [_shell_log_max(r, logratio, R, width) for R in shells]
        curve = [(float(R), _exp_or_inf(v)) for R, v in zip(shells, prof)]
        edge = prof[-1]
        dropped = edge <= at0 + math.log(tail_drop)
        trending = all(b <= a + 1e-9 * max(1.0, abs(a)) for a, b in zip(prof, prof[1:]))
        last = (m, curve, edge - at0)
        if dropped and trending:
            return CheckResult(True, m, _exp_or_inf(float(np.max(logratio))), curve, grid.X)
    return CheckResult(False, None, None, last[1], grid.X,
                       f"edge/origin ratio {math.exp(last[2]):.3g} at m={last[0]}")


def check_N(W: WeightSystem, n: int, m_cap: int | None, grid: Grid) -> CheckResult:
    """Search m with ``w_n/w_m`` integrable, judged from its tail exponent.

    The local decay exponent ``s(R) = log2(g(R)/g(R/2))`` of the shell maxima
    g must satisfy ``s(X) <= -(d + 1/2)`` and must not weaken from ``R = X/2``
    to ``R = X``.  A ratio decaying like ``|x|^{-d-eps}`` or faster passes;
    slowly varying or logarithmic decay fails however large the box.
    """
    coords = tuple(c.ravel() for c in grid.coords())
    r = _norm(coords)
    X = grid.X
    width = 1.0 / 16.0
    radii = [X * 2.0 ** -k for k in range(4, -1, -1)]
    last = None
    for m in _m_range(n, m_cap):
        logratio = W.log_w(n, *coords) - W.log_w(m, *coords)
        g = {R: _shell_log_max(r, logratio, R, width) for R in (X / 4, X / 2, X)}
        s_edge = (g[X] - g[X / 2]) / math.log(2.0)
        s_mid = (g[X / 2] - g[X / 4]) / math.log(2.0)
        with np.errstate(under="ignore"):
            ratio = np.exp(logratio)
        curve = [(R, float(np.sum(ratio[r <= R + 1e-12]) * grid.cell)) for R in radii]
        last = (m, curve, s_edge, s_mid)
        if s_edge <= -(grid.dim + N_MARGIN) and s_edge <= s_mid + N_TREND_TOL:
            note = f"tail exponents s(X/2)={s_mid:.3f}, s(X)={s_edge:.3f}"
            return CheckResult(True, m, curve[-1][1], curve, X, note)
    m, curve, s_edge, s_mid = last
    return CheckResult(False, None, None, curve, X,
                       f"tail exponents s(X/2)={s_mid:.3f}, s(X)={s_edge:.3f} at m={m}")


def check_moderate(W: WeightSystem, V: WeightSystem, n: int, m_cap: int | None, grid: Grid,
                   C_limit: float = C_LIMIT, margin: float = 1.0) -> CheckResult:
    """Search m with ``w_n(x+y) <= C w_m(x) v_m(y)`` for x, y in the inner box."""
    xs = _inner_points(grid, margin, 1024)
    ys = xs
    shifted = tuple(x[:, None] + y[None, :] for x, y in zip(xs, ys))
    logn = W.log_w(n, *shifted)
    r = _norm(xs)
    radii = [grid.X * 2.0 ** -k for k in range(5, -1, -1)]
    last = None
    for m in _m_range(n, m_cap):
        logratio = logn - W.log_w(m, *xs)[:, None] - V.log_w(m, *ys)[None, :]
        per_x = np.max(logratio, axis=1)
        C = _exp_or_inf(float(np.max(per_x)))
        last = (m, C, _radial_curve(r, per_x, radii))
        if math.isfinite(C) and C <= C_limit:
            return CheckResult(True, m, C, last[2], grid.X)
    return CheckResult(False, None, None, last[2], grid.X, f"smallest constant {last[1]:.3g} at m={last[0]}")


def check_squarable(W: WeightSystem, n: int, m_cap: int | None, grid: Grid,
                    C_limit: float = C_LIMIT) -> CheckResult:
    """Search m with ``w_n^2 / w_m <= C`` on the box."""
    coords = tuple(c.ravel() for c in grid.coords())
    r = _norm(coords)
    radii = [grid.X * 2.0 ** -k for k in range(5, -1, -1)]
    last = None
    for m in _m_range(n, m_cap):
        logratio = 2.0 * W.log_w(n, *coords) - W.log_w(m, *coords)
        C = _exp_or_inf(float(np.max(logratio)))
        last = (m, C, _radial_curve(r, logratio, radii))
        if math.isfinite(C) and C <= C_limit:
            return CheckResult(True, m, C, last[2], grid.X)
    return CheckResult(False, None, None, last[2], grid.X, f"smallest constant {last[1]:.3g} at m={last[0]}")


# -- smoothing -----------------------------------------------------------------

class BumpError(ValueError):
    pass


def _validate_bump(bump: SampledField) -> np.ndarray:
    grid = bump.grid
    v = np.asarray(bump.values)
    top = float(np.max(np.abs(v)))
    if top == 0 or np.min(v) < -1e-12 * top:
        raise BumpError("bump must be non-negative and not identically zero")
    outside = grid.radius() > 0.5 + 1e-9
    if np.any(v[outside] > 1e-12 * top):
        raise BumpError("bump must be supported in the ball of radius 1/2")
    mass = float(np.sum(v) * grid.cell)
    if abs(mass - 1.0) > 1e-6:
        raise BumpError(f"bump must have unit integral, got {mass:.9g}")
    return np.clip(v, 0.0, None)


def smooth_system(W: WeightSystem, bump: SampledField, n_check: int = 3) -> WeightSystem:
    """Mollify every weight: ``omega_n = w_n * bump``.

    The convolution is a direct log-sum-exp over the bump's nodes, which
    keeps full relative accuracy for weights spanning hundreds of orders of
    magnitude.  Weights are tabulated on an extended copy of the bump's
    grid and interpolated (linearly in ``log``) elsewhere.

    The returned system carries a ``sandwich`` report in ``meta`` for
    ``n <= n_check``: monotonicity of the smoothed family and the range of
    ``log(omega_n / w_n)`` against the (wM) constant with ``m = n``.
    """
    vals = _validate_bump(bump)
    grid = bump.grid
    h = grid.h
    pad = int(math.ceil(0.5 / h)) + 1
    ax = -grid.X - pad * h + h * np.arange(grid.N + 2 * pad)
    ext = np.meshgrid(*([ax] * grid.dim), indexing="ij")
    nz = np.argwhere(vals > 0)
    offsets = nz - np.array(grid.center)
    logb = np.log(vals[tuple(nz.T)] * grid.cell)
    cache: dict[int, RegularGridInterpolator] = {}

    def table(n: int) -> RegularGridInterpolator:
        if n not in cache:
            logw = W.log_w(n, *ext)
            acc = np.full(logw.shape, -np.inf)
            core = tuple(slice(pad, pad + grid.N) for _ in range(grid.dim))
            for off, lb in zip(offsets, logb):
                # omega(x) = sum_k b_k w(x - y_k): shift by -off along each axis
                sl = tuple(slice(pad - o, pad - o + grid.N) for o in off)
                np.logaddexp(acc[core], logw[sl] + lb, out=acc[core])
            cache[n] = RegularGridInterpolator(
                (grid.axis(),) * grid.dim, acc[core], method="linear",
                bounds_error=False, fill_value=None)
        return cache[n]

    def log_weight(n: int, xs: tuple) -> np.ndarray:
        shape = np.broadcast(*xs).shape
        pts = np.stack([np.broadcast_to(x, shape).ravel() for x in xs], axis=-1)
        return table(n)(pts).reshape(shape)

    smoothed = WeightSystem("custom", f"smoothed({W.generator})", log_weight)
    smoothed.meta["sandwich"] = _sandwich(W, smoothed, grid, n_check)
    smoothed.meta["parent"] = W.tag
    return smoothed


def _sandwich(W: WeightSystem, S: WeightSystem, grid: Grid, n_check: int) -> dict:
    coords = grid.coords()
    mask = inner_mask(grid, min(1.0, 0.5 * grid.X))
    report = {"monotone": True, "levels": []}
    prev = None
    for n in range(n_check + 1):
        ls = S.log_w(n, *coords)[mask]
        lw = W.log_w(n, *coords)[mask]
        if prev is not None and np.any(ls < prev - 1e-12 * np.maximum(1.0, np.abs(prev))):
            report["monotone"] = False
        prev = ls
        wm = check_wM(W, n, n, grid)
        lo, hi = float(np.min(ls - lw)), float(np.max(ls - lw))
        within = None
        if wm.passed:
            bound = math.log(wm.constant_C) + 1e-9
            within = bool(hi <= bound and -lo <= bound)
        report["levels"].append({"n": n, "log_ratio_min": lo, "log_ratio_max": hi,
                                 "wM_constant": wm.constant_C, "within_wM": within})
    return report
