"""Solid translation-invariant norm engines on sampled fields.

Engines: ``Lp`` (1 <= p <= inf), ``L0`` (sup norm plus a tail profile),
``MixedLp`` (d=2, inner p2 over the second axis then outer p1), ``Wiener``
(``sup_x int_{x+[-1,1)^d} |f|``) and ``Morrey`` (``sup_{x,R}
|B(x,R)|^{1/p-1/q} ||f||_{L^q(B(x,R))}`` over grid centres and radii
``h 2^k``, ball measure counted on the grid).

Every engine works on ``log|f|`` so exponentially weighted fields never
overflow: sums are formed after factoring out the global maximum.

Finiteness on a finite box is judged from the tail trend.  Norms of the
field restricted to the dyadic shells ``X_in 2^{-k-1} < |x|_inf <= X_in 2^{-k}``
(k = 0, 1, 2) are fitted against ``log2 R``.  For integral-type engines the
field is flagged as diverging when that slope exceeds ``-EPS_TAIL``.  For
sup-type engines it is flagged when the slope exceeds ``+EPS_TAIL``.  An
outer shell carrying at most ``NEGLIGIBLE`` of the total is never flagged.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .grid import SPIKE, Grid, SampledField, derivative, inner_mask

ENGINES = ("Lp", "L0", "MixedLp", "Wiener", "Morrey")
EPS_TAIL = 0.1
NEGLIGIBLE = 1e-9
SHELLS = 3
LOG_OVERFLOW = 700.0


def _parse_p(p) -> float:
    if isinstance(p, str):
        if p.lower() in ("inf", "infinity", "oo"):
            return math.inf
        p = float(p)
    return float(p)


@dataclass(frozen=True)
class NormDescriptor:
    engine: str
    p: float = 2.0
    p2: float | None = None
    q: float | None = None

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"unknown norm engine {self.engine!r}; expected one of {ENGINES}")
        object.__setattr__(self, "p", _parse_p(self.p))
        if self.p2 is not None:
            object.__setattr__(self, "p2", _parse_p(self.p2))
        if self.q is not None:
            object.__setattr__(self, "q", _parse_p(self.q))
        if not self.p >= 1:
            raise ValueError(f"exponent p must be >= 1, got {self.p}")
        if self.engine == "MixedLp":
            if self.p2 is None or not self.p2 >= 1:
                raise ValueError("MixedLp needs p2 >= 1")
        if self.engine == "Morrey":
            if self.q is None:
                raise ValueError("Morrey needs q")
            if not (1 <= self.q <= self.p < math.inf):
                raise ValueError(f"Morrey needs 1 <= q <= p < inf, got p={self.p}, q={self.q}")

    @classmethod
    def from_dict(cls, d: dict) -> "NormDescriptor":
        return cls(d["engine"], d.get("p", 2.0), d.get("p2"), d.get("q"))

    def to_dict(self) -> dict:
        enc = lambda v: "inf" if v is not None and math.isinf(v) else v
        out = {"engine": self.engine, "p": enc(self.p)}
        if self.p2 is not None:
            out["p2"] = enc(self.p2)
        if self.q is not None:
            out["q"] = enc(self.q)
        return out

    @property
    def sup_type(self) -> bool:
        if self.engine in ("Wiener", "Morrey"):
            return True
        if self.engine == "Lp":
            return math.isinf(self.p)
        if self.engine == "MixedLp":
            return math.isinf(self.p) and math.isinf(self.p2)
        return False  # L0: decay required

    def sl(self) -> "NormDescriptor":
        """Descriptor of the semi-local space ``E_sl``; ``(L^0)_sl = L^inf``."""
        if self.engine == "L0":
            return NormDescriptor("Lp", math.inf)
        return self


def Lp(p=2.0) -> NormDescriptor:
    return NormDescriptor("Lp", p)


@dataclass
class NormValue:
    """A norm together with its truncation diagnostics.

    ``log2`` is the authoritative value (``-inf`` for the zero field);
    ``value`` is ``2**log2`` or ``inf`` when that overflows.
    """

    log2: float
    tail_profile: list[tuple[float, float]] = field(default_factory=list)
    truncated: bool = False
    tail_slope: float | None = None
    box: float | None = None

    @property
    def value(self) -> float:
        if self.log2 == -math.inf:
            return 0.0
        if self.log2 * math.log(2.0) > LOG_OVERFLOW:
            return math.inf
        return 2.0 ** self.log2

    @property
    def overflow(self) -> bool:
        return self.log2 * math.log(2.0) > LOG_OVERFLOW

    def to_dict(self) -> dict:
        return {"value": self.value, "log2": self.log2, "truncated": self.truncated,
                "overflow": self.overflow, "tail_slope": self.tail_slope, "box": self.box,
                "tail": [[float(a), float(b)] for a, b in self.tail_profile]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# -- log-domain engines -------------------------------------------------------------

def _logabs(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.abs(values))


def _lse_p(logv: np.ndarray, p: float, cell: float, axis=None) -> np.ndarray:
    """``log (cell * sum exp(p logv))^{1/p}`` (``max`` for p = inf)."""
    M = np.max(logv, axis=axis, keepdims=True)
    if math.isinf(p):
        return np.squeeze(M, axis=axis) if axis is not None else float(M.item())
    Ms = np.where(np.isfinite(M), M, 0.0)
    with np.errstate(under="ignore"):
        s = np.sum(np.exp(p * (logv - Ms)), axis=axis, keepdims=True) * cell
    with np.errstate(divide="ignore"):
        out = Ms + np.log(s) / p
    out = np.where(np.isfinite(M), out, -np.inf)
    return np.squeeze(out, axis=axis) if axis is not None else float(out.item())


def _box_window_sum(v: np.ndarray, k: int, periodic: bool) -> np.ndarray:
    """Sum of v over the node window ``[i-k, i+k)`` along every axis."""
    out = v
    for axis in range(v.ndim):
        n = out.shape[axis]
        if periodic:
            ext = np.concatenate([np.take(out, np.arange(n - k, n), axis=axis), out,
                                  np.take(out, np.arange(0, k), axis=axis)], axis=axis)
            off = 0
        else:
            pad = [(0, 0)] * out.ndim
            pad[axis] = (k, k)
            ext = np.pad(out, pad)
            off = 0
        shape = list(ext.shape)
        shape[axis] = 1
        cs = np.concatenate([np.zeros(shape), np.cumsum(ext, axis=axis)], axis=axis)
        hi = np.take(cs, np.arange(off + 2 * k, off + 2 * k + n), axis=axis)
        lo = np.take(cs, np.arange(off, off + n), axis=axis)
        out = hi - lo
    return out


def _ball_kernel(grid: Grid, radius_nodes: int) -> np.ndarray:
    t = np.arange(-radius_nodes, radius_nodes + 1)
    if grid.dim == 1:
        return np.ones_like(t, dtype=float)
    a, b = np.meshgrid(t, t, indexing="ij")
    return (a * a + b * b <= radius_nodes * radius_nodes).astype(float)


def _circular_conv(v: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    pad = np.zeros(v.shape)
    k = kernel.shape[0] // 2
    idx = np.arange(-k, k + 1) % v.shape[0]
    if v.ndim == 1:
        np.add.at(pad, idx, kernel)
    else:
        pad[np.ix_(idx, idx)] += kernel
    return np.fft.ifftn(np.fft.fftn(v) * np.fft.fftn(pad)).real


def _log_norm(logv: np.ndarray, grid: Grid, nd: NormDescriptor, periodic: bool = False) -> float:
    """Natural log of the engine norm of ``exp(logv)`` (``-inf`` allowed)."""
    M = float(np.max(logv))
    if not np.isfinite(M):
        return -math.inf
    cell = grid.cell
    if nd.engine in ("Lp", "L0"):
        return _lse_p(logv, math.inf if nd.engine == "L0" else nd.p, cell)
    if nd.engine == "MixedLp":
        if grid.dim != 2:
            raise ValueError("MixedLp needs a two-dimensional grid")
        rows = _lse_p(logv, nd.p2, grid.h, axis=1)
        return _lse_p(rows, nd.p, grid.h)
    with np.errstate(under="ignore"):
        scaled = np.exp(logv - M)
    if nd.engine == "Wiener":
        k = int(round(1.0 / grid.h))
        sums = _box_window_sum(scaled, k, periodic) * cell
        top = float(np.max(sums))
        return M + math.log(top) if top > 0 else -math.inf
    # Morrey
    p, q = nd.p, nd.q
    vq = scaled ** q
    best = -math.inf
    kmax = int(math.ceil(math.log2(2.0 * grid.X * math.sqrt(grid.dim) / grid.h)))
    for k in range(0, kmax + 1):
        rn = 2 ** k
        kernel = _ball_kernel(grid, rn)
        if periodic:
            if 2 * rn + 1 > grid.N:
                break
            mass = _circular_conv(vq, kernel)
        else:
            mass = signal.fftconvolve(vq, kernel, mode="same")
        top = float(np.max(mass))
        if top <= 0:
            continue
        measure = float(np.sum(kernel)) * cell
        val = (1.0 / p - 1.0 / q) * math.log(measure) + math.log(top * cell) / q
        best = max(best, val)
    return M + best


# -- tails ----------------------------------------------------------------------------

def _shell_masks(grid: Grid, radius: float, count: int = SHELLS):
    br = grid.box_radius()
    out = []
    for k in range(count):
        R = radius * 2.0 ** -k
        out.append((R, (br <= R + 1e-12 * grid.X) & (br > R / 2.0 + 1e-12 * grid.X)))
    return out


def tail_trend(logv: np.ndarray, grid: Grid, nd: NormDescriptor, radius: float,
               total: float | None = None) -> tuple[bool, float | None, list]:
    """``(diverging, slope, shells)`` for the field ``exp(logv)`` on the box of ``radius``.

    ``shells`` lists ``(R, log2 shell norm)``; ``total`` is the natural-log
    norm of the whole field.
    """
    if total is None:
        total = _log_norm(logv, grid, nd)
    shells = []
    for R, mask in _shell_masks(grid, radius):
        lv = np.where(mask, logv, -np.inf)
        shells.append((R, _log_norm(lv, grid, nd) / math.log(2.0)))
    outer = shells[0][1]
    if total == -math.inf or outer == -math.inf:
        return False, None, shells
    if outer * math.log(2.0) <= total + math.log(NEGLIGIBLE):
        return False, None, shells
    pts = [(math.log2(R), v) for R, v in shells if np.isfinite(v)]
    if len(pts) < 2:
        return False, None, shells
    xs, ys = np.array(pts).T
    slope = float(np.polyfit(xs, ys, 1)[0])
    bound = EPS_TAIL if nd.sup_type else -EPS_TAIL
    return slope > bound, slope, shells


def evaluate_log(logv: np.ndarray, grid: Grid, nd: NormDescriptor, margin: float = 0.0,
                 periodic: bool = False, trend: bool = True) -> NormValue:
    """Norm of ``exp(logv)`` restricted to the inner box of the given margin."""
    radius = grid.X - margin
    if margin > 0:
        logv = np.where(inner_mask(grid, margin), logv, -np.inf)
    total = _log_norm(logv, grid, nd, periodic)
    nv = NormValue(total / math.log(2.0), box=radius)
    if nd.engine == "L0":
        br = grid.box_radius()
        for k in range(SHELLS + 2, -1, -1):
            R = radius * 2.0 ** -k
            lv = np.where(br >= R - 1e-12 * grid.X, logv, -np.inf)
            m = float(np.max(lv))
            nv.tail_profile.append((R, math.exp(m) if m < LOG_OVERFLOW else math.inf))
    if trend and not periodic:
        diverging, slope, shells = tail_trend(logv, grid, nd, radius, total)
        nv.truncated = diverging
        nv.tail_slope = slope
        if nd.engine != "L0":
            nv.tail_profile = [(R, 2.0 ** v if v < 1000 else math.inf) for R, v in shells]
    return nv


# -- public operations -----------------------------------------------------------------

def e_norm(f: SampledField, nd: NormDescriptor, periodic: bool = False) -> NormValue:
    """Engine norm of a sampled field over the whole box."""
    return evaluate_log(_logabs(np.asarray(f.values)), f.grid, nd, periodic=periodic)


def weighted_seminorm(f: SampledField, alpha, W, n: int, nd: NormDescriptor,
                      margin: float = 0.0, inverse: bool = False) -> NormValue:
    """``|| f^(alpha) w_n ||_E`` (or ``f^(alpha) / w_n`` when ``inverse``).

    The derivative is taken on the field by fourth-order differences; spike
    inputs are rejected.
    """
    if f.kind == SPIKE and any(np.atleast_1d(alpha)):
        raise ValueError("cannot differentiate a spike field")
    g = derivative(f, alpha) if any(np.atleast_1d(alpha)) else f
    logw = W.log_w(n, *f.grid.coords())
    logv = _logabs(np.asarray(g.values)) + (-logw if inverse else logw)
    return evaluate_log(logv, f.grid, nd, margin)


def ap_diagnostic(f: SampledField, nd: NormDescriptor, radii) -> list[tuple[float, float]]:
    """``R -> || (1 - 1_{B(0,R)}) f ||_E``; nonincreasing by solidity."""
    r = f.grid.radius()
    logv = _logabs(np.asarray(f.values))
    out = []
    for R in radii:
        lv = np.where(r > R, logv, -np.inf)
        out.append((float(R), NormValue(_log_norm(lv, f.grid, nd) / math.log(2.0)).value))
    return out


def sl_norm(f: SampledField, nd: NormDescriptor, radii) -> NormValue:
    """``sup_R || 1_{B(0,R)} f ||_E`` over the tested radii.

    ``truncated`` is set when the truncated norms are still growing at the
    largest radius according to the tail trend of ``E_sl``.
    """
    grid = f.grid
    r = grid.radius()
    logv = _logabs(np.asarray(f.values))
    snd = nd.sl()
    best = -math.inf
    profile = []
    for R in sorted(radii):
        lv = np.where(r <= R, logv, -np.inf)
        v = _log_norm(lv, grid, snd) / math.log(2.0)
        profile.append((float(R), 2.0 ** v if v < 1000 else math.inf))
        best = max(best, v)
    Rmax = min(max(radii), grid.X)
    lv = np.where(r <= Rmax, logv, -np.inf)
    diverging, slope, _ = tail_trend(lv, grid, snd, Rmax)
    return NormValue(best, profile, diverging, slope, Rmax)
