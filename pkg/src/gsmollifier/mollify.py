"""Dyadic dilations, mollification sequences and truncated reconstruction.

``w_j(x) = 2^{jd} w(2^j x)``.  Because node ``k`` sits at ``-X + k h`` and the
origin is a node, ``2^j x_k`` is again a node, so dilation is exact index
subsampling of the stored window: no interpolation is involved.

Scales whose dilated window is too thin for the grid are detected by two
rules.  The support rule requires ``2^{-j} * support radius >= 4h``.  The
quadrature rule requires that the discrete mass and the discrete ``L^2``
norm of ``w_j`` follow their exact scaling laws within a tolerance.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .grid import FUNCTION, SPIKE, Grid, SampledField, convolve, inner_mask, make_grid
from .windows import WindowPair, window_laplacian

DEFAULT_GRID = {1: (16.0, 65536), 2: (4.0, 1024)}
RECONSTRUCT_TOL = 1e-10
CLASSIFY_TOL = 1e-4


class ScaleError(ValueError):
    """The requested dyadic scale is not resolved by the grid."""


def default_grid(dim: int) -> Grid:
    X, N = DEFAULT_GRID[dim]
    return make_grid(dim, X, N)


def support_radius(w: SampledField) -> float:
    r = w.grid.radius()
    nz = w.values != 0
    return float(np.max(r[nz])) if np.any(nz) else 0.0


def max_scale(w: SampledField) -> int:
    """Largest j with ``2^{-j} * support radius >= 4h`` (support rule)."""
    R = support_radius(w)
    if R < 4 * w.grid.h:
        return -1
    return int(math.floor(math.log2(R / (4.0 * w.grid.h)) + 1e-12))


def _dilate_values(values: np.ndarray, grid: Grid, j: int) -> np.ndarray:
    n = grid.N
    m = (1 - 2 ** j) * (n // 2) + 2 ** j * np.arange(n)
    ok = (m >= 0) & (m < n)
    out = np.zeros_like(values)
    if grid.dim == 1:
        out[ok] = values[m[ok]]
    else:
        out[np.ix_(ok, ok)] = values[np.ix_(m[ok], m[ok])]
    return out * 2.0 ** (j * grid.dim)


def dyadic_dilate(w: SampledField, j: int, check: bool = True) -> SampledField:
    """``2^{jd} w(2^j .)`` by exact node subsampling.

    Raises
    ------
    ScaleError
        When ``check`` and the support rule fails at scale j.
    """
    if j < 0:
        raise ValueError("scale j must be non-negative")
    if w.kind == SPIKE:
        raise ScaleError("a spike cannot be dilated")
    if j == 0:
        return w
    if check and j > max_scale(w):
        raise ScaleError(f"scale {j} under-resolved: support thinner than 4 grid cells")
    return SampledField(w.grid, _dilate_values(np.asarray(w.values), w.grid, j), FUNCTION, f"{w.label}_{j}")


def dilation_defect(w: SampledField, j: int) -> float:
    """Largest relative violation of the mass and ``L^2`` scaling laws at scale j."""
    g = w.grid
    v0 = np.asarray(w.values)
    vj = _dilate_values(v0, g, j)
    l1 = float(np.sum(np.abs(v0)))
    mass = abs(float(np.sum(vj) - np.sum(v0))) / l1 if l1 > 0 else 0.0
    e0 = float(np.sum(v0 * v0))
    energy = abs(float(np.sum(vj * vj)) / (2.0 ** (j * g.dim) * e0) - 1.0) if e0 > 0 else 0.0
    return max(mass, energy)


def resolved_scale(w: SampledField, j_cap: int, tol: float = RECONSTRUCT_TOL) -> int:
    """Largest J <= j_cap such that every scale j <= J passes both rules."""
    top = min(j_cap, max_scale(w))
    J = 0
    for j in range(1, top + 1):
        if dilation_defect(w, j) > tol:
            break
        J = j
    return J


@dataclass
class MollifierRun:
    """``f * w_j`` for ``j = 0 .. J-1`` with inner-box summaries."""

    window_id: str
    J: int
    fields: list[SampledField]
    sup: list[float]
    lp: list[float]
    resolved: list[bool]
    margins: list[float]
    p: float = 2.0

    def rows(self) -> list[tuple]:
        return [(j, self.sup[j], self.lp[j], self.resolved[j]) for j in range(self.J)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "sup_norm", "lp_norm", "scale_resolved"])
            for row in self.rows():
                w.writerow([row[0], repr(row[1]), repr(row[2]), int(row[3])])


def scale_margin(w: SampledField, j: int) -> float:
    """Inner-box margin at scale j: at least 1 and at least the window radius."""
    return max(1.0, support_radius(w) * 2.0 ** -j)


def _inner_values(f: SampledField, margin: float) -> np.ndarray:
    return np.asarray(f.values)[inner_mask(f.grid, min(margin, 0.5 * f.grid.X))]


def _lp(vals: np.ndarray, cell: float, p: float) -> float:
    a = np.abs(vals)
    if math.isinf(p):
        return float(np.max(a, initial=0.0))
    top = float(np.max(a, initial=0.0))
    if top == 0:
        return 0.0
    return top * float(np.sum((a / top) ** p) * cell) ** (1.0 / p)


def mollify_sequence(f: SampledField, w: SampledField, J: int, p: float = 2.0,
                     tol: float = RECONSTRUCT_TOL) -> MollifierRun:
    """Convolve f with ``w_j`` for every scale below J."""
    Jres = resolved_scale(w, J, tol)
    fields, sups, lps, flags, margins = [], [], [], [], []
    for j in range(J):
        wj = dyadic_dilate(w, j)
        fj = convolve(f, wj)
        margin = scale_margin(w, j)
        inner = _inner_values(fj, margin)
        fields.append(fj)
        sups.append(float(np.max(np.abs(inner), initial=0.0)))
        lps.append(_lp(inner, f.grid.cell, p))
        flags.append(j <= Jres)
        margins.append(margin)
    return MollifierRun(w.label or "window", J, fields, sups, lps, flags, margins, p)


def delta_approx_check(f: SampledField, w: SampledField, J: int,
                       tol: float = RECONSTRUCT_TOL) -> dict:
    """``e_j = sup_inner |f * w_j - (int w) f|`` for ``j < J``.

    ``monotone`` reports whether the errors decrease over the resolved scales
    (ignoring values already at round-off, below ``1e-13 sup|f|``).
    """
    if f.kind == SPIKE:
        raise ValueError("delta_approx_check needs a function-kind input")
    mass = w.integral()
    run = mollify_sequence(f, w, J, tol=tol)
    margin = scale_margin(w, 0)
    errors = []
    for j, fj in enumerate(run.fields):
        diff = np.asarray(fj.values) - mass * np.asarray(f.values)
        errors.append(float(np.max(np.abs(_inner_values(fj.replace(diff), margin)), initial=0.0)))
    floor = 1e-13 * max(f.sup(), 1e-300)
    resolved = [e for e, ok in zip(errors, run.resolved) if ok]
    monotone = all(b <= a or b <= floor for a, b in zip(resolved, resolved[1:]))
    return {"j": list(range(J)), "error": errors, "resolved": run.resolved,
            "monotone": monotone, "mass": mass}


def reconstruct(f: SampledField, pair: WindowPair, J: int, tol: float = RECONSTRUCT_TOL):
    """Truncated telescoping reconstruction ``R_J f = f*varphi + sum_{j<J} f*(Delta psi)_j``.

    Derivatives sit on the window: ``Delta psi`` is the closed-form radial
    Laplacian of the constructed psi, so spike inputs are fine.  Term j
    needs scale j+1 of the windows to be resolved; beyond that the partial
    sum is held fixed and the curve marks the plateau.

    Returns
    -------
    field : SampledField
        ``R_J f``.
    curve : list of dict
        ``{"J", "error", "resolved"}`` for every prefix ``0..J``, error being
        ``sup |f - R_J f|`` on the inner box (margin = varphi support radius).
    """
    if not pair.cert or pair.cert.get("two_scale_residual") is None:
        raise ValueError("reconstruct needs a certified window pair")
    grid = f.grid
    if grid != pair.grid:
        raise ValueError("input and window pair live on different grids")
    lap_psi = window_laplacian(pair, "psi")
    Jres = min(resolved_scale(pair.varphi, J + 1, tol), resolved_scale(lap_psi, J, tol) + 1)
    margin = scale_margin(pair.varphi, 0)
    mask = inner_mask(grid, margin)
    target = np.asarray(f.values) if f.kind == FUNCTION else None
    acc = np.asarray(convolve(f, pair.varphi).values).copy()

    def error(vals):
        if target is None:
            return math.nan
        return float(np.max(np.abs(vals - target)[mask], initial=0.0))

    curve = [{"J": 0, "error": error(acc), "resolved": True}]
    for j in range(J):
        resolved = j + 1 <= Jres
        if resolved:
            acc += np.asarray(convolve(f, dyadic_dilate(lap_psi, j)).values)
        curve.append({"J": j + 1, "error": error(acc), "resolved": resolved})
    return SampledField(grid, acc, FUNCTION, "reconstruction"), curve
