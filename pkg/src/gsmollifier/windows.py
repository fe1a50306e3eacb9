"""Two-scale window pairs with vanishing moments.

The pair ``(varphi_L, psi_L)`` satisfies ``2^d varphi(2x) - varphi(x) =
Delta psi(x)``, ``varphi`` has unit mass and ``psi`` has vanishing moments of
every order below ``2L``.  Both are radial and supported in the closed ball
of radius 2.

Construction, all on radial profiles ``r -> p(r)``:

* ``phi_0`` is the normalised bump ``c exp(-1/((r - 1/2)(1 - r)))`` on
  ``(1/2, 1)``;
* ``phi_{l+1} = mu_l phi_l + lambda_l phi_l(2 .)`` keeps the mass and kills
  one more even moment;
* ``eta_L = phi_L - 2^{-d} phi_L(./2)`` and ``varphi_L = 2^{-d} phi_L(|x|/2)``;
* ``psi_L`` is the compactly supported radial solution of ``Delta psi = eta``.

Every profile is a finite sum ``sum_i c_i phi_0(2^{s_i} r)`` (a
:class:`DilationSum`), so values and derivatives are exact.  ``psi`` is
obtained from cumulative radial moments of ``eta`` which reduce to
cumulative moments of the base bump, integrated by per-cell Gauss-Legendre.
The alternative route ``T^{L+1} eta`` minus its even polynomial tail, with
``T`` the radial inverse Laplacian evaluated by nested Simpson quadrature,
is kept as an independent certificate.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.special import comb

from .grid import FUNCTION, Grid, SampledField, derivative, spike

MAX_L = 3
R_MAX = 3.0
SUPPORT_RADIUS = 2.0
_GAUSS_POINTS = 10
_BASE_CELLS = 2048
_LN2 = math.log(2.0)

TOL_INTEGRAL = 1e-8
TOL_MOMENT = 1e-6
TOL_TWO_SCALE = 1e-5
TOL_POLY_FIT = 1e-8
SPECTRAL_FLOOR = 1e-15


class CertificateError(RuntimeError):
    """A window certificate exceeded its tolerance."""

    def __init__(self, name: str, value: float, tol: float):
        super().__init__(f"certificate {name} = {value:.3e} exceeds tolerance {tol:.1e}")
        self.name = name
        self.value = value
        self.tol = tol


def sphere_area(d: int) -> float:
    """|S^{d-1}|: 2 for d=1, 2 pi for d=2."""
    return {1: 2.0, 2: 2.0 * math.pi}[d]


# -- the base bump -------------------------------------------------------------

@dataclass(frozen=True)
class Bump:
    """``phi_0(t) = c exp(-shape/((t - 1/2)(1 - t)))`` on ``(1/2, 1)``.

    ``c`` makes ``|S^{d-1}| int t^{d-1} phi_0(t) dt = 1``.  ``shape`` is the
    hook for other members of the family; 1 is the canonical choice.
    """

    d: int
    shape: float = 1.0
    lo: float = 0.5
    hi: float = 1.0

    def _raw(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        m = (t > self.lo) & (t < self.hi)
        q = (t[m] - self.lo) * (self.hi - t[m])
        out[m] = np.exp(-self.shape / q)
        return out

    @cached_property
    def _gauss(self):
        xg, wg = np.polynomial.legendre.leggauss(_GAUSS_POINTS)
        return 0.5 * (xg + 1.0), 0.5 * wg

    @cached_property
    def _cells(self) -> tuple[np.ndarray, dict]:
        """Cumulative raw moments at cell edges for t^0, t^1, t log t."""
        edges = np.linspace(self.lo, self.hi, _BASE_CELLS + 1)
        hb = edges[1] - edges[0]
        u, w = self._gauss
        nodes = edges[:-1, None] + hb * u[None, :]
        vals = self._raw(nodes) * (hb * w)[None, :]
        cums = {}
        for kind, weight in (("r0", 1.0), ("r1", nodes), ("rlog", nodes * np.log(nodes))):
            per_cell = np.sum(vals * weight, axis=1)
            cums[kind] = np.concatenate([[0.0], np.cumsum(per_cell)])
        return edges, cums

    @cached_property
    def c(self) -> float:
        _, cums = self._cells
        key = "r0" if self.d == 1 else "r1"
        return 1.0 / (sphere_area(self.d) * cums[key][-1])

    def __call__(self, t) -> np.ndarray:
        return self.c * self._raw(t)

    def derivative(self, t, k: int) -> np.ndarray:
        """k-th derivative via ``b' = g' b`` with ``g = -shape/((t-lo)(hi-t))``."""
        t = np.asarray(t, dtype=float)
        if k == 0:
            return self(t)
        out = np.zeros_like(t)
        m = (t > self.lo) & (t < self.hi)
        tm = t[m]
        width = self.hi - self.lo
        derivs = [self.c * self._raw(tm)]
        alive = derivs[0] > 0
        a, b = tm - self.lo, self.hi - tm
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            # g[i] = g^{(i)}
            g = [
                -self.shape / width * ((-1) ** i * math.factorial(i) / a ** (i + 1) + math.factorial(i) / b ** (i + 1))
                for i in range(k + 1)
            ]
            for n in range(1, k + 1):
                acc = np.zeros_like(tm)
                for j in range(n):
                    acc = acc + comb(n - 1, j) * g[j + 1] * derivs[n - 1 - j]
                derivs.append(np.where(alive, acc, 0.0))
        out[m] = derivs[k]
        return out

    def cumulative(self, t, kind: str) -> np.ndarray:
        """``int_0^t u^k phi_0(u) du`` for kind ``r0``, ``r1`` or ``rlog`` (u log u)."""
        t = np.clip(np.asarray(t, dtype=float), self.lo, self.hi)
        edges, cums = self._cells
        hb = edges[1] - edges[0]
        k = np.clip(((t - self.lo) / hb).astype(int), 0, _BASE_CELLS - 1)
        start = edges[k]
        u, w = self._gauss
        span = t - start
        nodes = start[..., None] + span[..., None] * u
        vals = self._raw(nodes) * w
        if kind == "r1":
            vals = vals * nodes
        elif kind == "rlog":
            vals = vals * nodes * np.log(nodes)
        partial = np.sum(vals, axis=-1) * span
        return self.c * (cums[kind][k] + partial)


# -- finite dilation sums -------------------------------------------------------

@dataclass(frozen=True)
class DilationSum:
    """``p(r) = sum_i coef_i * phi_0(2**s_i * r)``."""

    bump: Bump
    terms: tuple[tuple[float, int], ...]

    def __call__(self, r, k: int = 0) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for coef, s in self.terms:
            out = out + coef * 2.0 ** (s * k) * self.bump.derivative(2.0 ** s * r, k)
        return out

    @property
    def support(self) -> tuple[float, float]:
        lo = min(self.bump.lo * 2.0 ** -s for _, s in self.terms)
        hi = max(self.bump.hi * 2.0 ** -s for _, s in self.terms)
        return lo, hi

    def combine(self, *pairs: tuple[float, int]) -> "DilationSum":
        """``sum_a weight_a * p(2**shift_a r)`` with terms merged."""
        acc: dict[int, float] = {}
        for weight, shift in pairs:
            for coef, s in self.terms:
                acc[s + shift] = acc.get(s + shift, 0.0) + weight * coef
        return DilationSum(self.bump, tuple(sorted((c, s) for s, c in acc.items() if c != 0.0)))

    def cumulative(self, r, kind: str) -> np.ndarray:
        """``int_0^r s^k p(s) ds`` for kind ``r0``, ``r1``; ``rlog`` is ``s log s``."""
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for coef, s in self.terms:
            t = 2.0 ** s * r
            if kind == "r0":
                out = out + coef * 2.0 ** -s * self.bump.cumulative(t, "r0")
            elif kind == "r1":
                out = out + coef * 4.0 ** -s * self.bump.cumulative(t, "r1")
            else:
                out = out + coef * 4.0 ** -s * (
                    self.bump.cumulative(t, "rlog") - s * _LN2 * self.bump.cumulative(t, "r1"))
        return out


# -- radial profiles -------------------------------------------------------------

def default_radial_step(grid_h: float, L: int) -> float:
    """Power-of-two step ``<= h/4`` resolving the innermost ring by 64+ samples."""
    target = min(grid_h / 4.0, 2.0 ** -(L + 2) / 64.0)
    return 2.0 ** math.floor(math.log2(target))


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Samples ``p(k h_r)`` on ``[0, R_max]`` with a declared support.

    ``exact`` carries the closed form when the profile is a dilation sum.
    """

    h_r: float
    samples: np.ndarray
    support: tuple[float, float]
    exact: DilationSum | None = None

    @property
    def R_max(self) -> float:
        return self.h_r * (len(self.samples) - 1)

    @property
    def radii(self) -> np.ndarray:
        return self.h_r * np.arange(len(self.samples))

    def __call__(self, r) -> np.ndarray:
        if self.exact is not None:
            return self.exact(r)
        return np.interp(r, self.radii, self.samples, right=0.0)


def _profile(exact: DilationSum, h_r: float, R_max: float) -> RadialProfile:
    r = h_r * np.arange(int(round(R_max / h_r)) + 1)
    return RadialProfile(h_r, exact(r), exact.support, exact)


def bump_profile(d: int, h_r: float = 2.0 ** -10, R_max: float = R_MAX, shape: float = 1.0) -> RadialProfile:
    """The normalised base bump on ``(1/2, 1)``."""
    if d not in (1, 2):
        raise ValueError(f"d must be 1 or 2, got {d}")
    return _profile(DilationSum(Bump(d, shape), ((1.0, 0),)), h_r, R_max)


def recursion_coefficients(L: int, d: int) -> tuple[float, float]:
    """``(mu_L, lambda_L)`` solving ``mu + 2^-d lam = 1``, ``mu + 2^{-d-2(L+1)} lam = 0``."""
    a = 2.0 ** (-2 * (L + 1))
    return -a / (1.0 - a), 2.0 ** d / (1.0 - a)


def profile_recursion(p: RadialProfile, L: int, d: int) -> RadialProfile:
    """``mu_L p + lambda_L p(2 .)``: one more vanishing even moment."""
    mu, lam = recursion_coefficients(L, d)
    a, b = p.support
    support = (a / 2.0, b)
    if p.exact is not None:
        nxt = p.exact.combine((mu, 0), (lam, 1))
        return RadialProfile(p.h_r, nxt(p.radii), support, nxt)
    s = p.samples
    doubled = np.zeros_like(s)
    half = (len(s) + 1) // 2
    doubled[:half] = s[::2][:half]
    return RadialProfile(p.h_r, mu * s + lam * doubled, support)


def eta_profile(p: RadialProfile, d: int) -> RadialProfile:
    """``eta = rho - 2^{-d} rho(./2)``."""
    a, b = p.support
    support = (a, 2.0 * b)
    if p.exact is not None:
        eta = p.exact.combine((1.0, 0), (-(2.0 ** -d), -1))
        return RadialProfile(p.h_r, eta(p.radii), support, eta)
    return RadialProfile(p.h_r, p.samples - 2.0 ** -d * p(p.radii / 2.0), support)


def apply_T(p: RadialProfile, d: int) -> RadialProfile:
    """``(Tf)(r) = int_0^r int_0^t (s/t)^{d-1} f(s) ds dt`` by nested cumulative Simpson.

    ``T`` inverts the radial Laplacian: ``(Tf)'' + (d-1)/r (Tf)' = f``.
    """
    s = p.samples
    if p.R_max < R_MAX:
        extra = int(round((R_MAX - p.R_max) / p.h_r))
        s = np.concatenate([s, np.zeros(extra)])
    r = p.h_r * np.arange(len(s))
    if d == 1:
        inner = cumulative_simpson(s, dx=p.h_r, initial=0.0)
    else:
        moment = cumulative_simpson(r * s, dx=p.h_r, initial=0.0)
        inner = np.divide(moment, r, out=np.zeros_like(moment), where=r > 0)
    out = cumulative_simpson(inner, dx=p.h_r, initial=0.0)
    return RadialProfile(p.h_r, out, (0.0, r[-1]))


def extract_polynomial(p: RadialProfile, L: int, fit_from: float = 2.0, fit_to: float = 3.0):
    """Fit ``sum_k c_k r^{2k}``, k <= L, at nodes nearest 2.1, 2.2, ....

    Returns
    -------
    coeffs : ndarray
        Coefficients of ``r^0, r^2, ..., r^{2L}``.
    residual : float
        ``max |p - P|`` over the nodes in ``[fit_from, fit_to]`` relative to
        ``max |p|`` there.
    """
    r = p.radii
    targets = fit_from + 0.1 * np.arange(1, L + 2)
    idx = np.rint(targets / p.h_r).astype(int)
    if idx[-1] >= len(r):
        raise ValueError("profile does not extend far enough for the polynomial fit")
    V = r[idx, None] ** (2 * np.arange(L + 1))[None, :]
    coeffs = np.linalg.solve(V, p.samples[idx])
    sel = (r >= fit_from - 1e-12) & (r <= fit_to + 1e-12)
    fitted = evaluate_even_polynomial(coeffs, r[sel])
    scale = float(np.max(np.abs(p.samples[sel])))
    residual = float(np.max(np.abs(p.samples[sel] - fitted))) / (scale if scale > 0 else 1.0)
    if residual > TOL_POLY_FIT:
        raise CertificateError("polynomial_fit_residual", residual, TOL_POLY_FIT)
    return coeffs, residual


def evaluate_even_polynomial(coeffs, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return sum(c * r ** (2 * k) for k, c in enumerate(coeffs))


# -- psi --------------------------------------------------------------------------

@dataclass(frozen=True)
class PsiProfile:
    """Compactly supported radial solution of ``Delta psi = eta``.

    d=1: ``psi(r) = r A0(r) - A1(r) + A1(inf)`` with ``A_k = int_0^r s^k eta``.
    d=2: ``psi(r) = log(r) A1(r) - B(r) + B(inf)`` with ``B = int_0^r s log s eta``.
    Both vanish for ``r >= 2`` because ``eta`` has zero mass.
    """

    eta: DilationSum
    d: int

    @cached_property
    def _tail(self) -> float:
        far = np.array([SUPPORT_RADIUS + 1.0])
        kind = "r1" if self.d == 1 else "rlog"
        return float(self.eta.cumulative(far, kind)[0])

    def __call__(self, r, k: int = 0) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.d == 1:
            if k == 0:
                return r * self.eta.cumulative(r, "r0") - self.eta.cumulative(r, "r1") + self._tail
            if k == 1:
                return self.eta.cumulative(r, "r0")
            return self.eta(r, k - 2)
        a1 = self.eta.cumulative(r, "r1")
        if k == 0:
            with np.errstate(divide="ignore", invalid="ignore"):
                lead = np.where(a1 != 0.0, np.log(np.where(r > 0, r, 1.0)) * a1, 0.0)
            return lead - self.eta.cumulative(r, "rlog") + self._tail
        if k == 1:
            return np.divide(a1, r, out=np.zeros_like(a1), where=r > 0)
        raise ValueError("d=2 psi profile derivatives beyond first order are taken spectrally")


# -- the pair -------------------------------------------------------------------

@dataclass(eq=False)
class WindowPair:
    """A certified ``(varphi_L, psi_L)`` pair sampled on ``grid``."""

    varphi: SampledField
    psi: SampledField
    L: int
    d: int
    support_radius: float
    phi_L: DilationSum = field(repr=False)
    psi_profile: PsiProfile = field(repr=False)
    h_r: float = 2.0 ** -10
    cert: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.varphi.grid

    def varphi_radial(self, r, k: int = 0) -> np.ndarray:
        """k-th derivative of ``r -> 2^{-d} phi_L(r/2)``."""
        return 2.0 ** -self.d * 2.0 ** -k * self.phi_L(np.asarray(r, dtype=float) / 2.0, k)

    def psi_radial(self, r, k: int = 0) -> np.ndarray:
        return self.psi_profile(r, k)

    def eta_radial(self, r, k: int = 0) -> np.ndarray:
        return self.psi_profile.eta(r, k)

    def window(self, which: str) -> SampledField:
        if which not in ("varphi", "psi"):
            raise ValueError(f"unknown window {which!r}")
        return getattr(self, which)

    def certificate_json(self) -> str:
        keep = {"L": self.L, "d": self.d}
        keep.update({k: v for k, v in self.cert.items()})
        return json.dumps(keep, indent=2, default=float)


def _check_grid(grid: Grid, L: int) -> None:
    if not 0 <= L <= MAX_L:
        raise ValueError(f"L must lie in [0, {MAX_L}], got {L}")
    if grid.X < SUPPORT_RADIUS:
        raise ValueError(f"grid half width {grid.X} does not contain the support radius {SUPPORT_RADIUS}")
    # 256 nodes across the support radius
    if grid.h > SUPPORT_RADIUS / 256 + 1e-15:
        raise ValueError(f"grid step {grid.h} too coarse: need h <= {SUPPORT_RADIUS / 256}")


def build_window_pair(d: int, L: int, grid: Grid, shape: float = 1.0, check: bool = True) -> WindowPair:
    """Build and certify the pair ``(varphi_L, psi_L)`` on ``grid``.

    Raises
    ------
    CertificateError
        Naming the first certificate above tolerance (when ``check``).
    """
    if d != grid.dim:
        raise ValueError(f"dimension {d} does not match grid dimension {grid.dim}")
    _check_grid(grid, L)
    h_r = default_radial_step(grid.h, L)
    rho = bump_profile(d, h_r, R_MAX, shape)
    for level in range(L):
        rho = profile_recursion(rho, level, d)
    eta = eta_profile(rho, d)
    psi_prof = PsiProfile(eta.exact, d)
    r = grid.radius()
    varphi_vals = 2.0 ** -d * rho.exact(r / 2.0)
    psi_vals = np.where(r < SUPPORT_RADIUS, psi_prof(np.minimum(r, SUPPORT_RADIUS)), 0.0)
    pair = WindowPair(
        SampledField(grid, varphi_vals, FUNCTION, f"varphi_{L}"),
        SampledField(grid, psi_vals, FUNCTION, f"psi_{L}"),
        L, d, SUPPORT_RADIUS, rho.exact, psi_prof, h_r)

    # independent route: T^{L+1} eta by Simpson, minus its even polynomial tail
    t = eta
    for _ in range(L + 1):
        t = apply_T(t, d)
    coeffs, fit_res = extract_polynomial(t, L)
    zeta = t.samples - evaluate_even_polynomial(coeffs, t.radii)
    zeta_tail = float(np.max(np.abs(zeta[t.radii >= SUPPORT_RADIUS]))) / max(float(np.max(np.abs(zeta))), 1e-300)
    tpsi = apply_T(eta, d)
    tpsi_vals = tpsi.samples - tpsi.samples[-1]
    exact_psi = psi_prof(tpsi.radii)
    route_gap = float(np.max(np.abs(tpsi_vals - exact_psi))) / float(np.max(np.abs(exact_psi)))

    moments = verify_moments(pair, max(2 * L - 1, 0))
    below = [v for order, v in moments["psi"].items() if order < 2 * L]
    two = verify_two_scale(pair, grid)
    fourier = fourier_decay_check(pair, L)
    pair.cert.update({
        "integral_err": abs(moments["varphi_mass"] - 1.0),
        "max_moment_err": max(below) if below else 0.0,
        "two_scale_residual": two["residual"],
        "two_scale_refinement_ratio": two["refinement_ratio"],
        "fourier_constant": fourier["C"],
        "fourier_slope": fourier["slope"],
        "polynomial_coefficients": [float(c) for c in coeffs],
        "polynomial_fit_residual": fit_res,
        "zeta_tail": zeta_tail,
        "psi_route_gap": route_gap,
        "h_r": h_r,
    })
    if check:
        for name, tol in (("integral_err", TOL_INTEGRAL), ("max_moment_err", TOL_MOMENT),
                          ("two_scale_residual", TOL_TWO_SCALE)):
            if not pair.cert[name] <= tol:
                raise CertificateError(name, pair.cert[name], tol)
    return pair


# -- certificates ------------------------------------------------------------

def radial_laplacian_fd(samples: np.ndarray, h_r: float, d: int) -> np.ndarray:
    """Fourth-order ``f'' + (d-1)/r f'`` on radial nodes, even reflection at 0.

    The last two nodes are left as NaN (stencil would leave the table).
    """
    f = np.concatenate([samples[2:0:-1], samples])
    n = len(samples)
    fm2, fm1, f0, fp1, fp2 = (f[o: o + n - 2] for o in range(5))
    d2 = (-fm2 + 16 * fm1 - 30 * f0 + 16 * fp1 - fp2) / (12 * h_r * h_r)
    d1 = (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * h_r)
    r = h_r * np.arange(n - 2)
    if d == 1:
        lap = d2
    else:
        lap = d2 + np.divide(d1, r, out=np.zeros_like(d1), where=r > 0)
        lap[0] = 2.0 * d2[0]
    return np.concatenate([lap, [np.nan, np.nan]])


def _two_scale_at(pair: WindowPair, h_r: float) -> float:
    r = h_r * np.arange(int(round(R_MAX / h_r)) + 1)
    lap = radial_laplacian_fd(pair.psi_radial(r), h_r, pair.d)
    # 2^d varphi(2r) - varphi(r), written out from varphi rather than eta
    lhs = 2.0 ** pair.d * pair.varphi_radial(2.0 * r) - pair.varphi_radial(r)
    ok = np.isfinite(lap)
    return float(np.max(np.abs(lhs[ok] - lap[ok])))


def verify_two_scale(pair: WindowPair, grid: Grid | None = None, h_r: float | None = None) -> dict:
    """Residual of ``2^d varphi(2.) - varphi - Delta psi`` relative to ``sup|varphi|``.

    ``Delta psi`` is taken by fourth-order differences on the radial grid at
    step ``h_r`` and again at ``h_r / 2``; the ratio of the two residuals is
    the refinement factor (16 for fourth order).
    """
    scale = pair.varphi.sup()
    if scale == 0.0:
        raise ValueError("zero window pair: two-scale residual undefined")
    h_r = h_r or pair.h_r
    coarse = _two_scale_at(pair, h_r) / scale
    fine = _two_scale_at(pair, h_r / 2.0) / scale
    ratio = coarse / fine if fine > 0 else math.inf
    return {"residual": coarse, "residual_half_step": fine, "refinement_ratio": ratio, "h_r": h_r}


def _multi_indices(dim: int, order: int):
    if dim == 1:
        yield (order,)
    else:
        for a in range(order, -1, -1):
            yield (a, order - a)


def verify_moments(pair: WindowPair, max_order: int) -> dict:
    """Grid quadrature of ``int x^alpha psi`` for ``|alpha| <= max_order``.

    Each moment is normalised by ``||psi||_1 * R^|alpha|`` (R the support
    radius); the table keeps the largest normalised value per order.
    """
    grid = pair.grid
    coords = grid.coords()
    psi = pair.psi.values
    l1 = float(np.sum(np.abs(psi)) * grid.cell)
    table = {}
    for order in range(max_order + 1):
        worst = 0.0
        for alpha in _multi_indices(grid.dim, order):
            mono = np.prod([c ** a for c, a in zip(coords, alpha)], axis=0)
            m = float(np.sum(mono * psi) * grid.cell)
            worst = max(worst, abs(m) / (l1 * pair.support_radius ** order))
        table[order] = worst
    return {"psi": table, "varphi_mass": pair.varphi.integral(), "psi_l1": l1}


def fourier_decay_check(pair: WindowPair, L: int | None = None,
                        xi_range: tuple[float, float] = (0.05, 0.4), count: int = 16) -> dict:
    """Fit ``|F psi(xi)| ~ C |xi|^{2L}`` at low frequency along the first axis.

    Returns the log-log slope, ``C = max |F psi| / |xi|^{2L}`` over the fit
    range and the range itself.
    """
    L = pair.L if L is None else L
    grid = pair.grid
    xi = np.geomspace(*xi_range, count)
    psi = pair.psi.values
    nz = np.nonzero(psi)
    x1 = grid.coords()[0][nz]
    vals = psi[nz]
    F = np.array([abs(np.sum(vals * np.exp(-1j * k * x1))) * grid.cell for k in xi])
    slope = float(np.polyfit(np.log(xi), np.log(F), 1)[0])
    C = float(np.max(F / xi ** (2 * L)))
    return {"slope": slope, "C": C, "xi_range": list(xi_range)}


# -- 1D parametrix -------------------------------------------------------------

def smooth_cutoff(grid: Grid, inner: float = 0.5, outer: float = 1.0) -> SampledField:
    """Smooth radial cutoff: 1 on ``|x| <= inner``, 0 for ``|x| >= outer``."""
    def step(t):
        t = np.clip(t, 0.0, 1.0)
        with np.errstate(divide="ignore", over="ignore"):
            a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
            b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
        return b / (a + b)

    r = grid.radius()
    return SampledField(grid, step((r - inner) / (outer - inner)), FUNCTION, "cutoff")


def parametrix_1d(ell: int, cutoff: SampledField, tol: float = 1e-8) -> tuple[SampledField, SampledField]:
    """``(chi F_ell, phi_ell)`` with ``F_ell = |x|^{2 ell - 1} / (2 (2 ell - 1)!)``.

    ``F_ell`` is the fundamental solution of ``(d/dx)^{2 ell}``; the residual
    ``phi_ell = Delta^ell(chi F_ell) - delta`` vanishes on the plateau of the
    cutoff (away from a stencil-width neighbourhood of 0) and outside
    ``[-1, 1]``.  Laplacians use the grid's fourth-order stencil.
    """
    grid = cutoff.grid
    if grid.dim != 1:
        raise ValueError("the parametrix is built in one dimension only")
    if ell < 1:
        raise ValueError("ell must be >= 1")
    x = grid.axis()
    chi = cutoff.values
    if np.any(np.abs(chi[np.abs(x) <= 0.5] - 1.0) > 1e-12) or np.any(np.abs(chi[np.abs(x) > 1.0]) > 0):
        raise ValueError("cutoff must equal 1 on [-1/2, 1/2] and vanish outside [-1, 1]")
    F = np.abs(x) ** (2 * ell - 1) / (2.0 * math.factorial(2 * ell - 1))
    K = SampledField(grid, chi * F, FUNCTION, f"chiF_{ell}")
    lap = derivative(K, (2 * ell,))
    resid = lap - spike(grid)
    near0 = np.abs(x) <= 2 * ell * grid.h + 1e-12
    plateau = (np.abs(x) <= 0.5 - 2 * ell * grid.h) & ~near0
    outside = np.abs(x) > 1.0 + 2 * ell * grid.h
    scale = float(np.max(np.abs(resid.values[~near0]))) or 1.0
    for name, mask in (("plateau", plateau), ("outside", outside)):
        worst = float(np.max(np.abs(resid.values[mask]), initial=0.0))
        if worst > tol * max(scale, 1.0):
            raise CertificateError(f"parametrix_residual_{name}", worst, tol)
    return K, resid.replace(resid.values, FUNCTION)


# -- window-side derivatives -------------------------------------------------------

def spectral_derivative(w: SampledField, alpha) -> SampledField:
    """``d^alpha w`` by FFT; accurate for smooth windows well inside the box."""
    grid = w.grid
    alpha = (alpha,) if np.isscalar(alpha) else tuple(alpha)
    if len(alpha) != grid.dim:
        raise ValueError(f"multi-index {alpha} does not match dimension {grid.dim}")
    if not any(alpha):
        return w
    k = 2.0 * np.pi * np.fft.fftfreq(grid.N, d=grid.h)
    spec = np.fft.fftn(np.fft.ifftshift(w.values))
    # modes at the FFT round-off floor would be amplified by |k|^|alpha|
    spec[np.abs(spec) < SPECTRAL_FLOOR * np.max(np.abs(spec))] = 0.0
    for axis, a in enumerate(alpha):
        if a:
            shape = [1] * grid.dim
            shape[axis] = grid.N
            factor = (1j * k) ** a
            if a % 2:
                factor[grid.N // 2] = 0.0  # Nyquist mode has no odd derivative
            spec = spec * factor.reshape(shape)
    vals = np.fft.fftshift(np.fft.ifftn(spec).real)
    # derivatives vanish outside the support; drop the spectral leakage there
    r = grid.radius()
    nz = np.asarray(w.values) != 0
    if np.any(nz):
        vals[r > float(np.max(r[nz]))] = 0.0
    return SampledField(grid, vals, FUNCTION, f"{w.label}_d{''.join(map(str, alpha))}")


def window_derivative(pair: WindowPair, which: str, alpha) -> SampledField:
    """``d^alpha`` of a pair window at scale 0.

    In one dimension the closed-form radial profile is differentiated
    (``w^(k)(x) = sign(x)^k p^(k)(|x|)``); in two dimensions the sampled
    window is differentiated spectrally.
    """
    w = pair.window(which)
    alpha = (alpha,) if np.isscalar(alpha) else tuple(int(a) for a in alpha)
    if not any(alpha):
        return w
    if pair.d == 1:
        k = alpha[0]
        x = pair.grid.axis()
        prof = pair.varphi_radial if which == "varphi" else pair.psi_radial
        vals = np.sign(x) ** k * prof(np.abs(x), k)
        return SampledField(pair.grid, vals, FUNCTION, f"{which}_d{k}")
    return spectral_derivative(w, alpha)


def window_laplacian(pair: WindowPair, which: str) -> SampledField:
    """Laplacian of a pair window; ``Delta psi`` is the closed-form ``eta``."""
    grid = pair.grid
    if which == "psi":
        return SampledField(grid, pair.eta_radial(grid.radius()), FUNCTION, "lap_psi")
    return sum((window_derivative(pair, which, tuple(2 if i == a else 0 for i in range(grid.dim)))
                for a in range(grid.dim)), start=SampledField(grid, np.zeros(grid.shape)))
