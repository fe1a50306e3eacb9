"""Dyadic weighted-norm tables, growth fits and space-membership verdicts.

The table holds ``M[l][j][n][alpha] = log2 || d^alpha (f * w^l_j) * w_n ||_E``
for the windows ``w^0 = varphi`` and ``w^1 = psi``.  Derivatives sit on the
window: ``d^alpha (f * w_j) = 2^{j|alpha|} f * ((d^alpha w)_j)``.  Each entry
is evaluated on the inner box whose margin is the larger of 1 and the
window radius at that scale.  Only scales resolved by the grid enter the
fits.

Verdicts turn the quantifiers of the growth criteria into finite checks with
declared thresholds; whenever the data cannot separate the cases the
decision is ``inconclusive``, never a silent in/out.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter

from .grid import SPIKE, SampledField, convolve, inner_mask, make_grid
from .mollify import CLASSIFY_TOL, _dilate_values, dilation_defect, max_scale, support_radius
from .norms import Lp, NormDescriptor, evaluate_log
from .weights import WeightSystem, check_N
from .windows import WindowPair, spectral_derivative, window_derivative

IN, OUT, INCONCLUSIVE = "in", "out", "inconclusive"
OK, ZERO, DIVERGING, UNRESOLVED = "ok", "zero", "diverging", "unresolved"
TAIL = "tail-undecided"
# The tail trend is trusted only when the inner box reaches this many window
# radii; f * w_j trails f by one window radius, so smaller boxes can show a
# weighted bump as a rising tail.
TAIL_REACH = 4.0
ZERO_REL = 1e-11
# Block-FFT round-off sits near 2e-16 of the local sup|f| times ||w_j||_1;
# values below this floor are treated as exact zeros so that growing weights
# cannot amplify noise.
NOISE_REL = 1e-14
# Derivative windows need finer grids than the windows themselves.
CLASSIFY_GRID = {1: (16.0, 262144), 2: (8.0, 2048)}


def classify_grid(dim: int):
    X, N = CLASSIFY_GRID[dim]
    return make_grid(dim, X, N)


@dataclass(frozen=True)
class Caps:
    J: int = 10
    N_max: int = 4
    A_max: int = 4


@dataclass(frozen=True)
class Thresholds:
    eps_slope: float = 0.25
    rho_fit: float = 0.15
    j_min: int = 2
    min_scales: int = 4
    resolve_tol: float = CLASSIFY_TOL


def multi_indices(dim: int, A_max: int) -> list[tuple[int, ...]]:
    out = []
    for order in range(A_max + 1):
        if dim == 1:
            out.append((order,))
        else:
            out.extend((a, order - a) for a in range(order, -1, -1))
    return out


@dataclass
class Entry:
    log2: float
    flag: str
    tail_slope: float | None = None


@dataclass
class DyadicNormTable:
    windows: list[str]
    J: int
    J_resolved: int
    n_values: list[int]
    alphas: list[tuple[int, ...]]
    entries: dict = field(default_factory=dict)
    inverse: bool = False
    semilocal: bool = False

    def get(self, l: int, j: int, n: int, alpha) -> Entry:
        return self.entries[(l, j, n, tuple(alpha))]

    def rows(self):
        for (l, j, n, a), e in sorted(self.entries.items()):
            yield l, j, n, a, e

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["l", "j", "n", "alpha", "log2_norm", "flag"])
            for l, j, n, a, e in self.rows():
                w.writerow([l, j, n, "-".join(map(str, a)), repr(e.log2), e.flag])


def _window_family(windows) -> list[tuple[str, object]]:
    if isinstance(windows, WindowPair):
        return [("varphi", windows), ("psi", windows)]
    fam = []
    for i, w in enumerate(windows):
        if not isinstance(w, SampledField):
            raise TypeError("windows must be a WindowPair or a list of SampledField")
        fam.append((w.label or f"w{i}", w))
    if not 1 <= len(fam) <= 2:
        raise ValueError("one or two windows expected")
    return fam


def derivative_resolved_scale(w: SampledField, order: int, j_cap: int,
                              tol: float = CLASSIFY_TOL) -> int:
    """Largest J such that ``2^{j|alpha|} * dilation_defect <= tol`` for all j <= J.

    The factor accounts for the cancellation in ``2^{j|alpha|} f * (d^alpha w)_j``:
    a relative quadrature defect in the dilated derivative window is
    magnified by the derivative prefactor.
    """
    top = min(j_cap, max_scale(w))
    J = 0
    for j in range(1, top + 1):
        if dilation_defect(w, j) * 2.0 ** (j * order) > tol:
            break
        J = j
    return J


def _derived_window(source, name: str, alpha) -> SampledField:
    if isinstance(source, WindowPair):
        return window_derivative(source, name, alpha)
    return spectral_derivative(source, alpha)


def norm_table(f: SampledField, windows, W: WeightSystem, nd: NormDescriptor,
               J: int = Caps.J, N_max: int = Caps.N_max, A_max: int = Caps.A_max,
               inverse: bool = False, semilocal: bool = False,
               thresholds: Thresholds = Thresholds()) -> DyadicNormTable:
    """Fill ``M[l][j][n][alpha]`` for ``j <= J``, ``n <= N_max``, ``|alpha| <= A_max``.

    With ``inverse`` the weight divides instead of multiplies; with
    ``semilocal`` the norm and its tail rule are those of ``E_sl``.
    Entries at scales beyond the resolution cap are flagged ``unresolved``
    and left at NaN.
    """
    grid = f.grid
    fam = _window_family(windows)
    alphas = multi_indices(grid.dim, A_max)
    engine = nd.sl() if semilocal else nd
    derived = {(l, a): _derived_window(src, name, a) for l, (name, src) in enumerate(fam) for a in alphas}
    J_res = J
    for (l, a), w in derived.items():
        J_res = min(J_res, derivative_resolved_scale(w, sum(a), J, thresholds.resolve_tol))
    coords = grid.coords()
    logw = {n: W.log_w(n, *coords) for n in range(N_max + 1)}
    f_scale = f.integral() if f.kind == SPIKE else None
    f_sup = abs(f_scale) if f_scale is not None else f.sup()
    abs_f = np.abs(np.asarray(f.values))
    local_sup: dict[int, np.ndarray] = {}
    table = DyadicNormTable([name for name, _ in fam], J, J_res, list(range(N_max + 1)), alphas,
                            inverse=inverse, semilocal=semilocal)
    for (l, a), w0 in derived.items():
        radius = support_radius(fam[l][1].window(fam[l][0]) if isinstance(fam[l][1], WindowPair) else fam[l][1])
        for j in range(J + 1):
            if j > J_res:
                for n in table.n_values:
                    table.entries[(l, j, n, a)] = Entry(math.nan, UNRESOLVED)
                continue
            wj = SampledField(grid, _dilate_values(np.asarray(w0.values), grid, j) if j else w0.values)
            conv = convolve(f, wj)
            vals = np.asarray(conv.values) * 2.0 ** (j * sum(a))
            margin = max(1.0, radius * 2.0 ** -j)
            bound = f_sup * float(np.sum(np.abs(wj.values)) * grid.cell) * 2.0 ** (j * sum(a))
            absv = np.abs(vals)
            reach = int(math.ceil(4.0 * radius * 2.0 ** -j / grid.h))
            if reach not in local_sup:
                local_sup[reach] = maximum_filter(abs_f, size=2 * reach + 1, mode="constant")
            scale = float(np.sum(np.abs(wj.values)) * grid.cell) * 2.0 ** (j * sum(a))
            absv[absv < NOISE_REL * local_sup[reach] * scale] = 0.0
            with np.errstate(divide="ignore"):
                logabs = np.log(absv)
            zero = float(np.max(absv[inner_mask(grid, min(margin, 0.5 * grid.X))])) <= ZERO_REL * bound
            for n in table.n_values:
                if zero:
                    table.entries[(l, j, n, a)] = Entry(-math.inf, ZERO)
                    continue
                lv = logabs - logw[n] if inverse else logabs + logw[n]
                nv = evaluate_log(lv, grid, engine, margin)
                flag = DIVERGING if nv.truncated else OK
                if flag == DIVERGING and grid.X - margin < TAIL_REACH * radius:
                    flag = TAIL
                table.entries[(l, j, n, a)] = Entry(nv.log2, flag, nv.tail_slope)
    return table


# -- fits ---------------------------------------------------------------------------

@dataclass
class RowFit:
    slope: float
    intercept: float
    residual: float
    scales: tuple[int, int]
    status: str  # ok, zero, diverging, tail-undecided, too_few

    @property
    def stable(self) -> bool:
        return self.status == ZERO or self.status == OK


def _fit_row(js: list[int], ys: list[float], flags: list[str]) -> RowFit:
    span = (js[0], js[-1]) if js else (0, -1)
    if DIVERGING in flags:
        return RowFit(math.inf, math.nan, math.nan, span, DIVERGING)
    if TAIL in flags:
        return RowFit(math.nan, math.nan, math.nan, span, TAIL)
    if all(fl == ZERO for fl in flags) and flags:
        return RowFit(-math.inf, -math.inf, 0.0, span, ZERO)
    pts = [(j, y) for j, y, fl in zip(js, ys, flags) if fl == OK]
    if len(pts) < 2:
        return RowFit(math.nan, math.nan, math.nan, span, "too_few")
    x, y = np.array(pts, dtype=float).T
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return RowFit(float(slope), float(intercept), resid, span, OK)


def fit_growth(table: DyadicNormTable, thresholds: Thresholds = Thresholds()) -> dict:
    """Least-squares line through ``(j, M)`` over ``j in [j_min, J_resolved]``.

    Returns a dict keyed ``(l, n, alpha)``.  A row diverges when any
    resolved scale, including those below ``j_min``, diverges; otherwise rows
    with fewer than ``min_scales`` resolved scales get status ``too_few``.
    """
    js = list(range(thresholds.j_min, table.J_resolved + 1))
    out = {}
    for l in range(len(table.windows)):
        for n in table.n_values:
            for a in table.alphas:
                if len(js) < thresholds.min_scales:
                    out[(l, n, a)] = RowFit(math.nan, math.nan, math.nan, (thresholds.j_min, table.J_resolved), "too_few")
                    continue
                early = {table.get(l, j, n, a).flag for j in range(table.J_resolved + 1)}
                if DIVERGING in early:
                    out[(l, n, a)] = RowFit(math.inf, math.nan, math.nan, (0, table.J_resolved), DIVERGING)
                    continue
                if TAIL in early:
                    out[(l, n, a)] = RowFit(math.nan, math.nan, math.nan, (0, table.J_resolved), TAIL)
                    continue
                ents = [table.get(l, j, n, a) for j in js]
                out[(l, n, a)] = _fit_row(js, [e.log2 for e in ents], [e.flag for e in ents])
    return out


def fit_line(js, ys) -> RowFit:
    """Fit helper on raw data (all points treated as finite)."""
    return _fit_row(list(js), list(ys), [OK] * len(list(js)))


def _alpha_drift(slopes: dict[tuple, float]) -> float:
    """Least-squares increment of the slope per derivative order."""
    pts = [(sum(a), s) for a, s in slopes.items() if np.isfinite(s)]
    if len(pts) < 2 or len({p[0] for p in pts}) < 2:
        return 0.0
    x, y = np.array(pts, dtype=float).T
    return float(np.polyfit(x, y, 1)[0])


# -- verdicts -----------------------------------------------------------------------

@dataclass
class Verdict:
    space_class: str
    decision: str
    mode: str
    witnesses: dict = field(default_factory=dict)
    failing: dict = field(default_factory=dict)
    caps: Caps = field(default_factory=Caps)
    thresholds: Thresholds = field(default_factory=Thresholds)
    J_resolved: int | None = None

    def to_dict(self) -> dict:
        return {"class": self.space_class, "decision": self.decision, "mode": self.mode,
                "witnesses": self.witnesses, "failing": self.failing,
                "caps": asdict(self.caps), "thresholds": asdict(self.thresholds),
                "J_resolved": self.J_resolved}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    return str(o)


def _akey(a) -> str:
    return "-".join(map(str, a))


def _clean(x: float):
    return x if math.isfinite(x) else ("-inf" if x < 0 else ("inf" if x > 0 else "nan"))


def verdict_membership(f: SampledField, pair, W: WeightSystem, nd: NormDescriptor,
                       caps: Caps = Caps(), thresholds: Thresholds = Thresholds(),
                       table: DyadicNormTable | None = None) -> Verdict:
    """Membership in the weighted space: falsify first, then certify.

    Falsify (OUT): some varphi-window row diverges, or for some n the slopes
    under the varphi window grow with ``|alpha|`` by more than ``eps_slope``
    per order, so no single exponent bounds every derivative.

    Certify (IN): no varphi-window entry at scale 0 diverges and every
    psi-window slope is at most ``eps_slope``.
    """
    table = table or norm_table(f, pair, W, nd, caps.J, caps.N_max, caps.A_max, thresholds=thresholds)
    fits = fit_growth(table, thresholds)
    base = dict(caps=caps, thresholds=thresholds, J_resolved=table.J_resolved)
    for n in table.n_values:
        for a in table.alphas:
            if fits[(0, n, a)].status == DIVERGING or table.get(0, 0, n, a).flag == DIVERGING:
                return Verdict("membership", OUT, "falsify",
                               failing={"n": n, "alpha": _akey(a), "reason": "diverging row"}, **base)
    for n in table.n_values:
        slopes = {a: fits[(0, n, a)].slope for a in table.alphas if fits[(0, n, a)].status == OK}
        drift = _alpha_drift(slopes)
        if drift > thresholds.eps_slope:
            return Verdict("membership", OUT, "falsify", failing={
                "n": n, "reason": "slope grows with derivative order", "slope_increment": drift,
                "slopes": {_akey(a): s for a, s in slopes.items()}}, **base)
    if len(table.windows) < 2:
        return Verdict("membership", INCONCLUSIVE, "falsify",
                       failing={"reason": "certify mode needs the psi window"}, **base)
    for n in table.n_values:
        for a in table.alphas:
            if table.get(0, 0, n, a).flag not in (OK, ZERO):
                return Verdict("membership", INCONCLUSIVE, "certify", failing={
                    "n": n, "alpha": _akey(a), "reason": f"varphi entry {table.get(0, 0, n, a).flag}"}, **base)
    per_n = {}
    for n in table.n_values:
        worst = -math.inf
        for a in table.alphas:
            fit = fits[(1, n, a)]
            if not fit.stable:
                return Verdict("membership", INCONCLUSIVE, "certify",
                               failing={"n": n, "alpha": _akey(a), "reason": f"psi row {fit.status}"}, **base)
            if fit.slope > thresholds.eps_slope:
                return Verdict("membership", INCONCLUSIVE, "certify", failing={
                    "n": n, "alpha": _akey(a), "reason": "psi row not bounded", "slope": fit.slope}, **base)
            worst = max(worst, fit.slope)
        per_n[str(n)] = _clean(worst)
    return Verdict("membership", IN, "certify", witnesses={"r": 0.0, "per_n": per_n}, **base)


def verdict_convolutor(f: SampledField, pair, W: WeightSystem, nd: NormDescriptor,
                       caps: Caps = Caps(), thresholds: Thresholds = Thresholds(),
                       table: DyadicNormTable | None = None) -> Verdict:
    """Convolutor test on the alpha=0 rows: for every n some exponent r works.

    IN when each row is finite with a stable fit (residual <= ``rho_fit``);
    ``r(n)`` is the largest slope over the windows.  OUT when a row diverges
    or its slope over the second half of the scales exceeds the first-half
    slope by more than ``eps_slope`` (super-linear growth in log2).
    """
    table = table or norm_table(f, pair, W, nd, caps.J, caps.N_max, 0, thresholds=thresholds)
    fits = fit_growth(table, thresholds)
    base = dict(caps=caps, thresholds=thresholds, J_resolved=table.J_resolved)
    zero = table.alphas[0]
    js = list(range(thresholds.j_min, table.J_resolved + 1))
    per_n = {}
    unstable = None
    for n in table.n_values:
        r = -math.inf
        for l in range(len(table.windows)):
            fit = fits[(l, n, zero)]
            if fit.status == DIVERGING:
                return Verdict("convolutor", OUT, "falsify",
                               failing={"n": n, "window": table.windows[l], "reason": "diverging row"}, **base)
            if fit.status == OK and len(js) >= 4:
                half = len(js) // 2
                ents = [table.get(l, j, n, zero) for j in js]
                first = _fit_row(js[:half + 1], [e.log2 for e in ents[:half + 1]], [e.flag for e in ents[:half + 1]])
                second = _fit_row(js[half:], [e.log2 for e in ents[half:]], [e.flag for e in ents[half:]])
                if first.status == OK and second.status == OK and second.slope - first.slope > thresholds.eps_slope:
                    return Verdict("convolutor", OUT, "falsify", failing={
                        "n": n, "window": table.windows[l], "reason": "super-linear growth",
                        "slope_first": first.slope, "slope_second": second.slope}, **base)
            if not fit.stable or (fit.status == OK and fit.residual > thresholds.rho_fit):
                unstable = unstable or {"n": n, "window": table.windows[l], "status": fit.status,
                                        "residual": _clean(fit.residual)}
                continue
            r = max(r, fit.slope)
        per_n[str(n)] = _clean(r)
    if unstable:
        return Verdict("convolutor", INCONCLUSIVE, "certify", failing=unstable, **base)
    finite = [v for v in per_n.values() if isinstance(v, float)]
    r_hat = max(finite) if finite else -math.inf
    return Verdict("convolutor", IN, "certify", witnesses={"r": _clean(r_hat), "per_n": per_n}, **base)


def verdict_multiplier(f: SampledField, pair, W: WeightSystem, V: WeightSystem | None,
                       nd: NormDescriptor, caps: Caps = Caps(), thresholds: Thresholds = Thresholds(),
                       table: DyadicNormTable | None = None) -> Verdict:
    """Single-weight multiplier test in ``E_sl`` with rows ``d^alpha(f*w_j) / v_n``.

    ``V`` defaults to ``W``.  For each alpha the smallest n whose rows are
    all bounded with stable fits is the witness; OUT when some alpha has no
    witness or when the witness slopes grow with ``|alpha|`` beyond
    ``eps_slope`` per order.  The common exponent is the largest witness
    slope.
    """
    V = V or W
    table = table or norm_table(f, pair, V, nd, caps.J, caps.N_max, caps.A_max,
                                inverse=True, semilocal=True, thresholds=thresholds)
    fits = fit_growth(table, thresholds)
    base = dict(caps=caps, thresholds=thresholds, J_resolved=table.J_resolved)
    per_alpha, slopes = {}, {}
    for a in table.alphas:
        witness, undecided = None, None
        for n in table.n_values:
            rows = [fits[(l, n, a)] for l in range(len(table.windows))]
            if any(r.status == DIVERGING for r in rows):
                continue
            if all(r.stable and (r.status == ZERO or r.residual <= thresholds.rho_fit) for r in rows):
                witness = n
                slopes[a] = max(r.slope for r in rows)
                break
            undecided = undecided or {"alpha": _akey(a), "n": n, "reason": "unstable fit"}
        if witness is None:
            if undecided:
                return Verdict("multiplier", INCONCLUSIVE, "certify", failing=undecided, **base)
            return Verdict("multiplier", OUT, "falsify",
                           failing={"alpha": _akey(a), "reason": "no n with bounded rows"}, **base)
        per_alpha[_akey(a)] = witness
    drift = _alpha_drift({a: s for a, s in slopes.items()})
    if drift > thresholds.eps_slope:
        return Verdict("multiplier", OUT, "falsify", failing={
            "reason": "slope grows with derivative order", "slope_increment": drift,
            "slopes": {_akey(a): _clean(s) for a, s in slopes.items()}}, **base)
    finite = [s for s in slopes.values() if math.isfinite(s)]
    r_hat = max(finite) if finite else -math.inf
    return Verdict("multiplier", IN, "certify",
                   witnesses={"r": _clean(r_hat), "per_alpha": per_alpha}, **base)


def bounded_set_test(f: SampledField, window, W: WeightSystem, nd: NormDescriptor,
                     caps: Caps = Caps(), thresholds: Thresholds = Thresholds()) -> Verdict:
    """Is ``{f * w_j}`` bounded in every weighted seminorm?  (r = 0 test).

    ``in`` means boundedness was observed for every tested (n, alpha);
    ``out`` names the first (alpha, n) whose row diverges or grows.
    """
    windows = [window] if isinstance(window, SampledField) else window
    table = norm_table(f, windows, W, nd, caps.J, caps.N_max, caps.A_max, thresholds=thresholds)
    fits = fit_growth(table, thresholds)
    base = dict(caps=caps, thresholds=thresholds, J_resolved=table.J_resolved)
    for a in table.alphas:
        for n in table.n_values:
            fit = fits[(0, n, a)]
            if fit.status == DIVERGING:
                return Verdict("bounded-set", OUT, "bounded-set",
                               failing={"alpha": _akey(a), "n": n, "reason": "diverging row"}, **base)
            if fit.status == OK and fit.slope > thresholds.eps_slope:
                return Verdict("bounded-set", OUT, "bounded-set",
                               failing={"alpha": _akey(a), "n": n, "slope": fit.slope}, **base)
            if fit.status == "too_few":
                return Verdict("bounded-set", INCONCLUSIVE, "bounded-set",
                               failing={"reason": "too few resolved scales"}, **base)
    return Verdict("bounded-set", IN, "bounded-set", witnesses={"r": 0.0}, **base)


def independence_spot_check(f: SampledField, pair, W: WeightSystem, p_list=(1.0, math.inf),
                            caps: Caps = Caps(), thresholds: Thresholds = Thresholds()) -> dict:
    """Membership under ``Lp`` for each p; decisions must agree when W satisfies (N)."""
    n_ok = check_N(W, 0, None, f.grid).passed
    decisions = {}
    for p in p_list:
        v = verdict_membership(f, pair, W, Lp(p), caps, thresholds)
        decisions["inf" if math.isinf(p) else str(p)] = v.decision
    agree = len(set(decisions.values())) == 1
    return {"decisions": decisions, "W_satisfies_N": n_ok, "agree": agree,
            "consistent": agree or not n_ok}


def constant_witness(grid) -> SampledField:
    """Witness separating the L^1 and L^inf memberships when W = one."""
    from .corpus import make
    return make("constant", grid)
