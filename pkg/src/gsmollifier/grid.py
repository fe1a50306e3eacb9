"""Uniform box grids and the sampled fields that live on them.

Every other module works with :class:`SampledField`: functions, windows,
weights and Dirac surrogates are all stored as samples on a symmetric box
``[-X, X]^dim`` with ``N`` nodes per axis.  Node ``k`` sits at
``x_k = -X + k*h`` with ``h = 2X/N``, so the origin is node ``N//2`` and
dyadic dilations ``x -> 2**j x`` map nodes onto nodes.
"""
from __future__ import annotations

import csv
import struct
from itertools import product
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import signal

MAX_DERIVATIVE_ORDER = 12

FUNCTION = "function"
SPIKE = "spike"
_KIND_CODES = {FUNCTION: 0, SPIKE: 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}
_HEADER = struct.Struct("<BIdB")


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    dim: int
    X: float
    N: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not self.X > 0:
            raise ValueError(f"half width must be positive, got {self.X}")
        if self.N < 2 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two, got {self.N}")

    @property
    def h(self) -> float:
        return 2.0 * self.X / self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.dim

    @property
    def cell(self) -> float:
        """Quadrature weight h**dim."""
        return self.h ** self.dim

    @property
    def center(self) -> tuple[int, ...]:
        return (self.N // 2,) * self.dim

    def axis(self) -> np.ndarray:
        return -self.X + self.h * np.arange(self.N)

    def coords(self) -> tuple[np.ndarray, ...]:
        ax = self.axis()
        if self.dim == 1:
            return (ax,)
        return tuple(np.meshgrid(ax, ax, indexing="ij"))

    def radius(self) -> np.ndarray:
        """Euclidean |x| at every node."""
        cs = self.coords()
        return np.sqrt(sum(c * c for c in cs))

    def box_radius(self) -> np.ndarray:
        """max-coordinate norm at every node."""
        cs = self.coords()
        return np.max(np.abs(np.stack(cs)), axis=0)


def make_grid(dim: int, X: float, N: int) -> Grid:
    if N < 64:
        raise ValueError(f"N must be at least 64, got {N}")
    return Grid(int(dim), float(X), int(N))


@dataclass(frozen=True, eq=False)
class SampledField:
    grid: Grid
    values: np.ndarray
    kind: str = FUNCTION
    label: str = field(default="", compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            vals = vals.reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains NaN or Inf samples")
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown field kind {self.kind!r}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def replace(self, values, kind: str | None = None) -> "SampledField":
        return SampledField(self.grid, values, kind or self.kind, self.label)

    def __mul__(self, other):
        if isinstance(other, SampledField):
            _same_grid(self, other)
            return self.replace(self.values * other.values, FUNCTION)
        kind = self.kind if other == 1 else FUNCTION
        return self.replace(self.values * other, kind)

    __rmul__ = __mul__

    def __add__(self, other: "SampledField") -> "SampledField":
        _same_grid(self, other)
        return self.replace(self.values + other.values, FUNCTION)

    def __sub__(self, other: "SampledField") -> "SampledField":
        _same_grid(self, other)
        return self.replace(self.values - other.values, FUNCTION)

    def __neg__(self):
        return self.replace(-self.values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def integral(self) -> float:
        return float(np.sum(self.values) * self.grid.cell)


def _same_grid(f: SampledField, g: SampledField) -> None:
    if f.grid != g.grid:
        raise GridMismatchError(f"fields live on different grids: {f.grid} vs {g.grid}")


def sample(evaluator: Callable, grid: Grid, label: str = "") -> SampledField:
    """Evaluate a vectorised pointwise function on every grid node.

    ``evaluator`` receives one coordinate array per axis.
    """
    with np.errstate(all="ignore"):
        vals = np.asarray(evaluator(*grid.coords()), dtype=float)
    vals = np.broadcast_to(vals, grid.shape).copy()
    if not np.all(np.isfinite(vals)):
        raise ValueError("evaluator produced NaN or Inf on the grid")
    return SampledField(grid, vals, FUNCTION, label)


def spike(grid: Grid, at: Sequence[int] | None = None) -> SampledField:
    """Unit-mass Dirac surrogate: a single sample of value 1/h**dim."""
    vals = np.zeros(grid.shape)
    vals[tuple(at) if at is not None else grid.center] = 1.0 / grid.cell
    return SampledField(grid, vals, SPIKE, "spike")


def zeros(grid: Grid) -> SampledField:
    return SampledField(grid, np.zeros(grid.shape))


# -- convolution -------------------------------------------------------------

def _support_slices(v: np.ndarray) -> tuple[slice, ...]:
    nz = np.nonzero(v)
    if len(nz[0]) == 0:
        return tuple(slice(0, 0) for _ in v.shape)
    return tuple(slice(int(ix.min()), int(ix.max()) + 1) for ix in nz)


MIN_BLOCK = {1: 1024, 2: 128}


def _overlap_add(v: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Full linear convolution from blocks about one kernel width long.

    Each block is transformed separately, so the round-off at an output
    node depends only on ``v`` within two kernel widths of it.
    """
    block = tuple(max(k, MIN_BLOCK.get(v.ndim, 128)) for k in kernel.shape)
    out = np.zeros(tuple(a + b - 1 for a, b in zip(v.shape, kernel.shape)))
    counts = [range(0, n, b) for n, b in zip(v.shape, block)]
    for starts in product(*counts):
        src = tuple(slice(s0, min(s0 + b, n)) for s0, b, n in zip(starts, block, v.shape))
        piece = v[src]
        if not np.any(piece):
            continue
        part = signal.fftconvolve(piece, kernel, mode="full")
        dst = tuple(slice(s0, s0 + m) for s0, m in zip(starts, part.shape))
        out[dst] += part
    return out


def convolve(f: SampledField, g: SampledField) -> SampledField:
    """Zero-extended linear convolution ``h**dim * sum_k f(x - y_k) g(y_k)``.

    The kernel is trimmed to the bounding box of its nonzero samples and the
    product is formed by overlap-add FFTs over blocks about one kernel wide,
    so round-off stays relative to the local size of ``f`` rather than its
    global maximum.
    """
    _same_grid(f, g)
    grid = f.grid
    n = grid.N
    sl = _support_slices(g.values)
    kernel = g.values[sl]
    if kernel.size == 0 or not np.any(f.values):
        return f.replace(np.zeros(grid.shape), FUNCTION)
    full = _overlap_add(np.asarray(f.values, dtype=float), kernel)
    out = full
    for axis, s in enumerate(sl):
        start = n // 2 - s.start
        idx = np.arange(start, start + n)
        valid = (idx >= 0) & (idx < full.shape[axis])
        taken = np.take(out, np.clip(idx, 0, full.shape[axis] - 1), axis=axis)
        mask_shape = [1] * out.ndim
        mask_shape[axis] = n
        out = taken * valid.reshape(mask_shape)
    kind = SPIKE if f.kind == SPIKE and g.kind == SPIKE else FUNCTION
    return SampledField(grid, out * grid.cell, kind)


def convolve_periodic(f: SampledField, g: SampledField) -> SampledField:
    """Circular convolution on the torus obtained by identifying opposite faces."""
    _same_grid(f, g)
    grid = f.grid
    axes = tuple(range(grid.dim))
    prod = np.fft.ifftn(np.fft.fftn(f.values) * np.fft.fftn(g.values)).real
    out = np.roll(prod, shift=(-(grid.N // 2),) * grid.dim, axis=axes)
    return SampledField(grid, out * grid.cell, FUNCTION)


# -- finite differences -------------------------------------------------------

def _pad(v: np.ndarray, axis: int, width: int = 2) -> np.ndarray:
    pad = [(0, 0)] * v.ndim
    pad[axis] = (width, width)
    return np.pad(v, pad)


def _shifted(vp: np.ndarray, axis: int, offset: int, n: int) -> np.ndarray:
    return np.take(vp, np.arange(2 + offset, 2 + offset + n), axis=axis)


def _d1(v: np.ndarray, axis: int, h: float) -> np.ndarray:
    n = v.shape[axis]
    vp = _pad(v, axis)
    s = lambda o: _shifted(vp, axis, o, n)
    return (s(-2) - 8.0 * s(-1) + 8.0 * s(1) - s(2)) / (12.0 * h)


def _d2(v: np.ndarray, axis: int, h: float) -> np.ndarray:
    n = v.shape[axis]
    vp = _pad(v, axis)
    s = lambda o: _shifted(vp, axis, o, n)
    return (-s(-2) + 16.0 * s(-1) - 30.0 * v + 16.0 * s(1) - s(2)) / (12.0 * h * h)


def _as_multi_index(alpha, dim: int) -> tuple[int, ...]:
    if np.isscalar(alpha):
        alpha = (int(alpha),) + (0,) * (dim - 1)
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != dim or any(a < 0 for a in alpha):
        raise ValueError(f"invalid multi-index {alpha} for dim {dim}")
    return alpha


def derivative(f: SampledField, alpha) -> SampledField:
    """Fourth-order central differences, composed per axis, zero extension."""
    if f.kind == SPIKE:
        raise ValueError("cannot differentiate a spike field; differentiate the window instead")
    alpha = _as_multi_index(alpha, f.grid.dim)
    if sum(alpha) > MAX_DERIVATIVE_ORDER:
        raise ValueError(f"derivative order {sum(alpha)} exceeds cap {MAX_DERIVATIVE_ORDER}")
    h = f.grid.h
    v = np.array(f.values)
    for axis, k in enumerate(alpha):
        for _ in range(k // 2):
            v = _d2(v, axis, h)
        if k % 2:
            v = _d1(v, axis, h)
    return SampledField(f.grid, v, FUNCTION)


def laplacian(f: SampledField) -> SampledField:
    if f.kind == SPIKE:
        raise ValueError("cannot differentiate a spike field; differentiate the window instead")
    v = sum(_d2(np.asarray(f.values), axis, f.grid.h) for axis in range(f.grid.dim))
    return SampledField(f.grid, v, FUNCTION)


def restrict_inner(f: SampledField, margin: float) -> SampledField:
    """Zero every sample with some coordinate of modulus > X - margin."""
    if not 0 <= margin < f.grid.X:
        raise ValueError(f"margin must lie in [0, X), got {margin}")
    if margin == 0:
        return f
    keep = f.grid.box_radius() <= f.grid.X - margin + 1e-12 * f.grid.X
    return f.replace(np.where(keep, f.values, 0.0))


def inner_mask(grid: Grid, margin: float) -> np.ndarray:
    return grid.box_radius() <= grid.X - margin + 1e-12 * grid.X


# -- serialisation -------------------------------------------------------------

def to_bytes(f: SampledField) -> bytes:
    g = f.grid
    head = _HEADER.pack(g.dim, g.N, g.X, _KIND_CODES[f.kind])
    return head + np.ascontiguousarray(f.values, dtype="<f8").tobytes()


def from_bytes(blob: bytes) -> SampledField:
    dim, n, x, kind = _HEADER.unpack_from(blob)
    grid = Grid(dim, x, n)
    count = n ** dim
    body = np.frombuffer(blob, dtype="<f8", count=count, offset=_HEADER.size)
    if len(blob) != _HEADER.size + 8 * count:
        raise ValueError("binary field has trailing or missing bytes")
    return SampledField(grid, body.reshape(grid.shape).copy(), _KIND_NAMES[kind])


def save_binary(f: SampledField, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(f))


def load_binary(path) -> SampledField:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


def save_csv(f: SampledField, path) -> None:
    g = f.grid
    with open(path, "w", newline="") as fh:
        fh.write(f"# dim={g.dim} N={g.N} X={g.X!r} kind={f.kind}\n")
        w = csv.writer(fh)
        w.writerow([*("i", "j")[: g.dim], "value"])
        for idx in np.ndindex(*g.shape):
            w.writerow([*idx, repr(float(f.values[idx]))])


def load_csv(path) -> SampledField:
    with open(path, newline="") as fh:
        meta = dict(tok.split("=", 1) for tok in fh.readline().lstrip("# ").split())
        grid = Grid(int(meta["dim"]), float(meta["X"]), int(meta["N"]))
        reader = csv.reader(fh)
        next(reader)
        vals = np.zeros(grid.shape)
        for row in reader:
            idx = tuple(int(c) for c in row[: grid.dim])
            vals[idx] = float(row[grid.dim])
    return SampledField(grid, vals, meta["kind"])
