"""Winograd minimal-filtering convolution.

Implements the F(m, r) transform triples (A^T, B^T, G) for the two plans the
photonic datapath supports, a tiled 2D convolution built on them, and a
brute-force direct-convolution oracle used to check equivalence.

Conventions:
  * "convolution" throughout means valid cross-correlation (no kernel flip),
    the usual CNN convention.
  * Feature maps are (channels, height, width); filter banks are
    (n_filters, channels, r, r). Row-major, channel-major, float64 unless a
    dtype is requested.
  * A 2D tile transform is the nested 1D transform applied on both axes:
    V = B^T d B, U = G g G^T, Y = A^T (U * V) A.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "WinogradPlan",
    "FeatureMap",
    "FilterBank",
    "TileStream",
    "CheckResult",
    "make_plan",
    "plan_identity_error",
    "transform_filter",
    "transform_input",
    "ewmm",
    "inverse_transform",
    "conv2d_direct",
    "winograd_conv2d",
    "tile_stream",
    "complexity_reduction",
    "oracle_check",
]


# F(2,3): interpolation points {0, 1, -1, inf}.
_AT_23 = [[1, 1, 1, 0],
          [0, 1, -1, -1]]
_BT_23 = [[1, 0, -1, 0],
          [0, 1, 1, 0],
          [0, -1, 1, 0],
          [0, 1, 0, -1]]
_G_23 = [[1, 0, 0],
         [0.5, 0.5, 0.5],
         [0.5, -0.5, 0.5],
         [0, 0, 1]]

# F(4,3): points {0, 1, -1, 2, -2, inf} in the Lavin & Gray ("Fast Algorithms
# for Convolutional Neural Networks", 2016) form.  B^T has six rows; the row
# [0, 2, -1, -2, 1, 0] and the trailing 1 in the last row of A^T are easy to
# drop when transcribing, and either mistake silently breaks the algebra, so
# plans are verified on construction (see plan_identity_error).
_AT_43 = [[1, 1, 1, 1, 1, 0],
          [0, 1, -1, 2, -2, 0],
          [0, 1, 1, 4, 4, 0],
          [0, 1, -1, 8, -8, 1]]
_BT_43 = [[4, 0, -5, 0, 1, 0],
          [0, -4, -4, 1, 1, 0],
          [0, 4, -4, -1, 1, 0],
          [0, -2, -1, 2, 1, 0],
          [0, 2, -1, -2, 1, 0],
          [0, 4, 0, -5, 0, 1]]
_G_43 = [[1 / 4, 0, 0],
         [-1 / 6, -1 / 6, -1 / 6],
         [-1 / 6, 1 / 6, -1 / 6],
         [1 / 24, 1 / 12, 1 / 6],
         [1 / 24, -1 / 12, 1 / 6],
         [0, 0, 1]]

_PLAN_TABLE = {
    (2, 3): (_AT_23, _BT_23, _G_23),
    (4, 3): (_AT_43, _BT_43, _G_43),
}


@dataclass(frozen=True, eq=False)
class WinogradPlan:
    """Transform triple for F(m, r): m outputs per tile from an r-tap filter.

    n = m + r - 1 is the tile edge and the number of multiplies per 1D tile.
    """

    m: int
    r: int
    At: np.ndarray  # (m, n) inverse (output) transform
    Bt: np.ndarray  # (n, n) input transform
    G: np.ndarray   # (n, r) filter transform

    def __post_init__(self):
        if self.m < 1 or self.r < 1:
            raise ValueError(f"plan needs m, r >= 1, got F({self.m},{self.r})")
        n = self.n
        for name, mat, shape in (("At", self.At, (self.m, n)),
                                 ("Bt", self.Bt, (n, n)),
                                 ("G", self.G, (n, self.r))):
            arr = np.asarray(mat, dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.m + self.r - 1

    def __repr__(self) -> str:
        return f"WinogradPlan(m={self.m}, r={self.r})"


def make_plan(m: int, r: int) -> WinogradPlan:
    """Return the verified transform plan for F(m, r).

    Supported plans: (2, 3) and (4, 3). Raises ValueError for anything else,
    or if the stored matrices ever fail the algebraic self-check.
    """
    try:
        at, bt, g = _PLAN_TABLE[(m, r)]
    except KeyError:
        raise ValueError(
            f"unsupported plan F({m},{r}); available: {sorted(_PLAN_TABLE)}"
        ) from None
    plan = WinogradPlan(m, r, np.array(at), np.array(bt), np.array(g))
    err = plan_identity_error(plan)
    if err > 1e-12:
        raise ValueError(f"plan F({m},{r}) failed self-check (max err {err:.3g})")
    return plan


def plan_identity_error(plan: WinogradPlan) -> float:
    """Max deviation of the plan from true 1D correlation over basis pairs.

    The map (w, d) -> A^T[(G w) * (B^T d)] is bilinear, so checking every
    basis pair (e_i, e_j) proves the identity for all inputs (up to float
    rounding).  Returns the maximum absolute error over all r*n pairs.
    """
    n, r, m = plan.n, plan.r, plan.m
    worst = 0.0
    for i in range(r):
        w = np.zeros(r)
        w[i] = 1.0
        gw = plan.G @ w
        for j in range(n):
            d = np.zeros(n)
            d[j] = 1.0
            y = plan.At @ (gw * (plan.Bt @ d))
            ref = np.correlate(d, w, mode="valid")  # length m, no flip
            worst = max(worst, float(np.max(np.abs(y - ref))))
    return worst


# ---------------------------------------------------------------------------
# tensor wrappers


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.isfinite(a).all():
        raise ValueError(f"{what} contains non-finite values")


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """A (channels, height, width) activation tensor."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"feature map must be (c, H, W), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"feature map dims must be >= 1, got {arr.shape}")
        _check_finite(arr, "feature map")
        object.__setattr__(self, "values", arr)

    @property
    def c(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> int:
        return self.values.shape[1]

    @property
    def w(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True, eq=False)
class FilterBank:
    """A (n_filters, channels, r, r) bank of square filters."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 4:
            raise ValueError(f"filter bank must be (N, c, r, r), got shape {arr.shape}")
        if arr.shape[2] != arr.shape[3]:
            raise ValueError(f"filters must be square, got {arr.shape[2]}x{arr.shape[3]}")
        if min(arr.shape) < 1:
            raise ValueError(f"filter bank dims must be >= 1, got {arr.shape}")
        _check_finite(arr, "filter bank")
        object.__setattr__(self, "values", arr)

    @property
    def n_filters(self) -> int:
        return self.values.shape[0]

    @property
    def c(self) -> int:
        return self.values.shape[1]

    @property
    def r(self) -> int:
        return self.values.shape[2]


def _as_fmap_array(x) -> np.ndarray:
    if isinstance(x, FeatureMap):
        return x.values
    return FeatureMap(np.asarray(x)).values


def _as_bank_array(f) -> np.ndarray:
    if isinstance(f, FilterBank):
        return f.values
    return FilterBank(np.asarray(f)).values


# ---------------------------------------------------------------------------
# single-tile transforms


def _check_square(a, edge: int, what: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.shape != (edge, edge):
        raise ValueError(f"{what} must be {edge}x{edge}, got {arr.shape}")
    _check_finite(arr, what)
    return arr


def transform_filter(plan: WinogradPlan, g) -> np.ndarray:
    """U = G g G^T: lift an r x r filter into the n x n transform domain."""
    arr = _check_square(g, plan.r, "filter tile")
    return plan.G @ arr @ plan.G.T


def transform_input(plan: WinogradPlan, d) -> np.ndarray:
    """V = B^T d B: lift an n x n input tile into the transform domain."""
    arr = _check_square(d, plan.n, "input tile")
    return plan.Bt @ arr @ plan.Bt.T


def ewmm(u, v) -> np.ndarray:
    """Element-wise matrix multiply of two equal-shape tiles.

    This is the n^2-multiply core that replaces the m^2 r^2 multiplies of a
    direct tile convolution.
    """
    ua, va = np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)
    if ua.shape != va.shape:
        raise ValueError(f"ewmm operands must match, got {ua.shape} vs {va.shape}")
    return ua * va

def inverse_transform(plan: WinogradPlan, m_tile) -> np.ndarray:
    """Y = A^T M A: map an n x n transform-domain product to m x m outputs."""
    arr = _check_square(m_tile, plan.n, "transform-domain tile")
    return plan.At @ arr @ plan.At.T


def complexity_reduction(m: int, r: int) -> float:
    """Multiply-count ratio of direct over Winograd filtering, (m r)^2 / n^2."""
    if m < 1 or r < 1:
        raise ValueError("m and r must be >= 1")
    n = m + r - 1
    return float((m * r) ** 2) / float(n ** 2)


# ---------------------------------------------------------------------------
# full convolutions


def conv2d_direct(x, f) -> FeatureMap:
    """Valid cross-correlation oracle, summing over input channels.

    Computes every output as the literal sum x[c, p+u, q+v] * f[k, c, u, v];
    no transform tricks, so it serves as the reference for the Winograd path.
    Output shape: (n_filters, H - r + 1, W - r + 1).
    """
    xa, fa = _as_fmap_array(x), _as_bank_array(f)
    n_filters, fc, r, _ = fa.shape
    c, h, w = xa.shape
    if fc != c:
        raise ValueError(f"channel mismatch: input has {c}, filters expect {fc}")
    if h < r or w < r:
        raise ValueError(f"input {h}x{w} smaller than filter {r}x{r}")
    windows = sliding_window_view(xa, (r, r), axis=(1, 2))  # (c, oh, ow, r, r)
    out = np.einsum("cpqrs,ncrs->npq", windows, fa)
    return FeatureMap(out)


def _transform_filter_bank(fa: np.ndarray, plan: WinogradPlan) -> np.ndarray:
    """Apply G . G^T to every filter: (N, c, r, r) -> (N, c, n, n)."""
    return np.einsum("ij,ncjk,lk->ncil", plan.G, fa, plan.G)


def _winograd_batch(xb: np.ndarray, fa: np.ndarray, plan: WinogradPlan,
                    dtype=np.float64) -> np.ndarray:
    """Tiled Winograd convolution over a batch: (B,c,H,W) -> (B,N,oh,ow).

    Input tiles are taken at stride m with n x n extent; the right/bottom edge
    is zero-padded to the next tile boundary and the output cropped back.
    Filters are transformed once per call and reused for every tile.  Channel
    accumulation happens after the inverse transform of each per-channel
    product tile.
    """
    m, r, n = plan.m, plan.r, plan.n
    xb = np.ascontiguousarray(xb, dtype=dtype)
    fa = np.asarray(fa, dtype=dtype)
    bsz, c, h, w = xb.shape
    oh, ow = h - r + 1, w - r + 1
    th, tw = -(-oh // m), -(-ow // m)  # ceil
    ph, pw = th * m + r - 1, tw * m + r - 1
    if (ph, pw) != (h, w):
        xp = np.zeros((bsz, c, ph, pw), dtype=dtype)
        xp[:, :, :h, :w] = xb
    else:
        xp = xb
    at = plan.At.astype(dtype)
    bt = plan.Bt.astype(dtype)
    g = plan.G.astype(dtype)

    u = np.einsum("ij,ncjk,lk->ncil", g, fa, g)  # (N, c, n, n), once per layer
    tiles = sliding_window_view(xp, (n, n), axis=(2, 3))[:, :, ::m, ::m]
    v = bt @ tiles @ bt.T                        # (B, c, th, tw, n, n)
    prod = u[None, :, :, None, None] * v[:, None]  # (B, N, c, th, tw, n, n)
    y = at @ prod @ at.T                         # (B, N, c, th, tw, m, m)
    y = y.sum(axis=2)                            # collapse channels post-inverse
    y = y.transpose(0, 1, 2, 4, 3, 5).reshape(bsz, y.shape[1], th * m, tw * m)
    return y[:, :, :oh, :ow]


def winograd_conv2d(x, f, plan: WinogradPlan, dtype=np.float64) -> FeatureMap:
    """Tiled Winograd convolution, numerically equivalent to conv2d_direct.

    dtype=np.float32 runs the whole pipeline in single precision (larger
    rounding error, same algebra).
    """
    xa, fa = _as_fmap_array(x), _as_bank_array(f)
    if fa.shape[1] != xa.shape[0]:
        raise ValueError(
            f"channel mismatch: input has {xa.shape[0]}, filters expect {fa.shape[1]}")
    if fa.shape[2] != plan.r:
        raise ValueError(f"filter taps {fa.shape[2]} != plan r {plan.r}")
    if xa.shape[1] < plan.r or xa.shape[2] < plan.r:
        raise ValueError(f"input {xa.shape[1]}x{xa.shape[2]} smaller than filter")
    out = _winograd_batch(xa[None], fa, plan, dtype=dtype)[0]
    return FeatureMap(np.asarray(out, dtype=np.float64))


# ---------------------------------------------------------------------------
# tile streaming


@dataclass
class TileStream:
    """Row-major n x n tiles at stride m, with line-buffer reuse accounting.

    Horizontally consecutive tiles overlap in (r-1) columns; those n*(r-1)
    elements per channel are counted as reused (served from the line buffer)
    rather than fetched.  fetched + reused always equals the total number of
    elements touched (tiles * c * n^2).
    """

    tile_edge: int
    stride: int
    origins: list[tuple[int, int]]
    fetched: int
    reused: int
    _padded: np.ndarray = field(repr=False, default=None)

    def __iter__(self):
        n = self.tile_edge
        for (i, j) in self.origins:
            yield i, j, self._padded[:, i:i + n, j:j + n]

    @property
    def n_tiles(self) -> int:
        return len(self.origins)


def tile_stream(x, plan: WinogradPlan) -> TileStream:
    """Decompose a feature map into the Winograd tile schedule."""
    xa = _as_fmap_array(x)
    m, r, n = plan.m, plan.r, plan.n
    c, h, w = xa.shape
    oh, ow = max(h - r + 1, 1), max(w - r + 1, 1)
    th, tw = -(-oh // m), -(-ow // m)
    ph, pw = th * m + r - 1, tw * m + r - 1
    padded = np.zeros((c, ph, pw))
    padded[:, :h, :w] = xa

    origins = []
    fetched = reused = 0
    overlap = (r - 1) * n * c  # shared columns with the previous tile in a row
    for ti in range(th):
        for tj in range(tw):
            origins.append((ti * m, tj * m))
            if tj == 0:
                fetched += n * n * c
            else:
                fetched += n * n * c - overlap
                reused += overlap
    return TileStream(tile_edge=n, stride=m, origins=origins,
                      fetched=fetched, reused=reused, _padded=padded)


# ---------------------------------------------------------------------------
# randomized equivalence checking


@dataclass
class CheckResult:
    """Outcome of a randomized winograd-vs-direct equivalence run."""

    plan_m: int
    plan_r: int
    trials: int
    tolerance: float
    max_err: float
    worst_case: dict | None = None

    @property
    def passed(self) -> bool:
        return self.max_err < self.tolerance

    def describe(self) -> str:
        tag = "ok" if self.passed else "FAIL"
        return (f"plan({self.plan_m},{self.plan_r}): max_err={self.max_err:.3e} "
                f"over {self.trials} trials (tol {self.tolerance:g}) [{tag}]")


def oracle_check(plan: WinogradPlan, trials: int = 1000, seed: int = 0,
                 tolerance: float = 1e-10, max_channels: int = 4,
                 max_extent: int = 32, max_filters: int = 8) -> CheckResult:
    """Compare winograd_conv2d against conv2d_direct on random problems.

    Draws random geometries (c <= max_channels, r <= H, W <= max_extent,
    N <= max_filters) and values in [-1, 1]; records the worst case for
    diagnosis when the tolerance is breached.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = CheckResult(plan.m, plan.r, trials, tolerance, -1.0)
    for t in range(trials):
        c = int(rng.integers(1, max_channels + 1))
        h = int(rng.integers(plan.r, max_extent + 1))
        w = int(rng.integers(plan.r, max_extent + 1))
        nf = int(rng.integers(1, max_filters + 1))
        x = rng.uniform(-1, 1, size=(c, h, w))
        f = rng.uniform(-1, 1, size=(nf, c, plan.r, plan.r))
        ref = conv2d_direct(x, f).values
        got = winograd_conv2d(x, f, plan).values
        err = float(np.max(np.abs(got - ref)))
        if err > worst.max_err:
            worst.max_err = err
            worst.worst_case = {"trial": t, "shape_x": x.shape, "shape_f": f.shape,
                                "x": x, "f": f, "err": err}
    if worst.passed and worst.worst_case is not None:
        # keep the dump light when everything is fine
        worst.worst_case = {k: v for k, v in worst.worst_case.items()
                            if k in ("trial", "shape_x", "shape_f", "err")}
    return worst
