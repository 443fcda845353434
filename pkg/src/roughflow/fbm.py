"""Exact simulation of multidimensional fractional Brownian motion.

A d-dimensional fBm with Hurst parameter H has independent centered
Gaussian components with covariance

    R_H(s, t) = (s^{2H} + t^{2H} - |t - s|^{2H}) / 2.

Sampling is done by dense Cholesky factorization of the exact covariance
matrix on a uniform grid: exactness of the law matters more than speed at
the path lengths used here, so no circulant embedding is attempted and the
grid size is capped.  The module also evaluates the Volterra kernel
K_H(t, u) whose square integrates to the covariance,

    R_H(t, s) = int_0^{s ^ t} K_H(t, r) K_H(s, r) dr,

with the kernel normalization constant calibrated numerically per H.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .errors import DomainError, FactorizationError, QuadratureError

#: Largest grid accepted by the dense Cholesky sampler.
CHOLESKY_CAP = 4097

#: Escalating diagonal jitter tried before giving up on a factorization.
JITTER_LADDER = (0.0, 1e-14, 1e-12, 1e-10)


@dataclass(frozen=True)
class HurstParam:
    """Hurst regularity index, constrained to (0, 1)."""

    value: float

    def __post_init__(self):
        if not 0.0 < self.value < 1.0:
            raise DomainError(f"Hurst parameter must lie in (0,1), got {self.value}")

    @property
    def in_rough_regime(self) -> bool:
        """True iff 1/3 < H < 1/2, the regime all level-2 machinery assumes."""
        return 1.0 / 3.0 < self.value < 0.5


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, T] with ``n_points`` nodes, first node 0."""

    horizon: float
    n_points: int
    times: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.horizon <= 0:
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        if self.n_points < 2:
            raise DomainError(f"need at least 2 grid points, got {self.n_points}")
        if self.times is None:
            object.__setattr__(
                self, "times", np.linspace(0.0, self.horizon, self.n_points)
            )
        t = self.times
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise DomainError("grid times must start at 0 and increase strictly")
        if not np.allclose(np.diff(t), t[1] - t[0], rtol=1e-12, atol=1e-15):
            raise DomainError("grid must be uniform")

    @property
    def mesh(self) -> float:
        return self.horizon / (self.n_points - 1)

    def index_of(self, t: float) -> int:
        """Grid index of time ``t``; raises DomainError for off-grid times."""
        k = int(round(t / self.mesh))
        if k < 0 or k >= self.n_points or abs(self.times[k] - t) > 1e-9 * max(1.0, self.horizon):
            raise DomainError(f"time {t} is not a grid point")
        return k


@dataclass(frozen=True)
class SamplePath:
    """Values of a d-dimensional path on a grid, with sampling metadata.

    ``values`` has shape (n_points, d).  Paths carrying Hurst metadata are
    fBm samples and must vanish at the origin; solver outputs reuse the
    container with ``hurst=None`` and are free to start anywhere.
    """

    grid: TimeGrid
    values: np.ndarray
    hurst: HurstParam | None = None
    seed: int | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        object.__setattr__(self, "values", v)
        if v.shape[0] != self.grid.n_points:
            raise DomainError(
                f"values have {v.shape[0]} rows for a {self.grid.n_points}-point grid"
            )
        if self.hurst is not None and not np.all(v[0] == 0.0):
            raise DomainError("fBm sample paths must vanish at the origin")

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def covariance(s: float, t: float, hurst: HurstParam | float) -> float:
    """fBm covariance R_H(s, t) = (s^{2H} + t^{2H} - |t-s|^{2H}) / 2."""
    H = hurst.value if isinstance(hurst, HurstParam) else float(hurst)
    if s < 0 or t < 0:
        raise DomainError(f"covariance needs nonnegative times, got ({s}, {t})")
    two_h = 2.0 * H
    return 0.5 * (s**two_h + t**two_h - abs(t - s) ** two_h)


def covariance_matrix(grid: TimeGrid, hurst: HurstParam) -> np.ndarray:
    """Covariance matrix of (B_{t_1}, ..., B_{t_{n-1}}), origin excluded."""
    t = grid.times[1:]
    two_h = 2.0 * hurst.value
    s_pow = t**two_h
    return 0.5 * (s_pow[:, None] + s_pow[None, :] - np.abs(t[:, None] - t[None, :]) ** two_h)


def _cholesky_with_jitter(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor, retrying with escalating diagonal jitter."""
    scale = float(np.max(np.diag(cov)))
    for eps in JITTER_LADDER:
        try:
            return np.linalg.cholesky(cov + eps * scale * np.eye(cov.shape[0])), eps
        except np.linalg.LinAlgError:
            continue
    raise FactorizationError(
        "covariance matrix is not positive definite even after jitter "
        f"{JITTER_LADDER[-1]:g} (n={cov.shape[0]}, diag scale={scale:g})"
    )


def _component_normals(seed: int, path_idx: int, comp_idx: int, n: int) -> np.ndarray:
    """Standard normals from a counter-based stream keyed by (seed, path, comp)."""
    bitgen = np.random.Philox(np.random.SeedSequence(seed, spawn_key=(path_idx, comp_idx)))
    return np.random.Generator(bitgen).standard_normal(n)


def sample_fbm(
    hurst: HurstParam,
    grid: TimeGrid,
    d: int = 1,
    n_paths: int = 1,
    seed: int = 0,
) -> list[SamplePath]:
    """Draw exact fBm sample paths by Cholesky transport of white noise.

    Each (path, component) pair consumes its own counter-based stream, so
    results are reproducible independently of batching or parallelism.
    """
    if d < 1:
        raise DomainError(f"dimension must be >= 1, got {d}")
    if grid.n_points > CHOLESKY_CAP:
        raise DomainError(
            f"grid has {grid.n_points} points, above the Cholesky cap {CHOLESKY_CAP}"
        )
    L, _ = _cholesky_with_jitter(covariance_matrix(grid, hurst))
    n = grid.n_points - 1
    # One matmul for the whole batch; columns are (path, component) streams.
    z = np.empty((n, n_paths * d))
    for p in range(n_paths):
        for c in range(d):
            z[:, p * d + c] = _component_normals(seed, p, c, n)
    g = L @ z
    paths = []
    for p in range(n_paths):
        values = np.zeros((grid.n_points, d))
        values[1:] = g[:, p * d : (p + 1) * d]
        paths.append(SamplePath(grid=grid, values=values, hurst=hurst, seed=seed))
    return paths


def sample_fbm_array(
    hurst: HurstParam,
    grid: TimeGrid,
    d: int,
    n_paths: int,
    seed: int = 0,
) -> np.ndarray:
    """Batch fBm sampler returning an array of shape (n_paths, n_points, d).

    Uses a single counter-based stream keyed by ``seed`` with a fixed
    (time, path, component) draw layout; meant for Monte-Carlo engines
    where per-path streams would dominate the runtime.  Deterministic for
    fixed (seed, n_paths, d, grid).
    """
    if d < 1:
        raise DomainError(f"dimension must be >= 1, got {d}")
    if grid.n_points > CHOLESKY_CAP:
        raise DomainError(
            f"grid has {grid.n_points} points, above the Cholesky cap {CHOLESKY_CAP}"
        )
    L, _ = _cholesky_with_jitter(covariance_matrix(grid, hurst))
    n = grid.n_points - 1
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    z = rng.standard_normal((n, n_paths * d))
    g = L @ z
    out = np.zeros((n_paths, grid.n_points, d))
    out[:, 1:, :] = g.reshape(n, n_paths, d).transpose(1, 0, 2)
    return out


# ---------------------------------------------------------------------------
# Volterra kernel
# ---------------------------------------------------------------------------

_QUAD_RTOL = 1e-8


def _kernel_inner_integral(t: float, u: float, H: float) -> float:
    """int_u^t v^{H-3/2} (v-u)^{H-1/2} dv with the endpoint singularity at v=u.

    The algebraic weight (v-u)^{H-1/2} is handled by the QAWS rule, which
    is exact for that factor.
    """
    val, err = quad(
        lambda v: v ** (H - 1.5),
        u,
        t,
        weight="alg",
        wvar=(H - 0.5, 0.0),
        epsrel=_QUAD_RTOL,
        epsabs=0.0,
        limit=200,
    )
    if not math.isfinite(val) or (abs(val) > 0 and err > 1e-6 * abs(val) + 1e-12):
        raise QuadratureError(
            f"inner kernel integral did not converge at (t={t}, u={u}, H={H}): "
            f"value={val}, err={err}"
        )
    return val


def kernel_K(t: float, u: float, hurst: HurstParam | float, c_h: float | None = None) -> float:
    """Two-term Volterra kernel K_H(t, u), zero outside 0 < u < t.

    ``c_h`` defaults to the calibrated normalization for this H (see
    :func:`calibrate_c`).
    """
    H = hurst.value if isinstance(hurst, HurstParam) else float(hurst)
    if t < 0 or u < 0:
        raise DomainError(f"kernel needs nonnegative times, got (t={t}, u={u})")
    if not 0.0 < u < t:
        return 0.0
    if c_h is None:
        c_h = calibrate_c(H)
    head = (u / t) ** (0.5 - H) * (t - u) ** (H - 0.5)
    tail = (0.5 - H) * u ** (0.5 - H) * _kernel_inner_integral(t, u, H)
    return c_h * (head + tail)


@lru_cache(maxsize=None)
def calibrate_c(H: float) -> float:
    """Kernel constant fixed by the convention int_0^1 K_H(1,r)^2 dr = 1.

    The normalization of K_H is a free convention here; this calibration
    pins it so the kernel reproduces R_H exactly on the diagonal at t=1
    (and hence everywhere, by scaling).  The value is cached per H.
    """
    raw, err = quad(
        lambda r: kernel_K(1.0, r, H, c_h=1.0) ** 2,
        0.0,
        1.0,
        epsrel=_QUAD_RTOL,
        epsabs=0.0,
        limit=400,
        points=[0.0, 1.0],
    )
    if not math.isfinite(raw) or raw <= 0 or err > 1e-5 * raw:
        raise QuadratureError(
            f"kernel calibration integral did not converge for H={H}: value={raw}, err={err}"
        )
    return 1.0 / math.sqrt(raw)


def kernel_covariance(s: float, t: float, hurst: HurstParam | float) -> float:
    """int_0^{s^t} K(t,r) K(s,r) dr, the kernel route to the covariance."""
    H = hurst.value if isinstance(hurst, HurstParam) else float(hurst)
    lo, hi = sorted((s, t))
    if lo <= 0:
        return 0.0
    val, err = quad(
        lambda r: kernel_K(t, r, H) * kernel_K(s, r, H),
        0.0,
        lo,
        epsrel=1e-6,
        epsabs=0.0,
        limit=400,
        points=[0.0, lo],
    )
    if not math.isfinite(val):
        raise QuadratureError(f"kernel covariance quadrature failed at (s={s}, t={t})")
    return val
