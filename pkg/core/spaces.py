# spaces.py
# Littlewood-Paley blocks on the frequency lattice and the Morrey,
# Fourier-Besov-Morrey and Chemin-Lerner norms built on them

import math
from functools import lru_cache

import numpy as np
import scipy.fft
import scipy.integrate
import scipy.signal
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .grid import COMPONENTS, GridSpec, SpectralField4, random_band_limited
from .symbols import helmholtz_project
from .logging import setup_logger, log_event

spaces_logger = setup_logger('spaces', 'norms.log')

# Inner and outer radius of the base annulus and of the cutoff χ
ANNULUS_INNER = 3.0 / 4.0
ANNULUS_OUTER = 8.0 / 3.0
CUTOFF_OUTER = 4.0 / 3.0


class InadmissibleIndicesError(ValueError):
    """Raised when (α, q, μ, r) matches none of the well-posedness cases."""


class NormParams(BaseModel):
    """Indices (s, q, μ, r, p) of an FBM or Chemin-Lerner norm."""

    model_config = ConfigDict(frozen=True)

    s: float
    q: float = Field(ge=1.0)
    mu: float = Field(default=0.0, ge=0.0, lt=3.0)
    r: float = Field(default=math.inf, ge=1.0)
    p: float = Field(default=math.inf, ge=1.0)

    @field_validator('q')
    @classmethod
    def _finite_q(cls, value):
        if not math.isfinite(value):
            raise ValueError("Morrey integrability q must be finite")
        return value

    def shifted(self, ds, p=None):
        return self.model_copy(update={'s': self.s + ds, 'p': self.p if p is None else p})

    @property
    def scaling_index(self):
        """s + (3−μ)/q, preserved by the Sobolev-type embeddings"""
        return self.s + (3.0 - self.mu) / self.q


def critical_regularity(alpha, q, mu):
    return 4.0 - 2.0 * alpha - (3.0 - mu) / q


def admissible_case(alpha, params):
    """
    Return which well-posedness case ('i', 'ii' or 'iii') the indices satisfy.

    Raises InadmissibleIndicesError naming the violated conditions of every case.
    """
    q, mu, r = params.q, params.mu, params.r
    ceiling = 2.5 - (3.0 - mu) / (2.0 * q)
    failures = {'i': [], 'ii': [], 'iii': []}

    if not alpha > 0.5:
        failures['i'].append(f"alpha={alpha} must exceed 1/2")
    if not alpha < ceiling:
        failures['i'].append(f"alpha={alpha} must be below 5/2-(3-mu)/(2q)={ceiling:.6g}")

    if not math.isclose(alpha, ceiling, rel_tol=0.0, abs_tol=1e-12):
        failures['ii'].append(f"alpha={alpha} must equal 5/2-(3-mu)/(2q)={ceiling:.6g}")
    if mu != 0:
        failures['ii'].append(f"mu={mu} must be 0")
    if not 1.0 <= q <= r <= 2.0:
        failures['ii'].append(f"needs 1 <= q={q} <= r={r} <= 2")

    if not math.isclose(alpha, 0.5, rel_tol=0.0, abs_tol=1e-12):
        failures['iii'].append(f"alpha={alpha} must equal 1/2")
    if r != 1:
        failures['iii'].append(f"r={r} must equal 1")

    for case in ('i', 'ii', 'iii'):
        if not failures[case]:
            return case

    detail = '; '.join(f"case ({case}): {', '.join(reasons)}" for case, reasons in failures.items())
    raise InadmissibleIndicesError(f"inadmissible indices alpha={alpha}, q={q}, mu={mu}, r={r} | {detail}")


def _smooth_step(x):
    """C∞ step: 0 for x ≤ 0, 1 for x ≥ 1"""
    x = np.clip(x, 0.0, 1.0)
    with np.errstate(divide='ignore', over='ignore'):
        rise = np.where(x > 0.0, np.exp(-1.0 / np.where(x > 0.0, x, 1.0)), 0.0)
        fall = np.where(x < 1.0, np.exp(-1.0 / np.where(x < 1.0, 1.0 - x, 1.0)), 0.0)
    return rise / (rise + fall)


def radial_cutoff(radius):
    """χ: 1 on |ξ| ≤ 3/4, 0 on |ξ| ≥ 4/3, smooth and nonincreasing between"""
    return 1.0 - _smooth_step((radius - ANNULUS_INNER) / (CUTOFF_OUTER - ANNULUS_INNER))


class LPPartition(BaseModel):
    """Dyadic blocks φ_j(ξ) = χ(2^{−j−1}ξ) − χ(2^{−j}ξ) sampled on a grid."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: GridSpec
    j_min: int
    j_max: int
    blocks: np.ndarray

    @property
    def js(self):
        return np.arange(self.j_min, self.j_max + 1)

    def index_of(self, j):
        if not self.j_min <= j <= self.j_max:
            raise ValueError(f"block {j} outside resolved range [{self.j_min}, {self.j_max}]")
        return j - self.j_min

    def block(self, j):
        return self.blocks[self.index_of(j)]

    def project(self, coeffs, j):
        """Δ_j applied to lattice coefficients (any leading axes)"""
        if j < self.j_min or j > self.j_max:
            return np.zeros_like(coeffs)
        return self.block(j) * coeffs

    def mean(self, coeffs):
        """Zero-mode part of coeffs (no block carries it)"""
        mean = np.zeros_like(coeffs)
        mean[..., 0, 0, 0] = coeffs[..., 0, 0, 0]
        return mean

    def low_pass(self, coeffs, j):
        """S_j f = f̂(0) + Σ_{k ≤ j−1} Δ_k f"""
        ks = [k for k in range(self.j_min, min(j - 1, self.j_max) + 1)]
        symbol = np.sum([self.block(k) for k in ks], axis=0) if ks else 0.0
        return self.mean(coeffs) + symbol * coeffs

    def neighbourhood(self, coeffs, j):
        """Δ̃_j f = Σ_{|k−j| ≤ 1} Δ_k f"""
        ks = [k for k in (j - 1, j, j + 1) if self.j_min <= k <= self.j_max]
        return np.sum([self.block(k) for k in ks], axis=0) * coeffs

    def resolved_js(self):
        """Blocks whose whole annulus fits inside the dealias sphere"""
        limit = self.grid.dealias_radius
        return [int(j) for j in self.js if ANNULUS_OUTER * 2.0 ** j <= limit]

    def unity_residual(self):
        """max |Σ_j φ_j − 1| over nonzero lattice modes"""
        total = np.sum(self.blocks, axis=0)
        nonzero = self.grid.magnitude > 0.0
        return float(np.max(np.abs(total[nonzero] - 1.0)))

    def overlap_residual(self):
        """max |φ_j·φ_k| over pairs with |j−k| ≥ 2"""
        worst = 0.0
        for a in range(len(self.blocks)):
            for b in range(a + 2, len(self.blocks)):
                worst = max(worst, float(np.max(np.abs(self.blocks[a] * self.blocks[b]))))
        return worst


def build_lp_partition(grid):
    """Sample the dyadic blocks for every j whose annulus meets the lattice."""
    j_min = int(math.floor(math.log2(ANNULUS_INNER * grid.fundamental_wavenumber)))
    j_max = int(math.ceil(math.log2(grid.max_wavenumber / (2.0 * ANNULUS_INNER))))
    if j_max - j_min + 1 < 3:
        raise ValueError(f"grid {grid.describe()} resolves fewer than 3 dyadic shells")

    radius = grid.magnitude
    blocks = np.stack([
        radial_cutoff(radius * 2.0 ** (-j - 1)) - radial_cutoff(radius * 2.0 ** (-j))
        for j in range(j_min, j_max + 1)
    ])
    blocks[:, 0, 0, 0] = 0.0
    log_event(spaces_logger, 'DEBUG', 'Built Littlewood-Paley partition',
              grid=grid.describe(), j_min=j_min, j_max=j_max)
    return LPPartition(grid=grid, j_min=j_min, j_max=j_max, blocks=blocks)


def _magnitude(values):
    """Pointwise Euclidean magnitude of scalar (n,n,n) or vector (C,n,n,n) samples"""
    values = np.asarray(values)
    if values.ndim == 3:
        return np.abs(values)
    return np.sqrt(np.sum(np.abs(values) ** 2, axis=0))


def _check_morrey_indices(q, mu):
    if not 1.0 <= q < math.inf:
        raise ValueError(f"Morrey integrability must satisfy 1 <= q < inf, got {q}")
    if not 0.0 <= mu < 3.0:
        raise ValueError(f"Morrey weight must satisfy 0 <= mu < 3, got {mu}")


@lru_cache(maxsize=4)
def _ball_kernel_spectra(n):
    """rfft of ball indicators |k| < 2^m on a (2n)³ circular lattice, m = 0..log2(n)"""
    size = 2 * n
    offsets = np.rint(np.fft.fftfreq(size) * size)
    k = np.stack(np.meshgrid(offsets, offsets, offsets, indexing='ij'))
    dist2 = np.sum(k ** 2, axis=0)
    inside_window = np.all(np.abs(k) < n, axis=0)
    radii = [2 ** m for m in range(int(math.floor(math.log2(n))) + 1)]
    spectra = np.stack([
        scipy.fft.rfftn(((dist2 < radius * radius) & inside_window).astype(float))
        for radius in radii
    ])
    return np.asarray(radii, dtype=float), spectra


def _morrey_from_powers(powers, q, mu, grid):
    """
    Morrey norms of a stack of |f|^q arrays, shape (B, n, n, n) in lattice order.

    Ball sums over every lattice centre and every dyadic radius come from one
    padded circular convolution per radius.
    """
    cell = grid.cell_volume
    if mu == 0.0:
        return (np.sum(powers, axis=(-3, -2, -1)) * cell) ** (1.0 / q)

    n = grid.n_per_axis
    radii, spectra = _ball_kernel_spectra(n)
    centred = np.fft.fftshift(powers, axes=(-3, -2, -1))
    padded = np.zeros(powers.shape[:-3] + (2 * n,) * 3)
    padded[..., :n, :n, :n] = centred
    data_spectra = scipy.fft.rfftn(padded, axes=(-3, -2, -1))

    best = np.zeros(powers.shape[:-3])
    for radius, kernel in zip(radii, spectra):
        sums = scipy.fft.irfftn(data_spectra * kernel, s=(2 * n,) * 3, axes=(-3, -2, -1))
        sums = np.clip(sums[..., :n, :n, :n], 0.0, None)
        weight = (radius * grid.fundamental_wavenumber) ** (-mu)
        best = np.maximum(best, weight * np.max(sums, axis=(-3, -2, -1)))
    return (best * cell) ** (1.0 / q)


def morrey_norm(block_values, q, mu, grid):
    """
    Discrete Morrey norm over the frequency lattice.

    sup over lattice centres x₀ and radii d = 2^m·(2π/L) of
    d^{−μ/q}·(Σ_{|ξ−x₀|<d} |f(ξ)|^q·cell_volume)^{1/q}.
    """
    _check_morrey_indices(q, mu)
    powers = _magnitude(block_values) ** q
    return float(_morrey_from_powers(powers[None], q, mu, grid)[0])


def block_norms(coeffs, q, mu, partition, components=COMPONENTS):
    """
    Morrey norm of φ_j·f̂ for every j, shape (J,) (or (T, J) for stacked times).

    components is the size of the leading component axis, (C, n, n, n) or
    (T, C, n, n, n); None reads scalar samples (n, n, n) or (T, n, n, n).
    """
    _check_morrey_indices(q, mu)
    coeffs = np.asarray(coeffs)
    spatial = 3 if components is None else 4
    if coeffs.ndim not in (spatial, spatial + 1):
        raise ValueError(f"expected {spatial} or {spatial + 1} axes for components={components}, "
                         f"got shape {coeffs.shape}")
    if components is not None and coeffs.shape[-4] != components:
        raise ValueError(f"expected {components} components, got shape {coeffs.shape}")
    single = coeffs.ndim == spatial
    if single:
        coeffs = coeffs[None]
    if components is None:
        magnitude = np.abs(coeffs)
    else:
        magnitude = np.sqrt(np.sum(np.abs(coeffs) ** 2, axis=1))

    mag_q = magnitude ** q
    blocks_q = partition.blocks ** q
    if mu == 0.0:
        sums = np.tensordot(mag_q, blocks_q, axes=([1, 2, 3], [1, 2, 3]))
        norms = (sums * partition.grid.cell_volume) ** (1.0 / q)
    else:
        # one time slice at a time keeps the padded (2n)³ stack small
        norms = np.stack([
            _morrey_from_powers(slice_q[None] * blocks_q, q, mu, partition.grid)
            for slice_q in mag_q
        ])
    return norms[0] if single else norms


def combine_blocks(norms, s, r, js):
    """ℓ^r over j of 2^{js}·norms along the last axis"""
    weighted = np.asarray(norms) * 2.0 ** (s * np.asarray(js, dtype=float))
    if math.isinf(r):
        return np.max(weighted, axis=-1)
    return np.sum(weighted ** r, axis=-1) ** (1.0 / r)


def _coeffs_of(field):
    if isinstance(field, SpectralField4):
        return field.coeffs
    return np.asarray(field)


def fbm_norm(field, params, partition):
    """ℓ^r over j of 2^{js}·Morrey(φ_j f̂); r = ∞ takes the max"""
    if len(partition.js) == 0:
        raise ValueError("empty dyadic range")
    if isinstance(field, SpectralField4) and not field.grid.same_lattice(partition.grid):
        raise ValueError("field and partition live on different grids")
    norms = block_norms(_coeffs_of(field), params.q, params.mu, partition)
    return float(combine_blocks(norms, params.s, params.r, partition.js))


def _trajectory_arrays(trajectory, times=None):
    if hasattr(trajectory, 'coeffs') and hasattr(trajectory, 'times'):
        coeffs, grid_times = trajectory.coeffs, trajectory.times
    else:
        fields = list(trajectory)
        if not fields:
            raise ValueError("empty trajectory")
        coeffs = np.stack([_coeffs_of(f) for f in fields])
        grid_times = np.array([getattr(f, 'time', 0.0) for f in fields])
    times = grid_times if times is None else np.asarray(times, dtype=float)
    if len(coeffs) == 0:
        raise ValueError("empty trajectory")
    if len(times) != len(coeffs):
        raise ValueError(f"{len(times)} times for {len(coeffs)} fields")
    return coeffs, times


def time_reduce(norms, times, p):
    """Per-block L^p in time: max for p = ∞, trapezoid for p = 1"""
    if math.isinf(p):
        return np.max(norms, axis=0)
    if p == 1:
        return scipy.integrate.trapezoid(norms, x=times, axis=0)
    raise ValueError(f"Chemin-Lerner time exponent must be 1 or inf, got {p}")


def chemin_lerner_norm(trajectory, params, partition, times=None):
    """ℓ^r over j of 2^{js}·‖Morrey(φ_j v̂(t))‖_{L^p(0,T)}"""
    coeffs, times = _trajectory_arrays(trajectory, times)
    norms = block_norms(coeffs, params.q, params.mu, partition)
    return float(combine_blocks(time_reduce(norms, times, params.p), params.s, params.r, partition.js))


def xr_components(trajectory, params, alpha, partition, times=None):
    """(𝓛^∞(FN^s), 𝓛¹(FN^{s+2α})) parts of the solution norm"""
    coeffs, times = _trajectory_arrays(trajectory, times)
    norms = block_norms(coeffs, params.q, params.mu, partition)
    sup_part = combine_blocks(time_reduce(norms, times, math.inf), params.s, params.r, partition.js)
    int_part = combine_blocks(time_reduce(norms, times, 1), params.s + 2.0 * alpha, params.r, partition.js)
    return float(sup_part), float(int_part)


def xr_norm(trajectory, params, alpha, partition, times=None):
    """Solution-space norm 𝓛^∞(FN^s) + 𝓛¹(FN^{s+2α}) on the sampled horizon"""
    return sum(xr_components(trajectory, params, alpha, partition, times))


def make_homogeneous_data(degree, params, grid, partition=None, direction=None, amplitude=1.0,
                          band=None, tolerance=1e-12):
    """
    Divergence-free field with coefficients amplitude·|ξ|^{−degree−3}·P̃(ξ)a.

    The profile is cut off with Σ φ_j over band = (j_lo, j_hi); by default
    every block fully inside the dealias sphere, so the cutoff follows the
    resolution.
    """
    expected = params.s - 3.0 + (3.0 - params.mu) / params.q
    if not math.isclose(degree, expected, rel_tol=0.0, abs_tol=tolerance):
        raise ValueError(f"incompatible degree {degree}: indices require {expected:.12g}")
    partition = partition or build_lp_partition(grid)

    if band is None:
        resolved = partition.resolved_js()
        if not resolved:
            raise ValueError(f"grid {grid.describe()} resolves no complete dyadic block")
        band = (partition.j_min, resolved[-1])
    j_lo, j_hi = band
    cutoff = np.zeros(grid.shape)
    for j in range(max(j_lo, partition.j_min), min(j_hi, partition.j_max) + 1):
        cutoff += partition.block(j)

    k = -degree
    radius = grid.magnitude
    profile = np.zeros(grid.shape)
    nonzero = radius > 0.0
    profile[nonzero] = radius[nonzero] ** (k - 3.0)

    direction = np.array([1.0, -1.0, 0.5, 0.5] if direction is None else direction, dtype=float)
    coeffs = amplitude * (profile * cutoff)[None] * direction[:, None, None, None]
    coeffs = helmholtz_project(coeffs, grid.wavenumbers)
    coeffs = np.where(grid.dealias_mask, coeffs, 0.0)
    return SpectralField4(grid=grid, coeffs=coeffs, real_valued=True)


def random_solenoidal_field(grid, band_index, seed, amplitude=1.0, include_theta=True):
    """
    Seeded real divergence-free data on |m| ≤ band_index, scaled so the
    largest coefficient magnitude equals amplitude.

    The draw is per lattice index, so every grid resolving the band gets the
    same coefficients.
    """
    coeffs = random_band_limited(grid, band_index, seed)
    if not include_theta:
        coeffs[3] = 0.0
    coeffs[:, 0, 0, 0] = 0.0
    coeffs = helmholtz_project(coeffs, grid.wavenumbers)
    peak = float(np.max(np.sqrt(np.sum(np.abs(coeffs) ** 2, axis=0))))
    if peak > 0.0:
        coeffs = coeffs * (amplitude / peak)
    return SpectralField4(grid=grid, coeffs=coeffs, real_valued=True)


def dilate_field(field, exponent, factor=2):
    """
    Lattice-compatible dilation f(x) -> factor^exponent·f(factor·x).

    The result lives on the same box with factor times the resolution:
    c′(factor·m) = factor^exponent·c(m).
    """
    from .grid import make_grid

    factor = int(factor)
    if factor < 2:
        raise ValueError(f"dilation factor must be an integer >= 2, got {factor}")
    grid = field.grid
    fine = make_grid(grid.n_per_axis * factor, grid.box_length)
    n_fine = fine.n_per_axis
    target = tuple((factor * grid.index_vectors[axis]) % n_fine for axis in range(3))
    coeffs = np.zeros((field.coeffs.shape[0],) + fine.shape, dtype=np.complex128)
    coeffs[(slice(None),) + target] = float(factor) ** exponent * field.coeffs
    return SpectralField4(grid=fine, coeffs=coeffs, real_valued=field.real_valued, time=field.time)


def sobolev_norm(field, sigma=0.0):
    """Discrete homogeneous H^σ norm; σ = 0 is the L² norm by Parseval"""
    grid = field.grid
    if sigma < 0.0:
        raise ValueError(f"Sobolev index must be nonnegative, got {sigma}")
    weight = grid.magnitude ** (2.0 * sigma) if sigma > 0.0 else np.ones(grid.shape)
    energy = np.sum(weight * np.sum(np.abs(field.coeffs) ** 2, axis=0))
    return float(np.sqrt(grid.box_length ** 3 * energy))


def hoelder_ratio(f, g, q1, mu1, q2, mu2, grid):
    """‖fg‖_{q₃,μ₃} / (‖f‖_{q₁,μ₁}·‖g‖_{q₂,μ₂}) with 1/q₃ = 1/q₁+1/q₂, μ₃/q₃ = μ₁/q₁+μ₂/q₂"""
    q3 = 1.0 / (1.0 / q1 + 1.0 / q2)
    mu3 = q3 * (mu1 / q1 + mu2 / q2)
    if q3 < 1.0:
        raise ValueError(f"product integrability q3={q3} is below 1")
    denominator = morrey_norm(f, q1, mu1, grid) * morrey_norm(g, q2, mu2, grid)
    if denominator == 0.0:
        return 0.0
    product = _magnitude(f) * _magnitude(g)
    return morrey_norm(product, q3, mu3, grid) / denominator


def discrete_gaussian(width, radius, grid):
    """Odd-sized Gaussian kernel on lattice offsets |k_i| ≤ radius, Σ φ·cell = 1"""
    k = np.arange(-radius, radius + 1, dtype=float)
    k = np.stack(np.meshgrid(k, k, k, indexing='ij'))
    kernel = np.exp(-np.sum(k ** 2, axis=0) / (2.0 * width ** 2))
    return kernel / (np.sum(kernel) * grid.cell_volume)


def young_ratio(kernel, values, q, mu, grid):
    """‖φ∗g‖_{q,μ} / (‖φ‖_{L¹}·‖g‖_{q,μ}) with the lattice convolution"""
    if any(size % 2 == 0 for size in kernel.shape):
        raise ValueError("convolution kernel must have odd size on every axis")
    denominator = np.sum(np.abs(kernel)) * grid.cell_volume * morrey_norm(values, q, mu, grid)
    if denominator == 0.0:
        return 0.0
    centred = np.fft.fftshift(values, axes=(-3, -2, -1))
    smoothed = scipy.signal.fftconvolve(centred, kernel, mode='same') * grid.cell_volume
    smoothed = np.fft.ifftshift(smoothed, axes=(-3, -2, -1))
    return morrey_norm(smoothed, q, mu, grid) / denominator


def bernstein_ratio(values, j, beta, q1, mu1, q2, mu2, grid):
    """‖ξ^β f‖_{q₂,μ₂} / (2^{j|β| + j((3−μ₂)/q₂ − (3−μ₁)/q₁)}·‖f‖_{q₁,μ₁}) for f in block j"""
    monomial = np.ones(grid.shape)
    for axis, power in enumerate(beta):
        monomial = monomial * grid.wavenumbers[axis] ** power
    order = sum(beta)
    scale = 2.0 ** (j * order + j * ((3.0 - mu2) / q2 - (3.0 - mu1) / q1))
    denominator = scale * morrey_norm(values, q1, mu1, grid)
    if denominator == 0.0:
        return 0.0
    return morrey_norm(monomial * values, q2, mu2, grid) / denominator


def embedding_ratio(field, source, target, partition):
    """‖f‖_{FN^{s₂}_{q₂,μ₂,r₂}} / ‖f‖_{FN^{s₁}_{q₁,μ₁,r₁}} for an admissible embedding pair"""
    if not math.isclose(source.scaling_index, target.scaling_index, rel_tol=0.0, abs_tol=1e-12):
        raise ValueError("embedding needs s2 + (3-mu2)/q2 == s1 + (3-mu1)/q1")
    if target.q > source.q or source.r > target.r:
        raise ValueError("embedding needs q2 <= q1 and r1 <= r2")
    denominator = fbm_norm(field, source, partition)
    if denominator == 0.0:
        return 0.0
    return fbm_norm(field, target, partition) / denominator


def norm_record(kind, params, value, partition):
    """JSON-lines record of one computed norm"""
    r = params.r
    return {
        'record_type': 'norm',
        'norm_kind': kind,
        's': params.s,
        'q': params.q,
        'mu': params.mu,
        'r': 'inf' if math.isinf(r) else r,
        'p': 'inf' if math.isinf(params.p) else params.p,
        'value': value,
        'grid': partition.grid.describe(),
        'j_range': [partition.j_min, partition.j_max],
        'r_convention': 'sup' if math.isinf(r) else 'sum',
    }
