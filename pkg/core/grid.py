"""
Periodic-box discretization for the Boussinesq lab.

The continuous frequency space is replaced by the lattice (2π/L)·ℤ³ of a
periodic box of side L with n points per axis. Coefficients follow the
plane-wave convention: e^{iξ₀·x} sampled on the grid maps to a single unit
coefficient at ξ₀, so the forward transform is fftn / n³.

Fields carry four components (u1, u2, u3, b) with b = √g·θ/𝒩; scalar helpers
operate on any array whose last three axes are the lattice.
"""

from functools import cached_property

import numpy as np
import scipy.fft
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .logging import setup_logger, log_event

grid_logger = setup_logger('grid', 'solver.log')

LATTICE_AXES = (-3, -2, -1)
COMPONENTS = 4


class GridMismatchError(ValueError):
    """Raised when two fields do not share the same lattice."""


class GridSpec(BaseModel):
    """Cubic periodic lattice with n_per_axis points per side."""

    model_config = ConfigDict(frozen=True)

    n_per_axis: int = Field(ge=4, description="Points per axis (power of two recommended)")
    box_length: float = Field(gt=0.0, description="Period of the box")

    @property
    def spacing(self):
        return self.box_length / self.n_per_axis

    @property
    def fundamental_wavenumber(self):
        return 2.0 * np.pi / self.box_length

    @property
    def shape(self):
        return (self.n_per_axis,) * 3

    @property
    def n_points(self):
        return self.n_per_axis ** 3

    @property
    def cell_volume(self):
        """Volume of one frequency-lattice cell."""
        return self.fundamental_wavenumber ** 3

    @property
    def max_wavenumber(self):
        """Largest resolved |ξ| (corner of the index cube)."""
        return np.sqrt(3.0) * np.pi * self.n_per_axis / self.box_length

    @property
    def dealias_index(self):
        return self.n_per_axis // 3

    @property
    def dealias_radius(self):
        return self.dealias_index * self.fundamental_wavenumber

    @cached_property
    def index_vectors(self):
        """Integer lattice index m per mode, shape (3, n, n, n)."""
        m = np.rint(np.fft.fftfreq(self.n_per_axis) * self.n_per_axis).astype(np.int64)
        return np.stack(np.meshgrid(m, m, m, indexing='ij'))

    @cached_property
    def wavenumbers(self):
        """Wavenumber vectors ξ = (2π/L)·m, shape (3, n, n, n)."""
        return self.fundamental_wavenumber * self.index_vectors.astype(float)

    @cached_property
    def magnitude(self):
        return np.sqrt(np.sum(self.wavenumbers ** 2, axis=0))

    @cached_property
    def dealias_mask(self):
        return np.all(np.abs(self.index_vectors) <= self.dealias_index, axis=0)

    @cached_property
    def coordinates(self):
        """Physical sample points, shape (3, n, n, n)."""
        x = np.arange(self.n_per_axis) * self.spacing
        return np.stack(np.meshgrid(x, x, x, indexing='ij'))

    def same_lattice(self, other):
        return (self.n_per_axis == other.n_per_axis
                and np.isclose(self.box_length, other.box_length, rtol=1e-14, atol=0.0))

    def describe(self):
        return f"{self.n_per_axis}^3/L={self.box_length:.6g}"


class SpectralField4(BaseModel):
    """Four-component coefficients (u1, u2, u3, b) on a GridSpec lattice."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: GridSpec
    coeffs: np.ndarray = Field(description="Complex coefficients, shape (4, n, n, n)")
    real_valued: bool = Field(default=False, description="Conjugate-symmetric coefficients")
    time: float = Field(default=0.0, ge=0.0)

    @field_validator('coeffs')
    @classmethod
    def _freeze_coeffs(cls, value):
        coeffs = np.array(value, dtype=np.complex128, copy=True)
        coeffs.setflags(write=False)
        return coeffs

    @model_validator(mode='after')
    def _check_shape(self):
        expected = (COMPONENTS,) + self.grid.shape
        if self.coeffs.shape != expected:
            raise ValueError(f"coefficient shape {self.coeffs.shape} does not match grid {expected}")
        return self

    def with_coeffs(self, coeffs, time=None, real_valued=None):
        return SpectralField4(
            grid=self.grid,
            coeffs=coeffs,
            real_valued=self.real_valued if real_valued is None else real_valued,
            time=self.time if time is None else time,
        )

    def __add__(self, other):
        require_same_grid(self, other)
        return self.with_coeffs(self.coeffs + other.coeffs,
                                real_valued=self.real_valued and other.real_valued)

    def __sub__(self, other):
        require_same_grid(self, other)
        return self.with_coeffs(self.coeffs - other.coeffs,
                                real_valued=self.real_valued and other.real_valued)

    def scaled(self, factor):
        real = self.real_valued and np.isrealobj(factor)
        return self.with_coeffs(factor * self.coeffs, real_valued=real)

    def max_magnitude(self):
        return float(np.max(np.sqrt(np.sum(np.abs(self.coeffs) ** 2, axis=0))))

    def divergence_residual(self):
        """max |ξ·(c1,c2,c3)| / max(1, field magnitude)."""
        div = np.abs(np.sum(self.grid.wavenumbers * self.coeffs[:3], axis=0))
        return float(np.max(div)) / max(1.0, self.max_magnitude())

    def conjugate_asymmetry(self):
        """max |c(−ξ) − conj(c(ξ))|, zero for real physical fields."""
        return float(np.max(np.abs(reflect(self.coeffs) - np.conj(self.coeffs))))


def require_same_grid(*fields):
    first = fields[0].grid
    for field in fields[1:]:
        if not first.same_lattice(field.grid):
            raise GridMismatchError(
                f"fields live on different grids: {first.describe()} vs {field.grid.describe()}")


def make_grid(n_per_axis, box_length):
    """Build a GridSpec, rejecting discretizations that cannot be used."""
    if n_per_axis < 4:
        raise ValueError(f"n_per_axis must be at least 4, got {n_per_axis}")
    if box_length <= 0:
        raise ValueError(f"box_length must be positive, got {box_length}")
    grid = GridSpec(n_per_axis=int(n_per_axis), box_length=float(box_length))
    if n_per_axis % 3 == 0:
        # 3·floor(n/3) = n lets a wrapped product mode land back inside the mask
        log_event(grid_logger, 'WARN', 'Dealiasing is not exact when n is a multiple of 3',
                  n_per_axis=n_per_axis)
    return grid


def reflect(array):
    """Return a(−ξ) for lattice arrays (last three axes)."""
    return np.roll(np.flip(array, axis=LATTICE_AXES), 1, axis=LATTICE_AXES)


def to_spectral(samples):
    """Plane-wave normalised forward DFT over the last three axes."""
    n_points = np.prod(np.shape(samples)[-3:])
    return scipy.fft.fftn(samples, axes=LATTICE_AXES) / n_points


def to_physical(coeffs):
    n_points = np.prod(np.shape(coeffs)[-3:])
    return scipy.fft.ifftn(coeffs, axes=LATTICE_AXES) * n_points


def forward_transform(samples, grid, real_valued=None, time=0.0):
    """Physical 4-vector samples -> SpectralField4."""
    samples = np.asarray(samples)
    expected = (COMPONENTS,) + grid.shape
    if samples.shape != expected:
        raise ValueError(f"sample shape {samples.shape} does not match grid {expected}")
    if real_valued is None:
        real_valued = bool(np.isrealobj(samples))
    return SpectralField4(grid=grid, coeffs=to_spectral(samples), real_valued=real_valued, time=time)


def inverse_transform(field):
    """SpectralField4 -> physical samples (real array when the field is real)."""
    samples = to_physical(field.coeffs)
    if field.real_valued:
        return samples.real
    return samples


def dealias_coeffs(coeffs, grid):
    return np.where(grid.dealias_mask, coeffs, 0.0)


def dealias(field):
    """Zero every mode outside the 2/3-rule mask."""
    return field.with_coeffs(dealias_coeffs(field.coeffs, field.grid))


def dealiased_product(a, b, grid):
    """Pseudo-spectral product of two dealiased coefficient arrays."""
    product = to_spectral(to_physical(a) * to_physical(b))
    return dealias_coeffs(product, grid)


def direct_convolution(a, b, grid):
    """
    Truncated convolution Σ_{p+q=ξ} a(p)·b(q) by explicit summation.

    O(M²) in the number of retained modes; only used as an oracle for the
    pseudo-spectral products on small grids.
    """
    a = dealias_coeffs(a, grid)
    b = dealias_coeffs(b, grid)
    result = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=np.complex128)
    for index in zip(*np.nonzero(np.abs(a) > 0.0)):
        shift = tuple(int(m) for m in grid.index_vectors[(slice(None),) + index])
        # roll stays exact on the mask because wrapped indices land outside it
        result = result + a[index] * np.roll(b, shift, axis=LATTICE_AXES)
    return dealias_coeffs(result, grid)


def random_band_limited(grid, band_index, seed, components=COMPONENTS, real=True):
    """
    Unit-variance complex Gaussian coefficients on |m| ≤ band_index.

    Draws are made on the canonical index cube [−band, band]³ and then placed
    on the lattice, so one seed gives the same samples on every grid that
    resolves the band.
    """
    if band_index > grid.dealias_index:
        raise ValueError(f"band index {band_index} exceeds dealias index {grid.dealias_index}")
    rng = np.random.default_rng(seed)
    width = 2 * band_index + 1
    canon = (rng.standard_normal((components, width, width, width))
             + 1j * rng.standard_normal((components, width, width, width))) / np.sqrt(2.0)

    m = grid.index_vectors
    inside = np.all(np.abs(m) <= band_index, axis=0) & (np.sum(m ** 2, axis=0) <= band_index ** 2)
    coeffs = np.zeros((components,) + grid.shape, dtype=np.complex128)
    mi = [m[axis][inside] + band_index for axis in range(3)]
    coeffs[:, inside] = canon[:, mi[0], mi[1], mi[2]]
    if real:
        coeffs = 0.5 * (coeffs + np.conj(reflect(coeffs)))
    return coeffs
