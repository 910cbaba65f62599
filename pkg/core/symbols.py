# symbols.py
# Per-wavenumber multipliers of the linearised rotating stratified system
#
# Every function is vectorised: xi has shape (..., 3) and 4x4 symbols come
# back with shape (..., 4, 4).

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .logging import setup_logger, log_event

symbols_logger = setup_logger('symbols', 'solver.log')

CONVENTIONS = ('corrected', 'literal')
# sign of the sin·M2 term; the literal closed form rotates the wrong way
ROTATION_SIGNS = {'corrected': -1.0, 'literal': 1.0}
ORIENTATIONS = ('forward', 'reverse')


class ClosedFormUnavailableError(ValueError):
    """The closed-form semigroup only exists for equal viscosity and diffusivity."""


class PhysParams(BaseModel):
    """Physical constants ν, k, g, Ω, 𝒩, α with derived N and L."""

    model_config = ConfigDict(frozen=True)

    nu: float = Field(gt=0.0)
    kappa: float = Field(gt=0.0)
    gravity: float = Field(gt=0.0)
    omega: float
    brunt: float = Field(gt=0.0)
    alpha: float = Field(ge=0.5, lt=2.5)

    @field_validator('omega')
    @classmethod
    def _nonzero_omega(cls, value):
        if value == 0:
            raise ValueError("omega must be nonzero for the stratified rotating system")
        return value

    @property
    def N(self):
        return self.brunt * np.sqrt(self.gravity)

    @property
    def L(self):
        return coupling_bound_L(self)

    @property
    def in_uniform_band(self):
        """True when 𝒩√g/2 ≤ |Ω| ≤ 2𝒩√g, i.e. L = 2."""
        return self.N / 2.0 <= abs(self.omega) <= 2.0 * self.N


def require_closed_form(params):
    if params.nu != params.kappa:
        raise ClosedFormUnavailableError(
            f"closed form unavailable: needs nu == kappa (nu={params.nu}, kappa={params.kappa})")


def _as_xi(xi):
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != 3:
        raise ValueError(f"wavenumbers must have a trailing axis of length 3, got {xi.shape}")
    return xi


def _require_nonzero(xi):
    if np.any(np.sum(xi ** 2, axis=-1) == 0.0):
        raise ValueError("symbol is singular at xi = 0")


def xi_prime(xi, params):
    """|ξ|′ = √(N²ξ₁² + N²ξ₂² + Ω²ξ₃²)"""
    xi = _as_xi(xi)
    N = params.N
    return np.sqrt(N ** 2 * (xi[..., 0] ** 2 + xi[..., 1] ** 2) + params.omega ** 2 * xi[..., 2] ** 2)


def coupling_bound_L(params):
    if params.omega == 0:
        raise ValueError("coupling bound divides by |omega|; omega = 0 is not allowed")
    ratio = abs(params.omega) / params.N
    return max(2.0, ratio, 1.0 / ratio)


def _safe_inverse(values):
    return np.divide(1.0, values, out=np.zeros_like(values), where=values > 0.0)


def semigroup_components(xi, params, convention='corrected'):
    """
    Return (M1, M2, M3, frequency) with frequency = |ξ|′/|ξ|.

    The zero mode gets M1 = M2 = 0 and M3 = I so that it only decays.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown matrix convention: {convention}")
    xi = _as_xi(xi)
    x1, x2, x3 = xi[..., 0], xi[..., 1], xi[..., 2]
    W, N = params.omega, params.N

    norm = np.sqrt(x1 ** 2 + x2 ** 2 + x3 ** 2)
    prime = xi_prime(xi, params)
    inv_p2 = _safe_inverse(prime ** 2)
    inv_np = _safe_inverse(norm * prime)
    zero = np.zeros_like(x1)
    horizontal = x1 ** 2 + x2 ** 2

    M1 = inv_p2[..., None, None] * np.stack([
        np.stack([W ** 2 * x3 ** 2, zero, -N ** 2 * x1 * x3, W * N * x2 * x3], axis=-1),
        np.stack([zero, W ** 2 * x3 ** 2, -N ** 2 * x2 * x3, -W * N * x1 * x3], axis=-1),
        np.stack([-W ** 2 * x1 * x3, -W ** 2 * x2 * x3, N ** 2 * horizontal, zero], axis=-1),
        np.stack([W * N * x2 * x3, -W * N * x1 * x3, zero, N ** 2 * horizontal], axis=-1),
    ], axis=-2)

    m2_14 = N * x1 * x2 if convention == 'literal' else N * x1 * x3
    M2 = inv_np[..., None, None] * np.stack([
        np.stack([zero, -W * x3 ** 2, W * x2 * x3, m2_14], axis=-1),
        np.stack([W * x3 ** 2, zero, -W * x1 * x3, N * x2 * x3], axis=-1),
        np.stack([-W * x2 * x3, W * x1 * x3, zero, -N * horizontal], axis=-1),
        np.stack([-N * x1 * x3, -N * x2 * x3, N * horizontal, zero], axis=-1),
    ], axis=-2)

    m3_22 = N * x1 ** 2 if convention == 'literal' else N ** 2 * x1 ** 2
    M3 = inv_p2[..., None, None] * np.stack([
        np.stack([N ** 2 * x2 ** 2, -N ** 2 * x1 * x2, zero, -W * N * x2 * x3], axis=-1),
        np.stack([-N ** 2 * x1 * x2, m3_22, zero, W * N * x1 * x3], axis=-1),
        np.stack([zero, zero, zero, zero], axis=-1),
        np.stack([-W * N * x2 * x3, W * N * x1 * x3, zero, W ** 2 * x3 ** 2], axis=-1),
    ], axis=-2)

    at_origin = norm == 0.0
    if np.any(at_origin):
        M3 = np.where(at_origin[..., None, None], np.eye(4), M3)

    frequency = prime * _safe_inverse(norm)
    return M1, M2, M3, frequency


def matrix_M(l, xi, params, convention='corrected'):
    """M_l(ξ) for l in 1..3"""
    if l not in (1, 2, 3):
        raise ValueError(f"matrix index must be 1, 2 or 3, got {l}")
    xi = _as_xi(xi)
    _require_nonzero(xi)
    return semigroup_components(xi, params, convention)[l - 1]


def helmholtz_symbol(xi):
    """Extended Helmholtz projection: δ_mk − ξ_mξ_k/|ξ|² on velocity, identity on b"""
    xi = _as_xi(xi)
    _require_nonzero(xi)
    return _helmholtz(xi)


def _helmholtz(xi):
    norm2 = np.sum(xi ** 2, axis=-1)
    inv = _safe_inverse(norm2)
    P = np.broadcast_to(np.eye(4), xi.shape[:-1] + (4, 4)).copy()
    P[..., :3, :3] -= xi[..., :, None] * xi[..., None, :] * inv[..., None, None]
    return P


def helmholtz_project(coeffs, wavenumbers):
    """
    Apply the extended projection to lattice coefficients.

    coeffs has shape (4, ...) (or (3, ...) for velocity only) and wavenumbers
    shape (3, ...); the zero mode is left unchanged.
    """
    norm2 = np.sum(wavenumbers ** 2, axis=0)
    inv = _safe_inverse(norm2)
    divergence = np.sum(wavenumbers * coeffs[:3], axis=0)
    projected = np.array(coeffs, dtype=np.complex128, copy=True)
    projected[:3] -= wavenumbers * (divergence * inv)
    return projected


def rotation_generator(params):
    """Skew coupling matrix ℬ with N = 𝒩√g"""
    W, N = params.omega, params.N
    return np.array([
        [0.0, -W, 0.0, 0.0],
        [W, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, -N],
        [0.0, 0.0, N, 0.0],
    ])


def dissipation_rate(xi, params):
    xi = _as_xi(xi)
    return params.nu * np.sum(xi ** 2, axis=-1) ** params.alpha


def rotation_sign(convention):
    """Sign carried by the sin·M2 term: −1 for 'corrected', +1 for 'literal'"""
    if convention not in ROTATION_SIGNS:
        raise ValueError(f"unknown matrix convention: {convention}")
    return ROTATION_SIGNS[convention]


def semigroup_symbol(xi, t, params, convention='corrected'):
    """
    e^{−νt|ξ|^{2α}}·[cos(ωt)·M1 ∓ sin(ωt)·M2 + M3] with ω = |ξ|′/|ξ|.

    With the corrected convention this is exp(t(−ν|ξ|^{2α}·I − P̃ℬ)) on
    divergence-free vectors; the literal convention keeps +sin.
    """
    require_closed_form(params)
    xi = _as_xi(xi)
    _require_nonzero(xi)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("semigroup time must be nonnegative")
    M1, M2, M3, frequency = semigroup_components(xi, params, convention)
    decay = np.exp(-t * dissipation_rate(xi, params))
    phase = frequency * t
    return (decay * np.cos(phase))[..., None, None] * M1 \
        + (rotation_sign(convention) * decay * np.sin(phase))[..., None, None] * M2 \
        + decay[..., None, None] * M3


def linear_generator(xi, params, orientation='forward'):
    """
    Projected linear generator −ν|ξ|^{2α}·I ∓ P̃(ξ)·ℬ.

    'forward' is −P̃ℬ, the system ∂ₜv + 𝒜v + ℬv = 0; 'reverse' flips the
    coupling sign.
    """
    if orientation not in ORIENTATIONS:
        raise ValueError(f"unknown orientation: {orientation}")
    xi = _as_xi(xi)
    sign = -1.0 if orientation == 'forward' else 1.0
    coupling = _helmholtz(xi) @ rotation_generator(params)
    return -dissipation_rate(xi, params)[..., None, None] * np.eye(4) + sign * coupling


def matrix_exponential_oracle(xi, t, params, orientation='forward'):
    """exp(t·A(ξ)) by dense scaling-and-squaring (scipy.linalg.expm)"""
    require_closed_form(params)
    xi = _as_xi(xi)
    _require_nonzero(xi)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("semigroup time must be nonnegative")
    generator = t[..., None, None] * linear_generator(xi, params, orientation)
    return scipy.linalg.expm(generator)


def coriolis_matrix(xi):
    """M̂(ξ), the antisymmetric 3x3 matrix of the Stokes-Coriolis semigroup"""
    xi = _as_xi(xi)
    x1, x2, x3 = xi[..., 0], xi[..., 1], xi[..., 2]
    inv = _safe_inverse(np.sqrt(x1 ** 2 + x2 ** 2 + x3 ** 2))
    zero = np.zeros_like(x1)
    return inv[..., None, None] * np.stack([
        np.stack([zero, x3, -x2], axis=-1),
        np.stack([-x3, zero, x1], axis=-1),
        np.stack([x2, -x1, zero], axis=-1),
    ], axis=-2)


def stokes_coriolis_symbol(xi, t, omega, nu, alpha):
    """e^{−νt|ξ|^{2α}}[cos(Ωξ₃t/|ξ|)·I + sin(Ωξ₃t/|ξ|)·M̂(ξ)]"""
    xi = _as_xi(xi)
    _require_nonzero(xi)
    if nu <= 0:
        raise ValueError("nu must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("semigroup time must be nonnegative")
    norm = np.sqrt(np.sum(xi ** 2, axis=-1))
    decay = np.exp(-nu * t * norm ** (2.0 * alpha))
    phase = omega * xi[..., 2] * t / norm
    return (decay * np.cos(phase))[..., None, None] * np.eye(3) \
        + (decay * np.sin(phase))[..., None, None] * coriolis_matrix(xi)


def log_convention(convention):
    """Record which matrix entries a run uses"""
    if convention == 'literal':
        log_event(symbols_logger, 'WARN', 'Using literal matrix entries; closed form will not match the oracle',
                  convention=convention)
    else:
        log_event(symbols_logger, 'DEBUG', 'Using corrected matrix entries', convention=convention)
