# solver.py
# Mild-solution machinery: propagators, the nonlinear term, the Duhamel
# bilinear operator, Picard iteration and an exponential time stepper

import math
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .grid import (GridSpec, SpectralField4, dealias_coeffs, require_same_grid,
                   to_physical, to_spectral)
from .symbols import (PhysParams, coriolis_matrix, helmholtz_project, log_convention, require_closed_form,
                      rotation_sign, semigroup_components)
from .spaces import build_lp_partition, fbm_norm, xr_components, xr_norm
from .config import TOLERANCES
from .logging import setup_logger, log_event

solver_logger = setup_logger('solver', 'solver.log')

STEP_METHODS = ('euler', 'heun')


class PicardDivergenceError(RuntimeError):
    """Picard iteration left the contraction regime; carries the ContractionReport."""

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


class Trajectory(BaseModel):
    """Fields sampled on an increasing time grid starting at 0."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: GridSpec
    times: np.ndarray
    coeffs: np.ndarray = Field(description="Stacked coefficients, shape (T, 4, n, n, n)")
    real_valued: bool = False
    params: Optional[PhysParams] = None

    @model_validator(mode='after')
    def _check_layout(self):
        times = self.times
        if times.ndim != 1 or len(times) == 0:
            raise ValueError("trajectory needs a nonempty 1-d time grid")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0.0):
            raise ValueError("trajectory times must start at 0 and increase strictly")
        expected = (len(times), 4) + self.grid.shape
        if self.coeffs.shape != expected:
            raise ValueError(f"trajectory coefficients {self.coeffs.shape} do not match {expected}")
        return self

    def __len__(self):
        return len(self.times)

    @property
    def horizon(self):
        return float(self.times[-1])

    def field(self, index):
        return SpectralField4(grid=self.grid, coeffs=self.coeffs[index],
                              real_valued=self.real_valued, time=float(self.times[index]))

    @property
    def final(self):
        return self.field(-1)

    def with_coeffs(self, coeffs, real_valued=None):
        return Trajectory(grid=self.grid, times=self.times, coeffs=coeffs,
                          real_valued=self.real_valued if real_valued is None else real_valued,
                          params=self.params)

    def _check_compatible(self, other):
        if not self.grid.same_lattice(other.grid):
            require_same_grid(self.field(0), other.field(0))
        if not np.array_equal(self.times, other.times):
            raise ValueError("trajectories use different time grids")

    def __add__(self, other):
        self._check_compatible(other)
        return self.with_coeffs(self.coeffs + other.coeffs, self.real_valued and other.real_valued)

    def __sub__(self, other):
        self._check_compatible(other)
        return self.with_coeffs(self.coeffs - other.coeffs, self.real_valued and other.real_valued)

    def scaled(self, factor):
        return self.with_coeffs(factor * self.coeffs, self.real_valued and np.isrealobj(factor))

    def divergence_residual(self):
        """Largest relative |ξ·û| over all saved times"""
        return max(self.field(i).divergence_residual() for i in range(len(self)))

    def conjugate_asymmetry(self):
        return max(self.field(i).conjugate_asymmetry() for i in range(len(self)))


class ContractionReport(BaseModel):
    """Outcome of one Picard solve."""

    y_norm: float
    K_emp: float
    iterates: List[float] = Field(default_factory=list, description="Distances of successive iterates")
    ratios: List[float] = Field(default_factory=list)
    converged: bool = False
    final_norm: float = math.nan
    tolerance: float
    residual: float = math.nan
    tail_bound: float = math.nan
    horizon: float
    steps: int

    @property
    def iterations(self):
        return len(self.iterates)

    @property
    def smallness(self):
        """4·K_emp·‖y‖, below 1 inside the contraction regime"""
        return 4.0 * self.K_emp * self.y_norm

    @property
    def epsilon_threshold(self):
        return math.inf if self.K_emp == 0 else 1.0 / (4.0 * self.K_emp)

    def bound_holds(self, slack=1e-6):
        """‖v‖ ≤ 2·‖y‖ up to a relative slack"""
        return self.final_norm <= 2.0 * self.y_norm * (1.0 + slack)


class SpectralPropagator:
    """
    Per-mode propagator e^{−rate·t}[cos(ωt)·M1 + sin(ωt)·M2 + M3].

    Both the stratified rotating semigroup and the Stokes-Coriolis semigroup
    take this form; subclasses only supply the matrices.
    """

    label = 'spectral'

    def __init__(self, grid, M1, M2, M3, frequency, rate):
        self.grid = grid
        self.M1, self.M2, self.M3 = M1, M2, M3
        self.frequency = frequency
        self.rate = rate
        self._symbols = {}

    def symbol(self, t):
        key = float(t)
        if key < 0.0:
            raise ValueError("semigroup time must be nonnegative")
        if key not in self._symbols:
            if len(self._symbols) > 8:
                self._symbols.clear()
            decay = np.exp(-self.rate * key)
            phase = self.frequency * key
            self._symbols[key] = ((decay * np.cos(phase))[..., None, None] * self.M1
                                  + (decay * np.sin(phase))[..., None, None] * self.M2
                                  + decay[..., None, None] * self.M3)
        return self._symbols[key]

    def apply(self, coeffs, t):
        """S(t) applied to (4, n, n, n) coefficients"""
        return np.einsum('xyzab,bxyz->axyz', self.symbol(t), coeffs)

    def integrate(self, coeffs, t):
        """∫₀ᵗ S(σ)dσ applied to coefficients (exact per-mode integrals)"""
        a, w = self.rate, self.frequency
        t = float(t)
        denom = a ** 2 + w ** 2
        safe = np.where(denom > 0.0, denom, 1.0)
        decay = np.exp(-a * t)
        cos_part = np.where(denom > 0.0, (a - decay * (a * np.cos(w * t) - w * np.sin(w * t))) / safe, t)
        sin_part = np.where(denom > 0.0, (w - decay * (a * np.sin(w * t) + w * np.cos(w * t))) / safe, 0.0)
        plain = np.where(a > 0.0, -np.expm1(-a * t) / np.where(a > 0.0, a, 1.0), t)
        weights = (cos_part[..., None, None] * self.M1 + sin_part[..., None, None] * self.M2
                   + plain[..., None, None] * self.M3)
        return np.einsum('xyzab,bxyz->axyz', weights, coeffs)


class BoussinesqPropagator(SpectralPropagator):
    """Closed-form semigroup of the stratified rotating linear system (ν = k)."""

    label = 'boussinesq'

    def __init__(self, grid, params, convention='corrected'):
        require_closed_form(params)
        xi = np.moveaxis(grid.wavenumbers, 0, -1)
        M1, M2, M3, frequency = semigroup_components(xi, params, convention)
        rate = params.nu * grid.magnitude ** (2.0 * params.alpha)
        super().__init__(grid, M1, rotation_sign(convention) * M2, M3, frequency, rate)
        self.params = params
        self.convention = convention
        log_convention(convention)


class StokesCoriolisPropagator(SpectralPropagator):
    """Stokes-Coriolis semigroup on velocity; the fourth component only decays."""

    label = 'stokes_coriolis'

    def __init__(self, grid, omega, nu, alpha):
        if nu <= 0:
            raise ValueError("nu must be positive")
        xi = np.moveaxis(grid.wavenumbers, 0, -1)
        magnitude = grid.magnitude
        shape = grid.shape + (4, 4)
        M1 = np.zeros(shape)
        M1[..., [0, 1, 2], [0, 1, 2]] = 1.0
        M2 = np.zeros(shape)
        M2[..., :3, :3] = coriolis_matrix(xi)
        M3 = np.zeros(shape)
        M3[..., 3, 3] = 1.0
        inv = np.divide(1.0, magnitude, out=np.zeros_like(magnitude), where=magnitude > 0.0)
        frequency = omega * grid.wavenumbers[2] * inv
        rate = nu * magnitude ** (2.0 * alpha)
        super().__init__(grid, M1, M2, M3, frequency, rate)
        self.omega, self.nu, self.alpha = omega, nu, alpha


def apply_semigroup(field, t, params=None, convention='corrected', propagator=None):
    """Multiply every mode of field by the semigroup symbol at time t"""
    if propagator is None:
        propagator = BoussinesqPropagator(field.grid, params, convention)
    coeffs = propagator.apply(field.coeffs, t)
    return field.with_coeffs(coeffs, time=field.time + float(t))


def _nonlinear_coeffs(v, w, grid):
    velocity = to_physical(v[:3])
    transported = to_physical(w)
    tensor = to_spectral(velocity[:, None] * transported[None, :])
    tensor = dealias_coeffs(tensor, grid)
    # (iξ, 0)ᵀ·[v⊗w]^ only involves the three velocity rows
    flux = 1j * np.einsum('kxyz,kmxyz->mxyz', grid.wavenumbers, tensor)
    return dealias_coeffs(-helmholtz_project(flux, grid.wavenumbers), grid)


def nonlinear_term(v, w):
    """𝒩(v, w) = −P̃·(iξ, 0)ᵀ·[v⊗w]^, dealiased and divergence-free"""
    require_same_grid(v, w)
    coeffs = _nonlinear_coeffs(v.coeffs, w.coeffs, v.grid)
    return SpectralField4(grid=v.grid, coeffs=coeffs,
                          real_valued=v.real_valued and w.real_valued, time=v.time)


def require_solenoidal(field, tolerance=TOLERANCES['divergence_free']):
    divergence = field.divergence_residual()
    if divergence > tolerance:
        raise ValueError(f"initial data are not divergence-free: relative divergence {divergence:.3e} "
                         f"exceeds {tolerance:g}")


def time_grid(horizon, steps):
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if steps < 1:
        raise ValueError("steps must be positive")
    return np.linspace(0.0, float(horizon), int(steps) + 1)


def step_sizes(times):
    """Successive time steps; a uniform grid gets one exact h so cached symbols are reused"""
    steps = np.diff(np.asarray(times, dtype=float))
    if len(steps) and np.allclose(steps, steps[0], rtol=1e-12, atol=0.0):
        return np.full(len(steps), steps[0])
    return steps


def free_evolution(v0, times, propagator, params=None):
    """y(t_n) = S(t_n)v0 on the time grid"""
    times = np.asarray(times, dtype=float)
    steps = step_sizes(times)
    coeffs = np.empty((len(times), 4) + v0.grid.shape, dtype=np.complex128)
    coeffs[0] = v0.coeffs
    for n in range(1, len(times)):
        coeffs[n] = propagator.apply(coeffs[n - 1], steps[n - 1])
    return Trajectory(grid=v0.grid, times=times, coeffs=coeffs,
                      real_valued=v0.real_valued, params=params)


def duhamel_recursion(forcing, times, propagator):
    """
    ∫₀^{t_n} S(t_n−τ)F(τ)dτ by the composite trapezoid rule.

    forcing(n) returns F at node n; the semigroup weights are exact, so
    B_{n+1} = S(h)(B_n + h/2·F_n) + h/2·F_{n+1} reproduces the full sum.
    """
    first = forcing(0)
    result = np.zeros((len(times),) + first.shape, dtype=np.complex128)
    current = first
    for n, h in enumerate(step_sizes(times)):
        following = forcing(n + 1)
        result[n + 1] = propagator.apply(result[n] + 0.5 * h * current, h) + 0.5 * h * following
        current = following
    return result


def duhamel_bilinear(v_traj, w_traj, propagator):
    """B(v, w)(t_n) = ∫₀^{t_n} S(t_n−τ)·𝒩(v, w)(τ)dτ"""
    v_traj._check_compatible(w_traj)
    grid = v_traj.grid
    coeffs = duhamel_recursion(
        lambda n: _nonlinear_coeffs(v_traj.coeffs[n], w_traj.coeffs[n], grid),
        v_traj.times, propagator)
    return v_traj.with_coeffs(coeffs, v_traj.real_valued and w_traj.real_valued)


def zeta(forcing_traj, propagator):
    """ζ(f)(t) = ∫₀ᵗ S(t−τ)·P̃f(τ)dτ for a sampled forcing trajectory"""
    grid = forcing_traj.grid
    coeffs = duhamel_recursion(
        lambda n: helmholtz_project(forcing_traj.coeffs[n], grid.wavenumbers),
        forcing_traj.times, propagator)
    return forcing_traj.with_coeffs(coeffs)


class SolutionNorm:
    """𝒳_r norm on a fixed grid: 𝓛^∞(FN^s) + 𝓛¹(FN^{s+2α})"""

    def __init__(self, norm_params, alpha, partition):
        self.norm_params = norm_params
        self.alpha = alpha
        self.partition = partition

    def components(self, trajectory):
        return xr_components(trajectory, self.norm_params, self.alpha, self.partition)

    def __call__(self, trajectory):
        return xr_norm(trajectory, self.norm_params, self.alpha, self.partition)


def tail_bound(final_field, norm_params, alpha, nu, partition):
    """
    e^{−νT·k_min^{2α}}·‖v(T)‖_{FN^s}: decay of the slowest resolved mode
    over one more horizon T, applied to the final state.
    """
    k_min = partition.grid.fundamental_wavenumber
    decay = math.exp(-nu * final_field.time * k_min ** (2.0 * alpha))
    return decay * fbm_norm(final_field, norm_params, partition)


def picard_solve(v0, horizon, steps, tol, max_iter, propagator, norm_params, alpha,
                 partition=None, nu=None, blowup_factor=1e3):
    """
    Fixed-point iteration v ← y + B(v, v) with y = S(·)v0 on a uniform time grid.

    Stops once the solution-norm distance of successive iterates is at most
    tol·‖y‖. Raises PicardDivergenceError when the iterates stop contracting
    and ValueError when v0 is not divergence-free.
    """
    require_solenoidal(v0)
    partition = partition or build_lp_partition(v0.grid)
    norm = SolutionNorm(norm_params, alpha, partition)
    times = time_grid(horizon, steps)
    params = getattr(propagator, 'params', None)
    y = free_evolution(v0, times, propagator, params)
    y_norm = norm(y)

    report = ContractionReport(y_norm=y_norm, K_emp=0.0, tolerance=tol, horizon=float(horizon),
                               steps=int(steps))
    if y_norm == 0.0:
        report.iterates.append(0.0)
        report.converged = True
        report.final_norm = 0.0
        report.residual = 0.0
        report.tail_bound = 0.0
        log_event(solver_logger, 'INFO', 'Picard solve trivial for zero data')
        return y, report

    report.K_emp = norm(duhamel_bilinear(y, y, propagator)) / y_norm ** 2
    log_event(solver_logger, 'DEBUG', 'Free evolution measured', y_norm=f"{y_norm:.6e}",
              K_emp=f"{report.K_emp:.6e}", smallness=f"{report.smallness:.4f}")

    current = y
    for iteration in range(1, max_iter + 1):
        following = y + duhamel_bilinear(current, current, propagator)
        distance = norm(following - current)
        report.iterates.append(distance)
        if len(report.iterates) > 1 and report.iterates[-2] > 0.0:
            report.ratios.append(distance / report.iterates[-2])
        log_event(solver_logger, 'DEBUG', 'Picard iteration', iteration=iteration,
                  distance=f"{distance:.6e}", ratio=f"{report.ratios[-1]:.4f}" if report.ratios else '-')
        current = following

        if not math.isfinite(distance) or distance > blowup_factor * y_norm:
            report.final_norm = norm(current) if math.isfinite(distance) else math.inf
            log_event(solver_logger, 'WARN', 'Picard iterates diverged', iteration=iteration,
                      distance=distance, y_norm=y_norm)
            raise PicardDivergenceError(
                f"Picard iteration diverged after {iteration} iterations (distance {distance:.3e})", report)
        if distance <= tol * y_norm:
            report.converged = True
            break

    report.final_norm = norm(current)
    if not report.converged:
        log_event(solver_logger, 'WARN', 'Picard iteration did not converge', max_iter=max_iter,
                  last_distance=report.iterates[-1], y_norm=y_norm)
        raise PicardDivergenceError(
            f"Picard iteration did not converge within {max_iter} iterations", report)

    report.residual = norm(current - y - duhamel_bilinear(current, current, propagator))
    if nu is not None:
        report.tail_bound = tail_bound(current.final, norm_params, alpha, nu, partition)
    log_event(solver_logger, 'INFO', 'Picard iteration converged', iterations=report.iterations,
              y_norm=f"{y_norm:.6e}", final_norm=f"{report.final_norm:.6e}",
              K_emp=f"{report.K_emp:.6e}", residual=f"{report.residual:.3e}")
    return current, report


def step_exponential(v, dt, propagator, method='heun', nonlinearity_scale=1.0):
    """
    Advance coefficients one step of size dt.

    'euler' is v + dt·S(dt)𝒩(v); 'heun' is the exponential trapezoid rule
    with an exponential Euler predictor.
    """
    if method not in STEP_METHODS:
        raise ValueError(f"unknown step method: {method}")
    grid = v.grid
    forcing = nonlinearity_scale * _nonlinear_coeffs(v.coeffs, v.coeffs, grid)
    if method == 'euler':
        coeffs = propagator.apply(v.coeffs + dt * forcing, dt)
    else:
        predictor = propagator.apply(v.coeffs + dt * forcing, dt)
        corrector = nonlinearity_scale * _nonlinear_coeffs(predictor, predictor, grid)
        coeffs = propagator.apply(v.coeffs + 0.5 * dt * forcing, dt) + 0.5 * dt * corrector
    return v.with_coeffs(coeffs, time=v.time + float(dt))


def integrate_exponential(v0, times, propagator, method='heun', nonlinearity_scale=1.0):
    """Run step_exponential over a time grid and collect the trajectory"""
    times = np.asarray(times, dtype=float)
    coeffs = np.empty((len(times), 4) + v0.grid.shape, dtype=np.complex128)
    coeffs[0] = v0.coeffs
    current = v0.with_coeffs(v0.coeffs, time=0.0)
    for n, h in enumerate(step_sizes(times), start=1):
        current = step_exponential(current, h, propagator, method, nonlinearity_scale)
        coeffs[n] = current.coeffs
    return Trajectory(grid=v0.grid, times=times, coeffs=coeffs, real_valued=v0.real_valued,
                      params=getattr(propagator, 'params', None))


def rescale_variables(u0, theta0, params, grid, real_valued=True):
    """(u0, θ0) -> v0 = (u0, √g·θ0/𝒩) as lattice coefficients"""
    if params.brunt == 0:
        raise ValueError("brunt frequency must be nonzero to rescale the temperature")
    u0 = np.asarray(u0, dtype=np.complex128)
    theta0 = np.asarray(theta0, dtype=np.complex128)
    if u0.shape != (3,) + grid.shape or theta0.shape != grid.shape:
        raise ValueError("velocity must be (3, n, n, n) and temperature (n, n, n) coefficients")
    b0 = math.sqrt(params.gravity) * theta0 / params.brunt
    field = SpectralField4(grid=grid, coeffs=np.concatenate([u0, b0[None]]), real_valued=real_valued)
    require_solenoidal(field)
    return field


def unrescale_variables(field, params):
    """v -> (u, θ) with θ = 𝒩·b/√g"""
    if params.brunt == 0:
        raise ValueError("brunt frequency must be nonzero to recover the temperature")
    theta = params.brunt * field.coeffs[3] / math.sqrt(params.gravity)
    return np.array(field.coeffs[:3]), theta
