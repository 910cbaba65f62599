# estimates.py
# Empirical constants of the semigroup, Duhamel, bilinear and lemma-level
# inequalities, measured on two resolutions and reported as EstimateReports
#
# A constant counts as finite when the value measured on the coarse grid and
# on the refined grid agree within TOLERANCES['resolution_drift'].

import math
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field

from .config import TOLERANCES
from .grid import make_grid, random_band_limited
from .symbols import helmholtz_project, helmholtz_symbol, matrix_exponential_oracle, semigroup_symbol
from .spaces import (ANNULUS_OUTER, NormParams, admissible_case, bernstein_ratio, block_norms,
                     build_lp_partition, combine_blocks, discrete_gaussian, embedding_ratio,
                     fbm_norm, hoelder_ratio, random_solenoidal_field, time_reduce, young_ratio)
from .solver import (BoussinesqPropagator, StokesCoriolisPropagator, Trajectory, duhamel_bilinear,
                     free_evolution, step_sizes, time_grid, zeta)
from .archive import json_safe
from .logging import setup_logger, log_event

harness_logger = setup_logger('harness', 'harness.log')

EstimateId = Literal['estsemi1', 'estsemi2', 'estsemi3', 'oracle', 'LL1', 'LL2', 'LL3', 'bilinear',
                     'bernstein', 'hoelder', 'young', 'embedding', 'dependence']

# Long horizon for the time-integrated bounds: the slowest mode decays by e^{-12}
LONG_HORIZON_DECAYS = 12.0
LONG_HORIZON_STEPS = 400
ZETA_MIN_STEPS = 64
CLOSED_FORM_STEPS = 256
CLOSED_FORM_GRID = 8
BLOCK_SEED_STRIDE = 1000
ORACLE_SAMPLES = 10_000
ORACLE_DRAWS = 40
ORACLE_ALPHAS = (0.5, 0.75, 1.0, 1.25)


class EstimateReport(BaseModel):
    """Measured constant of one inequality plus its resolution stability."""

    estimate_id: EstimateId
    measured_constant: float
    envelope: str
    sweep_axes: Dict[str, List[float]] = Field(default_factory=dict)
    sweep_size: int = 0
    max_violation_ratio: float = Field(
        default=math.nan,
        description="Largest measured constant over the reference constant of the suite")
    coarse_constant: float
    refined_constant: float
    drift: float
    uniformity_collapse: Optional[float] = None
    verdict: Literal['pass', 'fail']
    details: Dict[str, Any] = Field(default_factory=dict)

    @property
    def passed(self):
        return self.verdict == 'pass'

    @property
    def uniform(self):
        if self.uniformity_collapse is None:
            return True
        return self.uniformity_collapse <= TOLERANCES['uniformity_collapse']

    def to_record(self):
        record = json_safe(self.model_dump())
        record['record_type'] = 'estimate'
        return record


def relative_drift(a, b):
    """|a − b| / max(|a|, |b|); 0 when both vanish, inf when either is not finite"""
    if not (math.isfinite(a) and math.isfinite(b)):
        return math.inf
    scale = max(abs(a), abs(b))
    if scale == 0.0:
        return 0.0
    return abs(a - b) / scale


def spread(values):
    """(max − min) / max of a list of nonnegative constants"""
    values = [v for v in values if math.isfinite(v)]
    if not values or max(values) == 0.0:
        return 0.0
    return (max(values) - min(values)) / max(values)


def _finish(estimate_id, envelope, measured, coarse, refined, reference, sweep_axes=None,
            sweep_size=0, collapse=None, details=None):
    drift = relative_drift(coarse, refined)
    passed = math.isfinite(measured) and drift <= TOLERANCES['resolution_drift']
    violation = measured / reference if reference and math.isfinite(reference) else math.nan
    report = EstimateReport(
        estimate_id=estimate_id,
        measured_constant=float(measured),
        envelope=envelope,
        sweep_axes=sweep_axes or {},
        sweep_size=int(sweep_size),
        max_violation_ratio=float(violation),
        coarse_constant=float(coarse),
        refined_constant=float(refined),
        drift=float(drift),
        uniformity_collapse=None if collapse is None else float(collapse),
        verdict='pass' if passed else 'fail',
        details=details or {},
    )
    log_event(harness_logger, 'INFO' if passed else 'WARN', 'Estimate measured',
              estimate=estimate_id, constant=f"{measured:.6e}", drift=f"{drift:.3e}",
              collapse='-' if collapse is None else f"{collapse:.3e}", verdict=report.verdict)
    return report


# ----------------------------------------------------------------------------
# Lattices, parameter sweeps and random data
# ----------------------------------------------------------------------------

def lattices(config):
    """[(grid, partition)] for the coarse and the refined resolution"""
    pairs = []
    for n in (config.grid.n_per_axis, config.grid.refined_n_per_axis):
        grid = make_grid(n, config.grid.box_length)
        pairs.append((grid, build_lp_partition(grid)))
    return pairs


def in_band(omega, brunt, gravity):
    N = brunt * math.sqrt(gravity)
    return N / 2.0 <= abs(omega) <= 2.0 * N


def band_parameter_pairs(count, gravity=1.0):
    """
    count (Ω, 𝒩) pairs strictly inside 𝒩√g/2 ≤ |Ω| ≤ 2𝒩√g.

    |Ω|/N runs log-uniformly across the band while 𝒩 runs the other way,
    and the sign of Ω alternates.
    """
    ratios = np.geomspace(0.51, 1.96, count)
    brunts = np.geomspace(2.0, 0.5, count)
    pairs = []
    for i, (ratio, brunt) in enumerate(zip(ratios, brunts)):
        sign = 1.0 if i % 2 == 0 else -1.0
        pairs.append((float(sign * ratio * brunt * math.sqrt(gravity)), float(brunt)))
    return pairs


def outside_band_pairs(gravity=1.0, brunt=1.0):
    """|Ω|/N ∈ {1/8, 8}, both with L = 8"""
    N = brunt * math.sqrt(gravity)
    return [(N / 8.0, brunt), (8.0 * N, brunt)]


def parameter_sweep(config):
    """Sweep points {'omega', 'brunt', 'in_band'}: the band pairs then two outside points"""
    physics = config.physics
    if config.scenario.kind == 'ns_critical':
        return [{'omega': 0.0, 'brunt': physics.brunt, 'in_band': True}]

    sweep = config.sweep
    if sweep.omegas and sweep.brunts:
        if len(sweep.omegas) != len(sweep.brunts):
            raise ValueError(f"sweep lists differ in length: {len(sweep.omegas)} omegas, "
                             f"{len(sweep.brunts)} brunts")
        pairs = list(zip(sweep.omegas, sweep.brunts))
    else:
        pairs = band_parameter_pairs(sweep.band_pairs, physics.gravity)

    points = [{'omega': float(o), 'brunt': float(b), 'in_band': in_band(o, b, physics.gravity)}
              for o, b in pairs if o != 0]
    points += [{'omega': o, 'brunt': b, 'in_band': False}
               for o, b in outside_band_pairs(physics.gravity, physics.brunt)]
    return points


def sweep_propagator(config, grid, omega, brunt, nu=None):
    """(propagator, L) for one sweep point; the Stokes-Coriolis family has L = 1"""
    physics = config.physics
    nu = physics.nu if nu is None else nu
    if config.uses_stokes_coriolis:
        return StokesCoriolisPropagator(grid, omega, nu, physics.alpha), 1.0
    params = config.phys_params(omega=omega, brunt=brunt, nu=nu, kappa=nu)
    return BoussinesqPropagator(grid, params, config.symbols.convention), params.L


def initial_samples(config, grid, offset=0):
    data = config.initial_data
    return [random_solenoidal_field(grid, data.band_index, data.seed + offset + k, 1.0, data.include_theta)
            for k in range(config.sweep.samples)]


def forcing_trajectory(grid, times, seed, band_index):
    """
    Real forcing f(t) = (1 + cos(2πt/T)/2)·a + sin(πt/T)·b with seeded
    band-limited a, b that are not divergence-free.
    """
    a = random_band_limited(grid, band_index, seed)
    b = random_band_limited(grid, band_index, seed + 1)
    a[:, 0, 0, 0] = 0.0
    b[:, 0, 0, 0] = 0.0
    horizon = times[-1]
    first = 1.0 + 0.5 * np.cos(2.0 * np.pi * times / horizon)
    second = np.sin(np.pi * times / horizon)
    coeffs = first[:, None, None, None, None] * a[None] + second[:, None, None, None, None] * b[None]
    return Trajectory(grid=grid, times=times, coeffs=coeffs, real_valued=True)


def _chemin_lerner(norms, times, p, s, norm, partition):
    return float(combine_blocks(time_reduce(norms, times, p), s, norm.r, partition.js))


def _sweep_axes(points, config, grids):
    return {
        'omega': [p['omega'] for p in points],
        'brunt': [p['brunt'] for p in points],
        'seed': [float(config.initial_data.seed + k) for k in range(config.sweep.samples)],
        'n_per_axis': [float(g.n_per_axis) for g, _ in grids],
    }


def _swept_reports(ids, envelopes, points, coarse, refined_at, config, grids, extra_details=None):
    """
    Turn per-point constants into reports.

    coarse[i][eid] is the constant at sweep point i on the coarse grid;
    refined_at maps a point index to its refined-grid constants.
    """
    reports = []
    for eid in ids:
        constants = [c[eid] for c in coarse]
        band = [c for c, p in zip(constants, points) if p['in_band']]
        measured = max(constants)
        reference = float(np.median(band)) if band else measured
        subset = sorted(refined_at)
        details = {
            'in_band_constants': band,
            'outside_band': [
                {'omega': p['omega'], 'brunt': p['brunt'], 'constant': c}
                for c, p in zip(constants, points) if not p['in_band']
            ],
            'refined_points': subset,
        }
        details.update((extra_details or {}).get(eid, {}))
        reports.append(_finish(
            eid, envelopes[eid], measured,
            coarse=max(constants[i] for i in subset),
            refined=max(refined_at[i][eid] for i in subset),
            reference=reference,
            sweep_axes=_sweep_axes(points, config, grids),
            sweep_size=len(points) * config.sweep.samples,
            collapse=spread(band) if len(band) > 1 else None,
            details=details,
        ))
    return reports


def _refined_subset(points, coarse, ids):
    """Index of each estimate's worst point plus the first outside-band point"""
    subset = {int(np.argmax([c[eid] for c in coarse])) for eid in ids}
    outside = [i for i, p in enumerate(points) if not p['in_band']]
    if outside:
        subset.add(outside[0])
    return subset


# ----------------------------------------------------------------------------
# Linear semigroup
# ----------------------------------------------------------------------------

SEMIGROUP_IDS = ('estsemi1', 'estsemi2', 'estsemi3')


def long_horizon(nu, alpha, grid):
    return LONG_HORIZON_DECAYS / (nu * grid.fundamental_wavenumber ** (2.0 * alpha))


def norm_history(v0, times, propagator, norm, partition):
    """Block norms of S(t_n)v0 at every time, shape (T, J), stepping without storing fields"""
    history = np.empty((len(times), len(partition.js)))
    current = v0.coeffs
    history[0] = block_norms(current, norm.q, norm.mu, partition)
    for n, h in enumerate(step_sizes(times), start=1):
        current = propagator.apply(current, h)
        history[n] = block_norms(current, norm.q, norm.mu, partition)
    return history


def _semigroup_point(config, grid, partition, point, samples, norm, target, gamma, nu=None):
    nu = config.physics.nu if nu is None else nu
    alpha = config.physics.alpha
    propagator, L = sweep_propagator(config, grid, point['omega'], point['brunt'], nu=nu)
    times = time_grid(config.time.horizon, config.time.steps)
    long_times = time_grid(long_horizon(nu, alpha, grid), LONG_HORIZON_STEPS)

    ratios = {eid: 0.0 for eid in SEMIGROUP_IDS}
    for v0 in samples:
        base = fbm_norm(v0, norm, partition)
        if base == 0.0:
            continue
        target_norms = combine_blocks(norm_history(v0, times, propagator, target, partition),
                                      target.s, target.r, partition.js)
        weights = (nu * times) ** gamma if gamma > 0.0 else np.ones_like(times)
        ratios['estsemi1'] = max(ratios['estsemi1'], float(np.max(weights * target_norms)) / base)

        norms = norm_history(v0, times, propagator, norm, partition)
        ratios['estsemi2'] = max(ratios['estsemi2'],
                                 _chemin_lerner(norms, times, math.inf, norm.s, norm, partition) / base)

        long_norms = norm_history(v0, long_times, propagator, norm, partition)
        integral = _chemin_lerner(long_norms, long_times, 1, norm.s + 2.0 * alpha, norm, partition)
        ratios['estsemi3'] = max(ratios['estsemi3'], nu * integral / base)

    return {eid: value / L for eid, value in ratios.items()}


def verify_semigroup_estimates(config, target_q=None):
    """
    Measure the three linear semigroup bounds over the (Ω, 𝒩) sweep.

    estsemi1 compares ‖S(t)v0‖ in FN^s_{q₂} with (νt)^{−γ}·‖v0‖ in FN^s_{q₁},
    γ = ((3−μ)/q₂ − (3−μ)/q₁)/(2α); target_q = q₂ defaults to q₁ (γ = 0).
    estsemi2 is the sup-in-time bound and estsemi3 the time-integrated bound
    with its 1/ν factor, measured over a horizon long enough for every
    resolved mode to decay. Constants are ratio/L (ratio·ν/L for estsemi3).
    """
    alpha = config.physics.alpha
    norm = config.norm_params(alpha)
    target = norm if target_q is None else norm.model_copy(update={'q': float(target_q)})
    if target.q > norm.q:
        raise ValueError(f"estsemi1 needs q2 <= q1, got q2={target.q}, q1={norm.q}")
    gamma = ((3.0 - norm.mu) / target.q - (3.0 - norm.mu) / norm.q) / (2.0 * alpha)

    grids = lattices(config)
    points = parameter_sweep(config)
    log_event(harness_logger, 'INFO', 'Semigroup suite started', points=len(points),
              samples=config.sweep.samples, gamma=f"{gamma:.4f}")

    (grid, partition), (fine, fine_partition) = grids
    samples = initial_samples(config, grid)
    coarse = [_semigroup_point(config, grid, partition, p, samples, norm, target, gamma) for p in points]

    fine_samples = initial_samples(config, fine)
    refined_at = {
        i: _semigroup_point(config, fine, fine_partition, points[i], fine_samples, norm, target, gamma)
        for i in _refined_subset(points, coarse, SEMIGROUP_IDS)
    }

    # Doubling ν halves the envelope; the normalised constant should not move
    first = next(i for i, p in enumerate(points) if p['in_band'])
    doubled = _semigroup_point(config, grid, partition, points[first], samples, norm, target, gamma,
                               nu=2.0 * config.physics.nu)
    nu_drift = relative_drift(coarse[first]['estsemi3'], doubled['estsemi3'])

    envelopes = {
        'estsemi1': 'C*L*(nu*t)^-gamma',
        'estsemi2': 'C*L',
        'estsemi3': 'C*L/nu',
    }
    extra = {
        'estsemi1': {'q1': norm.q, 'q2': target.q, 'gamma': gamma},
        'estsemi3': {'nu_doubling_drift': nu_drift,
                     'long_horizon': long_horizon(config.physics.nu, alpha, grid)},
    }
    reports = _swept_reports(SEMIGROUP_IDS, envelopes, points, coarse, refined_at, config, grids, extra)
    return reports + [semigroup_oracle_agreement(config)]


def semigroup_oracle_agreement(config, samples=ORACLE_SAMPLES, draws=ORACLE_DRAWS):
    """
    Largest |S(t)w − exp(tA)w| over random (ξ, t, Ω, 𝒩, α) and divergence-free w.

    The closed form uses the configured matrix convention, so a run with the
    literal entries fails this report.
    """
    convention = config.symbols.convention
    nu = config.physics.nu
    tolerance = TOLERANCES['oracle_agreement']
    rng = np.random.default_rng(config.initial_data.seed)
    per_draw = max(1, samples // draws)
    axes = {'omega': [], 'brunt': [], 'alpha': []}
    worst = 0.0
    for _ in range(draws):
        omega = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.2, 4.0))
        brunt = float(rng.uniform(0.2, 4.0))
        alpha = float(rng.choice(ORACLE_ALPHAS))
        params = config.phys_params(omega=omega, brunt=brunt, alpha=alpha, nu=nu, kappa=nu)
        xi = rng.uniform(-3.0, 3.0, size=(per_draw, 3))
        t = rng.uniform(0.0, 2.0, size=per_draw)
        w = rng.standard_normal((per_draw, 4)) + 1j * rng.standard_normal((per_draw, 4))
        w = np.einsum('nab,nb->na', helmholtz_symbol(xi), w)
        closed = np.einsum('nab,nb->na', semigroup_symbol(xi, t, params, convention), w)
        oracle = np.einsum('nab,nb->na', matrix_exponential_oracle(xi, t, params), w)
        worst = max(worst, float(np.max(np.abs(closed - oracle))))
        for key, value in (('omega', omega), ('brunt', brunt), ('alpha', alpha)):
            axes[key].append(value)

    passed = worst <= tolerance
    log_event(harness_logger, 'INFO' if passed else 'WARN', 'Oracle agreement measured',
              convention=convention, samples=draws * per_draw, max_error=f"{worst:.3e}")
    return EstimateReport(
        estimate_id='oracle',
        measured_constant=worst,
        envelope=f"<= {tolerance:g}",
        sweep_axes=axes,
        sweep_size=draws * per_draw,
        max_violation_ratio=worst / tolerance,
        coarse_constant=worst,
        refined_constant=worst,
        drift=0.0,
        verdict='pass' if passed else 'fail',
        details={'convention': convention},
    )


# ----------------------------------------------------------------------------
# Duhamel operator ζ
# ----------------------------------------------------------------------------

ZETA_IDS = ('LL1', 'LL2', 'LL3')


def _zeta_point(config, grid, partition, point, norm, steps):
    nu, alpha = config.physics.nu, config.physics.alpha
    propagator, L = sweep_propagator(config, grid, point['omega'], point['brunt'])
    times = time_grid(config.time.horizon, steps)
    smooth = norm.s + 2.0 * alpha

    ratios = {eid: 0.0 for eid in ZETA_IDS}
    for k in range(config.sweep.samples):
        forcing = forcing_trajectory(grid, times, config.initial_data.seed + 2 * k,
                                     config.initial_data.band_index)
        response = zeta(forcing, propagator)
        f_norms = block_norms(forcing.coeffs, norm.q, norm.mu, partition)
        z_norms = block_norms(response.coeffs, norm.q, norm.mu, partition)
        f_sup = _chemin_lerner(f_norms, times, math.inf, norm.s, norm, partition)
        f_int = _chemin_lerner(f_norms, times, 1, norm.s, norm, partition)
        ratios['LL1'] = max(ratios['LL1'],
                            _chemin_lerner(z_norms, times, math.inf, norm.s, norm, partition) / f_int)
        ratios['LL2'] = max(ratios['LL2'],
                            nu * _chemin_lerner(z_norms, times, math.inf, smooth, norm, partition) / f_sup)
        ratios['LL3'] = max(ratios['LL3'],
                            nu * _chemin_lerner(z_norms, times, 1, smooth, norm, partition) / f_int)

    return {eid: value / L for eid, value in ratios.items()}


def zeta_closed_form_error(config, steps=CLOSED_FORM_STEPS):
    """
    Relative error of ζ for a single-mode forcing constant in time against
    the exact per-mode integral, after one Richardson step on the trapezoid
    sums with steps and 2·steps.
    """
    grid = make_grid(CLOSED_FORM_GRID, config.grid.box_length)
    propagator, _ = sweep_propagator(config, grid, config.physics.omega, config.physics.brunt)
    coeffs = np.zeros((4,) + grid.shape, dtype=np.complex128)
    mode = np.array([0.0, 1.0, 0.0, 0.5])
    coeffs[:, 1, 0, 0] = mode
    coeffs[:, -1, 0, 0] = mode
    horizon = config.time.horizon

    def final_value(count):
        times = time_grid(horizon, count)
        constant = np.broadcast_to(coeffs, (len(times),) + coeffs.shape).copy()
        forcing = Trajectory(grid=grid, times=times, coeffs=constant, real_valued=True)
        return zeta(forcing, propagator).coeffs[-1]

    extrapolated = (4.0 * final_value(2 * steps) - final_value(steps)) / 3.0
    exact = propagator.integrate(helmholtz_project(coeffs, grid.wavenumbers), horizon)
    return float(np.max(np.abs(extrapolated - exact)) / np.max(np.abs(exact)))


def verify_zeta_estimates(config):
    """
    Measure the three bounds on ζ(f) = ∫₀ᵗ S(t−τ)P̃f(τ)dτ for seeded
    forcing trajectories: LL1 (𝓛^∞ by 𝓛¹), LL2 (gain of 2α from 𝓛^∞, 1/ν)
    and LL3 (gain of 2α in 𝓛¹, 1/ν). Constants are ratio/L.
    """
    alpha = config.physics.alpha
    norm = config.norm_params(alpha)
    steps = max(config.time.steps, ZETA_MIN_STEPS)
    grids = lattices(config)
    points = parameter_sweep(config)
    (grid, partition), (fine, fine_partition) = grids
    log_event(harness_logger, 'INFO', 'Duhamel suite started', points=len(points), steps=steps)

    coarse = [_zeta_point(config, grid, partition, p, norm, steps) for p in points]
    refined_at = {i: _zeta_point(config, fine, fine_partition, points[i], norm, steps)
                  for i in _refined_subset(points, coarse, ZETA_IDS)}

    extra = {}
    closed_form = zeta_closed_form_error(config)
    for eid in ZETA_IDS:
        worst = int(np.argmax([c[eid] for c in coarse]))
        halved = _zeta_point(config, grid, partition, points[worst], norm, 2 * steps)
        extra[eid] = {
            'time_refinement_drift': relative_drift(coarse[worst][eid], halved[eid]),
            'closed_form_error': closed_form,
            'steps': steps,
        }

    envelopes = {'LL1': 'C*L', 'LL2': 'C*L/nu', 'LL3': 'C*L/nu'}
    return _swept_reports(ZETA_IDS, envelopes, points, coarse, refined_at, config, grids, extra)


# ----------------------------------------------------------------------------
# Bilinear Duhamel operator
# ----------------------------------------------------------------------------

def measure_bilinear_constant(config, grid, partition, norm, samples=None):
    """max over seeded pairs of ‖B(v,w)‖/(‖v‖·‖w‖) in the solution norm, with v, w free evolutions"""
    from .solver import SolutionNorm

    alpha = config.physics.alpha
    propagator, _ = sweep_propagator(config, grid, config.physics.omega, config.physics.brunt)
    times = time_grid(config.time.horizon, config.time.steps)
    solution_norm = SolutionNorm(norm, alpha, partition)
    data = config.initial_data
    samples = config.sweep.samples if samples is None else samples

    ratios = []
    for k in range(samples):
        v0 = random_solenoidal_field(grid, data.band_index, data.seed + 2 * k, 1.0, data.include_theta)
        w0 = random_solenoidal_field(grid, data.band_index, data.seed + 2 * k + 1, 1.0, data.include_theta)
        v = free_evolution(v0, times, propagator)
        w = free_evolution(w0, times, propagator)
        bilinear = duhamel_bilinear(v, w, propagator)
        ratios.append(solution_norm(bilinear) / (solution_norm(v) * solution_norm(w)))
    return max(ratios), ratios


def verify_bilinear_estimate(config):
    """
    K_emp for the bilinear Duhamel operator on both resolutions.

    Raises InadmissibleIndicesError when (α, q, μ, r) fit none of the
    well-posedness cases.
    """
    alpha = config.physics.alpha
    norm = config.norm_params(alpha)
    case = admissible_case(alpha, norm)
    grids = lattices(config)
    log_event(harness_logger, 'INFO', 'Bilinear suite started', case=case, alpha=alpha,
              q=norm.q, mu=norm.mu, r=norm.r, s=norm.s)

    (grid, partition), (fine, fine_partition) = grids
    coarse, coarse_ratios = measure_bilinear_constant(config, grid, partition, norm)
    refined, refined_ratios = measure_bilinear_constant(config, fine, fine_partition, norm)
    measured = max(coarse, refined)
    return _finish(
        'bilinear', 'K', measured, coarse, refined, reference=coarse,
        sweep_axes={
            'seed': [float(config.initial_data.seed + k) for k in range(2 * config.sweep.samples)],
            'n_per_axis': [float(grid.n_per_axis), float(fine.n_per_axis)],
        },
        sweep_size=2 * config.sweep.samples,
        details={
            'case': case,
            'epsilon_threshold': math.inf if measured == 0.0 else 1.0 / (4.0 * measured),
            'coarse_ratios': coarse_ratios,
            'refined_ratios': refined_ratios,
            's': norm.s, 'q': norm.q, 'mu': norm.mu, 'r': norm.r,
        },
    )


# ----------------------------------------------------------------------------
# Hölder, Young, Bernstein and embedding inequalities
# ----------------------------------------------------------------------------

HOELDER_CASES = ((2.0, 0.0, 2.0, 0.0), (2.0, 1.0, 2.0, 1.0))
YOUNG_CASES = ((2.0, 0.0), (2.0, 1.0))
BERNSTEIN_BETA = (1, 0, 0)


def _scalar_samples(config, grid, offset):
    data = config.initial_data
    return [random_band_limited(grid, data.band_index, data.seed + offset + k, components=1)[0]
            for k in range(config.sweep.samples)]


def block_family(grid, partition, seed, band_index, js):
    """
    [(j, values)] with independent seeded random data φ_j·g_j for each j.

    g_j is drawn per lattice index on |m| ≤ band_index from its own seed, so
    two grids resolving the band see the same family. Blocks the band does
    not reach are skipped.
    """
    family = []
    for j in js:
        raw = random_band_limited(grid, band_index, seed * BLOCK_SEED_STRIDE + (j - partition.j_min),
                                  components=1)[0]
        values = partition.block(j) * raw
        if np.any(values):
            family.append((int(j), values))
    return family


def _lemma_constants(config, grid, partition, coarse_partition):
    q = config.norms.q
    seed = config.initial_data.seed
    first = _scalar_samples(config, grid, 100)
    second = _scalar_samples(config, grid, 200)

    hoelder = max(hoelder_ratio(f, g, *case, grid) for f, g in zip(first, second) for case in HOELDER_CASES)

    kernel = discrete_gaussian(1.0, 3, grid)
    young = max(young_ratio(kernel, g, qq, mu, grid) for g in first for (qq, mu) in YOUNG_CASES)

    # the coarse lattice fixes the band and the blocks so both grids draw the same family
    band = coarse_partition.grid.dealias_index
    per_block = {}
    for k in range(config.sweep.samples):
        for j, values in block_family(grid, partition, seed + 300 + k, band, coarse_partition.js):
            ratio = bernstein_ratio(values, j, BERNSTEIN_BETA, q, 0.0, q, 0.0, grid)
            per_block[j] = max(per_block.get(j, 0.0), ratio)

    s = config.regularity()
    mu = config.norms.mu
    source = NormParams(s=s, q=2.0, mu=mu, r=2.0)
    target = NormParams(s=s - (3.0 - mu) / 2.0, q=1.0, mu=mu, r=math.inf)
    embedding = max(embedding_ratio(v, source, target, partition)
                    for v in initial_samples(config, grid, offset=400))

    return {
        'hoelder': hoelder,
        'young': young,
        'bernstein': max(per_block.values()),
        'bernstein_blocks': per_block,
        'embedding': embedding,
    }


def verify_lemma_properties(config):
    """Hölder, Young, Bernstein and embedding constants on both resolutions"""
    grids = lattices(config)
    (grid, partition), (fine, fine_partition) = grids
    coarse = _lemma_constants(config, grid, partition, partition)
    refined = _lemma_constants(config, fine, fine_partition, partition)
    axes = {
        'seed': [float(config.initial_data.seed + k) for k in range(config.sweep.samples)],
        'n_per_axis': [float(grid.n_per_axis), float(fine.n_per_axis)],
    }
    size = config.sweep.samples
    blocks = refined['bernstein_blocks']

    return [
        _finish('hoelder', '1', max(coarse['hoelder'], refined['hoelder']), coarse['hoelder'],
                refined['hoelder'], reference=1.0, sweep_axes=axes, sweep_size=size * len(HOELDER_CASES),
                details={'cases': [list(c) for c in HOELDER_CASES]}),
        _finish('young', '1', max(coarse['young'], refined['young']), coarse['young'], refined['young'],
                reference=1.0, sweep_axes=axes, sweep_size=size * len(YOUNG_CASES),
                details={'cases': [list(c) for c in YOUNG_CASES], 'kernel_width': 1.0, 'kernel_radius': 3}),
        _finish('bernstein', 'C*2^(j|beta|)', max(coarse['bernstein'], refined['bernstein']),
                coarse['bernstein'], refined['bernstein'], reference=coarse['bernstein'],
                sweep_axes=dict(axes, j=[float(j) for j in blocks]), sweep_size=size * len(blocks),
                details={'beta': list(BERNSTEIN_BETA), 'q': config.norms.q,
                         'block_bound': ANNULUS_OUTER ** sum(BERNSTEIN_BETA),
                         'per_block': {str(j): c for j, c in blocks.items()},
                         'j_drift': spread(list(blocks.values()))}),
        _finish('embedding', 'C', max(coarse['embedding'], refined['embedding']), coarse['embedding'],
                refined['embedding'], reference=coarse['embedding'], sweep_axes=axes, sweep_size=size,
                details={'source': {'q': 2.0, 'r': 2.0}, 'target': {'q': 1.0, 'r': 'inf'}}),
    ]


SUITES = {
    'semigroup': verify_semigroup_estimates,
    'zeta': verify_zeta_estimates,
    'bilinear': lambda config: [verify_bilinear_estimate(config)],
    'lemmas': verify_lemma_properties,
}


def run_suite(name, config):
    if name not in SUITES:
        raise ValueError(f"unknown verification suite: {name} (expected one of {', '.join(SUITES)})")
    return SUITES[name](config)
