# scenarios.py
# Scenario runs (Picard solve + exponential stepper cross-check), (Ω, 𝒩)
# band sweeps, continuous dependence and report aggregation

import os
import json
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from .config import TOLERANCES, RunConfig, timestamp
from .grid import make_grid
from .spaces import (build_lp_partition, fbm_norm, make_homogeneous_data, norm_record,
                     random_solenoidal_field, xr_components)
from .solver import (BoussinesqPropagator, PicardDivergenceError, SolutionNorm, StokesCoriolisPropagator,
                     free_evolution, integrate_exponential, picard_solve, rescale_variables, time_grid)
from .estimates import EstimateReport, band_parameter_pairs, run_suite
from .archive import append_jsonl, read_jsonl, write_archive, write_csv_table
from .logging import setup_logger, log_event

harness_logger = setup_logger('harness', 'harness.log')

REPORTS_NAME = 'reports.jsonl'
TABLE_NAME = 'reports.csv'


class ScenarioResult(BaseModel):
    """Outcome of one scenario run; non-convergence is recorded, not raised."""

    run_id: str
    scenario: str
    directory: Optional[str] = None
    omega: float
    brunt: float
    alpha: float
    amplitude: float
    seed: int
    converged: bool
    iterations: int
    y_norm: float
    K_emp: float
    smallness: float
    final_norm: float
    bound_holds: bool
    max_ratio: Optional[float] = None
    residual: float = math.nan
    tail_bound: float = math.nan
    integrator_distance: float = math.nan
    report: Dict[str, Any] = Field(default_factory=dict)

    def to_record(self):
        record = self.model_dump()
        record['record_type'] = 'scenario'
        return record


class SweepSummary(BaseModel):
    """One (α, amplitude) group of a band sweep: every run converged and the final norms share one bound."""

    alpha: float
    amplitude: float
    runs: List[ScenarioResult]
    converged_all: bool
    common_bound: float
    collapse: float
    bound_ratios: List[float]

    @property
    def uniform(self):
        return self.converged_all and self.collapse <= TOLERANCES['uniformity_collapse']

    def to_record(self):
        return {
            'record_type': 'sweep',
            'alpha': self.alpha,
            'amplitude': self.amplitude,
            'pairs': len(self.runs),
            'converged_all': self.converged_all,
            'common_bound': self.common_bound,
            'collapse': self.collapse,
            'uniform': self.uniform,
            'omegas': [run.omega for run in self.runs],
            'brunts': [run.brunt for run in self.runs],
            'final_norms': [run.final_norm for run in self.runs],
        }


class BandSweep(BaseModel):
    """Band sweeps for every (α, amplitude) combination, in sweep order."""

    groups: List[SweepSummary]

    @property
    def runs(self):
        return [run for group in self.groups for run in group.runs]

    @property
    def converged_all(self):
        return all(group.converged_all for group in self.groups)

    @property
    def uniform(self):
        return all(group.uniform for group in self.groups)


class ContinuityReport(BaseModel):
    """‖v − ṽ‖ against the Lipschitz factor (1 − 4Kε)^{−1}·‖y − ỹ‖."""

    data_distance: float
    free_distance: float
    solution_distance: float
    measured_ratio: float
    K_emp: float
    epsilon: float
    lipschitz_bound: float
    data_to_solution: float
    passed: bool

    def to_record(self):
        record = self.model_dump()
        record['record_type'] = 'continuity'
        return record


def output_directory(config):
    return os.path.abspath(config.output.directory)


def scenario_propagator(config, grid):
    """Stratified rotating semigroup for fbcs, Stokes-Coriolis for the reduced scenarios"""
    physics = config.physics
    if config.uses_stokes_coriolis:
        return StokesCoriolisPropagator(grid, physics.omega, physics.nu, physics.alpha)
    return BoussinesqPropagator(grid, config.phys_params(), config.symbols.convention)


def initial_field(config, grid, partition=None, seed=None):
    """
    Generate v0 on grid with max coefficient magnitude equal to the amplitude.

    With variables = physical the fourth component is read as θ0 and mapped
    to b0 = √g·θ0/𝒩.
    """
    data = config.initial_data
    seed = data.seed if seed is None else seed
    if data.generator == 'random':
        field = random_solenoidal_field(grid, data.band_index, seed, data.amplitude, data.include_theta)
    else:
        alpha = config.physics.alpha
        norm = config.norm_params(alpha)
        degree = norm.s - 3.0 + (3.0 - norm.mu) / norm.q
        field = make_homogeneous_data(degree, norm, grid, partition)
        coeffs = np.array(field.coeffs)
        if not data.include_theta:
            coeffs[3] = 0.0
        peak = float(np.max(np.sqrt(np.sum(np.abs(coeffs) ** 2, axis=0))))
        field = field.with_coeffs(coeffs * (data.amplitude / peak) if peak > 0.0 else coeffs)

    if data.variables == 'physical' and not config.uses_stokes_coriolis:
        field = rescale_variables(field.coeffs[:3], field.coeffs[3], config.phys_params(), grid,
                                  real_valued=field.real_valued)
    return field


def run_identifier(config, label=None):
    parts = [config.scenario.kind, f"n{config.grid.n_per_axis}", f"seed{config.initial_data.seed}"]
    if label:
        parts.append(label)
    return '_'.join(parts)


def scenario_norm_records(run_id, v0, solution, norm, alpha, partition):
    """Norm lines for the data and, after convergence, the final state and both solution-norm parts"""
    records = [norm_record('fbm_initial', norm, fbm_norm(v0, norm, partition), partition)]
    if solution is not None:
        sup, integral = xr_components(solution, norm, alpha, partition)
        records += [
            norm_record('fbm_final', norm, fbm_norm(solution.final, norm, partition), partition),
            norm_record('chemin_lerner_sup', norm, sup, partition),
            norm_record('chemin_lerner_l1', norm.shifted(2.0 * alpha, p=1.0), integral, partition),
        ]
    for record in records:
        record['run_id'] = run_id
    return records


def run_scenario(config, out_dir=None, label=None, write=True):
    """
    Solve one scenario: Picard iteration on the mild formulation, then the
    exponential stepper on the same time grid as a cross-check.

    Writes the trajectory archive and appends a JSON-lines record when
    write is set.
    """
    physics = config.physics
    grid = make_grid(config.grid.n_per_axis, config.grid.box_length)
    partition = build_lp_partition(grid)
    v0 = initial_field(config, grid, partition)
    propagator = scenario_propagator(config, grid)
    alpha = physics.alpha
    norm = config.norm_params(alpha)
    run_id = run_identifier(config, label)

    log_event(harness_logger, 'INFO', 'Scenario started', run=run_id, omega=physics.omega,
              brunt=physics.brunt, alpha=alpha, amplitude=config.initial_data.amplitude)
    try:
        solution, report = picard_solve(v0, config.time.horizon, config.time.steps, config.time.picard_tol,
                                        config.time.max_iter, propagator, norm, alpha, partition,
                                        nu=physics.nu)
    except PicardDivergenceError as e:
        solution, report = None, e.report
        log_event(harness_logger, 'WARN', 'Scenario did not converge', run=run_id, error=str(e))

    integrator_distance = math.nan
    if solution is not None:
        stepped = integrate_exponential(v0, solution.times, propagator, config.time.method)
        integrator_distance = SolutionNorm(norm, alpha, partition)(solution - stepped)

    result = ScenarioResult(
        run_id=run_id,
        scenario=config.scenario.kind,
        omega=physics.omega,
        brunt=physics.brunt,
        alpha=alpha,
        amplitude=config.initial_data.amplitude,
        seed=config.initial_data.seed,
        converged=report.converged,
        iterations=report.iterations,
        y_norm=report.y_norm,
        K_emp=report.K_emp,
        smallness=report.smallness,
        final_norm=report.final_norm,
        bound_holds=report.converged and report.bound_holds(TOLERANCES['final_norm_slack']),
        max_ratio=max(report.ratios) if report.ratios else None,
        residual=report.residual,
        tail_bound=report.tail_bound,
        integrator_distance=integrator_distance,
        report=report.model_dump(),
    )

    if write:
        directory = os.path.join(out_dir or output_directory(config), run_id)
        if solution is not None:
            snapshot_norms = [{'fbm': fbm_norm(solution.field(i), norm, partition)}
                              for i in range(len(solution))]
            manifest = {
                'run_id': run_id,
                'created': timestamp(config.output.timezone),
                'seed': config.initial_data.seed,
                'config': config.as_sections(),
                'contraction': report.model_dump(),
            }
            write_archive(solution, directory, manifest, snapshot_norms, config.output.write_snapshots)
            result.directory = directory
        norms = scenario_norm_records(run_id, v0, solution, norm, alpha, partition)
        append_jsonl(os.path.join(out_dir or output_directory(config), REPORTS_NAME), norms + [result.to_record()])

    log_event(harness_logger, 'INFO', 'Scenario finished', run=run_id, converged=result.converged,
              final_norm=f"{result.final_norm:.6e}", y_norm=f"{result.y_norm:.6e}",
              integrator_distance=f"{integrator_distance:.3e}")
    return result


def sweep_points(config):
    sweep = config.sweep
    if sweep.omegas and sweep.brunts:
        if len(sweep.omegas) != len(sweep.brunts):
            raise ValueError("sweep omegas and brunts must have the same length")
        return list(zip(sweep.omegas, sweep.brunts))
    return band_parameter_pairs(sweep.band_pairs, config.physics.gravity)


def sweep_groups(config):
    """(α, amplitude) combinations; an empty list keeps the configured value"""
    alphas = config.sweep.alphas or [config.physics.alpha]
    amplitudes = config.sweep.amplitudes or [config.initial_data.amplitude]
    return [(float(alpha), float(amplitude)) for alpha in alphas for amplitude in amplitudes]


def _sweep_job(payload):
    config = RunConfig.model_validate(payload['config'])
    return run_scenario(config, payload['out_dir'], payload['label'], write=False)


def summarize_group(alpha, amplitude, runs):
    finals = [run.final_norm for run in runs]
    finite = [f for f in finals if math.isfinite(f)]
    return SweepSummary(
        alpha=alpha,
        amplitude=amplitude,
        runs=runs,
        converged_all=all(run.converged for run in runs),
        common_bound=max(finite) if finite else math.inf,
        collapse=(max(finite) - min(finite)) / max(finite) if finite and max(finite) > 0.0 else 0.0,
        bound_ratios=[run.final_norm / run.y_norm if run.y_norm > 0.0 else 0.0 for run in runs],
    )


def run_band_sweep(config, out_dir=None):
    """
    run_scenario at every (Ω, 𝒩) pair of the band, once for each
    (α, amplitude) group, with the same seeded data.

    Jobs are independent; with sweep.workers > 1 they run in a process
    pool and the results are put back in sweep order. Uniformity is judged
    within each group.
    """
    out_dir = out_dir or output_directory(config)
    pairs = sweep_points(config)
    groups = sweep_groups(config)
    payloads = []
    for alpha, amplitude in groups:
        for index, (omega, brunt) in enumerate(pairs):
            point = config.with_updates(physics={'omega': omega, 'brunt': brunt, 'alpha': alpha},
                                        initial_data={'amplitude': amplitude})
            payloads.append({'config': point.model_dump(), 'out_dir': out_dir,
                             'label': f"alpha{alpha:g}_amp{amplitude:g}_pair{index:02d}"})

    log_event(harness_logger, 'INFO', 'Band sweep started', pairs=len(pairs), groups=len(groups),
              workers=config.sweep.workers)
    if config.sweep.workers > 1:
        with ProcessPoolExecutor(max_workers=config.sweep.workers) as pool:
            runs = list(pool.map(_sweep_job, payloads))
    else:
        runs = [_sweep_job(payload) for payload in payloads]

    sweep = BandSweep(groups=[
        summarize_group(alpha, amplitude, runs[k * len(pairs):(k + 1) * len(pairs)])
        for k, (alpha, amplitude) in enumerate(groups)
    ])
    append_jsonl(os.path.join(out_dir, REPORTS_NAME),
                 [run.to_record() for run in sweep.runs] + [group.to_record() for group in sweep.groups])
    for group in sweep.groups:
        log_event(harness_logger, 'INFO' if group.uniform else 'WARN', 'Band sweep group finished',
                  alpha=group.alpha, amplitude=group.amplitude, converged_all=group.converged_all,
                  common_bound=f"{group.common_bound:.6e}", collapse=f"{group.collapse:.3e}")
    return sweep


def continuous_dependence(config, perturbation=1e-3, seed_offset=1):
    """
    Solve from v0 and from ṽ0 = v0 + perturbation·w0 and compare the
    solution distance with (1 − 4·K_emp·ε)^{−1} times the free-evolution
    distance, ε the larger of the two free-evolution norms.
    """
    physics = config.physics
    grid = make_grid(config.grid.n_per_axis, config.grid.box_length)
    partition = build_lp_partition(grid)
    propagator = scenario_propagator(config, grid)
    alpha = physics.alpha
    norm = config.norm_params(alpha)
    solution_norm = SolutionNorm(norm, alpha, partition)

    v0 = initial_field(config, grid, partition)
    w0 = initial_field(config, grid, partition, seed=config.initial_data.seed + seed_offset)
    nearby = v0 + w0.scaled(perturbation)

    args = (config.time.horizon, config.time.steps, config.time.picard_tol, config.time.max_iter,
            propagator, norm, alpha, partition)
    v, report = picard_solve(v0, *args, nu=physics.nu)
    v_near, report_near = picard_solve(nearby, *args, nu=physics.nu)

    times = time_grid(config.time.horizon, config.time.steps)
    y = free_evolution(v0, times, propagator)
    y_near = free_evolution(nearby, times, propagator)
    free_distance = solution_norm(y - y_near)
    solution_distance = solution_norm(v - v_near)

    K = max(report.K_emp, report_near.K_emp)
    epsilon = max(report.y_norm, report_near.y_norm)
    smallness = 4.0 * K * epsilon
    lipschitz = 1.0 / (1.0 - smallness) if smallness < 1.0 else math.inf
    measured = solution_distance / free_distance if free_distance > 0.0 else 0.0

    L = 1.0 if config.uses_stokes_coriolis else config.phys_params().L
    data_norm = fbm_norm(v0, norm, partition)
    data_to_solution = report.y_norm / (data_norm * L * max(1.0, 1.0 / physics.nu)) if data_norm > 0.0 else 0.0

    result = ContinuityReport(
        data_distance=fbm_norm(nearby - v0, norm, partition),
        free_distance=free_distance,
        solution_distance=solution_distance,
        measured_ratio=measured,
        K_emp=K,
        epsilon=epsilon,
        lipschitz_bound=lipschitz,
        data_to_solution=data_to_solution,
        passed=measured <= lipschitz * (1.0 + TOLERANCES['continuous_dependence']),
    )
    log_event(harness_logger, 'INFO' if result.passed else 'WARN', 'Continuous dependence measured',
              ratio=f"{measured:.6e}", bound=f"{lipschitz:.6e}", smallness=f"{smallness:.4f}")
    return result


def dependence_estimate(config):
    """Continuous dependence on the data as a verification report"""
    continuity = continuous_dependence(config)
    lipschitz = continuity.lipschitz_bound
    ratio = continuity.measured_ratio / lipschitz if math.isfinite(lipschitz) else math.nan
    return [EstimateReport(
        estimate_id='dependence',
        measured_constant=continuity.measured_ratio,
        envelope='(1-4*K*eps)^-1',
        sweep_axes={'alpha': [config.physics.alpha], 'amplitude': [config.initial_data.amplitude]},
        sweep_size=1,
        max_violation_ratio=ratio,
        coarse_constant=continuity.measured_ratio,
        refined_constant=continuity.measured_ratio,
        drift=0.0,
        verdict='pass' if continuity.passed else 'fail',
        details=continuity.model_dump(),
    )]


def run_verification(config, suites, out_dir=None):
    """Run the named estimate suites and append their reports"""
    reports = []
    for name in suites:
        reports.extend(dependence_estimate(config) if name == 'dependence' else run_suite(name, config))

    append_jsonl(os.path.join(out_dir or output_directory(config), REPORTS_NAME),
                 [report.to_record() for report in reports])
    return reports


def _flatten(record, prefix=''):
    row = {}
    for key, value in record.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            row.update(_flatten(value, f"{name}."))
        elif isinstance(value, list):
            row[name] = json.dumps(value)
        else:
            row[name] = value
    return row


def _sort_key(row):
    return (str(row.get('record_type', '')), str(row.get('estimate_id', row.get('run_id', ''))),
            json.dumps(row, sort_keys=True))


def aggregate_reports(report_path, table_path=None, include_details=False):
    """
    JSON-lines reports -> CSV table (one row per record, nested keys dotted).

    Rows are sorted so the table does not depend on job completion order.
    """
    records = read_jsonl(report_path)
    rows = []
    for record in records:
        if not include_details:
            record = {k: v for k, v in record.items() if k not in ('details', 'report')}
        rows.append(_flatten(record))
    rows.sort(key=_sort_key)
    table_path = table_path or os.path.join(os.path.dirname(os.path.abspath(report_path)), TABLE_NAME)
    write_csv_table(rows, table_path)
    return table_path, rows
