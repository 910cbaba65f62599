#!/usr/bin/env python3
"""
Boussinesq Lab - Fractional Boussinesq-Coriolis Simulator
==========================================================
Command-line entry point for scenario runs and estimate verification

This is the primary entry point of the lab. It handles:
- Run configuration (settings.cfg, scenario files, --set overrides)
- Scenario runs: Picard solve, stepper cross-check, SF4 archives
- Verification suites for the linear, Duhamel, bilinear, lemma-level and continuous-dependence bounds
- (Ω, 𝒩) band sweeps and report aggregation into CSV

A run follows:
1. bqlab.py (entry point)
   ↓ configuration loading (core/config.py)
2. Initial data + propagator (core/spaces.py, core/solver.py)
   ↓ Picard iteration and exponential stepper
3. Archive + JSON-lines report (core/archive.py)

Usage:
    python bqlab.py simulate fbcs              # Run a scenario file from config/scenarios
    python bqlab.py verify semigroup           # Linear semigroup bounds
    python bqlab.py verify zeta|bilinear|lemmas
    python bqlab.py sweep                      # (Ω, 𝒩) band sweep
    python bqlab.py report                     # JSON-lines reports -> CSV
    python bqlab.py config                     # Show the resolved configuration
    python bqlab.py logs --lines 40            # View recent logs
"""

# Standard library imports
import os
import sys
import math
import argparse

# Add the repository root to the path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

# Internal imports (after path setup)
from core.logging import setup_logger, log_event, logs_directory
from core.config import CONVENTION_ALIASES, load_run_config

LOG_FILES = ('system.log', 'solver.log', 'norms.log', 'harness.log', 'error.log')
SUITE_NAMES = ('semigroup', 'zeta', 'bilinear', 'lemmas', 'dependence', 'all')


class BoussinesqLab:
    """
    Command controller: resolves the run configuration once and dispatches
    the CLI verbs to the scenario and estimate modules.
    """

    def __init__(self, config_path=None, overrides=None):
        self.project_root = os.path.dirname(os.path.abspath(__file__))
        self.config_dir = os.path.join(self.project_root, 'config')
        self.logs_dir = logs_directory()
        self._setup_logging()

        try:
            self.config = load_run_config(config_path, overrides)
            log_event(self.system_logger, 'INFO', 'BoussinesqLab initialized',
                      scenario=self.config.scenario.kind, config=config_path or 'settings.cfg')
        except Exception as e:
            print(f"❌ Failed to load configuration: {e}")
            log_event(self.error_logger, 'ERROR', 'BoussinesqLab initialization failed', error=str(e))
            raise

    def _setup_logging(self):
        self.system_logger = setup_logger('system', 'system.log')
        self.error_logger = setup_logger('error', 'error.log')

    @property
    def out_dir(self):
        return os.path.abspath(self.config.output.directory)

    def simulate(self):
        """Run the configured scenario and print the contraction summary"""
        from core.scenarios import run_scenario

        print(f"🌀 Running scenario {self.config.scenario.kind} on {self.config.grid.n_per_axis}³")
        print("=" * 40)
        result = run_scenario(self.config, self.out_dir)
        status = '✅ converged' if result.converged else '❌ did not converge'
        print(f"Picard: {status} after {result.iterations} iterations")
        print(f"‖y‖ = {result.y_norm:.6e}   K_emp = {result.K_emp:.6e}   4K‖y‖ = {result.smallness:.4f}")
        print(f"‖v‖ = {result.final_norm:.6e}   (≤ 2‖y‖: {'✅' if result.bound_holds else '❌'})")
        if result.converged:
            print(f"Stepper distance ({self.config.time.method}): {result.integrator_distance:.3e}")
            print(f"Tail bound beyond T: {result.tail_bound:.3e}")
        if result.directory:
            print(f"📁 Archive: {result.directory}")
        return result.converged

    def verify(self, suite):
        """Run one verification suite (or all) and print each estimate verdict"""
        from core.scenarios import run_verification

        suites = SUITE_NAMES[:-1] if suite == 'all' else (suite,)
        print(f"🔬 Verifying {', '.join(suites)}")
        print("=" * 40)
        reports = run_verification(self.config, suites, self.out_dir)
        for report in reports:
            mark = '✅' if report.passed else '❌'
            line = (f"{mark} {report.estimate_id:<10} C = {report.measured_constant:.6e}  "
                    f"[{report.envelope}]  drift = {report.drift:.2e}")
            if report.uniformity_collapse is not None:
                line += f"  collapse = {report.uniformity_collapse:.2e}"
            print(line)
        return all(report.passed for report in reports)

    def sweep(self):
        """Band sweep with fixed small data, once per (alpha, amplitude) group"""
        from core.scenarios import run_band_sweep

        print(f"🧭 Band sweep over {self.config.sweep.band_pairs} (Ω, 𝒩) pairs")
        print("=" * 40)
        sweep = run_band_sweep(self.config, self.out_dir)
        for group in sweep.groups:
            print(f"\nα = {group.alpha:g}   amplitude = {group.amplitude:g}")
            for run in group.runs:
                mark = '✅' if run.converged else '❌'
                print(f"{mark} Ω = {run.omega:+.4f}  𝒩 = {run.brunt:.4f}  ‖v‖ = {run.final_norm:.6e}")
            print(f"Common bound: {group.common_bound:.6e}   spread: {group.collapse:.2e}   "
                  f"uniform: {'✅' if group.uniform else '❌'}")
        return sweep.uniform

    def report(self, path=None, output=None):
        """Aggregate the JSON-lines reports of the output directory into CSV"""
        from core.scenarios import REPORTS_NAME, aggregate_reports

        path = path or os.path.join(self.out_dir, REPORTS_NAME)
        if not os.path.exists(path):
            print(f"❌ No reports found at {path}")
            return False
        table, rows = aggregate_reports(path, output)
        print(f"📊 {len(rows)} records -> {table}")
        return True

    def config_show(self):
        """Show the resolved configuration"""
        print("⚙️  Boussinesq Lab Configuration")
        print("=" * 30)
        for section, values in self.config.as_sections().items():
            print(f"[{section}]")
            for key, value in values.items():
                print(f"  {key}: {value}")
        norm = self.config.norm_params()
        r = 'inf' if math.isinf(norm.r) else norm.r
        print(f"\nRegularity s = {norm.s:.6g} (q = {norm.q}, mu = {norm.mu}, r = {r})")

    def logs(self, lines=20):
        """Show recent logs"""
        print(f"📋 Recent Logs (last {lines} lines)")
        print("=" * 40)
        for name in LOG_FILES:
            log_file = os.path.join(self.logs_dir, name)
            if os.path.exists(log_file):
                print(f"\n📄 {name}:")
                try:
                    with open(log_file, 'r') as f:
                        for line in f.readlines()[-lines:]:
                            print(line.rstrip())
                except OSError as e:
                    print(f"Error reading {log_file}: {e}")


def build_parser():
    parser = argparse.ArgumentParser(
        description="Boussinesq Lab: fractional Boussinesq-Coriolis simulator and estimate verification",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python bqlab.py simulate ns_critical              # Run config/scenarios/ns_critical.cfg
  python bqlab.py simulate --set grid.n_per_axis=32 # Override any section.key
  python bqlab.py verify bilinear --seed 7          # Bilinear constant with another seed
  python bqlab.py verify all --convention paper       # Suites with the literal matrix entries
  python bqlab.py sweep --out-dir /tmp/sweep        # Band sweep into another directory
  python bqlab.py report                            # Aggregate reports.jsonl into CSV
        """
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', dest='config_path', help='Scenario .cfg file or name in config/scenarios')
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='SECTION.KEY=VALUE',
                        help='Override one configuration field (repeatable)')
    common.add_argument('--seed', type=int, help='Seed for the initial data and the random samples')
    common.add_argument('--out-dir', help='Directory for archives and reports')
    common.add_argument('--convention', choices=('paper', 'corrected', 'literal'),
                        help='Matrix entry convention (paper is the literal entries)')

    verbs = parser.add_subparsers(dest='command', required=True)
    simulate = verbs.add_parser('simulate', parents=[common], help='Run one scenario')
    simulate.add_argument('scenario', nargs='?', help='Scenario .cfg file or name (overrides --config)')
    verify = verbs.add_parser('verify', parents=[common], help='Run a verification suite')
    verify.add_argument('suite', choices=SUITE_NAMES)
    verbs.add_parser('sweep', parents=[common], help='Sweep the (Omega, N) band')
    report = verbs.add_parser('report', parents=[common], help='Aggregate JSON-lines reports into CSV')
    report.add_argument('--input', help='reports.jsonl to aggregate (default: in the output directory)')
    report.add_argument('--output', help='CSV path (default: next to the input)')
    verbs.add_parser('config', parents=[common], help='Show the resolved configuration')
    logs = verbs.add_parser('logs', parents=[common], help='Show recent logs')
    logs.add_argument('--lines', type=int, default=20, help='Number of log lines to show')
    return parser


def collect_overrides(args):
    """Flag values become section.key overrides, applied after --set"""
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"initial_data.seed={args.seed}")
    if args.out_dir:
        overrides.append(f"output.directory={args.out_dir}")
    if args.convention:
        overrides.append(f"symbols.convention={CONVENTION_ALIASES.get(args.convention, args.convention)}")
    return overrides


def main(argv=None):
    """
    Main entry point with proper error handling.

    Exit status is 0 when the command succeeded and every verdict passed.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config_path = getattr(args, 'scenario', None) or args.config_path

        try:
            lab = BoussinesqLab(config_path, collect_overrides(args))
        except ImportError as e:
            print(f"❌ Missing dependencies. Please run pip install -r requirements.txt: {e}")
            sys.exit(1)
        except Exception as e:
            print(f"❌ Failed to initialize Boussinesq Lab: {e}")
            sys.exit(1)

        try:
            if args.command == 'simulate':
                ok = lab.simulate()
            elif args.command == 'verify':
                ok = lab.verify(args.suite)
            elif args.command == 'sweep':
                ok = lab.sweep()
            elif args.command == 'report':
                ok = lab.report(args.input, args.output)
            elif args.command == 'config':
                lab.config_show()
                ok = True
            else:
                lab.logs(args.lines)
                ok = True
        except Exception as e:
            print(f"❌ Command execution failed: {e}")
            log_event(lab.error_logger, 'ERROR', 'Command execution failed', command=args.command, error=str(e))
            sys.exit(1)
        sys.exit(0 if ok else 1)

    except KeyboardInterrupt:
        print("\n🛑 Interrupted by user")
        sys.exit(0)


if __name__ == '__main__':
    main()
