# config.py
# Parses settings.cfg and scenario .cfg files into a validated RunConfig
#
# Every RunConfig field is addressable as "section.key"; the CLI --set flag and
# the scenario files use the same addressing.

import os
import math
import configparser
from datetime import datetime
from typing import List, Literal, Optional

import pytz
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .logging import setup_logger, log_event

config_logger = setup_logger('config', 'system.log')
error_logger = setup_logger('error', 'error.log')

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SETTINGS_PATH = os.path.join(REPO_ROOT, 'config', 'settings.cfg')
SCENARIO_DIR = os.path.join(REPO_ROOT, 'config', 'scenarios')

# Acceptance constants shared by the verification suites and the tests
TOLERANCES = {
    'transform_roundtrip': 1e-12,
    'parseval': 1e-12,
    'divergence_free': 1e-12,
    'trajectory_divergence': 1e-10,
    'reality': 1e-12,
    'projection_idempotence': 1e-14,
    'oracle_agreement': 1e-10,
    'semigroup_law': 1e-11,
    'partition_of_unity': 1e-12,
    'block_leakage': 1e-12,
    'bony_reconstruction': 1e-10,
    'nonlinear_oracle': 1e-11,
    'norm_axioms': 1e-12,
    'scaling_invariance': 1e-8,
    'closed_form_duhamel': 1e-8,
    'picard_tolerance': 1e-9,
    'final_norm_slack': 1e-6,
    'contraction_ratio': 0.5,
    'contraction_budget': 0.5,
    'integrator_agreement': 1e-4,
    'continuous_dependence': 1e-3,
    'resolution_drift': 0.10,
    'uniformity_collapse': 0.15,
}


# "paper" names the printed matrix entries
CONVENTION_ALIASES = {'paper': 'literal'}


def parse_float_list(value):
    """Comma separated numbers -> list of floats (empty string -> [])"""
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(v.strip()) for v in str(value).split(',') if v.strip()]


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid', validate_assignment=True)


class GridSettings(_Section):
    n_per_axis: int = Field(default=16, ge=4)
    box_length: float = Field(default=2.0 * math.pi, gt=0.0)
    refined_n_per_axis: int = Field(default=32, ge=4, description="Resolution used for drift checks")


class PhysicsSettings(_Section):
    nu: float = Field(default=1.0, gt=0.0)
    kappa: float = Field(default=1.0, gt=0.0)
    gravity: float = Field(default=1.0, gt=0.0)
    omega: float = 1.0
    brunt: float = Field(default=1.0, gt=0.0)
    alpha: float = Field(default=1.0, ge=0.5, lt=2.5)


class NormSettings(_Section):
    q: float = Field(default=2.0, ge=1.0)
    mu: float = Field(default=0.0, ge=0.0, lt=3.0)
    r: float = Field(default=math.inf, ge=1.0)
    s: Optional[float] = Field(default=None, description="Defaults to the critical index")


class ScenarioSettings(_Section):
    kind: Literal['fbcs', 'ns_coriolis', 'ns_critical'] = 'fbcs'


class InitialDataSettings(_Section):
    generator: Literal['random', 'homogeneous'] = 'random'
    amplitude: float = Field(default=0.01, ge=0.0)
    seed: int = 20240517
    band_index: int = Field(default=2, ge=1, description="Largest lattice index |m| carrying data")
    include_theta: bool = True
    variables: Literal['rescaled', 'physical'] = Field(
        default='rescaled', description="physical: the fourth generated component is θ0 and gets rescaled")


class TimeSettings(_Section):
    horizon: float = Field(default=1.0, gt=0.0)
    steps: int = Field(default=32, ge=1)
    picard_tol: float = Field(default=TOLERANCES['picard_tolerance'], gt=0.0)
    max_iter: int = Field(default=60, ge=1)
    method: Literal['euler', 'heun'] = 'heun'


class SweepSettings(_Section):
    omegas: List[float] = Field(default_factory=list)
    brunts: List[float] = Field(default_factory=list)
    alphas: List[float] = Field(default_factory=list,
                                description="Band sweep dissipation orders; empty keeps physics.alpha")
    amplitudes: List[float] = Field(default_factory=list,
                                    description="Band sweep amplitudes; empty keeps initial_data.amplitude")
    band_pairs: int = Field(default=20, ge=1)
    samples: int = Field(default=3, ge=1, description="Random fields per sweep point")
    workers: int = Field(default=1, ge=1)

    @field_validator('omegas', 'brunts', 'alphas', 'amplitudes', mode='before')
    @classmethod
    def _split_lists(cls, value):
        return parse_float_list(value)


class OutputSettings(_Section):
    directory: str = os.path.join('data', 'runs')
    timezone: str = 'UTC'
    write_snapshots: bool = True

    @field_validator('timezone')
    @classmethod
    def _known_timezone(cls, value):
        if value not in pytz.all_timezones_set:
            raise ValueError(f"unknown timezone: {value}")
        return value


class SymbolSettings(_Section):
    convention: Literal['corrected', 'literal'] = 'corrected'

    @field_validator('convention', mode='before')
    @classmethod
    def _paper_alias(cls, value):
        return CONVENTION_ALIASES.get(value, value)


SECTION_MODELS = {
    'grid': GridSettings,
    'physics': PhysicsSettings,
    'norms': NormSettings,
    'scenario': ScenarioSettings,
    'initial_data': InitialDataSettings,
    'time': TimeSettings,
    'sweep': SweepSettings,
    'output': OutputSettings,
    'symbols': SymbolSettings,
}


class RunConfig(BaseModel):
    """Complete description of one lab run (one section per config table)."""

    model_config = ConfigDict(extra='forbid')

    grid: GridSettings = Field(default_factory=GridSettings)
    physics: PhysicsSettings = Field(default_factory=PhysicsSettings)
    norms: NormSettings = Field(default_factory=NormSettings)
    scenario: ScenarioSettings = Field(default_factory=ScenarioSettings)
    initial_data: InitialDataSettings = Field(default_factory=InitialDataSettings)
    time: TimeSettings = Field(default_factory=TimeSettings)
    sweep: SweepSettings = Field(default_factory=SweepSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)
    symbols: SymbolSettings = Field(default_factory=SymbolSettings)

    @model_validator(mode='after')
    def _scenario_invariants(self):
        kind = self.scenario.kind
        if kind == 'fbcs':
            if self.physics.omega == 0:
                raise ValueError("the fbcs scenario needs a nonzero omega")
            if self.physics.nu != self.physics.kappa:
                raise ValueError("closed form unavailable: the fbcs scenario needs nu == kappa")
            return self

        # Reduced scenarios: no buoyancy data, Stokes-Coriolis propagator
        self.initial_data.include_theta = False
        if kind == 'ns_critical':
            if self.physics.omega != 0 or self.physics.alpha != 0.5 or self.norms.r != 1.0:
                log_event(config_logger, 'INFO', 'ns_critical forces omega=0, alpha=1/2, r=1',
                          omega=self.physics.omega, alpha=self.physics.alpha, r=self.norms.r)
            self.physics.omega = 0.0
            self.physics.alpha = 0.5
            self.norms.r = 1.0
        return self

    @property
    def uses_stokes_coriolis(self):
        return self.scenario.kind != 'fbcs'

    def regularity(self, alpha=None):
        """Regularity index s (critical value 4 − 2α − (3−μ)/q unless set)."""
        if self.norms.s is not None:
            return self.norms.s
        alpha = self.physics.alpha if alpha is None else alpha
        return 4.0 - 2.0 * alpha - (3.0 - self.norms.mu) / self.norms.q

    def phys_params(self, **changes):
        from .symbols import PhysParams

        values = self.physics.model_dump()
        values.update(changes)
        return PhysParams(**values)

    def norm_params(self, alpha=None, p=math.inf):
        from .spaces import NormParams

        return NormParams(s=self.regularity(alpha), q=self.norms.q, mu=self.norms.mu,
                          r=self.norms.r, p=p)

    def with_updates(self, **sections):
        """Copy with some fields replaced, e.g. with_updates(physics={'omega': 2.0})"""
        data = self.model_dump()
        for section, values in sections.items():
            data[section].update(values)
        return RunConfig.model_validate(data)

    def as_sections(self):
        """Flat {section: {key: str}} view used for manifests and the config verb"""
        sections = {}
        for section, values in self.model_dump().items():
            sections[section] = {}
            for key, value in values.items():
                if isinstance(value, list):
                    value = ','.join(repr(v) for v in value)
                sections[section][key] = str(value)
        return sections


def parse_override(text):
    """'section.key=value' -> (section, key, value)"""
    if '=' not in text or '.' not in text.split('=', 1)[0]:
        raise ValueError(f"override must look like section.key=value, got {text!r}")
    address, value = text.split('=', 1)
    section, key = address.strip().split('.', 1)
    if section not in SECTION_MODELS:
        raise ValueError(f"unknown config section: {section}")
    if key not in SECTION_MODELS[section].model_fields:
        raise ValueError(f"unknown config key: {section}.{key}")
    return section, key, value.strip()


def _read_cfg(parser, path, required):
    if not os.path.exists(path):
        if required:
            log_event(error_logger, 'ERROR', 'Config file not found', path=path)
            raise FileNotFoundError(f"config file not found: {path}")
        log_event(config_logger, 'WARN', 'Optional config file missing, using defaults', path=path)
        return
    try:
        parser.read(path, encoding='utf-8')
    except configparser.Error as e:
        log_event(error_logger, 'ERROR', 'Config file could not be parsed', path=path, error=str(e))
        raise


def load_run_config(path=None, overrides=None, settings_path=SETTINGS_PATH):
    """
    Build a RunConfig from settings.cfg, an optional scenario file and overrides.

    Later sources win: settings.cfg < path < overrides.
    """
    parser = configparser.ConfigParser()
    _read_cfg(parser, settings_path, required=False)
    if path:
        _read_cfg(parser, resolve_config_path(path), required=True)

    for override in overrides or []:
        section, key, value = parse_override(override)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value)

    data = {}
    for section in parser.sections():
        if section not in SECTION_MODELS:
            raise ValueError(f"unknown config section: [{section}]")
        data[section] = dict(parser.items(section))

    try:
        config = RunConfig.model_validate(data)
    except ValueError as e:
        log_event(error_logger, 'ERROR', 'Invalid run configuration', error=str(e))
        raise

    log_event(config_logger, 'INFO', 'Run configuration loaded',
              scenario=config.scenario.kind, grid=config.grid.n_per_axis,
              convention=config.symbols.convention, seed=config.initial_data.seed)
    return config


def resolve_config_path(path):
    """Accept a file path or the bare name of a file in config/scenarios"""
    if os.path.exists(path):
        return path
    candidate = os.path.join(SCENARIO_DIR, path if path.endswith('.cfg') else f"{path}.cfg")
    if os.path.exists(candidate):
        return candidate
    return path


def timestamp(tz_name='UTC'):
    """Current time in the configured timezone, ISO formatted"""
    tz = pytz.timezone(tz_name)
    return datetime.now(pytz.UTC).astimezone(tz).isoformat(timespec='seconds')
