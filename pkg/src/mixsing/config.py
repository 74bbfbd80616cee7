"""
Manage the configuration of the toolkit
"""
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import yaml

from mixsing.constants import AppInfo

JOBS_ENV_VAR = "MIXSING_JOBS"

DEFAULT_CONFIG = {
    'SOLVE_TOL': 1e-12,
    'UNSOLVE_TOL': 1e-4,
    'MIN_STARTS': 500,
    'START_BATCH': 50,
    'WEIGHT_FLOOR': 1e-3,
    'SEED': 20240917,
    'JOBS': None,
    'FIT_STARTS': 8,
    'FIT_MAX_ITER': 5000,
    'FIT_TOL': 1e-8,
    'C0': 0.02,
    'BOX': {
        'theta': [-10.0, 10.0],
        'v': [0.05, 25.0],
        'm': [-10.0, 10.0],
        'a': [1.0, 50.0],
        'b': [0.05, 50.0],
    },
    'X_GRID_POINTS': 4001,
    'T_MAX': 0.2,
    'T_HALVINGS': 6,
    'NODES_PER_UNIT': 64,
    'LOG_FILE_PATH': str(Path.home() / ".local" / AppInfo.name / "mixsing.log"),
}


def get_log_path() -> Path:
    """
    Returns the path to the log file as specified in the configuration,
    ensuring its parent directory exists.
    """
    config = load_config()
    log_file_path_str = config.get('LOG_FILE_PATH', DEFAULT_CONFIG['LOG_FILE_PATH'])
    log_path = Path(log_file_path_str)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    return log_path


def get_config_paths():
    """Returns the potential paths for the config file."""
    return [
        Path.home() / '.config' / AppInfo.name / 'config.yaml',
        Path('/etc') / AppInfo.name / 'config.yaml'
    ]


def get_user_config_path():
    """Returns the path to the user's config file."""
    return get_config_paths()[0]


def load_config(path: Optional[Path] = None) -> Dict[str, Any]:
    """
    Loads the configuration from `path`, or from the first config file found.
    If no config file is found, returns the default configuration.
    Merges the loaded configuration with default values to ensure all keys are present.
    """
    config_path = None
    user_config = {}

    candidates = [Path(path)] if path is not None else get_config_paths()
    for candidate in candidates:
        if candidate.exists():
            config_path = candidate
            break

    if config_path:
        with open(config_path, 'r') as f:
            user_config = yaml.safe_load(f) or {}

    config = DEFAULT_CONFIG.copy()
    config['BOX'] = dict(DEFAULT_CONFIG['BOX'])
    if user_config:
        box = user_config.pop('BOX', None)
        config.update(user_config)
        if isinstance(box, dict):
            config['BOX'].update(box)
        # A null in yaml reverts to the default
        for key, value in config.items():
            if value is None and key in DEFAULT_CONFIG:
                config[key] = DEFAULT_CONFIG[key]

    return config


def save_config(config):
    """Saves the configuration to the user's config file."""
    config_path = get_user_config_path()
    os.makedirs(config_path.parent, exist_ok=True)
    with open(config_path, 'w') as f:
        yaml.dump(config, f, default_flow_style=False)


def resolve_jobs(requested: Optional[int] = None, config: Optional[Dict[str, Any]] = None) -> int:
    """
    Number of worker threads: MIXSING_JOBS wins over the command line,
    which wins over the config file; the default is the logical core count.
    """
    env_value = os.environ.get(JOBS_ENV_VAR)
    if env_value:
        try:
            return max(1, int(env_value))
        except ValueError:
            raise ValueError(f"{JOBS_ENV_VAR} must be an integer, got '{env_value}'")
    if requested:
        return max(1, int(requested))
    if config and config.get('JOBS'):
        return max(1, int(config['JOBS']))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class SolverConfig:
    """Thresholds of the multi-start solvability oracle."""
    solve_tol: float = DEFAULT_CONFIG['SOLVE_TOL']
    unsolve_tol: float = DEFAULT_CONFIG['UNSOLVE_TOL']
    min_starts: int = DEFAULT_CONFIG['MIN_STARTS']
    batch: int = DEFAULT_CONFIG['START_BATCH']
    weight_floor: float = DEFAULT_CONFIG['WEIGHT_FLOOR']
    seed: int = DEFAULT_CONFIG['SEED']
    jobs: int = 1

    def __post_init__(self):
        for name in ("solve_tol", "unsolve_tol", "min_starts", "batch", "weight_floor", "jobs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.solve_tol >= self.unsolve_tol:
            raise ValueError("solve_tol must be below unsolve_tol")

    @classmethod
    def from_config(cls, config: Dict[str, Any], jobs: Optional[int] = None) -> "SolverConfig":
        return cls(
            solve_tol=float(config['SOLVE_TOL']),
            unsolve_tol=float(config['UNSOLVE_TOL']),
            min_starts=int(config['MIN_STARTS']),
            batch=int(config['START_BATCH']),
            weight_floor=float(config['WEIGHT_FLOOR']),
            seed=int(config['SEED']),
            jobs=resolve_jobs(jobs, config),
        )


@dataclass(frozen=True)
class FitConfig:
    """Settings of the multi-start maximum-likelihood fit."""
    starts: int = DEFAULT_CONFIG['FIT_STARTS']
    max_iter: int = DEFAULT_CONFIG['FIT_MAX_ITER']
    tol: float = DEFAULT_CONFIG['FIT_TOL']
    seed: int = DEFAULT_CONFIG['SEED']
    jobs: int = 1
    # coordinate index -> value held fixed during the fit
    fixed: Dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.starts < 1 or self.max_iter < 1 or self.tol <= 0 or self.jobs < 1:
            raise ValueError("starts, max_iter, tol and jobs must be positive")

    @classmethod
    def from_config(cls, config: Dict[str, Any], jobs: Optional[int] = None,
                    fixed: Optional[Dict[int, float]] = None) -> "FitConfig":
        return cls(
            starts=int(config['FIT_STARTS']),
            max_iter=int(config['FIT_MAX_ITER']),
            tol=float(config['FIT_TOL']),
            seed=int(config['SEED']),
            jobs=resolve_jobs(jobs, config),
            fixed=dict(fixed or {}),
        )


# commands whose output depends on the seed
STOCHASTIC_COMMANDS = ("polysys", "rate-study", "sample", "fit")


@dataclass(frozen=True)
class RunConfig:
    """Options shared by every command-line run."""
    command: str
    inputs: Tuple[str, ...] = ()
    output: Optional[str] = None
    seed: Optional[int] = None
    jobs: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    x_grid_points: int = DEFAULT_CONFIG['X_GRID_POINTS']
    t_max: float = DEFAULT_CONFIG['T_MAX']
    t_halvings: int = DEFAULT_CONFIG['T_HALVINGS']

    def __post_init__(self):
        if self.command in STOCHASTIC_COMMANDS and self.seed is None:
            raise ValueError(f"'{self.command}' needs a seed")
        if self.jobs < 1 or self.x_grid_points < 2 or self.t_max <= 0 or self.t_halvings < 1:
            raise ValueError("jobs, grid points, t_max and halvings must be positive")

    @classmethod
    def from_args(cls, command: str, config: Dict[str, Any], inputs: Sequence[str] = (),
                  output: Optional[str] = None, seed: Optional[int] = None,
                  jobs: Optional[int] = None, starts: Optional[int] = None,
                  fixed: Optional[Dict[int, float]] = None) -> "RunConfig":
        """Command-line values win over the merged configuration."""
        n_jobs = resolve_jobs(jobs, config)
        seed = int(config['SEED']) if seed is None else int(seed)
        solver = SolverConfig.from_config({**config, 'SEED': seed}, n_jobs)
        if starts is not None:
            solver = replace(solver, min_starts=int(starts))
        fit = FitConfig.from_config({**config, 'SEED': seed}, n_jobs, fixed)
        return cls(command, tuple(inputs), output, seed, n_jobs, solver, fit,
                   int(config['X_GRID_POINTS']), float(config['T_MAX']), int(config['T_HALVINGS']))
