"""
Convergence-rate studies: fit the MLE over a grid of sample sizes, measure
transportation errors against G0 and regress log-median-error on log n.
"""
import csv
import json
import logging
from dataclasses import dataclass, field
from math import isinf
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import linregress

from mixsing.classify import SingularityReport, classify
from mixsing.config import FitConfig, SolverConfig, load_config
from mixsing.constants import ErrorMessages, Family, Setting
from mixsing.errors import BadParams, DegenerateRegression, NoConvergedStart
from mixsing.estimate import fit_mle, sample
from mixsing.mixing import MixingMeasure, ParamBox, make_measure
from mixsing.transport import TransportSpec, distance, per_coordinate_error
from mixsing.utils import derive_seed, log_function_call, run_parallel

MIN_GRID_POINTS = 4
MIN_REPS = 5
MAX_FITS = 1000
SLOW_EXPONENT = 1.0 / 6.0
COORD_PREFIX = "coord_"


def fit_slope(points: Sequence[Tuple[float, float]]) -> Tuple[float, float]:
    """
    Ordinary least squares of log(error) on log(n).

    Args:
        points: (n, error) pairs

    Returns:
        tuple: (slope, standard error of the slope)

    Raises:
        DegenerateRegression: fewer than 4 distinct n, or an error that is not positive
    """
    ns = np.array([p[0] for p in points], dtype=float)
    errs = np.array([p[1] for p in points], dtype=float)
    if len(np.unique(ns)) < MIN_GRID_POINTS or np.any(ns <= 0) or not np.all(errs > 0):
        raise DegenerateRegression(ErrorMessages.DEGENERATE_REGRESSION.format(need=MIN_GRID_POINTS))
    logs = np.log(errs)
    if np.ptp(logs) == 0.0:
        return 0.0, 0.0
    fit = linregress(np.log(ns), logs)
    return float(fit.slope), float(fit.stderr)


def predicted_exponent(report: SingularityReport, spec: TransportSpec) -> float:
    """
    Rate exponent for a distance: −1/(2·max(r, level + 1)) for W_r, and
    −1/(2·max_c max(κ_c, κ*_c)) for index-based costs with κ* the
    reported index. Infinite levels predict 0.
    """
    level = report.level.value
    if isinf(level):
        return 0.0
    if spec.order is not None:
        return -1.0 / (2.0 * max(spec.order, level + 1))
    index = report.index_set[0] if report.index_set else ()
    if any(isinf(x) for x in index):
        return 0.0
    top = max([spec.exponent] + [float(x) for x in index])
    return -1.0 / (2.0 * top)


def predicted_coordinate_exponents(report: SingularityReport, dim: int) -> List[float]:
    """−1/(2κ*_c) per coordinate."""
    index = report.index_set[0] if report.index_set else (1.0,) * dim
    return [0.0 if isinf(x) else -1.0 / (2.0 * float(x)) for x in index[:dim]]


@dataclass(frozen=True)
class SlopeSummary:
    name: str
    predicted: float
    slope: Optional[float]
    stderr: Optional[float]
    points: Tuple[Tuple[int, float], ...]
    note: str = ""

    @property
    def reported(self) -> bool:
        return self.slope is not None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "predicted": self.predicted,
            "slope": self.slope,
            "stderr": self.stderr,
            "medians": [[n, v] for n, v in self.points],
            "note": self.note,
        }


@dataclass(frozen=True)
class RateStudy:
    """Per-cell errors, medians and fitted slopes of one study."""
    base: MixingMeasure
    setting: str
    k: int
    distances: Tuple[str, ...]
    n_grid: Tuple[int, ...]
    reps: int
    seed: int
    report: SingularityReport
    rows: Tuple[Tuple[int, int, str, float], ...]
    dropped: Tuple[Tuple[int, int], ...]
    slopes: Dict[str, SlopeSummary] = field(default_factory=dict)

    def medians(self, name: str) -> List[Tuple[int, float]]:
        out = []
        for n in self.n_grid:
            values = [v for nn, _, d, v in self.rows if nn == n and d == name]
            if values:
                out.append((n, float(np.median(values))))
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "base": self.base.to_dict(),
            "setting": self.setting,
            "k": self.k,
            "label": self.report.label,
            "level": self.report.level.to_dict(),
            "distances": list(self.distances),
            "n_grid": list(self.n_grid),
            "reps": self.reps,
            "seed": self.seed,
            "dropped": [list(cell) for cell in self.dropped],
            "slopes": {name: s.to_dict() for name, s in self.slopes.items()},
        }

    def write_csv(self, path) -> None:
        """Long format: n, rep, distance, value."""
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["n", "rep", "distance", "value"])
            for n, rep, name, value in self.rows:
                writer.writerow([n, rep, name, repr(value)])

    def write_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)


def _check_grid(n_grid: Sequence[int], reps: int) -> Tuple[int, ...]:
    grid = tuple(int(n) for n in n_grid)
    if len(grid) < MIN_GRID_POINTS:
        raise BadParams(f"The n-grid needs at least {MIN_GRID_POINTS} points, got {len(grid)}")
    if any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
        raise BadParams(f"The n-grid must be strictly increasing and positive: {grid}")
    if reps < MIN_REPS:
        raise BadParams(f"reps must be >= {MIN_REPS}, got {reps}")
    if len(grid) * reps >= MAX_FITS:
        raise BadParams(f"{len(grid) * reps} fits requested, the cap is {MAX_FITS}")
    return grid


def _summarize(name: str, predicted: float, medians: List[Tuple[int, float]],
               allow_slow: bool) -> SlopeSummary:
    points = tuple(medians)
    if abs(predicted) < SLOW_EXPONENT and not allow_slow:
        note = (f"predicted exponent {predicted:.4g} is slower than n^(-1/6); "
                "no slope reported, use the witness checks instead")
        logging.warning(f"{name}: {note}")
        return SlopeSummary(name, predicted, None, None, points, note)
    try:
        slope, stderr = fit_slope(medians)
    except DegenerateRegression as e:
        logging.warning(f"{name}: {e}")
        return SlopeSummary(name, predicted, None, None, points, str(e))
    logging.info(f"{name}: slope {slope:.4f} ± {stderr:.4f}, predicted {predicted:.4f}")
    return SlopeSummary(name, predicted, slope, stderr, points)


@log_function_call
def run_rate_study(G0: MixingMeasure, setting: str, specs: Sequence[TransportSpec],
                   n_grid: Sequence[int], reps: int, seed: int,
                   k: Optional[int] = None, box: Optional[ParamBox] = None,
                   fit_cfg: Optional[FitConfig] = None, per_coordinate: bool = False,
                   allow_slow: bool = False, jobs: int = 1, known_variance: bool = False,
                   solver_cfg: Optional[SolverConfig] = None,
                   report: Optional[SingularityReport] = None) -> RateStudy:
    """
    Runs |n_grid| × reps independent (sample, fit, measure) cells and
    regresses the median error at each n.

    Args:
        G0 (MixingMeasure): True mixing measure
        setting (str): "e" (k = k0) or "o" (k > k0)
        specs: Distances measured against G0
        n_grid: Strictly increasing sample sizes, at least 4
        reps (int): Replicates per sample size, at least 5
        seed (int): Base seed; every cell derives its own
        per_coordinate (bool): Also record coupling-weighted coordinate errors
        allow_slow (bool): Report slopes whose predicted magnitude is below 1/6

    Returns:
        RateStudy: Cells that raised NoConvergedStart are listed in `dropped`
    """
    grid = _check_grid(n_grid, reps)
    if setting == Setting.EXACT:
        k = G0.k if k is None else k
        if k != G0.k:
            raise BadParams(f"Exact-fitted studies fit k = k0 = {G0.k}, got k={k}")
    elif setting == Setting.OVER:
        if k is None or k <= G0.k:
            raise BadParams(f"Over-fitted studies need k > k0 = {G0.k}")
    else:
        raise BadParams(f"Unknown setting '{setting}'")
    if not specs and not per_coordinate:
        raise BadParams("Nothing to measure: give a distance or per_coordinate")
    base_cfg = fit_cfg or FitConfig()
    box = box or ParamBox.from_config(G0.family, load_config())
    for spec in specs:
        spec.check_dimension(G0.dim)

    report = report or classify(G0, setting, k, box.mass_floor, solver_cfg, known_variance)
    coord_names = [COORD_PREFIX + name for name in Family.COORDINATES[G0.family]]
    live_coords = [c for c in range(G0.dim) if c not in base_cfg.fixed]
    names = [s.name for s in specs] + ([coord_names[c] for c in live_coords] if per_coordinate else [])
    coupling = TransportSpec.wasserstein(1)

    def run_cell(cell: Tuple[int, int]):
        n, rep = cell
        data = sample(G0, n, derive_seed(seed, "sample", n, rep)).observations
        cfg = FitConfig(base_cfg.starts, base_cfg.max_iter, base_cfg.tol,
                        derive_seed(seed, "fit", n, rep), 1, dict(base_cfg.fixed))
        try:
            fit = fit_mle(data, G0.family, k, box, cfg)
        except NoConvergedStart as e:
            logging.warning(f"Dropping cell n={n} rep={rep}: {e}")
            return None
        values = [(s.name, distance(s, fit.measure, G0)[0]) for s in specs]
        if per_coordinate:
            _, plan = distance(coupling, fit.measure, G0)
            errors = per_coordinate_error(plan, fit.measure, G0)
            values.extend((coord_names[c], float(errors[c])) for c in live_coords)
        return values

    cells = [(n, rep) for n in grid for rep in range(reps)]
    logging.info(f"Rate study {setting} k={k} on {len(cells)} cells, jobs={jobs}")
    results = run_parallel(run_cell, cells, jobs)

    rows, dropped = [], []
    for (n, rep), values in zip(cells, results):
        if values is None:
            dropped.append((n, rep))
            continue
        rows.extend((n, rep, name, float(v)) for name, v in values)

    study = RateStudy(G0, setting, k, tuple(names), grid, reps, int(seed), report,
                      tuple(rows), tuple(dropped))
    slopes = {}
    for spec in specs:
        slopes[spec.name] = _summarize(spec.name, predicted_exponent(report, spec),
                                       study.medians(spec.name), allow_slow)
    if per_coordinate:
        predicted = predicted_coordinate_exponents(report, G0.dim)
        for c in live_coords:
            name = coord_names[c]
            slopes[name] = _summarize(name, predicted[c], study.medians(name), allow_slow)
    study.slopes.update(slopes)
    if dropped:
        logging.warning(f"{len(dropped)} of {len(cells)} cells dropped")
    return study


@dataclass(frozen=True)
class Preset:
    """A ready-made study."""
    name: str
    base: MixingMeasure
    setting: str
    specs: Tuple[TransportSpec, ...]
    k: int
    n_grid: Tuple[int, ...] = (1000, 2000, 4000, 8000, 16000)
    reps: int = 20
    per_coordinate: bool = False
    known_variance: bool = False
    fixed: Dict[int, float] = field(default_factory=dict)


PRESETS: Dict[str, Preset] = {
    "s0-gauss": Preset(
        "s0-gauss",
        make_measure([(-2.0, 1.0), (2.0, 1.0)], [0.4, 0.6], Family.GAUSSIAN),
        Setting.EXACT, (TransportSpec.wasserstein(1),), 2),
    "o-location": Preset(
        "o-location",
        make_measure([(0.0, 1.0)], [1.0], Family.GAUSSIAN),
        Setting.OVER, (TransportSpec.wasserstein(2),), 2,
        known_variance=True, fixed={1: 1.0}),
    "s1-skew": Preset(
        "s1-skew",
        make_measure([(0.0, 2.0, 1.0), (0.0, 5.0, 2.0)], [0.4, 0.6], Family.SKEW_NORMAL),
        Setting.EXACT, (TransportSpec.wasserstein(1),), 2, per_coordinate=True),
}


def run_preset(name: Union[str, Preset], seed: int, fit_cfg: Optional[FitConfig] = None,
               box: Optional[ParamBox] = None, jobs: int = 1, reps: Optional[int] = None,
               n_grid: Optional[Sequence[int]] = None, allow_slow: bool = False,
               solver_cfg: Optional[SolverConfig] = None) -> RateStudy:
    preset = PRESETS[name] if isinstance(name, str) else name
    base_cfg = fit_cfg or FitConfig()
    cfg = FitConfig(base_cfg.starts, base_cfg.max_iter, base_cfg.tol, base_cfg.seed,
                    base_cfg.jobs, {**base_cfg.fixed, **preset.fixed})
    return run_rate_study(
        preset.base, preset.setting, preset.specs,
        n_grid or preset.n_grid, reps or preset.reps, seed,
        k=preset.k, box=box, fit_cfg=cfg, per_coordinate=preset.per_coordinate,
        allow_slow=allow_slow, jobs=jobs, known_variance=preset.known_variance,
        solver_cfg=solver_cfg)
