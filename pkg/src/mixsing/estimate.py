"""
Sampling, maximum-likelihood fitting over a compact box, and numeric
Hellinger / total-variation distances.
"""
import logging
from dataclasses import dataclass
from math import ceil
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax

from mixsing.config import DEFAULT_CONFIG, FitConfig
from mixsing.constants import ErrorMessages, Family, Tolerances
from mixsing.errors import BadParams, GridTooCoarse, NoConvergedStart
from mixsing.kernels import envelope, log_density_at, mixture_cdf, mixture_density, partial_at
from mixsing.mixing import MixingMeasure, ParamBox, ParamVec, make_measure
from mixsing.utils import derive_seed, log_function_call, run_parallel

GENERATOR = "numpy.PCG64"
START_JITTER = 0.5

Density = Union[MixingMeasure, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True, eq=False)
class Sample:
    """An i.i.d. sample with the seed that reproduces it."""
    observations: np.ndarray
    seed: int
    generator: str = GENERATOR

    @property
    def n(self) -> int:
        return int(self.observations.size)

    def to_text(self) -> str:
        return "\n".join(repr(float(x)) for x in self.observations) + "\n"

    @classmethod
    def from_text(cls, text: str, seed: int = -1) -> "Sample":
        values = [float(line) for line in text.split() if line.strip()]
        if not values:
            raise BadParams("No observations in data file")
        return cls(np.asarray(values), seed, "file")


def sample(G0: MixingMeasure, n: int, seed: int) -> Sample:
    """
    Draws n observations: a component by weight, then the kernel.
    Skew-normal draws use θ + σ(δ|Z0| + √(1−δ²) Z1) with δ = m/√(1+m²).
    """
    if n < 1:
        raise BadParams(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    labels = rng.choice(G0.k, size=n, p=G0.weights_array())
    out = np.empty(n)
    for j, eta in enumerate(G0.atoms):
        idx = np.flatnonzero(labels == j)
        count = idx.size
        if count == 0:
            continue
        if G0.family == Family.SKEW_NORMAL:
            delta = eta.m / np.sqrt(1 + eta.m**2)
            z0 = np.abs(rng.standard_normal(count))
            z1 = rng.standard_normal(count)
            out[idx] = eta.theta + eta.sigma * (delta * z0 + np.sqrt(1 - delta**2) * z1)
        elif G0.family == Family.GAUSSIAN:
            out[idx] = eta.theta + eta.sigma * rng.standard_normal(count)
        else:
            out[idx] = rng.gamma(eta.a, 1.0 / eta.b, size=count)
    return Sample(out, int(seed))


@dataclass(frozen=True, eq=False)
class QuadratureScheme:
    """Composite Gauss–Legendre rule on [lo, hi]."""
    nodes: np.ndarray
    weights: np.ndarray
    lo: float
    hi: float

    @classmethod
    def for_interval(cls, lo: float, hi: float,
                     nodes_per_unit: int = DEFAULT_CONFIG['NODES_PER_UNIT']) -> "QuadratureScheme":
        if not hi > lo:
            raise BadParams(f"Empty quadrature interval [{lo}, {hi}]")
        panels = max(1, int(ceil(hi - lo)))
        base_x, base_w = leggauss(nodes_per_unit)
        edges = np.linspace(lo, hi, panels + 1)
        half = np.diff(edges) / 2
        mid = (edges[:-1] + edges[1:]) / 2
        nodes = (mid[:, None] + half[:, None] * base_x[None, :]).ravel()
        weights = (half[:, None] * base_w[None, :]).ravel()
        return cls(nodes, weights, float(lo), float(hi))

    @classmethod
    def for_measures(cls, *measures: MixingMeasure,
                     nodes_per_unit: int = DEFAULT_CONFIG['NODES_PER_UNIT']) -> "QuadratureScheme":
        lo, hi = envelope(*measures)
        return cls.for_interval(lo, hi, nodes_per_unit)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))

    def coverage(self, p: Density) -> float:
        if isinstance(p, MixingMeasure):
            return float(mixture_cdf(p, self.hi) - mixture_cdf(p, self.lo))
        return self.integrate(p(self.nodes))

    def check_coverage(self, *densities: Density) -> None:
        for p in densities:
            mass = self.coverage(p)
            if mass < 1 - Tolerances.MASS_COVERAGE:
                raise GridTooCoarse(ErrorMessages.GRID_TOO_COARSE.format(
                    mass=mass, tol=Tolerances.MASS_COVERAGE))


def _values(p: Density, x: np.ndarray) -> np.ndarray:
    if isinstance(p, MixingMeasure):
        return mixture_density(p, x)
    return np.asarray(p(x), dtype=float)


def hellinger(p: Density, q: Density, scheme: Optional[QuadratureScheme] = None) -> float:
    """h(p, q) with h² = ½∫(√p − √q)²."""
    scheme = scheme or _default_scheme(p, q)
    scheme.check_coverage(p, q)
    diff = np.sqrt(np.clip(_values(p, scheme.nodes), 0, None)) - \
        np.sqrt(np.clip(_values(q, scheme.nodes), 0, None))
    h2 = 0.5 * scheme.integrate(diff**2)
    return float(np.sqrt(np.clip(h2, 0.0, 1.0)))


def tv(p: Density, q: Density, scheme: Optional[QuadratureScheme] = None) -> float:
    """V(p, q) = ½∫|p − q|."""
    scheme = scheme or _default_scheme(p, q)
    scheme.check_coverage(p, q)
    value = 0.5 * scheme.integrate(np.abs(_values(p, scheme.nodes) - _values(q, scheme.nodes)))
    return float(np.clip(value, 0.0, 1.0))


def _default_scheme(p: Density, q: Density) -> QuadratureScheme:
    measures = [d for d in (p, q) if isinstance(d, MixingMeasure)]
    if not measures:
        raise BadParams("A quadrature scheme is required for plain density callables")
    return QuadratureScheme.for_measures(*measures)


@dataclass(frozen=True)
class FitResult:
    """Best fit over all starts."""
    measure: MixingMeasure
    loglik: float
    starts: int
    converged: bool
    iterations: int = 0


def _project_weights(w: np.ndarray, c0: float) -> np.ndarray:
    """Euclidean projection onto {w ≥ c0, Σ w = 1}."""
    k = w.size
    target = 1.0 - k * c0
    y = w - c0
    u = np.sort(y)[::-1]
    css = np.cumsum(u)
    ranks = np.arange(1, k + 1)
    cond = u - (css - target) / ranks > 0
    r = ranks[cond][-1]
    shift = (css[r - 1] - target) / r
    return np.maximum(y - shift, 0.0) + c0


def loglik(data: np.ndarray, family: str, coords: np.ndarray, weights: np.ndarray) -> float:
    """Σ log p_G(x_i) for a (k, d) coordinate array."""
    logs = np.stack([np.log(w) + log_density_at(family, c, data) for c, w in zip(coords, weights)])
    return float(np.sum(logsumexp(logs, axis=0)))


def _to_measure(family: str, coords: np.ndarray, weights: np.ndarray) -> MixingMeasure:
    # merge atoms that landed on each other
    merged: List[Tuple[np.ndarray, float]] = []
    for c, w in zip(coords, weights):
        for i, (other, ow) in enumerate(merged):
            if np.max(np.abs(other - c)) <= Tolerances.ATOM_DISTINCT:
                merged[i] = (other, ow + w)
                break
        else:
            merged.append((np.array(c, dtype=float), float(w)))
    total = sum(w for _, w in merged)
    return make_measure([ParamVec(family, tuple(c)) for c, _ in merged],
                        [w / total for _, w in merged])


def _initial_coords(data: np.ndarray, family: str, k: int, box: ParamBox) -> np.ndarray:
    """Quantile seeding: one chunk of the sorted data per component."""
    chunks = np.array_split(np.sort(data), k)
    rows = []
    for chunk in chunks:
        chunk = chunk if chunk.size > 1 else data
        mean, var = float(np.mean(chunk)), float(np.var(chunk)) or 1.0
        if family == Family.GAMMA:
            mean = max(mean, 1e-3)
            rows.append([mean**2 / var, mean / var])
        elif family == Family.SKEW_NORMAL:
            rows.append([mean, var, 0.0])
        else:
            rows.append([mean, var])
    return box.clip(np.array(rows, dtype=float))


def _starts(data: np.ndarray, family: str, k: int, box: ParamBox, cfg: FitConfig) -> List[np.ndarray]:
    base = _initial_coords(data, family, k, box)
    starts = [base]
    span = box.upper() - box.lower()
    for s in range(1, cfg.starts):
        rng = np.random.default_rng(derive_seed(cfg.seed, "fit-start", s))
        jitter = rng.standard_normal(base.shape) * START_JITTER * np.minimum(span, np.std(data) + 1.0)
        starts.append(box.clip(base + jitter))
    return starts


def _apply_fixed(coords: np.ndarray, fixed: Dict[int, float]) -> np.ndarray:
    coords = np.array(coords, dtype=float)
    for c, value in fixed.items():
        coords[:, c] = value
    return coords


def _em_gaussian(data: np.ndarray, coords: np.ndarray, k: int, box: ParamBox,
                 cfg: FitConfig) -> Tuple[np.ndarray, np.ndarray, float, bool, int]:
    n = data.size
    weights = np.full(k, 1.0 / k)
    coords = _apply_fixed(coords, cfg.fixed)
    previous = loglik(data, Family.GAUSSIAN, coords, weights) / n
    for it in range(1, cfg.max_iter + 1):
        logs = np.stack([np.log(w) + log_density_at(Family.GAUSSIAN, c, data)
                         for c, w in zip(coords, weights)])
        resp = np.exp(logs - logsumexp(logs, axis=0))
        mass = resp.sum(axis=1) + 1e-300
        theta = resp @ data / mass
        var = np.einsum("jn,jn->j", resp, (data[None, :] - theta[:, None]) ** 2) / mass
        coords = _apply_fixed(box.clip(np.column_stack([theta, var])), cfg.fixed)
        weights = _project_weights(mass / n, box.mass_floor)
        current = loglik(data, Family.GAUSSIAN, coords, weights) / n
        if abs(current - previous) < cfg.tol:
            return coords, weights, current * n, True, it
        previous = current
    return coords, weights, previous * n, False, cfg.max_iter


def _ascent(data: np.ndarray, family: str, coords: np.ndarray, k: int, box: ParamBox,
            cfg: FitConfig) -> Tuple[np.ndarray, np.ndarray, float, bool, int]:
    """L-BFGS-B on (coordinates, softmax logits) with the analytic score."""
    d = coords.shape[1]
    n = data.size
    c0 = box.mass_floor
    scale = 1.0 - k * c0
    coords = _apply_fixed(coords, cfg.fixed)

    def unpack(z):
        return z[:k * d].reshape(k, d), c0 + scale * softmax(z[k * d:])

    def objective(z):
        cs, ws = unpack(z)
        dens = np.exp(np.stack([log_density_at(family, c, data) for c in cs]))
        p = np.clip(ws @ dens, 1e-300, None)
        value = -np.sum(np.log(p)) / n
        grad_c = np.zeros((k, d))
        for j in range(k):
            for c in range(d):
                alpha = [0] * d
                alpha[c] = 1
                grad_c[j, c] = -ws[j] * np.sum(partial_at(family, cs[j], data, alpha) / p) / n
        g_w = -np.sum(dens / p[None, :], axis=1) / n
        s = softmax(z[k * d:])
        grad_u = scale * s * (g_w - np.dot(g_w, s))
        return value, np.concatenate([grad_c.ravel(), grad_u])

    lower = np.tile(box.lower(), k).reshape(k, d)
    upper = np.tile(box.upper(), k).reshape(k, d)
    for c, value in cfg.fixed.items():
        lower[:, c] = value
        upper[:, c] = value
    bounds = list(zip(lower.ravel(), upper.ravel())) + [(None, None)] * k
    z0 = np.concatenate([box.clip(coords).ravel(), np.zeros(k)])
    res = minimize(objective, z0, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": cfg.max_iter, "ftol": cfg.tol, "gtol": 1e-10})
    cs, ws = unpack(res.x)
    return cs, ws, float(-res.fun * n), bool(res.success), int(res.nit)


@log_function_call
def fit_mle(data: Sequence[float], family: str, k: int, box: ParamBox,
            cfg: Optional[FitConfig] = None) -> FitResult:
    """
    Multi-start maximum likelihood over the box with weights ≥ c0.

    Gaussian fits run EM with box projection; skew-normal and Gamma fits run
    L-BFGS-B with the analytic gradient.

    Raises:
        NoConvergedStart: if every start hit the iteration cap
    """
    cfg = cfg or FitConfig()
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        raise BadParams("fit_mle needs data")
    if k < 1:
        raise BadParams(f"k must be >= 1, got {k}")
    if box.family != family:
        raise BadParams(f"Box is for {box.family}, fit requested for {family}")
    box.check_components(k)

    def run(start):
        if family == Family.GAUSSIAN:
            return _em_gaussian(data, start, k, box, cfg)
        return _ascent(data, family, start, k, box, cfg)

    starts = _starts(data, family, k, box, cfg)
    results = run_parallel(run, starts, cfg.jobs)
    converged = [r for r in results if r[3]]
    if not converged:
        raise NoConvergedStart(ErrorMessages.NO_CONVERGED_START.format(starts=len(starts)))
    coords, weights, ll, best_converged, iters = max(results, key=lambda r: r[2])
    measure = _to_measure(family, coords, weights)
    logging.info(f"fit_mle {family} k={k} n={data.size}: loglik {ll:.6f} "
                 f"({len(converged)}/{len(starts)} starts converged)")
    return FitResult(measure, ll, len(starts), best_converged, iters)
