"""
Limiting polynomial systems and a numeric solvability oracle.

Three system families are built here:

    skew      Σ_j Σ_α c_{α,β}(v0, m0)/α! d_j² a_j^α1 b_j^α2 c_j^α3 = 0, one row per basis index β
    gaussian  Σ_j Σ_{n1+2n2=w} c_j² a_j^n1 b_j^n2 / (n1! n2!) = 0, w = 1..r
    sbar      Σ_i a_i b_i^u c_i^(u+1) = 0, u = 0..s

Solvability is decided by multi-start least squares on a normalized
parametrization that keeps the weight unknowns away from zero and the
remaining unknowns away from the origin.
"""
import hashlib
import logging
from dataclasses import dataclass, field
from itertools import combinations, product
from math import factorial, inf
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares
from scipy.special import softmax

from mixsing.config import SolverConfig
from mixsing.constants import ErrorMessages, Limits, Tolerances, Verdict
from mixsing.errors import BadParams, OrderTooHigh, PoleAtZeroShape
from mixsing.reduce import basis_indices, reduce_skew, weighted_degree
from mixsing.utils import derive_seed, run_parallel

SKEW = "skew"
GAUSSIAN = "gaussian"
SBAR = "sbar"

START_DF = 2.0
MAX_RBAR_ORDER = 12

# Verdicts pinned so that a flaky optimizer cannot flip them.
KNOWN_FACTS: Dict[str, Any] = {
    "rbar": {1: 4, 2: 6},
    "rho_l1": 4,
    "rho": {(1.0, 2.0, 2): 5, (1.0, -2.0, 2): 5, (1.0, 0.1, 2): 6},
}


@dataclass(frozen=True, eq=False)
class PolySystem:
    """
    Σ_j Σ_t coefs[e, j, t] Π_u x_{j,u}^{exponents[t, u]} = 0 for every equation e.

    `degrees` is the weighted degree of each unknown under the scaling the
    system is homogeneous for; the unknown named in `weight` plays the
    mixing-weight role and enters squared.
    """
    kind: str
    params: Dict[str, Any]
    names: Tuple[str, ...]
    n_comp: int
    exponents: np.ndarray
    coefs: np.ndarray
    rows: Tuple[Tuple[int, ...], ...]
    degrees: Tuple[int, ...]
    weight: Optional[str] = None

    @property
    def n_eq(self) -> int:
        return self.coefs.shape[0]

    @property
    def n_unknowns(self) -> int:
        return self.n_comp * len(self.names)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Equation values at an (n_comp, n_names) assignment."""
        x = np.asarray(x, dtype=float).reshape(self.n_comp, len(self.names))
        mono = np.prod(x[:, None, :] ** self.exponents[None, :, :], axis=2)
        return np.einsum("ejt,jt->e", self.coefs, mono)

    def residual(self, x: np.ndarray) -> float:
        """F = Σ eq²."""
        return float(np.sum(self.evaluate(x) ** 2))

    def subsystem(self, keep: Sequence[int], kind: Optional[str] = None) -> "PolySystem":
        keep = list(keep)
        return PolySystem(kind or self.kind, dict(self.params, rows_kept=keep), self.names,
                          self.n_comp, self.exponents, self.coefs[keep],
                          tuple(self.rows[i] for i in keep), self.degrees, self.weight)

    def vm_free(self) -> "PolySystem":
        """Rows with β3 = 0; their coefficients do not depend on (v0, m0)."""
        if self.kind != SKEW:
            raise BadParams("Only skew systems have a (v, m)-free part")
        return self.subsystem([i for i, beta in enumerate(self.rows) if beta[2] == 0])

    def digest(self) -> str:
        h = hashlib.blake2b(digest_size=8)
        h.update(repr((self.kind, self.names, self.n_comp, self.rows)).encode())
        h.update(np.ascontiguousarray(self.exponents).tobytes())
        h.update(np.round(self.coefs, 14).tobytes())
        return h.hexdigest()

    def describe(self) -> Dict[str, Any]:
        return {"system": self.kind, **{k: v for k, v in self.params.items()},
                "equations": self.n_eq, "unknowns": self.n_unknowns}


def build_gaussian_system(l: int, r: int) -> PolySystem:
    """
    r equations in 3(l+1) unknowns (a_j, b_j, c_j), c_j in the weight role.
    """
    if l < 1 or r < 1:
        raise BadParams(f"l and r must be >= 1, got l={l}, r={r}")
    monomials = [(n1, n2) for n1 in range(r + 1) for n2 in range(r + 1) if 1 <= n1 + 2 * n2 <= r]
    exponents = np.array([(n1, n2, 2) for n1, n2 in monomials], dtype=float)
    coefs = np.zeros((r, l + 1, len(monomials)))
    for w in range(1, r + 1):
        for t, (n1, n2) in enumerate(monomials):
            if n1 + 2 * n2 == w:
                coefs[w - 1, :, t] = 1.0 / (factorial(n1) * factorial(n2))
    rows = tuple((w,) for w in range(1, r + 1))
    return PolySystem(GAUSSIAN, {"l": l, "r": r}, ("a", "b", "c"), l + 1, exponents, coefs,
                      rows, (1, 2, 0), weight="c")


def skew_rows(r: int) -> List[Tuple[int, int, int]]:
    """Basis indices β with weighted degree in 1..r, ordered by degree then β3."""
    rows = [b for b in basis_indices(2 * r) if 1 <= weighted_degree(b) <= r]
    return sorted(rows, key=lambda b: (weighted_degree(b), b[2], b))


def build_skew_system(v0: float, m0: float, l: int, r: int) -> PolySystem:
    """
    2r − 1 equations in 4(l+1) unknowns (a_j, b_j, c_j, d_j).

    Raises:
        PoleAtZeroShape: if m0 = 0
        OrderTooHigh: if r > 6
    """
    if m0 == 0:
        raise PoleAtZeroShape(ErrorMessages.POLE_AT_ZERO_SHAPE)
    if v0 <= 0:
        raise BadParams(f"v0 must be > 0, got {v0}")
    if l < 1 or r < 1:
        raise BadParams(f"l and r must be >= 1, got l={l}, r={r}")
    if r > Limits.MAX_ORDER:
        raise OrderTooHigh(ErrorMessages.ORDER_TOO_HIGH.format(order=r, cap=Limits.MAX_ORDER))
    alphas = [a for a in product(range(r + 1), repeat=3) if 1 <= weighted_degree(a) <= r]
    alphas.sort(key=lambda a: (weighted_degree(a), a))
    rows = skew_rows(r)
    exponents = np.array([(a[0], a[1], a[2], 2) for a in alphas], dtype=float)
    coefs = np.zeros((len(rows), l + 1, len(alphas)))
    for t, alpha in enumerate(alphas):
        fact = factorial(alpha[0]) * factorial(alpha[1]) * factorial(alpha[2])
        for coef, kappa in reduce_skew(alpha).terms:
            if kappa in rows and weighted_degree(kappa) == weighted_degree(alpha):
                coefs[rows.index(kappa), :, t] += coef.evaluate(v0, m0) / fact
    return PolySystem(SKEW, {"v0": v0, "m0": m0, "l": l, "r": r}, ("a", "b", "c", "d"), l + 1,
                      exponents, coefs, tuple(rows), (1, 2, 2, 0), weight="d")


def _check_sbar_inputs(a: Sequence[float], b: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size < 2:
        raise BadParams("sbar systems need matching weight and shape vectors of length >= 2")
    if np.any(a <= 0):
        raise BadParams("sbar weights must be > 0")
    if np.any(b == 0) or len(set(b.tolist())) != b.size:
        raise BadParams("sbar shapes must be nonzero and pairwise distinct")
    if not (np.any(b > 0) and np.any(b < 0)):
        raise BadParams("sbar shapes must contain both signs")
    return a, b


def build_sbar_system(a: Sequence[float], b: Sequence[float], s: int) -> PolySystem:
    """s + 1 equations Σ_i a_i b_i^u c_i^(u+1) = 0 in the unknowns c_i."""
    a, b = _check_sbar_inputs(a, b)
    if s < 0:
        raise BadParams(f"s must be >= 0, got {s}")
    exponents = np.arange(1, s + 2, dtype=float)[:, None]
    coefs = np.zeros((s + 1, a.size, s + 1))
    for u in range(s + 1):
        coefs[u, :, u] = a * b**u
    return PolySystem(SBAR, {"a": a.tolist(), "b": b.tolist(), "s": s}, ("c",), a.size,
                      exponents, coefs, tuple((u,) for u in range(s + 1)), (1,))


@dataclass(frozen=True)
class SolvabilityVerdict:
    """Outcome of the solvability oracle; `witness` maps unknown names to per-component values."""
    status: str
    residual: float
    starts: int
    solve_tol: float
    unsolve_tol: float
    witness: Optional[Dict[str, List[float]]] = None
    start_index: Optional[int] = None

    @property
    def solvable(self) -> bool:
        return self.status == Verdict.SOLVABLE

    @property
    def unsolvable(self) -> bool:
        return self.status == Verdict.UNSOLVABLE

    def to_dict(self) -> Dict[str, Any]:
        return {"verdict": self.status, "residual": self.residual, "starts": self.starts,
                "solve_tol": self.solve_tol, "unsolve_tol": self.unsolve_tol,
                "witness": self.witness}


class _Parametrization:
    """
    Maps free vectors to normalized assignments: weights e_j = floor +
    (1 − n·floor)·softmax(u), other unknowns rescaled by the weighted
    homogeneity so that Σ_j e_j Σ_u |x_ju|^(4/deg_u) = 1.
    """

    def __init__(self, system: PolySystem, floor: float):
        self.system = system
        self.floor = floor
        self.w_idx = system.names.index(system.weight) if system.weight else None
        self.free_idx = [i for i in range(len(system.names)) if i != self.w_idx]
        self.free_deg = np.array([system.degrees[i] for i in self.free_idx], dtype=float)
        self.n = system.n_comp
        if self.w_idx is not None and floor * self.n >= 1:
            raise BadParams(f"weight floor {floor} too large for {self.n} components")

    @property
    def size(self) -> int:
        return self.n * len(self.free_idx) + (self.n if self.w_idx is not None else 0)

    def weights(self, u: np.ndarray) -> np.ndarray:
        return self.floor + (1 - self.n * self.floor) * softmax(u)

    def assignment(self, z: np.ndarray) -> np.ndarray:
        n_free = len(self.free_idx)
        raw = z[:self.n * n_free].reshape(self.n, n_free)
        x = np.zeros((self.n, len(self.system.names)))
        if self.w_idx is None:
            norm = np.linalg.norm(raw)
            x[:, self.free_idx] = raw / (norm if norm > 0 else 1.0)
            return x
        e = self.weights(z[self.n * n_free:])
        scale = np.sum(e[:, None] * np.abs(raw) ** (4.0 / self.free_deg)) ** 0.25
        scale = scale if scale > 0 else 1.0
        x[:, self.free_idx] = raw / scale ** self.free_deg
        x[:, self.w_idx] = np.sqrt(e)
        return x

    def from_assignment(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(self.n, len(self.system.names))
        raw = x[:, self.free_idx].ravel()
        if self.w_idx is None:
            return raw
        e = x[:, self.w_idx] ** 2
        e = e / np.sum(e)
        share = (e - self.floor) / (1 - self.n * self.floor)
        u = np.log(np.clip(share, 1e-12, None))
        return np.concatenate([raw, u - u.mean()])

    def residuals(self, z: np.ndarray) -> np.ndarray:
        return self.system.evaluate(self.assignment(z))


def _witness_dict(system: PolySystem, x: np.ndarray) -> Dict[str, List[float]]:
    return {name: x[:, i].tolist() for i, name in enumerate(system.names)}


def _run_start(param: _Parametrization, z0: np.ndarray) -> Tuple[float, np.ndarray]:
    try:
        fit = least_squares(param.residuals, z0, method="trf", xtol=1e-14, ftol=1e-14,
                            gtol=1e-14, max_nfev=2000)
        z = fit.x
    except (ValueError, FloatingPointError) as e:
        logging.debug(f"least_squares start failed: {e}")
        z = z0
    x = param.assignment(z)
    return param.system.residual(x), x


def check_solvable(system: PolySystem, cfg: Optional[SolverConfig] = None,
                   hints: Sequence[np.ndarray] = ()) -> SolvabilityVerdict:
    """
    Decides whether `system` has a nontrivial real solution.

    Hints (assignments of shape (n_comp, n_names)) are polished first; then
    heavy-tailed random starts run in batches, seeded per (system, start).
    The first start in submission order that reaches solve_tol wins.

    Returns:
        SolvabilityVerdict: Solvable, Unsolvable or Inconclusive
    """
    cfg = cfg or SolverConfig()
    param = _Parametrization(system, cfg.weight_floor)
    digest = system.digest()
    best_res, best_x, best_idx = inf, None, None

    for h, hint in enumerate(hints):
        res, x = _run_start(param, param.from_assignment(hint))
        logging.info(f"Hint {h} for {system.kind} system reached residual {res:.3g}")
        if res < cfg.solve_tol:
            return SolvabilityVerdict(Verdict.SOLVABLE, res, h + 1, cfg.solve_tol, cfg.unsolve_tol,
                                      _witness_dict(system, x), -(h + 1))
        if res < best_res:
            best_res, best_x, best_idx = res, x, -(h + 1)

    def start(idx: int) -> Tuple[float, np.ndarray]:
        rng = np.random.default_rng(derive_seed(cfg.seed, digest, idx))
        return _run_start(param, rng.standard_t(START_DF, size=param.size))

    done = 0
    while done < cfg.min_starts:
        batch = list(range(done, min(done + cfg.batch, cfg.min_starts)))
        for idx, (res, x) in zip(batch, run_parallel(start, batch, cfg.jobs)):
            if res < best_res:
                best_res, best_x, best_idx = res, x, idx
            if res < cfg.solve_tol:
                logging.info(f"{system.kind} system {system.params} Solvable at start {idx}")
                return SolvabilityVerdict(Verdict.SOLVABLE, res, idx + 1, cfg.solve_tol,
                                          cfg.unsolve_tol, _witness_dict(system, x), idx)
        done = batch[-1] + 1

    status = Verdict.UNSOLVABLE if best_res > cfg.unsolve_tol else Verdict.INCONCLUSIVE
    logging.info(f"{system.kind} system {system.params}: {status}, min residual {best_res:.3g} "
                 f"over {done} starts")
    witness = _witness_dict(system, best_x) if best_x is not None else None
    return SolvabilityVerdict(status, best_res, done, cfg.solve_tol, cfg.unsolve_tol, witness, best_idx)


def residual_of(system: PolySystem, witness: Dict[str, Sequence[float]]) -> float:
    """Re-evaluates F at a serialized witness."""
    x = np.column_stack([np.asarray(witness[name], dtype=float) for name in system.names])
    return system.residual(x)


def skew_witness(v0: float, m0: float, a1: float = 1.0) -> np.ndarray:
    """A nontrivial solution of the l = 1, r = 3 skew system."""
    c = (m0**3 + m0) / (2 * v0) * a1**2
    return np.array([[a1, -a1**2, c, 1.0], [-a1, -a1**2, c, 1.0]])


@dataclass(frozen=True)
class LadderResult:
    """Smallest unsolvable order of a ladder, or a bound when a rung stayed inconclusive."""
    value: float
    exact: bool
    ladder: Tuple[Tuple[int, str, float], ...] = field(default=())
    source: str = "ladder"

    def to_dict(self) -> Dict[str, Any]:
        return {"value": self.value, "exact": self.exact, "source": self.source,
                "ladder": [{"order": r, "verdict": s, "residual": res} for r, s, res in self.ladder]}


def _check_monotone(ladder: Sequence[Tuple[int, str, float]]) -> None:
    seen_unsolvable = False
    for r, status, _ in ladder:
        if status == Verdict.UNSOLVABLE:
            seen_unsolvable = True
        elif status == Verdict.SOLVABLE and seen_unsolvable:
            logging.warning(f"Ladder not monotone: order {r} Solvable after an Unsolvable rung")


def _climb(build, orders: Sequence[int], cfg: SolverConfig, cap: float, full: bool,
           hints_for=None) -> LadderResult:
    ladder = []
    found = None
    inconclusive = False
    for r in orders:
        hints = hints_for(r) if hints_for else ()
        verdict = check_solvable(build(r), cfg, hints)
        ladder.append((r, verdict.status, verdict.residual))
        if verdict.status == Verdict.INCONCLUSIVE:
            inconclusive = True
        if verdict.unsolvable and found is None:
            found = r
            if not full:
                break
    if full:
        _check_monotone(ladder)
    if found is not None and not inconclusive:
        return LadderResult(float(found), True, tuple(ladder))
    bound = float(found) if found is not None else cap
    return LadderResult(bound, False, tuple(ladder))


def known_rho(v0: float, m0: float, l: int) -> Optional[int]:
    if l == 1:
        return KNOWN_FACTS["rho_l1"]
    return KNOWN_FACTS["rho"].get((float(v0), float(m0), int(l)))


def rbar(l: int, cfg: Optional[SolverConfig] = None, trust_known: bool = True,
         full: bool = False) -> LadderResult:
    """Smallest r for which the Gaussian system with l + 1 components is unsolvable."""
    if trust_known and l in KNOWN_FACTS["rbar"]:
        return LadderResult(float(KNOWN_FACTS["rbar"][l]), True, source="known")
    cfg = cfg or SolverConfig()
    return _climb(lambda r: build_gaussian_system(l, r), range(1, MAX_RBAR_ORDER + 1), cfg,
                  inf, full)


def rho(v0: float, m0: float, l: int, cfg: Optional[SolverConfig] = None,
        trust_known: bool = True, full: bool = False) -> LadderResult:
    """
    Smallest r in 1..r̄(l) with an unsolvable skew system; an inconclusive
    rung turns the answer into the bound r̄(l).

    Raises:
        PoleAtZeroShape: if m0 = 0
    """
    if m0 == 0:
        raise PoleAtZeroShape(ErrorMessages.POLE_AT_ZERO_SHAPE)
    if trust_known:
        known = known_rho(v0, m0, l)
        if known is not None:
            return LadderResult(float(known), True, source="known")
    cfg = cfg or SolverConfig()
    cap = rbar(l, cfg).value
    top = int(min(cap, Limits.MAX_ORDER))
    hints = (lambda r: [skew_witness(v0, m0)] if l == 1 and r <= 3 else [])
    result = _climb(lambda r: build_skew_system(v0, m0, l, r), range(1, top + 1), cfg, cap, full,
                    hints)
    if not result.exact:
        result = LadderResult(min(result.value, cap), False, result.ladder)
    logging.info(f"rho({v0}, {m0}, {l}) = {result.value} (exact={result.exact})")
    return result


def subset_sums(a: Sequence[float], b: Sequence[float]) -> List[Tuple[Tuple[int, ...], float, float]]:
    """(S, Σ_{j∈S} a_j Π_{l∈S∖j} b_l, Σ |terms|) for every subset S with |S| ≥ 2."""
    out = []
    n = len(a)
    for size in range(2, n + 1):
        for S in combinations(range(n), size):
            terms = [a[j] * np.prod([b[q] for q in S if q != j]) for j in S]
            out.append((S, float(np.sum(terms)), float(np.sum(np.abs(terms)))))
    return out


def sbar(a: Sequence[float], b: Sequence[float], cfg: Optional[SolverConfig] = None,
         full: bool = False) -> LadderResult:
    """
    Smallest s at which the sbar system has no nontrivial solution.

    A vanishing subset sum gives ∞; two and three components have closed
    forms; larger classes climb s = 1..k−1 and fall back to the bound k − 1.
    """
    a, b = _check_sbar_inputs(a, b)
    for S, total, scale in subset_sums(a, b):
        if abs(total) <= Tolerances.ZERO_TEST * max(scale, 1.0):
            return LadderResult(inf, True, source="closed-form")
    if a.size == 2:
        return LadderResult(1.0, True, source="closed-form")
    if a.size == 3:
        signed = sum(a[i] * np.prod([b[j] for j in range(3) if j != i]) for i in range(3))
        return LadderResult(1.0 if signed > 0 else 2.0, True, source="closed-form")
    cfg = cfg or SolverConfig()
    cap = float(a.size - 1)
    result = _climb(lambda s: build_sbar_system(a, b, s), range(1, a.size), cfg, cap, full)
    if result.exact:
        return result
    return LadderResult(min(result.value, cap), False, result.ladder)
