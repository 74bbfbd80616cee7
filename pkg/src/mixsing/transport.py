"""
Exact optimal-transport distances between small discrete mixing measures:
W_r, the generalized distance W̃_κ and the blocked distance Ŵ_K.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from mixsing.constants import ErrorMessages, Limits, Tolerances
from mixsing.errors import BadParams, IndexMismatch, MixedFamilies, SupportTooLarge, TransportFailure
from mixsing.mixing import MixingMeasure, ParamVec


@dataclass(frozen=True)
class TransportSpec:
    """
    One of three cost variants. Exactly one of `order`, `kappa`, `block`
    is set; `block` rows belong to the atoms of the second argument.
    """
    order: Optional[int] = None
    kappa: Optional[Tuple[int, ...]] = None
    block: Optional[Tuple[Tuple[int, ...], ...]] = None

    def __post_init__(self):
        given = [x is not None for x in (self.order, self.kappa, self.block)]
        if sum(given) != 1:
            raise BadParams("TransportSpec needs exactly one of order, kappa, block")
        if self.order is not None and int(self.order) < 1:
            raise BadParams(f"order must be >= 1, got {self.order}")
        if self.kappa is not None:
            kappa = tuple(int(k) for k in self.kappa)
            if not kappa or min(kappa) < 1:
                raise BadParams(f"kappa entries must be >= 1, got {self.kappa}")
            object.__setattr__(self, "kappa", kappa)
        if self.block is not None:
            block = tuple(tuple(int(k) for k in row) for row in self.block)
            if not block or len({len(row) for row in block}) != 1 or min(map(min, block)) < 1:
                raise BadParams(f"block rows must be equal-length with entries >= 1, got {self.block}")
            object.__setattr__(self, "block", block)

    @classmethod
    def wasserstein(cls, r: int) -> "TransportSpec":
        return cls(order=r)

    @classmethod
    def generalized(cls, kappa: Sequence[int]) -> "TransportSpec":
        return cls(kappa=tuple(kappa))

    @classmethod
    def blocked(cls, block: Sequence[Sequence[int]]) -> "TransportSpec":
        return cls(block=tuple(tuple(row) for row in block))

    @property
    def exponent(self) -> int:
        """r, ‖κ‖∞ or ‖K‖∞: the root applied at the API boundary."""
        if self.order is not None:
            return int(self.order)
        if self.kappa is not None:
            return max(self.kappa)
        return max(max(row) for row in self.block)

    @property
    def name(self) -> str:
        if self.order is not None:
            return f"W_{self.order}"
        if self.kappa is not None:
            return f"W_kappa{self.kappa}"
        return "W_block"

    def check_dimension(self, d: int) -> None:
        width = None
        if self.kappa is not None:
            width = len(self.kappa)
        elif self.block is not None:
            width = len(self.block[0])
        if width is not None and width != d:
            raise IndexMismatch(ErrorMessages.INDEX_MISMATCH.format(got=width, expected=d))

    def exponents_for(self, d: int, row: Optional[int] = None) -> np.ndarray:
        """Per-coordinate exponents used against atom `row` of the second argument."""
        if self.order is not None:
            return np.full(d, self.order, dtype=float)
        if self.kappa is not None:
            return np.asarray(self.kappa, dtype=float)
        if row is None:
            raise BadParams("The blocked cost needs the row of the base atom")
        return np.asarray(self.block[row], dtype=float)

    def to_dict(self) -> Dict[str, Any]:
        if self.order is not None:
            return {"order": self.order}
        if self.kappa is not None:
            return {"kappa": list(self.kappa)}
        return {"block": [list(row) for row in self.block]}


def power_cost_row(spec: TransportSpec, abs_delta: np.ndarray, row: Optional[int] = None) -> np.ndarray:
    """Σ_c |Δ_c|^{e_c} for each row of an (n, d) array of absolute differences."""
    abs_delta = np.atleast_2d(abs_delta)
    exps = spec.exponents_for(abs_delta.shape[1], row)
    return np.sum(abs_delta ** exps, axis=1)


def cost(spec: TransportSpec, eta: ParamVec, eta_prime: ParamVec, row: Optional[int] = None) -> float:
    """
    Rooted ground cost: (Σ_c |η_c − η'_c|^{e_c})^{1/max e}.

    Raises:
        IndexMismatch: if dimensions disagree with each other or with κ
    """
    if eta.dim != eta_prime.dim:
        raise IndexMismatch(ErrorMessages.INDEX_MISMATCH.format(got=eta_prime.dim, expected=eta.dim))
    spec.check_dimension(eta.dim)
    delta = np.abs(eta.as_array() - eta_prime.as_array())
    return float(power_cost_row(spec, delta, row)[0] ** (1.0 / spec.exponent))


def weak_triangle_constant(kappa: Sequence[int]) -> float:
    """C with d(1,3) ≤ (1/C)(d(1,2) + d(2,3)) for the cost d_κ."""
    return float(min(2.0 ** (1 - k) for k in kappa))


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """
    Optimal coupling q of shape (|G|, |G'|): row sums are the weights of
    G, column sums the weights of G'. `power` is Σ q_ij c_ij before rooting.
    """
    q: np.ndarray
    value: float
    power: float

    def to_dict(self) -> Dict[str, Any]:
        return {"q": self.q.tolist(), "value": self.value, "power": self.power}


def cost_matrix(spec: TransportSpec, G: MixingMeasure, G_prime: MixingMeasure) -> np.ndarray:
    """Power-scale costs c_ij between atoms of G (rows) and G' (columns)."""
    A = G.coords_array()
    B = G_prime.coords_array()
    C = np.empty((G.k, G_prime.k))
    for j in range(G_prime.k):
        C[:, j] = power_cost_row(spec, np.abs(A - B[j]), j)
    return C


def _solve_lp(C: np.ndarray, p: np.ndarray, p_prime: np.ndarray) -> np.ndarray:
    k, kp = C.shape
    if k == 1 or kp == 1:
        return np.outer(p, p_prime)
    A_eq = np.zeros((k + kp, k * kp))
    for i in range(k):
        A_eq[i, i * kp:(i + 1) * kp] = 1.0
    for j in range(kp):
        A_eq[k + j, j::kp] = 1.0
    b_eq = np.concatenate([p, p_prime])
    c = C.ravel()
    first = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not first.success:
        raise TransportFailure(ErrorMessages.TRANSPORT_LP_FAILED.format(message=first.message))
    # among optimal plans, take the one favouring low flat indices
    optimum = float(first.fun)
    slack = 1e-12 * max(1.0, abs(optimum))
    tie = np.arange(1, k * kp + 1, dtype=float) / (k * kp)
    second = linprog(tie, A_ub=c[None, :], b_ub=[optimum + slack], A_eq=A_eq, b_eq=b_eq,
                     bounds=(0, None), method="highs")
    x = second.x if second.success else first.x
    return np.clip(x, 0.0, None).reshape(k, kp)


def distance(spec: TransportSpec, G: MixingMeasure, G_prime: MixingMeasure
             ) -> Tuple[float, TransportPlan]:
    """
    Solves the transportation LP exactly.

    Args:
        spec (TransportSpec): Cost variant
        G (MixingMeasure): First argument (plan rows)
        G_prime (MixingMeasure): Second argument (plan columns); for the
            blocked variant it must carry one atom per block row

    Returns:
        tuple: (rooted value, TransportPlan)

    Raises:
        MixedFamilies, SupportTooLarge, IndexMismatch
    """
    if G.family != G_prime.family:
        raise MixedFamilies(ErrorMessages.MIXED_FAMILIES.format(families=[G.family, G_prime.family]))
    for measure in (G, G_prime):
        if measure.k > Limits.MAX_ATOMS:
            raise SupportTooLarge(ErrorMessages.SUPPORT_TOO_LARGE.format(
                cap=Limits.MAX_ATOMS, got=measure.k))
    spec.check_dimension(G.dim)
    if spec.block is not None and len(spec.block) != G_prime.k:
        raise IndexMismatch(ErrorMessages.INDEX_MISMATCH.format(got=len(spec.block), expected=G_prime.k))

    C = cost_matrix(spec, G, G_prime)
    q = _solve_lp(C, G.weights_array(), G_prime.weights_array())
    power = float(np.sum(C * q))
    value = max(power, 0.0) ** (1.0 / spec.exponent)
    marginal_gap = max(np.max(np.abs(q.sum(axis=1) - G.weights_array())),
                       np.max(np.abs(q.sum(axis=0) - G_prime.weights_array())))
    if marginal_gap > Tolerances.PLAN_MARGINAL:
        logging.warning(f"Transport plan marginals off by {marginal_gap:.3g}")
    logging.debug(f"{spec.name}: value={value:.6g} for k={G.k}, k'={G_prime.k}")
    return value, TransportPlan(q, value, power)


def distance_value(spec: TransportSpec, G: MixingMeasure, G_prime: MixingMeasure) -> float:
    return distance(spec, G, G_prime)[0]


def per_coordinate_error(plan: TransportPlan, G: MixingMeasure, G0: MixingMeasure) -> np.ndarray:
    """Coupling-weighted coordinate errors Σ_ij q_ij |η_i^(c) − η_j^0(c)|, one per coordinate."""
    A = G.coords_array()
    B = G0.coords_array()
    if plan.q.shape != (G.k, G0.k):
        raise IndexMismatch(ErrorMessages.INDEX_MISMATCH.format(got=plan.q.shape, expected=(G.k, G0.k)))
    diffs = np.abs(A[:, None, :] - B[None, :, :])
    return np.einsum("ij,ijc->c", plan.q, diffs)
