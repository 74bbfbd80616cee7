"""
Singularity structure of mixing measures: type polynomials, homologous
classes, the exact-fitted partition S0..S33 and the reports attached to
each class.
"""
import logging
from dataclasses import dataclass, field
from itertools import combinations
from math import ceil, inf, isinf
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from mixsing.config import SolverConfig
from mixsing.constants import Family, Label, LevelKind, Setting, Tolerances
from mixsing.errors import BadParams, NotS0, QuadratureFailure
from mixsing.estimate import QuadratureScheme
from mixsing.kernels import density_at, partial_at
from mixsing.mixing import MixingMeasure, ParamVec
from mixsing.polysys import rbar, rho, sbar, subset_sums
from mixsing.utils import log_function_call

Index = Tuple[float, ...]


def _is_zero(margin: float) -> bool:
    return margin <= Tolerances.ZERO_TEST


def _homology_factor(x: ParamVec, y: ParamVec) -> Tuple[float, float]:
    """(θi−θj)² + (v_i(1+m_j²) − v_j(1+m_i²))² and its relative margin."""
    left = x.v * (1 + y.m**2)
    right = y.v * (1 + x.m**2)
    value = (x.theta - y.theta) ** 2 + (left - right) ** 2
    scale = 1.0 + x.theta**2 + y.theta**2 + left**2 + right**2
    return value, value / scale


def homologous(x: ParamVec, y: ParamVec) -> bool:
    """Same location and same rescaled scale v/(1+m²)."""
    return _is_zero(_homology_factor(x, y)[1])


def p4_factor(G: MixingMeasure, i: int, j: int) -> Tuple[float, float]:
    x, y = G.atoms[i], G.atoms[j]
    pi, pj = G.weights[i], G.weights[j]
    u2, u_margin_scale = _homology_factor(x, y)
    shape = (x.m * y.sigma + y.m * x.sigma) ** 2
    weight = (pi * y.sigma - pj * x.sigma) ** 2
    value = u2 + shape + weight
    scale = (1.0 + x.theta**2 + y.theta**2 + (x.v * (1 + y.m**2)) ** 2 + (y.v * (1 + x.m**2)) ** 2
             + (abs(x.m * y.sigma) + abs(y.m * x.sigma)) ** 2 + (pi * y.sigma + pj * x.sigma) ** 2)
    return value, value / scale


@dataclass(frozen=True)
class HomologyStructure:
    """Homologous classes with their conformant and C(1)/C(2) flags."""
    classes: Tuple[Tuple[int, ...], ...]
    conformant: Tuple[bool, ...]
    c1: Tuple[bool, ...]
    c2: Tuple[bool, ...]

    def class_of(self, i: int) -> int:
        for c, members in enumerate(self.classes):
            if i in members:
                return c
        raise BadParams(f"Atom {i} belongs to no class")

    @property
    def nonconformant(self) -> List[int]:
        return [c for c, ok in enumerate(self.conformant) if not ok]

    @property
    def has_pair(self) -> bool:
        return any(len(members) > 1 for members in self.classes)


def homology_structure(G0: MixingMeasure) -> HomologyStructure:
    """Partitions atoms into homologous classes (transitive closure within tolerance)."""
    parent = list(range(G0.k))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in combinations(range(G0.k), 2):
        if homologous(G0.atoms[i], G0.atoms[j]):
            parent[find(i)] = find(j)
    groups: Dict[int, List[int]] = {}
    for i in range(G0.k):
        groups.setdefault(find(i), []).append(i)
    classes = tuple(sorted(tuple(g) for g in groups.values()))

    conformant, c1, c2 = [], [], []
    for members in classes:
        shapes = [G0.atoms[i].m for i in members]
        conformant.append(not any(a * b < 0 for a, b in combinations(shapes, 2)))
        weights = [G0.weights[i] for i in members]
        c1.append(len(members) > 1 and any(
            _is_zero(abs(total) / scale if scale > 0 else 0.0)
            for _, total, scale in subset_sums(weights, shapes)))
        c2.append(any(_is_zero(p4_factor(G0, i, j)[1]) for i, j in combinations(members, 2)))
    return HomologyStructure(classes, tuple(conformant), tuple(c1), tuple(c2))


@dataclass(frozen=True)
class TypePolynomials:
    """
    P1 = Π m_j; P2 = Π_{i<j} homology factors; P3 = Π of subset sums over
    nonconformant classes; P4 = Π_{i≠j} weighted shape/scale factors.
    Zero decisions use per-factor relative margins.
    """
    p1: float
    p2: float
    p3: float
    p4: float
    p1_zero: bool
    p2_zero: bool
    p3_zero: bool
    p4_zero: bool
    min_margin: float

    def as_dict(self) -> Dict[str, float]:
        return {"P1": self.p1, "P2": self.p2, "P3": self.p3, "P4": self.p4}


def type_polynomials(G0: MixingMeasure, structure: Optional[HomologyStructure] = None) -> TypePolynomials:
    if G0.family != Family.SKEW_NORMAL:
        raise BadParams("Type polynomials are defined for skew-normal measures")
    structure = structure or homology_structure(G0)
    shapes = [a.m for a in G0.atoms]
    m_scale = max(1.0, max(abs(m) for m in shapes))
    margins_nonzero = []

    p1 = float(np.prod(shapes))
    p1_margins = [abs(m) / m_scale for m in shapes]
    p1_zero = any(_is_zero(mg) for mg in p1_margins)

    p2, p2_zero = 1.0, False
    for i, j in combinations(range(G0.k), 2):
        value, margin = _homology_factor(G0.atoms[i], G0.atoms[j])
        p2 *= value
        p2_zero = p2_zero or _is_zero(margin)
        if not _is_zero(margin):
            margins_nonzero.append(margin)

    p3, p3_zero = 1.0, False
    for c in structure.nonconformant:
        members = structure.classes[c]
        weights = [G0.weights[i] for i in members]
        for _, total, scale in subset_sums(weights, [shapes[i] for i in members]):
            p3 *= total
            margin = abs(total) / scale if scale > 0 else 0.0
            p3_zero = p3_zero or _is_zero(margin)
            if not _is_zero(margin):
                margins_nonzero.append(margin)

    p4, p4_zero = 1.0, False
    for i, j in combinations(range(G0.k), 2):
        value, margin = p4_factor(G0, i, j)
        p4 *= value**2
        p4_zero = p4_zero or _is_zero(margin)

    margins_nonzero.extend(mg for mg in p1_margins if not _is_zero(mg))
    min_margin = min(margins_nonzero) if margins_nonzero else inf
    return TypePolynomials(p1, p2, p3, p4, p1_zero, p2_zero, p3_zero, p4_zero, min_margin)


@dataclass(frozen=True)
class SkewPartition:
    label: str
    polynomials: TypePolynomials
    structure: HomologyStructure


def skew_partition(G0: MixingMeasure) -> SkewPartition:
    """Places a skew-normal measure in S0, S1, S2, S31, S32 or S33."""
    structure = homology_structure(G0)
    polys = type_polynomials(G0, structure)
    conformant = all(structure.conformant)
    if not polys.p1_zero and not polys.p2_zero:
        label = Label.S0
    elif polys.p2_zero and not conformant:
        if polys.p4_zero:
            label = Label.S33
        elif polys.p3_zero:
            label = Label.S32
        else:
            label = Label.S31
    elif polys.p1_zero:
        label = Label.S2
    else:
        label = Label.S1
    return SkewPartition(label, polys, structure)


@dataclass(frozen=True)
class Level:
    kind: str
    value: float

    def to_dict(self) -> Dict[str, Any]:
        return {self.kind: _encode(self.value)}


def _encode(value: float) -> Any:
    if isinf(value):
        return "inf"
    return int(value) if float(value).is_integer() else value


def _decode(value: Any) -> float:
    return inf if value == "inf" else float(value)


@dataclass(frozen=True)
class SingularityReport:
    """Level, index set and optional matrix of a mixing measure relative to its ambient class."""
    label: str
    setting: str
    family: str
    level: Level
    index_set: Tuple[Index, ...]
    index_kind: str
    matrix: Optional[Tuple[Index, ...]] = None
    aux: Dict[str, Any] = field(default_factory=dict)
    warnings: Tuple[str, ...] = ()

    def consistent(self) -> bool:
        """An exact singleton index κ forces level = ‖κ‖∞ − 1."""
        if self.level.kind == LevelKind.EXACT and self.index_kind == LevelKind.EXACT \
                and len(self.index_set) == 1:
            return max(self.index_set[0]) - 1 == self.level.value
        return True

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "setting": self.setting,
            "family": self.family,
            "level": self.level.to_dict(),
            "index_set": [[_encode(x) for x in idx] for idx in self.index_set],
            "index_kind": self.index_kind,
            "matrix": None if self.matrix is None else [[_encode(x) for x in row] for row in self.matrix],
            "aux": self.aux,
            "warnings": list(self.warnings),
        }


def _level_from_dict(data: Dict[str, Any]) -> Level:
    if len(data) != 1:
        raise BadParams(f"Malformed level {data}")
    (kind, value), = data.items()
    return Level(kind, _decode(value))


def report_from_dict(data: Dict[str, Any]) -> SingularityReport:
    matrix = data.get("matrix")
    return SingularityReport(
        label=data["label"],
        setting=data["setting"],
        family=data["family"],
        level=_level_from_dict(data["level"]),
        index_set=tuple(tuple(_decode(x) for x in idx) for idx in data["index_set"]),
        index_kind=data["index_kind"],
        matrix=None if matrix is None else tuple(tuple(_decode(x) for x in row) for row in matrix),
        aux=dict(data.get("aux", {})),
        warnings=tuple(data.get("warnings", ())),
    )


def _exact(value: float) -> Level:
    return Level(LevelKind.INF if isinf(value) else LevelKind.EXACT, value)


def singularity_matrix(G0: MixingMeasure, label: str,
                       structure: Optional[HomologyStructure] = None) -> Optional[Tuple[Index, ...]]:
    """Per-atom index rows, where the class determines them; None otherwise."""
    k = G0.k
    if label in (Label.FIRST_ORDER, Label.S0, Label.GAMMA_GENERIC):
        return tuple((1.0,) * G0.dim for _ in range(k))
    if label == Label.GAMMA_PATHOLOGICAL:
        bad = set(i for pair in gamma_pathological_pairs(G0) for i in pair)
        return tuple((inf, inf) if i in bad else (1.0, 1.0) for i in range(k))
    if label in (Label.S1, Label.S2):
        structure = structure or homology_structure(G0)
        rows = []
        for i, eta in enumerate(G0.atoms):
            in_pair = len(structure.classes[structure.class_of(i)]) > 1
            if label == Label.S2 and _is_zero(abs(eta.m) / max(1.0, abs(eta.m))):
                rows.append((3.0, 2.0, 3.0))
            elif in_pair:
                rows.append((1.0, 1.0, 2.0))
            else:
                rows.append((1.0, 1.0, 1.0))
        return tuple(rows)
    return None


def _boundary_warnings(polys: TypePolynomials) -> Tuple[str, ...]:
    if polys.min_margin < Tolerances.BOUNDARY_PROXIMITY:
        msg = f"boundary-proximity: smallest nonzero type-polynomial margin {polys.min_margin:.3g}"
        logging.warning(msg)
        return (msg,)
    return ()


def _class_sbar(G0: MixingMeasure, members: Sequence[int], cfg: Optional[SolverConfig]):
    members = [i for i in members if not _is_zero(abs(G0.atoms[i].m) / max(1.0, abs(G0.atoms[i].m)))]
    shapes = [G0.atoms[i].m for i in members]
    if len(members) < 2 or not (min(shapes) < 0 < max(shapes)):
        return None
    return sbar([G0.weights[i] for i in members], shapes, cfg)


@log_function_call
def classify_emixture(G0: MixingMeasure, cfg: Optional[SolverConfig] = None) -> SingularityReport:
    """Report for an exact-fitted skew-normal mixture."""
    if G0.family != Family.SKEW_NORMAL:
        raise BadParams("classify_emixture expects a skew-normal measure")
    part = skew_partition(G0)
    label, structure, polys = part.label, part.structure, part.polynomials
    warnings = _boundary_warnings(polys)
    aux: Dict[str, Any] = {"polynomials": polys.as_dict()}

    def report(level, index_set, index_kind, matrix=None):
        rep = SingularityReport(label, Setting.EXACT, G0.family, level, tuple(index_set), index_kind,
                                matrix, aux, warnings)
        logging.info(f"Classified k0={G0.k} skew-normal measure as {label}, level {level.value}")
        return rep

    matrix = singularity_matrix(G0, label, structure)
    if label == Label.S0:
        return report(_exact(0), [(1, 1, 1)], LevelKind.EXACT, matrix)
    if label == Label.S1:
        return report(_exact(1), [(1, 1, 2)], LevelKind.EXACT, matrix)
    if label == Label.S2:
        return report(_exact(2), [(3, 2, 3)], LevelKind.EXACT, matrix)
    if label == Label.S33:
        return report(_exact(inf), [(inf, inf, inf)], LevelKind.INF)

    nonconf = [structure.classes[c] for c in structure.nonconformant]
    kstar = max(len(members) for members in nonconf)
    aux["kstar"] = kstar

    if label == Label.S32:
        c1_lengths = [len(structure.classes[c]) for c in structure.nonconformant if structure.c1[c]]
        longest = max(c1_lengths) if c1_lengths else 0
        aux["max_c1_length"] = longest
        if longest == 2:
            return report(_exact(3), [(1, 1, 4)], LevelKind.EXACT)
        guess = G0.k + 1
        return report(Level(LevelKind.CONJECTURAL, guess), [(1, 1, guess + 1)], LevelKind.CONJECTURAL)

    sbars = [_class_sbar(G0, members, cfg) for members in nonconf]
    sbars = [s for s in sbars if s is not None]
    sbar_value = max((s.value for s in sbars), default=0.0)
    sbar_exact = all(s.exact for s in sbars)
    aux["sbar"] = _encode(sbar_value)
    if not polys.p1_zero:
        if kstar <= 3 and sbar_exact:
            return report(_exact(sbar_value), [(1, 1, sbar_value + 1)], LevelKind.EXACT)
        return report(Level(LevelKind.BOUND, sbar_value), [(1, 1, sbar_value + 1)], LevelKind.BOUND)
    top = max(2.0, sbar_value)
    return report(Level(LevelKind.BOUND, top), [(3, 2, top + 1)], LevelKind.BOUND)


def gamma_pathological_pairs(G0: MixingMeasure) -> List[Tuple[int, int]]:
    """Pairs with {|a_i − a_j|, |b_i − b_j|} = {1, 0}."""
    pairs = []
    for i, j in combinations(range(G0.k), 2):
        x, y = G0.atoms[i], G0.atoms[j]
        da, db = abs(x.a - y.a), abs(x.b - y.b)
        if abs(da - 1) <= Tolerances.ZERO_TEST * max(1.0, x.a, y.a) and \
                db <= Tolerances.ZERO_TEST * max(1.0, x.b, y.b):
            pairs.append((i, j))
    return pairs


@log_function_call
def classify_gamma(G0: MixingMeasure, setting: str = Setting.EXACT) -> SingularityReport:
    """Generic Gamma mixtures are first-order (e) or second-order (o) identifiable."""
    if G0.family != Family.GAMMA:
        raise BadParams("classify_gamma expects a Gamma measure")
    if any(eta.a < 1 for eta in G0.atoms):
        raise BadParams("Gamma shapes must satisfy a >= 1")
    pairs = gamma_pathological_pairs(G0)
    if pairs:
        label = Label.GAMMA_PATHOLOGICAL
        level, index, kind = _exact(inf), [(inf, inf)], LevelKind.INF
    elif setting == Setting.EXACT:
        label = Label.GAMMA_GENERIC
        level, index, kind = _exact(0), [(1, 1)], LevelKind.EXACT
    else:
        label = Label.GAMMA_GENERIC
        level, index, kind = _exact(1), [(2, 2)], LevelKind.EXACT
    matrix = singularity_matrix(G0, label) if setting == Setting.EXACT else None
    return SingularityReport(label, setting, G0.family, level, tuple(index), kind, matrix,
                             {"pathological_pairs": [list(p) for p in pairs]})


def classify_gaussian_emixture(G0: MixingMeasure) -> SingularityReport:
    if G0.family != Family.GAUSSIAN:
        raise BadParams("classify_gaussian_emixture expects a Gaussian measure")
    return SingularityReport(Label.FIRST_ORDER, Setting.EXACT, G0.family, _exact(0), ((1, 1),),
                             LevelKind.EXACT, singularity_matrix(G0, Label.FIRST_ORDER))


@log_function_call
def classify_omixture(G0: MixingMeasure, k: int, c0: Optional[float] = None,
                      cfg: Optional[SolverConfig] = None,
                      known_variance: bool = False) -> SingularityReport:
    """
    Over-fitted report: level ≤ R − 1 with R = max_i ρ(v_i, m_i, k − k0) for
    skew-normal kernels, level r̄(k − k0) − 1 for Gaussian kernels, level 1
    for second-order identifiable kernels.

    Raises:
        NotS0: skew-normal G0 outside S0
    """
    if k <= G0.k:
        raise BadParams(f"Over-fitted setting needs k > k0 = {G0.k}, got {k}")
    if c0 is not None and c0 * k >= 1:
        raise BadParams(f"mass floor {c0} too large for k={k}")
    l = k - G0.k
    aux: Dict[str, Any] = {"k": k, "l": l, "c0": c0}

    if G0.family == Family.GAMMA:
        return classify_gamma(G0, Setting.OVER)
    if G0.family == Family.GAUSSIAN:
        if known_variance:
            return SingularityReport(Label.SECOND_ORDER, Setting.OVER, G0.family, _exact(1),
                                     ((2, 2),), LevelKind.EXACT, aux=aux)
        ladder = rbar(l, cfg)
        r = ladder.value
        aux["rbar"] = ladder.to_dict()
        kind = LevelKind.EXACT if ladder.exact else LevelKind.BOUND
        return SingularityReport(Label.O_GAUSSIAN, Setting.OVER, G0.family, Level(kind, r - 1),
                                 ((r, float(ceil(r / 2))),), kind, aux=aux)

    part = skew_partition(G0)
    if part.label != Label.S0:
        raise NotS0(f"Mixing measure is in class {part.label}, not S0")
    table = []
    for eta in G0.atoms:
        result = rho(eta.v, eta.m, l, cfg)
        table.append({"v": eta.v, "m": eta.m, "rho": _encode(result.value), "exact": result.exact,
                      "source": result.source})
    R = max(_decode(row["rho"]) for row in table)
    aux["rho"] = table
    aux["R"] = _encode(R)
    half = float(ceil(R / 2))
    return SingularityReport(Label.O_SKEW, Setting.OVER, G0.family, Level(LevelKind.BOUND, R - 1),
                             ((R, half, half),), LevelKind.BOUND, aux=aux,
                             warnings=_boundary_warnings(part.polynomials))


def classify(G0: MixingMeasure, setting: str = Setting.EXACT, k: Optional[int] = None,
             c0: Optional[float] = None, cfg: Optional[SolverConfig] = None,
             known_variance: bool = False) -> SingularityReport:
    """Dispatches on family and setting."""
    if setting == Setting.OVER:
        if k is None:
            raise BadParams("The over-fitted setting needs k")
        return classify_omixture(G0, k, c0, cfg, known_variance)
    if setting != Setting.EXACT:
        raise BadParams(f"Unknown setting '{setting}'")
    if G0.family == Family.SKEW_NORMAL:
        return classify_emixture(G0, cfg)
    if G0.family == Family.GAMMA:
        return classify_gamma(G0, setting)
    return classify_gaussian_emixture(G0)


def score_functions(G0: MixingMeasure, x: np.ndarray) -> np.ndarray:
    """Columns f_j and p_j ∂f_j/∂η_c for every atom j and coordinate c."""
    cols = []
    for p, eta in zip(G0.weights, G0.atoms):
        cols.append(density_at(G0.family, eta.coords, x))
        for c in range(eta.dim):
            alpha = [0] * eta.dim
            alpha[c] = 1
            cols.append(p * partial_at(G0.family, eta.coords, x, alpha))
    return np.column_stack(cols)


def fisher_rank(G0: MixingMeasure, grid: Optional[QuadratureScheme] = None) -> Tuple[int, float]:
    """
    Numerical rank of the score outer-product matrix ∫ s sᵀ / p_G dx.

    Returns:
        tuple: (rank, smallest eigenvalue of the diagonally normalized matrix)

    Raises:
        QuadratureFailure: if the density vanishes on a node where a score does not
    """
    grid = grid or QuadratureScheme.for_measures(G0)
    x, w = grid.nodes, grid.weights
    dens = np.zeros_like(x)
    for p, eta in zip(G0.weights, G0.atoms):
        dens += p * density_at(G0.family, eta.coords, x)
    scores = score_functions(G0, x)
    live = dens > 0
    if np.any(np.abs(scores[~live]) > 0):
        raise QuadratureFailure("Mixture density vanishes where a score does not")
    weighted = scores[live] * np.sqrt(w[live] / dens[live])[:, None]
    info = weighted.T @ weighted
    diag = np.sqrt(np.clip(np.diag(info), 1e-300, None))
    normalized = info / np.outer(diag, diag)
    eig = np.linalg.eigvalsh(normalized)
    rank = int(np.sum(eig > Tolerances.FISHER_RANK * np.trace(normalized)))
    logging.info(f"Fisher rank {rank} of {normalized.shape[0]}, min eigenvalue {eig[0]:.3g}")
    return rank, float(eig[0])
