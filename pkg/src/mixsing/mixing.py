"""
Mixing measures, parameter boxes and convergent-sequence bookkeeping.
"""
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from mixsing.constants import ErrorMessages, Family, Tolerances
from mixsing.errors import BadParams, BadWeights, DuplicateAtoms, IndexMismatch, MixedFamilies

if TYPE_CHECKING:
    from mixsing.transport import TransportSpec


def _check_family(family: str) -> None:
    if family not in Family.ALL:
        raise BadParams(ErrorMessages.UNKNOWN_FAMILY.format(family=family))


@dataclass(frozen=True)
class ParamVec:
    """One component parameter: (θ, v, m) skew-normal, (θ, v) Gaussian, (a, b) Gamma."""
    family: str
    coords: Tuple[float, ...]

    def __post_init__(self):
        _check_family(self.family)
        coords = tuple(float(c) for c in self.coords)
        object.__setattr__(self, "coords", coords)
        expected = Family.DIMENSION[self.family]
        if len(coords) != expected:
            raise BadParams(ErrorMessages.BAD_COORDS.format(
                family=self.family, expected=expected, got=len(coords)))
        if not all(np.isfinite(coords)):
            raise BadParams(f"Non-finite coordinate in {coords}")
        names = Family.COORDINATES[self.family]
        for idx in Family.POSITIVE[self.family]:
            if coords[idx] <= 0:
                raise BadParams(ErrorMessages.NONPOSITIVE_COORD.format(
                    name=names[idx], family=self.family, value=coords[idx]))

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def theta(self) -> float:
        return self.coords[0]

    @property
    def v(self) -> float:
        return self.coords[1]

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.coords[1]))

    @property
    def m(self) -> float:
        # the Gaussian kernel is the m = 0 skew-normal
        return self.coords[2] if self.family == Family.SKEW_NORMAL else 0.0

    @property
    def a(self) -> float:
        return self.coords[0]

    @property
    def b(self) -> float:
        return self.coords[1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)

    def shifted(self, delta: Sequence[float]) -> "ParamVec":
        return ParamVec(self.family, tuple(np.add(self.coords, delta)))


@dataclass(frozen=True)
class MixingMeasure:
    """G = Σ p_i δ_{η_i}; immutable, validated, atoms in canonical order."""
    atoms: Tuple[ParamVec, ...]
    weights: Tuple[float, ...]

    def __post_init__(self):
        atoms = tuple(self.atoms)
        weights = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        if not atoms or len(atoms) != len(weights):
            raise BadParams(f"{len(atoms)} atoms and {len(weights)} weights")
        families = sorted({a.family for a in atoms})
        if len(families) > 1:
            raise MixedFamilies(ErrorMessages.MIXED_FAMILIES.format(families=families))
        for i, w in enumerate(weights):
            if not w > 0:
                raise BadWeights(ErrorMessages.NONPOSITIVE_WEIGHT.format(i=i, value=w))
        total = sum(weights)
        if abs(total - 1.0) > Tolerances.WEIGHT_SUM:
            raise BadWeights(ErrorMessages.BAD_WEIGHTS.format(total=total))
        for i in range(len(atoms)):
            for j in range(i + 1, len(atoms)):
                gap = np.max(np.abs(atoms[i].as_array() - atoms[j].as_array()))
                if gap <= Tolerances.ATOM_DISTINCT:
                    raise DuplicateAtoms(ErrorMessages.DUPLICATE_ATOMS.format(
                        i=i, j=j, tol=Tolerances.ATOM_DISTINCT))

    @property
    def family(self) -> str:
        return self.atoms[0].family

    @property
    def k(self) -> int:
        return len(self.atoms)

    @property
    def dim(self) -> int:
        return self.atoms[0].dim

    def coords_array(self) -> np.ndarray:
        """(k, d) array of atom coordinates."""
        return np.array([a.coords for a in self.atoms], dtype=float)

    def weights_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "family": self.family,
            "atoms": [list(a.coords) for a in self.atoms],
            "weights": list(self.weights),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MixingMeasure":
        try:
            family = data["family"]
            atoms = data["atoms"]
            weights = data["weights"]
        except (KeyError, TypeError) as e:
            raise BadParams(f"Malformed measure JSON, missing {e}")
        return make_measure([ParamVec(family, tuple(a)) for a in atoms], weights)


def make_measure(atoms: Sequence, weights: Sequence[float],
                 family: Optional[str] = None) -> MixingMeasure:
    """
    Build a validated mixing measure.

    Atoms may be ParamVec values or plain coordinate sequences (then `family`
    is required). Weights are renormalized only when their sum is within
    1e-9 of one; atoms are stored in lexicographic order.

    Raises:
        BadWeights, DuplicateAtoms, MixedFamilies, BadParams
    """
    if len(atoms) != len(weights):
        raise BadParams(f"{len(atoms)} atoms and {len(weights)} weights")
    vecs = []
    for atom in atoms:
        if isinstance(atom, ParamVec):
            vecs.append(atom)
        else:
            if family is None:
                raise BadParams("family is required for raw coordinates")
            vecs.append(ParamVec(family, tuple(atom)))
    weights = [float(w) for w in weights]
    for i, w in enumerate(weights):
        if not w > 0:
            raise BadWeights(ErrorMessages.NONPOSITIVE_WEIGHT.format(i=i, value=w))
    total = sum(weights)
    if abs(total - 1.0) > Tolerances.RENORMALIZE_WINDOW:
        raise BadWeights(ErrorMessages.BAD_WEIGHTS.format(total=total))
    weights = [w / total for w in weights]
    order = sorted(range(len(vecs)), key=lambda i: (vecs[i].family, vecs[i].coords))
    return MixingMeasure(tuple(vecs[i] for i in order), tuple(weights[i] for i in order))


@dataclass(frozen=True)
class ParamBox:
    """Compact parameter box Ω with a floor c0 on component masses."""
    family: str
    bounds: Tuple[Tuple[float, float], ...]
    mass_floor: float = 0.0

    def __post_init__(self):
        _check_family(self.family)
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        if len(bounds) != Family.DIMENSION[self.family]:
            raise IndexMismatch(ErrorMessages.INDEX_MISMATCH.format(
                got=len(bounds), expected=Family.DIMENSION[self.family]))
        for lo, hi in bounds:
            if not lo < hi:
                raise BadParams(f"Empty interval [{lo}, {hi}]")
        for idx in Family.POSITIVE[self.family]:
            if bounds[idx][0] <= 0:
                raise BadParams("Scale-type coordinates need a positive lower bound")
        if self.mass_floor < 0:
            raise BadParams("mass_floor must be >= 0")

    def check_components(self, k: int) -> None:
        """c0 must leave room for k components."""
        if self.mass_floor * k >= 1:
            raise BadParams(f"mass floor {self.mass_floor} too large for k={k}")

    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.bounds])

    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.bounds])

    def contains(self, eta: ParamVec, tol: float = 1e-12) -> bool:
        x = eta.as_array()
        return bool(np.all(x >= self.lower() - tol) and np.all(x <= self.upper() + tol))

    def clip(self, coords: np.ndarray) -> np.ndarray:
        return np.clip(coords, self.lower(), self.upper())

    @classmethod
    def from_config(cls, family: str, config: Dict[str, Any],
                    mass_floor: Optional[float] = None) -> "ParamBox":
        box = config['BOX']
        bounds = tuple(tuple(box[name]) for name in Family.COORDINATES[family])
        c0 = config['C0'] if mass_floor is None else mass_floor
        return cls(family, bounds, float(c0))


Group = Tuple[Tuple[float, ParamVec], ...]


@dataclass(frozen=True)
class ConvergentRep:
    """
    A mixing measure G written relative to a base G0.

    groups[i] lists the (p_ij, η_ij) converging to atom i of G0 for i < k0;
    the trailing groups are redundant ones whose limit points are
    `extra_anchors` and whose limiting mass is zero.
    """
    base: MixingMeasure
    groups: Tuple[Group, ...]
    extra_anchors: Tuple[ParamVec, ...] = ()
    declared_k: Optional[int] = None

    def __post_init__(self):
        groups = tuple(tuple((float(p), eta) for p, eta in g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "extra_anchors", tuple(self.extra_anchors))
        if len(groups) != self.base.k + len(self.extra_anchors):
            raise IndexMismatch(
                f"{len(groups)} groups for k0={self.base.k} and "
                f"{len(self.extra_anchors)} extra anchors")
        for i, g in enumerate(groups):
            if not g:
                raise BadParams(f"Group {i} is empty")
            for p, eta in g:
                if eta.family != self.base.family:
                    raise MixedFamilies(ErrorMessages.MIXED_FAMILIES.format(
                        families=[eta.family, self.base.family]))
                if p < 0:
                    raise BadWeights(ErrorMessages.NONPOSITIVE_WEIGHT.format(i=i, value=p))
        if self.declared_k is not None and self.atom_count > self.declared_k:
            raise BadParams(f"{self.atom_count} atoms exceed the declared k={self.declared_k}")

    @property
    def k0(self) -> int:
        return self.base.k

    @property
    def extra_count(self) -> int:
        return len(self.extra_anchors)

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(len(g) for g in self.groups)

    @property
    def atom_count(self) -> int:
        return sum(self.sizes)

    def anchor(self, i: int) -> ParamVec:
        return self.base.atoms[i] if i < self.k0 else self.extra_anchors[i - self.k0]

    def base_weight(self, i: int) -> float:
        return self.base.weights[i] if i < self.k0 else 0.0

    def flat(self) -> Tuple[List[ParamVec], List[float]]:
        """All (atom, weight) pairs, duplicates allowed."""
        atoms, weights = [], []
        for g in self.groups:
            for p, eta in g:
                atoms.append(eta)
                weights.append(p)
        return atoms, weights

    @property
    def is_degenerate(self) -> bool:
        """True when two atoms coincide (e.g. a split atom at t = 0)."""
        atoms, _ = self.flat()
        arr = np.array([a.coords for a in atoms])
        for i in range(len(arr)):
            for j in range(i + 1, len(arr)):
                if np.max(np.abs(arr[i] - arr[j])) <= Tolerances.ATOM_DISTINCT:
                    return True
        return False

    def to_measure(self) -> MixingMeasure:
        """The represented G; raises DuplicateAtoms when degenerate."""
        atoms, weights = self.flat()
        kept = [(a, w) for a, w in zip(atoms, weights) if w > 0]
        return make_measure([a for a, _ in kept], [w for _, w in kept])


@dataclass(frozen=True)
class DeltaQuantities:
    """Δη_ij per group (rows j, columns coordinates), Δp_{i·} and group sizes s_i."""
    delta_eta: Tuple[np.ndarray, ...]
    delta_p: np.ndarray
    sizes: Tuple[int, ...]
    weights: Tuple[np.ndarray, ...] = field(default=())


def delta_quantities(rep: ConvergentRep) -> DeltaQuantities:
    """
    Exact differences Δη_ij = η_ij − η_i^0 and Δp_{i·} = Σ_j p_ij − p_i^0,
    with p_i^0 = 0 for redundant groups.
    """
    deltas, dps, weights = [], [], []
    for i, g in enumerate(rep.groups):
        anchor = rep.anchor(i).as_array()
        deltas.append(np.array([eta.as_array() - anchor for _, eta in g]))
        w = np.array([p for p, _ in g])
        weights.append(w)
        dps.append(float(np.sum(w)) - rep.base_weight(i))
    return DeltaQuantities(tuple(deltas), np.array(dps), rep.sizes, tuple(weights))


def semipoly_D(rep: ConvergentRep, spec: "TransportSpec") -> float:
    """
    The semipolynomial D_r, D_κ or D_K:
    Σ_ij p_ij · cost(η_ij, η_i^0) + Σ_i |Δp_{i·}|, the cost on the power scale.

    Raises:
        IndexMismatch: if κ or K does not match the coordinate count
    """
    from mixsing.transport import power_cost_row

    spec.check_dimension(rep.base.dim)
    if spec.block is not None and len(spec.block) != len(rep.groups):
        raise IndexMismatch(ErrorMessages.INDEX_MISMATCH.format(
            got=len(spec.block), expected=len(rep.groups)))
    dq = delta_quantities(rep)
    total = 0.0
    for i, (delta, w) in enumerate(zip(dq.delta_eta, dq.weights)):
        total += float(np.sum(w * power_cost_row(spec, np.abs(delta), i)))
    total += float(np.sum(np.abs(dq.delta_p)))
    logging.debug(f"semipoly_D = {total:.6g} over {len(rep.groups)} groups")
    return total


def split_atom(base: MixingMeasure, index: int, offsets: Iterable[Tuple[float, Sequence[float]]]
               ) -> Tuple[Tuple[float, ParamVec], ...]:
    """Group built from (weight, offset) pairs around atom `index` of `base`."""
    anchor = base.atoms[index]
    return tuple((float(p), anchor.shifted(off)) for p, off in offsets)
