"""
Explicit sequences G(t) → G0 along which the density difference vanishes
faster than a transportation distance, and the numeric checks that go with them.
"""
import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy as sp

from mixsing.classify import p4_factor, skew_partition
from mixsing.config import DEFAULT_CONFIG
from mixsing.constants import ErrorMessages, Family, Label, Setting, Tolerances
from mixsing.errors import GridTooCoarse, LabelMismatch, NotApplicable
from mixsing.kernels import KERNEL_PARAMS, X, envelope, mixture_cdf, density_at, symbolic_density
from mixsing.mixing import ConvergentRep, MixingMeasure
from mixsing.reduce import build_minimal_form, lowest_t_order
from mixsing.transport import TransportSpec, distance

T = sp.Symbol("t", real=True)


class _Numeric:
    sqrt = staticmethod(math.sqrt)
    pi = math.pi

    @staticmethod
    def const(x: float) -> float:
        return float(x)


class _Exact:
    sqrt = staticmethod(sp.sqrt)
    pi = sp.pi

    @staticmethod
    def const(x: float) -> sp.Expr:
        return sp.Rational(repr(float(x)))


# (weight, offset) pairs for each group, in the order of the base atoms
Schedule = Callable[[Any, Any], List[List[Tuple[Any, Tuple[Any, ...]]]]]


@dataclass(frozen=True)
class WitnessPath:
    """
    t ↦ G(t) built from a schedule of weight/offset pairs around the atoms of
    `base`. `order` is the declared singularity order (inf for S33).
    """
    name: str
    base: MixingMeasure
    schedule: Schedule
    order: float
    rule: Dict[str, str] = field(default_factory=dict)

    def at(self, t: float) -> ConvergentRep:
        groups = []
        for i, group in enumerate(self.schedule(float(t), _Numeric)):
            anchor = self.base.atoms[i]
            groups.append(tuple((float(p), anchor.shifted([float(d) for d in off])) for p, off in group))
        return ConvergentRep(self.base, tuple(groups))

    def exact_groups(self, t: sp.Symbol = T):
        return self.schedule(t, _Exact)

    def exact_anchors(self) -> List[Tuple[sp.Expr, sp.Expr]]:
        return [(_Exact.const(a.v), _Exact.const(a.m)) for a in self.base.atoms]

    def exact_delta_p(self, t: sp.Symbol = T) -> List[sp.Expr]:
        out = []
        for i, group in enumerate(self.exact_groups(t)):
            out.append(sp.expand(sum(p for p, _ in group) - _Exact.const(self.base.weights[i])))
        return out


def _require(G0: MixingMeasure, label: str) -> None:
    if G0.family != Family.SKEW_NORMAL:
        raise LabelMismatch(ErrorMessages.LABEL_MISMATCH.format(expected=label, got=G0.family))
    got = skew_partition(G0).label
    if got != label:
        raise LabelMismatch(ErrorMessages.LABEL_MISMATCH.format(expected=label, got=got))


def _unchanged(G0: MixingMeasure, ns) -> List[List[Tuple[Any, Tuple[Any, ...]]]]:
    zero = tuple(ns.const(0) for _ in range(G0.dim))
    return [[(ns.const(p), zero)] for p in G0.weights]


def s0_overfit_path(G0: MixingMeasure) -> WitnessPath:
    """
    One atom split in two halves: Δθ = ±t, Δv = −t², Δm = t²(m³+m)/(2v).

    Raises:
        NotApplicable: unless G0 is a single generic skew-normal atom
    """
    if G0.family != Family.SKEW_NORMAL or G0.k != 1 or skew_partition(G0).label != Label.S0:
        raise NotApplicable("The split witness needs a single skew-normal atom with m != 0")
    v, m = G0.atoms[0].v, G0.atoms[0].m

    def schedule(t, ns):
        vv, mm = ns.const(v), ns.const(m)
        half = ns.const(0.5)
        dm = t**2 * (mm**3 + mm) / (2 * vv)
        return [[(half, (t, -t**2, dm)), (half, (-t, -t**2, dm))]]

    return WitnessPath(Label.S0 + "-overfit", G0, schedule, 3,
                       {"theta": "±t", "v": "-t^2", "m": "t^2 (m^3+m)/(2v)", "weights": "1/2, 1/2"})


def witness_s0_overfit(G0: MixingMeasure, t: float) -> ConvergentRep:
    return s0_overfit_path(G0).at(t)


def _homologous_pair(G0: MixingMeasure) -> Tuple[int, int]:
    structure = skew_partition(G0).structure
    for members in structure.classes:
        if len(members) > 1:
            return members[0], members[1]
    raise NotApplicable("No homologous pair")


def s1_path(G0: MixingMeasure) -> WitnessPath:
    """Shapes of a homologous pair move with Σ p_i Δm_i / v_i = 0; everything else fixed."""
    _require(G0, Label.S1)
    i, j = _homologous_pair(G0)
    pi, pj = G0.weights[i], G0.weights[j]
    vi, vj = G0.atoms[i].v, G0.atoms[j].v
    norm = 1.0 / max(vi / pi, vj / pj)

    def schedule(t, ns):
        groups = _unchanged(G0, ns)
        c = ns.const(norm)
        groups[i] = [(ns.const(pi), (0, 0, t * ns.const(vi) / ns.const(pi) * c))]
        groups[j] = [(ns.const(pj), (0, 0, -t * ns.const(vj) / ns.const(pj) * c))]
        return groups

    return WitnessPath(Label.S1, G0, schedule, 1, {"m": "t (v_i/p_i, -v_j/p_j) normalized"})


def witness_s1(G0: MixingMeasure, t: float) -> ConvergentRep:
    return s1_path(G0).at(t)


def s2_path(G0: MixingMeasure) -> WitnessPath:
    """
    A Gaussian atom (m = 0) gains shape t with Δθ = −2tσ/√(2π) and Δv = Δθ².
    """
    _require(G0, Label.S2)
    candidates = [i for i, a in enumerate(G0.atoms) if abs(a.m) <= Tolerances.ZERO_TEST]
    i = candidates[0]
    v = G0.atoms[i].v

    def schedule(t, ns):
        groups = _unchanged(G0, ns)
        dtheta = -2 * t * ns.sqrt(ns.const(v)) / ns.sqrt(2 * ns.pi)
        groups[i] = [(ns.const(G0.weights[i]), (dtheta, dtheta**2, t))]
        return groups

    return WitnessPath(Label.S2, G0, schedule, 2,
                       {"m": "t", "theta": "-2 t sigma / sqrt(2 pi)", "v": "(delta theta)^2"})


def witness_s2(G0: MixingMeasure, t: float) -> ConvergentRep:
    return s2_path(G0).at(t)


def _p4_pair(G0: MixingMeasure) -> Tuple[int, int]:
    for i in range(G0.k):
        for j in range(i + 1, G0.k):
            if p4_factor(G0, i, j)[1] <= Tolerances.ZERO_TEST:
                return i, j
    raise NotApplicable("No pair with a vanishing weighted shape factor")


def s33_path(G0: MixingMeasure) -> WitnessPath:
    """Opposite shape moves Δm_i/σ_i = −Δm_j/σ_j on the degenerate pair."""
    _require(G0, Label.S33)
    i, j = _p4_pair(G0)
    vi, vj = G0.atoms[i].v, G0.atoms[j].v

    def schedule(t, ns):
        groups = _unchanged(G0, ns)
        groups[i] = [(ns.const(G0.weights[i]), (0, 0, t * ns.sqrt(ns.const(vi))))]
        groups[j] = [(ns.const(G0.weights[j]), (0, 0, -t * ns.sqrt(ns.const(vj))))]
        return groups

    return WitnessPath(Label.S33, G0, schedule, math.inf, {"m": "t sigma_i, -t sigma_j"})


def witness_s33(G0: MixingMeasure, t: float) -> ConvergentRep:
    return s33_path(G0).at(t)


def path_d_order(path: WitnessPath, r: int) -> float:
    """t-order of D_r along the path: min over atoms and coordinates of r·ord(Δ), and ord(Δp)."""
    orders = []
    for group in path.exact_groups():
        for _, off in group:
            for d in off:
                orders.append(r * lowest_t_order(sp.sympify(d), T))
    orders.extend(lowest_t_order(dp, T) for dp in path.exact_delta_p())
    return min(orders)


def minimal_form_vanishing(path: WitnessPath, r: int) -> Dict[Tuple[int, Tuple[int, ...]], Tuple[float, bool]]:
    """Lowest t-order of each r-minimal-form coefficient and whether it beats D_r."""
    form = build_minimal_form(path.base, r, Setting.OVER)
    groups = [[(p, tuple(sp.sympify(d) for d in off)) for p, off in g] for g in path.exact_groups()]
    return form.vanishing_along(T, path.exact_anchors(), groups, path.exact_delta_p(), path_d_order(path, r))


def taylor_coefficient(path: WitnessPath, order: int, x: np.ndarray) -> np.ndarray:
    """Values on x of the t^order coefficient of p_{G(t)} − p_{G0}."""
    family = path.base.family
    params = KERNEL_PARAMS[family]
    density = symbolic_density(family)
    total = sp.Integer(0)
    for i, group in enumerate(path.exact_groups()):
        anchor = path.base.atoms[i]
        for p, off in group:
            subs = {sym: _Exact.const(c) + d for sym, c, d in zip(params, anchor.coords, off)}
            moved = density.subs(subs)
            total += p * sp.diff(moved, T, order).subs(T, 0) / math.factorial(order)
    func = sp.lambdify(X, total, modules=["scipy", "numpy"])
    return np.broadcast_to(np.asarray(func(x), dtype=float), np.shape(x))


def coefficient_checks(path: WitnessPath, x: Optional[np.ndarray] = None,
                       rel_tol: float = 1e-9) -> Dict[str, bool]:
    """
    The vanishing statements each witness certifies. Exact where an exact
    statement exists, otherwise Taylor coefficients sampled on x.
    """
    x = default_grid(path.base) if x is None else x
    scale = float(np.max(np.abs(density_at(path.base.family, path.base.atoms[0].coords, x))))

    def numerically_zero(order):
        return float(np.max(np.abs(taylor_coefficient(path, order, x)))) <= rel_tol * scale

    checks: Dict[str, bool] = {}
    if path.name.startswith(Label.S0):
        table = minimal_form_vanishing(path, int(path.order))
        checks["minimal_form"] = all(ok for _, ok in table.values())
    elif path.name == Label.S1:
        groups = path.exact_groups()
        anchors = path.exact_anchors()
        total = sum(p * off[2] / anchors[i][0] for i, g in enumerate(groups) for p, off in g)
        checks["weighted_shape_sum"] = sp.simplify(total) == 0
        checks["first_order"] = numerically_zero(1)
    elif path.name == Label.S2:
        for i, group in enumerate(path.exact_groups()):
            for p, off in group:
                if off[2] != 0:
                    v0 = _Exact.const(path.base.atoms[i].v)
                    first = off[0] + 2 * off[2] * sp.sqrt(v0) / sp.sqrt(2 * sp.pi)
                    checks["first_order_exact"] = sp.simplify(first) == 0
        checks["first_order"] = numerically_zero(1)
        checks["second_order"] = numerically_zero(2)
    elif path.name == Label.S33:
        sums = s33_moment_sums(path, 4)
        checks["odd_moment_sums"] = all(sp.simplify(v) == 0 for v in sums.values())
        checks["density_identical"] = all(numerically_zero(o) for o in (1, 2, 3))
    logging.info(f"Witness {path.name} checks: {checks}")
    return checks


def s33_moment_sums(path: WitnessPath, max_order: int) -> Dict[Tuple[int, int], sp.Expr]:
    """Σ_j p_j (m_j)^u (Δm_j)^w / σ_j^(u+w+1) over moving atoms, for u + w odd, w ≥ 1."""
    out = {}
    groups = path.exact_groups()
    for u in range(max_order + 1):
        for w in range(1, max_order + 1):
            if (u + w) % 2 == 0:
                continue
            total = sp.Integer(0)
            for i, group in enumerate(groups):
                atom = path.base.atoms[i]
                m0 = _Exact.const(atom.m)
                sigma = sp.sqrt(_Exact.const(atom.v))
                for p, off in group:
                    if off[2] != 0:
                        total += p * m0**u * off[2]**w / sigma**(u + w + 1)
            out[(u, w)] = sp.expand(total)
    return out


def default_grid(G0: MixingMeasure, points: int = DEFAULT_CONFIG['X_GRID_POINTS']) -> np.ndarray:
    lo, hi = envelope(G0)
    return np.linspace(lo, hi, points)


def dyadic_ts(t_max: float = DEFAULT_CONFIG['T_MAX'],
              halvings: int = DEFAULT_CONFIG['T_HALVINGS']) -> List[float]:
    return [t_max * 2.0**-i for i in range(halvings + 1)]


@dataclass(frozen=True)
class DensityRatioReport:
    """sup_x |p_{G(t)} − p_{G0}| / distance^power along the t-grid."""
    distance: str
    ts: Tuple[float, ...]
    distances: Tuple[float, ...]
    ratios: Tuple[float, ...]

    @property
    def decay(self) -> float:
        """First ratio over last ratio."""
        return self.ratios[0] / self.ratios[-1] if self.ratios[-1] > 0 else math.inf

    @property
    def median(self) -> float:
        return float(np.median(self.ratios))

    @property
    def spread(self) -> Tuple[float, float]:
        """(min, max) relative to the median."""
        med = self.median
        if med == 0:
            return (0.0, 0.0)
        return (min(self.ratios) / med, max(self.ratios) / med)

    def rows(self) -> List[Dict[str, float]]:
        return [{"t": t, "W_s": d, "sup_ratio": r} for t, d, r in zip(self.ts, self.distances, self.ratios)]


def _difference(rep: ConvergentRep, x: np.ndarray) -> np.ndarray:
    # per-group differences first, so nearby atoms cancel before summing
    family = rep.base.family
    total = np.zeros_like(x)
    for i, group in enumerate(rep.groups):
        part = -rep.base_weight(i) * density_at(family, rep.anchor(i).coords, x) if i < rep.k0 \
            else np.zeros_like(x)
        for p, eta in group:
            part = part + p * density_at(family, eta.coords, x)
        total = total + part
    return total


def verify_density_ratio(G0: MixingMeasure, path: WitnessPath, s: Union[int, TransportSpec],
                         x_grid: Optional[np.ndarray] = None,
                         ts: Optional[Sequence[float]] = None) -> DensityRatioReport:
    """
    Ratio of the sup density difference to W_s^s (or to the power-scale
    generalized distance) along the dyadic t-grid.

    Raises:
        GridTooCoarse: if x_grid misses more than 1e-10 of G0's mass
        NotApplicable: at t = 0, where the ratio is 0/0
    """
    spec = s if isinstance(s, TransportSpec) else TransportSpec.wasserstein(int(s))
    x = default_grid(G0) if x_grid is None else np.asarray(x_grid, dtype=float)
    mass = float(mixture_cdf(G0, x[-1]) - mixture_cdf(G0, x[0]))
    if mass < 1 - Tolerances.MASS_COVERAGE:
        raise GridTooCoarse(ErrorMessages.GRID_TOO_COARSE.format(mass=mass, tol=Tolerances.MASS_COVERAGE))
    ts = dyadic_ts() if ts is None else list(ts)
    dists, ratios = [], []
    for t in ts:
        if t == 0:
            raise NotApplicable("The density ratio is 0/0 at t = 0")
        rep = path.at(t)
        _, plan = distance(spec, rep.to_measure(), G0)
        diff = _difference(rep, x)
        dists.append(plan.power)
        ratios.append(float(np.max(np.abs(diff))) / plan.power)
    report = DensityRatioReport(spec.name, tuple(ts), tuple(dists), tuple(ratios))
    logging.info(f"Density ratio along {path.name} for {spec.name}: decay {report.decay:.3g}")
    return report


def index_witness(G0: MixingMeasure, kappa: Sequence[int], **kwargs) -> DensityRatioReport:
    """Generalized-distance ratio along the split witness, e.g. κ = (3, r, r)."""
    return verify_density_ratio(G0, s0_overfit_path(G0), TransportSpec.generalized(kappa), **kwargs)


def write_ratio_csv(reports: Sequence[Tuple[Any, DensityRatioReport]], path) -> None:
    """Columns s, t, W_s, sup_ratio."""
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["s", "t", "W_s", "sup_ratio"])
        writer.writeheader()
        for s, report in reports:
            for row in report.rows():
                writer.writerow({"s": s, **row})
