"""
Symbolic elimination of kernel derivatives.

Skew-normal derivatives are rewritten onto the basis
F = {κ : κ1 ≤ 1, and κ3 = 0 or κ2 = 0} using the two PDE identities

    f_θθ = 2 f_v − ((m³+m)/v) f_m
    f_vm = −(1/v) f_m − ((m²+1)/(2vm)) f_mm

Gaussian derivatives collapse onto pure location derivatives through
f_v = f_θθ / 2.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from itertools import product
from math import comb, factorial
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import sympy as sp

from mixsing import cache
from mixsing.constants import ErrorMessages, Family, Label, Limits, Setting, Tolerances
from mixsing.errors import BadParams, IndexMismatch, NotApplicable, NotS0, OrderTooHigh, PoleAtZeroShape
from mixsing.kernels import partial_at
from mixsing.mixing import ConvergentRep, MixingMeasure, ParamVec, delta_quantities

M = sp.Symbol("m", real=True)
V = sp.Symbol("v", positive=True)

Index = Tuple[int, ...]


@dataclass(frozen=True)
class RationalCoef:
    """A rational function of (m, v) with exact rational coefficients, kept in cancelled form."""
    expr: sp.Expr

    def __post_init__(self):
        object.__setattr__(self, "expr", sp.cancel(sp.sympify(self.expr)))
        if self.denominator == 0:
            raise BadParams("Zero denominator")

    @property
    def numerator(self) -> sp.Expr:
        return sp.fraction(self.expr)[0]

    @property
    def denominator(self) -> sp.Expr:
        return sp.fraction(self.expr)[1]

    @property
    def is_zero(self) -> bool:
        return self.expr == 0

    def equals(self, other: Any) -> bool:
        other_expr = other.expr if isinstance(other, RationalCoef) else sp.sympify(other)
        return sp.cancel(self.expr - other_expr) == 0

    def has_pole_at_zero_shape(self) -> bool:
        return sp.expand(self.denominator.subs(M, 0)) == 0

    @cached_property
    def _compiled(self) -> Callable:
        return sp.lambdify((V, M), self.expr, modules="numpy")

    def evaluate(self, v: float, m: float) -> float:
        if m == 0 and self.has_pole_at_zero_shape():
            raise PoleAtZeroShape(ErrorMessages.POLE_AT_ZERO_SHAPE)
        return float(self._compiled(v, m))

    def at(self, v: sp.Expr, m: sp.Expr) -> sp.Expr:
        """Exact value at symbolic or rational (v, m)."""
        if sp.sympify(m) == 0 and self.has_pole_at_zero_shape():
            raise PoleAtZeroShape(ErrorMessages.POLE_AT_ZERO_SHAPE)
        return self.expr.subs({V: v, M: m})

    def __str__(self) -> str:
        return sp.sstr(sp.factor(self.expr))


def weighted_degree(kappa: Sequence[int]) -> int:
    """κ1 + 2κ2 + 2κ3 (κ1 + 2κ2 for two-parameter indices)."""
    return kappa[0] + 2 * sum(kappa[1:])


def in_basis(kappa: Sequence[int]) -> bool:
    return kappa[0] <= 1 and (kappa[2] == 0 or kappa[1] == 0)


def basis_indices(r: int) -> List[Index]:
    """F_r: basis indices of total order ≤ r, ordered by weighted degree then lexicographically."""
    found = [k for k in product(range(r + 1), repeat=3) if sum(k) <= r and in_basis(k)]
    return sorted(found, key=lambda k: (weighted_degree(k), k))


@dataclass(frozen=True)
class ReducedDerivative:
    """∂^α f written as Σ coef · ∂^κ f over basis indices κ."""
    source: Index
    terms: Tuple[Tuple[RationalCoef, Index], ...]

    def coefficient(self, kappa: Sequence[int]) -> RationalCoef:
        for coef, k in self.terms:
            if k == tuple(kappa):
                return coef
        return RationalCoef(sp.Integer(0))

    @property
    def indices(self) -> List[Index]:
        return [k for _, k in self.terms]

    def degree_bound_holds(self) -> bool:
        return all(weighted_degree(k) <= weighted_degree(self.source) for _, k in self.terms)


def _check_skew_alpha(alpha: Sequence[int]) -> Index:
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != 3:
        raise IndexMismatch(ErrorMessages.INDEX_MISMATCH.format(got=len(alpha), expected=3))
    if min(alpha) < 0:
        raise BadParams(f"Negative derivative index {alpha}")
    if sum(alpha) > Limits.MAX_ORDER:
        raise OrderTooHigh(ErrorMessages.ORDER_TOO_HIGH.format(order=sum(alpha), cap=Limits.MAX_ORDER))
    return alpha


def _leibniz(gamma: Index, rhs: Iterable[Tuple[sp.Expr, Index]]) -> List[Tuple[sp.Expr, Index]]:
    """∂^γ applied to Σ c(v, m) ∂^β f; θ-derivatives never touch c."""
    out = []
    for coef, beta in rhs:
        for j2 in range(gamma[1] + 1):
            for j3 in range(gamma[2] + 1):
                d = sp.diff(coef, V, j2, M, j3) if (j2 or j3) else coef
                if d == 0:
                    continue
                weight = comb(gamma[1], j2) * comb(gamma[2], j3)
                target = (beta[0] + gamma[0], beta[1] + gamma[1] - j2, beta[2] + gamma[2] - j3)
                out.append((weight * d, target))
    return out


def _build_skew(alpha: Index) -> ReducedDerivative:
    if in_basis(alpha):
        return ReducedDerivative(alpha, ((RationalCoef(sp.Integer(1)), alpha),))
    if alpha[0] >= 2:
        gamma = (alpha[0] - 2, alpha[1], alpha[2])
        rhs = [(sp.Integer(2), (0, 1, 0)), (-(M**3 + M) / V, (0, 0, 1))]
    else:
        gamma = (alpha[0], alpha[1] - 1, alpha[2] - 1)
        rhs = [(-1 / V, (0, 0, 1)), (-(M**2 + 1) / (2 * V * M), (0, 0, 2))]

    collected: Dict[Index, sp.Expr] = {}
    for coef, beta in _leibniz(gamma, rhs):
        for inner, kappa in reduce_skew(beta).terms:
            collected[kappa] = collected.get(kappa, sp.Integer(0)) + coef * inner.expr
    terms = []
    for kappa in sorted(collected, key=lambda k: (weighted_degree(k), k)):
        coef = RationalCoef(collected[kappa])
        if not coef.is_zero:
            terms.append((coef, kappa))
    result = ReducedDerivative(alpha, tuple(terms))
    assert result.degree_bound_holds(), f"weighted degree grew while reducing {alpha}"
    return result


def reduce_skew(alpha: Sequence[int]) -> ReducedDerivative:
    """
    Rewrites ∂^α f of the skew-normal kernel onto the basis F_{|α|}.

    Raises:
        OrderTooHigh: if |α| > 6
    """
    alpha = _check_skew_alpha(alpha)
    return cache.get_or_build(("reduce-skew", alpha), lambda: _build_skew(alpha))


def reduce_gaussian(alpha: Sequence[int]) -> ReducedDerivative:
    """∂^{α1+α2} f / ∂θ^{α1} ∂v^{α2} = 2^{−α2} ∂^{α1+2α2} f / ∂θ^{α1+2α2}."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != 2:
        raise IndexMismatch(ErrorMessages.INDEX_MISMATCH.format(got=len(alpha), expected=2))
    if min(alpha) < 0:
        raise BadParams(f"Negative derivative index {alpha}")
    coef = RationalCoef(sp.Rational(1, 2**alpha[1]))
    return ReducedDerivative(alpha, ((coef, (alpha[0] + 2 * alpha[1], 0)),))


def evaluate_reduced(rd: ReducedDerivative, family: str, eta: ParamVec, x) -> np.ndarray:
    """
    Numeric value of a reduced combination at (η, x).

    Raises:
        PoleAtZeroShape: if a coefficient divides by m and m = 0
    """
    v = eta.v
    m = eta.m
    total = np.zeros_like(np.asarray(x, dtype=float))
    for coef, kappa in rd.terms:
        total = total + coef.evaluate(v, m) * partial_at(family, eta.coords, x, kappa)
    return total


def reduction_table(order: int, family: str = Family.SKEW_NORMAL) -> List[ReducedDerivative]:
    """Reductions of every non-basis index of total order `order`."""
    if order > Limits.MAX_ORDER:
        raise OrderTooHigh(ErrorMessages.ORDER_TOO_HIGH.format(order=order, cap=Limits.MAX_ORDER))
    if family == Family.GAUSSIAN:
        return [reduce_gaussian((order - k, k)) for k in range(1, order + 1)]
    if family != Family.SKEW_NORMAL:
        raise NotApplicable(f"No reduction table for the {family} family")
    indices = [a for a in product(range(order + 1), repeat=3) if sum(a) == order and not in_basis(a)]
    indices.sort(key=lambda a: (-weighted_degree(a), a))
    return [reduce_skew(a) for a in indices]


def _label(index: Sequence[int], names: Sequence[str]) -> str:
    parts = [f"{n}^{k}" if k > 1 else n for n, k in zip(names, index) if k]
    return "f" if not parts else "d" + "".join(parts) + " f"


def format_reduction(rd: ReducedDerivative) -> str:
    """One line per reduction, e.g. `dtheta^2 f = 2 * dv f + (-m*(m**2 + 1)/v) * dm f`."""
    names = ("theta", "v", "m")[:len(rd.source)]
    rhs = " + ".join(f"({c}) * {_label(k, names)}" if str(c) != "1" else _label(k, names)
                     for c, k in rd.terms)
    return f"{_label(rd.source, names)} = {rhs or '0'}"


def taylor_indices(family: str, r: int) -> List[Index]:
    """Multi-indices α with 1 ≤ |α| ≤ r."""
    dim = Family.DIMENSION[family]
    found = [a for a in product(range(r + 1), repeat=dim) if 1 <= sum(a) <= r]
    return sorted(found, key=lambda a: (sum(a), a))


def _reduce_for(family: str, alpha: Index) -> ReducedDerivative:
    return reduce_skew(alpha) if family == Family.SKEW_NORMAL else reduce_gaussian(alpha)


def _alpha_factorial(alpha: Index) -> int:
    out = 1
    for a in alpha:
        out *= factorial(a)
    return out


BasisKey = Tuple[int, Index]


@dataclass(frozen=True)
class MinimalForm:
    """
    r-minimal form of p_G − p_{G0} around a base measure.

    Coefficients are ξ_{i,κ} = Σ_α c_{α,κ}(η_i^0)/α! · Σ_j p_ij Δη_ij^α, plus
    Δp_{i·} on κ = 0, where c_{α,κ} come from the reduction table.
    """
    base: MixingMeasure
    r: int
    setting: str
    family: str

    @property
    def basis_local(self) -> List[Index]:
        if self.family == Family.SKEW_NORMAL:
            return basis_indices(self.r)
        return [(l, 0) for l in range(2 * self.r + 1)]

    def basis(self, groups: Optional[int] = None) -> List[BasisKey]:
        groups = self.base.k if groups is None else groups
        return [(i, kappa) for i in range(groups) for kappa in self.basis_local]

    @cached_property
    def table(self) -> List[Tuple[Index, int, ReducedDerivative]]:
        return [(a, _alpha_factorial(a), _reduce_for(self.family, a))
                for a in taylor_indices(self.family, self.r)]

    def _check_rep(self, rep: ConvergentRep) -> None:
        if rep.base != self.base:
            raise BadParams("Representation is built on another base measure")
        if self.setting == Setting.EXACT and (rep.extra_count or max(rep.sizes) > 1):
            raise BadParams("The exact-fitted form needs one atom per group and no redundant groups")

    def coefficients(self, rep: ConvergentRep) -> Dict[BasisKey, float]:
        """Numeric ξ_{i,κ} of a representation."""
        self._check_rep(rep)
        dq = delta_quantities(rep)
        xi: Dict[BasisKey, float] = {key: 0.0 for key in self.basis(len(rep.groups))}
        for i, (delta, w) in enumerate(zip(dq.delta_eta, dq.weights)):
            anchor = rep.anchor(i)
            for alpha, fact, rd in self.table:
                moment = float(np.sum(w * np.prod(delta ** np.asarray(alpha), axis=1))) / fact
                if moment == 0.0:
                    continue
                for coef, kappa in rd.terms:
                    xi[(i, kappa)] += coef.evaluate(anchor.v, anchor.m) * moment
            xi[(i, self.basis_local[0])] += float(dq.delta_p[i])
        return xi

    def symbolic_coefficients(self, anchors: Sequence[Tuple[sp.Expr, sp.Expr]],
                              groups: Sequence[Sequence[Tuple[sp.Expr, Sequence[sp.Expr]]]],
                              delta_p: Sequence[sp.Expr]) -> Dict[BasisKey, sp.Expr]:
        """
        Exact ξ_{i,κ} along a symbolic path.

        Args:
            anchors: exact (v_i^0, m_i^0) per group
            groups: per group, (p_ij, Δη_ij) with sympy entries
            delta_p: Δp_{i·} per group
        """
        xi: Dict[BasisKey, sp.Expr] = {key: sp.Integer(0) for key in self.basis(len(groups))}
        for i, group in enumerate(groups):
            v0, m0 = anchors[i]
            for alpha, fact, rd in self.table:
                moment = sum(p * sp.Mul(*[d**a for d, a in zip(delta, alpha)]) for p, delta in group)
                moment = sp.expand(moment)
                if moment == 0:
                    continue
                for coef, kappa in rd.terms:
                    value = coef.at(v0, m0) if self.family == Family.SKEW_NORMAL else coef.expr
                    xi[(i, kappa)] += value * moment / fact
            xi[(i, self.basis_local[0])] += delta_p[i]
        return {key: sp.expand(val) for key, val in xi.items()}

    def vanishing_along(self, t: sp.Symbol, anchors, groups, delta_p, d_order: int
                        ) -> Dict[BasisKey, Tuple[float, bool]]:
        """
        Lowest t-order of each coefficient and whether it exceeds `d_order`,
        the t-order of D_r along the path.
        """
        out = {}
        for key, expr in self.symbolic_coefficients(anchors, groups, delta_p).items():
            order = lowest_t_order(expr, t)
            out[key] = (order, order > d_order)
        return out

    def basis_values(self, anchors: Sequence[ParamVec], x: np.ndarray) -> np.ndarray:
        """Columns ∂^κ f(x|anchor_i) in basis order."""
        cols = []
        for i, kappa in self.basis(len(anchors)):
            cols.append(partial_at(self.family, anchors[i].coords, x, kappa[:anchors[i].dim]))
        return np.column_stack(cols)

    def approximation(self, rep: ConvergentRep, x: np.ndarray) -> np.ndarray:
        """Σ ξ_{i,κ} ∂^κ f(x|η_i^0): the r-th order expansion of p_G − p_{G0}."""
        xi = self.coefficients(rep)
        anchors = [rep.anchor(i) for i in range(len(rep.groups))]
        values = self.basis_values(anchors, x)
        return values @ np.array([xi[key] for key in self.basis(len(anchors))])


def lowest_t_order(expr: sp.Expr, t: sp.Symbol, zero_tol: float = 1e-12) -> float:
    """Smallest power of t with a nonzero coefficient; inf for the zero polynomial."""
    expr = sp.expand(expr)
    if expr == 0:
        return float("inf")
    poly = sp.Poly(expr, t)
    scale = max(abs(float(c)) for c in poly.coeffs()) or 1.0
    for (power,), coef in sorted(poly.terms(), key=lambda item: item[0][0]):
        if abs(float(coef)) > zero_tol * scale:
            return float(power)
    return float("inf")


def basis_gram_min_eigenvalue(form: MinimalForm, anchors: Sequence[ParamVec], grid: np.ndarray) -> float:
    """Smallest eigenvalue of the correlation Gram matrix of the basis on `grid`."""
    values = form.basis_values(anchors, grid)
    norms = np.linalg.norm(values, axis=0)
    norms[norms == 0] = 1.0
    unit = values / norms
    return float(np.min(np.linalg.eigvalsh(unit.T @ unit)))


def build_minimal_form(G0: MixingMeasure, r: int, setting: str = Setting.EXACT) -> MinimalForm:
    """
    The r-minimal form around G0 for skew-normal or Gaussian kernels.

    Raises:
        NotS0: skew-normal G0 outside the generic class
        NotApplicable: Gamma kernels
        OrderTooHigh: r > 6
    """
    from mixsing.classify import skew_partition

    if setting not in (Setting.EXACT, Setting.OVER):
        raise BadParams(f"Unknown setting '{setting}'")
    if r < 1 or r > Limits.MAX_ORDER:
        raise OrderTooHigh(ErrorMessages.ORDER_TOO_HIGH.format(order=r, cap=Limits.MAX_ORDER))
    if G0.family == Family.GAMMA:
        raise NotApplicable("Minimal forms are built for skew-normal and Gaussian kernels only")
    if G0.family == Family.SKEW_NORMAL:
        label = skew_partition(G0).label
        if label != Label.S0:
            raise NotS0(ErrorMessages.NOT_S0.format(label=label))
    form = MinimalForm(G0, int(r), setting, G0.family)
    logging.info(f"Built {r}-minimal form for k0={G0.k} {G0.family} in setting {setting}")
    return form


def gram_is_independent(form: MinimalForm, anchors: Sequence[ParamVec], grid: np.ndarray) -> bool:
    return basis_gram_min_eigenvalue(form, anchors, grid) > Tolerances.GRAM_MIN_EIGEN
