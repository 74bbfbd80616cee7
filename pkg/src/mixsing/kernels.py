"""
Kernel densities, parameter derivatives and the PDE identities they satisfy.
"""
import logging
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np
import sympy as sp
from scipy import stats
from scipy.special import gammaln, log_ndtr

from mixsing import cache
from mixsing.constants import ErrorMessages, Family, Limits
from mixsing.errors import BadParams, DomainError, IndexMismatch, OrderTooHigh
from mixsing.mixing import MixingMeasure, ParamVec

ArrayLike = Union[float, np.ndarray]

LOG_2 = float(np.log(2.0))
RICHARDSON_STEP = 1e-3

X, THETA, V, M, A, B = sp.symbols("x theta v m a b", real=True)
KERNEL_PARAMS = {
    Family.SKEW_NORMAL: (THETA, V, M),
    Family.GAUSSIAN: (THETA, V),
    Family.GAMMA: (A, B),
}


def symbolic_density(family: str) -> sp.Expr:
    if family == Family.SKEW_NORMAL:
        z = (X - THETA) / sp.sqrt(V)
        return (sp.exp(-z**2 / 2) / sp.sqrt(2 * sp.pi * V)) * (1 + sp.erf(M * z / sp.sqrt(2)))
    if family == Family.GAUSSIAN:
        return sp.exp(-(X - THETA)**2 / (2 * V)) / sp.sqrt(2 * sp.pi * V)
    return B**A * X**(A - 1) * sp.exp(-B * X) / sp.gamma(A)


def _check(family: str, eta: ParamVec) -> Tuple[float, ...]:
    if eta.family != family:
        raise BadParams(ErrorMessages.MIXED_FAMILIES.format(families=[family, eta.family]))
    return eta.coords


def _check_points(x: ArrayLike) -> None:
    if np.isnan(np.asarray(x, dtype=float)).any():
        raise DomainError(ErrorMessages.NAN_POINT)


def _as_output(x, values: np.ndarray) -> ArrayLike:
    return float(values) if np.ndim(x) == 0 else values


def log_density_at(family: str, coords: Sequence[float], x: ArrayLike) -> np.ndarray:
    """log f(x|η) from raw coordinates; −inf outside the Gamma support."""
    x = np.asarray(x, dtype=float)
    if family == Family.GAMMA:
        a, b = coords
        with np.errstate(divide="ignore", invalid="ignore"):
            out = a * np.log(b) - gammaln(a) + (a - 1) * np.log(np.where(x > 0, x, 1.0)) - b * x
        return np.where(x > 0, out, -np.inf)
    theta, v = coords[0], coords[1]
    sigma = np.sqrt(v)
    z = (x - theta) / sigma
    out = -0.5 * z**2 - 0.5 * np.log(2 * np.pi * v)
    if family == Family.SKEW_NORMAL:
        # Φ in log space so far tails stay positive
        out = out + LOG_2 + log_ndtr(coords[2] * z)
    return out


def density_at(family: str, coords: Sequence[float], x: ArrayLike) -> np.ndarray:
    return np.exp(log_density_at(family, coords, x))


def density(family: str, eta: ParamVec, x: ArrayLike) -> ArrayLike:
    """
    Kernel density f(x|η). Gamma densities are 0 for x ≤ 0.

    Args:
        family (str): Kernel family tag
        eta (ParamVec): Component parameter of that family
        x: Point or array of points

    Returns:
        float or ndarray matching the shape of x

    Raises:
        DomainError: if x contains NaN
    """
    coords = _check(family, eta)
    _check_points(x)
    return _as_output(x, density_at(family, coords, x))


def _compiled_partial(family: str, alpha: Tuple[int, ...]) -> Callable:
    def build():
        expr = symbolic_density(family)
        for symbol, count in zip(KERNEL_PARAMS[family], alpha):
            if count:
                expr = sp.diff(expr, symbol, count)
        logging.info(f"Compiled kernel derivative {family} {alpha}")
        return sp.lambdify((X,) + KERNEL_PARAMS[family], expr, modules=["scipy", "numpy"])

    return cache.get_or_build(("kernel-partial", family, alpha), build)


def _check_alpha(family: str, alpha: Sequence[int]) -> Tuple[int, ...]:
    alpha = tuple(int(a) for a in alpha)
    dim = Family.DIMENSION[family]
    if len(alpha) != dim:
        raise IndexMismatch(ErrorMessages.INDEX_MISMATCH.format(got=len(alpha), expected=dim))
    if any(a < 0 for a in alpha):
        raise BadParams(f"Negative derivative index {alpha}")
    if sum(alpha) > Limits.MAX_ORDER:
        raise OrderTooHigh(ErrorMessages.ORDER_TOO_HIGH.format(
            order=sum(alpha), cap=Limits.MAX_ORDER))
    return alpha


def partial_at(family: str, coords: Sequence[float], x: ArrayLike,
               alpha: Sequence[int]) -> np.ndarray:
    """∂^α f(x|η) from raw coordinates, vectorised over x."""
    alpha = _check_alpha(family, alpha)
    x = np.asarray(x, dtype=float)
    if sum(alpha) == 0:
        return density_at(family, coords, x)
    if sum(alpha) <= Limits.MAX_ANALYTIC_ORDER:
        func = _compiled_partial(family, alpha)
        if family == Family.GAMMA:
            safe = np.where(x > 0, x, 1.0)
            with np.errstate(all="ignore"):
                values = np.asarray(func(safe, *coords), dtype=float)
            return np.where(x > 0, np.broadcast_to(values, x.shape), 0.0)
        return np.broadcast_to(np.asarray(func(x, *coords), dtype=float), x.shape).copy()
    return _richardson_partial(family, coords, x, alpha)


def _richardson_partial(family: str, coords: Sequence[float], x: np.ndarray,
                        alpha: Tuple[int, ...]) -> np.ndarray:
    # peel one order off the last differentiated coordinate
    c = max(i for i, a in enumerate(alpha) if a > 0)
    lower = list(alpha)
    lower[c] -= 1

    def central(h: float) -> np.ndarray:
        up = np.array(coords, dtype=float)
        down = np.array(coords, dtype=float)
        up[c] += h
        down[c] -= h
        return (partial_at(family, up, x, lower) - partial_at(family, down, x, lower)) / (2 * h)

    h = RICHARDSON_STEP
    return (4.0 * central(h / 2) - central(h)) / 3.0


def partial(family: str, eta: ParamVec, x: ArrayLike, alpha: Sequence[int]) -> ArrayLike:
    """
    Partial derivative ∂^{|α|} f / ∂η^α at x.

    Orders up to 4 are exact; orders 5 and 6 use Richardson-extrapolated
    central differences of the order-4 derivatives.

    Raises:
        OrderTooHigh: if |α| > 6
        IndexMismatch: if α has the wrong length for the family
        DomainError: if x contains NaN
    """
    coords = _check(family, eta)
    _check_points(x)
    return _as_output(x, partial_at(family, coords, x, alpha))


def pde_residuals(family: str, eta: ParamVec, x: ArrayLike) -> List[ArrayLike]:
    """
    Residuals of the kernel's PDE identities; each vanishes identically.

    skew-normal:
        f_θθ − 2 f_v + ((m³+m)/v) f_m
        2m f_m + (m²+1) f_mm + 2vm f_vm
    gaussian:
        f_θθ − 2 f_v
    gamma:
        f_b − (a/b) f(x|a,b) + (a/b) f(x|a+1,b)
    """
    coords = _check(family, eta)

    def d(*alpha):
        return partial_at(family, coords, x, alpha)

    if family == Family.SKEW_NORMAL:
        _, v, m = coords
        first = d(2, 0, 0) - 2 * d(0, 1, 0) + ((m**3 + m) / v) * d(0, 0, 1)
        second = 2 * m * d(0, 0, 1) + (m**2 + 1) * d(0, 0, 2) + 2 * v * m * d(0, 1, 1)
        residuals = [first, second]
    elif family == Family.GAUSSIAN:
        residuals = [d(2, 0) - 2 * d(0, 1)]
    else:
        a, b = coords
        shifted = density_at(family, (a + 1, b), x)
        residuals = [d(0, 1) - (a / b) * density_at(family, coords, x) + (a / b) * shifted]
    return [_as_output(x, r) for r in residuals]


def mixture_density(G: MixingMeasure, x: ArrayLike) -> ArrayLike:
    """p_G(x) = Σ p_i f(x|η_i)."""
    x_arr = np.asarray(x, dtype=float)
    total = np.zeros_like(x_arr)
    for p, eta in zip(G.weights, G.atoms):
        total = total + p * density_at(G.family, eta.coords, x_arr)
    return _as_output(x, total)


def _frozen(family: str, coords: Sequence[float]):
    if family == Family.SKEW_NORMAL:
        theta, v, m = coords
        return stats.skewnorm(m, loc=theta, scale=np.sqrt(v))
    if family == Family.GAUSSIAN:
        theta, v = coords
        return stats.norm(loc=theta, scale=np.sqrt(v))
    a, b = coords
    return stats.gamma(a, scale=1.0 / b)


def frozen_distribution(eta: ParamVec):
    """scipy.stats frozen distribution of a kernel component."""
    return _frozen(eta.family, eta.coords)


def cdf(family: str, eta: ParamVec, x: ArrayLike) -> ArrayLike:
    """Kernel CDF."""
    coords = _check(family, eta)
    return _as_output(x, np.asarray(_frozen(family, coords).cdf(x), dtype=float))


def mixture_cdf(G: MixingMeasure, x: ArrayLike) -> ArrayLike:
    x_arr = np.asarray(x, dtype=float)
    total = np.zeros_like(x_arr)
    for p, eta in zip(G.weights, G.atoms):
        total = total + p * _frozen(G.family, eta.coords).cdf(x_arr)
    return _as_output(x, total)


def envelope(*measures: MixingMeasure, width: float = 8.0) -> Tuple[float, float]:
    """
    Interval holding essentially all the mass of the given measures:
    θ ± width·σ per atom, or quantiles for Gamma.
    """
    lo, hi = np.inf, -np.inf
    tail = float(stats.norm.sf(width))
    for G in measures:
        for eta in G.atoms:
            if G.family == Family.GAMMA:
                dist = _frozen(G.family, eta.coords)
                lo = min(lo, 0.0)
                hi = max(hi, float(dist.isf(tail)))
            else:
                lo = min(lo, eta.theta - width * eta.sigma)
                hi = max(hi, eta.theta + width * eta.sigma)
    return float(lo), float(hi)
