"""
Shared constants for the toolkit.
"""


class AppInfo:
    """Define app data"""
    name = "mixsing"
    namecase = "Mixture Singularity Toolkit"
    version = "0.1.0"


class Family:
    """Kernel family tags, as written in measure JSON."""
    SKEW_NORMAL = "skew_normal"
    GAUSSIAN = "gaussian"
    GAMMA = "gamma"

    ALL = (SKEW_NORMAL, GAUSSIAN, GAMMA)
    DIMENSION = {SKEW_NORMAL: 3, GAUSSIAN: 2, GAMMA: 2}
    COORDINATES = {
        SKEW_NORMAL: ("theta", "v", "m"),
        GAUSSIAN: ("theta", "v"),
        GAMMA: ("a", "b"),
    }
    # coordinates that must stay strictly positive
    POSITIVE = {SKEW_NORMAL: (1,), GAUSSIAN: (1,), GAMMA: (0, 1)}


class Setting:
    """Exact-fitted and over-fitted ambient classes."""
    EXACT = "e"
    OVER = "o"


class Label:
    """Classification labels carried by a SingularityReport."""
    S0 = "S0"
    S1 = "S1"
    S2 = "S2"
    S31 = "S31"
    S32 = "S32"
    S33 = "S33"
    GAMMA_GENERIC = "gamma-generic"
    GAMMA_PATHOLOGICAL = "gamma-pathological"
    FIRST_ORDER = "first-order-identifiable"
    SECOND_ORDER = "second-order-identifiable"
    O_SKEW = "o-mixture-skew"
    O_GAUSSIAN = "o-mixture-gaussian"


class LevelKind:
    """How much a reported level or index is known."""
    EXACT = "exact"
    BOUND = "bound"
    CONJECTURAL = "conjectural"
    INF = "inf"


class Verdict:
    """Statuses of the polynomial-system solvability oracle."""
    SOLVABLE = "Solvable"
    UNSOLVABLE = "Unsolvable"
    INCONCLUSIVE = "Inconclusive"


class ExitCode:
    """Command-line exit codes."""
    OK = 0
    FAILURE = 1
    WARNING = 2


class Tolerances:
    """Numeric tolerances shared across modules."""
    ATOM_DISTINCT = 1e-12
    WEIGHT_SUM = 1e-12
    RENORMALIZE_WINDOW = 1e-9
    ZERO_TEST = 1e-10
    BOUNDARY_PROXIMITY = 1e-6
    PLAN_MARGINAL = 1e-9
    MASS_COVERAGE = 1e-10
    FISHER_RANK = 1e-8
    GRAM_MIN_EIGEN = 1e-10


class Limits:
    """Hard caps on problem sizes."""
    MAX_ATOMS = 64
    MAX_ANALYTIC_ORDER = 4
    MAX_ORDER = 6


class ErrorMessages:
    """Constants for error messages"""
    DUPLICATE_ATOMS = "Atoms {i} and {j} coincide within {tol:g}"
    BAD_WEIGHTS = "Weights must be positive and sum to 1 (got sum {total:.12g})"
    NONPOSITIVE_WEIGHT = "Weight {i} is not strictly positive: {value}"
    MIXED_FAMILIES = "All atoms must share one family, got {families}"
    BAD_COORDS = "Family {family} expects {expected} coordinates, got {got}"
    NONPOSITIVE_COORD = "Coordinate {name} of a {family} atom must be > 0, got {value}"
    UNKNOWN_FAMILY = "Unknown kernel family '{family}'"
    INDEX_MISMATCH = "Index of length {got} does not match dimension {expected}"
    ORDER_TOO_HIGH = "Derivative order {order} exceeds the cap {cap}"
    POLE_AT_ZERO_SHAPE = "Reduction route divides by the shape m, which is zero"
    SUPPORT_TOO_LARGE = "Transport supports at most {cap} atoms per measure, got {got}"
    NOT_S0 = "Mixing measure is in class {label}, not S0"
    GRID_TOO_COARSE = "Grid covers mass {mass:.15g}, below 1 - {tol:g}"
    NO_CONVERGED_START = "None of the {starts} starts converged"
    DEGENERATE_REGRESSION = "Slope regression needs at least {need} distinct n and positive errors"
    LABEL_MISMATCH = "Witness expects class {expected}, measure is in class {got}"
    NAN_POINT = "Density is undefined at a NaN evaluation point"
    TRANSPORT_LP_FAILED = "Transport LP failed: {message}"
