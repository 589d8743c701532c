"""
Bernstein Function Catalog

Nonpositive Bernstein functions of n variables stored as data: a closed-form
evaluator plus the Levy triple (c0, c1, mu) of the integral representation

    psi(s) = c0 + c1 . s + int (exp(s . u) - 1) dmu(u),    s in (-inf, 0)^n.

Catalog entries are addressable by name ("sqrt", "alpha:<value>", "log", "rat",
"poisson", "sum:<a>+<b>+...", "diag:<n>:<inner>") so the CLI and campaign
configs can refer to them.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import special

logger = logging.getLogger(__name__)

STABLE_HALF = 'stable_half_density'
POISSON_ATOMS = 'poisson_atoms'


class DomainError(ValueError):
    """Argument outside the domain (-inf, 0)^n of a catalog function."""


class CatalogError(ValueError):
    """Unknown or malformed catalog name."""


class _BoundaryLimit:
    """The limit token s -> -0. Never a floating-point -0.0."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return '-0'

    def __reduce__(self):
        return (_BoundaryLimit, ())


MINUS_ZERO = _BoundaryLimit()

Point = Union[float, _BoundaryLimit]


# ---------------------------------------------------------------------------
# One-dimensional densities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Density:
    """
    A density rho(v) on (0, inf) with closed-form partial moments.

    Attributes:
        name: Short label used in logs
        rho: Vectorized density
        partial_moment: (a, b, k) -> int_a^b v^k rho(v) dv, possibly inf
        singularity_order: sigma with rho(v) = O(v^(-1-sigma)) as v -> 0
        tail_index: tau with rho(v) = O(v^(-1-tau)) as v -> inf (inf for exponential decay)
    """
    name: str
    rho: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    partial_moment: Callable[[float, float, int], float] = field(repr=False)
    singularity_order: float
    tail_index: float

    def moment(self, k: int) -> float:
        return self.partial_moment(0.0, math.inf, k)

    def mass_beyond(self, v: float) -> float:
        return self.partial_moment(v, math.inf, 0)


def _power_moment(scale: float, exponent: float, a: float, b: float, k: int) -> float:
    """int_a^b v^k * scale * v^(-1-exponent) dv"""
    p = k - exponent
    if p > 0 and math.isinf(b):
        return math.inf
    if p < 0 and a == 0.0:
        return math.inf
    upper = 0.0 if math.isinf(b) else b ** p
    lower = 0.0 if a == 0.0 else a ** p
    return scale * (upper - lower) / p


def _gamma_moment(order: float, a: float, b: float) -> float:
    """int_a^b v^(order-1) exp(-v) dv for order > 0, split to avoid cancellation."""
    g = special.gamma(order)
    if a == 0.0:
        return float(g * special.gammainc(order, b)) if not math.isinf(b) else float(g)
    if math.isinf(b):
        return float(g * special.gammaincc(order, a))
    if a >= order:
        return float(g * (special.gammaincc(order, a) - special.gammaincc(order, b)))
    return float(g * (special.gammainc(order, b) - special.gammainc(order, a)))


def stable_density(alpha: float) -> Density:
    """Levy density alpha/Gamma(1-alpha) * v^(-1-alpha) of -(-s)^alpha."""
    scale = alpha / special.gamma(1.0 - alpha)

    def rho(v):
        return scale * np.power(v, -1.0 - alpha)

    def moment(a, b, k):
        return _power_moment(scale, alpha, a, b, k)

    return Density(f'stable({alpha:g})', rho, moment, singularity_order=alpha, tail_index=alpha)


def _log_rho(v):
    return np.exp(-v) / v


def _log_moment(a, b, k):
    if k == 0:
        if a == 0.0:
            return math.inf
        return float(special.exp1(a) - (0.0 if math.isinf(b) else special.exp1(b)))
    return _gamma_moment(k, a, b)


def _rat_rho(v):
    return np.exp(-v)


def _rat_moment(a, b, k):
    return _gamma_moment(k + 1, a, b)


LOG_DENSITY = Density('exp(-v)/v', _log_rho, _log_moment, singularity_order=0.0, tail_index=math.inf)
RAT_DENSITY = Density('exp(-v)', _rat_rho, _rat_moment, singularity_order=-1.0, tail_index=math.inf)


def stable_half_law_density(t: float) -> Density:
    """Density t/(2 sqrt(pi)) u^(-3/2) exp(-t^2/(4u)) of the subordinator of -(-s)^(1/2)."""
    scale = t / (2.0 * math.sqrt(math.pi))

    def rho(u):
        return scale * np.power(u, -1.5) * np.exp(-t * t / (4.0 * u))

    def _x(v):
        if v == 0.0:
            return math.inf
        if math.isinf(v):
            return 0.0
        return t / (2.0 * math.sqrt(v))

    def moment(a, b, k):
        if k > 0:
            # u^(-3/2) tail: every integer moment diverges
            return math.inf if math.isinf(b) else float(
                _quad_moment(rho, a, b, k))
        xa, xb = _x(a), _x(b)
        if xb > 1.0:
            return float(special.erfc(xb) - special.erfc(xa))
        return float(special.erf(xa) - special.erf(xb))

    return Density(f'stable_half(t={t:g})', rho, moment, singularity_order=-math.inf, tail_index=0.5)


def _quad_moment(rho, a, b, k):
    from scipy.integrate import quad
    value, _ = quad(lambda v: v ** k * rho(v), a, b, limit=200)
    return value


# ---------------------------------------------------------------------------
# Levy measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AtomList:
    """Finitely many atoms: (point u in R_+^n \\ {0}, weight > 0)."""
    points: tuple
    weights: tuple

    def __post_init__(self):
        if len(self.points) != len(self.weights):
            raise ValueError("AtomList needs one weight per point")
        for point, weight in zip(self.points, self.weights):
            if not weight > 0:
                raise ValueError(f"Atom weights must be strictly positive, got {weight}")
            if any(c < 0 for c in point) or not any(c > 0 for c in point):
                raise ValueError(f"Atom points must lie in R_+^n minus the origin, got {point}")

    @property
    def dimension(self) -> int:
        return len(self.points[0])

    def as_arrays(self):
        return np.asarray(self.points, dtype=float), np.asarray(self.weights, dtype=float)


@dataclass(frozen=True)
class AxisDensity:
    """A 1-d density placed on coordinate axis `axis`: u = v e_axis."""
    axis: int
    density: Density

    def direction(self, n: int) -> np.ndarray:
        e = np.zeros(n)
        e[self.axis] = 1.0
        return e


@dataclass(frozen=True)
class DiagonalDensity:
    """A 1-d density pushed forward by v -> (v, ..., v)."""
    density: Density

    def direction(self, n: int) -> np.ndarray:
        return np.ones(n)


Piece = Union[AtomList, AxisDensity, DiagonalDensity]


@dataclass(frozen=True)
class LevyMeasure:
    """
    A positive measure on R_+^n \\ {0} as a nonnegative combination of pieces.

    `components` holds (coefficient, piece) pairs, so sums and nonnegative
    multiples stay representable (the cone structure of the catalog).
    """
    dimension: int
    components: tuple

    def __post_init__(self):
        for coef, piece in self.components:
            if coef < 0:
                raise ValueError(f"Levy measure coefficients must be nonnegative, got {coef}")
            if isinstance(piece, AtomList) and piece.dimension != self.dimension:
                raise ValueError("Atom dimension does not match the measure")
            if isinstance(piece, AxisDensity) and not 0 <= piece.axis < self.dimension:
                raise ValueError(f"Axis {piece.axis} out of range for dimension {self.dimension}")
        if not self.singularity_order < 1.0:
            raise ValueError(
                f"singularity order {self.singularity_order} >= 1: int min(1,|u|) dmu diverges")

    @property
    def singularity_order(self) -> float:
        orders = [p.density.singularity_order for _, p in self.components
                  if not isinstance(p, AtomList)]
        return max(orders, default=-math.inf)

    def __add__(self, other: 'LevyMeasure') -> 'LevyMeasure':
        if other.dimension != self.dimension:
            raise ValueError("Cannot add Levy measures of different dimension")
        return LevyMeasure(self.dimension, self.components + other.components)

    def scaled(self, c: float) -> 'LevyMeasure':
        if c < 0:
            raise ValueError("Levy measures only scale by nonnegative numbers")
        return LevyMeasure(self.dimension, tuple((c * coef, p) for coef, p in self.components))

    def tail_bound(self, radius: float) -> float:
        """mu({|u|_1 > radius})"""
        total = 0.0
        for coef, piece in self.components:
            if isinstance(piece, AtomList):
                points, weights = piece.as_arrays()
                total += coef * float(weights[points.sum(axis=1) > radius].sum())
            else:
                length = float(piece.direction(self.dimension).sum())
                total += coef * piece.density.mass_beyond(radius / length)
        return total

    def moment(self, i: int, k: int = 1) -> float:
        """int u_i^k dmu(u), possibly inf"""
        total = 0.0
        for coef, piece in self.components:
            if coef == 0.0:
                continue
            if isinstance(piece, AtomList):
                points, weights = piece.as_arrays()
                total += coef * float((weights * points[:, i] ** k).sum())
            elif isinstance(piece, AxisDensity) and piece.axis != i:
                continue
            else:
                total += coef * piece.density.moment(k)
        return total

    def integrability(self) -> float:
        """int min(1, |u|_1) dmu(u)"""
        total = 0.0
        for coef, piece in self.components:
            if isinstance(piece, AtomList):
                points, weights = piece.as_arrays()
                total += coef * float((weights * np.minimum(1.0, points.sum(axis=1))).sum())
            else:
                length = float(piece.direction(self.dimension).sum())
                cut = 1.0 / length
                total += coef * (length * piece.density.partial_moment(0.0, cut, 1)
                                 + piece.density.partial_moment(cut, math.inf, 0))
        return total


@dataclass(frozen=True)
class LevyTriple:
    """(c0, c1, mu) with c0 = psi(-0) <= 0 and c1 >= 0 componentwise."""
    c0: float
    c1: tuple
    mu: LevyMeasure

    def __post_init__(self):
        if self.c0 > 0:
            raise ValueError(f"c0 must be nonpositive, got {self.c0}")
        if len(self.c1) != self.mu.dimension:
            raise ValueError("c1 must have one entry per variable")
        if any(c < 0 for c in self.c1):
            raise ValueError(f"c1 must be componentwise nonnegative, got {self.c1}")

    def __add__(self, other: 'LevyTriple') -> 'LevyTriple':
        return LevyTriple(self.c0 + other.c0,
                          tuple(a + b for a, b in zip(self.c1, other.c1)),
                          self.mu + other.mu)

    def scaled(self, c: float) -> 'LevyTriple':
        return LevyTriple(c * self.c0, tuple(c * x for x in self.c1), self.mu.scaled(c))


@dataclass(frozen=True)
class SubordinationLaw:
    """
    Law of the subordinator nu_t with int exp(s.u) dnu_t(u) = exp(t psi(s)).

    `embedding` is the number of variables; for n > 1 the 1-d law is pushed
    forward onto the diagonal (used by diag composites).
    """
    kind: str
    embedding: int = 1

    def __post_init__(self):
        if self.kind not in (STABLE_HALF, POISSON_ATOMS):
            raise ValueError(f"Unknown subordination law: {self.kind}")

    def direction(self) -> np.ndarray:
        return np.ones(self.embedding)

    def density(self, t: float) -> Density:
        if self.kind != STABLE_HALF:
            raise ValueError("Only the stable one-half law has a density")
        return stable_half_law_density(t)


# ---------------------------------------------------------------------------
# Bernstein functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BernsteinFunction:
    """
    A catalog entry psi in T_n.

    closed_form and gradient take arrays of shape (..., n); closed forms are
    written with numpy so they also accept complex arrays with Re < 0, which the
    spectral oracle uses for complex joint eigenvalues.
    """
    name: str
    n: int
    closed_form: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    gradient: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    triple: LevyTriple = field(repr=False)
    second_derivative: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, repr=False, compare=False)
    subordination: Optional[SubordinationLaw] = None
    derivative_in_test_space: bool = False

    @property
    def d1_at_zero(self) -> tuple:
        return tuple(partial_at_zero(self, i) for i in range(self.n))

    @property
    def d2_at_zero(self) -> float:
        return second_moment_at_zero(self)

    def derivative(self, s):
        """psi'(s) for 1-d entries (vectorized, complex allowed)."""
        if self.n != 1:
            raise ValueError(f"{self.name} has {self.n} variables; use gradient()")
        s = np.asarray(s)
        return self.gradient(s[..., None])[..., 0]

    def value(self, s):
        """psi at 1-d points (vectorized, complex allowed)."""
        s = np.asarray(s)
        if self.n == 1:
            return self.closed_form(s[..., None])
        return self.closed_form(s)

    def __add__(self, other: 'BernsteinFunction') -> 'BernsteinFunction':
        if other.n != self.n:
            raise ValueError("Only functions of the same number of variables can be added")
        f1, f2 = self.closed_form, other.closed_form
        g1, g2 = self.gradient, other.gradient
        second = None
        if self.second_derivative is not None and other.second_derivative is not None:
            h1, h2 = self.second_derivative, other.second_derivative
            second = lambda s: h1(s) + h2(s)  # noqa: E731
        return BernsteinFunction(
            name=f'({self.name})+({other.name})',
            n=self.n,
            closed_form=lambda s: f1(s) + f2(s),
            gradient=lambda s: g1(s) + g2(s),
            triple=self.triple + other.triple,
            second_derivative=second,
            derivative_in_test_space=self.derivative_in_test_space and other.derivative_in_test_space,
        )

    def __rmul__(self, c: float) -> 'BernsteinFunction':
        c = float(c)
        if c < 0:
            raise ValueError("The catalog is a cone: only nonnegative multiples are allowed")
        f, g, h = self.closed_form, self.gradient, self.second_derivative
        return BernsteinFunction(
            name=f'{c:g}*({self.name})',
            n=self.n,
            closed_form=lambda s: c * f(s),
            gradient=lambda s: c * g(s),
            triple=self.triple.scaled(c),
            second_derivative=None if h is None else (lambda s: c * h(s)),
            derivative_in_test_space=self.derivative_in_test_space,
        )


def _one_variable(name, f, df, d2f, measure_piece, law=None, test_space=False):
    """Wrap scalar closed forms into a 1-d catalog entry."""
    measure = LevyMeasure(1, ((1.0, measure_piece),))
    return BernsteinFunction(
        name=name,
        n=1,
        closed_form=lambda s: f(s[..., 0]),
        gradient=lambda s: df(s[..., 0])[..., None],
        triple=LevyTriple(0.0, (0.0,), measure),
        second_derivative=lambda s: d2f(s[..., 0]),
        subordination=law,
        derivative_in_test_space=test_space,
    )


def psi_alpha(alpha: float) -> BernsteinFunction:
    """psi(s) = -(-s)^alpha, 0 < alpha < 1."""
    if not 0.0 < alpha < 1.0:
        raise CatalogError(f"alpha must lie in (0, 1), got {alpha}")
    name = 'sqrt' if alpha == 0.5 else f'alpha:{alpha:g}'
    law = SubordinationLaw(STABLE_HALF) if alpha == 0.5 else None
    return _one_variable(
        name,
        lambda s: -np.power(-s, alpha),
        lambda s: alpha * np.power(-s, alpha - 1.0),
        lambda s: alpha * (1.0 - alpha) * np.power(-s, alpha - 2.0),
        AxisDensity(0, stable_density(alpha)),
        law=law,
    )


def psi_sqrt() -> BernsteinFunction:
    return psi_alpha(0.5)


def psi_log() -> BernsteinFunction:
    """psi(s) = -log(1 - s)."""
    return _one_variable(
        'log',
        lambda s: -np.log(1.0 - s),
        lambda s: 1.0 / (1.0 - s),
        lambda s: 1.0 / (1.0 - s) ** 2,
        AxisDensity(0, LOG_DENSITY),
    )


def psi_rat() -> BernsteinFunction:
    """
    psi(s) = s / (1 - s).

    derivative_in_test_space stays False: psi'(-t) = (1 + t)^-2 decays only
    polynomially, so shift pairings for rat report under the general form.
    """
    return _one_variable(
        'rat',
        lambda s: s / (1.0 - s),
        lambda s: 1.0 / (1.0 - s) ** 2,
        lambda s: 2.0 / (1.0 - s) ** 3,
        AxisDensity(0, RAT_DENSITY),
    )


def psi_poisson() -> BernsteinFunction:
    """psi(s) = exp(s) - 1 (one atom at u = 1)."""
    return _one_variable(
        'poisson',
        lambda s: np.expm1(s),
        lambda s: np.exp(s),
        lambda s: np.exp(s),
        AtomList(((1.0,),), (1.0,)),
        law=SubordinationLaw(POISSON_ATOMS),
        test_space=True,
    )


def _embed_piece(piece: Piece, axis: Optional[int], n: int) -> Piece:
    """Move a 1-d piece onto axis `axis` of R^n, or onto the diagonal when axis is None."""
    if isinstance(piece, AtomList):
        points = []
        for (p,) in piece.points:
            point = [0.0] * n
            if axis is None:
                point = [p] * n
            else:
                point[axis] = p
            points.append(tuple(point))
        return AtomList(tuple(points), piece.weights)
    if axis is None:
        return DiagonalDensity(piece.density)
    return AxisDensity(axis, piece.density)


def axis_sum(*components: BernsteinFunction) -> BernsteinFunction:
    """psi(s_1, ..., s_n) = sum_j psi_j(s_j) for 1-d entries psi_j."""
    if not components:
        raise CatalogError("sum needs at least one component")
    for psi in components:
        if psi.n != 1:
            raise CatalogError(f"sum components must be 1-d, {psi.name} has {psi.n} variables")
    n = len(components)
    pieces = tuple(
        (coef, _embed_piece(piece, j, n))
        for j, psi in enumerate(components)
        for coef, piece in psi.triple.mu.components
    )
    funcs = [psi.closed_form for psi in components]
    grads = [psi.gradient for psi in components]

    def closed_form(s):
        return sum(f(s[..., j:j + 1]) for j, f in enumerate(funcs))

    def gradient(s):
        return np.concatenate([g(s[..., j:j + 1]) for j, g in enumerate(grads)], axis=-1)

    return BernsteinFunction(
        name='sum:' + '+'.join(psi.name for psi in components),
        n=n,
        closed_form=closed_form,
        gradient=gradient,
        triple=LevyTriple(
            sum(psi.triple.c0 for psi in components),
            tuple(psi.triple.c1[0] for psi in components),
            LevyMeasure(n, pieces),
        ),
        derivative_in_test_space=all(psi.derivative_in_test_space for psi in components),
    )


def diagonal(phi: BernsteinFunction, n: int) -> BernsteinFunction:
    """psi(s_1, ..., s_n) = phi(s_1 + ... + s_n) for a 1-d entry phi."""
    if phi.n != 1:
        raise CatalogError(f"diag needs a 1-d entry, {phi.name} has {phi.n} variables")
    if n < 1:
        raise CatalogError(f"diag dimension must be positive, got {n}")
    f, g = phi.closed_form, phi.gradient
    law = None
    if phi.subordination is not None:
        law = SubordinationLaw(phi.subordination.kind, embedding=n)

    def gradient(s):
        inner = g(s.sum(axis=-1, keepdims=True))
        return np.repeat(inner, n, axis=-1)

    return BernsteinFunction(
        name=f'diag:{n}:{phi.name}',
        n=n,
        closed_form=lambda s: f(s.sum(axis=-1, keepdims=True)),
        gradient=gradient,
        triple=LevyTriple(
            phi.triple.c0,
            tuple(phi.triple.c1[0] for _ in range(n)),
            LevyMeasure(n, tuple((coef, _embed_piece(p, None, n))
                                 for coef, p in phi.triple.mu.components)),
        ),
        second_derivative=phi.second_derivative if n == 1 else None,
        subordination=law,
        derivative_in_test_space=phi.derivative_in_test_space,
    )


BASE_NAMES = ('sqrt', 'log', 'rat', 'poisson')
NAME_FORMS = ('sqrt', 'alpha:<value>', 'log', 'rat', 'poisson', 'sum:<a>+<b>+...', 'diag:<n>:<inner>')

_BASE = {
    'sqrt': psi_sqrt,
    'log': psi_log,
    'rat': psi_rat,
    'poisson': psi_poisson,
}


def get_psi(name: str) -> BernsteinFunction:
    """
    Resolve a catalog name.

    Args:
        name: One of NAME_FORMS, e.g. "alpha:0.25", "sum:sqrt+log", "diag:2:rat"

    Returns:
        BernsteinFunction

    Raises:
        CatalogError: If the name is unknown or malformed
    """
    name = name.strip()
    if name in _BASE:
        return _BASE[name]()
    if name.startswith('alpha:'):
        try:
            alpha = float(name.split(':', 1)[1])
        except ValueError:
            raise CatalogError(f"Malformed alpha entry: {name!r}")
        return psi_alpha(alpha)
    if name.startswith('sum:'):
        parts = [p for p in name[4:].split('+') if p]
        return axis_sum(*(get_psi(p) for p in parts))
    if name.startswith('diag:'):
        try:
            _, n, inner = name.split(':', 2)
            n = int(n)
        except ValueError:
            raise CatalogError(f"Malformed diag entry: {name!r} (expected diag:<n>:<inner>)")
        return diagonal(get_psi(inner), n)
    raise CatalogError(f"Unknown function {name!r}. Valid names: {', '.join(NAME_FORMS)}")


def lift(psi: BernsteinFunction, n: int, mode: str = 'sum') -> BernsteinFunction:
    """Turn a 1-d entry into an n-variable one, by axis sum or diagonal composition."""
    if psi.n == n:
        return psi
    if psi.n != 1:
        raise CatalogError(f"Cannot lift {psi.name} ({psi.n} variables) to {n} variables")
    if mode == 'sum':
        return axis_sum(*([psi] * n))
    if mode == 'diag':
        return diagonal(psi, n)
    raise CatalogError(f"Unknown lift mode {mode!r}")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def _as_point(psi: BernsteinFunction, s) -> np.ndarray:
    point = np.atleast_1d(np.asarray(s, dtype=float))
    if point.shape != (psi.n,):
        raise DomainError(f"{psi.name} takes {psi.n} variables, got shape {point.shape}")
    return point


def evaluate(psi: BernsteinFunction, s) -> float:
    """
    psi(s) from the closed form.

    Raises:
        DomainError: If some component of s is >= 0 (the limit s -> -0 is psi.triple.c0)
    """
    if isinstance(s, _BoundaryLimit):
        raise DomainError("evaluate() takes interior points; the value at -0 is triple.c0")
    point = _as_point(psi, s)
    if not np.all(point < 0):
        raise DomainError(f"All components must be strictly negative, got {point.tolist()}")
    return float(psi.closed_form(point))


def value_up_to_boundary(psi: BernsteinFunction, s) -> float:
    """
    psi(s) for s in (-inf, 0]^n, zero components read as the limit -0.

    Every catalog closed form is continuous up to the boundary, where it equals c0
    along each axis; bound formulas evaluate psi at -(M/2n)||A-B||, whose components
    vanish when A_i = B_i.
    """
    point = _as_point(psi, s)
    if np.any(point > 0):
        raise DomainError(f"Components must be nonpositive, got {point.tolist()}")
    if not np.any(point):
        return float(psi.triple.c0)
    return float(psi.closed_form(point))


@dataclass(frozen=True)
class EvaluationReport:
    closed_form: float
    quadrature: float
    gap: float
    truncation_error: float


def evaluate_with_diagnostics(psi: BernsteinFunction, s, spec=None) -> EvaluationReport:
    """Closed form next to c0 + c1.s + int (exp(s.u) - 1) dmu(u) by quadrature."""
    from bpcalc.quadrature import integrate_levy, TailLimit

    closed = evaluate(psi, s)
    point = _as_point(psi, s)
    top = float(point.max())

    def integrand(u):
        return np.expm1(u @ point)

    def residual(direction, v):
        return math.exp(top * v * float(direction.sum()))

    outcome = integrate_levy(
        integrand, psi.triple.mu, spec,
        origin_linearity_bound=float(np.abs(point).max()),
        origin_slope=lambda direction: float(direction @ point),
        origin_curvature=0.5 * float(np.abs(point).max()) ** 2,
        limit=TailLimit(-1.0, residual),
    )
    quad_value = psi.triple.c0 + float(np.dot(psi.triple.c1, point)) + float(outcome.value)
    gap = abs(closed - quad_value)
    if gap > 1e-8 * (1.0 + abs(closed)):
        logger.warning(f"{psi.name} at {point.tolist()}: closed form and quadrature differ by {gap:.3g}")
    return EvaluationReport(closed, quad_value, gap, outcome.truncation_error)


def partial_at_zero(psi: BernsteinFunction, i: int) -> float:
    """d psi / d s_i at s = -0, i.e. c1_i + int u_i dmu(u). May be inf."""
    if not 0 <= i < psi.n:
        raise ValueError(f"Axis {i} out of range for {psi.name}")
    return psi.triple.c1[i] + psi.triple.mu.moment(i, 1)


def second_moment_at_zero(psi: BernsteinFunction) -> float:
    """psi''(-0) = int u^2 dmu(u) for 1-d entries. May be inf."""
    if psi.n != 1:
        raise ValueError(f"psi''(-0) is defined for 1-d entries; {psi.name} has {psi.n} variables")
    return psi.triple.mu.moment(0, 2)


def partial_derivative(psi: BernsteinFunction, i: int, s, spec=None) -> float:
    """
    d psi / d s_i at s in (-inf, 0]^n by quadrature of c1_i + int u_i exp(s.u) dmu(u).

    Zero components of s are read as -0. Used at the points omega_i e_i of the
    exponentially stable bounds, where the moment at -0 may be infinite.
    """
    from bpcalc.quadrature import integrate_levy, TailLimit

    point = _as_point(psi, s)
    if np.any(point > 0):
        raise DomainError(f"Components must be nonpositive, got {point.tolist()}")
    if point[i] == 0.0 and not np.any(point < 0):
        return partial_at_zero(psi, i)

    def integrand(u):
        return u[:, i] * np.exp(u @ point)

    def residual(direction, v):
        rate = float(direction @ point)
        weight = float(direction[i])
        if weight == 0.0:
            return 0.0
        if rate >= 0.0:
            return math.inf
        peak = max(v, -1.0 / rate)
        return weight * peak * math.exp(rate * peak)

    outcome = integrate_levy(
        integrand, psi.triple.mu, spec,
        origin_linearity_bound=1.0,
        origin_slope=lambda direction: float(direction[i]),
        origin_curvature=float(np.abs(point).max()),
        limit=TailLimit(0.0, residual),
    )
    return psi.triple.c1[i] + float(outcome.value)


def _scalar(s: Point, label: str) -> float:
    if isinstance(s, _BoundaryLimit):
        return 0.0
    value = float(s)
    if not value < 0:
        raise DomainError(f"{label} must be negative or MINUS_ZERO, got {s!r}")
    return value


def divided_difference_scalar(psi: BernsteinFunction, s1: Point, s2: Point) -> float:
    """
    phi(s1, s2) = (psi(s1) - psi(s2)) / (s1 - s2) - psi'(-0), and psi'(s1) - psi'(-0) on the diagonal.

    Raises:
        DomainError: If psi'(-0) is infinite or an argument is nonnegative
    """
    if psi.n != 1:
        raise DomainError("The divided difference is defined for 1-d entries")
    d0 = partial_at_zero(psi, 0)
    if math.isinf(d0):
        raise DomainError(f"{psi.name} has psi'(-0) = inf; the divided difference is undefined")
    x1, x2 = _scalar(s1, 's1'), _scalar(s2, 's2')
    if x1 == x2:
        if x1 == 0.0:
            return 0.0
        return float(psi.derivative(x1)) - d0

    def at(x):
        return psi.triple.c0 if x == 0.0 else float(psi.value(x))

    return (at(x1) - at(x2)) / (x1 - x2) - d0


def divided_difference_via_measure(psi: BernsteinFunction, s1: Point, s2: Point, spec=None):
    """
    phi(s1, s2) through the two-variable measure mu_1, realized as the iterated integral
    int dmu(v) 1/2 int_{-v}^{v} (exp(s1 (v+w)/2 + s2 (v-w)/2) - 1) dw.

    The inner integral is v (exp(v s2) exprel(v (s1 - s2)) - 1) in closed form.

    Returns:
        (value, discrepancy against divided_difference_scalar)
    """
    from bpcalc.quadrature import integrate_levy

    direct = divided_difference_scalar(psi, s1, s2)
    x1, x2 = _scalar(s1, 's1'), _scalar(s2, 's2')

    def integrand(u):
        v = u[:, 0]
        return v * (np.exp(v * x2) * special.exprel(v * (x1 - x2)) - 1.0)

    scale = max(abs(x1), abs(x2))
    outcome = integrate_levy(
        integrand, psi.triple.mu, spec,
        origin_linearity_bound=scale,
        origin_slope=lambda direction: 0.0,
        origin_curvature=scale,
        sup_bound=1.0,
        growth_power=1,
    )
    value = float(outcome.value)
    return value, abs(value - direct)
