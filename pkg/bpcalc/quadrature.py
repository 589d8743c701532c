"""
Quadrature Engine

Panel Gauss-Legendre integration of scalar- and matrix-valued integrands against
Levy measures and subordination laws.

Density pieces are integrated on a fixed geometric panel layout: panels_per_decade
panels per decade from an origin edge c up to delta_split, then on to a certified
truncation point U. The piece (0, c) is handled from closed-form partial moments of
the density (linear part exact, remainder bounded), and (U, inf) either closes
with a known limit of the integrand or is bounded by sup|f| times the tail moment.
Atoms are summed exactly.
"""

import logging
import math
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from typing import Any, Callable, Optional

import numpy as np
from scipy import stats

from bpcalc.bernstein import (
    AtomList, Density, LevyMeasure, SubordinationLaw, POISSON_ATOMS, STABLE_HALF,
)

logger = logging.getLogger(__name__)


class QuadratureError(ArithmeticError):
    """The engine cannot certify the requested accuracy."""


@dataclass(frozen=True)
class QuadratureSpec:
    """
    Panel layout and tolerances for Levy integrals.

    Attributes:
        delta_split: Boundary between the near-origin and tail regions
        panels_per_decade: Geometric panels per factor of ten
        nodes_per_panel: Gauss-Legendre nodes per panel
        origin_cutoff: Smallest admissible innermost panel edge
        tail_truncation_tol: Budget for the certified tail error
        target_tol: Budget for the origin remainder and node error
        max_truncation: Largest truncation point tried before giving up
    """
    delta_split: float = 1.0
    panels_per_decade: int = 2
    nodes_per_panel: int = 32
    origin_cutoff: float = 1e-12
    tail_truncation_tol: float = 1e-11
    target_tol: float = 1e-10
    max_truncation: float = 1e40

    def __post_init__(self):
        if not self.delta_split > 0:
            raise ValueError(f"delta_split must be positive, got {self.delta_split}")
        if self.panels_per_decade < 1:
            raise ValueError(f"panels_per_decade must be >= 1, got {self.panels_per_decade}")
        if self.nodes_per_panel < 4:
            raise ValueError(f"nodes_per_panel must be >= 4, got {self.nodes_per_panel}")
        if not 0 < self.origin_cutoff < self.delta_split:
            raise ValueError(
                f"origin_cutoff must lie in (0, delta_split), got {self.origin_cutoff}")
        if not self.tail_truncation_tol > 0 or not self.target_tol > 0:
            raise ValueError("Tolerances must be positive")
        if not self.max_truncation > self.delta_split:
            raise ValueError("max_truncation must exceed delta_split")

    def doubled(self) -> 'QuadratureSpec':
        return replace(self, nodes_per_panel=2 * self.nodes_per_panel)

    def with_overrides(self, **overrides) -> 'QuadratureSpec':
        """
        Copy with selected fields replaced; string values are coerced to the field type.

        Raises:
            ValueError: On unknown field names or malformed values
        """
        types = {f.name: f.type for f in fields(self)}
        clean = {}
        for key, value in overrides.items():
            if key not in types:
                raise ValueError(
                    f"Unknown quadrature setting {key!r}. Valid settings: {', '.join(types)}")
            clean[key] = int(value) if types[key] in (int, 'int') else float(value)
        return replace(self, **clean)

    def ratio(self) -> float:
        return 10.0 ** (1.0 / self.panels_per_decade)


DEFAULT_SPEC = QuadratureSpec()


@dataclass(frozen=True)
class TailLimit:
    """
    Known behaviour of an integrand at infinity.

    `residual(direction, v)` bounds ||f(w * direction) - value|| for every w >= v.
    """
    value: Any
    residual: Callable[[np.ndarray, float], float]


@dataclass
class QuadratureOutcome:
    value: Any
    truncation_error: float = 0.0
    origin_remainder: float = 0.0
    convergence_delta: float = 0.0
    truncation_points: list = field(default_factory=list)
    node_count: int = 0

    @property
    def error_bound(self) -> float:
        return self.truncation_error + self.origin_remainder + self.convergence_delta


@lru_cache(maxsize=16)
def gauss_legendre(n: int):
    """Gauss-Legendre nodes and weights on [-1, 1] (read-only arrays)."""
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _panel_rule(edges: np.ndarray, n: int):
    """Nodes (panels, n) and weights (panels, n) for Gauss-Legendre on every panel."""
    x, w = gauss_legendre(n)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    return mid[:, None] + half[:, None] * x[None, :], half[:, None] * w[None, :]


def _ordered_sum(parts):
    total = 0.0
    for part in parts:
        total = total + part
    return total


def _evaluate_panels(f, direction, edges, rho, n_nodes):
    """Per-panel sums of f(v * direction) rho(v) dv, in ascending panel order."""
    v, w = _panel_rule(edges, n_nodes)
    weights = w * rho(v)
    u = v.reshape(-1, 1) * direction[None, :]
    values = np.asarray(f(u))
    values = values.reshape(v.shape + values.shape[1:])
    sums = np.einsum('pn,pn...->p...', weights, values)
    return _ordered_sum(sums), v.size


def _origin_edge(spec: QuadratureSpec, remainder: Callable[[float], float], budget: float):
    """Largest geometric edge below delta_split whose origin remainder fits the budget."""
    ratio = spec.ratio()
    edge = spec.delta_split / ratio
    while edge > spec.origin_cutoff:
        if remainder(edge) <= budget:
            return edge, remainder(edge)
        edge /= ratio
    return spec.origin_cutoff, remainder(spec.origin_cutoff)


def _truncation_edge(spec: QuadratureSpec, tail_error: Callable[[float], float], budget: float):
    ratio = spec.ratio()
    edge = spec.delta_split * ratio
    while edge <= spec.max_truncation:
        err = tail_error(edge)
        if err <= budget:
            return edge, err
        edge *= ratio
    raise QuadratureError(
        f"Tail cannot be certified below {budget:.3g} before u = {spec.max_truncation:.3g}")


def _layout(spec: QuadratureSpec, lower: float, upper: float) -> np.ndarray:
    """Geometric edges lower < ... < delta_split < ... < upper."""
    ratio = spec.ratio()
    inner = [spec.delta_split]
    while inner[-1] / ratio > lower * (1 + 1e-12):
        inner.append(inner[-1] / ratio)
    outer = [spec.delta_split * ratio]
    while outer[-1] < upper * (1 - 1e-12):
        outer.append(outer[-1] * ratio)
    edges = [lower] + inner[::-1] + outer
    return np.asarray(edges, dtype=float)


def integrate_levy(
    f: Callable[[np.ndarray], Any],
    mu: LevyMeasure,
    spec: Optional[QuadratureSpec] = None,
    origin_linearity_bound: float = 1.0,
    *,
    origin_slope: Optional[Callable[[np.ndarray], Any]] = None,
    origin_curvature: Optional[float] = None,
    sup_bound: Optional[float] = None,
    growth_power: int = 0,
    limit: Optional[TailLimit] = None,
    convergence: bool = False,
) -> QuadratureOutcome:
    """
    Integrate f(u) dmu(u) over R_+^n minus the origin.

    Args:
        f: Vectorized integrand, points of shape (m, n) to values of shape (m, ...)
        mu: The measure
        spec: Panel layout and tolerances (defaults to QuadratureSpec())
        origin_linearity_bound: L with ||f(u)|| <= L |u|_1 near the origin
        origin_slope: direction -> derivative of v -> f(v direction) at v = 0
        origin_curvature: K with ||f(u) - slope(u)|| <= K |u|_1^2 near the origin
        sup_bound: C with ||f(u)|| <= C |u|_1^growth_power for large u
        growth_power: See sup_bound
        limit: Known limit of f at infinity with its residual bound
        convergence: Also integrate with half the nodes and report the difference

    Returns:
        QuadratureOutcome

    Raises:
        QuadratureError: If a density is too singular or the tail cannot be certified
    """
    spec = spec or DEFAULT_SPEC
    n = mu.dimension
    density_pieces = [(c, p) for c, p in mu.components if not isinstance(p, AtomList)]
    budget_origin = spec.target_tol / (4.0 * max(1, len(density_pieces)))
    budget_tail = spec.tail_truncation_tol / max(1, len(density_pieces))

    parts, coarse_parts = [], []
    outcome = QuadratureOutcome(value=0.0)

    for coef, piece in mu.components:
        if coef == 0.0:
            continue
        if isinstance(piece, AtomList):
            points, weights = piece.as_arrays()
            values = np.asarray(f(points))
            atom_sum = coef * np.tensordot(weights, values, axes=1)
            parts.append(atom_sum)
            coarse_parts.append(atom_sum)
            outcome.node_count += len(weights)
            continue

        density: Density = piece.density
        if density.singularity_order >= 1.0:
            raise QuadratureError(
                f"Density {density.name} has singularity order {density.singularity_order} >= 1")
        direction = piece.direction(n)
        length = float(direction.sum())

        if origin_slope is not None and origin_curvature is not None:
            def origin_remainder(c, _d=density, _l=length):
                return coef * origin_curvature * _l * _l * _d.partial_moment(0.0, c, 2)
        else:
            def origin_remainder(c, _d=density, _l=length):
                return coef * origin_linearity_bound * _l * _d.partial_moment(0.0, c, 1)

        lower, remainder = _origin_edge(spec, origin_remainder, budget_origin)
        if remainder > budget_origin:
            logger.warning(
                f"Origin remainder {remainder:.3g} above budget {budget_origin:.3g} "
                f"for {density.name} at cutoff {lower:.3g}")
        outcome.origin_remainder += remainder

        if limit is not None:
            def tail_error(U, _d=density, _e=direction, _l=length):
                mass = _d.mass_beyond(U)
                return 0.0 if mass == 0.0 else coef * limit.residual(_e, U) * mass
        elif sup_bound is not None:
            def tail_error(U, _d=density, _l=length):
                return coef * sup_bound * _l ** growth_power * _d.partial_moment(U, math.inf, growth_power)
        else:
            raise QuadratureError("Either a tail limit or a sup bound is required for densities")

        upper, tail_err = _truncation_edge(spec, tail_error, budget_tail)
        outcome.truncation_error += tail_err
        outcome.truncation_points.append(upper)

        edges = _layout(spec, lower, upper)
        logger.debug(
            f"{density.name}: {len(edges) - 1} panels on [{lower:.3g}, {upper:.3g}], "
            f"origin remainder {remainder:.3g}, tail error {tail_err:.3g}")

        closure = 0.0
        if origin_slope is not None:
            closure = closure + origin_slope(direction) * density.partial_moment(0.0, lower, 1)
        if limit is not None:
            closure = closure + limit.value * density.mass_beyond(upper)

        body, count = _evaluate_panels(f, direction, edges, density.rho, spec.nodes_per_panel)
        parts.append(coef * (body + closure))
        outcome.node_count += count
        if convergence:
            coarse, _ = _evaluate_panels(f, direction, edges, density.rho,
                                         max(4, spec.nodes_per_panel // 2))
            coarse_parts.append(coef * (coarse + closure))

    outcome.value = _ordered_sum(parts)
    if convergence:
        outcome.convergence_delta = float(np.max(np.abs(outcome.value - _ordered_sum(coarse_parts))))
    return outcome


def integrate_subordination(
    f: Callable[[np.ndarray], Any],
    law: Optional[SubordinationLaw],
    t: float,
    spec: Optional[QuadratureSpec] = None,
    *,
    sup_bound: float = 1.0,
    limit: Optional[TailLimit] = None,
) -> QuadratureOutcome:
    """
    Integrate f(v) dnu_t(v) for a catalog subordination law.

    f takes an array of v >= 0 of shape (m,); the caller maps v onto the law's
    direction when the law is embedded on a diagonal.

    Raises:
        ValueError: If law is None or t < 0
        QuadratureError: If the tail cannot be certified
    """
    if law is None:
        raise ValueError("No subordination law available for this function")
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    spec = spec or DEFAULT_SPEC
    if t == 0.0:
        return QuadratureOutcome(value=np.asarray(f(np.zeros(1)))[0], node_count=1)

    if law.kind == POISSON_ATOMS:
        k_max = int(stats.poisson.ppf(1.0 - 1e-3, t))
        while sup_bound * stats.poisson.sf(k_max, t) >= spec.target_tol:
            k_max += 1
        ks = np.arange(k_max + 1, dtype=float)
        weights = stats.poisson.pmf(ks, t)
        values = np.asarray(f(ks))
        terms = weights.reshape((-1,) + (1,) * (values.ndim - 1)) * values
        return QuadratureOutcome(
            value=_ordered_sum(terms),
            truncation_error=sup_bound * float(stats.poisson.sf(k_max, t)),
            truncation_points=[float(k_max)],
            node_count=len(ks),
        )

    if law.kind != STABLE_HALF:
        raise ValueError(f"Unsupported subordination law {law.kind}")
    density = law.density(t)
    budget = spec.target_tol / 4.0
    lower, remainder = _origin_edge(
        spec, lambda c: sup_bound * density.partial_moment(0.0, c, 0), budget)
    if limit is not None:
        one = np.ones(1)

        def tail_error(U):
            mass = density.mass_beyond(U)
            return 0.0 if mass == 0.0 else limit.residual(one, U) * mass
    else:
        def tail_error(U):
            return sup_bound * density.mass_beyond(U)
    upper, tail_err = _truncation_edge(spec, tail_error, spec.tail_truncation_tol)
    edges = _layout(spec, lower, upper)

    v, w = _panel_rule(edges, spec.nodes_per_panel)
    values = np.asarray(f(v.reshape(-1)))
    values = values.reshape(v.shape + values.shape[1:])
    body = _ordered_sum(np.einsum('pn,pn...->p...', w * density.rho(v), values))
    if limit is not None:
        body = body + limit.value * density.mass_beyond(upper)
    logger.debug(f"stable one-half law t={t:g}: {len(edges) - 1} panels on [{lower:.3g}, {upper:.3g}]")
    return QuadratureOutcome(
        value=body,
        truncation_error=tail_err,
        origin_remainder=remainder,
        truncation_points=[upper],
        node_count=v.size,
    )
