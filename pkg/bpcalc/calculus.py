"""
Functional Calculus

psi(A) for commuting generator tuples, the subordinated semigroups g_t(A), the
Frechet derivative psi'(A), the divided-difference operator phi(A1, A2), and a
spectral oracle built from the joint diagonal data of factory tuples.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from bpcalc.bernstein import BernsteinFunction, DomainError, partial_at_zero
from bpcalc.operators import GeneratorTuple, Semigroup, operator_norm
from bpcalc.quadrature import (
    DEFAULT_SPEC, QuadratureSpec, TailLimit, gauss_legendre, integrate_levy, integrate_subordination,
)

logger = logging.getLogger(__name__)

ORACLE_TOL = 1e-6
INNER_CHUNK = 256


@dataclass
class CalculusResult:
    """
    psi(A) with its quadrature diagnostics.

    `flagged` is set for uncertified inputs and when the quadrature error
    estimates exceed the target tolerance.
    """
    value: np.ndarray
    truncation_error: float = 0.0
    convergence_delta: float = 0.0
    origin_remainder: float = 0.0
    oracle_residual: Optional[float] = None
    certified: bool = True
    flagged: bool = False

    @property
    def quadrature_diag(self) -> tuple:
        return (self.truncation_error, self.convergence_delta)


def _decay_residual(bound: float, rate: Optional[float], power: int = 0):
    """
    Residual bound for integrands of size <= bound * w^power * exp(rate * w), valid for all w >= v.

    Without a rate the bound is constant (power must be 0).
    """
    def residual(direction, v):
        if rate is None:
            return bound
        r = rate * float(direction.sum())
        if power == 0:
            return bound * math.exp(r * v)
        peak = max(v, -power / r)
        return bound * peak ** power * math.exp(r * peak)
    return residual


def _tuple_rate(A: GeneratorTuple) -> Optional[float]:
    return None if A.omega is None else max(A.omega)


def apply(psi: BernsteinFunction, A: GeneratorTuple, spec: Optional[QuadratureSpec] = None,
          *, convergence: bool = True) -> CalculusResult:
    """
    psi(A) = c0 I + sum_j c1_j A_j + int (T_A(u) - I) dmu(u).

    Args:
        psi: Catalog entry with psi.n == A.n
        A: Generator tuple
        spec: Quadrature spec
        convergence: Also report the half-node convergence delta

    Returns:
        CalculusResult (oracle_residual filled for factory tuples)
    """
    if psi.n != A.n:
        raise ValueError(f"{psi.name} takes {psi.n} variables but the tuple has {A.n} generators")
    spec = spec or DEFAULT_SPEC
    d, n, M = A.d, A.n, A.bound_m
    identity = np.eye(d, dtype=complex)
    norms = [operator_norm(a) for a in A.mats]
    mats = np.stack(A.mats)

    def integrand(u):
        return A.semigroup(u) - identity

    outcome = integrate_levy(
        integrand, psi.triple.mu, spec,
        origin_linearity_bound=M ** n * sum(norms),
        origin_slope=lambda direction: np.tensordot(direction, mats, axes=1),
        origin_curvature=0.5 * M ** n * max(norms) ** 2,
        limit=TailLimit(-identity, _decay_residual(M ** n, A.tail_rate)),
        convergence=convergence,
    )
    value = psi.triple.c0 * identity + np.tensordot(np.asarray(psi.triple.c1), mats, axes=1) + outcome.value

    result = CalculusResult(
        value=value,
        truncation_error=outcome.truncation_error,
        convergence_delta=outcome.convergence_delta,
        origin_remainder=outcome.origin_remainder,
        certified=A.certified,
    )
    if A.construction is not None:
        oracle = spectral_oracle(psi, A)
        result.oracle_residual = operator_norm(value - oracle) / (1.0 + operator_norm(oracle))
    tolerance = spec.target_tol + spec.tail_truncation_tol
    if not A.certified or outcome.truncation_error + outcome.origin_remainder > tolerance:
        result.flagged = True
    if convergence and outcome.convergence_delta > 1e3 * tolerance:
        result.flagged = True
    if result.flagged:
        logger.warning(
            f"apply({psi.name}, {A.label}) flagged: certified={A.certified}, "
            f"truncation={outcome.truncation_error:.3g}, origin={outcome.origin_remainder:.3g}, "
            f"convergence={outcome.convergence_delta:.3g}")
    return result


def spectral_oracle(psi: BernsteinFunction, A: GeneratorTuple, derivative: bool = False) -> np.ndarray:
    """
    S diag(psi(lambda_k)) S^-1 from the joint eigenvalues of a factory tuple.

    With derivative=True (1-d entries) the scalar function is psi' instead of psi.

    Raises:
        ValueError: If the tuple carries no joint diagonal data
    """
    if A.construction is None:
        raise ValueError(f"{A.label or 'tuple'} has no joint diagonal data for the spectral oracle")
    c = A.construction
    points = c.eigenvalues.T  # (d, n)
    if derivative:
        if psi.n != 1:
            raise ValueError("The derivative oracle is defined for 1-d entries")
        values = psi.derivative(points[:, 0])
    else:
        values = psi.closed_form(points)
    return (c.similarity * np.asarray(values, dtype=complex)[None, :]) @ c.inverse


def subordinated(psi: BernsteinFunction, A: GeneratorTuple, t: float,
                 spec: Optional[QuadratureSpec] = None) -> np.ndarray:
    """
    g_t(A) = int T_A(u) dnu_t(u).

    Raises:
        ValueError: If psi has no subordination law
    """
    if psi.subordination is None:
        raise ValueError(f"{psi.name} has no known subordination law")
    if psi.n != A.n:
        raise ValueError(f"{psi.name} takes {psi.n} variables but the tuple has {A.n} generators")
    spec = spec or DEFAULT_SPEC
    direction = psi.subordination.direction()
    bound = A.bound_m ** A.n
    limit = None
    if A.omega is not None:
        rate = float(np.dot(direction, A.omega))
        limit = TailLimit(np.zeros((A.d, A.d), dtype=complex),
                          lambda _, v: bound * math.exp(rate * v))

    def integrand(v):
        return A.semigroup(np.outer(v, direction))

    outcome = integrate_subordination(integrand, psi.subordination, t, spec,
                                      sup_bound=bound, limit=limit)
    logger.debug(f"g_{t:g}({A.label}) with {outcome.node_count} nodes, "
                 f"truncation error {outcome.truncation_error:.3g}")
    return outcome.value


def _require_single(psi: BernsteinFunction, *tuples: GeneratorTuple):
    if psi.n != 1:
        raise ValueError(f"{psi.name} must be a function of one variable")
    for A in tuples:
        if A.n != 1:
            raise ValueError("Single generators (n = 1) are required")


def frechet_derivative(psi: BernsteinFunction, A: GeneratorTuple,
                       spec: Optional[QuadratureSpec] = None) -> np.ndarray:
    """
    psi'(A) = int T_A(v) v dmu(v).

    psi'(-0) = inf is accepted when A carries a stability margin, since
    ||T_A(v)|| <= M exp(omega v) makes the integral converge.

    Raises:
        DomainError: If psi'(-0) is infinite and A has no stability margin
    """
    _require_single(psi, A)
    spec = spec or DEFAULT_SPEC
    moment = partial_at_zero(psi, 0)
    rate = _tuple_rate(A)
    if math.isinf(moment) and rate is None:
        raise DomainError(f"{psi.name} has psi'(-0) = inf and {A.label or 'A'} has no stability margin")
    M = A.bound_m
    identity = np.eye(A.d, dtype=complex)

    def integrand(u):
        return A.semigroup(u) * u[:, 0, None, None]

    kwargs = {'sup_bound': M, 'growth_power': 1} if rate is None else {
        'limit': TailLimit(np.zeros_like(identity), _decay_residual(M, rate, power=1))}
    outcome = integrate_levy(
        integrand, psi.triple.mu, spec,
        origin_linearity_bound=M,
        origin_slope=lambda direction: direction[0] * identity,
        origin_curvature=M * operator_norm(A.mats[0]),
        **kwargs,
    )
    return psi.triple.c1[0] * identity + outcome.value


def _block_kernel(A1: np.ndarray, A2: np.ndarray) -> Semigroup:
    """exp(v [[A1, I], [0, A2]]) has upper-right block int_0^v T1(v - s) T2(s) ds."""
    d = A1.shape[0]
    block = np.zeros((2 * d, 2 * d), dtype=complex)
    block[:d, :d] = A1
    block[:d, d:] = np.eye(d)
    block[d:, d:] = A2
    return Semigroup(block)


def divided_difference_operator(psi: BernsteinFunction, A1: GeneratorTuple, A2: GeneratorTuple,
                                spec: Optional[QuadratureSpec] = None, *,
                                inner: str = 'block') -> np.ndarray:
    """
    phi(A1, A2) = int dmu(v) 1/2 int_{-v}^{v} [T1((v+w)/2) T2((v-w)/2) - I] dw, T1 left of T2.

    The inner integral equals the upper-right block of exp(v [[A1, I], [0, A2]])
    minus vI; inner='gauss' evaluates it with Gauss-Legendre in w instead.

    Raises:
        DomainError: If psi'(-0) is infinite
    """
    _require_single(psi, A1, A2)
    if A1.d != A2.d:
        raise ValueError("A1 and A2 must have the same dimension")
    if inner not in ('block', 'gauss'):
        raise ValueError(f"Unknown inner rule {inner!r}")
    spec = spec or DEFAULT_SPEC
    moment = psi.triple.mu.moment(0, 1)
    if math.isinf(moment):
        raise DomainError(f"{psi.name} has psi'(-0) = inf; the divided difference is undefined")
    d = A1.d
    M = max(A1.bound_m, A2.bound_m)
    identity = np.eye(d, dtype=complex)
    rates = [r for r in (_tuple_rate(A1), _tuple_rate(A2)) if r is not None]
    rate = max(rates) if len(rates) == 2 else None

    if inner == 'block':
        kernel = _block_kernel(A1.mats[0], A2.mats[0])

        def integrand(u):
            return kernel.at(u[:, 0])[:, :d, d:]
    else:
        x, wx = gauss_legendre(spec.nodes_per_panel)
        g1, g2 = A1.semigroups[0], A2.semigroups[0]

        def integrand(u):
            v = u[:, 0]
            out = np.empty((len(v), d, d), dtype=complex)
            for start in range(0, len(v), INNER_CHUNK):
                vc = v[start:start + INNER_CHUNK]
                left = g1.at(np.outer(vc, 0.5 * (1.0 + x)).reshape(-1)).reshape(len(vc), len(x), d, d)
                right = g2.at(np.outer(vc, 0.5 * (1.0 - x)).reshape(-1)).reshape(len(vc), len(x), d, d)
                out[start:start + len(vc)] = 0.5 * vc[:, None, None] * np.einsum(
                    'k,mkij,mkjl->mil', wx, left, right)
            return out

    kwargs = {'sup_bound': M * M, 'growth_power': 1} if rate is None else {
        'limit': TailLimit(np.zeros_like(identity), _decay_residual(M * M, rate, power=1))}
    outcome = integrate_levy(
        integrand, psi.triple.mu, spec,
        origin_linearity_bound=M * M,
        origin_slope=lambda direction: direction[0] * identity,
        origin_curvature=M * M * max(operator_norm(A1.mats[0]), operator_norm(A2.mats[0])),
        **kwargs,
    )
    return outcome.value - moment * identity
