"""
Bound Checkers

Every perturbation bound, commutator bound, differentiability statement and trace
identity of the calculus as an executable check producing a BoundReport. A report
passes when lhs <= rhs (1 + 1e-8) + 1e-12. Residual-form checks put the residual on
the left and the tolerance on the right.

Checkers raise HypothesisError when an instance does not meet the hypotheses of
the statement being checked; campaign runners turn that into a gated report.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from bpcalc.bernstein import (
    BernsteinFunction, DomainError, partial_at_zero, partial_derivative, psi_alpha, psi_log,
    second_moment_at_zero, value_up_to_boundary,
)
from bpcalc.calculus import apply, divided_difference_operator, frechet_derivative
from bpcalc.operators import (
    COMMUTATION_TOL, OPERATOR, TRACE, Construction, GeneratorError, GeneratorTuple,
    HermitianPerturbation, IdealNorm, as_matrix, certify_bound, codiagonal_path, commutator,
    expm_complex, operator_norm, trace, unitary_at,
)
from bpcalc.quadrature import DEFAULT_SPEC, QuadratureSpec, TailLimit, gauss_legendre, integrate_levy

logger = logging.getLogger(__name__)

E_CONSTANT = 2.0 * math.e / (math.e - 1.0)
RELATIVE_SLACK = 1e-8
ABSOLUTE_SLACK = 1e-12
RESIDUAL_TOL = 1e-8
KERNEL_TOL = 1e-9
TRACE_TOL = 1e-6
MIN_SLOPE = 0.9
# exponent of M in the second-order remainder bound
REMAINDER_M_POWER = 3
SLOPE_SCALES = 11
CONTOUR_NODES = 64


class HypothesisError(ValueError):
    """The instance does not satisfy the hypotheses of the checked statement."""

    def __init__(self, message: str, hypotheses: Sequence):
        super().__init__(message)
        self.hypotheses = tuple(hypotheses)


@dataclass
class BoundReport:
    """
    One checked inequality or identity.

    Attributes:
        name: Checker label, e.g. "thm1" or "cor8"
        lhs, rhs: The two sides (residual and tolerance for identities)
        hypotheses: (label, met) pairs
        instance: Digest "psi|n=..|d=..|seed=.." identifying the instance
        norm: Label of the ideal norm used
        details: Extra numbers (oracle residuals, intermediate values)
        subchecks: Reports of embedded checks, serialized as their own rows
    """
    name: str
    lhs: float
    rhs: float
    hypotheses: tuple = ()
    instance: str = ''
    norm: str = 'operator'
    details: dict = field(default_factory=dict)
    subchecks: tuple = ()

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def hypotheses_met(self) -> bool:
        return all(met for _, met in self.hypotheses)

    @property
    def passed(self) -> bool:
        if not self.hypotheses_met or math.isnan(self.lhs) or math.isnan(self.rhs):
            return False
        return self.lhs <= self.rhs * (1.0 + RELATIVE_SLACK) + ABSOLUTE_SLACK

    def flatten(self) -> list:
        rows = [self]
        for sub in self.subchecks:
            rows.extend(sub.flatten())
        return rows


def gated_report(name: str, error: HypothesisError, instance: str = '', norm: str = 'operator') -> BoundReport:
    """Report for an instance that failed the hypotheses: counted neither pass nor fail."""
    return BoundReport(name, math.nan, math.nan, error.hypotheses, instance, norm,
                       {'reason': str(error)})


def digest(psi_name: str, n: int, d: int, seed: Optional[int]) -> str:
    return f'{psi_name}|n={n}|d={d}|seed={seed}'


def _require(name: str, hypotheses: list):
    missing = [label for label, met in hypotheses if not met]
    if missing:
        logger.debug(f"{name}: gated on {', '.join(missing)}")
        raise HypothesisError(f"{name}: hypotheses not met: {', '.join(missing)}", hypotheses)


def _pair_hypotheses(psi: BernsteinFunction, A: GeneratorTuple, B: GeneratorTuple) -> list:
    return [
        ('same_arity', psi.n == A.n == B.n),
        ('same_dimension', A.d == B.d),
        ('certified', A.certified and B.certified),
        ('A_commuting', A.commutation_residual() <= COMMUTATION_TOL),
        ('B_commuting', B.commutation_residual() <= COMMUTATION_TOL),
    ]


def _cross_commuting(A: GeneratorTuple, B: GeneratorTuple) -> bool:
    for a, b in zip(A.mats, B.mats):
        scale = operator_norm(a) * operator_norm(b)
        if scale and operator_norm(commutator(a, b)) > COMMUTATION_TOL * scale:
            return False
    return True


def _moments(psi: BernsteinFunction) -> list:
    return [partial_at_zero(psi, i) for i in range(psi.n)]


def _moduli_rhs(psi: BernsteinFunction, M: float, distances) -> float:
    """-(2e/(e-1)) n M^n psi(-(M/2n) v)"""
    n = psi.n
    point = -(M / (2.0 * n)) * np.asarray(distances, dtype=float)
    return -E_CONSTANT * n * M ** n * value_up_to_boundary(psi, point)


def _oracle_details(*results) -> dict:
    residuals = [r.oracle_residual for r in results if r.oracle_residual is not None]
    details = {'flagged': any(r.flagged for r in results)}
    if residuals:
        details['oracle_residual'] = max(residuals)
    return details


# ---------------------------------------------------------------------------
# Perturbation bounds
# ---------------------------------------------------------------------------

def check_thm1(psi: BernsteinFunction, A: GeneratorTuple, B: GeneratorTuple,
               spec: Optional[QuadratureSpec] = None, *, seed: Optional[int] = None) -> BoundReport:
    """||psi(A) - psi(B)|| <= -(2e/(e-1)) n M^n psi(-(M/2n) ||A - B||)"""
    hypotheses = _pair_hypotheses(psi, A, B)
    _require('thm1', hypotheses)
    M = max(A.bound_m, B.bound_m)
    ra, rb = apply(psi, A, spec), apply(psi, B, spec)
    distances = [operator_norm(a - b) for a, b in zip(A.mats, B.mats)]
    return BoundReport(
        'thm1', operator_norm(ra.value - rb.value), _moduli_rhs(psi, M, distances),
        tuple(hypotheses), digest(psi.name, A.n, A.d, seed), OPERATOR.label,
        {'M': M, 'distances': distances, **_oracle_details(ra, rb)})


def check_example1_power(alpha: float, A: GeneratorTuple, B: GeneratorTuple,
                         spec: Optional[QuadratureSpec] = None, *, seed: Optional[int] = None) -> BoundReport:
    """||(-A)^alpha - (-B)^alpha|| <= (2^(1-alpha) e/(e-1)) M^(1+alpha) ||A - B||^alpha"""
    psi = psi_alpha(alpha)
    hypotheses = _pair_hypotheses(psi, A, B)
    _require('example1_power', hypotheses)
    M = max(A.bound_m, B.bound_m)
    ra, rb = apply(psi, A, spec), apply(psi, B, spec)
    distance = operator_norm(A.mats[0] - B.mats[0])
    rhs = 2.0 ** (1.0 - alpha) * math.e / (math.e - 1.0) * M ** (1.0 + alpha) * distance ** alpha
    return BoundReport(
        'example1_power', operator_norm(ra.value - rb.value), rhs, tuple(hypotheses),
        digest(psi.name, 1, A.d, seed), OPERATOR.label,
        {'M': M, 'alpha': alpha, **_oracle_details(ra, rb)})


def check_example1_log(A: GeneratorTuple, B: GeneratorTuple, spec: Optional[QuadratureSpec] = None,
                       *, seed: Optional[int] = None) -> BoundReport:
    """||log(I - A) - log(I - B)|| <= (2eM/(e-1)) log(1 + (M/2) ||A - B||)"""
    psi = psi_log()
    hypotheses = _pair_hypotheses(psi, A, B)
    _require('example1_log', hypotheses)
    M = max(A.bound_m, B.bound_m)
    ra, rb = apply(psi, A, spec), apply(psi, B, spec)
    distance = operator_norm(A.mats[0] - B.mats[0])
    rhs = E_CONSTANT * M * math.log1p(0.5 * M * distance)
    return BoundReport(
        'example1_log', operator_norm(ra.value - rb.value), rhs, tuple(hypotheses),
        digest(psi.name, 1, A.d, seed), OPERATOR.label, {'M': M, **_oracle_details(ra, rb)})


def check_cor1_stability(psi: BernsteinFunction, B: GeneratorTuple, sequence: Sequence[GeneratorTuple],
                         spec: Optional[QuadratureSpec] = None, *, seed: Optional[int] = None) -> BoundReport:
    """
    psi(A_k) -> psi(B) for A_k -> B, dominated termwise by the moduli bound.

    lhs is the worst ratio ||psi(A_k) - psi(B)|| / rhs_k, rhs is 1. details records
    both sequences and whether the dominating sequence decreases.
    """
    hypotheses = [('certified', B.certified and all(A.certified for A in sequence)),
                  ('same_arity', all(A.n == psi.n == B.n for A in sequence)),
                  ('nonempty', len(sequence) > 0)]
    _require('cor1', hypotheses)
    M = max([B.bound_m] + [A.bound_m for A in sequence])
    psi_b = apply(psi, B, spec).value
    gaps, bounds, ratio = [], [], 0.0
    for A in sequence:
        gap = operator_norm(apply(psi, A, spec).value - psi_b)
        bound = _moduli_rhs(psi, M, [operator_norm(a - b) for a, b in zip(A.mats, B.mats)])
        gaps.append(gap)
        bounds.append(bound)
        if bound > 0:
            ratio = max(ratio, gap / bound)
        elif gap > ABSOLUTE_SLACK:
            ratio = math.inf
    decreasing = all(b2 <= b1 * (1.0 + RELATIVE_SLACK) for b1, b2 in zip(bounds, bounds[1:]))
    return BoundReport(
        'cor1', ratio, 1.0, tuple(hypotheses), digest(psi.name, B.n, B.d, seed), OPERATOR.label,
        {'M': M, 'gaps': gaps, 'bounds': bounds, 'bounds_decreasing': decreasing})


def check_cor2_lipschitz(psi: BernsteinFunction, A: GeneratorTuple, B: GeneratorTuple,
                         J: IdealNorm = OPERATOR, spec: Optional[QuadratureSpec] = None,
                         *, seed: Optional[int] = None) -> BoundReport:
    """
    ||psi(A) - psi(B)||_J <= M^(n+1) sum_i d_i psi(-0) ||A_i - B_i||_J.

    Named "cor2" for the operator norm and "thm4" for other ideals.
    """
    name = 'cor2' if J.kind == 'operator' else 'thm4'
    moments = _moments(psi)
    hypotheses = _pair_hypotheses(psi, A, B) + [('finite_moments', all(math.isfinite(m) for m in moments))]
    _require(name, hypotheses)
    M = max(A.bound_m, B.bound_m)
    ra, rb = apply(psi, A, spec), apply(psi, B, spec)
    rhs = M ** (psi.n + 1) * sum(m * J(a - b) for m, a, b in zip(moments, A.mats, B.mats))
    return BoundReport(name, J(ra.value - rb.value), rhs, tuple(hypotheses),
                       digest(psi.name, A.n, A.d, seed), J.label,
                       {'M': M, 'moments': moments, **_oracle_details(ra, rb)})


def _stable_margins(A: GeneratorTuple, B: GeneratorTuple) -> Optional[list]:
    if A.omega is None or B.omega is None:
        return None
    return [max(a, b) for a, b in zip(A.omega, B.omega)]


def _stable_slopes(psi: BernsteinFunction, margins, spec) -> list:
    slopes = []
    for i, w in enumerate(margins):
        point = np.zeros(psi.n)
        point[i] = w
        slopes.append(partial_derivative(psi, i, point, spec))
    return slopes


def check_cor3_stable(psi: BernsteinFunction, A: GeneratorTuple, B: GeneratorTuple,
                      J: IdealNorm = OPERATOR, spec: Optional[QuadratureSpec] = None,
                      *, seed: Optional[int] = None) -> BoundReport:
    """
    Exponentially stable Lipschitz bound with d_i psi evaluated at omega_i e_i.

    omega_i is the weaker of the two margins. Named "cor3" for the operator norm
    and "cor8" for other ideals.
    """
    name = 'cor3' if J.kind == 'operator' else 'cor8'
    margins = _stable_margins(A, B)
    hypotheses = _pair_hypotheses(psi, A, B) + [('stability_margins', margins is not None)]
    _require(name, hypotheses)
    M = max(A.bound_m, B.bound_m)
    slopes = _stable_slopes(psi, margins, spec)
    ra, rb = apply(psi, A, spec), apply(psi, B, spec)
    rhs = M ** (psi.n + 1) * sum(s * J(a - b) for s, a, b in zip(slopes, A.mats, B.mats))
    return BoundReport(name, J(ra.value - rb.value), rhs, tuple(hypotheses),
                       digest(psi.name, A.n, A.d, seed), J.label,
                       {'M': M, 'omega': margins, 'slopes': slopes, **_oracle_details(ra, rb)})


def _pointwise_setup(psi, A, B, x):
    x = np.asarray(x, dtype=complex).reshape(-1)
    hypotheses = [('same_arity', psi.n == A.n), ('certified', A.certified)]
    if B is not None:
        hypotheses += [('same_arity_B', B.n == A.n), ('certified_B', B.certified),
                       ('cross_commuting', _cross_commuting(A, B))]
    hypotheses.append(('vector_dimension', x.size == A.d))
    return x, hypotheses


def _pointwise_sides(psi, A, B, x, spec):
    psi_a = apply(psi, A, spec)
    if B is None:
        diff = psi_a.value - psi.triple.c0 * np.eye(A.d)
        deltas = [a @ x for a in A.mats]
        M = A.bound_m
    else:
        diff = psi_a.value - apply(psi, B, spec).value
        deltas = [(a - b) @ x for a, b in zip(A.mats, B.mats)]
        M = max(A.bound_m, B.bound_m)
    return float(np.linalg.norm(diff @ x)), [float(np.linalg.norm(v)) for v in deltas], M


def check_thm2_pointwise(psi: BernsteinFunction, A: GeneratorTuple, B: Optional[GeneratorTuple], x,
                         spec: Optional[QuadratureSpec] = None, *, seed: Optional[int] = None) -> BoundReport:
    """
    ||(psi(A) - psi(B)) x|| <= -(2e/(e-1)) n M^n psi(-(M/2n) v(x)), v(x)_i = ||(A_i - B_i) x||.

    Requires A_i B_i = B_i A_i. B = None is the B = 0 case, reported as "cor4".
    """
    name = 'cor4' if B is None else 'thm2'
    x, hypotheses = _pointwise_setup(psi, A, B, x)
    _require(name, hypotheses)
    lhs, distances, M = _pointwise_sides(psi, A, B, x, spec)
    return BoundReport(name, lhs, _moduli_rhs(psi, M, distances), tuple(hypotheses),
                       digest(psi.name, A.n, A.d, seed), 'vector', {'M': M, 'distances': distances})


def check_cor5_pointwise(psi: BernsteinFunction, A: GeneratorTuple, B: Optional[GeneratorTuple], x,
                         spec: Optional[QuadratureSpec] = None, *, seed: Optional[int] = None) -> BoundReport:
    """||(psi(A) - psi(B)) x|| <= M^(n+1) sum_i d_i psi(-0) ||(A_i - B_i) x||"""
    x, hypotheses = _pointwise_setup(psi, A, B, x)
    moments = _moments(psi)
    hypotheses.append(('finite_moments', all(math.isfinite(m) for m in moments)))
    _require('cor5', hypotheses)
    lhs, distances, M = _pointwise_sides(psi, A, B, x, spec)
    rhs = M ** (psi.n + 1) * sum(m * v for m, v in zip(moments, distances))
    return BoundReport('cor5', lhs, rhs, tuple(hypotheses), digest(psi.name, A.n, A.d, seed),
                       'vector', {'M': M, 'moments': moments})


# ---------------------------------------------------------------------------
# Commutator bounds
# ---------------------------------------------------------------------------

def _single_matrix(A) -> np.ndarray:
    if isinstance(A, GeneratorTuple):
        if A.n != 1:
            raise ValueError("A single generator is required")
        return A.mats[0]
    return as_matrix(A)


def check_cor9_commutator(A, H: HermitianPerturbation, s: float, J: IdealNorm = TRACE,
                          *, seed: Optional[int] = None) -> BoundReport:
    """||[A, V_H(s)]||_J <= |s| ||[A, H]||_J"""
    a = _single_matrix(A)
    V = unitary_at(H, s)
    return BoundReport('cor9', J(commutator(a, V)), abs(s) * J(commutator(a, H.H)),
                       (('same_dimension', a.shape == H.H.shape),),
                       digest('-', 1, a.shape[0], seed), J.label, {'s': s})


def check_lemma1(A, H: HermitianPerturbation, s: float, spec: Optional[QuadratureSpec] = None,
                 J: IdealNorm = TRACE, *, seed: Optional[int] = None) -> BoundReport:
    """
    Residual of [A, V_H(s)] = is int_0^1 V_H(sr) [A, H] V_H(s(1-r)) dr, with the
    commutator bound ||[A, V_H(s)]||_J <= |s| ||[A, H]||_J as a subcheck.
    """
    spec = spec or DEFAULT_SPEC
    a = _single_matrix(A)
    x, w = gauss_legendre(spec.nodes_per_panel)
    r = 0.5 * (1.0 + x)
    bracket = commutator(a, H.H)
    integral = 0.0
    for ri, wi in zip(r, w):
        integral = integral + 0.5 * wi * (unitary_at(H, s * ri) @ bracket @ unitary_at(H, s * (1.0 - ri)))
    residual = operator_norm(commutator(a, unitary_at(H, s)) - 1j * s * integral)
    sub = check_cor9_commutator(a, H, s, J, seed=seed)
    return BoundReport('lemma1', residual, RESIDUAL_TOL, (('same_dimension', a.shape == H.H.shape),),
                       digest('-', 1, a.shape[0], seed), OPERATOR.label, {'s': s}, (sub,))


def _conjugated(A: GeneratorTuple, V: np.ndarray) -> GeneratorTuple:
    """V A V^-1 for unitary V; the bound and margins carry over."""
    construction = None
    if A.construction is not None:
        c = A.construction
        construction = Construction(V @ c.similarity, c.inverse @ V.conj().T, c.eigenvalues)
    return GeneratorTuple(tuple(V @ a @ V.conj().T for a in A.mats), A.bound_m, A.omega,
                          construction, A.certified, f'{A.label}^V')


def check_conjugation(psi: BernsteinFunction, A: GeneratorTuple, H: HermitianPerturbation, s: float = 1.0,
                      spec: Optional[QuadratureSpec] = None, *, seed: Optional[int] = None,
                      psi_a: Optional[np.ndarray] = None) -> BoundReport:
    """Relative residual of psi(V A V^-1) = V psi(A) V^-1 with V = V_H(s)."""
    V = unitary_at(H, s)
    if psi_a is None:
        psi_a = apply(psi, A, spec).value
    left = apply(psi, _conjugated(A, V), spec).value
    residual = operator_norm(left - V @ psi_a @ V.conj().T) / (1.0 + operator_norm(psi_a))
    return BoundReport('conjugation', residual, RESIDUAL_TOL, (('same_arity', psi.n == A.n),),
                       digest(psi.name, A.n, A.d, seed), OPERATOR.label, {'s': s})


def check_thm5_commutator(psi: BernsteinFunction, A: GeneratorTuple, H: HermitianPerturbation,
                          J: IdealNorm = OPERATOR, spec: Optional[QuadratureSpec] = None,
                          *, stable: bool = False, seed: Optional[int] = None) -> BoundReport:
    """
    ||[psi(A), H]||_J <= M^(n+1) sum_j d_j psi ||[A_j, H]||_J, with the conjugation
    identity as a subcheck.

    stable=True evaluates d_j psi at omega_j e_j instead of -0 (reported as "thm5_stable"),
    which admits fractional powers.
    """
    name = 'thm5_stable' if stable else 'thm5'
    hypotheses = [('same_arity', psi.n == A.n), ('certified', A.certified),
                  ('same_dimension', A.d == H.d)]
    if stable:
        hypotheses.append(('stability_margins', A.omega is not None))
        _require(name, hypotheses)
        weights = _stable_slopes(psi, A.omega, spec)
    else:
        weights = _moments(psi)
        hypotheses.append(('finite_moments', all(math.isfinite(m) for m in weights)))
        _require(name, hypotheses)
    M = A.bound_m
    psi_a = apply(psi, A, spec)
    rhs = M ** (psi.n + 1) * sum(w * J(commutator(a, H.H)) for w, a in zip(weights, A.mats))
    sub = check_conjugation(psi, A, H, 1.0, spec, seed=seed, psi_a=psi_a.value)
    return BoundReport(name, J(commutator(psi_a.value, H.H)), rhs, tuple(hypotheses),
                       digest(psi.name, A.n, A.d, seed), J.label,
                       {'M': M, 'weights': weights, **_oracle_details(psi_a)}, (sub,))


# ---------------------------------------------------------------------------
# Differentiability
# ---------------------------------------------------------------------------

def _shifted(A: GeneratorTuple, delta, t: float) -> GeneratorTuple:
    """A + t delta, certified along a codiagonal path when delta is a partner tuple."""
    if isinstance(delta, GeneratorTuple):
        try:
            return codiagonal_path(A, delta, t)
        except GeneratorError:
            delta = delta.mats[0] - A.mats[0]
    shifted = A.mats[0] + t * as_matrix(delta)
    bound = max(1.0, certify_bound(GeneratorTuple((shifted,), 1.0, certified=False)))
    return GeneratorTuple.from_matrices([shifted], bound_m=bound, label=f'{A.label}+{t:g}dA')


def _delta_matrix(A: GeneratorTuple, delta) -> np.ndarray:
    if isinstance(delta, GeneratorTuple):
        return delta.mats[0] - A.mats[0]
    return as_matrix(delta)


def check_thm6_frechet(psi: BernsteinFunction, A: GeneratorTuple, deltas: Sequence,
                       J: IdealNorm = OPERATOR, spec: Optional[QuadratureSpec] = None,
                       *, seed: Optional[int] = None) -> list:
    """
    Frechet differentiability of psi at A in the ideal J.

    Each delta is a matrix or a partner tuple B (delta = B - A, certified along the
    codiagonal path when B shares A's similarity). For every delta two reports:
      - "thm7": ||R||_J <= M^3 (1/2) psi''(-0) ||delta||_J^2 where
        R = psi(A + delta) - psi(A) - psi'(A) delta (needs psi''(-0) finite and a
        certified A + delta)
      - "thm6": R / ||delta||_J is o(1): the log-log slope of ||R||_J / ||t delta||_J
        against ||t delta||_J over t = 2^-k, k = 0..10, is at least 0.9 (lhs 0.9, rhs slope)
    """
    moment = partial_at_zero(psi, 0) if psi.n == 1 else math.inf
    hypotheses = [('single_generator', psi.n == 1 and A.n == 1),
                  ('derivative_defined', math.isfinite(moment) or A.omega is not None)]
    _require('thm6', hypotheses)
    spec = spec or DEFAULT_SPEC
    psi_a = apply(psi, A, spec, convergence=False).value
    derivative = frechet_derivative(psi, A, spec)
    curvature = second_moment_at_zero(psi)
    tag = digest(psi.name, 1, A.d, seed)

    reports = []
    for index, delta in enumerate(deltas):
        dmat = _delta_matrix(A, delta)
        size = J(dmat)
        if size == 0.0:
            reports.append(BoundReport('thm6', 0.0, 0.0, tuple(hypotheses), tag, J.label, {'delta': index}))
            continue

        def remainder(t):
            shifted = _shifted(A, delta, t)
            value = apply(psi, shifted, spec, convergence=False).value
            return shifted, J(value - psi_a - t * (derivative @ dmat))

        full, r_full = remainder(1.0)
        quantitative = [('finite_second_moment', math.isfinite(curvature)),
                        ('certified_shift', full.certified and A.certified)]
        if all(met for _, met in quantitative):
            M = max(A.bound_m, full.bound_m)
            reports.append(BoundReport(
                'thm7', r_full, M ** REMAINDER_M_POWER * 0.5 * curvature * size ** 2,
                tuple(hypotheses + quantitative), tag, J.label,
                {'M': M, 'M_power': REMAINDER_M_POWER, 'delta': index, 'delta_norm': size}))
        else:
            logger.info(f"thm7 gated for delta {index} at {tag}")
            reports.append(gated_report('thm7', HypothesisError(
                'thm7: quantitative remainder bound not applicable', hypotheses + quantitative), tag, J.label))

        scales = [2.0 ** -k for k in range(SLOPE_SCALES)]
        ratios = [r_full / size] + [remainder(t)[1] / (t * size) for t in scales[1:]]
        sizes = np.log([t * size for t in scales])
        if min(ratios) <= 0.0:
            slope = math.inf
        else:
            slope = float(np.polyfit(sizes, np.log(ratios), 1)[0])
        reports.append(BoundReport('thm6', MIN_SLOPE, slope, tuple(hypotheses), tag, J.label,
                                   {'delta': index, 'ratios': ratios}))
    return reports


def check_eq9_identity(psi: BernsteinFunction, A1: GeneratorTuple, A2: GeneratorTuple,
                       spec: Optional[QuadratureSpec] = None, *, seed: Optional[int] = None) -> BoundReport:
    """
    Residual of phi(A1, A2)(A1 - A2) = psi(A1) - psi(A2) - psi'(-0)(A1 - A2), with
    phi(A1, A1) = psi'(A1) - psi'(-0) I as a subcheck.
    """
    moment = partial_at_zero(psi, 0) if psi.n == 1 else math.inf
    hypotheses = [('single_generator', psi.n == 1 and A1.n == 1 and A2.n == 1),
                  ('same_dimension', A1.d == A2.d),
                  ('finite_moment', math.isfinite(moment))]
    _require('eq9', hypotheses)
    diff = A1.mats[0] - A2.mats[0]
    phi = divided_difference_operator(psi, A1, A2, spec)
    psi_1, psi_2 = apply(psi, A1, spec).value, apply(psi, A2, spec).value
    residual = operator_norm(phi @ diff - (psi_1 - psi_2) + moment * diff)

    phi_diag = divided_difference_operator(psi, A1, A1, spec)
    diag_residual = operator_norm(phi_diag - (frechet_derivative(psi, A1, spec) - moment * np.eye(A1.d)))
    tag = digest(psi.name, 1, A1.d, seed)
    sub = BoundReport('phi_diagonal', diag_residual, RESIDUAL_TOL, tuple(hypotheses), tag, OPERATOR.label)
    return BoundReport('eq9', residual, RESIDUAL_TOL, tuple(hypotheses), tag, OPERATOR.label,
                       {'commutator': operator_norm(commutator(A1.mats[0], A2.mats[0]))}, (sub,))


# ---------------------------------------------------------------------------
# Trace formula
# ---------------------------------------------------------------------------

def trace_kernel(A, B, z: complex, spec: Optional[QuadratureSpec] = None, *, method: str = 'direct') -> complex:
    """
    f(z) = tr(T_A(z) - T_B(z)) / z for Re z > 0.

    method='direct' differences the exponentials; method='segment' integrates
    tr(T_B(z(1-r)) (A - B) T_A(zr)) over r in [0, 1].

    Raises:
        DomainError: If Re z <= 0
    """
    z = complex(z)
    if not z.real > 0:
        raise DomainError(f"The trace kernel needs Re z > 0, got {z}")
    a, b = _single_matrix(A), _single_matrix(B)
    if method == 'direct':
        return trace(expm_complex(a, z) - expm_complex(b, z)) / z
    if method != 'segment':
        raise ValueError(f"Unknown method {method!r}")
    spec = spec or DEFAULT_SPEC
    x, w = gauss_legendre(spec.nodes_per_panel)
    r = 0.5 * (1.0 + x)
    left = expm_complex(b, z * (1.0 - r))
    right = expm_complex(a, z * r)
    values = np.einsum('mij,jk,mki->m', left, a - b, right)
    return complex(0.5 * np.dot(w, values))


def contour_residual(A, B, center: complex = 2.0, radius: float = 1.0, nodes: int = CONTOUR_NODES) -> tuple:
    """
    |closed contour integral of f(z) dz| on |z - center| = radius by the trapezoid rule,
    with the largest ||T_A(z)||, ||T_B(z)|| seen on the contour.
    """
    a, b = _single_matrix(A), _single_matrix(B)
    theta = 2.0 * np.pi * np.arange(nodes) / nodes
    z = center + radius * np.exp(1j * theta)
    ta, tb = expm_complex(a, z), expm_complex(b, z)
    f = np.trace(ta - tb, axis1=1, axis2=2) / z
    dz = 1j * radius * np.exp(1j * theta) * (2.0 * np.pi / nodes)
    bound = float(max(np.max(operator_norm(ta)), np.max(operator_norm(tb))))
    return float(abs(np.sum(f * dz))), bound


def check_trace_kernel(A: GeneratorTuple, B: GeneratorTuple, z_values: Sequence[complex] = (1.0, 0.5 + 1.0j, 2.0),
                       spec: Optional[QuadratureSpec] = None, *, seed: Optional[int] = None) -> BoundReport:
    """
    Two-way agreement of the trace kernel, with subchecks:
      - "kernel_bound": |f(z)| <= M_z^2 ||A - B||_Trace at real z, M_z the sampled sup of ||T(z)||
      - "contour": Morera residual on |z - 2| = 1
    """
    a, b = _single_matrix(A), _single_matrix(B)
    gap = 0.0
    worst_ratio_side = (0.0, 0.0)
    for z in z_values:
        direct = trace_kernel(a, b, z, spec)
        segment = trace_kernel(a, b, z, spec, method='segment')
        gap = max(gap, abs(direct - segment))
        if complex(z).imag == 0.0:
            grid = np.linspace(0.0, complex(z).real, 33)
            Mz = float(max(np.max(operator_norm(expm_complex(a, grid))),
                           np.max(operator_norm(expm_complex(b, grid)))))
            lhs, rhs = abs(direct), Mz ** 2 * TRACE(a - b)
            if lhs - rhs > worst_ratio_side[0] - worst_ratio_side[1]:
                worst_ratio_side = (lhs, rhs)
    residual, bound = contour_residual(a, b)
    tag = digest('-', 1, a.shape[0], seed)
    hypotheses = (('same_dimension', a.shape == b.shape),)
    subs = (
        BoundReport('kernel_bound', worst_ratio_side[0], worst_ratio_side[1], hypotheses, tag, TRACE.label),
        BoundReport('contour', residual, RESIDUAL_TOL, hypotheses, tag, OPERATOR.label,
                    {'contour_bound': bound}),
    )
    return BoundReport('trace_kernel', gap, KERNEL_TOL, hypotheses, tag, OPERATOR.label,
                       {'z': [str(complex(z)) for z in z_values]}, subs)


def check_thm8_trace(psi: BernsteinFunction, A: GeneratorTuple, B: GeneratorTuple,
                     spec: Optional[QuadratureSpec] = None, *, seed: Optional[int] = None) -> BoundReport:
    """
    |tr(psi(A) - psi(B)) - int f(u) u dmu(u)| <= 1e-6 (1 + |tr(psi(A) - psi(B))|),
    with f(u) u = tr(T_A(u) - T_B(u)). Subcheck "trace_norm": |tr S| <= ||S||_Trace.
    """
    moment = partial_at_zero(psi, 0) if psi.n == 1 else math.inf
    hypotheses = [('single_generator', psi.n == 1 and A.n == 1 and B.n == 1),
                  ('same_dimension', A.d == B.d),
                  ('finite_moment', math.isfinite(moment))]
    _require('thm8', hypotheses)
    spec = spec or DEFAULT_SPEC
    d = A.d
    M = max(A.bound_m, B.bound_m)
    a, b = A.mats[0], B.mats[0]
    difference = apply(psi, A, spec).value - apply(psi, B, spec).value
    lhs_value = trace(difference)

    def integrand(u):
        return np.trace(A.semigroup(u) - B.semigroup(u), axis1=1, axis2=2)

    rate = None if A.omega is None or B.omega is None else max(A.omega[0], B.omega[0])
    if rate is None:
        tail = {'sup_bound': 2.0 * d * M, 'growth_power': 0}
    else:
        tail = {'limit': TailLimit(0.0, lambda direction, v: 2.0 * d * M * math.exp(rate * v))}
    outcome = integrate_levy(
        integrand, psi.triple.mu, spec,
        origin_linearity_bound=d * M * M * operator_norm(a - b),
        origin_slope=lambda direction: direction[0] * trace(a - b),
        origin_curvature=0.5 * d * M * (operator_norm(a) ** 2 + operator_norm(b) ** 2),
        **tail,
    )
    rhs_value = complex(outcome.value)
    tag = digest(psi.name, 1, d, seed)
    sub = BoundReport('trace_norm', abs(lhs_value), TRACE(difference), tuple(hypotheses), tag, TRACE.label)
    return BoundReport('thm8', abs(lhs_value - rhs_value), TRACE_TOL * (1.0 + abs(lhs_value)),
                       tuple(hypotheses), tag, OPERATOR.label,
                       {'trace': str(lhs_value), 'levy_side': str(rhs_value)}, (sub,))


@dataclass(frozen=True)
class SpectralShiftStep:
    """
    Integer-valued step function on R_+: height heights[k] on [breakpoints[k], breakpoints[k+1]].
    """
    breakpoints: tuple
    heights: tuple

    @property
    def is_zero(self) -> bool:
        return not any(self.heights)

    def panels(self):
        for k, height in enumerate(self.heights):
            if height:
                yield self.breakpoints[k], self.breakpoints[k + 1], height

    def pair_derivative(self, psi: BernsteinFunction) -> float:
        """int psi'(-t) dxi(t), exact on each panel as psi(-lo) - psi(-hi)."""
        total = 0.0
        for lo, hi, height in self.panels():
            total += height * float(psi.value(-lo) - psi.value(-hi))
        return total

    def integrate(self, g: Callable[[float], float]) -> float:
        """int g(t) xi(t) dt for a continuous g, panel by panel."""
        total = 0.0
        for lo, hi, height in self.panels():
            value, _ = integrate.quad(g, lo, hi, epsabs=1e-13, epsrel=1e-12)
            total += height * value
        return total


def _real_diagonal(A, label: str) -> np.ndarray:
    m = _single_matrix(A)
    diag = np.diag(m)
    if np.max(np.abs(m - np.diag(diag)), initial=0.0) > 0.0:
        raise DomainError(f"{label} must be diagonal")
    if np.any(diag.imag != 0.0) or np.any(diag.real >= 0.0):
        raise DomainError(f"{label} must have real negative diagonal entries")
    return diag.real


def spectral_shift_diagonal(A, B) -> SpectralShiftStep:
    """
    xi = sum_i sign(a_i - b_i) 1_[min(-a_i, -b_i), max(-a_i, -b_i)] for diagonal A, B.

    Raises:
        DomainError: For non-diagonal input or entries that are not real and negative
    """
    a, b = _real_diagonal(A, 'A'), _real_diagonal(B, 'B')
    if a.shape != b.shape:
        raise DomainError("A and B must have the same dimension")
    pieces = [(min(-x, -y), max(-x, -y), int(np.sign(x - y))) for x, y in zip(a, b) if x != y]
    points = sorted({p for lo, hi, _ in pieces for p in (lo, hi)})
    heights = []
    for left, right in zip(points, points[1:]):
        mid = 0.5 * (left + right)
        heights.append(sum(sign for lo, hi, sign in pieces if lo <= mid <= hi))
    return SpectralShiftStep(tuple(points), tuple(heights))


def check_cor14_shift(psi: BernsteinFunction, A: GeneratorTuple, B: GeneratorTuple,
                      spec: Optional[QuadratureSpec] = None, *, seed: Optional[int] = None) -> BoundReport:
    """
    tr(psi(A) - psi(B)) = int psi'(-t) dxi(t) for diagonal A, B.

    Reported as "cor13" when psi'(-t) lies in the rapidly decreasing test space, else "cor14".
    """
    name = 'cor13' if psi.derivative_in_test_space else 'cor14'
    hypotheses = [('single_generator', psi.n == 1 and A.n == 1 and B.n == 1)]
    try:
        xi = spectral_shift_diagonal(A, B)
        hypotheses.append(('real_diagonal', True))
    except DomainError:
        hypotheses.append(('real_diagonal', False))
    _require(name, hypotheses)
    difference = trace(apply(psi, A, spec).value - apply(psi, B, spec).value)
    pairing = xi.integrate(lambda t: float(np.real(psi.derivative(-t))))
    closed = xi.pair_derivative(psi)
    return BoundReport(name, abs(difference - pairing), RESIDUAL_TOL, tuple(hypotheses),
                       digest(psi.name, 1, A.d, seed), OPERATOR.label,
                       {'pairing': pairing, 'closed_pairing': closed, 'pairing_gap': abs(pairing - closed),
                        'trace': str(difference), 'support': list(xi.breakpoints)})
