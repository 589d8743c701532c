"""Tests for the quadrature engine"""

import math

import numpy as np
import pytest

from bpcalc.bernstein import evaluate, get_psi, psi_log, psi_poisson, psi_rat, psi_sqrt
from bpcalc.quadrature import (
    DEFAULT_SPEC, QuadratureError, QuadratureSpec, TailLimit, gauss_legendre, integrate_levy,
    integrate_subordination,
)


class TestQuadratureSpec:
    """Test spec validation and overrides"""

    def test_defaults(self):
        """Test the default layout"""
        assert DEFAULT_SPEC.nodes_per_panel == 32
        assert DEFAULT_SPEC.panels_per_decade == 2
        assert DEFAULT_SPEC.ratio() == pytest.approx(math.sqrt(10.0))

    def test_overrides_coerce_strings(self):
        """Test that string overrides from config files are coerced"""
        spec = DEFAULT_SPEC.with_overrides(nodes_per_panel='24', target_tol='1e-9')
        assert spec.nodes_per_panel == 24
        assert spec.target_tol == 1e-9

    def test_unknown_override_rejected(self):
        """Test that unknown settings list the valid ones"""
        with pytest.raises(ValueError, match='Valid settings'):
            DEFAULT_SPEC.with_overrides(panels=3)

    def test_invalid_values_rejected(self):
        """Test range validation"""
        with pytest.raises(ValueError):
            QuadratureSpec(nodes_per_panel=2)
        with pytest.raises(ValueError):
            QuadratureSpec(origin_cutoff=2.0)
        with pytest.raises(ValueError):
            QuadratureSpec(target_tol=0.0)

    def test_doubled(self):
        """Test node doubling"""
        assert DEFAULT_SPEC.doubled().nodes_per_panel == 64

    def test_gauss_legendre_read_only(self):
        """Test that cached rules cannot be modified"""
        nodes, weights = gauss_legendre(8)
        assert weights.sum() == pytest.approx(2.0)
        with pytest.raises(ValueError):
            nodes[0] = 0.0


class TestIntegrateLevy:
    """Test integration against catalog measures"""

    def test_rat_first_moment(self):
        """Test int u dmu = 1 for exp(-u) with a sup bound"""
        mu = psi_rat().triple.mu
        outcome = integrate_levy(lambda u: u[:, 0], mu, sup_bound=1.0, growth_power=1,
                                 origin_slope=lambda e: float(e[0]), origin_curvature=0.0)
        assert outcome.value == pytest.approx(1.0, abs=1e-10)

    def test_log_laplace_transform(self):
        """Test int (exp(-u) - 1) dmu = -log 2 for the logarithm"""
        mu = psi_log().triple.mu
        outcome = integrate_levy(
            lambda u: np.expm1(-u[:, 0]), mu,
            origin_slope=lambda e: -float(e[0]), origin_curvature=0.5,
            limit=TailLimit(-1.0, lambda e, v: math.exp(-v)))
        assert outcome.value == pytest.approx(-math.log(2.0), abs=1e-10)
        assert outcome.truncation_error <= DEFAULT_SPEC.tail_truncation_tol
        assert outcome.origin_remainder <= DEFAULT_SPEC.target_tol

    def test_atoms_are_exact(self):
        """Test that atom lists are summed without panels"""
        mu = psi_poisson().triple.mu
        outcome = integrate_levy(lambda u: np.exp(-2.0 * u[:, 0]), mu)
        assert outcome.value == pytest.approx(math.exp(-2.0), abs=1e-15)
        assert outcome.node_count == 1

    def test_matrix_valued_integrand(self):
        """Test that trailing value dimensions are carried through"""
        mu = psi_rat().triple.mu
        diag = np.array([-1.0, -3.0])

        def f(u):
            return np.expm1(u[:, :, None] * diag[None, None, :])[:, 0, :]

        outcome = integrate_levy(f, mu, origin_slope=lambda e: e[0] * diag, origin_curvature=4.5,
                                 limit=TailLimit(-np.ones(2), lambda e, v: math.exp(-v)))
        expected = diag / (1.0 - diag)
        assert np.allclose(outcome.value, expected, atol=1e-10)

    def test_convergence_delta_reported(self):
        """Test that the half-node rerun gives a small delta"""
        mu = psi_sqrt().triple.mu
        outcome = integrate_levy(lambda u: np.expm1(-u[:, 0]), mu,
                                 origin_slope=lambda e: -float(e[0]), origin_curvature=0.5,
                                 limit=TailLimit(-1.0, lambda e, v: math.exp(-v)), convergence=True)
        assert outcome.value == pytest.approx(-1.0, abs=1e-9)
        assert outcome.convergence_delta < 1e-6

    def test_density_without_tail_information_rejected(self):
        """Test that densities need a limit or a sup bound"""
        with pytest.raises(QuadratureError):
            integrate_levy(lambda u: u[:, 0], psi_rat().triple.mu)

    def test_uncertifiable_tail(self):
        """Test that a tail that never fits the budget raises"""
        spec = QuadratureSpec(max_truncation=1e3)
        with pytest.raises(QuadratureError, match='Tail'):
            integrate_levy(lambda u: np.ones(len(u)), psi_sqrt().triple.mu, spec, sup_bound=1.0)

    def test_diagonal_direction(self):
        """Test a diagonal measure: int (exp(-u1 - u2) - 1) dmu = rat(-2)"""
        psi = get_psi('diag:2:rat')
        outcome = integrate_levy(
            lambda u: np.expm1(-u.sum(axis=1)), psi.triple.mu,
            origin_slope=lambda e: -float(e.sum()), origin_curvature=0.5,
            limit=TailLimit(-1.0, lambda e, v: math.exp(-v * float(e.sum()))))
        assert outcome.value == pytest.approx(-2.0 / 3.0, abs=1e-10)


def _laplace(mu, s, spec=None):
    """int (exp(s u) - 1) dmu for a measure of one variable"""
    return integrate_levy(
        lambda u: np.expm1(s * u[:, 0]), mu, spec,
        origin_slope=lambda e: s * float(e[0]), origin_curvature=0.5 * s * s,
        limit=TailLimit(-1.0, lambda e, v: math.exp(s * v)))


class TestQuadratureInvariants:
    """Test convergence, linearity and positivity of the panel rule"""

    @pytest.mark.parametrize('name', ['sqrt', 'alpha:0.25', 'alpha:0.75', 'log', 'rat'])
    @pytest.mark.parametrize('s', [-10.0, -1.0, -0.01])
    def test_doubling_nodes_converges(self, name, s):
        """Test that doubling the nodes per panel moves the integral by less than target_tol"""
        mu = get_psi(name).triple.mu
        base = _laplace(mu, s).value
        doubled = _laplace(mu, s, DEFAULT_SPEC.doubled()).value
        assert abs(doubled - base) < DEFAULT_SPEC.target_tol

    def test_linearity_on_one_node_set(self):
        """Test I(af + bg) = a I(f) + b I(g) when all three share the nodes"""
        mu = psi_log().triple.mu
        a, b = 2.5, -0.75

        def f(u):
            first, second = np.expm1(-u[:, 0]), np.expm1(-3.0 * u[:, 0])
            return np.stack([first, second, a * first + b * second], axis=1)

        outcome = integrate_levy(
            f, mu,
            origin_slope=lambda e: float(e[0]) * np.array([-1.0, -3.0, -a - 3.0 * b]),
            origin_curvature=4.5 * (abs(a) + abs(b)),
            limit=TailLimit(np.array([-1.0, -1.0, -a - b]),
                            lambda e, v: (1.0 + abs(a) + abs(b)) * math.exp(-v)))
        first, second, combined = outcome.value
        assert combined == pytest.approx(a * first + b * second, abs=1e-14)
        assert first == pytest.approx(-math.log(2.0), abs=1e-10)
        assert second == pytest.approx(-math.log(4.0), abs=1e-10)

    @pytest.mark.parametrize('name', ['sqrt', 'alpha:0.25', 'log', 'rat', 'poisson'])
    def test_nonnegative_integrand(self, name):
        """Test that 1 - exp(-u) >= 0 integrates to a nonnegative value"""
        mu = get_psi(name).triple.mu
        outcome = integrate_levy(
            lambda u: -np.expm1(-u[:, 0]), mu,
            origin_slope=lambda e: float(e[0]), origin_curvature=0.5,
            limit=TailLimit(1.0, lambda e, v: math.exp(-v)))
        assert outcome.value >= 0.0
        assert outcome.value == pytest.approx(-evaluate(get_psi(name), -1.0), abs=1e-9)


class TestIntegrateSubordination:
    """Test integration against the subordination laws"""

    @pytest.mark.parametrize('s', [-4.0, -1.0, -0.25])
    @pytest.mark.parametrize('t', [0.5, 1.0, 2.0])
    def test_stable_half_laplace_identity(self, s, t):
        """Test int exp(s u) dnu_t = exp(-t sqrt(-s))"""
        law = psi_sqrt().subordination
        outcome = integrate_subordination(lambda v: np.exp(s * v), law, t,
                                          limit=TailLimit(0.0, lambda e, v: math.exp(s * v)))
        assert outcome.value == pytest.approx(math.exp(-t * math.sqrt(-s)), abs=1e-8)

    def test_stable_half_without_limit(self):
        """Test the sup-bound tail on the total mass"""
        law = psi_sqrt().subordination
        outcome = integrate_subordination(lambda v: np.ones_like(v), law, 1.0)
        assert outcome.value == pytest.approx(1.0, abs=1e-8)

    def test_poisson_law(self):
        """Test int exp(s k) dnu_t = exp(t (e^s - 1)) for the Poisson law"""
        law = psi_poisson().subordination
        s, t = -0.7, 1.5
        outcome = integrate_subordination(lambda k: np.exp(s * k), law, t)
        assert outcome.value == pytest.approx(math.exp(t * math.expm1(s)), abs=1e-10)

    def test_time_zero_is_point_mass(self):
        """Test that nu_0 is the point mass at 0"""
        law = psi_sqrt().subordination
        assert integrate_subordination(lambda v: v + 3.0, law, 0.0).value == 3.0

    def test_missing_law_rejected(self):
        """Test that entries without a law cannot be subordinated"""
        with pytest.raises(ValueError):
            integrate_subordination(lambda v: v, psi_rat().subordination, 1.0)
        with pytest.raises(ValueError):
            integrate_subordination(lambda v: v, psi_sqrt().subordination, -1.0)
