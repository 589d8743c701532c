"""
Dense Matrix Core

Matrix exponentials, semigroups of commuting generator tuples, the seeded factory
that builds tuples with a certified semigroup bound, Schatten-class norms, and
unitary groups of Hermitian perturbations.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.stats import unitary_group

logger = logging.getLogger(__name__)

EIG_CONDITION_CAP = 1e4
COMMUTATION_TOL = 1e-10
SPECTRUM_TOL = 1e-12
MIN_STABILITY_MARGIN = 0.01
CERTIFICATION_GRID = np.concatenate([[0.0], np.geomspace(1e-3, 50.0, 200)])


class ExpmOverflowError(ArithmeticError):
    """The matrix exponential left the floating-point range."""


class GeneratorError(ValueError):
    """Matrices that do not form a bounded commuting generator tuple."""


def as_matrix(a) -> np.ndarray:
    """Validate and convert to a square complex array with finite entries."""
    m = np.array(a, dtype=complex)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"Expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("Matrix has non-finite entries")
    return m


def operator_norm(S) -> float:
    """Largest singular value; stacks of matrices give one value per matrix."""
    S = np.asarray(S)
    if S.ndim == 2:
        return float(scipy.linalg.svdvals(S)[0]) if S.size else 0.0
    return np.linalg.svd(S, compute_uv=False)[..., 0]


def matrices_close(A, B, tol: float = 1e-9) -> bool:
    return operator_norm(np.asarray(A) - np.asarray(B)) <= tol * (1.0 + operator_norm(B))


def commutator(A, B) -> np.ndarray:
    return A @ B - B @ A


def trace(S) -> complex:
    return complex(np.trace(S))


def expm(A, t: float = 1.0) -> np.ndarray:
    """
    exp(tA) by scaling and squaring with a Pade approximant.

    Raises:
        ValueError: If t < 0
        ExpmOverflowError: If the result is not finite
    """
    if t < 0:
        raise ValueError(f"expm takes t >= 0, got {t}; use unitary_at for groups")
    result = scipy.linalg.expm(t * as_matrix(A))
    if not np.all(np.isfinite(result)):
        raise ExpmOverflowError(f"exp(tA) overflowed at t = {t:g}")
    return result


class Semigroup:
    """
    t -> exp(tA) for batches of t.

    Uses an eigendecomposition when the eigenvector matrix is well conditioned
    (cond <= EIG_CONDITION_CAP) and batched scipy.linalg.expm otherwise.
    """

    def __init__(self, A):
        self.matrix = as_matrix(A)
        self._eig = None
        w, V = np.linalg.eig(self.matrix)
        if np.linalg.cond(V) <= EIG_CONDITION_CAP:
            self._eig = (w, V, np.linalg.inv(V))

    @property
    def uses_eigenbasis(self) -> bool:
        return self._eig is not None

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float).reshape(-1)
        if np.any(t < 0):
            raise ValueError("Semigroup times must be nonnegative")
        if self._eig is not None:
            w, V, V_inv = self._eig
            result = np.einsum('ij,mj,jk->mik', V, np.exp(np.outer(t, w)), V_inv)
        else:
            result = scipy.linalg.expm(t[:, None, None] * self.matrix[None, :, :])
        if not np.all(np.isfinite(result)):
            raise ExpmOverflowError(f"exp(tA) overflowed for t up to {t.max():g}")
        return result


@dataclass(frozen=True)
class Construction:
    """Joint diagonal data of a factory tuple: A_j = S diag(eigenvalues[j]) S^-1."""
    similarity: np.ndarray
    inverse: np.ndarray
    eigenvalues: np.ndarray  # (n, d)

    @property
    def condition(self) -> float:
        return condition_number(self.similarity)


@dataclass(frozen=True, eq=False)
class GeneratorTuple:
    """
    n pairwise commuting d x d generators with a semigroup bound.

    Attributes:
        mats: (A_1, ..., A_n)
        bound_m: sup over t >= 0 and j of ||exp(t A_j)||; rigorous when certified
        omega: stability margins with ||exp(t A_j)|| <= bound_m exp(omega_j t)
        construction: joint diagonal data when built by the factory
        certified: False for user matrices whose bound was supplied or estimated
        label: provenance for report digests
        decay_rate: uncertified rates for the tail of user tuples, half the spectral abscissa
    """
    mats: tuple
    bound_m: float
    omega: Optional[tuple] = None
    construction: Optional[Construction] = None
    certified: bool = True
    label: str = ''
    decay_rate: Optional[tuple] = None

    def __post_init__(self):
        mats = tuple(as_matrix(a) for a in self.mats)
        object.__setattr__(self, 'mats', mats)
        if not mats:
            raise GeneratorError("A generator tuple needs at least one matrix")
        if len({a.shape for a in mats}) != 1:
            raise GeneratorError("All generators must have the same dimension")
        if self.bound_m < 1.0:
            raise GeneratorError(f"bound_m must be >= 1, got {self.bound_m}")
        if self.omega is not None and len(self.omega) != len(mats):
            raise GeneratorError("omega needs one margin per generator")
        if self.decay_rate is not None and len(self.decay_rate) != len(mats):
            raise GeneratorError("decay_rate needs one rate per generator")

    @property
    def n(self) -> int:
        return len(self.mats)

    @property
    def d(self) -> int:
        return self.mats[0].shape[0]

    @cached_property
    def semigroups(self) -> tuple:
        return tuple(Semigroup(a) for a in self.mats)

    def semigroup(self, u) -> np.ndarray:
        """
        T_A(u) = exp(u_1 A_1) ... exp(u_n A_n) for a batch u of shape (m, n).

        Axes with u_j = 0 throughout the batch are skipped.
        """
        u = np.asarray(u, dtype=float)
        if u.ndim == 1:
            u = u[None, :]
        if u.shape[1] != self.n:
            raise ValueError(f"Expected points with {self.n} coordinates, got {u.shape[1]}")
        if np.any(u < 0):
            raise ValueError("Semigroup arguments must be componentwise nonnegative")
        result = None
        for j, group in enumerate(self.semigroups):
            if not np.any(u[:, j]):
                continue
            factor = group.at(u[:, j])
            result = factor if result is None else np.matmul(result, factor)
        if result is None:
            result = np.broadcast_to(np.eye(self.d, dtype=complex), (len(u), self.d, self.d)).copy()
        return result

    def commutation_residual(self) -> float:
        worst = 0.0
        for i in range(self.n):
            for j in range(i + 1, self.n):
                scale = operator_norm(self.mats[i]) * operator_norm(self.mats[j])
                if scale:
                    worst = max(worst, operator_norm(commutator(self.mats[i], self.mats[j])) / scale)
        return worst

    def spectral_abscissa(self) -> list:
        return [float(np.linalg.eigvals(a).real.max()) for a in self.mats]

    @property
    def tail_rate(self) -> Optional[float]:
        """Exponential rate for tail residuals: the certified margin if any, else the decay estimate."""
        rates = self.omega if self.omega is not None else self.decay_rate
        return None if rates is None else max(rates)

    def validate(self) -> None:
        """
        Raises:
            GeneratorError: If the family does not commute or has spectrum in Re > 0
        """
        residual = self.commutation_residual()
        if residual > COMMUTATION_TOL:
            raise GeneratorError(f"Generators do not commute (relative residual {residual:.3g})")
        for j, top in enumerate(self.spectral_abscissa()):
            cap = 0.0 if self.omega is None else self.omega[j]
            if top > cap + SPECTRUM_TOL * (1.0 + operator_norm(self.mats[j])):
                raise GeneratorError(
                    f"Generator {j} has an eigenvalue with real part {top:.6g} > {cap:g}")

    def scaled(self, c: float) -> 'GeneratorTuple':
        """(cA_1, ..., cA_n) for c > 0; the bound is unchanged and margins scale by c."""
        if not c > 0:
            raise ValueError("Only positive rescaling preserves generators")
        construction = None
        if self.construction is not None:
            construction = Construction(self.construction.similarity, self.construction.inverse,
                                        c * self.construction.eigenvalues)
        omega = None if self.omega is None else tuple(c * w for w in self.omega)
        decay = None if self.decay_rate is None else tuple(c * w for w in self.decay_rate)
        return GeneratorTuple(tuple(c * a for a in self.mats), self.bound_m, omega,
                              construction, self.certified, f'{self.label}*{c:g}', decay)

    def with_matrices(self, mats, construction=None, label=None) -> 'GeneratorTuple':
        return GeneratorTuple(tuple(mats), self.bound_m, None, construction, self.certified,
                              label if label is not None else self.label)

    @classmethod
    def diagonal(cls, *spectra, label: str = 'diag') -> 'GeneratorTuple':
        """Tuple of diagonal generators (bound 1, certified) from one spectrum per axis."""
        eig = np.array([np.asarray(s, dtype=complex).reshape(-1) for s in spectra])
        d = eig.shape[1]
        top = eig.real.max(axis=1)
        omega = tuple(float(w) for w in top) if np.all(top < 0) else None
        construction = Construction(np.eye(d, dtype=complex), np.eye(d, dtype=complex), eig)
        return cls(tuple(np.diag(row) for row in eig), 1.0, omega, construction, True, label)

    @classmethod
    def from_matrices(cls, mats: Sequence, bound_m: Optional[float] = None,
                      label: str = 'user') -> 'GeneratorTuple':
        """
        Wrap user matrices. They are always uncertified; without a bound the grid
        estimate of sup ||exp(t A_j)|| is used. Strictly stable spectra also get
        a decay rate of half the spectral abscissa for tail residuals.

        Raises:
            GeneratorError: On a non-commuting family or unstable spectrum
        """
        probe = cls(tuple(mats), 1.0, certified=False, label=label)
        probe.validate()
        if bound_m is None:
            bound_m = max(1.0, certify_bound(probe))
            logger.warning(f"{label}: semigroup bound estimated on a grid ({bound_m:.6g}), uncertified")
        top = probe.spectral_abscissa()
        decay = tuple(0.5 * t for t in top) if max(top) < 0 else None
        return cls(probe.mats, float(bound_m), certified=False, label=label, decay_rate=decay)


def semigroup_at(A: GeneratorTuple, u) -> np.ndarray:
    """T_A(u) at a single point u in R_+^n."""
    return A.semigroup(np.asarray(u, dtype=float).reshape(1, -1))[0]


def certify_bound(A: GeneratorTuple, grid: np.ndarray = CERTIFICATION_GRID) -> float:
    """sup over the grid and j of ||exp(t A_j)||."""
    return max(float(np.max(operator_norm(g.at(grid)))) for g in A.semigroups)


def random_unitary(d: int, rng) -> np.ndarray:
    if d == 1:
        return np.exp(2j * np.pi * rng.random()).reshape(1, 1)
    return unitary_group.rvs(d, random_state=rng)


def _similarity(d: int, kappa: float, rng) -> np.ndarray:
    """S = U diag(sv) W with singular values spread geometrically from 1 to kappa."""
    U = random_unitary(d, rng)
    if kappa == 1.0 or d == 1:
        return U
    W = random_unitary(d, rng)
    return U @ np.diag(np.geomspace(1.0, kappa, d)) @ W


def _draw_spectra(rng, n: int, d: int, omega_opt: float, spread: float, complex_spectrum: bool):
    real = omega_opt - spread * rng.random((n, d))
    if not complex_spectrum:
        return real.astype(complex)
    return real + 1j * rng.uniform(-2.0, 2.0, (n, d))


def condition_number(S) -> float:
    sv = scipy.linalg.svdvals(S)
    return float(sv[0] / sv[-1])


def _assemble(S: np.ndarray, eig: np.ndarray, kappa: float, label: str) -> GeneratorTuple:
    S_inv = np.linalg.inv(S)
    mats = tuple(S @ np.diag(row) @ S_inv for row in eig)
    omega = tuple(float(w) for w in eig.real.max(axis=1))
    return GeneratorTuple(mats, max(1.0, kappa), omega, Construction(S, S_inv, eig), True, label)


def make_commuting_tuple(n: int, d: int, seed: int, kappa_max: float = 1.0,
                         omega_opt: float = -0.5, *, spread: float = 3.0,
                         complex_spectrum: bool = False) -> GeneratorTuple:
    """
    Seeded commuting tuple A_j = S D_j S^-1 with bound_m = cond(S).

    Args:
        n: Number of generators
        d: Matrix dimension
        seed: Seed for numpy's default_rng; equal seeds give bit-identical tuples
        kappa_max: Cap on cond(S); 1 draws a unitary S and bound_m = 1
        omega_opt: Largest allowed real part (clamped to at most -0.01)
        spread: Width of the band of real parts below omega_opt
        complex_spectrum: Draw imaginary parts in [-2, 2]

    Returns:
        Certified GeneratorTuple with joint diagonal data
    """
    if kappa_max < 1.0:
        raise ValueError(f"kappa_max must be >= 1, got {kappa_max}")
    rng = np.random.default_rng(seed)
    omega_opt = min(omega_opt, -MIN_STABILITY_MARGIN)
    kappa = 1.0 if kappa_max == 1.0 else float(rng.uniform(1.0, kappa_max))
    S = _similarity(d, kappa, rng)
    eig = _draw_spectra(rng, n, d, omega_opt, spread, complex_spectrum)
    bound = 1.0 if kappa == 1.0 or d == 1 else condition_number(S)
    return _assemble(S, eig, bound, f'factory(n={n},d={d},seed={seed},kappa={kappa:.3g})')


def codiagonal_partner(A: GeneratorTuple, seed: int, scale: float = 0.5) -> GeneratorTuple:
    """B_j = S diag(lambda_j + delta_j) S^-1 sharing A's similarity, so A_j B_j = B_j A_j."""
    if A.construction is None:
        raise GeneratorError("A codiagonal partner needs joint diagonal data")
    rng = np.random.default_rng(seed)
    c = A.construction
    shift = scale * rng.uniform(-1.0, 1.0, c.eigenvalues.shape)
    real = np.minimum(c.eigenvalues.real + shift, -MIN_STABILITY_MARGIN)
    eig = real + 1j * c.eigenvalues.imag
    return GeneratorTuple(
        tuple(c.similarity @ np.diag(row) @ c.inverse for row in eig),
        A.bound_m, tuple(float(w) for w in eig.real.max(axis=1)),
        Construction(c.similarity, c.inverse, eig), A.certified, f'{A.label}+codiag({seed})')


def perturbed_partner(A: GeneratorTuple, seed: int, eps: float = 0.1) -> GeneratorTuple:
    """
    A factory tuple with similarity S(I + eps X) and spectra D + eps Y: close to A,
    certified through its own condition number, and in general not commuting with A.
    """
    if A.construction is None:
        raise GeneratorError("A perturbed partner needs joint diagonal data")
    rng = np.random.default_rng(seed)
    c = A.construction
    d = A.d
    X = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    X /= operator_norm(X)
    S = c.similarity @ (np.eye(d) + eps * X)
    real = np.minimum(c.eigenvalues.real - eps * rng.random(c.eigenvalues.shape), -MIN_STABILITY_MARGIN)
    eig = real + 1j * c.eigenvalues.imag
    kappa = condition_number(S)
    return _assemble(S, eig, kappa, f'{A.label}+perturbed({seed},{eps:g})')


def codiagonal_path(A: GeneratorTuple, B: GeneratorTuple, t: float) -> GeneratorTuple:
    """
    The tuple S diag(lambda_A + t (lambda_B - lambda_A)) S^-1 for tuples sharing a similarity S.

    For t in [0, 1] real parts stay below the larger margin, so the bound max(M_A, M_B) holds.
    """
    if A.construction is None or B.construction is None:
        raise GeneratorError("Both tuples need joint diagonal data")
    if not np.array_equal(A.construction.similarity, B.construction.similarity):
        raise GeneratorError("Tuples do not share a similarity")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    c = A.construction
    eig = c.eigenvalues + t * (B.construction.eigenvalues - c.eigenvalues)
    top = eig.real.max(axis=1)
    omega = tuple(float(w) for w in top) if np.all(top < 0) else None
    return GeneratorTuple(
        tuple(c.similarity @ np.diag(row) @ c.inverse for row in eig),
        max(A.bound_m, B.bound_m), omega, Construction(c.similarity, c.inverse, eig),
        A.certified and B.certified, f'{A.label}->{B.label}@{t:g}')


def expm_complex(A, z) -> np.ndarray:
    """exp(zA) for complex z, or a stack of them for an array of z."""
    A = as_matrix(A)
    z = np.asarray(z, dtype=complex)
    result = scipy.linalg.expm(z[..., None, None] * A)
    if not np.all(np.isfinite(result)):
        raise ExpmOverflowError("exp(zA) overflowed")
    return result


@dataclass(frozen=True)
class IdealNorm:
    """
    A symmetric norm from the Schatten family.

    kind is one of 'operator', 'trace', 'frobenius', 'schatten' (with p >= 1).
    """
    kind: str
    p: Optional[float] = None

    def __post_init__(self):
        if self.kind not in NORM_KINDS:
            raise ValueError(f"Unknown norm {self.kind!r}. Valid norms: {', '.join(NORM_KINDS)}")
        if self.kind == 'schatten' and (self.p is None or self.p < 1):
            raise ValueError(f"Schatten norms need p >= 1, got {self.p}")

    @property
    def label(self) -> str:
        return f'schatten:{self.p:g}' if self.kind == 'schatten' else self.kind

    @classmethod
    def parse(cls, text: str) -> 'IdealNorm':
        """'operator', 'trace', 'frobenius' or 'schatten:<p>'."""
        text = text.strip().lower()
        if text.startswith('schatten'):
            _, _, p = text.partition(':')
            try:
                return cls('schatten', float(p))
            except ValueError:
                raise ValueError(f"Malformed Schatten norm {text!r} (expected schatten:<p>)")
        return cls(text)

    def __call__(self, S) -> float:
        return ideal_norm(S, self)


NORM_KINDS = ('operator', 'trace', 'frobenius', 'schatten')


def ideal_norm(S, J: IdealNorm) -> float:
    """Norm of S in the ideal J, from the singular values of S."""
    sv = scipy.linalg.svdvals(np.asarray(S))
    if sv.size == 0:
        return 0.0
    if J.kind == 'operator':
        return float(sv[0])
    if J.kind == 'trace':
        return float(sv.sum())
    if J.kind == 'frobenius':
        return float(np.sqrt(np.sum(sv ** 2)))
    if np.isinf(J.p):
        return float(sv[0])
    top = sv[0]
    if top == 0.0:
        return 0.0
    return float(top * np.sum((sv / top) ** J.p) ** (1.0 / J.p))


OPERATOR = IdealNorm('operator')
TRACE = IdealNorm('trace')
FROBENIUS = IdealNorm('frobenius')


@dataclass(frozen=True, eq=False)
class HermitianPerturbation:
    """A self-adjoint H generating the unitary group V_H(s) = exp(isH)."""
    H: np.ndarray
    _spectral: tuple = field(init=False, repr=False)

    def __post_init__(self):
        H = as_matrix(self.H)
        if np.max(np.abs(H - H.conj().T), initial=0.0) > 1e-12:
            raise ValueError("H must equal its conjugate transpose within 1e-12")
        H = 0.5 * (H + H.conj().T)
        object.__setattr__(self, 'H', H)
        object.__setattr__(self, '_spectral', scipy.linalg.eigh(H))

    @property
    def d(self) -> int:
        return self.H.shape[0]

    def unitary(self, s: float) -> np.ndarray:
        w, V = self._spectral
        return (V * np.exp(1j * s * w)) @ V.conj().T

    @classmethod
    def random(cls, d: int, seed: int, scale: float = 1.0) -> 'HermitianPerturbation':
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        H = 0.5 * (X + X.conj().T)
        return cls(scale * H / operator_norm(H))


def unitary_at(H: HermitianPerturbation, s: float) -> np.ndarray:
    """V_H(s) = exp(isH); defined for every real s."""
    return H.unitary(s)
