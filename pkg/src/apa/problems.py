"""Benchmark problems: contractive linear fixed-point maps and a toy restricted SCF.

The toy SCF works on real symmetric density matrices ``D`` (d x d) flattened
row-major into vectors of length ``n = d*d``.  The fixed-point map is the Aufbau
step applied to the Fock matrix ``F(D) = Hcore + G(D)`` and the error map is the
S-weighted commutator ``F(D) D S - S D F(D)`` (also flattened, so ``p = d*d``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class WellPosednessError(RuntimeError):
    """The N-th and (N+1)-th orbital energies are (numerically) degenerate."""


# -- linear problems ------------------------------------------------------


class LinearProblem:
    """``g(x) = (I - beta A) x + beta b`` with error ``f = g - id = beta (b - A x)``."""

    def __init__(self, A, b, beta, name="linear", check=False):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        self.beta = float(beta)
        self.name = name
        self.n = self.p = self.A.shape[0]
        self.M = np.eye(self.n) - self.beta * self.A
        if check and self.spectral_radius() >= 1.0:
            raise ValueError(f"{name}: iteration matrix has spectral radius {self.spectral_radius():.4f} >= 1")

    def g(self, x):
        return self.M @ x + self.beta * self.b

    def f(self, x):
        return self.g(x) - x

    def h(self, x):
        return self.b - self.A @ x

    def contraction(self):
        """``||I - beta A||_2``."""
        return float(np.linalg.norm(self.M, 2))

    def spectral_radius(self):
        return float(np.max(np.abs(np.linalg.eigvals(self.M))))

    def solution(self):
        return np.linalg.solve(self.A, self.b)


def make_linear_suite(seed, n, conditioning=10.0):
    """Seeded pair ``[spd, nonsymmetric]`` of contractive linear problems.

    * ``spd``: ``A = U diag(lam) U^T`` with eigenvalues log-spaced in
      ``[1, conditioning]`` and the optimal Richardson step ``beta = 2/(lam_min + lam_max)``.
    * ``nonsymmetric``: ``A = I - M`` with a random ``M`` rescaled to
      ``||M||_2 = 1 - 1/conditioning`` and ``beta = 1``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if conditioning < 1.0:
        raise ValueError("conditioning must be >= 1")
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = np.logspace(0.0, np.log10(conditioning), n) if n > 1 else np.array([1.0])
    A_spd = (U * lam) @ U.T
    A_spd = 0.5 * (A_spd + A_spd.T)
    b1 = rng.standard_normal(n)
    beta = 2.0 / (lam.min() + lam.max())
    if conditioning == 1.0:
        beta = 0.5  # optimal step would solve the problem in one iteration
    spd = LinearProblem(A_spd, b1, beta, name="spd", check=True)

    M = rng.standard_normal((n, n))
    M *= (1.0 - 1.0 / max(conditioning, 2.0)) / np.linalg.norm(M, 2)
    b2 = rng.standard_normal(n)
    nonsym = LinearProblem(np.eye(n) - M, b2, 1.0, name="nonsymmetric", check=True)
    return [spd, nonsym]


# -- toy SCF --------------------------------------------------------------


@dataclass
class DensityState:
    D: np.ndarray
    S: np.ndarray
    N: int

    @property
    def d(self):
        return self.D.shape[0]

    def idempotency_defect(self):
        return float(np.linalg.norm(self.D @ self.S @ self.D - self.D))

    def trace_defect(self):
        return float(abs(np.trace(self.S @ self.D) - self.N))

    def symmetry_defect(self):
        return float(np.linalg.norm(self.D - self.D.T))


def _canonical_index(d):
    # map every (mu, nu, lam, sig) to the representative of its 8-element symmetry orbit
    idx = np.indices((d, d, d, d)).reshape(4, -1)
    a, b, c, e = idx
    p1, p2 = np.minimum(a, b), np.maximum(a, b)
    q1, q2 = np.minimum(c, e), np.maximum(c, e)
    first = p1 * d + p2
    second = q1 * d + q2
    swap = first > second
    r0 = np.where(swap, q1, p1)
    r1 = np.where(swap, q2, p2)
    r2 = np.where(swap, p1, q1)
    r3 = np.where(swap, p2, q2)
    return np.ravel_multi_index((r0, r1, r2, r3), (d, d, d, d))


def symmetrize_eri(T):
    """Force exact 8-fold permutational symmetry by copying orbit representatives."""
    d = T.shape[0]
    return T.reshape(-1)[_canonical_index(d)].reshape(d, d, d, d)


class ToySCFProblem:
    """Restricted closed-shell SCF with synthetic integrals.

    ``G(D)_{mn} = sum_{ls} (2 T_{mnls} - T_{mlns}) D_{ls}``.
    """

    def __init__(self, Hcore, T, S, N, name="toy_scf"):
        self.Hcore = np.asarray(Hcore, dtype=float)
        self.T = np.asarray(T, dtype=float)
        self.S = np.asarray(S, dtype=float)
        self.N = int(N)
        self.d = self.Hcore.shape[0]
        self.n = self.p = self.d * self.d
        self.name = name
        d = self.d
        J = self.T.reshape(d * d, d * d)
        K = self.T.transpose(0, 2, 1, 3).reshape(d * d, d * d)
        self._G = 2.0 * J - K

    # matrix-level maps
    def fock(self, D):
        F = self.Hcore + (self._G @ D.reshape(-1)).reshape(self.d, self.d)
        return 0.5 * (F + F.T)

    def aufbau_matrix(self, F):
        eps, V = scipy.linalg.eigh(F, self.S)
        N = self.N
        if N < self.d and eps[N] - eps[N - 1] <= 1e-12:
            raise WellPosednessError(
                f"no gap between orbital energies {N} and {N + 1}: {eps[N - 1]!r}, {eps[N]!r}"
            )
        C = V[:, :N]
        D = C @ C.T
        return 0.5 * (D + D.T)

    def commutator(self, D):
        F = self.fock(D)
        return F @ D @ self.S - self.S @ D @ F

    # vector-level maps consumed by the driver
    def g(self, x):
        D = x.reshape(self.d, self.d)
        return self.aufbau_matrix(self.fock(D)).reshape(-1)

    def f(self, x):
        return self.commutator(x.reshape(self.d, self.d)).reshape(-1)

    def manifold_check(self, x):
        st = self.state(x)
        return max(st.idempotency_defect(), st.trace_defect())

    def state(self, x):
        return DensityState(np.asarray(x, dtype=float).reshape(self.d, self.d), self.S, self.N)

    def core_guess(self):
        """Aufbau applied to the core Hamiltonian, flattened."""
        return self.aufbau_matrix(self.Hcore).reshape(-1)

    def initial_guess(self, warm_steps=0):
        """Core-Hamiltonian guess followed by ``warm_steps`` plain Roothaan steps."""
        x = self.core_guess()
        for _ in range(warm_steps):
            x = self.g(x)
        return x


def aufbau(problem: ToySCFProblem, state: DensityState) -> DensityState:
    """Density built from the ``N`` lowest S-orthonormal eigenvectors of ``F(D)``."""
    return DensityState(problem.aufbau_matrix(problem.fock(state.D)), problem.S, problem.N)


def commutator_error(problem: ToySCFProblem, state: DensityState):
    """``vec(F(D) D S - S D F(D))`` in row-major order."""
    return problem.commutator(state.D).reshape(-1)


def make_toy_scf(seed, d, N, difficulty, overlap="gram", rank=None):
    """Deterministic synthetic SCF instance.

    ``Hcore`` has a dominant increasing diagonal (unit orbital spacing) plus small
    symmetric noise; ``T = difficulty * sum_a L_a (x) L_a`` over random symmetric
    factors ``L_a``, so the two-electron tensor is positive semidefinite as a
    pair matrix and has the 8-fold index symmetry.  ``overlap`` is ``"identity"``
    or ``"gram"`` (a seeded, well-conditioned SPD matrix).
    """
    if not 1 <= N < d <= 12:
        raise ValueError(f"need 1 <= N < d <= 12, got N={N}, d={d}")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((d, d))
    Hcore = np.diag(np.arange(d, dtype=float) - N) + 0.1 * (noise + noise.T) / 2.0
    rank = d if rank is None else rank
    L = rng.standard_normal((rank, d, d))
    L = 0.5 * (L + L.transpose(0, 2, 1)) / np.sqrt(d * rank)
    T = difficulty * np.einsum("aij,akl->ijkl", L, L)
    T = symmetrize_eri(T)
    if overlap == "identity":
        S = np.eye(d)
    elif overlap == "gram":
        B = np.eye(d) + 0.1 * rng.standard_normal((d, d)) / np.sqrt(d)
        S = B.T @ B
        S = 0.5 * (S + S.T)
    else:
        raise ValueError(f"unknown overlap {overlap!r}")
    return ToySCFProblem(Hcore, T, S, N, name=f"toy_scf_s{seed}_d{d}_N{N}")
