"""
Generalized symmetric eigensolver for the pencil A x = lambda B x.

B is supported on the S-boundary vertices only, so the interior block of A is
eliminated first (static condensation). The remaining Schur complement is
small and dense: it is Cholesky-factored and the reduced matrix
C = L^-1 B_SS L^-T is diagonalised. Its eigenvalues are mu = 1 / lambda.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, cholesky, eigh, solve_triangular

import steklov_lab.views.settings as settings
from .errors import ArgumentError, CoercivityError, RankError
from .forms import check_positive_definite

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EigenSolution:
    """Ascending finite eigenvalues with a-orthonormal eigenvectors (columns)."""
    eigenvalues: np.ndarray
    vectors: np.ndarray
    pair: object
    discarded: int
    rank: int

    @property
    def reciprocals(self):
        return 1.0 / self.eigenvalues

    @property
    def count(self):
        return len(self.eigenvalues)

    def group_vectors(self, group):
        members = np.asarray(group.members)
        if len(members) and (members.min() < 0 or members.max() >= self.count):
            raise ArgumentError(
                f"group members {list(group.members)} outside the {self.count} computed eigenpairs"
            )
        return self.vectors[:, members]


@dataclass(frozen=True)
class EigenGroup:
    """Cluster of numerically equal eigenvalues."""
    members: tuple
    value: float
    tolerance: float

    @property
    def multiplicity(self):
        return len(self.members)

    @property
    def reciprocal(self):
        return 1.0 / self.value

    @property
    def first(self):
        return self.members[0]

    @property
    def last(self):
        return self.members[-1]


def _split_blocks(pair):
    n = pair.left.shape[0]
    s_idx = pair.steklov_vertices
    i_idx = np.setdiff1d(np.arange(n), s_idx)
    return s_idx, i_idx


def _schur_complement(left, s_idx, i_idx):
    """Return Sigma = A_SS - A_SI A_II^-1 A_IS and the coupling A_II^-1 A_IS."""
    a_ss = left[s_idx][:, s_idx].toarray()
    if len(i_idx) == 0:
        return a_ss, np.zeros((0, len(s_idx)))
    lu = check_positive_definite(left[i_idx][:, i_idx], "interior block of the left matrix")
    a_is = left[i_idx][:, s_idx].toarray()
    coupling = lu.solve(a_is)
    sigma = a_ss - a_is.T @ coupling
    return 0.5 * (sigma + sigma.T), coupling


def solve_eigen(pair, k=None):
    """Smallest ``k`` finite eigenvalues of ``pair`` with a-orthonormal eigenvectors.

    Raises:
        CoercivityError: the left matrix is not positive definite.
        RankError: fewer than ``k`` finite eigenvalues exist.
    """
    k = settings.DEFAULT_EIGEN_COUNT if k is None else int(k)
    if k < 0:
        raise ArgumentError(f"eigenpair count must be >= 0, got {k}")
    left = sp.csr_matrix(pair.left)
    right = sp.csr_matrix(pair.right)
    n = left.shape[0]
    s_idx, i_idx = _split_blocks(pair)

    sigma, coupling = _schur_complement(left, s_idx, i_idx)
    try:
        chol = cholesky(sigma, lower=True)
    except LinAlgError as exc:
        raise CoercivityError(f"Cholesky factorisation of the left matrix failed: {exc}") from exc

    b_ss = right[s_idx][:, s_idx].toarray()
    half = solve_triangular(chol, b_ss, lower=True)
    reduced = solve_triangular(chol, half.T, lower=True)
    reduced = 0.5 * (reduced + reduced.T)

    mu, y = eigh(reduced)
    order = np.argsort(-mu, kind="stable")
    mu, y = mu[order], y[:, order]
    cutoff = settings.EIGEN_CUTOFF * max(mu[0], 0.0) if len(mu) else 0.0
    kept = int(np.count_nonzero(mu > cutoff))
    if k > kept:
        raise RankError(
            f"requested {k} eigenpairs but only {kept} finite ones are retained (rank of B_h on S is {pair.rank})",
            rank=pair.rank,
            retained=kept,
        )

    mu, y = mu[:k], y[:, :k]
    x_s = solve_triangular(chol, y, lower=True, trans="T")
    vectors = np.zeros((n, k))
    vectors[s_idx] = x_s
    if len(i_idx):
        vectors[i_idx] = -coupling @ x_s

    # fix the sign so the largest entry of each vector is positive
    if k:
        pivots = np.argmax(np.abs(vectors), axis=0)
        signs = np.sign(vectors[pivots, np.arange(k)])
        vectors = vectors * np.where(signs == 0, 1.0, signs)

    eigenvalues = 1.0 / mu
    logger.debug(
        "solved %d x %d pencil: %d S vertices, %d finite modes kept, %d discarded",
        n, n, len(s_idx), kept, n - kept,
    )
    return EigenSolution(eigenvalues, vectors, pair, discarded=n - kept, rank=kept)


def cluster_values(values, rel_tol=None, offset=0):
    """Single-linkage clustering of sorted values on relative gaps."""
    rel_tol = settings.CLUSTER_TOL if rel_tol is None else rel_tol
    if rel_tol <= 0:
        raise ArgumentError(f"clustering tolerance must be positive, got {rel_tol}")
    values = np.asarray(values, dtype=float)
    groups = []
    if len(values) == 0:
        return groups
    current = [0]
    for i in range(1, len(values)):
        scale = max(abs(values[i]), abs(values[i - 1]), np.finfo(float).tiny)
        if (values[i] - values[i - 1]) / scale <= rel_tol:
            current.append(i)
        else:
            groups.append(current)
            current = [i]
    groups.append(current)
    return [
        EigenGroup(tuple(offset + i for i in g), float(np.mean(values[g])), float(rel_tol))
        for g in groups
    ]


def cluster_eigen(solution, rel_tol=None):
    return cluster_values(solution.eigenvalues, rel_tol)


def multiplicity_profile(groups):
    """Multiplicity of each group, in order."""
    return [g.multiplicity for g in groups]


def relative_gaps(values):
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return np.zeros(0)
    return np.diff(values) / np.maximum(np.abs(values[1:]), np.finfo(float).tiny)


def rayleigh_quotient(pair, phi):
    """phi^T B phi / phi^T A phi, the mu-value of ``phi``."""
    phi = np.asarray(phi, dtype=float)
    denom = phi @ (pair.left @ phi)
    if denom <= 0:
        raise ArgumentError("Rayleigh quotient of a zero vector")
    return float(phi @ (pair.right @ phi) / denom)


@dataclass
class MinmaxReport:
    rows: list
    seed: int
    violations: list

    @property
    def passed(self):
        return not self.violations


def minmax_check(pair, solution, trials=None, seed=0, depth=None):
    """Sample the max-min characterisation of mu_1 >= mu_2 >= ...

    At level t, random vectors A-orthogonal to the first t - 1 eigenvectors
    must have Rayleigh value at most mu_t (plus slack). Half the trials are
    plain random vectors, half are random mixtures of computed eigenvectors
    from level t on, which approach the bound.
    """
    trials = settings.MINMAX_TRIALS if trials is None else int(trials)
    depth = min(solution.count, 3) if depth is None else min(int(depth), solution.count)
    left, right = pair.left, pair.right
    x = solution.vectors
    mu = solution.reciprocals
    rng = np.random.default_rng(seed)
    rows, violations = [], []
    for level in range(1, depth + 1):
        n_mix = trials // 2
        phi = rng.standard_normal((left.shape[0], trials - n_mix))
        tail = x[:, level - 1:]
        mix = tail @ rng.standard_normal((tail.shape[1], n_mix)) + 1e-3 * rng.standard_normal(
            (left.shape[0], n_mix)
        )
        phi = np.hstack([phi, mix])
        head = x[:, : level - 1]
        if head.shape[1]:
            phi = phi - head @ (head.T @ (left @ phi))
        norms = np.sqrt(np.einsum("ij,ij->j", phi, left @ phi))
        phi = phi / norms
        values = np.einsum("ij,ij->j", phi, right @ phi)
        bound = mu[level - 1] + settings.MINMAX_SLACK
        exact = rayleigh_quotient(pair, x[:, level - 1])
        bad = np.flatnonzero(values > bound)
        for trial in bad:
            violations.append({"level": level, "trial": int(trial), "seed": seed, "value": float(values[trial])})
        rows.append(
            {
                "level": level,
                "mu": float(mu[level - 1]),
                "max_observed": float(values.max()),
                "eigenvector_value": exact,
                "violations": int(len(bad)),
            }
        )
    if violations:
        logger.warning("min-max check found %d violations (seed %d)", len(violations), seed)
    return MinmaxReport(rows, seed, violations)
