import numpy as np
import pytest

from steklov_lab.modules.errors import ArgumentError, RankError
from steklov_lab.modules.forms import AssembledPair, assemble_problem
from steklov_lab.modules.geometry import relabel_vertices
from steklov_lab.modules.spectrum import (
    cluster_eigen,
    cluster_values,
    minmax_check,
    multiplicity_profile,
    rayleigh_quotient,
    relative_gaps,
    solve_eigen,
)


def test_eigenvectors_are_orthonormal(annulus_solution):
    pair = annulus_solution.pair
    x = annulus_solution.vectors
    assert np.allclose(x.T @ (pair.left @ x), np.eye(x.shape[1]), atol=1e-8)
    assert np.allclose(x.T @ (pair.right @ x), np.diag(annulus_solution.reciprocals), atol=1e-8)


def test_eigenvalues_ascend_and_satisfy_the_pencil(annulus_solution):
    values = annulus_solution.eigenvalues
    assert np.all(np.diff(values) >= 0.0)
    pair = annulus_solution.pair
    x = annulus_solution.vectors
    residual = pair.left @ x - (pair.right @ x) * values
    assert np.abs(residual).max() < 1e-8 * values.max()


def test_annulus_multiplicities(annulus_groups):
    assert multiplicity_profile(annulus_groups)[:4] == [1, 2, 2, 2]


def test_sign_convention(annulus_solution):
    x = annulus_solution.vectors
    pivots = np.argmax(np.abs(x), axis=0)
    assert np.all(x[pivots, np.arange(x.shape[1])] > 0)


def test_relabelling_does_not_change_the_spectrum(annulus, p1, annulus_solution, rng):
    relabelled = relabel_vertices(annulus, rng.permutation(annulus.n_vertices))
    sol = solve_eigen(assemble_problem(relabelled, p1), 8)
    assert np.allclose(sol.eigenvalues, annulus_solution.eigenvalues, rtol=1e-10, atol=0.0)


def test_rank_error(annulus, p1):
    pair = assemble_problem(annulus, p1)
    with pytest.raises(RankError) as info:
        solve_eigen(pair, pair.rank + 1)
    assert info.value.rank == pair.rank
    assert 0 < info.value.retained <= pair.rank


def test_zero_eigenpairs(annulus, p1):
    sol = solve_eigen(assemble_problem(annulus, p1), 0)
    assert sol.count == 0
    assert cluster_eigen(sol) == []
    with pytest.raises(ArgumentError):
        solve_eigen(assemble_problem(annulus, p1), -1)


def test_pencil_with_equal_matrices(triangle_mesh, p1):
    pair = assemble_problem(triangle_mesh, p1)
    same = AssembledPair(pair.left, pair.left, triangle_mesh, p1)
    sol = solve_eigen(same, 3)
    assert np.allclose(sol.eigenvalues, 1.0)


def test_cluster_values():
    groups = cluster_values([1.0, 1.0 + 1e-10, 2.0, 3.0, 3.0])
    assert [g.members for g in groups] == [(0, 1), (2,), (3, 4)]
    assert groups[0].value == pytest.approx(1.0)
    assert [g.members for g in cluster_values([5.0, 6.0], offset=3)] == [(3,), (4,)]
    assert cluster_values([]) == []
    with pytest.raises(ArgumentError):
        cluster_values([1.0], rel_tol=0.0)


def test_relative_gaps():
    assert np.allclose(relative_gaps([1.0, 2.0, 4.0]), [0.5, 0.5])
    assert len(relative_gaps([1.0])) == 0


def test_rayleigh_quotient(annulus_solution):
    pair = annulus_solution.pair
    for j in range(3):
        assert rayleigh_quotient(pair, annulus_solution.vectors[:, j]) == pytest.approx(
            annulus_solution.reciprocals[j], rel=1e-10
        )
    with pytest.raises(ArgumentError):
        rayleigh_quotient(pair, np.zeros(pair.left.shape[0]))


def test_minmax_sampling_passes(annulus_solution):
    report = minmax_check(annulus_solution.pair, annulus_solution, trials=200, seed=7)
    assert report.passed
    assert len(report.rows) == 3
    for row in report.rows:
        assert row["max_observed"] <= row["mu"] + 1e-10
        assert row["eigenvector_value"] == pytest.approx(row["mu"], rel=1e-10)
