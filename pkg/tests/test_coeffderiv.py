import numpy as np
import pytest

from steklov_lab.modules.coeffderiv import (
    CoefficientPerturbation,
    aniso_matrix,
    coeff_fd_check,
    coefficient_matrix,
    combine_perturbations,
    make_coefficient_candidates,
    perturbation_from_dict,
    pot_down_matrix,
    pot_up_matrix,
)
from steklov_lab.modules.errors import ArgumentError, CoercivityError
from steklov_lab.modules.fields import matrix_field, scalar_field
from steklov_lab.modules.forms import assemble_problem
from steklov_lab.modules.spectrum import cluster_eigen, solve_eigen


def boundary(field, region="all"):
    return CoefficientPerturbation("boundary_potential", field, region)


COS2 = scalar_field("angular_harmonic", {"k": 2})


def test_steklov_indicator_gives_a_multiple_of_identity(annulus_solution, annulus_groups):
    b = boundary(scalar_field("constant", {"value": 1.0}), "S")
    for group in annulus_groups:
        matrix = pot_down_matrix(annulus_solution, group, b).matrix
        expected = -group.reciprocal**2 * np.eye(group.multiplicity)
        assert np.allclose(matrix, expected, rtol=0.0, atol=1e-12)


@pytest.fixture(scope="module")
def p2_solution(annulus, p2):
    return solve_eigen(assemble_problem(annulus, p2), 6)


LINEARITY_CASES = {
    "boundary_potential": (
        boundary(COS2),
        boundary(scalar_field("angular_harmonic", {"k": 1, "trig": "sin"})),
    ),
    "volume_potential": (
        CoefficientPerturbation("volume_potential", COS2),
        CoefficientPerturbation("volume_potential", scalar_field("angular_harmonic", {"k": 1, "trig": "sin"})),
    ),
    "matrix_field": (
        CoefficientPerturbation("matrix_field", matrix_field("harmonic_diagonal", {"k": 0})),
        CoefficientPerturbation("matrix_field", matrix_field("harmonic_shear", {"k": 2, "offset": 0.5})),
    ),
}


@pytest.mark.parametrize("kind", sorted(LINEARITY_CASES))
def test_matrices_are_linear_in_the_perturbation(kind, annulus_solution, p2_solution, first_pair):
    a, b = LINEARITY_CASES[kind]
    sol = p2_solution if kind == "volume_potential" else annulus_solution
    group = cluster_eigen(sol)[1] if kind == "volume_potential" else first_pair
    assert group.multiplicity == 2
    ma = coefficient_matrix(sol, group, a).matrix
    mb = coefficient_matrix(sol, group, b).matrix
    scale = max(np.abs(ma).max(), np.abs(mb).max())
    assert np.allclose(coefficient_matrix(sol, group, a.scaled(2.5)).matrix, 2.5 * ma,
                       rtol=0.0, atol=1e-12 * scale)
    mixed = combine_perturbations([a, b], [0.3, -1.2])
    assert np.allclose(coefficient_matrix(sol, group, mixed).matrix, 0.3 * ma - 1.2 * mb,
                       rtol=0.0, atol=1e-12 * scale)


@pytest.mark.parametrize("kind", ["boundary_potential", "matrix_field"])
def test_zero_perturbation_has_zero_slopes(kind, annulus, p1, annulus_solution, first_pair):
    if kind == "matrix_field":
        zero = CoefficientPerturbation(kind, matrix_field("scaled_identity", {"value": 0.0}))
    else:
        zero = boundary(scalar_field("constant", {"value": 0.0}))
    assert np.abs(coefficient_matrix(annulus_solution, first_pair, zero).matrix).max() == 0.0
    report = coeff_fd_check(p1, annulus, zero, first_pair, steps=(1e-2,), sol=annulus_solution)
    assert np.allclose(report.slopes(1e-2), 0.0, atol=1e-9)


def test_cos2_potential_splits_the_first_pair(annulus, p1, annulus_solution, first_pair):
    b = boundary(COS2)
    matrix = pot_down_matrix(annulus_solution, first_pair, b)
    assert matrix.splits()
    report = coeff_fd_check(p1, annulus, b, first_pair, steps=(1e-2, 5e-3), sol=annulus_solution)
    assert not report.flagged
    assert report.max_rel_err(5e-3) < 0.05


def test_constant_potential_does_not_split(annulus_solution, first_pair):
    matrix = pot_down_matrix(annulus_solution, first_pair, boundary(scalar_field("constant")))
    assert not matrix.splits()


def test_anisotropic_perturbation(annulus, p1, annulus_solution, first_pair):
    shear = CoefficientPerturbation("matrix_field", matrix_field("harmonic_diagonal", {"k": 0}))
    matrix = aniso_matrix(annulus_solution, first_pair, shear)
    assert matrix.splits()
    report = coeff_fd_check(p1, annulus, shear, first_pair, steps=(1e-2, 5e-3), sol=annulus_solution)
    assert report.max_rel_err(5e-3) < 0.05


def test_volume_potential_needs_volume_variant(annulus, p2, annulus_solution, first_pair):
    volume = CoefficientPerturbation("volume_potential", COS2)
    with pytest.raises(ArgumentError):
        pot_up_matrix(annulus_solution, first_pair, volume)
    sol = solve_eigen(assemble_problem(annulus, p2), 6)
    group = cluster_eigen(sol)[1]
    assert pot_up_matrix(sol, group, volume).matrix.shape == (2, 2)
    with pytest.raises(ArgumentError):
        pot_down_matrix(sol, group, boundary(COS2))


def test_coercivity_loss_reports_the_step(annulus, p1, annulus_solution, first_pair):
    b = boundary(scalar_field("constant", {"value": -1.0}))
    with pytest.raises(CoercivityError) as info:
        coeff_fd_check(p1, annulus, b, first_pair, steps=(2.0,), sol=annulus_solution)
    assert info.value.step == 2.0


def test_perturbation_validation():
    with pytest.raises(ArgumentError):
        CoefficientPerturbation("temperature", COS2)
    with pytest.raises(ArgumentError):
        CoefficientPerturbation("volume_potential", COS2, "S")
    with pytest.raises(ArgumentError):
        combine_perturbations([boundary(COS2), boundary(COS2, "S")], [1.0, 1.0])


def test_perturbation_rebuilds_from_dict(annulus):
    b = boundary(COS2.scaled(0.3), "W")
    rebuilt = perturbation_from_dict(b.to_dict())
    assert rebuilt.region == "W"
    assert rebuilt.sup_norm(annulus) == pytest.approx(b.sup_norm(annulus))
    assert b.sup_norm(annulus) == pytest.approx(0.3, rel=1e-6)


def test_candidates(annulus, rectangle):
    candidates = make_coefficient_candidates(annulus, "boundary_potential", 5, "S")
    assert len(candidates) == 5
    assert all(c.region == "S" for c in candidates)
    assert candidates[0].field.family == "constant"
    assert len(make_coefficient_candidates(rectangle, "matrix_field", 7)) == 7
    assert make_coefficient_candidates(rectangle, "volume_potential", 0) == []
    with pytest.raises(ArgumentError):
        make_coefficient_candidates(annulus, "boundary_potential", -1)
