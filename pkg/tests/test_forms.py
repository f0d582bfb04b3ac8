import numpy as np
import pytest

from steklov_lab.modules.errors import ArgumentError, CoercivityError
from steklov_lab.modules.fields import matrix_field, scalar_field
from steklov_lab.modules.forms import (
    ProblemSpec,
    Variant,
    assemble_boundary_mass,
    assemble_problem,
    assemble_stiffness,
    assemble_volume_mass,
)
from steklov_lab.modules.geometry import build_rectangle


@pytest.fixture(scope="module")
def square():
    return build_rectangle(1.0, 1.0, 1, 1, "top")


def test_unit_square_stiffness(square):
    a = assemble_stiffness(square).toarray()
    assert np.allclose(np.diag(a), [1.0, 1.0, 1.0, 1.0])
    assert np.allclose(a.sum(axis=1), 0.0, atol=1e-14)
    assert np.allclose(a, a.T)


def test_scaled_identity_coefficient_scales_stiffness(annulus):
    plain = assemble_stiffness(annulus)
    scaled = assemble_stiffness(annulus, matrix_field("scaled_identity", {"value": 3.0}))
    assert np.allclose(scaled.toarray(), 3.0 * plain.toarray())


def test_stiffness_annihilates_constants(annulus):
    a = assemble_stiffness(annulus)
    assert np.abs(a @ np.ones(annulus.n_vertices)).max() < 1e-12


def test_single_edge_boundary_mass(square):
    b = assemble_boundary_mass(square, "S").toarray()
    # top edge joins vertices 3 -> 2
    assert b[3, 3] == pytest.approx(1.0 / 3.0)
    assert b[2, 2] == pytest.approx(1.0 / 3.0)
    assert b[2, 3] == pytest.approx(1.0 / 6.0)
    assert np.count_nonzero(b) == 4


def test_boundary_mass_totals(annulus):
    total = assemble_boundary_mass(annulus).sum()
    assert total == pytest.approx(annulus.edge_lengths.sum(), rel=1e-12)
    s_total = assemble_boundary_mass(annulus, "S").sum()
    assert s_total == pytest.approx(annulus.edge_lengths[annulus.edge_tags == "S"].sum(), rel=1e-12)


def test_boundary_mass_is_linear_in_weight(annulus):
    b1 = scalar_field("angular_harmonic", {"k": 2})
    b2 = scalar_field("constant", {"value": 0.4})
    both = assemble_boundary_mass(annulus, "all", lambda x: 2.0 * b1(x) - b2(x)).toarray()
    parts = 2.0 * assemble_boundary_mass(annulus, "all", b1).toarray() - assemble_boundary_mass(annulus, "all", b2).toarray()
    assert np.allclose(both, parts, atol=1e-14)
    assert np.all(assemble_boundary_mass(annulus, "all", 0.0).toarray() == 0.0)


def test_volume_mass_on_one_triangle(triangle_mesh):
    m = assemble_volume_mass(triangle_mesh).toarray()
    expected = (0.5 / 12.0) * np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]])
    assert np.allclose(m, expected, atol=1e-15)


def test_volume_mass_total_is_area(annulus):
    assert assemble_volume_mass(annulus).sum() == pytest.approx(annulus.areas.sum(), rel=1e-12)


def test_right_matrix_lives_on_steklov_vertices(annulus, p1):
    pair = assemble_problem(annulus, p1)
    s_vertices = np.unique(annulus.boundary_edges[annulus.edge_tags == "S"])
    assert np.array_equal(pair.steklov_vertices, s_vertices)
    eigenvalues = np.linalg.eigvalsh(pair.right.toarray())
    assert eigenvalues.min() > -1e-14


def test_unit_potential_matches_plain_variants(annulus):
    one = scalar_field("constant", {"value": 1.0})
    identity = matrix_field("scaled_identity", {"value": 1.0})
    base = assemble_problem(annulus, ProblemSpec("P1"))
    for spec in (ProblemSpec("P3a", potential=one), ProblemSpec("P4a", conductivity=identity)):
        pair = assemble_problem(annulus, spec)
        assert np.allclose(pair.left.toarray(), base.left.toarray(), atol=1e-14)
        assert np.allclose(pair.right.toarray(), base.right.toarray(), atol=1e-14)
    p2 = assemble_problem(annulus, ProblemSpec("P2"))
    p3b = assemble_problem(annulus, ProblemSpec("P3b", potential=one))
    assert np.allclose(p2.left.toarray(), p3b.left.toarray(), atol=1e-14)


def test_indefinite_conductivity_is_rejected(annulus):
    saddle = matrix_field("harmonic_diagonal", {"k": 0})
    with pytest.raises(CoercivityError) as info:
        assemble_stiffness(annulus, saddle)
    assert info.value.point is not None
    with pytest.raises(CoercivityError):
        assemble_problem(annulus, ProblemSpec("P4b", conductivity=saddle))


def test_negative_potential_is_rejected(annulus):
    with pytest.raises(CoercivityError):
        assemble_problem(annulus, ProblemSpec("P3a", potential=scalar_field("constant", {"value": -1.0})))


def test_problem_spec_validation():
    with pytest.raises(ArgumentError):
        ProblemSpec("P5")
    with pytest.raises(ArgumentError):
        ProblemSpec("P3a")
    with pytest.raises(ArgumentError):
        ProblemSpec("P1", potential=scalar_field("constant"))
    assert ProblemSpec("P4b", conductivity=matrix_field("scaled_identity")).variant is Variant.P4B
    assert ProblemSpec("P2").describe()["variant"] == "P2"
