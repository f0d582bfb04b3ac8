import numpy as np
import pytest

from steklov_lab.modules.errors import ArgumentError
from steklov_lab.modules.fields import (
    combine_fields,
    combine_scalar_fields,
    field_from_dict,
    field_library,
    matrix_field,
    scalar_field,
)

FIELDS = [
    ("rotation", {"omega": 0.7, "center": [0.1, -0.2]}),
    ("dilation", {"factor": 1.3}),
    ("radial_bump", {"k": 2, "profile": "quadratic", "r_start": 0.5, "r_full": 1.0}),
    ("radial_bump", {"k": 3, "trig": "sin", "profile": "smoothstep", "r_start": 0.5, "r_full": 1.0}),
    ("axis_field", {"component": 1, "k": 1, "profile": "smoothstep", "r_start": 1.0, "r_full": 0.5}),
    ("axis_field", {"component": 0, "harmonic": "x", "k": 2, "period": 2.0,
                    "windows": [{"kind": "interval", "axis": 1, "lo0": 0.1, "lo1": 0.3, "hi1": 0.6, "hi0": 0.8}]}),
    ("interior_bump", {"center": [0.7, 0.1], "radius": 0.2, "component": 1}),
]


def annulus_points(rng, n=200):
    r = rng.uniform(0.55, 0.95, n)
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


@pytest.mark.parametrize("family,params", FIELDS)
def test_jacobian_matches_finite_differences(family, params, rng):
    psi = field_library(family, params)
    x = annulus_points(rng)
    h = 1e-5
    jac = psi.jacobian(x)
    for k in range(2):
        step = np.zeros(2)
        step[k] = h
        fd = (psi.value(x + step) - psi.value(x - step)) / (2.0 * h)
        assert np.allclose(jac[:, :, k], fd, atol=1e-5)


def test_constant_and_rotation():
    x = np.array([[0.3, 0.4], [1.0, -2.0]])
    assert np.allclose(field_library("constant", {"vector": [1.0, 2.0]}).value(x), [[1.0, 2.0], [1.0, 2.0]])
    assert np.all(field_library("constant").jacobian(x) == 0.0)
    rotation = field_library("rotation", {"omega": 2.0})
    assert np.allclose(rotation.value(x), [[-0.8, 0.6], [4.0, 2.0]])
    assert np.all(rotation.divergence(x) == 0.0)


def test_quadratic_profile_vanishes_with_jacobian_at_start_circle():
    psi = field_library("radial_bump", {"k": 2, "profile": "quadratic", "r_start": 0.5, "r_full": 1.0})
    theta = np.linspace(0.0, 2.0 * np.pi, 40)
    circle = 0.5 * np.column_stack([np.cos(theta), np.sin(theta)])
    assert np.allclose(psi.value(circle), 0.0, atol=1e-12)
    assert np.allclose(psi.jacobian(circle), 0.0, atol=1e-12)
    outer = 2.0 * circle
    assert np.allclose(np.einsum("nd,nd->n", psi.value(outer), outer), np.cos(2.0 * theta))


def test_interior_bump_support():
    psi = field_library("interior_bump", {"center": [0.5, 0.5], "radius": 0.2})
    assert psi.support == "interior"
    far = np.array([[0.5, 0.75], [0.2, 0.5]])
    assert np.all(psi.value(far) == 0.0)
    assert np.all(psi.jacobian(far) == 0.0)
    assert psi.value([[0.5, 0.5]])[0, 0] == pytest.approx(1.0)


def test_scaled_and_combined_fields_are_linear(rng):
    x = annulus_points(rng, 50)
    a = field_library(*FIELDS[2])
    b = field_library(*FIELDS[4])
    mix = combine_fields([a, b], [2.0, -0.5])
    assert np.allclose(mix.value(x), 2.0 * a.value(x) - 0.5 * b.value(x))
    assert np.allclose(mix.jacobian(x), 2.0 * a.jacobian(x) - 0.5 * b.jacobian(x))
    assert np.allclose(mix.scaled(3.0).value(x), 3.0 * mix.value(x))


def test_field_rebuilds_from_its_parameters(rng):
    x = annulus_points(rng, 20)
    mix = combine_fields([field_library(*FIELDS[2]), field_library(*FIELDS[6])], [1.0, 0.2]).scaled(0.1)
    rebuilt = field_from_dict(mix.to_dict())
    assert np.array_equal(rebuilt.value(x), mix.value(x))


def test_unknown_families():
    with pytest.raises(ArgumentError):
        field_library("swirl")
    with pytest.raises(ArgumentError):
        scalar_field("noise")
    with pytest.raises(ArgumentError):
        matrix_field("random")
    with pytest.raises(ArgumentError):
        field_library("axis_field", {"component": 2})
    with pytest.raises(ArgumentError):
        field_library("radial_bump", {"profile": "smoothstep", "r_start": 1.0, "r_full": 1.0})


def test_scalar_fields(rng):
    x = annulus_points(rng, 30)
    theta = np.arctan2(x[:, 1], x[:, 0])
    b = scalar_field("angular_harmonic", {"k": 2, "offset": 1.0, "amplitude": 0.5})
    assert np.allclose(b(x), 1.0 + 0.5 * np.cos(2.0 * theta))
    c = combine_scalar_fields([b, scalar_field("constant", {"value": 2.0})], [1.0, -1.0])
    assert np.allclose(c(x), b(x) - 2.0)
    assert np.allclose(b.scaled(2.0)(x), 2.0 * b(x))


def test_matrix_fields_are_symmetric(rng):
    x = annulus_points(rng, 30)
    for family in ("scaled_identity", "harmonic_identity", "harmonic_shear", "harmonic_diagonal"):
        value = matrix_field(family, {"k": 2, "offset": 1.0})(x)
        assert np.allclose(value, np.swapaxes(value, 1, 2))
    h = 1e-6
    field = matrix_field("harmonic_shear", {"k": 3, "amplitude": 0.4})
    grad = field.gradient(x)
    fd = (field(x + [h, 0.0]) - field(x - [h, 0.0])) / (2.0 * h)
    assert np.allclose(grad[..., 0], fd, atol=1e-6)
