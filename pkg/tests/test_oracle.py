import ast
import inspect

import numpy as np
import pytest
from scipy.special import iv, ivp, kv, kvp

import steklov_lab.modules.oracle as oracle
from steklov_lab.modules.errors import ArgumentError, NotApplicableError
from steklov_lab.modules.forms import ProblemSpec, assemble_problem
from steklov_lab.modules.geometry import build_annulus
from steklov_lab.modules.oracle import (
    annulus_modes,
    annulus_modes_p1,
    annulus_modes_p2,
    annulus_splitting_factors,
    monotone_onset,
    oracle_table,
    radial_integrals,
    sorted_eigenvalues,
)
from steklov_lab.modules.spectrum import solve_eigen

R0, R1 = 0.5, 1.0


@pytest.fixture(scope="module")
def p1_modes():
    return annulus_modes_p1(R0, R1, 12)


@pytest.fixture(scope="module")
def p2_modes():
    return annulus_modes_p2(R0, R1, 6)


def test_p1_closed_form(p1_modes):
    expected = [1.0 + 1.0 / (2.0 + np.log(2.0)), 1.0 + 11.0 / 13.0, 2.855422, 3.933775]
    assert [m.eigenvalue for m in p1_modes[:4]] == pytest.approx(expected, rel=1e-6)
    assert [m.multiplicity for m in p1_modes[:3]] == [1, 2, 2]
    assert max(m.residual for m in p1_modes) <= 1e-10
    assert not any(m.flagged for m in p1_modes)


def test_p2_matches_modified_bessel_functions(p2_modes):
    for mode in p2_modes:
        k = mode.k

        def u(r, d=0):
            if d:
                return kvp(k, R0) * ivp(k, r) - ivp(k, R0) * kvp(k, r)
            return kvp(k, R0) * iv(k, r) - ivp(k, R0) * kv(k, r)

        assert mode.eigenvalue == pytest.approx(u(R1, 1) / u(R1), rel=1e-8)
        assert mode.residual <= 1e-10


@pytest.mark.parametrize("variant", ["P1", "P2"])
def test_rayleigh_quotient_recovers_the_eigenvalue(variant):
    for mode in annulus_modes(variant, R0, R1, 4):
        assert radial_integrals(mode)["rayleigh"] == pytest.approx(mode.eigenvalue, rel=1e-8)


def test_eigenvalues_increase_with_the_harmonic(p1_modes, p2_modes):
    for modes in (p1_modes, p2_modes):
        assert np.all(np.diff([m.eigenvalue for m in modes]) > 0.0)
        assert monotone_onset(modes) == 0
    # the inner coefficient decays like r0**(2k)
    assert p1_modes[12].eigenvalue == pytest.approx(13.0, abs=1e-5)


def test_sorted_eigenvalues(p1_modes):
    values = sorted_eigenvalues(p1_modes, 5)
    assert values[1] == values[2]
    assert values[3] == values[4]
    assert np.all(np.diff(values) >= 0.0)
    with pytest.raises(ArgumentError):
        sorted_eigenvalues(p1_modes[:1], 2)


def test_variant_dispatch():
    assert [m.eigenvalue for m in annulus_modes("P3a", R0, R1, 2)] == [
        m.eigenvalue for m in annulus_modes_p1(R0, R1, 2)
    ]
    with pytest.raises(ArgumentError):
        annulus_modes("P7", R0, R1, 2)
    with pytest.raises(ArgumentError):
        annulus_modes_p1(1.0, 0.5, 2)
    with pytest.raises(ArgumentError):
        annulus_modes_p2(R0, R1, -1)


def test_splitting_factors(p1_modes):
    pair = p1_modes[1]
    resonant = annulus_splitting_factors(pair, 2)
    assert resonant.factors == pytest.approx((np.pi / 2.0, -np.pi / 2.0))
    assert resonant.splits
    rotated = annulus_splitting_factors(pair, 2, "sin")
    assert rotated.factors == pytest.approx((np.pi / 2.0, -np.pi / 2.0))
    for harmonic in (0, 1, 3):
        assert not annulus_splitting_factors(pair, harmonic).splits
    assert annulus_splitting_factors(p1_modes[2], 4).splits
    assert resonant.radial["rayleigh"] == pytest.approx(pair.eigenvalue, rel=1e-8)


def test_splitting_factor_arguments(p1_modes):
    with pytest.raises(NotApplicableError):
        annulus_splitting_factors(p1_modes[0], 2)
    with pytest.raises(ArgumentError):
        annulus_splitting_factors(p1_modes[1], -2)
    with pytest.raises(ArgumentError):
        annulus_splitting_factors(p1_modes[1], 2, "tan")


def test_oracle_table(p1_modes):
    rows = oracle_table(p1_modes[:3])
    assert [r["k"] for r in rows] == [0, 1, 2]
    assert [r["multiplicity"] for r in rows] == [1, 2, 2]
    assert set(rows[0]) == {"variant", "k", "lambda", "multiplicity", "flagged"}


def test_oracle_is_independent_of_the_solver():
    tree = ast.parse(inspect.getsource(oracle))
    imported = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom):
            imported.add(node.module or "")
        elif isinstance(node, ast.Import):
            imported.update(alias.name for alias in node.names)
    assert not any(name.endswith(("forms", "spectrum", "geometry")) for name in imported)


def fem_errors(variant, n_radial, n_angular, exact):
    mesh = build_annulus(R0, R1, n_radial, n_angular)
    sol = solve_eigen(assemble_problem(mesh, ProblemSpec(variant)), len(exact))
    return np.abs(sol.eigenvalues - exact) / exact


@pytest.mark.slow
@pytest.mark.parametrize("variant", ["P1", "P2"])
def test_fem_converges_to_the_oracle(variant):
    exact = sorted_eigenvalues(annulus_modes(variant, R0, R1, 8), 8)
    coarse = fem_errors(variant, 16, 128, exact)
    assert coarse.max() < 0.01
    fine = fem_errors(variant, 32, 256, exact)
    order = np.log2(coarse / fine)
    assert np.all(order >= 1.8)
