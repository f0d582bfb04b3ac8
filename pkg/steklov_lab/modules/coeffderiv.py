"""
Coefficient perturbations and their no-splitting matrices.

A perturbation adds t * b to a potential or t * B to the conductivity. The
group matrices below are exactly the derivative of the assembled pencil in
t, because b and B are sampled at the same quadrature points as the base
coefficients.
"""
import logging
from dataclasses import dataclass

import numpy as np

import steklov_lab.views.settings as settings
from .branches import branch_slopes, window_size
from .errors import ArgumentError, CoercivityError
from .fields import combine_matrix_fields, combine_scalar_fields, matrix_field, scalar_field
from .forms import assemble_boundary_mass, assemble_problem, assemble_stiffness, assemble_volume_mass
from .geometry import REGIONS, sample_points
from .shapederiv import PerturbationMatrix, check_group, group_matrix, splitting_directions
from .spectrum import solve_eigen

logger = logging.getLogger(__name__)

KINDS = ("boundary_potential", "volume_potential", "matrix_field")


@dataclass(frozen=True, eq=False)
class CoefficientPerturbation:
    """b (boundary or volume potential) or B (symmetric matrix field).

    ``region`` restricts a boundary potential to S or W.
    """
    kind: str
    field: object
    region: str = "all"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"perturbation kind must be one of {KINDS}, got {self.kind!r}")
        if self.region not in REGIONS:
            raise ArgumentError(f"region must be one of {REGIONS}, got {self.region!r}")
        if self.region != "all" and self.kind != "boundary_potential":
            raise ArgumentError("only boundary potentials can be restricted to a region")

    def scaled(self, factor):
        return CoefficientPerturbation(self.kind, self.field.scaled(factor), self.region)

    def sup_norm(self, mesh, n=None):
        """Sampled C0 norm for potentials, C1 norm for matrix fields."""
        x = sample_points(mesh, n)
        if self.kind == "matrix_field":
            values = self.field(x)
            sym = 0.5 * (values + np.swapaxes(values, 1, 2))
            if not np.allclose(values, sym, atol=1e-12 * max(1.0, np.abs(values).max())):
                raise ArgumentError("matrix field is not symmetric")
            grad = self.field.gradient(x)
            return float(
                np.abs(np.linalg.eigvalsh(sym)).max()
                + np.linalg.norm(grad.reshape(len(x), -1), axis=1).max()
            )
        return float(np.abs(self.field(x)).max())

    def to_dict(self):
        return {"kind": self.kind, "region": self.region, **self.field.to_dict()}


def perturbation_from_dict(doc):
    kind = doc["kind"]
    build = matrix_field if kind == "matrix_field" else scalar_field
    return CoefficientPerturbation(kind, build(doc["family"], doc.get("params", {})), doc.get("region", "all"))


def _require(pert, kind):
    if pert.kind != kind:
        raise ArgumentError(f"expected a {kind} perturbation, got {pert.kind}")


def pot_down_matrix(sol, group, b):
    """-mu * X^T (boundary mass weighted by b) X."""
    _require(b, "boundary_potential")
    check_group(sol, group)
    spec = sol.pair.spec
    if not spec.boundary_type:
        raise ArgumentError(f"boundary potentials need a P1-type solution, got {spec.variant.value}")
    mass = assemble_boundary_mass(sol.pair.mesh, b.region, b.field, spec.boundary_points)
    return PerturbationMatrix(group, -group.reciprocal * group_matrix(sol, group, mass), b)


def pot_up_matrix(sol, group, b):
    """-mu * X^T (volume mass weighted by b) X."""
    _require(b, "volume_potential")
    check_group(sol, group)
    spec = sol.pair.spec
    if spec.boundary_type:
        raise ArgumentError(f"volume potentials need a P2-type solution, got {spec.variant.value}")
    mass = assemble_volume_mass(sol.pair.mesh, b.field, spec.quad_order)
    return PerturbationMatrix(group, -group.reciprocal * group_matrix(sol, group, mass), b)


def aniso_matrix(sol, group, B):
    """-mu * X^T (stiffness with coefficient B) X."""
    _require(B, "matrix_field")
    check_group(sol, group)
    stiffness = assemble_stiffness(sol.pair.mesh, B.field, sol.pair.spec.quad_order, check=False)
    return PerturbationMatrix(group, -group.reciprocal * group_matrix(sol, group, stiffness), B)


_MATRICES = {
    "boundary_potential": pot_down_matrix,
    "volume_potential": pot_up_matrix,
    "matrix_field": aniso_matrix,
}


def coefficient_matrix(sol, group, pert):
    return _MATRICES[pert.kind](sol, group, pert)


def coeff_fd_check(spec, mesh, pert, group, steps=None, sol=None, disable=None):
    """Re-assemble with the coefficient shifted by +-t * pert and difference the branches.

    Raises:
        CoercivityError: the shifted coefficient loses positivity at some step.
    """
    steps = settings.FD_STEPS if steps is None else steps
    if sol is None:
        pair = assemble_problem(mesh, spec)
        sol = solve_eigen(pair, window_size(group, pair.rank))
    k = window_size(group, sol.rank)
    matrix = coefficient_matrix(sol, group, pert)
    predicted, directions = splitting_directions(sol, group, matrix)

    def solve_at(t):
        try:
            pair = assemble_problem(mesh, spec.with_perturbation(pert, t))
        except CoercivityError as exc:
            raise CoercivityError(
                f"coefficient loses coercivity at t={t:g}: {exc}", point=exc.point, value=exc.value, step=t
            ) from exc
        return solve_eigen(pair, k)

    report = branch_slopes(sol, group, predicted, directions, solve_at, steps, f"coeff {pert.kind}", disable)
    logger.info(
        "coefficient FD check (%s, group at %.6g): max rel err %.3g", pert.kind, group.value, report.max_rel_err()
    )
    return report


def make_coefficient_candidates(mesh, kind, count, region="all"):
    """Constant plus low angular and positional harmonics about the mesh centre."""
    if kind not in KINDS:
        raise ArgumentError(f"perturbation kind must be one of {KINDS}, got {kind!r}")
    if count < 0:
        raise ArgumentError("candidate count must be non-negative")
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    center = [float(c) for c in 0.5 * (lo + hi)]
    width = hi - lo

    candidates = []
    if kind == "matrix_field":
        candidates.append(matrix_field("scaled_identity", {"value": 1.0}))
        k = 1
        while len(candidates) < count:
            for family in ("harmonic_identity", "harmonic_diagonal", "harmonic_shear"):
                for trig in ("cos", "sin"):
                    candidates.append(matrix_field(family, {"k": k, "trig": trig, "center": center}))
            k += 1
    else:
        candidates.append(scalar_field("constant", {"value": 1.0}))
        k = 1
        while len(candidates) < count:
            for trig in ("cos", "sin"):
                candidates.append(scalar_field("angular_harmonic", {"k": k, "trig": trig, "center": center}))
            if mesh.family != "annulus":
                for axis in (0, 1):
                    candidates.append(
                        scalar_field(
                            "positional_harmonic",
                            {"axis": axis, "k": k, "period": float(2.0 * width[axis]), "origin": float(lo[axis])},
                        )
                    )
            k += 1
    region = region if kind == "boundary_potential" else "all"
    return [CoefficientPerturbation(kind, f, region) for f in candidates[:count]]


def combine_perturbations(perturbations, coefficients):
    """Linear combination of perturbations of one kind and region."""
    kinds = {(p.kind, p.region) for p in perturbations}
    if len(kinds) != 1:
        raise ArgumentError("only perturbations of the same kind and region can be combined")
    kind, region = kinds.pop()
    combine = combine_matrix_fields if kind == "matrix_field" else combine_scalar_fields
    return CoefficientPerturbation(kind, combine([p.field for p in perturbations], coefficients), region)
