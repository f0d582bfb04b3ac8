"""
P1 assembly of the stiffness, boundary-mass and volume-mass matrices and of
the eigenvalue pencil (A_h, B_h) for each problem variant.

Coefficients are sampled at quadrature points of the reference positions of
the mesh, so they travel with a deformation.
"""
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

import steklov_lab.views.settings as settings
from .errors import ArgumentError, CoercivityError
from .quadrature import edge_rule, triangle_rule

logger = logging.getLogger(__name__)

PERTURBATION_KINDS = ("boundary_potential", "volume_potential", "matrix_field")


class Variant(str, Enum):
    P1 = "P1"
    P2 = "P2"
    P3A = "P3a"
    P3B = "P3b"
    P4A = "P4a"
    P4B = "P4b"

    @property
    def boundary_type(self):
        """True when the left form carries the boundary mass (P1-type)."""
        return self in (Variant.P1, Variant.P3A, Variant.P4A)

    @property
    def needs_potential(self):
        return self in (Variant.P3A, Variant.P3B)

    @property
    def needs_conductivity(self):
        return self in (Variant.P4A, Variant.P4B)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Problem variant, coefficients and quadrature.

    Args:
        variant: one of the ``Variant`` members (or its value).
        potential: scalar field a(x) for P3a/P3b.
        conductivity: matrix field A(x) for P4a/P4b.
        quad_order: triangle rule order.
        boundary_points: Gauss points per boundary edge.
        perturbations: accumulated ``(scale, CoefficientPerturbation)`` pairs
            added to the base coefficients.
    """
    variant: Variant
    potential: object = None
    conductivity: object = None
    quad_order: int = settings.VOLUME_QUAD_ORDER
    boundary_points: int = settings.BOUNDARY_QUAD_POINTS
    perturbations: tuple = field(default_factory=tuple)

    def __post_init__(self):
        try:
            variant = Variant(self.variant)
        except ValueError:
            raise ArgumentError(
                f"unknown variant {self.variant!r}; expected one of {[v.value for v in Variant]}"
            ) from None
        object.__setattr__(self, "variant", variant)
        if variant.needs_potential != (self.potential is not None):
            raise ArgumentError(f"variant {variant.value} potential mismatch")
        if variant.needs_conductivity != (self.conductivity is not None):
            raise ArgumentError(f"variant {variant.value} conductivity mismatch")
        for _, pert in self.perturbations:
            self._check_kind(pert.kind)

    def _check_kind(self, kind):
        if kind not in PERTURBATION_KINDS:
            raise ArgumentError(f"unknown perturbation kind {kind!r}")
        if kind == "boundary_potential" and not self.variant.boundary_type:
            raise ArgumentError(f"boundary potentials need a P1-type variant, got {self.variant.value}")
        if kind == "volume_potential" and self.variant.boundary_type:
            raise ArgumentError(f"volume potentials need a P2-type variant, got {self.variant.value}")

    @property
    def boundary_type(self):
        return self.variant.boundary_type

    def with_perturbation(self, perturbation, scale=1.0):
        self._check_kind(perturbation.kind)
        return replace(self, perturbations=self.perturbations + ((float(scale), perturbation),))

    def describe(self):
        return {
            "variant": self.variant.value,
            "potential": None if self.potential is None else self.potential.to_dict(),
            "conductivity": None if self.conductivity is None else self.conductivity.to_dict(),
            "quad_order": self.quad_order,
            "boundary_points": self.boundary_points,
            "perturbations": [
                {"scale": s, **p.to_dict()} for s, p in self.perturbations
            ],
        }


@dataclass(frozen=True, eq=False)
class AssembledPair:
    """Left matrix A_h (SPD) and right matrix B_h (S-boundary mass)."""
    left: sp.csr_matrix
    right: sp.csr_matrix
    mesh: object
    spec: ProblemSpec

    @cached_property
    def steklov_vertices(self):
        """Vertices carrying a nonzero row of B_h."""
        return np.flatnonzero(np.asarray(abs(self.right).sum(axis=1)).ravel() > 0)

    @property
    def rank(self):
        return len(self.steklov_vertices)


# --- sampling ---

def sample_scalar(weight, points):
    """Evaluate a weight on points of any leading shape.

    ``weight`` may be None (one), a number, a callable, or an array already
    sampled at ``points``.
    """
    shape = points.shape[:-1]
    if weight is None:
        return np.ones(shape)
    if np.isscalar(weight):
        return np.full(shape, float(weight))
    if isinstance(weight, np.ndarray):
        if weight.shape != shape:
            raise ArgumentError(f"sampled weight has shape {weight.shape}, expected {shape}")
        return weight
    return np.asarray(weight(points.reshape(-1, 2)), dtype=float).reshape(shape)


def sample_matrix(coeff, points):
    shape = points.shape[:-1]
    if coeff is None:
        return np.broadcast_to(np.eye(2), shape + (2, 2)).copy()
    if isinstance(coeff, np.ndarray):
        if coeff.shape != shape + (2, 2):
            raise ArgumentError(f"sampled coefficient has shape {coeff.shape}, expected {shape + (2, 2)}")
        return coeff
    values = np.asarray(coeff(points.reshape(-1, 2)), dtype=float)
    return values.reshape(shape + (2, 2))


def _check_positive(values, points, label):
    floor = settings.COERCIVITY_FLOOR
    if values.size and values.min() < floor:
        idx = np.unravel_index(np.argmin(values), values.shape)
        point = points[idx]
        raise CoercivityError(
            f"{label} is {values[idx]:.3e} at quadrature point ({point[0]:.6g}, {point[1]:.6g})",
            point=tuple(float(c) for c in point),
            value=float(values[idx]),
        )


def check_coefficient_matrix(tensors, points, label="matrix coefficient"):
    sym = 0.5 * (tensors + np.swapaxes(tensors, -1, -2))
    if not np.allclose(tensors, sym, rtol=0.0, atol=1e-12 * max(1.0, np.abs(tensors).max())):
        raise ArgumentError(f"{label} is not symmetric")
    _check_positive(np.linalg.eigvalsh(sym)[..., 0], points, f"smallest eigenvalue of {label}")


def boundary_weights(mesh, spec):
    """Total boundary-mass weight at the Gauss points of every boundary edge, (e, g)."""
    rule = edge_rule(spec.boundary_points)
    points = mesh.edge_points(rule.points, reference=True)
    weights = sample_scalar(spec.potential, points)
    for scale, pert in spec.perturbations:
        if pert.kind == "boundary_potential":
            mask = mesh.region_mask(pert.region)
            weights = weights + scale * sample_scalar(pert.field, points) * mask[:, None]
    return weights, points


def volume_weights(mesh, spec):
    """Total volume-mass weight at triangle quadrature points, (m, q)."""
    rule = triangle_rule(spec.quad_order)
    points = mesh.triangle_points(rule.barycentric, reference=True)
    weights = sample_scalar(spec.potential, points)
    for scale, pert in spec.perturbations:
        if pert.kind == "volume_potential":
            weights = weights + scale * sample_scalar(pert.field, points)
    return weights, points


def conductivity_tensors(mesh, spec):
    """Total matrix coefficient at triangle quadrature points, (m, q, 2, 2)."""
    rule = triangle_rule(spec.quad_order)
    points = mesh.triangle_points(rule.barycentric, reference=True)
    tensors = sample_matrix(spec.conductivity, points)
    for scale, pert in spec.perturbations:
        if pert.kind == "matrix_field":
            tensors = tensors + scale * sample_matrix(pert.field, points)
    return tensors, points


# --- element kernels ---

def scatter(n, connectivity, blocks):
    """Sum element blocks into an n x n CSR matrix."""
    k = connectivity.shape[1]
    rows = np.repeat(connectivity, k, axis=1).ravel()
    cols = np.tile(connectivity, (1, k)).ravel()
    return sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def stiffness_from_tensors(mesh, tensors):
    """Assemble sum_e area_e * grad(phi)^T D_e grad(phi) for per-element tensors D_e."""
    grads = mesh.gradients
    blocks = np.einsum("mid,mde,mje->mij", grads, tensors, grads) * mesh.areas[:, None, None]
    return scatter(mesh.n_vertices, mesh.triangles, blocks)


def boundary_blocks(mesh, mask, values, n_points, length_factor=None):
    """Edge mass blocks L * sum_g w_g c_g phi_a phi_b over the selected edges."""
    rule = edge_rule(n_points)
    basis = np.column_stack([1.0 - rule.points, rule.points])
    lengths = mesh.edge_lengths[mask]
    if length_factor is not None:
        values = values * length_factor
    blocks = np.einsum("g,eg,gi,gj->eij", rule.weights, values, basis, basis)
    return scatter(mesh.n_vertices, mesh.boundary_edges[mask], blocks * lengths[:, None, None])


def volume_blocks(mesh, values, quad_order):
    rule = triangle_rule(quad_order)
    lam = rule.barycentric
    blocks = np.einsum("q,mq,qi,qj->mij", rule.weights, values, lam, lam)
    return scatter(mesh.n_vertices, mesh.triangles, blocks * mesh.areas[:, None, None])


# --- public assemblers ---

def assemble_stiffness(mesh, coeff=None, quad_order=None, check=True):
    """Stiffness matrix with an optional matrix coefficient.

    Raises:
        CoercivityError: a coefficient sample is not positive definite
            (only when ``check`` is True).
    """
    order = settings.VOLUME_QUAD_ORDER if quad_order is None else quad_order
    rule = triangle_rule(order)
    points = mesh.triangle_points(rule.barycentric, reference=True)
    tensors = sample_matrix(coeff, points)
    if check and coeff is not None:
        check_coefficient_matrix(tensors, points)
    averaged = np.einsum("q,mqij->mij", rule.weights, tensors)
    return stiffness_from_tensors(mesh, averaged)


def assemble_boundary_mass(mesh, region="all", weight=None, n_points=None):
    n_points = settings.BOUNDARY_QUAD_POINTS if n_points is None else n_points
    mask = mesh.region_mask(region)
    rule = edge_rule(n_points)
    points = mesh.edge_points(rule.points, reference=True, mask=mask)
    values = sample_scalar(weight, points)
    return boundary_blocks(mesh, mask, values, n_points)


def assemble_volume_mass(mesh, weight=None, quad_order=None):
    order = settings.VOLUME_QUAD_ORDER if quad_order is None else quad_order
    rule = triangle_rule(order)
    points = mesh.triangle_points(rule.barycentric, reference=True)
    return volume_blocks(mesh, sample_scalar(weight, points), order)


def check_positive_definite(matrix, label="left matrix"):
    """Factor a sparse symmetric matrix without pivoting and require positive pivots."""
    if matrix.shape[0] == 0:
        return None
    try:
        lu = splu(
            sp.csc_matrix(matrix),
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
    except RuntimeError as exc:
        raise CoercivityError(f"{label} is singular: {exc}") from exc
    pivots = lu.U.diagonal()
    if np.any(pivots <= 0.0):
        raise CoercivityError(
            f"{label} is not positive definite (smallest pivot {pivots.min():.3e})",
            value=float(pivots.min()),
        )
    return lu


def assemble_problem(mesh, spec):
    """Assemble (A_h, B_h) for ``spec`` on ``mesh``."""
    tensors, points = conductivity_tensors(mesh, spec)
    if spec.conductivity is not None or any(p.kind == "matrix_field" for _, p in spec.perturbations):
        check_coefficient_matrix(tensors, points, "conductivity")
    rule = triangle_rule(spec.quad_order)
    stiffness = stiffness_from_tensors(mesh, np.einsum("q,mqij->mij", rule.weights, tensors))

    if spec.boundary_type:
        weights, points = boundary_weights(mesh, spec)
        _check_positive(weights, points, "boundary potential")
        mass = boundary_blocks(mesh, mesh.region_mask("all"), weights, spec.boundary_points)
    else:
        weights, points = volume_weights(mesh, spec)
        _check_positive(weights, points, "volume potential")
        mass = volume_blocks(mesh, weights, spec.quad_order)

    left = (stiffness + mass).tocsr()
    right = assemble_boundary_mass(mesh, "S", n_points=spec.boundary_points)
    check_positive_definite(left)
    logger.debug(
        "assembled %s on %d vertices (%d nonzeros)", spec.variant.value, mesh.n_vertices, left.nnz
    )
    return AssembledPair(left, right, mesh, spec)
