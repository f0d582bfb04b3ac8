"""
Shape derivatives of the bilinear forms and the no-splitting matrix.

Every derivative is assembled in its volume form, which only needs first
derivatives of the P1 basis. Pullback assemblies evaluate the transformed
integrands on the fixed reference mesh; their central differences in t
converge to the derivative matrices, which is how the derivative assemblers
are checked.

Coefficients are transported with the domain (sampled at reference
positions), so they contribute no advective term to the derivatives.
"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from numpy.polynomial import polynomial as P
from scipy.sparse.linalg import norm as sparse_norm

import steklov_lab.views.settings as settings
from .branches import branch_slopes, window_size
from .errors import ArgumentError, DeformationError, NotApplicableError
from .forms import (
    assemble_problem,
    boundary_blocks,
    boundary_weights,
    conductivity_tensors,
    sample_matrix,
    sample_scalar,
    stiffness_from_tensors,
    volume_blocks,
    volume_weights,
)
from .geometry import deform
from .quadrature import edge_rule, triangle_rule
from .spectrum import solve_eigen

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DerivativeForms:
    """Derivative matrices of the four forms along one field."""
    stiffness: object
    boundary_all: object
    boundary_s: object
    volume: object
    psi: object

    def left(self, boundary_type):
        """Derivative of A_h for a P1-type (boundary mass) or P2-type variant."""
        mass = self.boundary_all if boundary_type else self.volume
        return (self.stiffness + mass).tocsr()


@dataclass(frozen=True, eq=False)
class PerturbationMatrix:
    """Group-restricted matrix M of the first-order change of mu."""
    group: object
    matrix: np.ndarray
    source: object = None

    @property
    def multiplicity(self):
        return self.matrix.shape[0]

    @property
    def norm(self):
        return float(np.linalg.norm(self.matrix))

    @property
    def rho(self):
        """Mean of the diagonal, the scalar of the best fit rho * I."""
        m = self.multiplicity
        return float(np.trace(self.matrix) / m) if m else 0.0

    @property
    def deviation(self):
        return nosplit_deviation(self.matrix)

    def splits(self, rel=None, abs_tol=None):
        rel = settings.DEVIATION_REL if rel is None else rel
        abs_tol = settings.DEVIATION_ABS if abs_tol is None else abs_tol
        return self.deviation > rel * self.norm + abs_tol


# --- quadrature data ---

def _volume_jacobians(mesh, psi, quad_order):
    rule = triangle_rule(quad_order)
    points = mesh.triangle_points(rule.barycentric)
    jac = psi.jacobian(points.reshape(-1, 2)).reshape(points.shape[:2] + (2, 2))
    ref_points = mesh.triangle_points(rule.barycentric, reference=True)
    return rule, jac, ref_points


def _edge_jacobians(mesh, psi, mask, n_points):
    rule = edge_rule(n_points)
    points = mesh.edge_points(rule.points, mask=mask)
    jac = psi.jacobian(points.reshape(-1, 2)).reshape(points.shape[:2] + (2, 2))
    ref_points = mesh.edge_points(rule.points, reference=True, mask=mask)
    return rule, jac, ref_points


def _orders(quad_order, n_points):
    order = settings.VOLUME_QUAD_ORDER if quad_order is None else quad_order
    points = settings.BOUNDARY_QUAD_POINTS if n_points is None else n_points
    return order, points


# --- derivative assemblers ---

def d_stiffness(mesh, psi, coeff=None, quad_order=None):
    """Derivative of the stiffness form: div(psi) A - G A - A G^T with G = grad psi."""
    order, _ = _orders(quad_order, None)
    rule, jac, ref_points = _volume_jacobians(mesh, psi, order)
    tensors = sample_matrix(coeff, ref_points)
    div = np.trace(jac, axis1=2, axis2=3)
    ga = np.einsum("mqik,mqkj->mqij", jac, tensors)
    integrand = div[..., None, None] * tensors - ga - np.swapaxes(ga, 2, 3)
    return stiffness_from_tensors(mesh, np.einsum("q,mqij->mij", rule.weights, integrand))


def pullback_stiffness(mesh, psi, t, coeff=None, quad_order=None):
    """Stiffness of the mesh deformed by t * psi, pulled back with F = I + t grad psi."""
    order, _ = _orders(quad_order, None)
    rule, jac, ref_points = _volume_jacobians(mesh, psi, order)
    tensors = sample_matrix(coeff, ref_points)
    f = np.eye(2) + t * jac
    det = f[..., 0, 0] * f[..., 1, 1] - f[..., 0, 1] * f[..., 1, 0]
    if np.any(det <= 0.0):
        worst = np.unravel_index(np.argmin(det), det.shape)
        raise DeformationError(
            f"det(I + t grad psi) = {det[worst]:.3e} at element {worst[0]} for t={t:g}",
            element=int(worst[0]),
            value=float(det[worst]),
        )
    inv = np.empty_like(f)
    inv[..., 0, 0] = f[..., 1, 1] / det
    inv[..., 0, 1] = -f[..., 0, 1] / det
    inv[..., 1, 0] = -f[..., 1, 0] / det
    inv[..., 1, 1] = f[..., 0, 0] / det
    pulled = np.einsum("mqik,mqkl,mqjl->mqij", inv, tensors, inv) * np.abs(det)[..., None, None]
    return stiffness_from_tensors(mesh, np.einsum("q,mqij->mij", rule.weights, pulled))


def d_boundary_mass(mesh, region, psi, weight=None, n_points=None):
    """Boundary-mass derivative with integrand weight * (div psi - nu^T grad(psi) nu)."""
    _, n_points = _orders(None, n_points)
    mask = mesh.region_mask(region)
    rule, jac, ref_points = _edge_jacobians(mesh, psi, mask, n_points)
    values = sample_scalar(weight, ref_points)
    nu = mesh.edge_normals[mask]
    div = np.trace(jac, axis1=2, axis2=3)
    normal_part = np.einsum("ei,egij,ej->eg", nu, jac, nu)
    return boundary_blocks(mesh, mask, values * (div - normal_part), n_points)


def pullback_boundary_mass(mesh, region, psi, t, weight=None, n_points=None):
    """Boundary mass with the pointwise edge stretch |(I + t grad psi) d| / |d|.

    For a field that is affine on each edge this equals the deformed-to-original
    length ratio of the edge; otherwise it is that ratio taken at each quadrature
    point, the same integrand whose t-derivative ``d_boundary_mass`` assembles.
    """
    _, n_points = _orders(None, n_points)
    mask = mesh.region_mask(region)
    rule, jac, ref_points = _edge_jacobians(mesh, psi, mask, n_points)
    values = sample_scalar(weight, ref_points)
    d = mesh.edge_vectors[mask]
    moved = d[:, None, :] + t * np.einsum("egij,ej->egi", jac, d)
    stretched = np.hypot(moved[..., 0], moved[..., 1])
    if np.any(stretched <= 0.0):
        worst = np.unravel_index(np.argmin(stretched), stretched.shape)
        raise DeformationError(
            f"boundary edge collapses under t={t:g}",
            element=int(np.flatnonzero(mask)[worst[0]]),
            value=float(stretched[worst]),
        )
    stretch = stretched / mesh.edge_lengths[mask][:, None]
    return boundary_blocks(mesh, mask, values * stretch, n_points)


def d_volume_mass(mesh, psi, weight=None, quad_order=None):
    order, _ = _orders(quad_order, None)
    rule, jac, ref_points = _volume_jacobians(mesh, psi, order)
    values = sample_scalar(weight, ref_points)
    return volume_blocks(mesh, values * np.trace(jac, axis1=2, axis2=3), order)


def pullback_volume_mass(mesh, psi, t, weight=None, quad_order=None):
    order, _ = _orders(quad_order, None)
    rule, jac, ref_points = _volume_jacobians(mesh, psi, order)
    values = sample_scalar(weight, ref_points)
    f = np.eye(2) + t * jac
    det = f[..., 0, 0] * f[..., 1, 1] - f[..., 0, 1] * f[..., 1, 0]
    if np.any(det <= 0.0):
        worst = np.unravel_index(np.argmin(det), det.shape)
        raise DeformationError(
            f"det(I + t grad psi) = {det[worst]:.3e} at element {worst[0]} for t={t:g}",
            element=int(worst[0]),
            value=float(det[worst]),
        )
    return volume_blocks(mesh, values * np.abs(det), order)


def derivative_forms(mesh, psi, spec=None):
    """All four derivative matrices, with the coefficients of ``spec`` when given."""
    if spec is None:
        return DerivativeForms(
            d_stiffness(mesh, psi),
            d_boundary_mass(mesh, "all", psi),
            d_boundary_mass(mesh, "S", psi),
            d_volume_mass(mesh, psi),
            psi,
        )
    tensors, _ = conductivity_tensors(mesh, spec)
    b_weight = boundary_weights(mesh, spec)[0] if spec.boundary_type else None
    v_weight = None if spec.boundary_type else volume_weights(mesh, spec)[0]
    return DerivativeForms(
        d_stiffness(mesh, psi, coeff=tensors, quad_order=spec.quad_order),
        d_boundary_mass(mesh, "all", psi, weight=b_weight, n_points=spec.boundary_points),
        d_boundary_mass(mesh, "S", psi, n_points=spec.boundary_points),
        d_volume_mass(mesh, psi, weight=v_weight, quad_order=spec.quad_order),
        psi,
    )


# --- no-splitting matrix ---

def check_group(sol, group):
    if group.multiplicity == 0:
        raise ArgumentError("empty eigenvalue group")
    if group.last >= sol.count:
        raise ArgumentError(
            f"group {list(group.members)} does not belong to a solution with {sol.count} eigenpairs"
        )
    values = sol.eigenvalues[list(group.members)]
    if not np.allclose(values.mean(), group.value, rtol=1e-12, atol=0.0):
        raise ArgumentError("group value does not match the solution eigenvalues")


def group_matrix(sol, group, matrix):
    """X_g^T matrix X_g, symmetrised."""
    x = sol.group_vectors(group)
    m = x.T @ (matrix @ x)
    return 0.5 * (m + m.T)


def perturbation_matrix(spec, sol, group, psi):
    """M = X^T (dB - mu dA) X over the group's eigenvectors."""
    check_group(sol, group)
    if sol.pair.spec.variant != spec.variant:
        raise ArgumentError(
            f"solution was computed for {sol.pair.spec.variant.value}, not {spec.variant.value}"
        )
    forms = derivative_forms(sol.pair.mesh, psi, spec)
    mu = group.reciprocal
    combined = forms.boundary_s - mu * forms.left(spec.boundary_type)
    return PerturbationMatrix(group, group_matrix(sol, group, combined), psi)


def nosplit_deviation(matrix):
    """Frobenius distance of M from (tr M / m) I."""
    m = matrix.matrix if isinstance(matrix, PerturbationMatrix) else np.asarray(matrix, dtype=float)
    if m.size == 0:
        return 0.0
    size = m.shape[0]
    return float(np.linalg.norm(m - np.trace(m) / size * np.eye(size)))


def splitting_directions(sol, group, matrix):
    """Predicted slopes d lambda (ascending) with the matching eigenvector directions."""
    m = matrix.matrix if isinstance(matrix, PerturbationMatrix) else np.asarray(matrix)
    dmu, basis = np.linalg.eigh(0.5 * (m + m.T))
    slopes = -group.value**2 * dmu
    order = np.argsort(slopes, kind="stable")
    directions = sol.group_vectors(group) @ basis[:, order]
    return slopes[order], directions


def predict_splitting(sol, group, matrix):
    """First-order slopes d lambda = -lambda^2 * eig(M), sorted."""
    return splitting_directions(sol, group, matrix)[0]


# --- checks ---

def fd_eigenvalue_check(spec, mesh, psi, group, steps=None, sol=None, norm_bound="default", disable=None):
    """Deform by +-t psi, re-solve and central-difference the group's branches."""
    steps = settings.FD_STEPS if steps is None else steps
    if sol is None:
        pair = assemble_problem(mesh, spec)
        sol = solve_eigen(pair, window_size(group, pair.rank))
    base = sol
    k = window_size(group, base.rank)
    matrix = perturbation_matrix(spec, base, group, psi)
    predicted, directions = splitting_directions(base, group, matrix)

    def solve_at(t):
        moved = deform(mesh, psi, t, norm_bound=norm_bound)
        return solve_eigen(assemble_problem(moved, spec), k)

    report = branch_slopes(base, group, predicted, directions, solve_at, steps, f"shape {psi.family}", disable)
    logger.info(
        "shape FD check (%s, group at %.6g): max rel err %.3g", psi.family, group.value, report.max_rel_err()
    )
    return report


FD_FORMS = ("stiffness", "boundary_all", "boundary_S", "boundary_W", "volume")


def _pullbacks(mesh, psi, spec):
    if spec is None:
        tensors = b_weight = v_weight = None
        order, points = _orders(None, None)
    else:
        tensors = conductivity_tensors(mesh, spec)[0]
        b_weight = boundary_weights(mesh, spec)[0]
        v_weight = volume_weights(mesh, spec)[0]
        order, points = spec.quad_order, spec.boundary_points

    def region_weight(region):
        if b_weight is None or region != "all":
            return None
        return b_weight

    return {
        "stiffness": (
            lambda t: pullback_stiffness(mesh, psi, t, coeff=tensors, quad_order=order),
            lambda: d_stiffness(mesh, psi, coeff=tensors, quad_order=order),
        ),
        **{
            f"boundary_{region}": (
                lambda t, r=region: pullback_boundary_mass(mesh, r, psi, t, region_weight(r), points),
                lambda r=region: d_boundary_mass(mesh, r, psi, region_weight(r), points),
            )
            for region in ("all", "S", "W")
        },
        "volume": (
            lambda t: pullback_volume_mass(mesh, psi, t, v_weight, order),
            lambda: d_volume_mass(mesh, psi, v_weight, order),
        ),
    }


def derivative_fd_table(mesh, psi, steps=None, spec=None):
    """Central differences of every pullback assembly against its derivative.

    Rows where the derivative and its finite differences are zero to
    round-off are marked ``exact``; otherwise ``residual`` is
    ||FD - D||_F / ||D||_F and ``order`` the observed convergence order.
    Rows whose difference is already below the cancellation noise of the
    central difference are marked ``roundoff`` and carry no order.
    """
    steps = [float(t) for t in (settings.FD_STEPS if steps is None else steps)]
    if not steps or min(steps) <= 0:
        raise ArgumentError("finite-difference steps must be positive")
    rows = []
    for name, (pull, derivative) in _pullbacks(mesh, psi, spec).items():
        d = derivative()
        scale = max(sparse_norm(pull(0.0)), 1.0)
        d_norm = sparse_norm(d)
        previous = None
        for t in steps:
            fd = (pull(t) - pull(-t)) / (2.0 * t)
            diff = sparse_norm(fd - d)
            exact = d_norm <= settings.ZERO_RESIDUAL_FLOOR * scale and diff <= settings.ZERO_RESIDUAL_FLOOR * scale
            noise = settings.ROUNDOFF_FACTOR * np.finfo(float).eps * scale / t
            roundoff = not exact and diff <= noise
            residual = diff / scale if exact else diff / d_norm
            order = np.nan
            if previous is not None and not exact and not roundoff and residual > 0 and previous[1] > 0:
                order = np.log(previous[1] / residual) / np.log(previous[0] / t)
            rows.append(
                {
                    "form": name,
                    "step": t,
                    "residual": float(residual),
                    "order": float(order),
                    "status": "exact" if exact else "roundoff" if roundoff else "ok",
                    "derivative_norm": float(d_norm),
                }
            )
            previous = None if exact or roundoff else (t, residual)
    table = pd.DataFrame(rows)
    for name, frame in table.groupby("form"):
        if frame["status"].isin(["exact", "roundoff"]).all():
            continue
        orders = frame["order"].dropna()
        if len(orders) and orders.min() < settings.ORDER_THRESHOLD:
            table.loc[frame.index, "status"] = "slow"
    if len(steps) == 1:
        table = table.drop(columns="order")
    return table


def w_obstruction_scan(spec, sol, group, mesh=None):
    """Per-W-edge values of grad_W e_r . grad_W e_s + e_r e_s for r != s.

    Exploratory output only; P2-type variants.
    """
    if spec.boundary_type:
        raise NotApplicableError("the W obstruction scan applies to P2-type variants only")
    check_group(sol, group)
    mesh = sol.pair.mesh if mesh is None else mesh
    mask = mesh.region_mask("W")
    edges = mesh.boundary_edges[mask]
    lengths = mesh.edge_lengths[mask]
    rule = edge_rule(spec.boundary_points)
    basis = np.column_stack([1.0 - rule.points, rule.points])
    x = sol.group_vectors(group)
    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])

    rows = []
    members = list(group.members)
    for a in range(len(members)):
        for b in range(a + 1, len(members)):
            er, es = x[:, a], x[:, b]
            tr = (er[edges[:, 1]] - er[edges[:, 0]]) / lengths
            ts = (es[edges[:, 1]] - es[edges[:, 0]]) / lengths
            vr = er[edges] @ basis.T
            vs = es[edges] @ basis.T
            residual = tr[:, None] * ts[:, None] + vr * vs
            mean = residual @ rule.weights
            for e in range(len(edges)):
                rows.append(
                    {
                        "r": members[a],
                        "s": members[b],
                        "edge": int(np.flatnonzero(mask)[e]),
                        "x": float(mid[e, 0]),
                        "y": float(mid[e, 1]),
                        "residual": float(mean[e]),
                    }
                )
    table = pd.DataFrame(rows, columns=["r", "s", "edge", "x", "y", "residual"])
    summary = {}
    if len(table):
        for (r, s), frame in table.groupby(["r", "s"]):
            l2 = float(np.sqrt(np.sum(frame["residual"].to_numpy() ** 2 * lengths)))
            summary[f"{r}-{s}"] = {"max_abs": float(frame["residual"].abs().max()), "l2": l2}
    return {"table": table, "summary": summary}


# --- integration-by-parts equivalence on one triangle ---

def _poly_grad(c):
    return P.polyder(c, axis=0), P.polyder(c, axis=1)


def _eval(c, pts):
    return P.polyval2d(pts[:, 0], pts[:, 1], c)


def ibp_equivalence_residual(u, v, psi, triangle=None, n_points=None):
    """Compare the volume form of the stiffness derivative with its integrated-by-parts form.

    ``u``, ``v`` and the two components of ``psi`` are 2D power-series
    coefficient arrays (``c[i, j]`` multiplies x**i y**j). The volume form is

        int div(psi) grad u . grad v - grad u^T (G + G^T) grad v dx,

    the other is the sum of the interior term

        int -psi_t d_t(grad u . grad v) + psi_i d_j(d_i u d_j v + d_j u d_i v) dx

    and the boundary term

        int_boundary psi.nu grad u . grad v - psi_i nu_j (d_i u d_j v + d_j u d_i v) ds.

    Both are integrated with Gauss rules exact for the polynomial degrees
    involved. Returns the two values and their relative difference.
    """
    n_points = settings.IBP_QUAD_POINTS if n_points is None else n_points
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]) if triangle is None else np.asarray(triangle, float)
    e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
    area = 0.5 * (e1[0] * e2[1] - e1[1] * e2[0])
    if area <= 0:
        raise ArgumentError("triangle must be counterclockwise with positive area")
    u, v = np.atleast_2d(u), np.atleast_2d(v)
    psi = [np.atleast_2d(p) for p in psi]

    du = _poly_grad(u)
    dv = _poly_grad(v)
    dpsi = [_poly_grad(p) for p in psi]
    ddu = [_poly_grad(g) for g in du]
    ddv = [_poly_grad(g) for g in dv]

    rule = triangle_rule(2 * n_points - 2)
    pts = rule.barycentric @ tri
    gu = np.column_stack([_eval(c, pts) for c in du])
    gv = np.column_stack([_eval(c, pts) for c in dv])
    hu = np.array([[_eval(ddu[i][j], pts) for j in range(2)] for i in range(2)])
    hv = np.array([[_eval(ddv[i][j], pts) for j in range(2)] for i in range(2)])
    ps = np.column_stack([_eval(p, pts) for p in psi])
    jac = np.array([[_eval(dpsi[i][j], pts) for j in range(2)] for i in range(2)])

    div = jac[0, 0] + jac[1, 1]
    dot = np.einsum("qi,qi->q", gu, gv)
    sym = np.einsum("ijq,qi,qj->q", jac + np.swapaxes(jac, 0, 1), gu, gv)
    volume_form = area * rule.weights @ (div * dot - sym)

    # d_t (grad u . grad v) and d_j (d_i u d_j v + d_j u d_i v)
    d_dot = np.einsum("ktq,qk->qt", hu, gv) + np.einsum("ktq,qk->qt", hv, gu)
    d_pair = np.zeros_like(gu)
    for i in range(2):
        for j in range(2):
            d_pair[:, i] += hu[i, j] * gv[:, j] + gu[:, i] * hv[j, j] + hu[j, j] * gv[:, i] + gu[:, j] * hv[i, j]
    interior = area * rule.weights @ (
        -np.einsum("qt,qt->q", ps, d_dot) + np.einsum("qi,qi->q", ps, d_pair)
    )

    edge = edge_rule(n_points)
    boundary = 0.0
    for a, b in ((0, 1), (1, 2), (2, 0)):
        d = tri[b] - tri[a]
        length = np.hypot(d[0], d[1])
        nu = np.array([d[1], -d[0]]) / length
        ep = tri[a][None] + edge.points[:, None] * d[None]
        egu = np.column_stack([_eval(c, ep) for c in du])
        egv = np.column_stack([_eval(c, ep) for c in dv])
        eps = np.column_stack([_eval(p, ep) for p in psi])
        edot = np.einsum("gi,gi->g", egu, egv)
        pair = np.einsum("gi,gj->gij", egu, egv)
        pair = pair + np.swapaxes(pair, 1, 2)
        integrand = (eps @ nu) * edot - np.einsum("gi,j,gij->g", eps, nu, pair)
        boundary += length * edge.weights @ integrand

    statement_form = interior + boundary
    scale = max(abs(volume_form), abs(statement_form), np.finfo(float).tiny)
    return {
        "volume_form": float(volume_form),
        "statement_form": float(statement_form),
        "interior": float(interior),
        "boundary": float(boundary),
        "residual": float(abs(volume_form - statement_form) / scale),
    }
