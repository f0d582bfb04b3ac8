"""
Triangular meshes with a tagged boundary partition.

A mesh stores its vertices, counterclockwise triangles and the oriented
boundary edges (domain on the left), each edge tagged ``S`` (Steklov part)
or ``W`` (Robin/Neumann part). Meshes are immutable; ``deform`` returns a new
one with the same connectivity.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from matplotlib.tri import Triangulation

import steklov_lab.views.settings as settings
from .errors import ArgumentError, DeformationError, PartitionError

logger = logging.getLogger(__name__)

TAGS = ("S", "W")
REGIONS = ("all", "S", "W")
RECTANGLE_SIDES = ("bottom", "right", "top", "left")


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable P1 mesh.

    Args:
        vertices: (n, 2) coordinates.
        triangles: (m, 3) vertex indices, counterclockwise.
        boundary_edges: (e, 2) oriented so that the domain lies on the left.
        edge_tags: (e,) ``"S"`` or ``"W"`` per boundary edge.
        family: name of the generator that built the mesh.
        params: generator parameters.
        reference_vertices: positions at which coefficients are sampled.
            Defaults to ``vertices``; carried unchanged through ``deform`` so
            coefficients move with the domain.
    """
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: np.ndarray
    family: str = "custom"
    params: dict = field(default_factory=dict)
    reference_vertices: np.ndarray = None

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=float).reshape(-1, 2)
        triangles = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        edges = np.array(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        tags = np.array(self.edge_tags, dtype="<U1").reshape(-1)
        reference = vertices if self.reference_vertices is None else np.array(
            self.reference_vertices, dtype=float
        ).reshape(-1, 2)
        for name, value in (
            ("vertices", vertices),
            ("triangles", triangles),
            ("boundary_edges", edges),
            ("edge_tags", tags),
            ("reference_vertices", reference),
        ):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "params", dict(self.params))
        self._validate()

    def _validate(self):
        n = len(self.vertices)
        if len(self.triangles) == 0:
            raise ArgumentError("mesh has no triangles")
        if self.reference_vertices.shape != self.vertices.shape:
            raise ArgumentError("reference_vertices must match vertices")
        if self.triangles.min() < 0 or self.triangles.max() >= n:
            raise ArgumentError("triangle index out of range")
        if len(self.edge_tags) != len(self.boundary_edges):
            raise ArgumentError("one tag per boundary edge is required")
        bad = set(np.unique(self.edge_tags)) - set(TAGS)
        if bad:
            raise PartitionError(f"unknown boundary tags {sorted(bad)}")
        if not np.any(self.edge_tags == "S") or not np.any(self.edge_tags == "W"):
            raise PartitionError("both S and W must contain at least one edge")

        areas = self.signed_areas
        if np.any(areas <= 0.0):
            worst = int(np.argmin(areas))
            raise ArgumentError(
                f"triangle {worst} has non-positive signed area {areas[worst]:.3e}"
            )

        # Half-edges seen once are boundary edges, with the domain on their left
        half = self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        keys = half[:, 0] * n + half[:, 1]
        reverse = half[:, 1] * n + half[:, 0]
        _, counts = np.unique(keys, return_counts=True)
        if np.any(counts > 1):
            raise ArgumentError("triangles are not consistently oriented")
        lone = keys[~np.isin(keys, reverse)]
        edge_keys = self.boundary_edges[:, 0] * n + self.boundary_edges[:, 1]
        if len(np.unique(edge_keys)) != len(edge_keys):
            raise ArgumentError("duplicate boundary edge")
        if not np.array_equal(np.sort(lone), np.sort(edge_keys)):
            raise ArgumentError(
                "boundary edges must be exactly the triangle edges with one "
                "neighbour, oriented with the domain on the left"
            )

        starts = np.bincount(self.boundary_edges[:, 0], minlength=n)
        ends = np.bincount(self.boundary_edges[:, 1], minlength=n)
        if not np.array_equal(starts, ends) or starts.max() > 1:
            raise ArgumentError("boundary edges do not form closed polylines")

    # --- geometry ---

    @property
    def n_vertices(self):
        return len(self.vertices)

    @cached_property
    def signed_areas(self):
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self):
        return self.signed_areas

    @cached_property
    def gradients(self):
        """Gradients of the three barycentric functions per triangle, (m, 3, 2)."""
        p = self.vertices[self.triangles]
        grads = np.empty_like(p)
        for i in range(3):
            e = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
            grads[:, i, 0] = -e[:, 1]
            grads[:, i, 1] = e[:, 0]
        return grads / (2.0 * self.signed_areas)[:, None, None]

    @cached_property
    def edge_vectors(self):
        return self.vertices[self.boundary_edges[:, 1]] - self.vertices[self.boundary_edges[:, 0]]

    @cached_property
    def edge_lengths(self):
        d = self.edge_vectors
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def edge_normals(self):
        """Outward unit normals; the domain lies to the left of each edge."""
        tangent = self.edge_vectors / self.edge_lengths[:, None]
        return np.column_stack([tangent[:, 1], -tangent[:, 0]])

    @cached_property
    def edge_triangles(self):
        """Index of the triangle owning each boundary edge."""
        n = self.n_vertices
        half = self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        keys = half[:, 0] * n + half[:, 1]
        order = np.argsort(keys)
        edge_keys = self.boundary_edges[:, 0] * n + self.boundary_edges[:, 1]
        pos = np.searchsorted(keys[order], edge_keys)
        return order[pos] // 3

    def region_mask(self, region):
        if region == "all":
            return np.ones(len(self.boundary_edges), dtype=bool)
        if region in TAGS:
            return self.edge_tags == region
        raise ArgumentError(f"region must be one of {REGIONS}, got {region!r}")

    def triangle_points(self, barycentric, reference=False):
        """Physical points of a barycentric rule on every triangle, (m, q, 2)."""
        coords = self.reference_vertices if reference else self.vertices
        return np.einsum("qk,mkd->mqd", barycentric, coords[self.triangles])

    def edge_points(self, positions, reference=False, mask=None):
        """Points at ``positions`` in [0, 1] along boundary edges, (e, g, 2)."""
        coords = self.reference_vertices if reference else self.vertices
        edges = self.boundary_edges if mask is None else self.boundary_edges[mask]
        a = coords[edges[:, 0]]
        b = coords[edges[:, 1]]
        s = np.asarray(positions)[None, :, None]
        return (1.0 - s) * a[:, None, :] + s * b[:, None, :]

    def with_vertices(self, vertices, **params):
        merged = dict(self.params)
        merged.update(params)
        return Mesh(
            vertices,
            self.triangles,
            self.boundary_edges,
            self.edge_tags,
            family=self.family,
            params=merged,
            reference_vertices=self.reference_vertices,
        )


@dataclass(frozen=True, eq=False)
class BoundaryPartition:
    """Indicator d of the Steklov part per boundary edge (1 on S, 0 on W)."""
    indicator: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.indicator, dtype=np.int8)
        if not np.all((d == 0) | (d == 1)):
            raise PartitionError("indicator values must be 0 or 1")
        if not (np.any(d == 1) and np.any(d == 0)):
            raise PartitionError("indicator must take both values")
        object.__setattr__(self, "indicator", d)


def boundary_partition(mesh):
    return BoundaryPartition((mesh.edge_tags == "S").astype(np.int8))


def interface_vertices(mesh):
    """Vertices shared by an S edge and a W edge."""
    s = np.unique(mesh.boundary_edges[mesh.edge_tags == "S"])
    w = np.unique(mesh.boundary_edges[mesh.edge_tags == "W"])
    return np.intersect1d(s, w)


# --- builders ---

def build_annulus(r_inner, r_outer, n_radial, n_angular, steklov="outer"):
    """Structured annulus, S on the outer circle and W on the inner one by default.

    Cells alternate their diagonal in a checkerboard pattern, which keeps the
    mesh symmetric under the reflection y -> -y when ``n_angular`` is even.
    """
    if not (0.0 < r_inner < r_outer):
        raise ArgumentError(f"need 0 < r_inner < r_outer, got {r_inner}, {r_outer}")
    if n_radial < 1 or n_angular < 8:
        raise ArgumentError("need n_radial >= 1 and n_angular >= 8")
    if steklov not in ("outer", "inner"):
        raise ArgumentError(f"steklov must be 'outer' or 'inner', got {steklov!r}")

    radii = np.linspace(r_inner, r_outer, n_radial + 1)
    theta = 2.0 * np.pi * np.arange(n_angular) / n_angular
    rr, tt = np.meshgrid(radii, theta, indexing="ij")
    vertices = np.column_stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()])

    def vid(i, j):
        return i * n_angular + (j % n_angular)

    triangles = []
    for i in range(n_radial):
        for j in range(n_angular):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if (i + j) % 2 == 0:
                triangles += [(a, b, c), (a, c, d)]
            else:
                triangles += [(a, b, d), (b, c, d)]

    j = np.arange(n_angular)
    outer = np.column_stack([vid(n_radial, j), vid(n_radial, j + 1)])
    inner = np.column_stack([vid(0, j + 1), vid(0, j)])
    outer_tag, inner_tag = ("S", "W") if steklov == "outer" else ("W", "S")
    tags = np.array([outer_tag] * n_angular + [inner_tag] * n_angular)

    return Mesh(
        vertices,
        np.array(triangles),
        np.vstack([outer, inner]),
        tags,
        family="annulus",
        params={
            "r_inner": float(r_inner),
            "r_outer": float(r_outer),
            "n_radial": int(n_radial),
            "n_angular": int(n_angular),
            "steklov": steklov,
        },
    )


def build_rectangle(width, height, nx, ny, tag_rule):
    """Structured rectangle [0, width] x [0, height].

    Args:
        tag_rule: either a collection of side names drawn from
            ``("bottom", "right", "top", "left")`` that form S, or a callable
            ``rule(midpoint, normal) -> bool`` returning True for S edges.
    """
    if width <= 0 or height <= 0:
        raise ArgumentError("rectangle dimensions must be positive")
    if nx < 1 or ny < 1:
        raise ArgumentError("need at least one cell in each direction")

    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    xx, yy = np.meshgrid(xs, ys)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    triangles = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            triangles += [(a, b, c), (a, c, d)]

    edges, sides = [], []
    for i in range(nx):
        edges.append((vid(i, 0), vid(i + 1, 0)))
        sides.append("bottom")
    for j in range(ny):
        edges.append((vid(nx, j), vid(nx, j + 1)))
        sides.append("right")
    for i in range(nx, 0, -1):
        edges.append((vid(i, ny), vid(i - 1, ny)))
        sides.append("top")
    for j in range(ny, 0, -1):
        edges.append((vid(0, j), vid(0, j - 1)))
        sides.append("left")
    edges = np.array(edges)
    sides = np.array(sides)

    if callable(tag_rule):
        a = vertices[edges[:, 0]]
        b = vertices[edges[:, 1]]
        mid = 0.5 * (a + b)
        d = b - a
        normal = np.column_stack([d[:, 1], -d[:, 0]]) / np.hypot(d[:, 0], d[:, 1])[:, None]
        is_s = np.array([bool(tag_rule(m, nrm)) for m, nrm in zip(mid, normal)])
        rule_param = "custom"
    else:
        chosen = [tag_rule] if isinstance(tag_rule, str) else list(tag_rule)
        unknown = set(chosen) - set(RECTANGLE_SIDES)
        if unknown:
            raise ArgumentError(f"unknown rectangle sides {sorted(unknown)}")
        is_s = np.isin(sides, chosen)
        rule_param = sorted(chosen)

    tags = np.where(is_s, "S", "W")
    return Mesh(
        vertices,
        np.array(triangles),
        edges,
        tags,
        family="rectangle",
        params={
            "width": float(width),
            "height": float(height),
            "nx": int(nx),
            "ny": int(ny),
            "steklov_sides": rule_param,
        },
    )


def relabel_vertices(mesh, permutation):
    """Return the same mesh with vertex ``i`` of the result being ``permutation[i]`` of the input."""
    perm = np.asarray(permutation, dtype=np.int64)
    if not np.array_equal(np.sort(perm), np.arange(mesh.n_vertices)):
        raise ArgumentError("permutation must be a rearrangement of all vertex indices")
    inverse = np.argsort(perm)
    return Mesh(
        mesh.vertices[perm],
        inverse[mesh.triangles],
        inverse[mesh.boundary_edges],
        mesh.edge_tags,
        family=mesh.family,
        params=mesh.params,
        reference_vertices=mesh.reference_vertices[perm],
    )


# --- deformation ---

def sample_points(mesh, n=None):
    """Bounding-box grid points that fall inside the mesh, plus all vertices."""
    n = settings.SAMPLE_GRID_SIZE if n is None else n
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n))
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    tri = Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles)
    inside = tri.get_trifinder()(grid[:, 0], grid[:, 1]) >= 0
    return np.vstack([grid[inside], mesh.vertices])


def c2_norm_estimate(psi, sample_grid):
    """Estimate of the C2 norm of ``psi`` on ``sample_grid``.

    Pointwise |psi| + |grad psi| + |hess psi| maximised over the samples, with
    the Euclidean norm for the value, the spectral norm for the Jacobian and
    the largest spectral norm of the component Hessians. Hessians come from
    central differences of the analytic Jacobian. Being a maximum over finitely
    many samples it is a lower bound of the true sup-norm.
    """
    x = np.asarray(sample_grid, dtype=float).reshape(-1, 2)
    if len(x) == 0:
        raise ArgumentError("sample grid is empty")
    h = settings.HESSIAN_STEP
    value = np.linalg.norm(psi.value(x), axis=1)
    jac = psi.jacobian(x)
    grad = np.linalg.norm(jac, ord=2, axis=(1, 2))

    hess = np.empty((len(x), 2, 2, 2))
    for k in range(2):
        step = np.zeros(2)
        step[k] = h
        hess[..., k] = (psi.jacobian(x + step) - psi.jacobian(x - step)) / (2.0 * h)
    hess = 0.5 * (hess + np.swapaxes(hess, 2, 3))
    curvature = np.linalg.norm(hess, ord=2, axis=(2, 3)).max(axis=1)
    return float(np.max(value + grad + curvature))


def deform(mesh, psi, t, norm_bound="default"):
    """Map every vertex x to x + t * psi(x).

    ``norm_bound`` gates the step with ``|t| * c2_norm_estimate < norm_bound``;
    pass None to rely on the element check alone.
    """
    if t == 0:
        return mesh.with_vertices(mesh.vertices)
    if norm_bound == "default":
        norm_bound = settings.DEFORMATION_NORM_BOUND
    if norm_bound is not None:
        size = abs(t) * c2_norm_estimate(psi, sample_points(mesh))
        if size >= norm_bound:
            raise ArgumentError(
                f"step t={t:g} gives norm estimate {size:.3g} >= {norm_bound:g}"
            )
    moved = mesh.vertices + t * psi.value(mesh.vertices)
    p = moved[mesh.triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    areas = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    if np.any(areas <= 0.0):
        worst = int(np.argmin(areas))
        raise DeformationError(
            f"deformation inverts triangle {worst} (signed area {areas[worst]:.3e})",
            element=worst,
            value=float(areas[worst]),
        )
    logger.debug("deformed %s mesh with %s, t=%g", mesh.family, psi.family, t)
    return mesh.with_vertices(moved)


def boundary_normal(mesh, edge):
    """Outward unit normal of a boundary edge, given by index or vertex pair."""
    if np.ndim(edge) == 0:
        index = int(edge)
        if not 0 <= index < len(mesh.boundary_edges):
            raise ArgumentError(f"{index} is not a boundary edge index")
    else:
        i, j = (int(v) for v in edge)
        hits = np.flatnonzero(
            (mesh.boundary_edges[:, 0] == i) & (mesh.boundary_edges[:, 1] == j)
            | (mesh.boundary_edges[:, 0] == j) & (mesh.boundary_edges[:, 1] == i)
        )
        if len(hits) == 0:
            raise ArgumentError(f"({i}, {j}) is not a boundary edge")
        index = int(hits[0])
    return mesh.edge_normals[index].copy()


def distance_to_boundary(mesh, points, region="all"):
    """Euclidean distance from each point to the nearest boundary edge of ``region``."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    edges = mesh.boundary_edges[mesh.region_mask(region)]
    a = mesh.vertices[edges[:, 0]]
    d = mesh.vertices[edges[:, 1]] - a
    rel = x[:, None, :] - a[None, :, :]
    s = np.clip(np.einsum("ned,ed->ne", rel, d) / np.einsum("ed,ed->e", d, d), 0.0, 1.0)
    gap = rel - s[..., None] * d[None]
    return np.hypot(gap[..., 0], gap[..., 1]).min(axis=1)
