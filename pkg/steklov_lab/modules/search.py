"""
Perturbation families, selection of a splitting perturbation within a budget,
and the iterated simplification loops.

A loop tracks the first N eigenvalues, clusters them at ``gap_tol``, picks the
lowest multiple cluster and applies a perturbation of norm at most eps / 2**l
at step l, so the applied norms sum to less than eps.
"""
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from tqdm import tqdm

import steklov_lab.views.settings as settings
from .coeffderiv import (
    KINDS,
    CoefficientPerturbation,
    coefficient_matrix,
    combine_perturbations,
    make_coefficient_candidates,
)
from .errors import ArgumentError, CoercivityError, DeformationError
from .fields import combine_fields, field_library
from .forms import assemble_problem
from .geometry import c2_norm_estimate, deform, distance_to_boundary, sample_points
from .shapederiv import PerturbationMatrix, nosplit_deviation, perturbation_matrix, splitting_directions
from .spectrum import cluster_values, multiplicity_profile, solve_eigen

logger = logging.getLogger(__name__)

SUPPORT_CHOICES = ("S", "W", "interior", "any")
MODES = ("shape",) + KINDS
TERMINATIONS = ("converged", "no_split_found", "step_failed", "max_steps", "zero_budget")


# --- candidate families ---

def _spread(points, n):
    """Greedy farthest-point subset, starting from the first point."""
    if len(points) == 0 or n <= 0:
        return []
    chosen = [0]
    dist = np.hypot(*(points - points[0]).T)
    while len(chosen) < min(n, len(points)):
        i = int(np.argmax(dist))
        if dist[i] == 0.0:
            break
        chosen.append(i)
        dist = np.minimum(dist, np.hypot(*(points - points[i]).T))
    return chosen


def _annulus_candidates(mesh, support, count):
    p = mesh.params
    r_s, r_w = (p["r_outer"], p["r_inner"]) if p.get("steklov", "outer") == "outer" else (p["r_inner"], p["r_outer"])
    # the field vanishes with its Jacobian on the circle at r_start
    r_start, r_full = (r_w, r_s) if support == "S" else (r_s, r_w)
    base = {"r_start": r_start, "r_full": r_full, "support": support}

    fields = []
    for profile in ("quadratic", "smoothstep"):
        fields.append(field_library("radial_bump", {**base, "k": 0, "profile": profile}))
    for component in (0, 1):
        fields.append(field_library("axis_field", {**base, "k": 0, "profile": "quadratic", "component": component}))
    k = 1
    while len(fields) < count:
        for profile in ("quadratic", "smoothstep"):
            for trig in ("cos", "sin"):
                fields.append(field_library("radial_bump", {**base, "k": k, "trig": trig, "profile": profile}))
        k += 1
    return fields[:count]


def _window_candidates(mesh, support, count):
    """Disk-windowed axis fields centred on the region's boundary, clear of the other region."""
    other = "W" if support == "S" else "S"
    mask = mesh.region_mask(support)
    edges = mesh.boundary_edges[mask]
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    normals = mesh.edge_normals[mask]
    clearance = distance_to_boundary(mesh, mids, other)
    order = np.argsort(-clearance, kind="stable")
    diag = float(np.hypot(*np.ptp(mesh.vertices, axis=0)))

    fields = []
    for i in order[_spread(mids[order], count)]:
        radius = min(0.9 * clearance[i], 0.25 * diag)
        if radius <= 0:
            continue
        inner = mids[i] - 0.5 * radius * normals[i]
        inner_radius = min(0.9 * float(distance_to_boundary(mesh, inner, other)[0]), 0.25 * diag)
        for center, r in ((mids[i], radius), (inner, inner_radius)):
            for component in (0, 1):
                fields.append(
                    field_library(
                        "axis_field",
                        {
                            "component": component,
                            "windows": [{"kind": "disk", "center": [float(c) for c in center], "radius": float(r)}],
                            "support": support,
                        },
                    )
                )
    return fields[:count]


def _interior_candidates(mesh, count):
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    clearance = distance_to_boundary(mesh, centroids)
    pool = np.flatnonzero(clearance >= 0.5 * clearance.max())
    pool = pool[np.argsort(-clearance[pool], kind="stable")]
    fields = []
    for i in pool[_spread(centroids[pool], (count + 1) // 2)]:
        for component in (0, 1):
            fields.append(
                field_library(
                    "interior_bump",
                    {
                        "center": [float(c) for c in centroids[i]],
                        "radius": float(0.9 * clearance[i]),
                        "component": component,
                    },
                )
            )
    return fields[:count]


def make_candidates(mesh, support, count=None):
    """Displacement fields whose boundary trace lives in ``support``.

    ``S``/``W``: fields vanishing with their Jacobian on the other region;
    on the annulus these are radial bumps with harmonics cos k theta and
    sin k theta, in a normal-derivative-driven (quadratic) and a
    tangentially flat (smoothstep) profile, plus axis fields.
    ``interior``: compactly supported bumps. ``any``: the three interleaved.
    """
    count = settings.CANDIDATE_COUNT if count is None else int(count)
    if support not in SUPPORT_CHOICES:
        raise ArgumentError(f"support must be one of {SUPPORT_CHOICES}, got {support!r}")
    if count < 0:
        raise ArgumentError("candidate count must be non-negative")
    if count == 0:
        return []
    if support == "any":
        pools = [make_candidates(mesh, s, count) for s in ("S", "W", "interior")]
        merged = [f for trio in zip(*pools) for f in trio]
        return merged[:count]
    if support == "interior":
        return _interior_candidates(mesh, count)
    if mesh.family == "annulus":
        return _annulus_candidates(mesh, support, count)
    return _window_candidates(mesh, support, count)


# --- selection ---

@dataclass
class SplitChoice:
    """Best candidate scaled to the budget."""
    perturbation: object
    matrix: PerturbationMatrix
    norm: float
    score: float
    found: bool
    label: str

    @property
    def deviation(self):
        return self.matrix.deviation

    def describe(self):
        return {
            "label": self.label,
            "norm": self.norm,
            "score": self.score,
            "deviation": self.deviation,
            **self.perturbation.to_dict(),
        }


def best_splitting_perturbation(spec, mesh, sol, group, candidates, budget, seed=0, pairs=None, disable=None):
    """Maximise deviation(M) / norm over single candidates and random pairs.

    Returns a ``SplitChoice`` whose perturbation has norm estimate ``budget``;
    ``found`` is False when no candidate splits the group.
    """
    if budget <= 0:
        raise ArgumentError(f"budget must be positive, got {budget}")
    if not candidates:
        raise ArgumentError("no candidate perturbations")
    if group.multiplicity < 2:
        raise ArgumentError("the group is already simple")
    pairs = settings.RANDOM_PAIRS if pairs is None else pairs
    disable = (not settings.SHOW_PROGRESS) if disable is None else disable

    if isinstance(candidates[0], CoefficientPerturbation):
        def norm_of(c):
            return c.sup_norm(mesh)

        def matrix_of(c):
            return coefficient_matrix(sol, group, c).matrix

        combine = combine_perturbations
    else:
        samples = sample_points(mesh)

        def norm_of(c):
            return c2_norm_estimate(c, samples)

        def matrix_of(c):
            return perturbation_matrix(spec, sol, group, c).matrix

        def combine(fields, coefficients):
            return combine_fields(fields, coefficients)

    matrices, norms = [], []
    for c in tqdm(candidates, desc="candidates", disable=disable, leave=False):
        matrices.append(matrix_of(c))
        norms.append(norm_of(c))

    scored = []
    usable = [i for i, n in enumerate(norms) if n > 0]
    for i in usable:
        scored.append((nosplit_deviation(matrices[i]) / norms[i], candidates[i], matrices[i], norms[i], f"candidate {i}"))
    rng = np.random.default_rng(seed)
    for _ in range(pairs if len(usable) >= 2 else 0):
        i, j = (int(v) for v in rng.choice(usable, 2, replace=False))
        theta = rng.uniform(0.0, 2.0 * np.pi)
        a, b = float(np.cos(theta)), float(np.sin(theta))
        combo = combine([candidates[i], candidates[j]], [a, b])
        n = norm_of(combo)
        if n <= 0:
            continue
        m = a * matrices[i] + b * matrices[j]
        scored.append((nosplit_deviation(m) / n, combo, m, n, f"pair {i},{j}"))
    if not scored:
        raise ArgumentError("every candidate is identically zero")

    best = max(range(len(scored)), key=lambda s: scored[s][0])
    score, pert, matrix, norm, label = scored[best]
    factor = budget / norm
    chosen = PerturbationMatrix(group, factor * matrix, pert.scaled(factor))
    found = chosen.splits()
    if found:
        logger.info("best splitting perturbation: %s, deviation/norm %.4g", label, score)
    else:
        logger.warning("no candidate splits the group at %.6g (best deviation/norm %.3g)", group.value, score)
    return SplitChoice(chosen.source, chosen, float(budget), float(score), bool(found), label)


# --- one step ---

@dataclass
class StepResult:
    status: str
    mesh: object
    spec: object
    solution: object
    choice: SplitChoice = None
    t: float = 0.0
    trials: list = field(default_factory=list)
    predicted: np.ndarray = None

    @property
    def success(self):
        return self.status in ("split", "noop")


def _profile(values, gap_tol):
    groups = cluster_values(values, gap_tol)
    mult = np.empty(len(values), dtype=int)
    for g in groups:
        mult[list(g.members)] = g.multiplicity
    return mult, groups


def _apply(mode, mesh, spec, perturbation, t):
    if mode == "shape":
        return deform(mesh, perturbation, t), spec
    return mesh, spec.with_perturbation(perturbation, t)


def _default_candidates(mode, mesh, support, count, region="all"):
    if mode == "shape":
        return make_candidates(mesh, support, count)
    return make_coefficient_candidates(mesh, mode, count, region)


def split_step(
    spec,
    mesh,
    group,
    budget,
    sol=None,
    tracked=None,
    mode="shape",
    support="S",
    region="all",
    candidates=None,
    perturbation=None,
    gap_tol=None,
    seed=0,
    disable=None,
):
    """Apply one splitting perturbation of norm at most ``budget`` to ``group``.

    The step size is tried at t_req, 2 t_req and 1 (capped at 1), where
    t_req makes the predicted first-order gap twice the target
    max(gap_tol, 10 * solver tolerance) * lambda. The first trial that lowers
    the group's multiplicity without raising any other in the tracked window
    is kept.

    Raises:
        ArgumentError: ``perturbation`` was given and does not split the group.
    """
    if mode not in MODES:
        raise ArgumentError(f"mode must be one of {MODES}, got {mode!r}")
    if budget <= 0:
        raise ArgumentError(f"budget must be positive, got {budget}")
    gap_tol = settings.GAP_TOL if gap_tol is None else gap_tol
    tracked = group.last + 1 if tracked is None else int(tracked)
    if sol is None:
        pair = assemble_problem(mesh, spec)
        sol = solve_eigen(pair, min(tracked + settings.BRANCH_MARGIN, pair.rank))

    if group.multiplicity < 2:
        logger.warning("group at %.6g is already simple; nothing to split", group.value)
        return StepResult("noop", mesh, spec, sol)

    if perturbation is not None:
        choice = best_splitting_perturbation(spec, mesh, sol, group, [perturbation], budget, seed, 0, disable)
        if not choice.found:
            raise ArgumentError("the supplied perturbation does not split the group (deviation below threshold)")
    else:
        if candidates is None:
            candidates = _default_candidates(mode, mesh, support, settings.CANDIDATE_COUNT, region)
        choice = best_splitting_perturbation(spec, mesh, sol, group, candidates, budget, seed, None, disable)
        if not choice.found:
            return StepResult("no_split_found", mesh, spec, sol, choice)

    predicted, _ = splitting_directions(sol, group, choice.matrix)
    spread = float(np.ptp(predicted))
    target = max(gap_tol, 10.0 * settings.SOLVER_TOL) * group.value
    t_req = 2.0 * target / spread if spread > 0 else 1.0
    steps = sorted({min(t_req, 1.0), min(2.0 * t_req, 1.0), 1.0})[: settings.STEP_TRIALS]

    before, before_groups = _profile(sol.eigenvalues[:tracked], gap_tol)
    members = list(group.members)
    trials = []
    for t in steps:
        record = {"t": float(t), "predicted_gap": float(t * spread)}
        try:
            new_mesh, new_spec = _apply(mode, mesh, spec, choice.perturbation, t)
            new_sol = solve_eigen(assemble_problem(new_mesh, new_spec), sol.count)
        except (DeformationError, CoercivityError, ArgumentError) as exc:
            record.update(observed_gap=None, accepted=False, reason=str(exc))
            trials.append(record)
            continue
        after, after_groups = _profile(new_sol.eigenvalues[:tracked], gap_tol)
        accepted = bool(
            after[members].max() < group.multiplicity
            and after.max() <= before.max()
            and len(after_groups) > len(before_groups)
        )
        record.update(
            observed_gap=float(np.ptp(new_sol.eigenvalues[members])),
            max_multiplicity=int(after.max()),
            accepted=accepted,
        )
        trials.append(record)
        if accepted:
            logger.info("split group at %.6g with t=%.3g (gap %.3g)", group.value, t, record["observed_gap"])
            return StepResult("split", new_mesh, new_spec, new_sol, choice, float(t), trials, predicted)

    logger.warning(
        "step failed for group at %.6g: predicted gaps %s, observed %s",
        group.value,
        [r["predicted_gap"] for r in trials],
        [r.get("observed_gap") for r in trials],
    )
    return StepResult("step_failed", mesh, spec, sol, choice, 0.0, trials, predicted)


# --- iterated loops ---

@dataclass
class TraceStep:
    index: int
    budget: float
    applied: float
    t: float
    status: str
    target: list
    target_value: float
    family: str
    deviation: float
    perturbation: dict
    spectrum_before: list
    spectrum_after: list
    multiplicity_before: list
    multiplicity_after: list
    trials: list


@dataclass
class SimplifyTrace:
    mode: str
    tracked: int
    budget: float
    gap_tol: float
    seed: int
    support: str
    steps: list = field(default_factory=list)
    termination: str = ""
    final_spectrum: list = field(default_factory=list)
    mesh: object = None
    spec: object = None

    @property
    def total_applied(self):
        return float(sum(s.applied for s in self.steps if s.status == "split"))

    @property
    def remark_bound(self):
        """Bound on the accumulated perturbation, 2 * eps_1 = eps."""
        return self.budget

    @property
    def converged(self):
        return self.termination == "converged"

    @property
    def inconclusive(self):
        return self.termination == "no_split_found"

    def to_dict(self):
        return {
            "mode": self.mode,
            "tracked": self.tracked,
            "budget": self.budget,
            "gap_tol": self.gap_tol,
            "seed": self.seed,
            "support": self.support,
            "termination": self.termination,
            "total_applied": self.total_applied,
            "remark_bound": self.remark_bound,
            "final_spectrum": list(self.final_spectrum),
            "steps": [asdict(s) for s in self.steps],
        }


def _simplify(mode, spec, mesh, tracked, eps, gap_tol, support, region, max_steps, seed, count, disable):
    if tracked < 1:
        raise ArgumentError(f"the tracked window needs N >= 1, got {tracked}")
    if eps < 0:
        raise ArgumentError(f"budget must be non-negative, got {eps}")
    gap_tol = settings.GAP_TOL if gap_tol is None else gap_tol
    max_steps = settings.MAX_STEPS if max_steps is None else max_steps
    count = settings.CANDIDATE_COUNT if count is None else count
    disable = (not settings.SHOW_PROGRESS) if disable is None else disable
    label = support if mode == "shape" else region

    pair = assemble_problem(mesh, spec)
    sol = solve_eigen(pair, min(tracked + settings.BRANCH_MARGIN, pair.rank))
    tracked = min(tracked, sol.count)
    trace = SimplifyTrace(mode, tracked, float(eps), float(gap_tol), seed, label)

    if eps == 0:
        trace.termination = "zero_budget"
    level = 0
    progress = tqdm(total=max_steps, desc=f"simplify {mode}", disable=disable, leave=False)
    while not trace.termination:
        values = sol.eigenvalues[:tracked]
        groups = cluster_values(values, gap_tol)
        multiple = [g for g in groups if g.multiplicity > 1]
        if not multiple:
            trace.termination = "converged"
            break
        if level >= max_steps:
            trace.termination = "max_steps"
            break
        level += 1
        target = multiple[0]
        budget = eps / 2.0**level
        candidates = _default_candidates(mode, mesh, support, count, region)
        result = split_step(
            spec,
            mesh,
            target,
            budget,
            sol=sol,
            tracked=tracked,
            mode=mode,
            candidates=candidates,
            gap_tol=gap_tol,
            seed=seed + level,
            disable=True,
        )
        choice = result.choice
        after = result.solution.eigenvalues[:tracked]
        trace.steps.append(
            TraceStep(
                index=level,
                budget=budget,
                applied=float(result.t * budget),
                t=result.t,
                status=result.status,
                target=[int(i) for i in target.members],
                target_value=target.value,
                family=_family_label(choice),
                deviation=0.0 if choice is None else choice.deviation,
                perturbation=None if choice is None else choice.describe(),
                spectrum_before=[float(v) for v in values],
                spectrum_after=[float(v) for v in after],
                multiplicity_before=multiplicity_profile(groups),
                multiplicity_after=multiplicity_profile(cluster_values(after, gap_tol)),
                trials=result.trials,
            )
        )
        progress.update(1)
        if result.status != "split":
            trace.termination = result.status
            break
        mesh, spec, sol = result.mesh, result.spec, result.solution
    progress.close()

    trace.final_spectrum = [float(v) for v in sol.eigenvalues[:tracked]]
    trace.mesh, trace.spec = mesh, spec
    logger.info(
        "%s simplification finished: %s after %d steps, applied %.4g of %.4g",
        mode, trace.termination, len(trace.steps), trace.total_applied, eps,
    )
    return trace


def _family_label(choice):
    if choice is None:
        return ""
    pert = choice.perturbation
    if isinstance(pert, CoefficientPerturbation):
        return f"{pert.kind}:{pert.region}"
    return f"{pert.family}:{pert.support}"


def greedy_simplify(
    spec, mesh, N, eps, gap_tol=None, support="S", max_steps=None, seed=0, candidate_count=None, disable=None
):
    """Iterated shape perturbations until the first N eigenvalues are simple at ``gap_tol``."""
    if support not in SUPPORT_CHOICES:
        raise ArgumentError(f"support must be one of {SUPPORT_CHOICES}, got {support!r}")
    return _simplify("shape", spec, mesh, N, eps, gap_tol, support, "all", max_steps, seed, candidate_count, disable)


def coeff_simplify(
    spec,
    mesh,
    N,
    eps,
    gap_tol=None,
    kind="boundary_potential",
    region="all",
    max_steps=None,
    seed=0,
    candidate_count=None,
    disable=None,
):
    """Iterated coefficient perturbations accumulated into the potential or conductivity."""
    if kind not in KINDS:
        raise ArgumentError(f"kind must be one of {KINDS}, got {kind!r}")
    return _simplify(kind, spec, mesh, N, eps, gap_tol, "S", region, max_steps, seed, candidate_count, disable)
