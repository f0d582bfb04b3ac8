"""
Finite-difference tracking of eigenvalue branches through a degenerate group.

Branches at +t and -t are matched to the predicted splitting directions by
eigenvector overlap in the base a-inner product, not by sorted position, so a
pair whose order swaps between +t and -t is still differenced correctly.
"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment
from tqdm import tqdm

import steklov_lab.views.settings as settings
from .errors import ArgumentError

logger = logging.getLogger(__name__)

SLOPE_COLUMNS = [
    "step",
    "branch",
    "lambda_plus",
    "lambda_minus",
    "fd_slope",
    "predicted",
    "rel_err",
    "order",
    "overlap",
    "flagged",
    "gap",
    "predicted_gap",
]


@dataclass
class SlopeReport:
    """FD-versus-predicted slope table for one group."""
    table: pd.DataFrame
    predicted: np.ndarray
    value: float
    label: str = ""

    @property
    def flagged(self):
        return bool(self.table["flagged"].any()) if len(self.table) else False

    def max_rel_err(self, step=None):
        rows = self.table if step is None else self.table[np.isclose(self.table["step"], step)]
        rows = rows[~rows["flagged"]]
        return float(rows["rel_err"].max()) if len(rows) else float("nan")

    def slopes(self, step):
        rows = self.table[np.isclose(self.table["step"], step)].sort_values("branch")
        return rows["fd_slope"].to_numpy()


def window_size(group, rank, margin=None):
    """Number of eigenpairs to compute so the group plus a margin is covered."""
    margin = settings.BRANCH_MARGIN if margin is None else margin
    return min(group.last + 1 + margin, rank)


def match_branches(directions, base_left, vectors, window):
    """Assign each direction column to one column of ``vectors`` within ``window``.

    Returns the chosen indices and the overlaps |z_r^T A_0 x_c|.
    """
    candidates = np.arange(window[0], window[1])
    overlaps = np.abs(directions.T @ (base_left @ vectors[:, candidates]))
    rows, cols = linear_sum_assignment(-overlaps)
    chosen = np.empty(directions.shape[1], dtype=int)
    scores = np.empty(directions.shape[1])
    chosen[rows] = candidates[cols]
    scores[rows] = overlaps[rows, cols]
    return chosen, scores


def _distinct(predicted, value):
    if len(predicted) < 2:
        return np.ones(len(predicted), dtype=bool)
    tol = settings.DEVIATION_REL * max(np.abs(predicted).max(), settings.SLOPE_FLOOR * value)
    distinct = np.ones(len(predicted), dtype=bool)
    for r in range(len(predicted)):
        others = np.delete(predicted, r)
        distinct[r] = np.min(np.abs(others - predicted[r])) > tol
    return distinct


def branch_slopes(base_solution, group, predicted, directions, solve_at, steps, label="", disable=None):
    """Central differences of the group's branches over ``steps``.

    Args:
        base_solution: solution at t = 0.
        predicted: predicted slopes, ascending, one per direction.
        directions: (n, m) predicted eigenvector directions, matching ``predicted``.
        solve_at: callable t -> EigenSolution on the perturbed problem.
        steps: positive step sizes, largest first.
    """
    steps = [float(t) for t in steps]
    if not steps or min(steps) <= 0:
        raise ArgumentError("finite-difference steps must be positive")
    m = group.multiplicity
    value = group.value
    base_left = base_solution.pair.left
    distinct = _distinct(predicted, value)
    disable = (not settings.SHOW_PROGRESS) if disable is None else disable

    rows = []
    for t in tqdm(steps, desc=f"fd {label}".strip(), disable=disable, leave=False):
        plus = solve_at(t)
        minus = solve_at(-t)
        window = (
            max(group.first - settings.BRANCH_MARGIN, 0),
            min(group.last + 1 + settings.BRANCH_MARGIN, plus.count, minus.count),
        )
        idx_p, ov_p = match_branches(directions, base_left, plus.vectors, window)
        idx_m, ov_m = match_branches(directions, base_left, minus.vectors, window)
        lam_p = plus.eigenvalues[idx_p]
        lam_m = minus.eigenvalues[idx_m]
        gap = float(np.ptp(plus.eigenvalues[group.first: group.last + 1])) if m > 1 else 0.0
        predicted_gap = float(t * np.ptp(predicted)) if m > 1 else 0.0
        for r in range(m):
            fd = (lam_p[r] - lam_m[r]) / (2.0 * t)
            overlap = float(min(ov_p[r], ov_m[r]))
            denom = max(abs(predicted[r]), settings.SLOPE_FLOOR * value)
            rows.append(
                {
                    "step": t,
                    "branch": r,
                    "lambda_plus": float(lam_p[r]),
                    "lambda_minus": float(lam_m[r]),
                    "fd_slope": float(fd),
                    "predicted": float(predicted[r]),
                    "rel_err": float(abs(fd - predicted[r]) / denom),
                    "order": np.nan,
                    "overlap": overlap,
                    "flagged": bool(overlap < settings.BRANCH_OVERLAP_MIN and distinct[r]),
                    "gap": gap,
                    "predicted_gap": predicted_gap,
                }
            )

    table = pd.DataFrame(rows, columns=SLOPE_COLUMNS)
    if len(steps) >= 3:
        _self_convergence_order(table, steps, m)
    else:
        table = table.drop(columns="order")
    flagged = int(table["flagged"].sum())
    if flagged:
        logger.warning("%s: %d branch rows flagged as ambiguous", label or "fd check", flagged)
    return SlopeReport(table, np.asarray(predicted), value, label)


def _self_convergence_order(table, steps, m):
    """Observed order from successive FD differences: log(|d1| / |d2|) / log(t1 / t2)."""
    slopes = table["fd_slope"].to_numpy().reshape(len(steps), m)
    for i in range(2, len(steps)):
        d1 = np.abs(slopes[i - 2] - slopes[i - 1])
        d2 = np.abs(slopes[i - 1] - slopes[i])
        with np.errstate(divide="ignore", invalid="ignore"):
            order = np.log(d1 / d2) / np.log(steps[i - 2] / steps[i - 1])
        table.loc[i * m: (i + 1) * m - 1, "order"] = order
