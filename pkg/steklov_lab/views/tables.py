"""
Report tables: pandas DataFrames built from solver, check and search results.
"""
import numpy as np
import pandas as pd

import steklov_lab.views.settings as settings
from steklov_lab.modules.spectrum import cluster_values
from steklov_lab.modules.utils import relative_error

SPECTRUM_COLUMNS = ["index", "lambda", "mu", "group", "multiplicity"]


def spectrum_table(solution, rel_tol=None):
    """One row per computed eigenvalue with its cluster."""
    values = solution.eigenvalues
    rows = []
    for g, group in enumerate(cluster_values(values, rel_tol)):
        for i in group.members:
            rows.append(
                {
                    "index": int(i),
                    "lambda": float(values[i]),
                    "mu": float(1.0 / values[i]),
                    "group": g,
                    "multiplicity": group.multiplicity,
                }
            )
    return pd.DataFrame(rows, columns=SPECTRUM_COLUMNS)


def group_table(groups):
    return pd.DataFrame(
        [
            {
                "group": g,
                "first": group.first,
                "last": group.last,
                "multiplicity": group.multiplicity,
                "lambda": group.value,
            }
            for g, group in enumerate(groups)
        ],
        columns=["group", "first", "last", "multiplicity", "lambda"],
    )


def minmax_table(report):
    return pd.DataFrame(report.rows, columns=["level", "mu", "max_observed", "eigenvector_value", "violations"])


def oracle_frame(rows):
    return pd.DataFrame(rows, columns=["variant", "k", "lambda", "multiplicity", "flagged"])


def oracle_comparison(fem_values, oracle_values):
    """Per-index relative error of the FEM eigenvalues against the oracle."""
    fem = np.asarray(fem_values, dtype=float)
    ref = np.asarray(oracle_values, dtype=float)[: len(fem)]
    return pd.DataFrame(
        {
            "index": np.arange(len(ref)),
            "fem": fem[: len(ref)],
            "oracle": ref,
            "rel_err": relative_error(fem[: len(ref)], ref),
        }
    )


def matrix_table(matrix, group):
    """Entries of a group perturbation matrix in long form."""
    m = np.asarray(matrix)
    members = list(group.members)
    return pd.DataFrame(
        [
            {"r": members[i], "s": members[j], "value": float(m[i, j])}
            for i in range(m.shape[0])
            for j in range(m.shape[1])
        ],
        columns=["r", "s", "value"],
    )


def trace_table(trace):
    """One row per simplification step."""
    rows = []
    for step in trace.steps:
        rows.append(
            {
                "step": step.index,
                "budget": step.budget,
                "applied": step.applied,
                "t": step.t,
                "status": step.status,
                "target": " ".join(str(i) for i in step.target),
                "target_lambda": step.target_value,
                "family": step.family,
                "deviation": step.deviation,
                "max_multiplicity_after": max(step.multiplicity_after) if step.multiplicity_after else 0,
            }
        )
    return pd.DataFrame(
        rows,
        columns=[
            "step",
            "budget",
            "applied",
            "t",
            "status",
            "target",
            "target_lambda",
            "family",
            "deviation",
            "max_multiplicity_after",
        ],
    )


def trajectory_table(trace):
    """Tracked eigenvalues before the first step and after each step, in long form."""
    rows = []
    if not trace.steps:
        spectra = [trace.final_spectrum]
    else:
        spectra = [trace.steps[0].spectrum_before] + [s.spectrum_after for s in trace.steps]
    for step, values in enumerate(spectra):
        for i, value in enumerate(values):
            rows.append({"step": step, "index": i, "lambda": value})
    return pd.DataFrame(rows, columns=["step", "index", "lambda"])


def format_table(df, float_format=None):
    """Plain-text rendering for summaries."""
    if df is None or len(df) == 0:
        return "(empty)"
    fmt = float_format or (lambda v: f"{v:.{settings.SUMMARY_DIGITS}g}")
    return df.to_string(index=False, float_format=fmt)
