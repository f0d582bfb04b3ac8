"""
Static SVG plots of spectra, slope checks and simplification trajectories.
"""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "steklov-lab"

import steklov_lab.views.settings as settings  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_spectrum(spectrum, path, oracle=None):
    """Eigenvalue against index, multiple clusters highlighted."""
    fig, ax = plt.subplots(figsize=settings.FIGURE_SIZE)
    multiple = spectrum["multiplicity"] > 1
    colors = settings.BRANCH_COLORS
    ax.scatter(spectrum.loc[~multiple, "index"], spectrum.loc[~multiple, "lambda"],
               color=colors["simple"], label="simple")
    ax.scatter(spectrum.loc[multiple, "index"], spectrum.loc[multiple, "lambda"],
               color=colors["multiple"], label="multiple")
    if oracle is not None and len(oracle):
        ax.plot(np.arange(len(oracle)), oracle, linestyle="none", marker="x",
                color=colors["predicted"], label="analytic")
    ax.set_xlabel("index")
    ax.set_ylabel("eigenvalue")
    ax.legend()
    return _save(fig, path)


def plot_slopes(table, path):
    """FD branch slopes against the predicted first-order slopes."""
    fig, ax = plt.subplots(figsize=settings.FIGURE_SIZE)
    for branch, frame in table.groupby("branch"):
        ax.plot(frame["step"], frame["fd_slope"], marker=settings.TRAJECTORY_MARKER, label=f"branch {branch}")
        ax.axhline(frame["predicted"].iloc[0], color=settings.BRANCH_COLORS["predicted"], linestyle="--")
    ax.set_xscale("log")
    ax.set_xlabel("step t")
    ax.set_ylabel("d lambda / dt")
    ax.legend()
    return _save(fig, path)


def plot_convergence(table, path):
    """Relative residual of each derivative form against the step."""
    fig, ax = plt.subplots(figsize=settings.FIGURE_SIZE)
    for form, frame in table.groupby("form"):
        if (frame["status"] == "exact").all():
            continue
        ax.loglog(frame["step"], frame["residual"], marker=settings.TRAJECTORY_MARKER, label=form)
    steps = np.sort(table["step"].unique())
    if len(steps):
        ax.loglog(steps, (steps / steps[-1]) ** 2 * table["residual"].max(), color=settings.BRANCH_COLORS["predicted"],
                  linestyle=":", label="slope 2")
    ax.set_xlabel("step t")
    ax.set_ylabel("relative residual")
    ax.legend()
    return _save(fig, path)


def plot_trajectory(trajectory, path):
    """Tracked eigenvalues against the simplification step."""
    fig, ax = plt.subplots(figsize=settings.FIGURE_SIZE)
    for index, frame in trajectory.groupby("index"):
        ax.plot(frame["step"], frame["lambda"], marker=settings.TRAJECTORY_MARKER,
                color=settings.BRANCH_COLORS["simple"], linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("eigenvalue")
    if len(trajectory):
        ax.set_xticks(sorted(trajectory["step"].unique()))
    return _save(fig, path)
