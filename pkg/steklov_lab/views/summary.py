"""
Consolidated run summary: merges the tables listed in a run manifest into one
markdown document without recomputing anything.
"""
import logging
from pathlib import Path

import pandas as pd

import steklov_lab.views.settings as settings
from steklov_lab.modules.errors import ConfigError
from steklov_lab.preprocessing.mesh_io import load_yaml
from steklov_lab.views.tables import format_table

logger = logging.getLogger(__name__)

SECTIONS = [
    ("Spectrum", ["spectrum", "groups", "minmax"]),
    ("Oracle comparison", ["oracle", "oracle_compare"]),
    ("Derivative checks", ["derivatives", "ibp", "slopes"]),
    ("Splitting", ["matrix", "split"]),
    ("Simplification", ["trace", "trajectory"]),
    ("W obstruction scan", ["w_scan"]),
]


def read_manifest(directory):
    path = Path(directory) / settings.MANIFEST_FILE
    if not path.is_file():
        raise ConfigError(f"no {settings.MANIFEST_FILE} in {directory}")
    manifest = load_yaml(path)
    if not isinstance(manifest, dict) or "files" not in manifest:
        raise ConfigError(f"{path} is not a run manifest")
    return manifest


def build_summary(directory):
    """Return the summary text for the run in ``directory``."""
    directory = Path(directory)
    manifest = read_manifest(directory)
    produced = set(manifest.get("files", []))
    experiment = manifest.get("config", {}).get("experiment", {}).get("kind", "?")

    lines = [
        f"# Run summary: {experiment}",
        "",
        f"- status: {manifest.get('status', '?')} (exit {manifest.get('exit_code', '?')})",
        f"- version: {manifest.get('version', '?')}",
        f"- seed: {manifest.get('config', {}).get('seed', '?')}",
        f"- input hash: {manifest.get('input_hash', '?')}",
        "",
    ]
    metrics = manifest.get("metrics") or {}
    if metrics:
        lines += ["## Metrics", ""]
        lines += [f"- {key}: {value}" for key, value in metrics.items()]
        lines.append("")

    for title, keys in SECTIONS:
        names = [settings.TABLE_FILES[k] for k in keys if settings.TABLE_FILES[k] in produced]
        if not names:
            continue
        lines += [f"## {title}", ""]
        for name in names:
            df = pd.read_csv(directory / name)
            lines += [f"### {name}", "", "```", format_table(df), "```", ""]
    plots = sorted(f for f in produced if f.endswith(".svg"))
    if plots:
        lines += ["## Plots", ""] + [f"- {name}" for name in plots] + [""]
    return "\n".join(lines)


def write_summary(directory):
    path = Path(directory) / settings.SUMMARY_FILE
    path.write_text(build_summary(directory), encoding="utf-8")
    logger.info("wrote %s", path)
    return path
