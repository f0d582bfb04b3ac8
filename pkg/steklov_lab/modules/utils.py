"""Small helpers shared by the reporting and I/O layers."""
import hashlib
import json

import numpy as np


def to_builtin(obj):
    """Recursively convert numpy scalars and arrays to plain Python values."""
    if isinstance(obj, dict):
        return {str(k): to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_builtin(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_builtin(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def stable_hash(doc):
    """SHA-256 of a JSON-serialisable document with sorted keys."""
    text = json.dumps(to_builtin(doc), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def relative_error(value, reference):
    reference = np.asarray(reference, dtype=float)
    return np.abs(np.asarray(value, dtype=float) - reference) / np.maximum(np.abs(reference), np.finfo(float).tiny)

