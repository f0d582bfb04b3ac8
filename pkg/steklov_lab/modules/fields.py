"""
Parametric vector and coefficient fields.

Displacement fields carry analytic Jacobians, ``J[i, j] = d psi_i / d x_j``.
Every field is described by a family name and a parameter map of plain
Python values, so a field can be written to a trace and rebuilt exactly.
All families honour a ``scale`` parameter that multiplies the whole field.
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ArgumentError

SUPPORTS = ("interior", "S", "W", "global")
FIELD_FAMILIES = (
    "constant",
    "rotation",
    "dilation",
    "radial_bump",
    "axis_field",
    "interior_bump",
    "combination",
)
SCALAR_FAMILIES = ("constant", "angular_harmonic", "positional_harmonic", "combination")
MATRIX_FAMILIES = (
    "scaled_identity",
    "harmonic_identity",
    "harmonic_shear",
    "harmonic_diagonal",
    "combination",
)


def _points(x):
    return np.atleast_2d(np.asarray(x, dtype=float))


def _smoothstep(u):
    """C2 step: 0 for u <= 0, 1 for u >= 1, with its first two derivatives."""
    u = np.clip(u, 0.0, 1.0)
    s = u**3 * (10.0 - 15.0 * u + 6.0 * u**2)
    ds = 30.0 * u**2 * (1.0 - u) ** 2
    return s, ds


# --- scalar factors ---

class _Angular:
    """trig(k * (theta - phase)) around ``center``."""

    def __init__(self, k, phase=0.0, center=(0.0, 0.0), trig="cos"):
        if trig not in ("cos", "sin"):
            raise ArgumentError(f"trig must be 'cos' or 'sin', got {trig!r}")
        self.k = float(k)
        self.phase = float(phase)
        self.center = np.asarray(center, dtype=float)
        self.trig = trig

    def __call__(self, x):
        d = x - self.center
        r2 = np.maximum(np.einsum("nd,nd->n", d, d), 1e-300)
        arg = self.k * (np.arctan2(d[:, 1], d[:, 0]) - self.phase)
        if self.trig == "cos":
            value, dvalue = np.cos(arg), -np.sin(arg)
        else:
            value, dvalue = np.sin(arg), np.cos(arg)
        dtheta = np.column_stack([-d[:, 1], d[:, 0]]) / r2[:, None]
        return value, (self.k * dvalue)[:, None] * dtheta


class _Positional:
    """trig(2 pi k (x_axis - origin) / period + phase)."""

    def __init__(self, axis, k, period=1.0, origin=0.0, phase=0.0, trig="cos"):
        if axis not in (0, 1):
            raise ArgumentError(f"axis must be 0 or 1, got {axis}")
        self.axis = axis
        self.omega = 2.0 * np.pi * float(k) / float(period)
        self.origin = float(origin)
        self.phase = float(phase)
        self.trig = trig

    def __call__(self, x):
        arg = self.omega * (x[:, self.axis] - self.origin) + self.phase
        if self.trig == "cos":
            value, dvalue = np.cos(arg), -np.sin(arg)
        else:
            value, dvalue = np.sin(arg), np.cos(arg)
        grad = np.zeros_like(x)
        grad[:, self.axis] = self.omega * dvalue
        return value, grad


class _RadialProfile:
    """Profile eta(r) about ``center``.

    uniform: eta = 1.
    linear: eta = r / r_full.
    smoothstep: C2 step from 0 at r_start to 1 at r_full (either order).
    quadratic: eta = u**2 with u = (r - r_start) / (r_full - r_start); a
        polynomial in r that vanishes with its derivative on r = r_start.
    """

    PROFILES = ("uniform", "linear", "smoothstep", "quadratic")

    def __init__(self, profile="uniform", r_start=None, r_full=None, center=(0.0, 0.0)):
        if profile not in self.PROFILES:
            raise ArgumentError(f"unknown radial profile {profile!r}")
        if profile in ("smoothstep", "quadratic") and (
            r_start is None or r_full is None or r_start == r_full
        ):
            raise ArgumentError(f"profile {profile!r} needs distinct r_start and r_full")
        if profile == "linear" and not r_full:
            raise ArgumentError("profile 'linear' needs r_full")
        self.profile = profile
        self.r_start = r_start
        self.r_full = r_full
        self.center = np.asarray(center, dtype=float)

    def __call__(self, x):
        d = x - self.center
        r = np.maximum(np.hypot(d[:, 0], d[:, 1]), 1e-300)
        e_r = d / r[:, None]
        if self.profile == "uniform":
            return np.ones(len(x)), np.zeros_like(x)
        if self.profile == "linear":
            return r / self.r_full, e_r / self.r_full
        width = self.r_full - self.r_start
        u = (r - self.r_start) / width
        if self.profile == "smoothstep":
            eta, deta = _smoothstep(u)
        else:
            eta, deta = u**2, 2.0 * u
        return eta, (deta / width)[:, None] * e_r


class _Interval:
    """Window along one axis: 0 outside [lo0, hi0], 1 on [lo1, hi1], C2 ramps between."""

    def __init__(self, axis, lo0=None, lo1=None, hi1=None, hi0=None):
        self.axis = axis
        self.lo = None if lo0 is None else (float(lo0), float(lo1))
        self.hi = None if hi0 is None else (float(hi1), float(hi0))

    def __call__(self, x):
        c = x[:, self.axis]
        value = np.ones(len(x))
        dvalue = np.zeros(len(x))
        if self.lo is not None:
            a, b = self.lo
            s, ds = _smoothstep((c - a) / (b - a))
            dvalue = dvalue * s + value * ds / (b - a)
            value = value * s
        if self.hi is not None:
            a, b = self.hi
            s, ds = _smoothstep((b - c) / (b - a))
            dvalue = dvalue * s - value * ds / (b - a)
            value = value * s
        grad = np.zeros_like(x)
        grad[:, self.axis] = dvalue
        return value, grad


class _Disk:
    """(1 - |x - c|^2 / R^2)^3 inside the disk, zero outside."""

    def __init__(self, center, radius):
        if radius <= 0:
            raise ArgumentError("disk radius must be positive")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    def __call__(self, x):
        d = x - self.center
        q = 1.0 - np.einsum("nd,nd->n", d, d) / self.radius**2
        q = np.maximum(q, 0.0)
        value = q**3
        grad = (-6.0 * q**2 / self.radius**2)[:, None] * d
        return value, grad


def _product(factors, x):
    value = np.ones(len(x))
    grad = np.zeros_like(x)
    for factor in factors:
        v, g = factor(x)
        grad = grad * v[:, None] + value[:, None] * g
        value = value * v
    return value, grad


# --- displacement fields ---

@dataclass(frozen=True, eq=False)
class DisplacementField:
    """A C2 vector field with its analytic Jacobian."""
    family: str
    params: dict
    evaluate: Callable
    differentiate: Callable
    support: str = "global"

    def value(self, x):
        return self.evaluate(_points(x))

    def jacobian(self, x):
        return self.differentiate(_points(x))

    def divergence(self, x):
        return np.trace(self.jacobian(x), axis1=1, axis2=2)

    def scaled(self, factor):
        params = dict(self.params)
        params["scale"] = float(params.get("scale", 1.0)) * float(factor)
        return field_library(self.family, params)

    def to_dict(self):
        return {"family": self.family, "params": dict(self.params)}


def _scalar_field_vector(factors, direction, center, amplitude):
    """psi = amplitude * f(x) * d(x) with d a unit axis or the radial unit vector."""
    center = np.asarray(center, dtype=float)

    def evaluate(x):
        f, _ = _product(factors, x)
        return amplitude * f[:, None] * _direction(x)

    def differentiate(x):
        f, df = _product(factors, x)
        d = _direction(x)
        jac = d[:, :, None] * df[:, None, :]
        if direction == "radial":
            rel = x - center
            r = np.maximum(np.hypot(rel[:, 0], rel[:, 1]), 1e-300)
            proj = np.eye(2)[None] - d[:, :, None] * d[:, None, :]
            jac = jac + (f / r)[:, None, None] * proj
        return amplitude * jac

    def _direction(x):
        if direction == "radial":
            rel = x - center
            r = np.maximum(np.hypot(rel[:, 0], rel[:, 1]), 1e-300)
            return rel / r[:, None]
        unit = np.zeros(2)
        unit[direction] = 1.0
        return np.broadcast_to(unit, x.shape)

    return evaluate, differentiate


def _harmonic_factor(params, center):
    harmonic = params.get("harmonic", "angle")
    k = params.get("k", 0)
    trig = params.get("trig", "cos")
    phase = params.get("phase", 0.0)
    if harmonic == "angle":
        return _Angular(k, phase=phase, center=center, trig=trig)
    if harmonic in ("x", "y"):
        return _Positional(
            0 if harmonic == "x" else 1,
            k,
            period=params.get("period", 1.0),
            origin=params.get("origin", 0.0),
            phase=phase,
            trig=trig,
        )
    raise ArgumentError(f"unknown harmonic {harmonic!r}")


def _windows(params):
    windows = []
    for spec in params.get("windows", []):
        kind = spec.get("kind")
        if kind == "interval":
            windows.append(
                _Interval(
                    spec["axis"],
                    spec.get("lo0"),
                    spec.get("lo1"),
                    spec.get("hi1"),
                    spec.get("hi0"),
                )
            )
        elif kind == "disk":
            windows.append(_Disk(spec["center"], spec["radius"]))
        else:
            raise ArgumentError(f"unknown window kind {kind!r}")
    return windows


def field_library(family, params=None):
    """Build a displacement field from its family name and parameters.

    Families:
        constant: ``vector``.
        rotation: ``omega``, ``center``; psi = omega * (-(y - cy), x - cx).
        dilation: ``factor``, ``center``; psi = factor * (x - c).
        radial_bump: psi = amplitude * h(x) * eta(r) * e_r with h an angular
            or positional harmonic (``k``, ``phase``, ``trig``, ``harmonic``)
            and eta a radial profile (``profile``, ``r_start``, ``r_full``).
            ``k`` gives the cos k theta dependence.
        axis_field: the same scalar factor times a fixed unit vector
            (``component``), optionally with interval or disk ``windows``.
        interior_bump: amplitude * (1 - |x - c|^2 / R^2)^3 * e_component,
            times an optional angular harmonic; compactly supported in the
            disk of ``radius`` around ``center``.
        combination: ``terms`` = list of {family, params, coefficient}.
    Every family also accepts ``scale`` and ``support``.
    """
    params = dict(params or {})
    scale = float(params.get("scale", 1.0))
    support = params.get("support", "interior" if family == "interior_bump" else "global")
    if support not in SUPPORTS:
        raise ArgumentError(f"support must be one of {SUPPORTS}, got {support!r}")
    center = np.asarray(params.get("center", (0.0, 0.0)), dtype=float)

    if family == "constant":
        vector = np.asarray(params.get("vector", (1.0, 0.0)), dtype=float) * scale

        def evaluate(x):
            return np.broadcast_to(vector, x.shape).copy()

        def differentiate(x):
            return np.zeros((len(x), 2, 2))

    elif family == "rotation":
        omega = float(params.get("omega", 1.0)) * scale
        generator = omega * np.array([[0.0, -1.0], [1.0, 0.0]])

        def evaluate(x):
            return (x - center) @ generator.T

        def differentiate(x):
            return np.broadcast_to(generator, (len(x), 2, 2)).copy()

    elif family == "dilation":
        factor = float(params.get("factor", 1.0)) * scale

        def evaluate(x):
            return factor * (x - center)

        def differentiate(x):
            return np.broadcast_to(factor * np.eye(2), (len(x), 2, 2)).copy()

    elif family in ("radial_bump", "axis_field"):
        amplitude = float(params.get("amplitude", 1.0)) * scale
        factors = [
            _harmonic_factor(params, center),
            _RadialProfile(
                params.get("profile", "uniform"),
                params.get("r_start"),
                params.get("r_full"),
                center,
            ),
        ] + _windows(params)
        if family == "radial_bump":
            direction = "radial"
        else:
            direction = int(params.get("component", 0))
            if direction not in (0, 1):
                raise ArgumentError(f"component must be 0 or 1, got {direction}")
        evaluate, differentiate = _scalar_field_vector(factors, direction, center, amplitude)

    elif family == "interior_bump":
        amplitude = float(params.get("amplitude", 1.0)) * scale
        direction = int(params.get("component", 0))
        factors = [_Disk(center, params.get("radius", 0.1))]
        if params.get("k", 0):
            factors.append(
                _Angular(params["k"], params.get("phase", 0.0), center, params.get("trig", "cos"))
            )
        evaluate, differentiate = _scalar_field_vector(factors, direction, center, amplitude)

    elif family == "combination":
        terms = [
            (field_library(term["family"], term.get("params", {})), float(term["coefficient"]))
            for term in params.get("terms", [])
        ]

        def evaluate(x):
            out = np.zeros_like(x)
            for psi, c in terms:
                out += c * psi.evaluate(x)
            return scale * out

        def differentiate(x):
            out = np.zeros((len(x), 2, 2))
            for psi, c in terms:
                out += c * psi.differentiate(x)
            return scale * out

    else:
        raise ArgumentError(f"unknown field family {family!r}; expected one of {FIELD_FAMILIES}")

    return DisplacementField(family, params, evaluate, differentiate, support)


def combine_fields(fields, coefficients, support=None):
    """Linear combination of displacement fields, rebuilt from their parameters."""
    if len(fields) != len(coefficients):
        raise ArgumentError("one coefficient per field is required")
    supports = {psi.support for psi in fields}
    if support is None:
        support = supports.pop() if len(supports) == 1 else "global"
    terms = [
        {"family": psi.family, "params": dict(psi.params), "coefficient": float(c)}
        for psi, c in zip(fields, coefficients)
    ]
    return field_library("combination", {"terms": terms, "support": support})


def field_from_dict(doc):
    return field_library(doc["family"], doc.get("params", {}))


# --- coefficient fields ---

def _combination_terms(params, build):
    return [
        (build(term["family"], term.get("params", {})), float(term["coefficient"]))
        for term in params.get("terms", [])
    ]


def _combination_params(fields, coefficients):
    if len(fields) != len(coefficients):
        raise ArgumentError("one coefficient per field is required")
    return {
        "terms": [
            {"family": f.family, "params": dict(f.params), "coefficient": float(c)}
            for f, c in zip(fields, coefficients)
        ]
    }


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Scalar coefficient a(x) with its gradient."""
    family: str
    params: dict
    evaluate: Callable

    def __call__(self, x):
        return self.evaluate(_points(x))[0]

    def gradient(self, x):
        return self.evaluate(_points(x))[1]

    def scaled(self, factor):
        params = dict(self.params)
        params["scale"] = float(params.get("scale", 1.0)) * float(factor)
        return scalar_field(self.family, params)

    def to_dict(self):
        return {"family": self.family, "params": dict(self.params)}


def scalar_field(family, params=None):
    """constant(value), offset + amplitude * harmonic, or a combination; all times ``scale``.

    angular_harmonic uses ``k``, ``phase``, ``center``, ``trig``;
    positional_harmonic uses ``axis``, ``k``, ``period``, ``origin``, ``phase``, ``trig``;
    combination uses ``terms`` = list of {family, params, coefficient}.
    """
    params = dict(params or {})
    scale = float(params.get("scale", 1.0))
    if family == "constant":
        value = float(params.get("value", 1.0)) * scale

        def evaluate(x):
            return np.full(len(x), value), np.zeros_like(x)

    elif family in ("angular_harmonic", "positional_harmonic"):
        offset = float(params.get("offset", 0.0))
        amplitude = float(params.get("amplitude", 1.0))
        if family == "angular_harmonic":
            factor = _Angular(
                params.get("k", 0),
                params.get("phase", 0.0),
                params.get("center", (0.0, 0.0)),
                params.get("trig", "cos"),
            )
        else:
            factor = _Positional(
                int(params.get("axis", 0)),
                params.get("k", 0),
                params.get("period", 1.0),
                params.get("origin", 0.0),
                params.get("phase", 0.0),
                params.get("trig", "cos"),
            )

        def evaluate(x):
            h, dh = factor(x)
            return scale * (offset + amplitude * h), scale * amplitude * dh

    elif family == "combination":
        terms = _combination_terms(params, scalar_field)

        def evaluate(x):
            value = np.zeros(len(x))
            grad = np.zeros_like(x)
            for field, c in terms:
                v, g = field.evaluate(x)
                value += c * v
                grad += c * g
            return scale * value, scale * grad

    else:
        raise ArgumentError(f"unknown scalar field family {family!r}; expected one of {SCALAR_FAMILIES}")
    return ScalarField(family, params, evaluate)


def combine_scalar_fields(fields, coefficients):
    return scalar_field("combination", _combination_params(fields, coefficients))


@dataclass(frozen=True, eq=False)
class MatrixField:
    """Symmetric matrix coefficient A(x) with its gradient dA_ij / dx_k."""
    family: str
    params: dict
    evaluate: Callable

    def __call__(self, x):
        return self.evaluate(_points(x))[0]

    def gradient(self, x):
        """Shape (N, 2, 2, 2)."""
        return self.evaluate(_points(x))[1]

    def scaled(self, factor):
        params = dict(self.params)
        params["scale"] = float(params.get("scale", 1.0)) * float(factor)
        return matrix_field(self.family, params)

    def to_dict(self):
        return {"family": self.family, "params": dict(self.params)}


_PATTERNS = {
    "scaled_identity": np.eye(2),
    "harmonic_identity": np.eye(2),
    "harmonic_shear": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "harmonic_diagonal": np.array([[1.0, 0.0], [0.0, -1.0]]),
}


def matrix_field(family, params=None):
    """Matrix coefficient families.

    scaled_identity: ``value`` * I.
    harmonic_identity / harmonic_shear / harmonic_diagonal: ``offset`` * I plus an
        angular harmonic (``k``, ``phase``, ``amplitude``, ``center``, ``trig``)
        times I, [[0, 1], [1, 0]] or [[1, 0], [0, -1]].
    combination: ``terms`` = list of {family, params, coefficient}.
    """
    params = dict(params or {})
    scale = float(params.get("scale", 1.0))
    if family == "combination":
        terms = _combination_terms(params, matrix_field)

        def evaluate(x):
            value = np.zeros((len(x), 2, 2))
            grad = np.zeros((len(x), 2, 2, 2))
            for field, c in terms:
                v, g = field.evaluate(x)
                value += c * v
                grad += c * g
            return scale * value, scale * grad

        return MatrixField(family, params, evaluate)

    if family not in _PATTERNS:
        raise ArgumentError(f"unknown matrix field family {family!r}; expected one of {MATRIX_FAMILIES}")
    pattern = _PATTERNS[family]
    if family == "scaled_identity":
        profile = scalar_field("constant", {"value": params.get("value", 1.0), "scale": scale})
        offset = 0.0
    else:
        profile = scalar_field(
            "angular_harmonic",
            {
                "k": params.get("k", 0),
                "phase": params.get("phase", 0.0),
                "center": params.get("center", (0.0, 0.0)),
                "trig": params.get("trig", "cos"),
                "amplitude": params.get("amplitude", 1.0),
                "scale": scale,
            },
        )
        offset = float(params.get("offset", 0.0)) * scale

    def evaluate(x):
        s, ds = profile.evaluate(x)
        value = offset * np.eye(2)[None] + s[:, None, None] * pattern[None]
        grad = pattern[None, :, :, None] * ds[:, None, None, :]
        return value, grad

    return MatrixField(family, params, evaluate)


def combine_matrix_fields(fields, coefficients):
    return matrix_field("combination", _combination_params(fields, coefficients))
