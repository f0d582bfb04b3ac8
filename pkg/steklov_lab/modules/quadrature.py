"""
Quadrature rules on the reference triangle and on edges.

Triangle rules are stored as barycentric points with weights that sum to one,
so an integral over a physical triangle is ``area * sum(w * f(points))``.
Edge rules live on [0, 1] with weights summing to one.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import ArgumentError


@dataclass(frozen=True)
class TriangleRule:
    barycentric: np.ndarray  # (q, 3)
    weights: np.ndarray      # (q,)
    degree: int


@dataclass(frozen=True)
class EdgeRule:
    points: np.ndarray   # (g,) positions along the edge in [0, 1]
    weights: np.ndarray  # (g,)


def _symmetric_orbit(a, b):
    return [(a, b, b), (b, a, b), (b, b, a)]


def _collapsed_rule(n):
    """Gauss rule mapped from the square onto the triangle, exact to degree 2n - 2."""
    x, w = leggauss(n)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * w
    u, v = np.meshgrid(s, s, indexing="ij")
    wu, wv = np.meshgrid(ws, ws, indexing="ij")
    xi = u.ravel()
    eta = (v * (1.0 - u)).ravel()
    weights = (wu * wv * (1.0 - u)).ravel() * 2.0
    bary = np.column_stack([1.0 - xi - eta, xi, eta])
    return bary, weights


@lru_cache(maxsize=None)
def triangle_rule(order=2):
    """Return a triangle rule exact for polynomials of at least ``order``."""
    if order < 1:
        raise ArgumentError(f"quadrature order must be >= 1, got {order}")
    if order == 1:
        bary = np.array([[1.0, 1.0, 1.0]]) / 3.0
        weights = np.array([1.0])
        degree = 1
    elif order == 2:
        bary = np.array(_symmetric_orbit(2.0 / 3.0, 1.0 / 6.0))
        weights = np.full(3, 1.0 / 3.0)
        degree = 2
    elif order <= 5:
        a1, b1 = 0.059715871789770, 0.470142064105115
        a2, b2 = 0.797426985353087, 0.101286507323456
        bary = np.array(
            [(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)]
            + _symmetric_orbit(a1, b1)
            + _symmetric_orbit(a2, b2)
        )
        weights = np.array(
            [0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3
        )
        degree = 5
    else:
        n = (order + 3) // 2
        bary, weights = _collapsed_rule(n)
        degree = 2 * n - 2
    bary.setflags(write=False)
    weights.setflags(write=False)
    return TriangleRule(bary, weights, degree)


@lru_cache(maxsize=None)
def edge_rule(n_points=2):
    """Gauss-Legendre rule on [0, 1]; never places a point on an endpoint."""
    if n_points < 1:
        raise ArgumentError(f"edge rule needs at least one point, got {n_points}")
    x, w = leggauss(n_points)
    points = 0.5 * (x + 1.0)
    weights = 0.5 * w
    points.setflags(write=False)
    weights.setflags(write=False)
    return EdgeRule(points, weights)
