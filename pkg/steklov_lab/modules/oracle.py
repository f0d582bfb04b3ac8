"""
Analytic eigenvalues on the annulus r0 < r < r1 with S on the outer circle.

Separation of variables gives modes u = f(r) trig(k theta). The Robin-type
problem has harmonic profiles in closed form; the volume-potential problem
integrates the modified Bessel ODE numerically. Nothing here touches the
finite-element code path.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import ArgumentError, NotApplicableError, OracleError

logger = logging.getLogger(__name__)

ODE_RTOL = 1e-12
ODE_ATOL = 1e-14
ODE_STEPS = 64
HALVING_TOL = 1e-8
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class AnnulusMode:
    """One separated mode; ``alpha``/``beta`` are the coefficients of
    r^k and r^-k (k >= 1) or of 1 and log r (k = 0) for P1, and the initial
    data f(r0), f'(r0) for P2.
    """
    variant: str
    k: int
    eigenvalue: float
    alpha: float
    beta: float
    r0: float
    r1: float
    residual: float = 0.0
    flagged: bool = False
    solution: object = field(default=None, repr=False)

    @property
    def multiplicity(self):
        return 1 if self.k == 0 else 2

    def profile(self, r):
        """f(r) and f'(r)."""
        r = np.asarray(r, dtype=float)
        if self.variant == "P2":
            y = self.solution.sol(r)
            return y[0], y[1]
        k, a, b = self.k, self.alpha, self.beta
        if k == 0:
            return a + b * np.log(r), b / r
        return a * r**k + b * r**-k, k * (a * r ** (k - 1) - b * r ** (-k - 1))


def _check_radii(r0, r1, k_max):
    if not (0.0 < r0 < r1):
        raise ArgumentError(f"need 0 < r0 < r1, got {r0}, {r1}")
    if k_max < 0:
        raise ArgumentError(f"k_max must be non-negative, got {k_max}")


def annulus_modes_p1(r0, r1, k_max):
    """Harmonic modes with -f'(r0) + f(r0) = 0 and f'(r1) + f(r1) = lambda f(r1)."""
    _check_radii(r0, r1, k_max)
    modes = []
    for k in range(k_max + 1):
        if k == 0:
            alpha, beta = 1.0 / r0 - np.log(r0), 1.0
        else:
            alpha, beta = 1.0, -(r0 ** (2 * k)) * (r0 - k) / (r0 + k)
        probe = AnnulusMode("P1", k, np.nan, alpha, beta, r0, r1)
        (f0, f1), (d0, d1) = probe.profile(np.array([r0, r1]))
        flagged = abs(f1) <= 1e-14 * max(abs(alpha), abs(beta), 1.0)
        if flagged:
            logger.warning("P1 mode k=%d has a vanishing trace on the outer circle", k)
            lam = np.inf
            residual = abs(-d0 + f0)
        else:
            lam = 1.0 + d1 / f1
            residual = max(abs(-d0 + f0), abs(d1 + f1 - lam * f1)) / max(abs(f0), abs(f1))
        modes.append(AnnulusMode("P1", k, float(lam), float(alpha), float(beta), r0, r1, float(residual), flagged))
    return modes


def _integrate_p2(r0, r1, k, max_step):
    def rhs(r, y):
        return [y[1], -y[1] / r + (1.0 + k * k / (r * r)) * y[0]]

    result = solve_ivp(
        rhs,
        (r0, r1),
        [1.0, 0.0],
        method="DOP853",
        rtol=ODE_RTOL,
        atol=ODE_ATOL,
        max_step=max_step,
        dense_output=True,
    )
    if not result.success:
        raise OracleError(f"radial integration failed for k={k}: {result.message}")
    return result


def annulus_modes_p2(r0, r1, k_max):
    """Modes of -Lap u + u = 0, Neumann inside, f'(r1) = lambda f(r1).

    Each profile is integrated twice, the second time with half the maximal
    step; the eigenvalues must agree to HALVING_TOL.
    """
    _check_radii(r0, r1, k_max)
    coarse_step = (r1 - r0) / ODE_STEPS
    modes = []
    for k in range(k_max + 1):
        coarse = _integrate_p2(r0, r1, k, coarse_step)
        fine = _integrate_p2(r0, r1, k, coarse_step / 2.0)
        lam_coarse = coarse.y[1, -1] / coarse.y[0, -1]
        lam = fine.y[1, -1] / fine.y[0, -1]
        drift = abs(lam - lam_coarse) / abs(lam)
        if drift > HALVING_TOL:
            raise OracleError(f"step halving moved lambda_{k} by {drift:.2e} (tolerance {HALVING_TOL:g})")
        modes.append(AnnulusMode("P2", k, float(lam), 1.0, 0.0, r0, r1, float(abs(fine.y[1, 0])), False, fine))
    return modes


def annulus_modes(variant, r0, r1, k_max):
    """Dispatch on the variant's type: P1, P3a and P4a share the harmonic P1 profiles at unit coefficients."""
    if variant in ("P1", "P3a", "P4a"):
        return annulus_modes_p1(r0, r1, k_max)
    if variant in ("P2", "P3b", "P4b"):
        return annulus_modes_p2(r0, r1, k_max)
    raise ArgumentError(f"unknown variant {variant!r}")


def sorted_eigenvalues(modes, count):
    """The first ``count`` eigenvalues with multiplicity, ascending."""
    values = sorted(v for m in modes if not m.flagged for v in [m.eigenvalue] * m.multiplicity)
    if len(values) < count:
        raise ArgumentError(f"only {len(values)} oracle eigenvalues available, {count} requested")
    return np.array(values[:count])


def monotone_onset(modes):
    """Smallest k from which lambda_k increases strictly through the computed range."""
    values = [m.eigenvalue for m in modes]
    onset = len(values) - 1
    while onset > 0 and values[onset - 1] < values[onset]:
        onset -= 1
    return modes[onset].k if modes else 0


def radial_integrals(mode):
    """Radial factors of the mode's quadratic forms.

    Returns ``stiffness`` = int (f'^2 + k^2 f^2 / r^2) r dr, ``volume`` =
    int f^2 r dr, ``outer`` = r1 f(r1)^2, ``inner`` = r0 f(r0)^2, the
    variant's ``a_norm`` and ``rayleigh`` = a_norm / outer, which equals the
    eigenvalue.
    """
    k = mode.k

    def stiff(r):
        f, d = mode.profile(r)
        return (d * d + k * k * f * f / (r * r)) * r

    def mass(r):
        f, _ = mode.profile(r)
        return f * f * r

    opts = {"epsabs": 1e-13, "epsrel": 1e-12, "limit": 200}
    stiffness = quad(stiff, mode.r0, mode.r1, **opts)[0]
    volume = quad(mass, mode.r0, mode.r1, **opts)[0]
    f0 = float(mode.profile(mode.r0)[0])
    f1 = float(mode.profile(mode.r1)[0])
    outer = mode.r1 * f1 * f1
    inner = mode.r0 * f0 * f0
    a_norm = stiffness + (outer + inner if mode.variant == "P1" else volume)
    return {
        "stiffness": stiffness,
        "volume": volume,
        "outer": outer,
        "inner": inner,
        "a_norm": a_norm,
        "rayleigh": a_norm / outer if outer > 0 else np.inf,
    }


@dataclass(frozen=True)
class SplittingFactors:
    """Angular integrals of trig(k_p theta) against the (cos k theta, sin k theta) pair.

    ``matrix`` is the 2x2 matrix of integrals over [0, 2 pi]; ``factors`` its
    deviations from the mean, largest first.
    """
    k: int
    harmonic: int
    trig: str
    matrix: np.ndarray
    factors: tuple
    radial: dict

    @property
    def splits(self):
        return bool(abs(self.factors[0] - self.factors[1]) > 0.0)


def annulus_splitting_factors(mode, harmonic, trig="cos"):
    """Closed-form angular selection for a perturbation proportional to trig(harmonic * theta)."""
    if mode.k == 0:
        raise NotApplicableError("splitting factors need a double mode (k >= 1)")
    if trig not in ("cos", "sin"):
        raise ArgumentError(f"trig must be 'cos' or 'sin', got {trig!r}")
    k, p = mode.k, int(harmonic)
    if p < 0:
        raise ArgumentError("the perturbation harmonic must be non-negative")
    resonant = (np.pi / 2.0) if p == 2 * k else 0.0
    if trig == "cos":
        mean = np.pi if p == 0 else 0.0
        matrix = np.array([[mean + resonant, 0.0], [0.0, mean - resonant]])
    else:
        matrix = np.array([[0.0, resonant], [resonant, 0.0]])
    spread = np.sort(np.linalg.eigvalsh(matrix))[::-1] - np.trace(matrix) / 2.0
    return SplittingFactors(k, p, trig, matrix, (float(spread[0]), float(spread[1])), radial_integrals(mode))


def oracle_table(modes):
    """Rows (variant, k, lambda, multiplicity) for CSV export."""
    return [
        {"variant": m.variant, "k": m.k, "lambda": m.eigenvalue, "multiplicity": m.multiplicity, "flagged": m.flagged}
        for m in modes
    ]
