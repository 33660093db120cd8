"""Pre-impulse return map ``Q(x) = exp(a Phi(x)) (x + F(x))`` and its certificates.

Fixed points of Q are 1-cycles of the hybrid loop. The certificates below turn
the continuum conditions on ``|Q'|`` into finite checks: Q is smooth between
the (at most four) clamp kinks, so each piece is scanned on a uniform grid
and the grid maximum is padded by ``spacing * max|Q''|`` on that piece.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import bisect

from .bounds import coarse_bounds
from .errors import CertificateRefused, DomainError
from .kinetics import PlantParams, hill
from .modulation import (
    NEGATIVE_FEEDBACK,
    Clamps,
    Controller,
    classify_feedback,
    f_of_x,
    kinks,
    law_terms,
    phi_of_x,
    slopes_at,
)

GLOBAL = "globally-attracting"
LOCAL_EXP = "locally-exponential"
LOCAL_SUPEREXP = "locally-super-exponential"
UNCERTIFIED = "uncertified"

DEADBEAT_TOL = 1e-8
ROOT_MERGE = 1e-6


def q_map(c: Controller, plant: PlantParams, x):
    if np.any(np.asarray(x) < 0):
        raise DomainError("return map is defined for x >= 0")
    return np.exp(plant.a * phi_of_x(c, x)) * (x + f_of_x(c, x))


def _q_derivs(c, plant, x, phi_active=None, f_active=None):
    t = law_terms(c, x, phi_active, f_active)
    a = plant.a
    decay = np.exp(a * t.phi)
    mass = np.asarray(x, dtype=float) + t.f
    q1 = decay * (1.0 + t.df + a * mass * t.dphi)
    q2 = decay * (a * a * t.dphi ** 2 * mass + 2.0 * a * t.dphi * (1.0 + t.df)
                  + a * t.d2phi * mass + t.d2f)
    return q1, q2


def q_prime_sides(c: Controller, plant: PlantParams, x: float) -> tuple[float, float]:
    """Left and right derivative of Q at ``x``; equal away from kinks."""
    s = slopes_at(c, x)
    decay = float(np.exp(plant.a * phi_of_x(c, x)))
    mass = x + float(f_of_x(c, x))
    left, right = (decay * (1.0 + df + plant.a * mass * dphi) for df, dphi in s)
    return float(left), float(right)


def q_prime(c: Controller, plant: PlantParams, x: float) -> float:
    """Derivative of Q; at a kink, whichever one-sided value is larger in magnitude."""
    left, right = q_prime_sides(c, plant, x)
    return left if abs(left) >= abs(right) else right


def q_second(c: Controller, plant: PlantParams, x):
    """Second derivative of Q on the smooth piece containing each ``x``."""
    return _q_derivs(c, plant, x)[1]


def default_search_hi(c: Controller, plant: PlantParams) -> float:
    return coarse_bounds(Clamps.of(c), plant)[1] * 1.01 + 1.0


def find_fixed_points(c: Controller, plant: PlantParams, search_hi: float | None = None,
                      xtol: float = 1e-12, grid_n: int = 10_000) -> list[float]:
    """All fixed points of Q on ``[0, search_hi]``.

    For negative-feedback controllers ``x - Q(x)`` is strictly increasing and a
    single bisection suffices; otherwise sign changes are located on a grid
    and each is refined.
    """
    hi = default_search_hi(c, plant) if search_hi is None else float(search_hi)

    def gap(x):
        return float(x - q_map(c, plant, x))

    if gap(0.0) >= 0 or gap(hi) <= 0:
        raise RuntimeError(f"x - Q(x) has no sign change on [0, {hi}]")
    if classify_feedback(c, 0.0, hi) == NEGATIVE_FEEDBACK:
        return [bisect(gap, 0.0, hi, xtol=xtol)]

    grid = np.linspace(0.0, hi, grid_n)
    g = grid - q_map(c, plant, grid)
    roots = []
    for i in np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) <= 0):
        if g[i] == 0:
            r = float(grid[i])
        elif g[i + 1] == 0:
            continue
        else:
            r = bisect(gap, grid[i], grid[i + 1], xtol=xtol)
        if not roots or r - roots[-1] > ROOT_MERGE:
            roots.append(r)
    if not roots:
        raise RuntimeError("no fixed point located")
    return roots


def principal_fixed_point(c: Controller, plant: PlantParams) -> float:
    """The fixed point with the smallest ``|Q'|``; the unique one under negative feedback."""
    roots = find_fixed_points(c, plant)
    return min(roots, key=lambda r: abs(q_prime(c, plant, r)))


@dataclass
class Contraction:
    granted: bool
    q: float
    interval: tuple[float, float]
    witness_x: float | None
    grid_sup: float
    margin: float


def _pieces(c: Controller, lo: float, hi: float):
    cuts = [lo] + [k for k in kinks(c) if lo < k < hi] + [hi]
    for p0, p1 in zip(cuts[:-1], cuts[1:]):
        if p1 > p0:
            yield p0, p1


def contraction_certificate(c: Controller, plant: PlantParams,
                            interval: tuple[float, float] | None = None,
                            grid_n: int = 1000) -> Contraction:
    """Certify ``|Q'| <= q < 1`` almost everywhere on ``interval``.

    Defaults to ``[0, coarse upper bound]``. That interval is forward invariant
    and absorbs every trajectory, so a grant there certifies global attraction.
    """
    if grid_n < 1000:
        raise DomainError("grid_n must be at least 1000")
    if interval is None:
        interval = (0.0, coarse_bounds(Clamps.of(c), plant)[1])
    lo, hi = float(interval[0]), float(interval[1])
    if not 0 <= lo < hi:
        raise DomainError(f"bad interval {interval}")
    worst_q, worst_sup, worst_margin, witness = -np.inf, 0.0, 0.0, None
    violator = None
    for p0, p1 in _pieces(c, lo, hi):
        xi_mid = float(hill(0.5 * (p0 + p1), c.pd))
        phi_on = c.phi_bar.lo < c.phi_bar.affine(xi_mid) < c.phi_bar.hi
        f_on = c.f_bar.lo < c.f_bar.affine(xi_mid) < c.f_bar.hi
        grid = np.linspace(p0, p1, grid_n)
        q1, q2 = _q_derivs(c, plant, grid, phi_on, f_on)
        absq = np.abs(q1)
        i = int(np.argmax(absq))
        margin = (grid[1] - grid[0]) * float(np.max(np.abs(q2)))
        q_piece = float(absq[i]) + margin
        if violator is None and absq[i] >= 1.0:
            violator = float(grid[i])
        if q_piece > worst_q:
            worst_q, worst_sup, worst_margin, witness = q_piece, float(absq[i]), margin, float(grid[i])
    granted = bool(worst_q < 1.0)
    if not granted and violator is not None:
        witness = violator
    return Contraction(granted, float(worst_q), (lo, hi), None if granted else witness,
                       worst_sup, float(worst_margin))


def basin_estimate(c: Controller, plant: PlantParams, x_star: float,
                   delta_max: float | None = None, delta_min: float = 1e-6,
                   grid_n: int = 1000, rtol: float = 1e-3) -> float:
    """Largest found ``delta`` with ``|Q'| < 1`` on ``[x* - delta, x* + delta]``.

    The interval is clipped at zero. Raises ``CertificateRefused`` if even
    ``delta_min`` fails.
    """
    if delta_max is None:
        delta_max = coarse_bounds(Clamps.of(c), plant)[1]

    def ok(delta):
        iv = (max(0.0, x_star - delta), x_star + delta)
        return contraction_certificate(c, plant, iv, grid_n).granted

    if ok(delta_max):
        return float(delta_max)
    if not ok(delta_min):
        raise CertificateRefused(f"|Q'| >= 1 arbitrarily close to x* = {x_star}",
                                 witness=q_prime(c, plant, x_star))
    good, bad = delta_min, delta_max
    while bad - good > rtol * good:
        mid = 0.5 * (good + bad)
        if ok(mid):
            good = mid
        else:
            bad = mid
    return float(good)


@dataclass
class SuperExp:
    alpha: float
    radius: float
    delta: float

    def error_bound(self, e0: float, n: int) -> float:
        """Guaranteed ``|x_n - x*|`` after n steps from an initial error ``e0 <= radius``."""
        return (self.alpha * e0) ** (2 ** n) / self.alpha


def quadratic_constant(q, x_star: float, delta: float, grid_n: int = 2000,
                       inflate: float = 1.05) -> float:
    """Inflated grid max of ``|q(x) - x*| / (x - x*)^2`` within ``delta`` of x*, clipped at 0."""
    lo = max(0.0, x_star - delta)
    grid = np.concatenate([np.linspace(lo, x_star, grid_n, endpoint=False),
                           np.linspace(x_star + delta, x_star, grid_n, endpoint=False)])
    grid = grid[grid != x_star]
    ratio = np.abs(np.asarray(q(grid)) - x_star) / (grid - x_star) ** 2
    return inflate * float(np.max(ratio))


def superexp_alpha(c: Controller, plant: PlantParams, x_star: float, delta: float,
                   grid_n: int = 2000, inflate: float = 1.05) -> SuperExp:
    """Quadratic-convergence constant ``alpha`` with ``|Q(x) - x*| <= alpha (x - x*)^2``.

    Only issued for deadbeat designs (``Q'(x*) = 0``) whose fixed point sits
    strictly inside a smooth piece of Q.
    """
    if not delta > 0:
        raise DomainError("delta must be positive")
    qp = q_prime(c, plant, x_star)
    if abs(qp) > DEADBEAT_TOL:
        raise CertificateRefused(f"Q'(x*) = {qp:.3e} is not zero", witness=qp)
    if slopes_at(c, x_star).is_kink:
        raise CertificateRefused("x* sits on a clamp kink; Q is not C2 there", witness=x_star)
    alpha = quadratic_constant(lambda x: q_map(c, plant, x), x_star, delta, grid_n, inflate)
    return SuperExp(alpha, min(delta, 1.0 / alpha), delta)


@dataclass
class StabilityReport:
    x_star: float
    q_prime_at_star: float
    contraction_q: float | None
    basin_radius: float | None
    alpha: float | None
    superexp_radius: float | None
    classification: str
    witness_x: float | None = None
    fixed_points: list | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def analyze(c: Controller, plant: PlantParams, x_star: float | None = None) -> StabilityReport:
    """Run every certificate that applies and classify the designed 1-cycle.

    Without an explicit ``x_star`` the fixed point with the smallest ``|Q'|``
    is analyzed.
    """
    roots = find_fixed_points(c, plant)
    if x_star is None:
        x_star = principal_fixed_point(c, plant)
    x_star = float(x_star)
    qp = float(q_prime(c, plant, x_star))
    glob = contraction_certificate(c, plant)
    contraction_q = glob.q if glob.granted else None
    try:
        delta = basin_estimate(c, plant, x_star)
    except CertificateRefused:
        delta = None
    alpha = radius = None
    if delta is not None and abs(qp) <= DEADBEAT_TOL:
        try:
            se = superexp_alpha(c, plant, x_star, delta)
            alpha, radius = se.alpha, se.radius
        except CertificateRefused:
            pass
    if glob.granted and len(roots) == 1:
        cls = GLOBAL
    elif alpha is not None:
        cls = LOCAL_SUPEREXP
    elif delta is not None:
        cls = LOCAL_EXP
    else:
        cls = UNCERTIFIED
    return StabilityReport(x_star, qp, contraction_q, delta, alpha, radius, cls,
                           glob.witness_x, roots)
