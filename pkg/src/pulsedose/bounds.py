"""Ultimate bounds on closed-loop trajectories.

``coarse_bounds`` only uses the clamp values. For negative-feedback controllers
``iterate_bounds`` tightens them with the monotone bracketing iteration on
``psi o psi``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import CertificateRefused
from .kinetics import PlantParams
from .modulation import NEGATIVE_FEEDBACK, Clamps, Controller, classify_feedback, f_of_x, phi_of_x


def coarse_bounds(clamps: Clamps, plant: PlantParams) -> tuple[float, float]:
    """Asymptotic (liminf, limsup) of x(t) valid for any admissible controller."""
    lo = clamps.f_lo / np.expm1(-plant.a * clamps.phi_hi)
    hi = clamps.f_hi / -np.expm1(plant.a * clamps.phi_lo)
    return float(lo), float(hi)


def _require_negative_feedback(c: Controller, plant: PlantParams):
    hi = 2.0 * coarse_bounds(Clamps.of(c), plant)[1]
    if classify_feedback(c, 0.0, hi) != NEGATIVE_FEEDBACK:
        raise CertificateRefused("controller is not negative-feedback; psi is not monotone")


def _psi(c: Controller, plant: PlantParams, x):
    decay = plant.a * phi_of_x(c, x)
    return f_of_x(c, x) * np.exp(decay) / -np.expm1(decay)


def psi(c: Controller, plant: PlantParams, x, check: bool = True):
    """Steady pre-impulse level a constant law frozen at ``x`` would settle to."""
    if check:
        _require_negative_feedback(c, plant)
    return _psi(c, plant, x)


@dataclass
class BoundsReport:
    coarse_lo: float
    coarse_hi: float
    m_star: float
    m_star_upper: float
    tightened_hi: float
    decay_scaled_hi: float
    iterations: int
    converged: bool
    duality_residual: float
    sequences: list = field(default_factory=list)

    def steps_to_gap(self, eps: float) -> int | None:
        """First iteration index at which ``M_n - m_n <= eps``."""
        for n, (m, big_m) in enumerate(self.sequences):
            if big_m - m <= eps:
                return n
        return None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sequences"] = [list(p) for p in self.sequences]
        return d

    def sequences_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "m_n", "M_n"])
        for n, (m, big_m) in enumerate(self.sequences):
            w.writerow([n, repr(float(m)), repr(float(big_m))])
        return buf.getvalue()


def iterate_bounds(c: Controller, plant: PlantParams, tol: float = 1e-9,
                   max_iter: int = 10_000) -> BoundsReport:
    """Bracket every steady state between the extreme fixed points of psi o psi.

    ``m_0 = 0`` climbs and ``M_0 = psi(0)`` descends; iteration stops once the
    gap shrinks by less than ``tol`` in a step. Without convergence the last
    pair still brackets all steady states.

    The post-impulse ceiling ``exp(-a Phi(M*)) M*`` (``decay_scaled_hi``) can
    exceed the coarse ceiling when M* is large; both are valid, so
    ``tightened_hi`` is their minimum.
    """
    _require_negative_feedback(c, plant)
    lo, hi = coarse_bounds(Clamps.of(c), plant)
    m = 0.0
    big_m = float(_psi(c, plant, 0.0))
    seq = [(m, big_m)]
    converged = False
    for _ in range(max_iter):
        m_next = float(_psi(c, plant, _psi(c, plant, m)))
        big_m_next = float(_psi(c, plant, m_next))
        shrink = (big_m - m) - (big_m_next - m_next)
        if shrink < tol:
            converged = True
            break
        m, big_m = m_next, big_m_next
        seq.append((m, big_m))
    residual = abs(float(_psi(c, plant, big_m)) - m)
    scaled_hi = float(np.exp(-plant.a * phi_of_x(c, big_m)) * big_m)
    return BoundsReport(lo, hi, m, big_m, min(scaled_hi, hi), scaled_hi, len(seq) - 1,
                        converged, residual, seq)
