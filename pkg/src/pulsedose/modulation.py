"""Saturated-affine modulation laws in effect space and their state-space compositions.

A controller measures the effect ``y = hill(x)`` and sets

    period  = phi_bar(y) = clamp(k2 * y + k1, phi_lo, phi_hi)     [h]
    weight  = f_bar(y)   = clamp(k4 * y + k3, f_lo, f_hi)         [mg/L]

so the state-space laws are ``Phi = phi_bar o hill`` and ``F = f_bar o hill``.
Weight clamps are stored in mg/L; ``Controller.to_dict`` reports them in mg.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError
from .kinetics import HillPD, hill, hill_curvature, hill_inverse, hill_slope

# Relative width within which an argument counts as sitting on a clamp.
KINK_RTOL = 1e-12

NEGATIVE_FEEDBACK = "negative-feedback"
MIXED = "mixed"


@dataclass(frozen=True)
class SatAffineFn:
    slope: float
    intercept: float
    lo: float
    hi: float

    def __post_init__(self):
        if not 0 < self.lo < self.hi:
            raise DomainError(f"clamps must satisfy 0 < lo < hi, got [{self.lo}, {self.hi}]")

    def affine(self, xi):
        return self.slope * xi + self.intercept

    def __call__(self, xi):
        return np.clip(self.affine(xi), self.lo, self.hi)

    def clamp_arguments(self):
        """Arguments at which the affine part meets ``lo`` or ``hi``."""
        if self.slope == 0:
            return ()
        return tuple((c - self.intercept) / self.slope for c in (self.lo, self.hi))


@dataclass(frozen=True)
class Clamps:
    """Global bounds on both laws: hours for the period, mg/L for the weight.

    ``lo == hi`` is allowed here (open-loop periodic dosing) even though a
    ``SatAffineFn`` needs a non-degenerate range.
    """

    phi_lo: float
    phi_hi: float
    f_lo: float
    f_hi: float

    def __post_init__(self):
        if not (0 < self.phi_lo <= self.phi_hi and 0 < self.f_lo <= self.f_hi):
            raise DomainError(f"invalid clamps {self}")

    @classmethod
    def from_mg(cls, phi_lo_h, phi_hi_h, f_lo_mg, f_hi_mg, vd):
        return cls(phi_lo_h, phi_hi_h, f_lo_mg / vd, f_hi_mg / vd)

    @classmethod
    def of(cls, c: "Controller") -> "Clamps":
        return cls(c.phi_bar.lo, c.phi_bar.hi, c.f_bar.lo, c.f_bar.hi)


# 1-8 h between doses and 200-2000 mg per dose (4.7619-47.619 mg/L at vd = 42 L).
PARACETAMOL_CLAMPS = Clamps.from_mg(1.0, 8.0, 200.0, 2000.0, 42.0)


def sat_affine_eval(f: SatAffineFn, xi):
    return f(xi)


@dataclass(frozen=True)
class Controller:
    """Pulse-modulated feedback acting on the measured effect.

    ``phi_bar`` returns hours, ``f_bar`` returns mg/L; ``vd`` is kept only so
    the controller can be serialized with weight clamps in mg.
    """

    phi_bar: SatAffineFn
    f_bar: SatAffineFn
    pd: HillPD
    vd: float = 42.0

    @property
    def k(self):
        return (self.phi_bar.intercept, self.phi_bar.slope,
                self.f_bar.intercept, self.f_bar.slope)

    def to_dict(self) -> dict:
        k1, k2, k3, k4 = self.k
        return {
            "k1": k1, "k2": k2, "k3": k3, "k4": k4,
            "phi_lo_h": self.phi_bar.lo, "phi_hi_h": self.phi_bar.hi,
            "f_lo_mg": self.f_bar.lo * self.vd, "f_hi_mg": self.f_bar.hi * self.vd,
            "pd": {"e0": self.pd.e0, "emax": self.pd.emax, "ec50": self.pd.ec50},
            "vd_l": self.vd,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Controller":
        vd = float(d["vd_l"])
        pd = HillPD(**{key: float(d["pd"][key]) for key in ("e0", "emax", "ec50")})
        phi_bar = SatAffineFn(float(d["k2"]), float(d["k1"]),
                              float(d["phi_lo_h"]), float(d["phi_hi_h"]))
        f_bar = SatAffineFn(float(d["k4"]), float(d["k3"]),
                            float(d["f_lo_mg"]) / vd, float(d["f_hi_mg"]) / vd)
        return cls(phi_bar, f_bar, pd, vd)


def phi_of_x(c: Controller, x):
    return c.phi_bar(hill(x, c.pd))


def f_of_x(c: Controller, x):
    return c.f_bar(hill(x, c.pd))


def _side_activity(fn: SatAffineFn, u: float, du_dx: float):
    """(left_active, right_active) of the affine segment around a point."""
    if fn.slope == 0:
        return False, False
    width = KINK_RTOL * max(abs(fn.lo), abs(fn.hi), 1.0)
    at_lo = abs(u - fn.lo) <= width
    at_hi = abs(u - fn.hi) <= width
    if at_lo:
        return du_dx < 0, du_dx > 0
    if at_hi:
        return du_dx > 0, du_dx < 0
    inside = fn.lo < u < fn.hi
    return inside, inside


class Slopes(NamedTuple):
    """One-sided derivatives ``(F', Phi')`` to the left and right of a point."""

    left: tuple
    right: tuple

    @property
    def is_kink(self) -> bool:
        return self.left != self.right


def slopes_at(c: Controller, x: float) -> Slopes:
    """Derivatives of ``F`` and ``Phi`` at ``x``, one-sided where a clamp engages."""
    xi = float(hill(x, c.pd))
    dxi = float(hill_slope(x, c.pd))
    pairs = []
    for fn in (c.f_bar, c.phi_bar):
        d = fn.slope * dxi
        left, right = _side_activity(fn, fn.affine(xi), d)
        pairs.append((d if left else 0.0, d if right else 0.0))
    (fl, fr), (pl, pr) = pairs
    return Slopes(left=(fl, pl), right=(fr, pr))


def kinks(c: Controller) -> list[float]:
    """Sorted concentrations where either modulation law enters or leaves a clamp."""
    out = set()
    for fn in (c.phi_bar, c.f_bar):
        for xi in fn.clamp_arguments():
            if c.pd.y_floor < xi <= c.pd.e0:
                out.add(float(hill_inverse(xi, c.pd)))
    return sorted(out)


@dataclass
class LawTerms:
    """Values and first two derivatives of both laws on an array of states."""

    phi: np.ndarray
    dphi: np.ndarray
    d2phi: np.ndarray
    f: np.ndarray
    df: np.ndarray
    d2f: np.ndarray


def law_terms(c: Controller, x, phi_active=None, f_active=None) -> LawTerms:
    """Vectorized ``Phi, Phi', Phi'', F, F', F''``.

    By default a law counts as active where its affine value lies strictly
    inside the clamps. Pass explicit booleans to evaluate a whole smooth piece
    with one activity pattern (used at piece endpoints).
    """
    x = np.asarray(x, dtype=float)
    xi = hill(x, c.pd)
    d1 = hill_slope(x, c.pd)
    d2 = hill_curvature(x, c.pd)
    out = []
    for fn, active in ((c.phi_bar, phi_active), (c.f_bar, f_active)):
        u = fn.affine(xi)
        if active is None:
            mask = (u > fn.lo) & (u < fn.hi)
        else:
            mask = np.full(x.shape, bool(active))
        slope = fn.slope * mask
        out.append((np.clip(u, fn.lo, fn.hi), slope * d1, slope * d2))
    (p, dp, d2p), (f, df, d2f) = out
    return LawTerms(p, dp, d2p, f, df, d2f)


def classify_feedback(c: Controller, lo: float = 0.0, hi: float = 200.0, n: int = 2001) -> str:
    """``negative-feedback`` iff F is non-increasing and Phi non-decreasing on [lo, hi]."""
    if not hi >= lo:
        raise DomainError("empty interval")
    grid = np.linspace(lo, hi, n)
    tol = 1e-12
    f_ok = np.all(np.diff(f_of_x(c, grid)) <= tol)
    phi_ok = np.all(np.diff(phi_of_x(c, grid)) >= -tol)
    return NEGATIVE_FEEDBACK if (f_ok and phi_ok) else MIXED
