"""Single-compartment kinetics with a Hill-type effect map.

Everything here is closed form. Concentrations are in mg/L, times in hours,
doses in mg; ``dose_to_conc`` is the only place mg becomes mg/L.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class PlantParams:
    """First-order elimination ``dx/dt = a x`` plus a volume of distribution.

    ``vd`` has no counterpart in the dynamics; it only converts a dose in mg
    to a concentration jump in mg/L.
    """

    a: float
    vd: float = 42.0

    def __post_init__(self):
        if not self.a < 0:
            raise DomainError(f"elimination rate a must be negative, got {self.a}")
        if not self.vd > 0:
            raise DomainError(f"volume of distribution must be positive, got {self.vd}")


@dataclass(frozen=True)
class HillPD:
    """Effect model ``y = e0 - emax x / (ec50 + x)``, decreasing in x."""

    e0: float
    emax: float
    ec50: float

    def __post_init__(self):
        if not (self.emax > 0 and self.ec50 > 0):
            raise DomainError("emax and ec50 must be positive")
        if not self.emax <= self.e0:
            raise DomainError("emax must not exceed e0")

    @property
    def y_floor(self) -> float:
        """Infimum of the effect, approached as x grows without bound."""
        return self.e0 - self.emax


# One-compartment paracetamol kinetics with a VAS pain-score effect map.
# vd = 42 L is inferred: it is the volume at which 200 mg / 2000 mg dose clamps
# give ultimate bounds of 0.5673 and 194.987 mg/L. Treat it as an assumption.
PARACETAMOL_PLANT = PlantParams(a=-0.28, vd=42.0)
PARACETAMOL_PD = HillPD(e0=10.0, emax=5.17, ec50=9.98)


def _check_nonneg(name, value):
    if np.any(np.asarray(value) < 0):
        raise DomainError(f"{name} must be non-negative")


def flow(x0, dt, plant: PlantParams):
    """State after free decay for ``dt`` hours from ``x0``."""
    _check_nonneg("x0", x0)
    _check_nonneg("dt", dt)
    return x0 * np.exp(plant.a * np.asarray(dt, dtype=float))


def decay_time(x_from: float, x_to: float, plant: PlantParams) -> float:
    """Hours needed to decay from ``x_from`` down to ``x_to``; inf if never."""
    if x_to <= 0 or x_from <= 0:
        raise DomainError("decay_time needs positive endpoints")
    if x_from < x_to:
        return np.inf
    return float(np.log(x_from / x_to) / -plant.a)


def hill(x, pd: HillPD):
    _check_nonneg("concentration", x)
    return pd.e0 - pd.emax * x / (pd.ec50 + x)


def hill_inverse(y, pd: HillPD):
    """Concentration producing effect ``y``; valid for ``e0 - emax < y <= e0``."""
    y_arr = np.asarray(y)
    if np.any(y_arr > pd.e0) or np.any(y_arr <= pd.y_floor):
        raise DomainError(f"effect {y} outside ({pd.y_floor}, {pd.e0}]")
    drop = pd.e0 - y
    return pd.ec50 * drop / (pd.emax - drop)


def hill_slope(x, pd: HillPD):
    _check_nonneg("concentration", x)
    return -pd.emax * pd.ec50 / (pd.ec50 + x) ** 2


def hill_curvature(x, pd: HillPD):
    """Second derivative of the effect map (positive everywhere)."""
    _check_nonneg("concentration", x)
    return 2.0 * pd.emax * pd.ec50 / (pd.ec50 + x) ** 3


def dose_to_conc(dose, plant: PlantParams):
    _check_nonneg("dose", dose)
    return dose / plant.vd
