"""Equatorial and Cartesian sky coordinates and angular distances.

Angles cross the public surface in degrees (positions) and arcminutes
(separations); radians are used only internally.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DomainError

ARCMIN_PER_RAD = 180.0 * 60.0 / np.pi
UNIT_TOLERANCE = 1e-9


class EquatorialCoord(NamedTuple):
    ra: float
    dec: float

    @classmethod
    def make(cls, ra: float, dec: float) -> "EquatorialCoord":
        """Normalize ra into [0, 360) and reject dec outside [-90, 90]."""
        ra = float(ra)
        dec = float(dec)
        if not np.isfinite(ra) or not np.isfinite(dec):
            raise DomainError(f"non-finite coordinate ({ra}, {dec})")
        if dec < -90.0 or dec > 90.0:
            raise DomainError(f"dec {dec} outside [-90, 90]")
        return cls(_wrap_ra(ra), dec)


class UnitVector(NamedTuple):
    cx: float
    cy: float
    cz: float


def _wrap_ra(ra):
    ra = np.mod(ra, 360.0)
    # fmod of a tiny negative value rounds up to exactly 360
    return np.where(ra >= 360.0, 0.0, ra) if np.ndim(ra) else (0.0 if ra >= 360.0 else float(ra))


def radec_to_xyz(ra, dec) -> np.ndarray:
    """Vectorized ra/dec (degrees) to an (n, 3) array of unit vectors."""
    ra = np.radians(np.asarray(ra, dtype=np.float64))
    dec = np.asarray(dec, dtype=np.float64)
    if np.any(~np.isfinite(dec)) or np.any((dec < -90.0) | (dec > 90.0)):
        raise DomainError("dec outside [-90, 90]")
    dec = np.radians(dec)
    cos_dec = np.cos(dec)
    return np.stack([cos_dec * np.cos(ra), cos_dec * np.sin(ra), np.sin(dec)], axis=-1)


def xyz_to_radec(xyz) -> tuple[np.ndarray, np.ndarray]:
    xyz = np.asarray(xyz, dtype=np.float64)
    norm = np.sqrt(xyz[..., 0] ** 2 + xyz[..., 1] ** 2 + xyz[..., 2] ** 2)
    if np.any(np.abs(norm - 1.0) > UNIT_TOLERANCE):
        raise DomainError("input is not a unit vector")
    rho = np.hypot(xyz[..., 0], xyz[..., 1])
    dec = np.degrees(np.arctan2(xyz[..., 2], rho))
    ra = np.where(rho == 0.0, 0.0, np.degrees(np.arctan2(xyz[..., 1], xyz[..., 0])))
    return _wrap_ra(ra), dec


def eq_to_vec(ra: float, dec: float) -> UnitVector:
    c = EquatorialCoord.make(ra, dec)
    x, y, z = radec_to_xyz(c.ra, c.dec)
    return UnitVector(float(x), float(y), float(z))


def vec_to_eq(v) -> EquatorialCoord:
    """Inverse of :func:`eq_to_vec`; ra is 0 at either pole."""
    ra, dec = xyz_to_radec(np.asarray(v, dtype=np.float64).reshape(3))
    return EquatorialCoord(float(ra), float(dec))


def arc_angle(a, b):
    """Great-circle separation in arcminutes, via the chord length.

    Broadcasts over leading axes; returns a float for single vectors.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    dx = a[..., 0] - b[..., 0]
    dy = a[..., 1] - b[..., 1]
    dz = a[..., 2] - b[..., 2]
    half_chord = np.sqrt(dx * dx + dy * dy + dz * dz) * 0.5
    angle = 2.0 * np.arcsin(np.minimum(half_chord, 1.0)) * ARCMIN_PER_RAD
    return float(angle) if angle.ndim == 0 else angle


def cos_radius(radius_arcmin: float) -> float:
    return float(np.cos(np.radians(radius_arcmin / 60.0)))
