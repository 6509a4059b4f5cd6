"""Transverse Mercator projection on the WGS84 ellipsoid (Krüger series, 6th order in n)."""

from __future__ import annotations

import math
from typing import NamedTuple, Union

import numpy as np

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
UTM_K0 = 0.9996
MAX_LON_OFFSET_DEG = 6.0
MAX_ABS_LAT_DEG = 84.0


class UtmOrigin(NamedTuple):
    """Local frame whose (0, 0) is the UTM coordinate (easting, northing) of ``zone``."""

    zone: int
    easting: float
    northing: float
    south: bool = False


Origin = Union[tuple, UtmOrigin]


def _series(n: float):
    alpha = (
        n / 2 - 2 * n**2 / 3 + 5 * n**3 / 16 + 41 * n**4 / 180 - 127 * n**5 / 288 + 7891 * n**6 / 37800,
        13 * n**2 / 48 - 3 * n**3 / 5 + 557 * n**4 / 1440 + 281 * n**5 / 630 - 1983433 * n**6 / 1935360,
        61 * n**3 / 240 - 103 * n**4 / 140 + 15061 * n**5 / 26880 + 167603 * n**6 / 181440,
        49561 * n**4 / 161280 - 179 * n**5 / 168 + 6601661 * n**6 / 7257600,
        34729 * n**5 / 80640 - 3418889 * n**6 / 1995840,
        212378941 * n**6 / 319334400,
    )
    beta = (
        n / 2 - 2 * n**2 / 3 + 37 * n**3 / 96 - n**4 / 360 - 81 * n**5 / 512 + 96199 * n**6 / 604800,
        n**2 / 48 + n**3 / 15 - 437 * n**4 / 1440 + 46 * n**5 / 105 - 1118711 * n**6 / 3870720,
        17 * n**3 / 480 - 37 * n**4 / 840 - 209 * n**5 / 4480 + 5569 * n**6 / 90720,
        4397 * n**4 / 161280 - 11 * n**5 / 504 - 830251 * n**6 / 7257600,
        4583 * n**5 / 161280 - 108847 * n**6 / 3991680,
        20648693 * n**6 / 638668800,
    )
    return alpha, beta


class TransverseMercator:
    def __init__(self, lon0: float, k0: float = 1.0, false_easting: float = 0.0, false_northing: float = 0.0,
                 a: float = WGS84_A, f: float = WGS84_F):
        self.lon0 = float(lon0)
        self.k0 = k0
        self.fe = false_easting
        self.fn = false_northing
        self.e = math.sqrt(f * (2 - f))
        n = f / (2 - f)
        self.A = a / (1 + n) * (1 + n**2 / 4 + n**4 / 64 + n**6 / 256)
        self.alpha, self.beta = _series(n)

    def _check(self, lat, lon):
        lat = np.asarray(lat, dtype=float)
        lon = np.asarray(lon, dtype=float)
        if not (np.all(np.isfinite(lat)) and np.all(np.isfinite(lon))):
            raise ValueError("non-finite geodetic coordinate")
        dlon = (lon - self.lon0 + 180.0) % 360.0 - 180.0
        if np.any(np.abs(lat) > MAX_ABS_LAT_DEG) or np.any(np.abs(dlon) > MAX_LON_OFFSET_DEG):
            raise ValueError(
                f"coordinate outside the projection zone (|lat| <= {MAX_ABS_LAT_DEG}, "
                f"|lon - {self.lon0}| <= {MAX_LON_OFFSET_DEG})"
            )
        return lat, dlon

    def _tau_prime(self, tau):
        e = self.e
        sigma = np.sinh(e * np.arctanh(e * tau / np.sqrt(1 + tau**2)))
        return tau * np.sqrt(1 + sigma**2) - sigma * np.sqrt(1 + tau**2)

    def forward(self, lat, lon):
        lat, dlon = self._check(lat, lon)
        phi = np.radians(lat)
        lam = np.radians(dlon)
        tp = self._tau_prime(np.tan(phi))
        xi_p = np.arctan2(tp, np.cos(lam))
        eta_p = np.arcsinh(np.sin(lam) / np.sqrt(tp**2 + np.cos(lam) ** 2))
        xi, eta = xi_p.copy(), eta_p.copy()
        for j, a_j in enumerate(self.alpha, start=1):
            xi = xi + a_j * np.sin(2 * j * xi_p) * np.cosh(2 * j * eta_p)
            eta = eta + a_j * np.cos(2 * j * xi_p) * np.sinh(2 * j * eta_p)
        x = self.fe + self.k0 * self.A * eta
        y = self.fn + self.k0 * self.A * xi
        return x, y

    def inverse(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        xi = (y - self.fn) / (self.k0 * self.A)
        eta = (x - self.fe) / (self.k0 * self.A)
        xi_p, eta_p = xi.copy(), eta.copy()
        for j, b_j in enumerate(self.beta, start=1):
            xi_p = xi_p - b_j * np.sin(2 * j * xi) * np.cosh(2 * j * eta)
            eta_p = eta_p - b_j * np.cos(2 * j * xi) * np.sinh(2 * j * eta)
        tau_p = np.sin(xi_p) / np.sqrt(np.sinh(eta_p) ** 2 + np.cos(xi_p) ** 2)
        lam = np.arctan2(np.sinh(eta_p), np.cos(xi_p))
        # Newton iteration for tan(phi) from the conformal tan(chi)
        tau = tau_p.copy()
        e2 = self.e**2
        for _ in range(8):
            tp = self._tau_prime(tau)
            dtau = (tau_p - tp) / np.sqrt(1 + tp**2) * (1 + (1 - e2) * tau**2) / ((1 - e2) * np.sqrt(1 + tau**2))
            tau = tau + dtau
            if np.all(np.abs(dtau) < 1e-14):
                break
        lat = np.degrees(np.arctan(tau))
        lon = self.lon0 + np.degrees(lam)
        return lat, lon


def utm_zone(lon: float) -> int:
    return int((lon + 180.0) // 6.0) % 60 + 1


def utm_projection(zone: int, south: bool = False) -> TransverseMercator:
    return TransverseMercator(lon0=zone * 6 - 183, k0=UTM_K0, false_easting=500000.0,
                              false_northing=10000000.0 if south else 0.0)


def _projector(origin: Origin):
    if isinstance(origin, UtmOrigin):
        return utm_projection(origin.zone, origin.south), float(origin.easting), float(origin.northing)
    lat0, lon0 = (float(v) for v in origin)
    tm = TransverseMercator(lon0=lon0)
    _, n0 = tm.forward(lat0, lon0)
    return tm, 0.0, float(n0)


def _scalar(v):
    v = np.asarray(v)
    return float(v) if v.ndim == 0 else v


def project_geodetic(lat, lon, origin: Origin):
    """Project WGS84 degrees to local meters (x east, y north) about ``origin``.

    ``origin`` is either ``(lat0, lon0)`` (a transverse Mercator with central
    meridian ``lon0`` and unit scale, so the origin maps to (0, 0)) or a
    :class:`UtmOrigin`, in which case the result is the UTM coordinate minus the
    origin's easting and northing.
    """
    tm, e0, n0 = _projector(origin)
    x, y = tm.forward(lat, lon)
    return _scalar(x - e0), _scalar(y - n0)


def unproject_geodetic(x, y, origin: Origin):
    tm, e0, n0 = _projector(origin)
    lat, lon = tm.inverse(np.asarray(x, dtype=float) + e0, np.asarray(y, dtype=float) + n0)
    return _scalar(lat), _scalar(lon)
