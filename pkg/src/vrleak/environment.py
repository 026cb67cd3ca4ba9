"""Physical-environment attacks: room extent from head motion, and coarse
geolocation by multilateration over server round-trip times."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InsufficientServers, InvalidValue
from .telemetry import HMD, LatencySample, TelemetryTrace

EARTH_RADIUS_M = 6_371_000.0
FIBER_SPEED_M_S = 2.0e8
ROUTE_INFLATION = 1.5

# HMD never gets closer than this to a wall; added once per side
BODY_CLEARANCE_M = 0.25
ROOM_MARGIN_M = 2 * BODY_CLEARANCE_M

GRID_STEP_DEG = 5.0


@dataclass(frozen=True)
class ServerSite:
    server_id: str
    lat_deg: float
    lon_deg: float

    def __post_init__(self):
        if not -90.0 <= self.lat_deg <= 90.0:
            raise InvalidValue(f"latitude {self.lat_deg} outside [-90, 90]")
        if not -180.0 < self.lon_deg <= 180.0:
            raise InvalidValue(f"longitude {self.lon_deg} outside (-180, 180]")


@dataclass(frozen=True)
class PropagationModel:
    """Round-trip time to distance conversion shared by simulator and attack."""

    v_eff: float = FIBER_SPEED_M_S / ROUTE_INFLATION
    proc_offset_s: float = 0.005

    def __post_init__(self):
        if not 0 < self.v_eff <= 3e8:
            raise InvalidValue(f"v_eff {self.v_eff} outside (0, 3e8]")
        if self.proc_offset_s < 0:
            raise InvalidValue("processing offset must be non-negative")


def load_servers(path=None) -> list[ServerSite]:
    if path is None:
        text = resources.files("vrleak").joinpath("data/servers.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return servers_from_json(json.loads(text))


def servers_from_json(obj) -> list[ServerSite]:
    sites = [ServerSite(str(s["id"]), float(s["lat"]), float(s["lon"])) for s in obj]
    ids = [s.server_id for s in sites]
    if len(set(ids)) != len(ids):
        raise InvalidValue("server ids must be unique")
    return sites


def dump_servers(servers: Sequence[ServerSite]) -> str:
    return json.dumps([{"id": s.server_id, "lat": s.lat_deg, "lon": s.lon_deg} for s in servers], indent=1) + "\n"


# ------------------------------------------------------------------ sphere


def unit_vector(lat_deg, lon_deg) -> np.ndarray:
    lat = np.radians(lat_deg)
    lon = np.radians(lon_deg)
    return np.stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=-1)


def to_latlon(u) -> tuple[float, float]:
    u = np.asarray(u, dtype=float)
    u = u / np.linalg.norm(u)
    lat = float(np.degrees(np.arcsin(np.clip(u[2], -1.0, 1.0))))
    lon = float(np.degrees(np.arctan2(u[1], u[0])))
    if lon <= -180.0:
        lon += 360.0
    return lat, lon


def great_circle_m(lat1, lon1, lat2, lon2, radius=EARTH_RADIUS_M):
    """Haversine distance; broadcasts over array arguments."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dp / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return 2 * radius * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def _angle(u, v):
    # atan2 form stays accurate near 0 and pi, unlike arccos
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    return np.arctan2(cross, np.sum(u * v, axis=-1))


# -------------------------------------------------------------- room size


class RoomEstimate(NamedTuple):
    length_m: float
    width_m: float
    area_m2: float


def estimate_room_dims(trace: TelemetryTrace, margin_m: float = ROOM_MARGIN_M) -> RoomEstimate:
    """Room extent from the p1-p99 range of head X (length) and Z (width).

    Area is reported at 1 m^2 precision.
    """
    x = trace.pos[:, HMD, 0]
    z = trace.pos[:, HMD, 2]
    length = float(np.percentile(x, 99) - np.percentile(x, 1)) + margin_m
    width = float(np.percentile(z, 99) - np.percentile(z, 1)) + margin_m
    return RoomEstimate(length, width, float(round(length * width)))


# ------------------------------------------------------------ geolocation


def rtt_to_distance(sample: LatencySample | float, model: PropagationModel = PropagationModel()) -> float:
    rtt = sample.rtt_s if isinstance(sample, LatencySample) else float(sample)
    return max(0.0, (rtt - model.proc_offset_s) / 2.0) * model.v_eff


class GeoFix(NamedTuple):
    lat_deg: float
    lon_deg: float
    residual_m: float
    converged: bool = True


def _tangent_basis(u):
    helper = np.array([0.0, 0.0, 1.0]) if abs(u[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(helper, u)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(u, e1)
    return e1, e2


def _objective(u, sites, dist):
    r = EARTH_RADIUS_M * _angle(u, sites) - dist
    return float(r @ r)


def grid_objective(sites_xyz, dist, step_deg=GRID_STEP_DEG):
    """Objective at every node of a lat/lon grid; returns (lats, lons, values)."""
    lats = np.arange(-90.0, 90.0 + 1e-9, step_deg)
    lons = np.arange(-180.0, 180.0 - 1e-9, step_deg)
    glat, glon = np.meshgrid(lats, lons, indexing="ij")
    nodes = unit_vector(glat.ravel(), glon.ravel())
    cos = np.clip(nodes @ sites_xyz.T, -1.0, 1.0)
    r = EARTH_RADIUS_M * np.arccos(cos) - dist[None, :]
    return glat.ravel(), glon.ravel(), np.einsum("ij,ij->i", r, r)


def _refine(u, sites, dist, max_iter=200, tol=1e-12):
    """Levenberg-Marquardt on the sphere using tangent-plane steps.

    Only objective-decreasing steps are taken, so the result is never worse
    than the starting node. Returns (u, converged).
    """
    f = _objective(u, sites, dist)
    lam = 1e-9
    for _ in range(max_iter):
        e1, e2 = _tangent_basis(u)
        cosang = sites @ u
        w = sites - cosang[:, None] * u
        wn = np.linalg.norm(w, axis=1)
        ok = wn > 1e-15
        J = np.zeros((len(sites), 2))
        J[ok, 0] = -(w[ok] @ e1) / wn[ok]
        J[ok, 1] = -(w[ok] @ e2) / wn[ok]
        J *= EARTH_RADIUS_M
        r = EARTH_RADIUS_M * _angle(u, sites) - dist
        g = J.T @ r
        H = J.T @ J
        improved = False
        for _ in range(40):
            step = -np.linalg.solve(H + lam * np.diag(np.diag(H) + 1e-30), g)
            ang = float(np.hypot(*step))
            if ang == 0.0:
                return u, True
            direction = (step[0] * e1 + step[1] * e2) / ang
            cand = np.cos(ang) * u + np.sin(ang) * direction
            cand /= np.linalg.norm(cand)
            fc = _objective(cand, sites, dist)
            if fc <= f:
                improved = True
                u, f_old, f = cand, f, fc
                lam = max(lam / 10.0, 1e-12)
                break
            lam *= 10.0
        if not improved:
            # no descent direction left at this resolution: a stationary point
            return u, True
        if ang < tol or f_old - f <= 1e-15 * max(f_old, 1.0):
            return u, True
    return u, False


def geolocate(
    samples: Sequence[LatencySample],
    servers: Sequence[ServerSite],
    model: PropagationModel = PropagationModel(),
) -> GeoFix:
    """Least-squares position on the sphere from per-sample RTT distances.

    A 5 degree grid scan picks the start node, then LM refinement polishes it.
    ``converged`` is False when refinement hit its iteration cap; the point
    returned is still the best one seen.
    """
    by_id = {s.server_id: s for s in servers}
    used = []
    for s in samples:
        if s.server_id not in by_id:
            raise InvalidValue(f"latency sample references unknown server {s.server_id!r}")
        used.append(s)
    if len({s.server_id for s in used}) < 3:
        raise InsufficientServers("need samples from at least 3 distinct servers")

    sites = unit_vector(
        np.array([by_id[s.server_id].lat_deg for s in used]),
        np.array([by_id[s.server_id].lon_deg for s in used]),
    )
    dist = np.array([rtt_to_distance(s, model) for s in used])

    glat, glon, vals = grid_objective(sites, dist)
    best = int(np.argmin(vals))
    u0 = unit_vector(glat[best], glon[best])
    u, converged = _refine(u0, sites, dist)
    lat, lon = to_latlon(u)
    rms = float(np.sqrt(_objective(u, sites, dist) / len(used)))
    return GeoFix(lat, lon, rms, converged)
