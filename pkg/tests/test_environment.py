import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import static_trace
from vrleak.environment import (
    PropagationModel,
    ServerSite,
    dump_servers,
    estimate_room_dims,
    geolocate,
    great_circle_m,
    load_servers,
    rtt_to_distance,
    servers_from_json,
)
from vrleak.errors import InsufficientServers, InvalidValue
from vrleak.simulate import simulate_latency
from vrleak.telemetry import LatencySample, TelemetryTrace

SERVERS = load_servers()


def head_path(xz):
    xz = np.asarray(xz, float)
    pos = np.zeros((len(xz), 3, 3))
    pos[:, 0, 0], pos[:, 0, 1], pos[:, 0, 2] = xz[:, 0], 1.6, xz[:, 1]
    return TelemetryTrace(np.arange(len(xz)) * 0.01, pos)


# ------------------------------------------------------------------ room


def test_four_corners():
    room = estimate_room_dims(head_path([(0, 0), (4, 0), (4, 3), (0, 3)]))
    assert room.length_m == pytest.approx(4.5)
    assert room.width_m == pytest.approx(3.5)
    assert room.area_m2 == 16.0


def test_standing_still_gives_clearance_only():
    room = estimate_room_dims(static_trace())
    assert (room.length_m, room.width_m) == (0.5, 0.5)
    assert room.area_m2 == 0.0


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_room_translation_invariant(dx, dz):
    rng = np.random.default_rng(0)
    xz = rng.uniform(0, 3, (200, 2))
    a = estimate_room_dims(head_path(xz))
    b = estimate_room_dims(head_path(xz + [dx, dz]))
    assert b.length_m == pytest.approx(a.length_m, abs=1e-9)
    assert b.width_m == pytest.approx(a.width_m, abs=1e-9)


def test_room_ignores_brief_outliers():
    xz = np.zeros((1000, 2))
    xz[:, 0] = np.linspace(0, 2, 1000)
    xz[500] = (40.0, 40.0)  # one tracking glitch
    assert estimate_room_dims(head_path(xz)).width_m < 1.0


# ------------------------------------------------------------------ rtt and servers


def test_rtt_to_distance():
    m = PropagationModel(2.0e8, 0.005)
    assert rtt_to_distance(0.005, m) == 0.0
    assert rtt_to_distance(0.001, m) == 0.0  # faster than the offset clips to zero
    assert rtt_to_distance(0.007, m) == pytest.approx(2.0e5)
    assert rtt_to_distance(LatencySample("a", 0.025, 0.0), m) == pytest.approx(2.0e6)


def test_propagation_model_validation():
    with pytest.raises(InvalidValue):
        PropagationModel(4e8)
    with pytest.raises(InvalidValue):
        PropagationModel(2e8, -1.0)


def test_server_list():
    assert len(SERVERS) >= 3
    assert servers_from_json(__import__("json").loads(dump_servers(SERVERS))) == SERVERS
    with pytest.raises(InvalidValue):
        servers_from_json([{"id": "a", "lat": 0, "lon": 0}] * 2)
    with pytest.raises(InvalidValue):
        ServerSite("x", 91.0, 0.0)


def test_great_circle_known_distance():
    # one degree of longitude on the equator
    assert great_circle_m(0, 0, 0, 1) == pytest.approx(2 * np.pi * 6_371_000 / 360, rel=1e-12)


# ------------------------------------------------------------------ geolocation


@pytest.mark.parametrize("where", [(52.52, 13.40), (40.71, -74.01), (35.68, 139.69), (-33.87, 151.21), (37.43, -122.17)])
def test_noiseless_geolocation_within_10km(where):
    samples = simulate_latency(where, SERVERS, 0.0)
    fix = geolocate(samples, SERVERS)
    assert great_circle_m(fix.lat_deg, fix.lon_deg, *where) <= 10_000


def test_needs_three_servers():
    two = SERVERS[:2]
    with pytest.raises(InsufficientServers):
        geolocate(simulate_latency((10.0, 10.0), two, 0.0, samples_per_server=5), two)


def test_unknown_server_in_samples():
    with pytest.raises(InvalidValue):
        geolocate([LatencySample("nowhere", 0.02)] * 3, SERVERS)


@settings(max_examples=10)
@given(st.permutations(range(len(SERVERS))))
def test_server_order_does_not_matter(perm):
    samples = simulate_latency((48.0, 2.0), SERVERS, 0.0)
    base = geolocate(samples, SERVERS)
    fix = geolocate([samples[i] for i in perm], [SERVERS[i] for i in perm])
    assert great_circle_m(fix.lat_deg, fix.lon_deg, base.lat_deg, base.lon_deg) < 1.0


@settings(max_examples=10)
@given(st.floats(-90, 90))
def test_longitude_rotation_moves_the_fix(shift):
    def rot(lon):
        return (lon + shift + 180.0) % 360.0 - 180.0 or 180.0

    where = (20.0, 10.0)
    sites = SERVERS
    moved = [ServerSite(s.server_id, s.lat_deg, rot(s.lon_deg)) for s in sites]
    a = geolocate(simulate_latency(where, sites, 0.0), sites)
    b = geolocate(simulate_latency((where[0], rot(where[1])), moved, 0.0), moved)
    assert great_circle_m(b.lat_deg, b.lon_deg, a.lat_deg, rot(a.lon_deg)) < 1_000
