import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import static_trace
from vrleak.capabilities import ATTRIBUTE_TIERS, allowed, check_report, downsample, mask_for_tier
from vrleak.errors import CapabilityLeak
from vrleak.telemetry import AttributeReport, TelemetryTrace, Tier


@pytest.mark.parametrize("attr,tier,ok", [
    ("ipd", Tier.PRIVILEGED_I, True),
    ("ipd", Tier.PRIVILEGED_III, False),
    ("ipd", Tier.NON_PRIVILEGED, False),
    ("geo_lat", Tier.PRIVILEGED_II, True),
    ("geo_lat", Tier.PRIVILEGED_I, False),
    ("geo_lat", Tier.NON_PRIVILEGED, False),
    ("refresh_band", Tier.NON_PRIVILEGED, True),
    ("refresh_band", Tier.PRIVILEGED_II, False),
    ("height", Tier.NON_PRIVILEGED, True),
    ("no_such_attribute", Tier.PRIVILEGED_II, False),
])
def test_allowed(attr, tier, ok):
    assert allowed(attr, tier) is ok
    assert allowed(attr, tier.value) is ok


def test_every_attribute_has_at_least_one_tier():
    assert all(tiers for tiers in ATTRIBUTE_TIERS.values())


def test_check_report_flags_leaks():
    rep = AttributeReport("u", Tier.NON_PRIVILEGED)
    rep.add("height", 1.7, "m", 1.0, "anthro.height")
    check_report(rep)
    rep.add("ipd", 0.063, "m", 1.0, "anthro.ipd")
    with pytest.raises(CapabilityLeak, match="ipd"):
        check_report(rep)


def test_downsample_keeps_latest_frame():
    # 90 Hz frames whose x coordinate is the frame index
    n = 91
    pos = np.zeros((n, 3, 3))
    pos[:, 0, 0] = np.arange(n)
    out = downsample(TelemetryTrace(np.arange(n) / 90.0, pos, None, 90.0))
    assert len(out) == 31
    assert out.nominal_rate_hz == 30.0
    assert np.allclose(np.diff(out.t), 1 / 30)
    assert list(out.pos[:4, 0, 0]) == [0, 3, 6, 9]


@given(st.floats(31, 240), st.integers(2, 400))
def test_downsampled_frames_exist_in_source(rate, n):
    trace = TelemetryTrace(np.arange(n) / rate, np.random.default_rng(n).normal(size=(n, 3, 3)), None, rate)
    out = downsample(trace)
    src = {tuple(p.ravel()) for p in trace.pos}
    assert all(tuple(p.ravel()) in src for p in out.pos)
    assert out.t[0] == trace.t[0] and out.t[-1] <= trace.t[-1]
    # the relayed frame is never from the future
    idx = [int(np.flatnonzero((trace.pos == p).all(axis=(1, 2)))[0]) for p in out.pos]
    assert all(trace.t[i] <= tk + 1e-12 for i, tk in zip(idx, out.t))


@pytest.mark.parametrize("tier", list(Tier))
def test_mask_for_tier(tier, clean_session):
    _, b = clean_session
    m = mask_for_tier(b, tier)
    assert m.attacker_tier is tier
    assert (m.device_api is not None) == tier.reads_device_api
    assert bool(m.latency) == tier.reads_network
    if tier.full_rate_telemetry:
        assert m.trace is b.trace
    else:
        assert m.trace.nominal_rate_hz == 30.0
    assert m.events == b.events


def test_mask_leaves_30hz_trace_alone():
    t = static_trace(rate=30.0)
    from vrleak.telemetry import SessionBundle

    b = SessionBundle(t, (), None, (), Tier.NON_PRIVILEGED)
    assert mask_for_tier(b, Tier.NON_PRIVILEGED).trace is t
