import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import population, session
from vrleak.capabilities import allowed
from vrleak.pipeline import (
    accuracy_markdown,
    denied,
    evaluate,
    perfect_report,
    run_attacks,
    truth_values,
)
from vrleak.telemetry import Tier


def test_perfect_reports_score_one():
    ps = {p.user_id: p for p in population(60, 2)}
    result = evaluate(ps, {u: perfect_report(p) for u, p in ps.items()})
    assert result["n_users"] == 60
    scored = [r for r in result["rows"] if r["n"]]
    assert len(scored) > 25
    assert all(r["accuracy"] == 1.0 for r in scored), [r for r in scored if r["accuracy"] != 1.0]


def test_missing_attribute_counts_as_miss():
    ps = {p.user_id: p for p in population(10, 2)}
    reps = {u: perfect_report(p) for u, p in ps.items()}
    del reps["u0003"].attributes["height"]
    rows = {(r["attribute"], r["criterion"]): r for r in evaluate(ps, reps)["rows"]}
    assert rows[("Height", "within 5 cm")]["accuracy"] == 0.9


@settings(max_examples=10)
@given(st.randoms(use_true_random=False))
def test_order_of_users_does_not_matter(rnd):
    ps = list(population(20, 2))
    reps = [perfect_report(p) for p in ps]
    for r in reps[::3]:
        h = r.attributes.pop("height")
        r.add("height", h.value + 0.06, "m", 1.0, "oracle")
    base = evaluate({p.user_id: p for p in ps}, {r.session_id: r for r in reps})
    order = list(range(len(ps)))
    rnd.shuffle(order)
    shuffled = evaluate({ps[i].user_id: ps[i] for i in order}, {reps[i].session_id: reps[i] for i in order})
    assert shuffled == base


def test_mismatched_ids():
    ps = {p.user_id: p for p in population(4, 2)}
    reps = {u: perfect_report(p) for u, p in ps.items()}
    reps.pop("u0000")
    with pytest.raises(KeyError):
        evaluate(ps, reps)


def test_markdown_has_a_line_per_row():
    ps = {p.user_id: p for p in population(10, 2)}
    result = evaluate(ps, {u: perfect_report(p) for u, p in ps.items()})
    md = accuracy_markdown(result).splitlines()
    assert len(md) == 2 + len(result["rows"])
    assert md[0].startswith("| Attribute |")


@pytest.mark.parametrize("tier", list(Tier))
def test_perfect_report_respects_tier(tier):
    rep = perfect_report(population(4, 2)[0], tier)
    assert all(allowed(a, tier) for a in rep.attributes)


# ------------------------------------------------------------------ run_attacks


def test_noiseless_session_recovers_ground_truth(clean_session):
    p, b = clean_session
    rep = run_attacks(b, p.user_id)
    t = truth_values(p)
    for k in ("height", "wingspan", "ipd", "reaction_time"):
        assert rep.get(k) == pytest.approx(t[k], rel=1e-6), k
    for k in ("handedness", "longer_arm", "fitness", "moca_total", "colorblind", "tracking_rate",
              "refresh_rate", "device_model", "host_tier", "languages"):
        assert rep.get(k) == t[k], k
    assert not denied(rep)


def test_non_privileged_view():
    p, b = session(4, 7, 0, True)
    rep = run_attacks(b, p.user_id, tier=Tier.NON_PRIVILEGED)
    assert rep.tier is Tier.NON_PRIVILEGED
    assert "ipd" not in rep and "geo_lat" not in rep and "tracking_rate" not in rep
    lo, hi = rep.get("refresh_band")
    f = p.device.hmd_refresh_hz
    assert lo <= f and (hi is None or f < hi)
    assert "height" in rep
    assert {"anthro.ipd", "env.geolocate", "device.tracking_rate"} <= set(denied(rep))


def test_privileged_i_has_no_geolocation():
    p, b = session(4, 7, 0, True)
    rep = run_attacks(b, p.user_id, tier=Tier.PRIVILEGED_I)
    assert "ipd" in rep and "geo_lat" not in rep
    assert "env.geolocate" in denied(rep)


def test_attack_failures_are_recorded_not_raised():
    p, b = session(4, 7, 0, True)
    events = tuple(e for e in b.events if e.puzzle_id != 11)
    rep = run_attacks(b.__class__(b.trace, events, b.device_api, b.latency, b.attacker_tier), p.user_id)
    assert "reaction_time" not in rep
    assert rep.errors["anthro.reaction_time"].startswith("NoStimulusPairs")
