import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import session, static_trace
from vrleak import defense as dp
from vrleak.errors import InvalidBounds, InvalidEpsilon
from vrleak.pipeline import truth_values


def test_samples_stay_in_bounds():
    rng = np.random.default_rng(0)
    x = np.full(1_000_000, 2.9)
    out = dp.bounded_laplace(x, -3.0, 3.0, 6.0, rng)
    assert out.min() >= -3.0 and out.max() <= 3.0
    # a conditioned Laplace centred near the top edge puts most mass below it
    assert out.mean() < 2.9


def test_out_of_range_inputs_are_clipped_first():
    rng = np.random.default_rng(1)
    out = dp.bounded_laplace(np.array([10.0, -10.0]), -1.0, 1.0, 1e-9, rng)
    assert out == pytest.approx([1.0, -1.0], abs=1e-6)


def test_huge_epsilon_is_identity():
    trace = session(4, 7, 1, False, tier="PrivilegedIII")[1].trace
    out = dp.apply_bounded_laplace(trace, 1e9)
    assert np.abs(out.pos - trace.pos).max() <= 1e-6
    assert np.array_equal(out.quat, trace.quat)
    assert np.array_equal(out.t, trace.t)


@pytest.mark.parametrize("eps", [0, -1, float("nan"), "1"])
def test_invalid_epsilon(eps):
    with pytest.raises(InvalidEpsilon):
        dp.apply_bounded_laplace(static_trace(), eps)


@pytest.mark.parametrize("bounds", [
    ((0, 1), (0, 1)),
    ((0, 1), (1, 1), (0, 1)),
    ((0, 1), (0, float("inf")), (0, 1)),
    ((2, 1), (0, 1), (0, 1)),
])
def test_invalid_bounds(bounds):
    with pytest.raises(InvalidBounds):
        dp.apply_bounded_laplace(static_trace(), 1.0, bounds)


def test_seeded_and_orientation_untouched():
    trace = static_trace(n=100)
    a = dp.apply_bounded_laplace(trace, 2.0, seed=5)
    b = dp.apply_bounded_laplace(trace, 2.0, seed=5)
    c = dp.apply_bounded_laplace(trace, 2.0, seed=6)
    assert a == b
    assert not np.array_equal(a.pos, c.pos)
    assert np.array_equal(a.quat, trace.quat)


@settings(max_examples=30)
@given(st.floats(0.01, 1e4), st.integers(0, 2**31))
def test_output_always_in_bounds(eps, seed):
    trace = static_trace(n=50)
    out = dp.apply_bounded_laplace(trace, eps, seed=seed)
    b = np.asarray(dp.DEFAULT_BOUNDS)
    assert (out.pos >= b[:, 0]).all() and (out.pos <= b[:, 1]).all()


def test_noise_spread_shrinks_with_epsilon():
    trace = static_trace(n=2000)
    spread = [np.std(dp.apply_bounded_laplace(trace, e, seed=0).pos[:, 0, 0]) for e in (0.5, 2, 10, 100)]
    assert spread == sorted(spread, reverse=True)


def test_attack_error_caps_and_failures():
    truth = {"height": 1.7, "wingspan": 1.7, "room_area": 10.0}
    assert dp.attack_error({"height": 1.7, "wingspan": 1.7, "room_area": 10.0}, truth) == 0.0
    assert dp.attack_error({"height": None, "wingspan": 1.7, "room_area": 10.0}, truth) == pytest.approx(10 / 3)
    assert dp.attack_error({"height": 1.7, "wingspan": 1.7, "room_area": 1e6}, truth) == pytest.approx(10 / 3)


def height_score(eps, seeds, n_users=2):
    """Height accuracy scored as 1 - relative error, floored at 0."""
    scores = []
    for i in range(n_users):
        p, b = session(4, 7, i, False, tier="PrivilegedIII")
        for s in seeds:
            h = dp.position_attacks(dp.apply_bounded_laplace(b.trace, eps, seed=s * 100_003 + i), b.events)["height"]
            scores.append(0.0 if h is None else max(0.0, 1.0 - abs(h - p.height_m) / p.height_m))
    return float(np.mean(scores))


def test_height_worse_at_eps_1_than_eps_10():
    seeds = range(20)
    assert height_score(1.0, seeds) < height_score(10.0, seeds)


def test_sweep_shape():
    p, b = session(4, 7, 0, False, tier="PrivilegedIII")
    t = truth_values(p)
    res = dp.epsilon_sweep([(b, {k: t[k] for k in dp.POSITION_ATTACKS})], [1.0, 1e9], seeds=[0])
    assert list(res) == [1.0, 1e9]
    assert res[1e9] < res[1.0]
