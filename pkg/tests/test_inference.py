import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vrleak import inference as inf
from vrleak.errors import (
    DegenerateLabels,
    EmptyIndex,
    FeatureVersionMismatch,
    IncompleteProbe,
    InvalidValue,
    MissingFeatures,
    TooFewExamples,
)
from vrleak.telemetry import AttributeReport, Tier

FV = inf.FeatureVector.from_mapping


def gender_toy(n=40, gap=0.20, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        male = i % 2 == 0
        h = (1.78 if male else 1.78 - gap) + rng.normal(0, 0.03)
        out.append((FV({"height_m": h, "wingspan_m": h * 1.02, "ipd_m": 0.064 if male else 0.061}),
                    "male" if male else "female"))
    return out


def identity_vec(rng):
    return FV({
        "height_m": rng.uniform(1.5, 1.9), "wingspan_m": rng.uniform(1.5, 2.0), "moca_total": float(rng.integers(22, 31)),
        "ipd_m": rng.uniform(0.055, 0.072), "close_vision": float(rng.integers(2)), "far_vision": float(rng.integers(2)),
        "reaction_time_s": rng.integers(8, 36) / 60,
    })


# ------------------------------------------------------------------ features


def test_assemble_features_from_report():
    rep = AttributeReport("u", Tier.PRIVILEGED_II)
    rep.add("height", 1.70, "m", 1.0, "anthro.height")
    rep.add("hyperopia", True, "", 1.0, "behavior.eyesight")
    rep.add("fitness", "low", "", 1.0, "anthro.fitness")
    rep.add("languages", ["es"], "", 1.0, "behavior.languages")
    rep.add("session_duration", 900.0, "s", 1.0, "env.session_duration")
    fv = inf.assemble_features(rep)
    assert fv.get("height_m") == 1.70
    assert fv.get("close_vision") == 0.0
    assert fv.get("fitness_low") == 1.0
    assert fv.get("lang_es") == 1.0 and fv.get("lang_fr") == 0.0
    assert fv.get("session_duration_s") == 900.0
    assert fv.get("ipd_m") is None
    assert inf.assemble_features(rep, duration_s=60.0).get("session_duration_s") == 60.0


def test_feature_vector_validation():
    with pytest.raises(InvalidValue):
        FV({"shoe_size": 42})
    with pytest.raises(InvalidValue):
        FV({"height_m": float("nan")})


# ------------------------------------------------------------------ classifiers


def test_separable_toy_is_learned():
    data = gender_toy()
    model = inf.fit("gender", data)
    assert model.kind == "linear-classifier"
    assert all(inf.infer(model, v).value == y for v, y in data)


def test_confidence_high_at_class_centroid():
    model = inf.fit("gender", gender_toy())
    pred = inf.infer(model, FV({"height_m": 1.58, "wingspan_m": 1.61, "ipd_m": 0.061}))
    assert pred.value == "female" and pred.confidence > 0.9


def test_absent_features_sit_at_training_mean():
    model = inf.fit("gender", gender_toy())
    pred = inf.infer(model, FV({"height_m": 1.85}))
    assert pred.value == "male"


def test_fit_errors():
    with pytest.raises(DegenerateLabels):
        inf.fit("gender", [(v, "male") for v, _ in gender_toy()])
    with pytest.raises(TooFewExamples):
        inf.fit("gender", gender_toy(n=9))
    with pytest.raises(InvalidValue):
        inf.fit("shoe_size", gender_toy())


def test_fit_is_deterministic_and_serializable():
    a = inf.fit("gender", gender_toy())
    b = inf.fit("gender", gender_toy())
    assert a.dumps() == b.dumps()
    back = inf.FittedModel.from_json(__import__("json").loads(a.dumps()))
    v = gender_toy(seed=5)[3][0]
    assert inf.infer(back, v) == inf.infer(a, v)


def test_version_mismatch():
    model = inf.fit("gender", gender_toy())
    old = dataclasses.replace(gender_toy()[0][0], version="v0")
    with pytest.raises(FeatureVersionMismatch):
        inf.infer(model, old)


# ------------------------------------------------------------------ regression tree


def age_toy(n=60, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        age = int(rng.integers(18, 65))
        out.append((FV({"reaction_time_s": 0.15 + 0.004 * age, "height_m": rng.uniform(1.5, 1.9),
                        "close_vision": float(age < 45), "session_duration_s": 600 + 10 * age,
                        "moca_total": 30.0}), age))
    return out


def tree_depth(node):
    if "feature" not in node:
        return 0
    return 1 + max(tree_depth(node["left"]), tree_depth(node["right"]))


def leaf_sizes(node, z, out):
    if "feature" not in node:
        out.append(len(z))
        return out
    left = z[:, node["feature"]] <= node["threshold"]
    leaf_sizes(node["left"], z[left], out)
    leaf_sizes(node["right"], z[~left], out)
    return out


def test_age_tree_shape_and_fit():
    data = age_toy()
    model = inf.fit("age", data)
    assert model.kind == "decision-tree-regressor"
    tree = model.params["tree"]
    assert tree_depth(tree) <= 6
    x, present = inf._matrix([v for v, _ in data], model.features)
    assert min(leaf_sizes(tree, model.normalize(x, present), [])) >= 3
    err = [abs(inf.infer(model, v).value - y) for v, y in data]
    assert np.mean(err) < 3.0
    assert inf.fit("age", data).dumps() == model.dumps()


@settings(max_examples=15)
@given(st.integers(0, 10_000))
def test_tree_prediction_is_within_label_range(seed):
    data = age_toy(seed=seed)
    model = inf.fit("age", data)
    ages = [y for _, y in data]
    probe = age_toy(n=1, seed=seed + 1)[0][0]
    assert min(ages) <= inf.infer(model, probe).value <= max(ages)


# ------------------------------------------------------------------ identity


def test_probe_equal_to_enrolled_is_distance_zero():
    rng = np.random.default_rng(0)
    users = [(f"u{i}", identity_vec(rng)) for i in range(20)]
    index = inf.build_index(users)
    for uid, v in users:
        assert inf.identify_user(index, v) == (uid, 0.0)


def test_identity_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(EmptyIndex):
        inf.build_index([])
    with pytest.raises(MissingFeatures):
        inf.build_index([("a", FV({"height_m": 1.7}))])
    index = inf.build_index([(f"u{i}", identity_vec(rng)) for i in range(5)])
    with pytest.raises(IncompleteProbe):
        inf.identify_user(index, FV({"height_m": 1.7}))


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.lists(st.floats(0.1, 100), min_size=7, max_size=7),
       st.lists(st.floats(-100, 100), min_size=7, max_size=7))
def test_argmin_invariant_to_per_feature_affine_rescale(seed, scale, shift):
    rng = np.random.default_rng(seed)
    users = [(f"u{i}", identity_vec(rng)) for i in range(15)]
    probe = identity_vec(rng)

    def rescale(v):
        vals = {f: v.get(f) * a + b for f, a, b in zip(inf.IDENTITY_FEATURES, scale, shift)}
        return FV(vals)

    base = inf.identify_user(inf.build_index(users), probe)[0]
    moved = inf.identify_user(inf.build_index([(u, rescale(v)) for u, v in users]), rescale(probe))[0]
    assert moved == base


@settings(max_examples=20)
@given(st.integers(0, 10_000), st.permutations(range(12)))
def test_user_ids_and_order_are_metadata(seed, perm):
    rng = np.random.default_rng(seed)
    vecs = [identity_vec(rng) for _ in range(12)]
    probe = identity_vec(rng)
    base = inf.identify_user(inf.build_index([(f"u{i}", v) for i, v in enumerate(vecs)]), probe)[0]
    shuffled = inf.build_index([(f"user-{i}", vecs[i]) for i in perm])
    assert inf.identify_user(shuffled, probe)[0] == f"user-{base[1:]}"


# ------------------------------------------------------------------ cross-validation


def test_cv_splits_are_user_disjoint():
    data = gender_toy(n=50)
    examples = [(f"u{i:03d}", v, y) for i, (v, y) in enumerate(data)]
    scores = inf.monte_carlo_cv("gender", examples, n_splits=20, seed=1)
    assert len(scores) == 20
    for s in scores:
        assert set(s["train_users"]).isdisjoint(s["test_users"])
        assert len(s["test_users"]) == 10
        assert set(s["train_users"]) | set(s["test_users"]) == {u for u, _, _ in examples}
    assert np.mean([s["accuracy"] for s in scores]) > 0.9


def test_cv_regression_scores():
    data = age_toy()
    examples = [(f"u{i}", v, y) for i, (v, y) in enumerate(data)]
    scores = inf.monte_carlo_cv("age", examples, n_splits=3)
    assert all({"mae", "within_1_5"} <= set(s) for s in scores)


def test_cv_is_seeded():
    examples = [(f"u{i}", v, y) for i, (v, y) in enumerate(gender_toy())]
    a = inf.monte_carlo_cv("gender", examples, n_splits=3, seed=4)
    b = inf.monte_carlo_cv("gender", examples, n_splits=3, seed=4)
    assert a == b
