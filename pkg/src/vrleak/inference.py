"""Demographics and identity inferred from the primary attributes.

Three small models, all plain numpy/scipy so a fitted model serializes to a
readable JSON document:

* multinomial logistic regression with an L2 penalty (gender, ethnicity, disability)
* a CART regression tree (age)
* a z-scored nearest-neighbor index (re-identification)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping, NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logsumexp

from .errors import (
    DegenerateLabels,
    EmptyIndex,
    FeatureVersionMismatch,
    IncompleteProbe,
    InvalidValue,
    MissingFeatures,
    TooFewExamples,
)

FEATURE_VERSION = "v1"
LANGUAGE_FEATURES = tuple(f"lang_{c}" for c in ("zh", "es", "fr", "hi", "pt", "ar", "ja", "ru"))
FEATURES = (
    "height_m", "wingspan_m", "ipd_m", "reaction_time_s", "close_vision", "far_vision",
    "moca_total", "fitness_low", "session_duration_s",
) + LANGUAGE_FEATURES

# reduced input sets; voice features are not modeled
INPUTS = {
    "gender": ("height_m", "wingspan_m", "ipd_m"),
    "age": ("close_vision", "reaction_time_s", "height_m", "session_duration_s", "moca_total"),
    "ethnicity": LANGUAGE_FEATURES + ("height_m",),
    "disability": ("close_vision", "far_vision", "fitness_low", "moca_total"),
}
IDENTITY_FEATURES = ("height_m", "wingspan_m", "moca_total", "ipd_m", "close_vision", "far_vision", "reaction_time_s")
REGRESSION_TARGETS = frozenset({"age"})
MIN_EXAMPLES = 10


# ------------------------------------------------------------------ features


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]
    present: tuple[bool, ...]
    version: str = FEATURE_VERSION

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "present", tuple(bool(p) for p in self.present))
        if len(self.values) != len(FEATURES) or len(self.present) != len(FEATURES):
            raise InvalidValue(f"feature vector must have {len(FEATURES)} slots")
        if not np.isfinite(self.values).all():
            raise InvalidValue("feature values must be finite; mark absent slots instead")

    @classmethod
    def from_mapping(cls, values: Mapping[str, float]) -> "FeatureVector":
        unknown = set(values) - set(FEATURES)
        if unknown:
            raise InvalidValue(f"unknown features {sorted(unknown)}")
        return cls(
            tuple(float(values.get(f, 0.0)) for f in FEATURES),
            tuple(f in values for f in FEATURES),
        )

    def get(self, name: str):
        i = FEATURES.index(name)
        return self.values[i] if self.present[i] else None

    def has(self, names: Sequence[str]) -> bool:
        return all(self.present[FEATURES.index(n)] for n in names)

    def select(self, names: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        idx = [FEATURES.index(n) for n in names]
        return np.array([self.values[i] for i in idx]), np.array([self.present[i] for i in idx])

    def to_json(self) -> dict:
        return {"version": self.version,
                "values": {f: v for f, v, p in zip(FEATURES, self.values, self.present) if p}}


def assemble_features(report, duration_s: float | None = None) -> FeatureVector:
    """Map report attributes onto model features; absent attributes stay absent.

    ``duration_s`` overrides the report's own session_duration.
    """
    out: dict[str, float] = {}
    simple = {"height": "height_m", "wingspan": "wingspan_m", "ipd": "ipd_m",
              "reaction_time": "reaction_time_s", "moca_total": "moca_total"}
    for attr, feat in simple.items():
        if attr in report:
            out[feat] = float(report.get(attr))
    if "hyperopia" in report:
        out["close_vision"] = 0.0 if report.get("hyperopia") else 1.0
    if "myopia" in report:
        out["far_vision"] = 0.0 if report.get("myopia") else 1.0
    if "fitness" in report:
        out["fitness_low"] = 1.0 if report.get("fitness") == "low" else 0.0
    if "languages" in report:
        spoken = set(report.get("languages"))
        for feat in LANGUAGE_FEATURES:
            out[feat] = 1.0 if feat[5:] in spoken else 0.0
    if duration_s is None and "session_duration" in report:
        duration_s = report.get("session_duration")
    if duration_s is not None:
        out["session_duration_s"] = float(duration_s)
    return FeatureVector.from_mapping(out)


def _matrix(vectors: Sequence[FeatureVector], names: Sequence[str]):
    rows = [v.select(names) for v in vectors]
    return np.array([r[0] for r in rows]).reshape(len(rows), len(names)), \
        np.array([r[1] for r in rows]).reshape(len(rows), len(names))


# ------------------------------------------------------------------ models


@dataclass(frozen=True)
class FittedModel:
    kind: str  # linear-classifier | decision-tree-regressor | nearest-neighbor-index
    target: str
    features: tuple[str, ...]
    mean: tuple[float, ...]
    std: tuple[float, ...]
    params: Mapping[str, Any] = field(default_factory=dict)
    version: str = FEATURE_VERSION

    def __post_init__(self):
        if not len(self.features) == len(self.mean) == len(self.std):
            raise InvalidValue("normalization stats must match the feature dimension")

    def normalize(self, x: np.ndarray, present: np.ndarray | None = None) -> np.ndarray:
        z = (x - np.asarray(self.mean)) / np.asarray(self.std)
        if present is not None:
            # absent features sit at the training mean
            z = np.where(present, z, 0.0)
        return z

    def to_json(self) -> dict:
        return {"kind": self.kind, "target": self.target, "version": self.version,
                "features": list(self.features), "mean": list(self.mean), "std": list(self.std),
                "params": _jsonable(self.params)}

    @classmethod
    def from_json(cls, obj: Mapping) -> "FittedModel":
        return cls(obj["kind"], obj["target"], tuple(obj["features"]), tuple(obj["mean"]),
                   tuple(obj["std"]), obj.get("params", {}), obj.get("version", FEATURE_VERSION))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1) + "\n"


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Mapping):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _norm_stats(x: np.ndarray, present: np.ndarray):
    mean, std = [], []
    for j in range(x.shape[1]):
        col = x[present[:, j], j]
        m = float(col.mean()) if col.size else 0.0
        s = float(col.std()) if col.size else 1.0
        mean.append(m)
        std.append(s if s > 1e-12 else 1.0)
    return tuple(mean), tuple(std)


def _fit_logistic(z: np.ndarray, y: np.ndarray, n_classes: int, l2: float) -> np.ndarray:
    n, d = z.shape
    xb = np.hstack([z, np.ones((n, 1))])
    onehot = np.eye(n_classes)[y]

    def loss(w):
        W = w.reshape(d + 1, n_classes)
        logits = xb @ W
        lse = logsumexp(logits, axis=1)
        nll = float((lse - (logits * onehot).sum(1)).sum()) / n
        reg = 0.5 * l2 * float((W[:-1] ** 2).sum())
        p = np.exp(logits - lse[:, None])
        grad = xb.T @ (p - onehot) / n
        grad[:-1] += l2 * W[:-1]
        return nll + reg, grad.ravel()

    res = minimize(loss, np.zeros((d + 1) * n_classes), jac=True, method="L-BFGS-B",
                   options={"maxiter": 1000, "gtol": 1e-10})
    return res.x.reshape(d + 1, n_classes)


def _build_tree(z, y, depth, max_depth, min_leaf):
    node = {"value": float(y.mean())}
    if depth >= max_depth or len(y) < 2 * min_leaf or np.all(y == y[0]):
        return node
    best = None
    base = float(((y - y.mean()) ** 2).sum())
    for j in range(z.shape[1]):
        order = np.argsort(z[:, j], kind="stable")
        xs, ys = z[order, j], y[order]
        csum, csq = np.cumsum(ys), np.cumsum(ys ** 2)
        tot, totsq, n = csum[-1], csq[-1], len(ys)
        for i in range(min_leaf, n - min_leaf + 1):
            if xs[i - 1] == xs[i]:
                continue
            ln, rn = i, n - i
            sse = (csq[i - 1] - csum[i - 1] ** 2 / ln) + ((totsq - csq[i - 1]) - (tot - csum[i - 1]) ** 2 / rn)
            if best is None or sse < best[0] - 1e-12:
                best = (sse, j, (xs[i - 1] + xs[i]) / 2.0)
    if best is None or best[0] >= base - 1e-12:
        return node
    _, j, thr = best
    left = z[:, j] <= thr
    node.update(feature=int(j), threshold=float(thr),
                left=_build_tree(z[left], y[left], depth + 1, max_depth, min_leaf),
                right=_build_tree(z[~left], y[~left], depth + 1, max_depth, min_leaf))
    return node


def _tree_predict(node, z):
    while "feature" in node:
        node = node["left"] if z[node["feature"]] <= node["threshold"] else node["right"]
    return node["value"]


def fit(
    attribute: str,
    population: Sequence[tuple[FeatureVector, Any]],
    l2: float = 1e-2,
    max_depth: int = 6,
    min_samples_leaf: int = 3,
) -> FittedModel:
    """Fit the model for ``attribute`` on (features, label) pairs.

    Normalization comes from these examples only; the fit is deterministic in
    the data and its order.
    """
    if attribute not in INPUTS:
        raise InvalidValue(f"no model defined for {attribute!r}")
    if len(population) < MIN_EXAMPLES:
        raise TooFewExamples(f"need at least {MIN_EXAMPLES} examples, got {len(population)}")
    names = INPUTS[attribute]
    x, present = _matrix([p[0] for p in population], names)
    labels = [p[1] for p in population]
    if len(set(labels)) < 2:
        raise DegenerateLabels(f"all {attribute} labels are {labels[0]!r}")
    mean, std = _norm_stats(x, present)
    stub = FittedModel("", attribute, names, mean, std)
    z = stub.normalize(x, present)

    if attribute in REGRESSION_TARGETS:
        y = np.asarray(labels, float)
        tree = _build_tree(z, y, 0, max_depth, min_samples_leaf)
        return FittedModel("decision-tree-regressor", attribute, names, mean, std,
                           {"tree": tree, "max_depth": max_depth, "min_samples_leaf": min_samples_leaf})

    classes = sorted(set(labels))
    y = np.array([classes.index(v) for v in labels])
    W = _fit_logistic(z, y, len(classes), l2)
    return FittedModel("linear-classifier", attribute, names, mean, std,
                       {"classes": classes, "weights": W.tolist(), "l2": l2})


class Prediction(NamedTuple):
    value: Any
    confidence: float


def infer(model: FittedModel, features: FeatureVector) -> Prediction:
    if features.version != model.version:
        raise FeatureVersionMismatch(f"model expects {model.version}, got {features.version}")
    x, present = features.select(model.features)
    z = model.normalize(x, present)
    if model.kind == "decision-tree-regressor":
        return Prediction(float(_tree_predict(model.params["tree"], z)), 1.0)
    if model.kind == "linear-classifier":
        W = np.asarray(model.params["weights"])
        logits = np.append(z, 1.0) @ W
        order = np.argsort(-logits, kind="stable")
        margin = logits[order[0]] - logits[order[1]]
        return Prediction(model.params["classes"][int(order[0])], float(expit(margin)))
    raise InvalidValue(f"model kind {model.kind!r} does not support infer")


# ------------------------------------------------------------------ identity


def build_index(enrolled: Sequence[tuple[str, FeatureVector]], features=IDENTITY_FEATURES) -> FittedModel:
    if not enrolled:
        raise EmptyIndex("no enrolled users")
    x, present = _matrix([v for _, v in enrolled], features)
    if not present.all():
        bad = [uid for (uid, _), row in zip(enrolled, present) if not row.all()]
        raise MissingFeatures(f"enrolled users with incomplete features: {bad}")
    mean, std = _norm_stats(x, present)
    return FittedModel("nearest-neighbor-index", "identity", tuple(features), mean, std,
                       {"user_ids": [u for u, _ in enrolled], "vectors": x.tolist()})


def identify_user(index: FittedModel, probe: FeatureVector) -> tuple[str, float]:
    """Nearest enrolled user under z-scored Euclidean distance."""
    if index.kind != "nearest-neighbor-index":
        raise InvalidValue("not a nearest-neighbor index")
    if probe.version != index.version:
        raise FeatureVersionMismatch(f"index expects {index.version}, got {probe.version}")
    ids = index.params.get("user_ids", [])
    if not ids:
        raise EmptyIndex("index has no enrolled users")
    x, present = probe.select(index.features)
    if not present.all():
        missing = [f for f, p in zip(index.features, present) if not p]
        raise IncompleteProbe(f"probe lacks {missing}")
    enrolled = index.normalize(np.asarray(index.params["vectors"], float))
    d = np.linalg.norm(enrolled - index.normalize(x), axis=1)
    i = int(np.argmin(d))
    return ids[i], float(d[i])


# ------------------------------------------------------------------ evaluation


def monte_carlo_cv(
    attribute: str,
    examples: Sequence[tuple[str, FeatureVector, Any]],
    n_splits: int = 20,
    test_fraction: float = 0.2,
    seed: int = 0,
    **fit_kwargs,
) -> list[dict]:
    """Repeated random user-level splits; returns per-split scores.

    Splitting is by user id so no user is in both train and test, which is
    asserted on every split.
    """
    users = sorted({u for u, _, _ in examples})
    rng = np.random.default_rng(seed)
    n_test = max(1, int(round(test_fraction * len(users))))
    out = []
    for _ in range(n_splits):
        test_users = set(rng.choice(users, size=n_test, replace=False).tolist())
        train = [(v, y) for u, v, y in examples if u not in test_users]
        test = [(u, v, y) for u, v, y in examples if u in test_users]
        train_users = {u for u, _, _ in examples if u not in test_users}
        assert train_users.isdisjoint(test_users)
        model = fit(attribute, train, **fit_kwargs)
        preds = [infer(model, v).value for _, v, _ in test]
        truth = [y for _, _, y in test]
        if model.kind == "decision-tree-regressor":
            err = np.abs(np.subtract(preds, truth))
            score = {"mae": float(err.mean()), "within_1_5": float((err <= 1.5).mean())}
        else:
            score = {"accuracy": float(np.mean([p == t for p, t in zip(preds, truth)]))}
        score.update(train_users=sorted(train_users), test_users=sorted(test_users))
        out.append(score)
    return out
