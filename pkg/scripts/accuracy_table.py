"""Simulate a population, attack every session, and print the accuracy table.

    python scripts/accuracy_table.py --n 50 --seed 11 --tier PrivilegedII
    python scripts/accuracy_table.py --n 150 --models --json out/accuracy.json

With --models, demographic models and the identity index are fit on one
session per user and scored on a second, independent session.
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np

from vrleak import inference as inf
from vrleak.errors import DegenerateLabels, TooFewExamples
from vrleak.pipeline import AttackContext, accuracy_markdown, evaluate, run_attacks
from vrleak.simulate import NoiseModel, sample_population, simulate_session
from vrleak.telemetry import Tier

LABELS = {
    "gender": lambda p: p.gender,
    "age": lambda p: p.age_years,
    "ethnicity": lambda p: p.ethnicity,
    "disability": lambda p: p.disability,
}


def attack_population(profiles, noise, session_seed, tier, context=None):
    return {
        p.user_id: run_attacks(simulate_session(p, noise=noise, seed=session_seed, tier=tier), p.user_id, context)
        for p in profiles
    }


def fit_models(profiles, reports):
    features = {u: inf.assemble_features(r) for u, r in reports.items()}
    models = {}
    for target, label in LABELS.items():
        try:
            models[target] = inf.fit(target, [(features[p.user_id], label(p)) for p in profiles])
        except (DegenerateLabels, TooFewExamples) as exc:
            print(f"skipping {target} model: {exc}")
    models["identity"] = inf.build_index([(p.user_id, features[p.user_id]) for p in profiles])
    return models


def cv_summary(profiles, reports, splits):
    features = {u: inf.assemble_features(r) for u, r in reports.items()}
    out = {}
    for target, label in LABELS.items():
        try:
            scores = inf.monte_carlo_cv(target, [(p.user_id, features[p.user_id], label(p)) for p in profiles], splits)
        except (DegenerateLabels, TooFewExamples):
            continue
        out[target] = {k: float(np.mean([s[k] for s in scores])) for k in scores[0] if not k.endswith("_users")}
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--seed", type=int, default=11, help="population seed")
    ap.add_argument("--session-seed", type=int, default=5)
    ap.add_argument("--tier", default=Tier.PRIVILEGED_II.value, choices=[t.value for t in Tier])
    ap.add_argument("--noiseless", action="store_true")
    ap.add_argument("--models", action="store_true", help="fit on one session, score on a second")
    ap.add_argument("--cv-splits", type=int, default=20)
    ap.add_argument("--json", help="also write accuracy rows here")
    args = ap.parse_args()

    start = time.perf_counter()
    noise = NoiseModel.noiseless() if args.noiseless else NoiseModel()
    profiles = sample_population(args.n, seed=args.seed)
    ctx = None
    if args.models:
        enrol = attack_population(profiles, noise, args.session_seed + 1000, args.tier)
        ctx = AttackContext(models=fit_models(profiles, enrol))
    reports = attack_population(profiles, noise, args.session_seed, args.tier, ctx)
    result = evaluate({p.user_id: p for p in profiles}, reports)

    print(accuracy_markdown(result))
    if args.models:
        print("held-out cross-validation on the enrolment sessions:")
        for target, s in cv_summary(profiles, enrol, args.cv_splits).items():
            print(f"  {target:<11}" + "  ".join(f"{k}={v:.3f}" for k, v in s.items()))
    errors = {}
    for r in reports.values():
        for k in r.errors:
            errors[k] = errors.get(k, 0) + 1
    if errors:
        print("attack failures:", ", ".join(f"{k} x{v}" for k, v in sorted(errors.items())))
    print(f"{args.n} users in {time.perf_counter() - start:.1f} s")
    if args.json:
        Path(args.json).parent.mkdir(parents=True, exist_ok=True)
        Path(args.json).write_text(json.dumps(result, indent=2) + "\n")


if __name__ == "__main__":
    main()
