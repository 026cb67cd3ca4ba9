"""Command-line front end: simulate, attack, evaluate, defend, fit.

Exit codes: 0 ok, 2 unreadable or malformed input, 3 invalid configuration
or mismatched user ids, 4 some attack was denied by the attacker tier.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import store
from .behavior import PanelLayout
from .defense import DEFAULT_BOUNDS, apply_bounded_laplace
from .environment import servers_from_json
from .errors import FormatError, VRLeakError
from .inference import INPUTS, FittedModel, assemble_features, build_index, fit
from .pipeline import AttackContext, accuracy_markdown, denied, evaluate, run_attacks
from .simulate import NoiseModel, ScenarioScript, default_script, sample_population, simulate_session
from .telemetry import Tier, parse_trace_csv, write_trace_csv

EXIT_OK, EXIT_INPUT, EXIT_CONFIG, EXIT_DENIED = 0, 2, 3, 4


class ConfigError(Exception):
    pass


def _config(path, loader, what):
    if path is None:
        return None
    try:
        obj = store.load_json(Path(path))
        return loader(obj)
    except OSError:
        raise
    except (FormatError, VRLeakError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {what} config {path}: {exc}") from None


def _bounds(obj):
    if isinstance(obj, dict):
        obj = [obj[k] for k in ("x", "y", "z")]
    return tuple((float(lo), float(hi)) for lo, hi in obj)


def cmd_simulate(args) -> int:
    script = _config(args.script, ScenarioScript.from_json, "script") or default_script()
    noise = _config(args.noise, NoiseModel.from_json, "noise") or NoiseModel()
    if args.n < 1:
        raise ConfigError("--n must be at least 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    profiles = sample_population(args.n, seed=args.seed)
    for p in profiles:
        bundle = simulate_session(p, script, noise, seed=args.session_seed, tier=args.tier)
        store.write_session(out / p.user_id, p, bundle)
    manifest = {
        "n": args.n,
        "population_seed": args.seed,
        "session_seed": args.session_seed,
        "tier": Tier(args.tier).value,
        "noise": noise.to_json(),
        "script": script.to_json(),
        "users": [p.user_id for p in profiles],
    }
    (out / store.MANIFEST).write_text(store.dump_json(manifest), encoding="utf-8")
    return EXIT_OK


def _context(args) -> AttackContext:
    models = {}
    if args.models:
        for path in sorted(Path(args.models).glob("*.json")):
            m = _config(path, FittedModel.from_json, "model")
            models[m.target] = m
    return AttackContext(
        servers=_config(args.servers, servers_from_json, "servers"),
        layout=_config(args.layout, PanelLayout.from_json, "layout"),
        models=models or None,
    )


def cmd_attack(args) -> int:
    ctx = _context(args)
    src = Path(args.session)
    any_denied = False
    if store.is_population(src):
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for uid in store.population_users(src):
            rep = run_attacks(store.read_session(src / uid, args.tier), uid, ctx, args.tier)
            any_denied |= bool(denied(rep))
            (out / f"{uid}.json").write_text(rep.dumps(), encoding="utf-8")
    else:
        rep = run_attacks(store.read_session(src, args.tier), src.name, ctx, args.tier)
        any_denied = bool(denied(rep))
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(rep.dumps(), encoding="utf-8")
    return EXIT_DENIED if any_denied else EXIT_OK


def _profiles(pop: Path) -> dict:
    return {uid: store.read_profile(pop / uid) for uid in store.population_users(pop)}


def cmd_evaluate(args) -> int:
    profiles = _profiles(Path(args.population))
    reports = store.read_reports(Path(args.reports))
    if sorted(profiles) != sorted(reports):
        only_p = sorted(set(profiles) - set(reports))
        only_r = sorted(set(reports) - set(profiles))
        raise ConfigError(f"user ids differ: missing reports {only_p[:5]}, unknown reports {only_r[:5]}")
    result = evaluate(profiles, reports)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(store.dump_json(result), encoding="utf-8")
    out.with_suffix(".md").write_text(accuracy_markdown(result), encoding="utf-8")
    return EXIT_OK


def cmd_defend(args) -> int:
    bounds = _config(args.bounds, _bounds, "bounds") or DEFAULT_BOUNDS
    trace = parse_trace_csv(Path(args.trace).read_bytes())
    try:
        noisy = apply_bounded_laplace(trace, args.epsilon, bounds, seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(write_trace_csv(noisy))
    return EXIT_OK


def cmd_fit(args) -> int:
    profiles = _profiles(Path(args.population))
    reports = store.read_reports(Path(args.reports))
    if sorted(profiles) != sorted(reports):
        raise ConfigError("population and report user ids differ")
    ids = sorted(profiles)
    features = {u: assemble_features(reports[u]) for u in ids}
    labels = {
        "gender": lambda p: p.gender,
        "age": lambda p: p.age_years,
        "ethnicity": lambda p: p.ethnicity,
        "disability": lambda p: p.disability,
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for target in INPUTS:
        try:
            model = fit(target, [(features[u], labels[target](profiles[u])) for u in ids])
        except VRLeakError as exc:
            raise ConfigError(f"cannot fit {target}: {exc}") from None
        (out / f"{target}.json").write_text(model.dumps(), encoding="utf-8")
    try:
        index = build_index([(u, features[u]) for u in ids])
    except VRLeakError as exc:
        raise ConfigError(f"cannot build identity index: {exc}") from None
    (out / "identity.json").write_text(index.dumps(), encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vrleak", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    tiers = [t.value for t in Tier]

    p = sub.add_parser("simulate", help="sample a population and render one session per user")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--seed", type=int, default=0, help="population seed")
    p.add_argument("--session-seed", type=int, default=0)
    p.add_argument("--tier", choices=tiers, default=Tier.PRIVILEGED_II.value, help="what the recording can observe")
    p.add_argument("--script", help="scenario script JSON")
    p.add_argument("--noise", help="noise model JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("attack", help="run every attack a tier permits on a session or population")
    p.add_argument("session", help="session directory, or population directory with manifest.json")
    p.add_argument("--tier", choices=tiers, default=Tier.PRIVILEGED_II.value)
    p.add_argument("--servers", help="server sites JSON")
    p.add_argument("--layout", help="language panel layout JSON")
    p.add_argument("--models", help="directory of fitted model JSON files")
    p.add_argument("--out", required=True, help="report.json, or a reports directory for a population")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("evaluate", help="score reports against ground truth")
    p.add_argument("population")
    p.add_argument("reports")
    p.add_argument("--out", required=True, help="accuracy.json; markdown goes next to it")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("defend", help="perturb a trace with bounded Laplace noise")
    p.add_argument("trace")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--bounds", help="JSON: [[lo,hi],[lo,hi],[lo,hi]] or {x:[..],y:[..],z:[..]}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_defend)

    p = sub.add_parser("fit", help="fit inference models from a population and its reports")
    p.add_argument("population")
    p.add_argument("reports")
    p.add_argument("--out", required=True, help="directory for <target>.json models")
    p.set_defaults(func=cmd_fit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"vrleak: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FormatError) as exc:
        print(f"vrleak: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except VRLeakError as exc:
        print(f"vrleak: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
