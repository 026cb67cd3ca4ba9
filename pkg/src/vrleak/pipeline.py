"""Run every attack a tier permits over a session, and score reports against truth."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import anthropometry as an
from . import behavior as bh
from . import environment as env
from . import fingerprint as fp
from . import inference as inf
from . import puzzles as pz
from .capabilities import check_report, mask_for_tier
from .errors import CapabilityDenied, NoGazeHit, VRLeakError
from .telemetry import AttributeReport, SessionBundle, Tier


@dataclass
class AttackContext:
    servers: Sequence[env.ServerSite] | None = None
    layout: bh.PanelLayout | None = None
    devices: Sequence | None = None
    propagation: env.PropagationModel = env.PropagationModel()
    script: object = None
    models: Mapping[str, inf.FittedModel] | None = None

    def resolved(self) -> "AttackContext":
        from .simulate import default_script, load_devices

        return AttackContext(
            self.servers if self.servers is not None else env.load_servers(),
            self.layout if self.layout is not None else bh.load_layout(),
            self.devices if self.devices is not None else load_devices(),
            self.propagation,
            self.script if self.script is not None else default_script(),
            self.models or {},
        )


def _needs_device_api(b: SessionBundle):
    if not b.attacker_tier.reads_device_api or b.device_api is None:
        raise CapabilityDenied(f"{b.attacker_tier.value} cannot read the device API")
    return b.device_api


def _needs_local_telemetry(b: SessionBundle):
    if not b.attacker_tier.full_rate_telemetry:
        raise CapabilityDenied(f"{b.attacker_tier.value} only sees rebroadcast telemetry")


def run_attacks(
    bundle: SessionBundle,
    session_id: str = "",
    context: AttackContext | None = None,
    tier: Tier | str | None = None,
) -> AttributeReport:
    """Every attack ``tier`` (default: the bundle's own) may run; failures go to ``report.errors``."""
    ctx = (context or AttackContext()).resolved()
    b = bundle if tier is None or Tier(tier) is bundle.attacker_tier else mask_for_tier(bundle, tier)
    rep = AttributeReport(session_id, b.attacker_tier)
    trace, events = b.trace, b.events
    found: dict = {}

    def attack(attack_id: str, fn: Callable[[], dict], units: Mapping[str, str] = {}, confidence=1.0):
        try:
            values = fn()
        except VRLeakError as exc:
            rep.errors[attack_id] = f"{type(exc).__name__}: {exc}"
            return
        conf = confidence
        if isinstance(values, tuple):
            values, conf = values
        for name, value in values.items():
            rep.add(name, value, units.get(name, ""), conf, attack_id)
            found[name] = value

    attack("anthro.height",
           lambda: {"height": an.estimate_height(trace, an.stand_windows(events, ctx.script))}, {"height": "m"})
    attack("anthro.wingspan", lambda: {"wingspan": an.estimate_wingspan(trace, events)}, {"wingspan": "m"})
    attack("anthro.longer_arm", lambda: {"longer_arm": an.compare_arm_lengths(trace, events)})
    attack("anthro.handedness", lambda: {"handedness": an.estimate_handedness(events, trace)})
    attack("anthro.ipd", lambda: {"ipd": an.estimate_ipd(b)}, {"ipd": "m"})

    def fitness():
        if "height" not in found:
            raise VRLeakError("fitness needs the height estimate")
        return {"fitness": an.estimate_fitness(trace, events, found["height"])}

    attack("anthro.fitness", fitness)

    def reaction():
        r = an.estimate_reaction_time(events)
        return {"reaction_time": r.seconds, "reaction_class": r.label}

    attack("anthro.reaction_time", reaction, {"reaction_time": "s"})

    def room():
        r = env.estimate_room_dims(trace)
        return {"room_length": r.length_m, "room_width": r.width_m, "room_area": r.area_m2}

    attack("env.room", room, {"room_length": "m", "room_width": "m", "room_area": "m2"})

    def geo():
        if not b.attacker_tier.reads_network:
            raise CapabilityDenied(f"{b.attacker_tier.value} has no network vantage point")
        fix = env.geolocate(b.latency, ctx.servers, ctx.propagation)
        return {"geo_lat": fix.lat_deg, "geo_lon": fix.lon_deg, "geo_residual": fix.residual_m}

    attack("env.geolocate", geo, {"geo_lat": "deg", "geo_lon": "deg", "geo_residual": "m"})

    def tracking():
        _needs_local_telemetry(b)
        return {"tracking_rate": fp.estimate_tracking_rate(trace)}

    attack("device.tracking_rate", tracking, {"tracking_rate": "Hz"})

    def refresh():
        if b.attacker_tier.reads_device_api:
            return {"refresh_rate": fp.estimate_refresh_rate(_needs_device_api(b))}
        lo, hi = fp.refresh_band(events)
        return {"refresh_band": [lo, None if math.isinf(hi) else hi]}

    attack("device.refresh_rate", refresh, {"refresh_rate": "Hz", "refresh_band": "Hz"})

    def display():
        api = _needs_device_api(b)
        return {"resolution": api.reported_resolution_mp, "fov": api.reported_fov_deg}

    attack("device.display", display, {"resolution": "MP", "fov": "deg"})

    def model():
        api = _needs_device_api(b)
        if "tracking_rate" not in found or "refresh_rate" not in found:
            raise VRLeakError("device classification needs tracking and refresh rates")
        feats = {"tracking_hz": found["tracking_rate"], "refresh_hz": found["refresh_rate"],
                 "resolution_mp": api.reported_resolution_mp, "fov_deg": api.reported_fov_deg}
        return {"device_model": fp.classify_device(feats, ctx.devices)}

    attack("device.model", model)

    def host():
        api = _needs_device_api(b)
        if api.cpu_ghz is None or api.gpu_mhs is None:
            raise VRLeakError("device API sample has no host benchmark readings")
        return {"host_tier": fp.host_tier(api.cpu_ghz, api.gpu_mhs)}

    attack("device.host_tier", host)

    def moca():
        s = bh.score_moca(events)
        return {"moca_total": s.total, "moca_pass": s.passed}

    attack("behavior.moca", moca, {"moca_total": "points"})
    attack("behavior.colorblind", lambda: {"colorblind": bh.detect_colorblind(events)})

    def languages():
        try:
            found_langs = bh.detect_languages(trace, events, ctx.layout)
        except NoGazeHit:
            # no panel held the gaze: no non-English language recognized
            found_langs = set()
        return {"languages": sorted(found_langs)}

    attack("behavior.languages", languages)

    def eyesight():
        hyper, myo = bh.assess_eyesight(events)
        return {"hyperopia": hyper, "myopia": myo}

    attack("behavior.eyesight", eyesight)

    attack("env.session_duration", lambda: {"session_duration": float(trace.duration)}, {"session_duration": "s"})

    if ctx.models:
        features = inf.assemble_features(rep)
        for target in ("gender", "age", "ethnicity", "disability"):
            m = ctx.models.get(target)
            if m is None:
                continue

            def run(m=m, target=target):
                p = inf.infer(m, features)
                return {target: p.value}, p.confidence

            attack(f"infer.{target}", run, {"age": "yr"})
        index = ctx.models.get("identity")
        if index is not None:
            attack("infer.identity", lambda: {"identity_match": inf.identify_user(index, features)[0]})

    check_report(rep)
    return rep


def denied(report: AttributeReport) -> list[str]:
    return sorted(k for k, v in report.errors.items() if v.startswith("CapabilityDenied"))


# ------------------------------------------------------------------ scoring


def truth_values(profile) -> dict:
    """Ground truth in report vocabulary."""
    from .behavior import moca_total_from_answers

    total = moca_total_from_answers(profile.moca_answers)
    return {
        "height": profile.height_m,
        "wingspan": profile.wingspan_m,
        "longer_arm": profile.longer_arm,
        "arm_delta": profile.arm_left_m - profile.arm_right_m,
        "handedness": profile.handedness,
        "ipd": profile.ipd_m,
        "fitness": "low" if profile.fitness == "low" else "not_low",
        "reaction_time": profile.reaction_time_s,
        "reaction_class": an.reaction_class(profile.reaction_time_s),
        "room_length": profile.room_length_m,
        "room_width": profile.room_width_m,
        "room_area": profile.room_area_m2,
        "geo": profile.location,
        "tracking_rate": profile.device.tracking_rate_hz,
        "refresh_rate": profile.device.hmd_refresh_hz,
        "resolution": profile.device.resolution_mp,
        "fov": profile.device.fov_deg,
        "device_model": profile.device.model,
        "host_tier": fp.host_tier(profile.host_cpu_ghz, profile.host_gpu_mhs),
        "moca_total": total,
        "moca_pass": total > bh.MOCA_PASS_ABOVE,
        "colorblind": profile.colorblind,
        "languages": sorted(profile.languages),
        "hyperopia": profile.hyperopia != "none",
        "myopia": profile.myopia != "none",
        "gender": profile.gender,
        "age": profile.age_years,
        "ethnicity": profile.ethnicity,
        "disability": profile.disability,
        "identity_match": profile.user_id,
    }


def perfect_report(profile, tier: Tier | str = Tier.PRIVILEGED_II) -> AttributeReport:
    """The report an oracle attacker would produce (used to check the scorer)."""
    from .capabilities import allowed

    tv = truth_values(profile)
    rep = AttributeReport(profile.user_id, tier)
    values = {k: tv[k] for k in tv if k not in ("geo", "arm_delta")}
    values["geo_lat"], values["geo_lon"] = tv["geo"]
    values["geo_residual"] = 0.0
    lo = max([r for r in (0,) + tuple(pz.UFO_RATES_HZ) if r <= tv["refresh_rate"]])
    higher = [r for r in pz.UFO_RATES_HZ if r > tv["refresh_rate"]]
    values["refresh_band"] = [float(lo), float(higher[0]) if higher else None]
    for k, v in values.items():
        if allowed(k, rep.tier):
            rep.add(k, v, "", 1.0, "oracle")
    return rep


def _r2(pred, truth) -> float | None:
    pred, truth = np.asarray(pred, float), np.asarray(truth, float)
    if pred.size < 2:
        return None
    ss_tot = float(((truth - truth.mean()) ** 2).sum())
    if ss_tot == 0:
        return None
    return 1.0 - float(((truth - pred) ** 2).sum()) / ss_tot


def _f1(pred, truth, positive) -> float | None:
    tp = sum(p == positive and t == positive for p, t in zip(pred, truth))
    fp_ = sum(p == positive and t != positive for p, t in zip(pred, truth))
    fn = sum(p != positive and t == positive for p, t in zip(pred, truth))
    if tp + fp_ + fn == 0:
        return None
    return 2 * tp / (2 * tp + fp_ + fn)


def _row(attribute, criterion, hits, stat_name=None, stat=None):
    n = len(hits)
    return {
        "attribute": attribute,
        "criterion": criterion,
        "accuracy": float(np.mean(hits)) if n else None,
        "n": n,
        "statistic": None if stat_name is None or stat is None else {"name": stat_name, "value": float(stat)},
    }


def evaluate(profiles: Mapping[str, object], reports: Mapping[str, AttributeReport]) -> dict:
    """Per-attribute accuracy rows, one per (attribute, criterion).

    A missing attribute counts as a miss; a row appears only when at least one
    report carries the attribute. Output does not depend on input order.
    """
    ids = sorted(profiles)
    if sorted(reports) != ids:
        raise KeyError("profile and report user ids differ")
    truth = {u: truth_values(profiles[u]) for u in ids}
    rows: list[dict] = []

    def pairs(attr, users=None):
        users = ids if users is None else users
        return [(reports[u].get(attr), truth[u]) for u in users]

    def carried(attr):
        return any(attr in reports[u] for u in ids)

    def continuous(attr, truth_key, label, tols, unit, scale=1.0, users=None):
        if not carried(attr):
            return
        ps = pairs(attr, users)
        hits_by = {}
        for tol in tols:
            hits_by[tol] = [p is not None and abs(p - t[truth_key]) <= tol / scale + 1e-9 for p, t in ps]
        have = [(p, t[truth_key]) for p, t in ps if p is not None]
        r2 = _r2([p for p, _ in have], [t for _, t in have])
        for tol in tols:
            rows.append(_row(label, f"within {tol:g} {unit}", hits_by[tol], "R2", r2))

    def categorical(attr, label, criterion="exact", positive=None, users=None, truth_key=None):
        if not carried(attr):
            return
        ps = pairs(attr, users)
        key = truth_key or attr
        hits = [p is not None and p == t[key] for p, t in ps]
        stat = None
        if positive is not None:
            stat = _f1([p for p, _ in ps], [t[key] for _, t in ps], positive)
        rows.append(_row(label, criterion, hits, "F1" if stat is not None else None, stat))

    continuous("height", "height", "Height", (5, 7), "cm", 100)
    continuous("wingspan", "wingspan", "Wingspan", (7, 12), "cm", 100)
    if carried("longer_arm"):
        for cm in (2, 3):
            users = [u for u in ids if abs(truth[u]["arm_delta"]) >= cm / 100 - 1e-9]
            categorical("longer_arm", "Longer Arm", f"correct for >= {cm} cm difference",
                        positive="left_longer", users=users)
    vive = [u for u in ids if profiles[u].device.model == "Vive Pro 2"]
    if vive:
        continuous("ipd", "ipd", "Interpupillary Distance", (0.5,), "mm (Vive Pro 2)", 1000, users=vive)
    continuous("ipd", "ipd", "Interpupillary Distance", (0.5,), "mm (all devices)", 1000)
    continuous("room_area", "room_area", "Room Size", (2, 3), "m2")
    if carried("geo_lat"):
        errs = []
        for u in ids:
            r = reports[u]
            if "geo_lat" in r:
                lat, lon = truth[u]["geo"]
                errs.append(float(env.great_circle_m(lat, lon, r.get("geo_lat"), r.get("geo_lon"))) / 1000)
            else:
                errs.append(math.inf)
        for km in (400, 500):
            rows.append(_row("Geolocation", f"within {km} km", [e <= km for e in errs]))
    continuous("refresh_rate", "refresh_rate", "HMD Refresh Rate", (3,), "Hz (privileged)")
    if carried("refresh_band"):
        hits = []
        for u in ids:
            band = reports[u].get("refresh_band")
            f = truth[u]["refresh_rate"]
            hits.append(band is not None and band[0] <= f and (band[1] is None or f < band[1]))
        rows.append(_row("HMD Refresh Rate", "band contains true rate (unprivileged)", hits))
    continuous("tracking_rate", "tracking_rate", "Controller Tracking Rate", (2.5,), "Hz")
    continuous("resolution", "resolution", "Device Resolution", (0.1,), "MP")
    continuous("fov", "fov", "Device FOV", (10,), "deg")
    categorical("host_tier", "Computational Power", "price tier")
    categorical("device_model", "VR Device")
    categorical("handedness", "Handedness", positive="right")
    categorical("hyperopia", "Eyesight", "hyperopia flag", positive=True)
    categorical("myopia", "Eyesight", "myopia flag", positive=True)
    categorical("colorblind", "Color Blindness", positive=True)
    if carried("languages"):
        multi = [u for u in ids if truth[u]["languages"]]
        hits = []
        for u in multi:
            got = reports[u].get("languages")
            hits.append(bool(got) and set(got) <= set(truth[u]["languages"]))
        rows.append(_row("Languages", "non-English language recovered (multilingual users)", hits))
    categorical("fitness", "Physical Fitness", "low vs not low", positive="low")
    categorical("reaction_class", "Reaction Time", "fast vs slow (250 ms)", positive="fast")
    continuous("moca_total", "moca_total", "Acuity (MoCA)", (2,), "points")
    categorical("moca_pass", "Acuity (MoCA)", "diagnostic (pass > 26)", positive=False)
    categorical("gender", "Gender", positive="female")
    continuous("age", "age", "Age", (1.5,), "yr")
    categorical("ethnicity", "Ethnicity")
    categorical("disability", "Disability Status")
    categorical("identity_match", "Identity")
    return {"n_users": len(ids), "rows": rows}


def accuracy_markdown(result: Mapping) -> str:
    lines = ["| Attribute | Criterion | Accuracy | Statistic | N |", "|---|---|---|---|---|"]
    for r in result["rows"]:
        acc = "n/a" if r["accuracy"] is None else f"{100 * r['accuracy']:.0f}%"
        st = r["statistic"]
        stat = "" if st is None else f"{st['name']}={st['value']:.2f}"
        lines.append(f"| {r['attribute']} | {r['criterion']} | {acc} | {stat} | {r['n']} |")
    return "\n".join(lines) + "\n"
