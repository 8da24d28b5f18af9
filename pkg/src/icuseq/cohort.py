"""Synthetic ICU cohort generation with a planted severity signal.

Each stay draws a latent severity s ~ Uniform(0, 1). The seven binary
outcomes are Bernoulli(sigmoid(a*s + b)) with per-task coefficients chosen
so prevalences rise with the mortality horizon. The event stream leaks s
only through the configured signal channel:

  value_trend   -- severity tilts the measured values of designated signal
                   variables (level + within-stay drift); which variables
                   are measured, and how often, stays severity-independent.
  presence_only -- severity scales the measurement rate of signal variables;
                   measured values stay severity-independent.
  both          -- both channels.

With signal_strength = 0 the event stream is independent of the labels.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LABEL_NAMES = (
    "icu_readmit",
    "hosp_readmit_30d",
    "inpatient_mort",
    "mort_7d",
    "mort_30d",
    "mort_90d",
    "mort_1y",
)

# (slope a, intercept b) of the logistic link per task. Intercepts place the
# expected prevalences near 6/23/10/9/12/15/21 percent, so the mortality
# horizons rise in prevalence with horizon; readmission tasks get weaker
# severity coupling.
LABEL_LINKS = {
    "icu_readmit": (4.0, -5.3),
    "hosp_readmit_30d": (2.0, -2.27),
    "inpatient_mort": (8.0, -7.85),
    "mort_7d": (8.0, -8.0),
    "mort_30d": (8.0, -7.55),
    "mort_90d": (8.0, -7.1),
    "mort_1y": (8.0, -6.5),
}

SIGNAL_MODES = ("value_trend", "presence_only", "both")

MIN_LOS_HOURS = 1.0
MAX_LOS_HOURS = 240.0


@dataclass
class GeneratorConfig:
    n_stays: int = 2000
    n_vitals: int = 8
    n_labs: int = 10
    n_meds: int = 8
    n_assessments: int = 4
    n_signal_vars: int = 4
    static_numeric: int = 16
    static_categorical: int = 8
    categories_per_field: int = 4
    mean_events: float = 80.0
    max_events: int = 512
    signal_strength: float = 1.0
    signal_mode: str = "value_trend"
    p_tie: float = 0.15
    missing_rate: float = 0.1
    mean_stays_per_patient: float = 1.2
    seed: int = 0

    def __post_init__(self):
        counts = {
            "n_stays": self.n_stays,
            "n_vitals": self.n_vitals,
            "n_labs": self.n_labs,
            "n_meds": self.n_meds,
            "n_assessments": self.n_assessments,
            "static_numeric": self.static_numeric,
            "static_categorical": self.static_categorical,
            "categories_per_field": self.categories_per_field,
            "max_events": self.max_events,
        }
        for name, value in counts.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.mean_events <= 0:
            raise ValueError("mean_events must be positive")
        if self.signal_strength < 0:
            raise ValueError("signal_strength must be >= 0")
        if self.signal_mode not in SIGNAL_MODES:
            raise ValueError(f"signal_mode must be one of {SIGNAL_MODES}")
        if not 0.0 <= self.p_tie < 1.0:
            raise ValueError("p_tie must be in [0, 1)")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ValueError("missing_rate must be in [0, 1)")
        if not 1.0 <= self.mean_stays_per_patient <= 2.0:
            raise ValueError("mean_stays_per_patient must be in [1, 2]")
        n_valueish = self.n_vitals + self.n_labs
        if not 0 <= self.n_signal_vars <= n_valueish:
            raise ValueError("n_signal_vars must be within the vitals+labs pool")


@dataclass
class RawStay:
    stay_id: int
    patient_id: int
    admission_order: int
    los_hours: float
    static_categorical: dict
    static_numeric: dict
    events: list  # (time_hours, variable_name, value), time-sorted
    labels: dict  # LABEL_NAMES -> bool


@dataclass(frozen=True)
class _VariableSpec:
    name: str
    rate_share: float
    mean: float
    sd: float
    signal: bool


def _build_schema(cfg: GeneratorConfig, rng: np.random.Generator):
    names: list[tuple[str, float]] = []
    for i in range(cfg.n_vitals):
        names.append((f"vital_{i:02d}", 3.0))
    for i in range(cfg.n_labs):
        names.append((f"lab_{i:02d}", 1.0))
    for i in range(cfg.n_meds):
        names.append((f"med_{i:02d}", 0.8))
    for i in range(cfg.n_assessments):
        names.append((f"assess_{i:02d}", 1.5))
    total_w = sum(w for _, w in names)
    signal_pool = [f"vital_{i:02d}" for i in range(cfg.n_vitals)]
    signal_pool += [f"lab_{i:02d}" for i in range(cfg.n_labs)]
    signal_names = set(signal_pool[: cfg.n_signal_vars])
    specs = []
    for name, w in names:
        specs.append(_VariableSpec(
            name=name,
            rate_share=w / total_w,
            mean=float(rng.uniform(20.0, 150.0)),
            sd=float(rng.uniform(1.0, 10.0)),
            signal=name in signal_names,
        ))
    return specs


def _static_schema(cfg: GeneratorConfig, rng: np.random.Generator):
    numeric = [(f"num_{i:02d}", float(rng.uniform(0.0, 100.0)), float(rng.uniform(0.5, 20.0)))
               for i in range(cfg.static_numeric)]
    categorical = [(f"cat_{i:02d}", [f"c{j}" for j in range(cfg.categories_per_field)])
                   for i in range(cfg.static_categorical)]
    return numeric, categorical


def generate_cohort(cfg: GeneratorConfig) -> list[RawStay]:
    """Deterministic for a fixed config: one RNG stream, fixed draw order."""
    rng = np.random.default_rng(cfg.seed)
    specs = _build_schema(cfg, rng)
    num_schema, cat_schema = _static_schema(cfg, rng)

    # patients get 1 or 2 stays so ~mean_stays_per_patient on average
    patient_of_slot: list[int] = []
    pid = 0
    while len(patient_of_slot) < cfg.n_stays:
        n = 1 + int(rng.random() < (cfg.mean_stays_per_patient - 1.0))
        for _ in range(n):
            if len(patient_of_slot) < cfg.n_stays:
                patient_of_slot.append(pid)
        pid += 1
    admission_order = rng.permutation(cfg.n_stays)

    mode = cfg.signal_mode
    strength = cfg.signal_strength
    stays: list[RawStay] = []
    for slot in range(cfg.n_stays):
        severity = float(rng.uniform())
        los = float(np.clip(rng.lognormal(math.log(55.0), 0.8), 1.01, 239.9))

        merged: list[tuple[float, int, float]] = []
        for vi, spec in enumerate(specs):
            lam = cfg.mean_events * spec.rate_share
            if spec.signal and mode in ("presence_only", "both"):
                lam *= float(np.clip(1.0 + strength * (severity - 0.5), 0.05, 5.0))
            n = int(rng.poisson(lam))
            if n == 0:
                continue
            times = np.sort(rng.uniform(0.0, los, size=n))
            values = rng.normal(spec.mean, spec.sd, size=n)
            if spec.signal and mode in ("value_trend", "both"):
                values = values + spec.sd * strength * (severity - 0.5) * (0.5 + times / los)
            for t, v in zip(times, values):
                merged.append((float(t), vi, float(v)))
        merged.sort(key=lambda e: (e[0], e[1]))
        if len(merged) > cfg.max_events:
            merged = merged[: cfg.max_events]
        # snap a fraction of events onto the previous timestamp so positional
        # indices get genuine ties
        if len(merged) > 1 and cfg.p_tie > 0.0:
            snap = rng.random(len(merged) - 1) < cfg.p_tie
            for i in range(1, len(merged)):
                if snap[i - 1]:
                    merged[i] = (merged[i - 1][0], merged[i][1], merged[i][2])
        events = [(t, specs[vi].name, v) for t, vi, v in merged]

        static_numeric = {}
        for name, mu, sd in num_schema:
            value = float(rng.normal(mu, sd))
            static_numeric[name] = None if rng.random() < cfg.missing_rate else value
        static_categorical = {}
        for name, cats in cat_schema:
            value = cats[int(rng.integers(len(cats)))]
            static_categorical[name] = None if rng.random() < cfg.missing_rate else value

        labels = {}
        for task in LABEL_NAMES:
            a, b = LABEL_LINKS[task]
            p = 1.0 / (1.0 + math.exp(-(a * severity + b)))
            labels[task] = bool(rng.random() < p)

        order = int(admission_order[slot])
        stays.append(RawStay(
            stay_id=10000 + order,
            patient_id=patient_of_slot[slot],
            admission_order=order,
            los_hours=los,
            static_categorical=static_categorical,
            static_numeric=static_numeric,
            events=events,
            labels=labels,
        ))
    stays.sort(key=lambda s: s.admission_order)
    return stays


def split_chronological(stays: list[RawStay], dev_frac: float) -> tuple[list[RawStay], list[RawStay]]:
    """Split by each patient's first admission; no patient straddles the cut.

    Patients are ordered by their earliest admission_order and assigned to
    the development side until it holds ~dev_frac of all stays.
    """
    if not stays:
        raise ValueError("cannot split an empty cohort")
    if not 0.0 < dev_frac < 1.0:
        raise ValueError(f"dev_frac must be in (0, 1), got {dev_frac}")
    first_order: dict[int, int] = {}
    grouped: dict[int, list[RawStay]] = {}
    for s in stays:
        grouped.setdefault(s.patient_id, []).append(s)
        if s.patient_id not in first_order or s.admission_order < first_order[s.patient_id]:
            first_order[s.patient_id] = s.admission_order
    target = dev_frac * len(stays)
    dev: list[RawStay] = []
    val: list[RawStay] = []
    for pid in sorted(grouped, key=lambda p: first_order[p]):
        side = dev if len(dev) < target else val
        side.extend(grouped[pid])
    dev.sort(key=lambda s: s.admission_order)
    val.sort(key=lambda s: s.admission_order)
    return dev, val


# ----------------------------------------------------------------------
# JSONL persistence


def stay_to_dict(stay: RawStay) -> dict:
    d = dataclasses.asdict(stay)
    d["events"] = [[t, name, v] for t, name, v in stay.events]
    return d


def stay_from_dict(d: dict) -> RawStay:
    return RawStay(
        stay_id=d["stay_id"],
        patient_id=d["patient_id"],
        admission_order=d["admission_order"],
        los_hours=d["los_hours"],
        static_categorical=d["static_categorical"],
        static_numeric=d["static_numeric"],
        events=[(e[0], e[1], e[2]) for e in d["events"]],
        labels=d["labels"],
    )


def write_cohort(stays: list[RawStay], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for stay in stays:
            f.write(json.dumps(stay_to_dict(stay), separators=(",", ":")))
            f.write("\n")


def read_cohort(path) -> list[RawStay]:
    stays = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                stays.append(stay_from_dict(json.loads(line)))
    return stays


def labels_vector(stay: RawStay) -> np.ndarray:
    return np.array([float(stay.labels[name]) for name in LABEL_NAMES])
