"""Event-stream tokenization: vocabulary, positional indices, cumulative
value features, standardization, and static-vector preparation.

Each clinical event becomes a 12-wide token: a non-unique positional index
(shared by events at the same timestamp), an integer variable id, the
standardized elapsed hours from admission, and 9 continuous features (the
current value plus 8 statistics over prior same-variable measurements).
All standardization statistics are fit on the development cohort only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cohort import LABEL_NAMES, RawStay

N_TASKS = 7
PAD_ID = 0
TASK_IDS = tuple(range(1, N_TASKS + 1))
STATIC_ID = N_TASKS + 1
OOV_ID = N_TASKS + 2
FIRST_VAR_ID = N_TASKS + 3

SD_FLOOR = 1e-6

VALUE_FEATURE_NAMES = (
    "current", "prior_mean", "prior_median", "prior_count", "prior_min",
    "prior_max", "prior_std", "first_value", "hours_since_prior",
)

SCHEMA_VERSION = 1


class ExcludedStayError(ValueError):
    """Stay exceeds the maximum tokenized sequence length."""


@dataclass
class EventToken:
    pos: int
    var_id: int
    t_abs: float
    values: np.ndarray  # (9,) standardized

    def __eq__(self, other):
        return (isinstance(other, EventToken)
                and self.pos == other.pos
                and self.var_id == other.var_id
                and self.t_abs == other.t_abs
                and np.array_equal(self.values, other.values))


@dataclass
class StaticSchema:
    numeric_fields: list
    numeric_median: dict
    numeric_mean: dict
    numeric_sd: dict
    categorical_fields: list
    categories: dict

    @property
    def dim(self) -> int:
        one_hot = sum(len(self.categories[f]) for f in self.categorical_fields)
        return len(self.numeric_fields) + one_hot + len(self.numeric_fields) + len(self.categorical_fields)


@dataclass
class Vocabulary:
    name_to_id: dict
    value_mean: dict  # name -> (9,) float64
    value_sd: dict    # name -> (9,) float64, floored at SD_FLOOR
    value_median: dict  # name -> raw current-value median
    global_mean: np.ndarray
    global_sd: np.ndarray
    time_mean: float
    time_sd: float
    static: StaticSchema

    def __post_init__(self):
        self.id_to_name = {i: n for n, i in self.name_to_id.items()}

    @property
    def size(self) -> int:
        """Total id space: reserved ids plus variable ids."""
        return FIRST_VAR_ID + len(self.name_to_id)

    @property
    def variable_names(self) -> list:
        return sorted(self.name_to_id, key=self.name_to_id.get)

    def lookup(self, name: str) -> int:
        return self.name_to_id.get(name, OOV_ID)


def positional_indices(times) -> list:
    """Dense rank of each timestamp among the distinct timestamps.

    Equal times share an index; the index advances by exactly one at each
    new distinct value. Input must be sorted non-decreasing.
    """
    out = []
    prev = None
    idx = -1
    for t in times:
        if prev is not None and t < prev:
            raise ValueError("times must be non-decreasing")
        if prev is None or t != prev:
            idx += 1
            prev = t
        out.append(idx)
    return out


def cumulative_features(prior, t_now: float, v_now: float) -> np.ndarray:
    """8 statistics over prior same-variable measurements.

    Order: mean, median, count, min, max, population std, first value,
    elapsed time since the most recent prior measurement. With no priors
    the value statistics fall back to the current value, count = 0,
    std = 0 and the elapsed gap = 0, so first occurrences stay finite and
    remain recognizable through the zero count.
    """
    if not prior:
        v = float(v_now)
        return np.array([v, v, 0.0, v, v, 0.0, v, 0.0])
    t_last = prior[-1][0]
    if t_last > t_now:
        raise ValueError("prior measurements must not postdate t_now")
    vals = np.array([v for _, v in prior], dtype=np.float64)
    return np.array([
        vals.mean(),
        float(np.median(vals)),
        float(len(vals)),
        vals.min(),
        vals.max(),
        vals.std(),
        vals[0],
        t_now - t_last,
    ])


def _event_feature_rows(stay: RawStay):
    """Yield (name, time, 9-feature raw row) for each event in time order."""
    priors: dict = {}
    for t, name, v in stay.events:
        prior = priors.setdefault(name, [])
        row = np.empty(9, dtype=np.float64)
        row[0] = v
        row[1:] = cumulative_features(prior, t, v)
        prior.append((t, v))
        yield name, t, row


def _column_stats(rows: np.ndarray):
    mean = rows.mean(axis=0)
    sd = np.maximum(rows.std(axis=0), SD_FLOOR)
    return mean, sd


def build_vocabulary(dev: list, min_prevalence: float = 0.01) -> Vocabulary:
    """Fit ids and all standardization statistics on the development cohort.

    Variables measured in fewer than ``min_prevalence`` of dev stays are
    dropped (their events later map to the out-of-vocabulary id).
    """
    if not dev:
        raise ValueError("development cohort is empty")
    n_dev = len(dev)
    stay_counts: dict = {}
    for stay in dev:
        for name in {name for _, name, _ in stay.events}:
            stay_counts[name] = stay_counts.get(name, 0) + 1
    kept = sorted(n for n, c in stay_counts.items() if c / n_dev >= min_prevalence)
    if not kept:
        raise ValueError("no variable meets the prevalence threshold")
    name_to_id = {name: FIRST_VAR_ID + i for i, name in enumerate(kept)}

    per_var_rows: dict = {name: [] for name in kept}
    times: list = []
    for stay in dev:
        for name, t, row in _event_feature_rows(stay):
            if name in name_to_id:
                per_var_rows[name].append(row)
                times.append(t)

    value_mean, value_sd, value_median = {}, {}, {}
    pooled = []
    for name in kept:
        rows = np.array(per_var_rows[name])
        value_mean[name], value_sd[name] = _column_stats(rows)
        value_median[name] = float(np.median(rows[:, 0]))
        pooled.append(rows)
    pooled = np.concatenate(pooled, axis=0)
    global_mean, global_sd = _column_stats(pooled)
    times_arr = np.array(times, dtype=np.float64)
    time_mean = float(times_arr.mean()) if times_arr.size else 0.0
    time_sd = float(max(times_arr.std(), SD_FLOOR)) if times_arr.size else 1.0

    return Vocabulary(
        name_to_id=name_to_id,
        value_mean=value_mean,
        value_sd=value_sd,
        value_median=value_median,
        global_mean=global_mean,
        global_sd=global_sd,
        time_mean=time_mean,
        time_sd=time_sd,
        static=_fit_static_schema(dev),
    )


def _fit_static_schema(dev: list) -> StaticSchema:
    numeric_fields = sorted({f for stay in dev for f in stay.static_numeric})
    categorical_fields = sorted({f for stay in dev for f in stay.static_categorical})
    numeric_median, numeric_mean, numeric_sd = {}, {}, {}
    for f in numeric_fields:
        obs = np.array([stay.static_numeric[f] for stay in dev
                        if stay.static_numeric.get(f) is not None], dtype=np.float64)
        if obs.size == 0:
            numeric_median[f], numeric_mean[f], numeric_sd[f] = 0.0, 0.0, 1.0
        else:
            numeric_median[f] = float(np.median(obs))
            numeric_mean[f] = float(obs.mean())
            numeric_sd[f] = float(max(obs.std(), SD_FLOOR))
    categories = {}
    for f in categorical_fields:
        cats = {stay.static_categorical[f] for stay in dev
                if stay.static_categorical.get(f) is not None}
        categories[f] = sorted(cats)
    return StaticSchema(numeric_fields, numeric_median, numeric_mean, numeric_sd,
                        categorical_fields, categories)


def static_vector(stay: RawStay, vocab: Vocabulary) -> np.ndarray:
    """standardized numerics ++ one-hot categoricals ++ missingness masks.

    Missing numerics are imputed with the dev median before standardizing;
    the mask bit is 1 exactly when the source field was missing. Unseen
    categories one-hot to all zeros with mask 0.
    """
    sch = vocab.static
    parts = []
    num_mask = []
    for f in sch.numeric_fields:
        raw = stay.static_numeric.get(f)
        missing = raw is None
        value = sch.numeric_median[f] if missing else float(raw)
        parts.append((value - sch.numeric_mean[f]) / sch.numeric_sd[f])
        num_mask.append(1.0 if missing else 0.0)
    cat_mask = []
    for f in sch.categorical_fields:
        raw = stay.static_categorical.get(f)
        missing = raw is None
        one_hot = [0.0] * len(sch.categories[f])
        if not missing and raw in sch.categories[f]:
            one_hot[sch.categories[f].index(raw)] = 1.0
        parts.extend(one_hot)
        cat_mask.append(1.0 if missing else 0.0)
    return np.array(parts + num_mask + cat_mask, dtype=np.float64)


def tokenize_stay(stay: RawStay, vocab: Vocabulary,
                  max_seq_len: int = 512) -> tuple:
    """Convert one stay into (static vector, event tokens).

    Unknown variables map to the OOV id and are standardized with the
    pooled dev statistics. Stays with more than ``max_seq_len`` events are
    rejected with :class:`ExcludedStayError` (the exclusion rule).
    """
    if len(stay.events) > max_seq_len:
        raise ExcludedStayError(
            f"stay {stay.stay_id}: {len(stay.events)} events exceeds max_seq_len {max_seq_len}")
    pos = positional_indices([t for t, _, _ in stay.events])
    tokens = []
    for (name, t, row), p in zip(_event_feature_rows(stay), pos):
        var_id = vocab.lookup(name)
        if var_id == OOV_ID:
            mean, sd = vocab.global_mean, vocab.global_sd
        else:
            mean, sd = vocab.value_mean[name], vocab.value_sd[name]
        values = (row - mean) / sd
        t_abs = (t - vocab.time_mean) / vocab.time_sd
        tokens.append(EventToken(pos=p, var_id=var_id, t_abs=float(t_abs), values=values))
    return static_vector(stay, vocab), tokens


def assemble_model_sequence(tokens: list, los_hours: float,
                            vocab: Vocabulary) -> list:
    """Prefix the event tokens with the 7 task tokens and the static slot.

    Task tokens carry their reserved ids, the standardized length of stay
    as absolute time, and zero value features. All prefix tokens sit at
    positional index 0 so the sinusoidal encodings of real events are
    untouched. The static slot is a placeholder; the encoder substitutes
    the projected static vector for its embedding row.
    """
    std_los = float((los_hours - vocab.time_mean) / vocab.time_sd)
    prefix = [EventToken(pos=0, var_id=tid, t_abs=std_los, values=np.zeros(9))
              for tid in TASK_IDS]
    prefix.append(EventToken(pos=0, var_id=STATIC_ID, t_abs=std_los, values=np.zeros(9)))
    return prefix + list(tokens)


def token_matrix(tokens: list) -> np.ndarray:
    """Tokens as a (T, 12) float matrix: pos, var_id, t_abs, 9 values."""
    out = np.zeros((len(tokens), 12), dtype=np.float64)
    for i, tok in enumerate(tokens):
        out[i, 0] = tok.pos
        out[i, 1] = tok.var_id
        out[i, 2] = tok.t_abs
        out[i, 3:] = tok.values
    return out


# ----------------------------------------------------------------------
# persistence


def vocab_to_dict(vocab: Vocabulary) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "reserved": {"pad": PAD_ID, "tasks": list(TASK_IDS), "static": STATIC_ID, "oov": OOV_ID},
        "variables": {
            name: {
                "id": vocab.name_to_id[name],
                "mean": vocab.value_mean[name].tolist(),
                "sd": vocab.value_sd[name].tolist(),
                "median": vocab.value_median[name],
            }
            for name in vocab.variable_names
        },
        "global_stats": {"mean": vocab.global_mean.tolist(), "sd": vocab.global_sd.tolist()},
        "time_stats": {"mean": vocab.time_mean, "sd": vocab.time_sd},
        "static": {
            "numeric_fields": vocab.static.numeric_fields,
            "numeric_median": vocab.static.numeric_median,
            "numeric_mean": vocab.static.numeric_mean,
            "numeric_sd": vocab.static.numeric_sd,
            "categorical_fields": vocab.static.categorical_fields,
            "categories": vocab.static.categories,
            "dim": vocab.static.dim,
        },
    }


def vocab_from_dict(d: dict) -> Vocabulary:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported vocabulary schema version {d.get('schema_version')}")
    variables = d["variables"]
    static = d["static"]
    return Vocabulary(
        name_to_id={n: v["id"] for n, v in variables.items()},
        value_mean={n: np.array(v["mean"]) for n, v in variables.items()},
        value_sd={n: np.array(v["sd"]) for n, v in variables.items()},
        value_median={n: v["median"] for n, v in variables.items()},
        global_mean=np.array(d["global_stats"]["mean"]),
        global_sd=np.array(d["global_stats"]["sd"]),
        time_mean=d["time_stats"]["mean"],
        time_sd=d["time_stats"]["sd"],
        static=StaticSchema(
            numeric_fields=static["numeric_fields"],
            numeric_median=static["numeric_median"],
            numeric_mean=static["numeric_mean"],
            numeric_sd=static["numeric_sd"],
            categorical_fields=static["categorical_fields"],
            categories=static["categories"],
        ),
    )


def save_vocab(vocab: Vocabulary, path) -> None:
    Path(path).write_text(json.dumps(vocab_to_dict(vocab), indent=1))


def load_vocab(path) -> Vocabulary:
    return vocab_from_dict(json.loads(Path(path).read_text()))


def write_tokenized(path, records: list) -> None:
    """records: (stay_id, los_hours, labels dict, static vec, tokens)."""
    with open(path, "w", encoding="utf-8") as f:
        header = {"schema_version": SCHEMA_VERSION, "kind": "icuseq-tokens"}
        f.write(json.dumps(header, separators=(",", ":")) + "\n")
        for stay_id, los, labels, static, tokens in records:
            rec = {
                "stay_id": stay_id,
                "los_hours": los,
                "labels": labels,
                "static": np.asarray(static).tolist(),
                "tokens": token_matrix(tokens).tolist(),
            }
            f.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_tokenized(path) -> list:
    with open(path, "r", encoding="utf-8") as f:
        header = json.loads(f.readline())
        if header.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported token file schema version {header.get('schema_version')}")
        out = []
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            mat = np.array(rec["tokens"], dtype=np.float64).reshape(-1, 12)
            tokens = [EventToken(pos=int(r[0]), var_id=int(r[1]), t_abs=float(r[2]),
                                 values=r[3:].copy()) for r in mat]
            out.append((rec["stay_id"], rec["los_hours"], rec["labels"],
                        np.array(rec["static"], dtype=np.float64), tokens))
        return out
