"""Training loop with chronological splits, early stopping on internal-val
mean AUROC, checkpoint restore, and the five-model comparison suite."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .cohort import labels_vector, split_chronological
from .metrics import MetricsReport, auroc, reports_to_csv
from .model import (
    GruAttentionClassifier,
    GruClassifier,
    ModelConfig,
    TokenizedGruClassifier,
    TransformerClassifier,
    discrete_only_switch,
    multi_task_loss,
    tabularize,
)
from .tokenizer import (
    ExcludedStayError,
    Vocabulary,
    assemble_model_sequence,
    build_vocabulary,
    load_vocab,
    save_vocab,
    static_vector,
    token_matrix,
    tokenize_stay,
)

# comparison-table row order
MODEL_ROWS = ("transformer-discrete", "transformer", "gru", "gru-attn", "gru-attn-tokenized")

TOKEN_MODELS = {"transformer", "transformer-discrete", "gru-attn-tokenized"}


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    model: str = "transformer"
    cohort: str = ""
    dev_frac: float = 0.8
    early_stop_frac: float = 0.10
    min_prevalence: float = 0.01
    max_seq_len: int = 512
    batch_size: int = 21
    max_epochs: int = 50
    patience: int = 4
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    seed: int = 0
    layers: int = 8
    d: int = 128
    ff: int = 512
    heads: int = 8
    window: int = 128
    dropout: float = 0.1

    def __post_init__(self):
        if self.model not in MODEL_ROWS:
            raise ValueError(f"model must be one of {MODEL_ROWS}")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        for name in ("dev_frac", "early_stop_frac"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")

    def model_config(self, model_name: str = None) -> ModelConfig:
        cfg = ModelConfig(layers=self.layers, d=self.d, ff=self.ff, heads=self.heads,
                          window=self.window, dropout=self.dropout, seed=self.seed)
        if (model_name or self.model) == "transformer-discrete":
            cfg = discrete_only_switch(cfg)
        return cfg


def config_hash(cfg) -> str:
    payload = json.dumps(dataclasses.asdict(cfg), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


# ----------------------------------------------------------------------
# per-model input preparation


@dataclass
class TokenizedStayData:
    stay_id: int
    ids: np.ndarray
    pos: np.ndarray
    cont: np.ndarray
    static: np.ndarray
    labels: np.ndarray


@dataclass
class TabularStayData:
    stay_id: int
    series: np.ndarray
    static: np.ndarray
    labels: np.ndarray


def prepare_token_data(stays, vocab: Vocabulary, max_seq_len: int,
                       dtype=np.float32) -> list:
    """Tokenize, assemble and convert to arrays; over-length stays are
    excluded per the exclusion rule."""
    out = []
    for stay in stays:
        try:
            static, tokens = tokenize_stay(stay, vocab, max_seq_len=max_seq_len)
        except ExcludedStayError:
            continue
        seq = assemble_model_sequence(tokens, stay.los_hours, vocab)
        mat = token_matrix(seq)
        out.append(TokenizedStayData(
            stay_id=stay.stay_id,
            ids=mat[:, 1].astype(np.int64),
            pos=mat[:, 0].astype(np.int64),
            cont=mat[:, 2:].astype(dtype),
            static=static.astype(dtype),
            labels=labels_vector(stay),
        ))
    return out


def prepare_tabular_data(stays, vocab: Vocabulary, dtype=np.float32) -> list:
    out = []
    for stay in stays:
        series = tabularize(stay, vocab, vocab.value_median)
        out.append(TabularStayData(
            stay_id=stay.stay_id,
            series=series.values.astype(dtype),
            static=static_vector(stay, vocab).astype(dtype),
            labels=labels_vector(stay),
        ))
    return out


def representation_kind(model_name: str) -> str:
    return "tokens" if model_name in TOKEN_MODELS else "tabular"


def build_model(model_name: str, vocab: Vocabulary, cfg: ModelConfig):
    if model_name in ("transformer", "transformer-discrete"):
        return TransformerClassifier(vocab.size, vocab.static.dim, cfg)
    if model_name == "gru":
        return GruClassifier(len(vocab.name_to_id), vocab.static.dim, cfg)
    if model_name == "gru-attn":
        return GruAttentionClassifier(len(vocab.name_to_id), vocab.static.dim, cfg)
    if model_name == "gru-attn-tokenized":
        return TokenizedGruClassifier(vocab.size, vocab.static.dim, cfg)
    raise ValueError(f"unknown model {model_name!r}")


def model_forward(model, item):
    if isinstance(item, TokenizedStayData):
        return model(item.ids, item.pos, item.cont, item.static)
    return model(item.series, item.static)


def predict_scores(model, items) -> np.ndarray:
    """Logits for every stay, dropout disabled, no graph recording."""
    model.eval()
    with nn.no_grad():
        rows = [model_forward(model, item).data.astype(np.float64) for item in items]
    return np.array(rows)


def mean_task_auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    vals = [auroc(scores[:, k], labels[:, k]) for k in range(labels.shape[1])]
    return float(np.mean(vals))


# ----------------------------------------------------------------------
# training


class EarlyStopper:
    """Keep the best internal-val metric; stop after `patience` epochs
    without strict improvement (ties resolve to the earlier epoch)."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_metric = -np.inf
        self.best_epoch = 0
        self.stale = 0

    def update(self, metric: float, epoch: int) -> bool:
        if metric > self.best_metric:
            self.best_metric = metric
            self.best_epoch = epoch
            self.stale = 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


@dataclass
class TrainResult:
    epochs_run: int
    best_epoch: int
    best_metric: float
    history: list


def train(model, train_items: list, stop_items: list, tcfg: TrainConfig) -> TrainResult:
    """Mini-batch training with per-epoch reshuffling (seeded by
    (seed, epoch)); restores the best checkpoint on exit."""
    if not train_items or not stop_items:
        raise ValueError("training and early-stop sets must be non-empty")
    opt = nn.Adam(model.parameters(), lr=tcfg.lr, betas=(tcfg.beta1, tcfg.beta2))
    stop_labels = np.array([it.labels for it in stop_items])
    stopper = EarlyStopper(tcfg.patience)
    best_state = model.state_dict()
    history = []
    epochs_run = 0
    for epoch in range(1, tcfg.max_epochs + 1):
        epochs_run = epoch
        model.train()
        order = np.random.default_rng([tcfg.seed, epoch]).permutation(len(train_items))
        for start in range(0, len(order), tcfg.batch_size):
            batch = [train_items[i] for i in order[start:start + tcfg.batch_size]]
            logits = nn.concat([model_forward(model, it).reshape(1, -1) for it in batch], axis=0)
            labels = np.array([it.labels for it in batch], dtype=logits.data.dtype)
            loss = multi_task_loss(logits, labels)
            if not np.isfinite(loss.data):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {start // tcfg.batch_size}")
            model.zero_grad()
            loss.backward()
            opt.step()
        metric = mean_task_auroc(predict_scores(model, stop_items), stop_labels)
        history.append(metric)
        if stopper.update(metric, epoch):
            best_state = model.state_dict()
        if stopper.should_stop:
            break
    model.load_state_dict(best_state)
    return TrainResult(epochs_run=epochs_run, best_epoch=stopper.best_epoch,
                       best_metric=stopper.best_metric, history=history)


def evaluate(model, items: list, model_name: str, epochs: int, seed: int,
             cfg_hash: str, wall_clock_s: float = 0.0) -> MetricsReport:
    """Single evaluation pass (dropout disabled) over a prepared dataset."""
    labels = np.array([it.labels for it in items])
    scores = predict_scores(model, items)
    return MetricsReport.from_scores(model_name, scores, labels, epochs=epochs,
                                     seed=seed, config_hash=cfg_hash,
                                     wall_clock_s=wall_clock_s)


# ----------------------------------------------------------------------
# experiment pipelines


@dataclass
class PreparedSplits:
    vocab: Vocabulary
    token_train: list
    token_stop: list
    token_val: list
    tabular_train: list
    tabular_stop: list
    tabular_val: list


def prepare_splits(stays: list, tcfg: TrainConfig, kinds=("tokens", "tabular")) -> PreparedSplits:
    dev, val = split_chronological(stays, tcfg.dev_frac)
    train_stays, stop_stays = split_chronological(dev, 1.0 - tcfg.early_stop_frac)
    vocab = build_vocabulary(dev, min_prevalence=tcfg.min_prevalence)
    tok = {"train": [], "stop": [], "val": []}
    tab = {"train": [], "stop": [], "val": []}
    parts = {"train": train_stays, "stop": stop_stays, "val": val}
    for part, part_stays in parts.items():
        if "tokens" in kinds:
            tok[part] = prepare_token_data(part_stays, vocab, tcfg.max_seq_len)
        if "tabular" in kinds:
            tab[part] = prepare_tabular_data(part_stays, vocab)
    return PreparedSplits(vocab=vocab,
                          token_train=tok["train"], token_stop=tok["stop"], token_val=tok["val"],
                          tabular_train=tab["train"], tabular_stop=tab["stop"], tabular_val=tab["val"])


def _splits_for(prepared: PreparedSplits, model_name: str):
    if representation_kind(model_name) == "tokens":
        return prepared.token_train, prepared.token_stop, prepared.token_val
    return prepared.tabular_train, prepared.tabular_stop, prepared.tabular_val


def train_single(stays: list, tcfg: TrainConfig, out_dir=None) -> MetricsReport:
    """Train one model on the chronological splits and evaluate on the
    held-out validation cohort; optionally persist a run directory."""
    prepared = prepare_splits(stays, tcfg, kinds=(representation_kind(tcfg.model),))
    return _run_one(prepared, tcfg, tcfg.model, out_dir)


def _run_one(prepared: PreparedSplits, tcfg: TrainConfig, model_name: str,
             out_dir=None) -> MetricsReport:
    t0 = time.monotonic()
    train_items, stop_items, val_items = _splits_for(prepared, model_name)
    model = build_model(model_name, prepared.vocab, tcfg.model_config(model_name))
    result = train(model, train_items, stop_items, tcfg)
    report = evaluate(model, val_items, model_name, epochs=result.epochs_run,
                      seed=tcfg.seed, cfg_hash=config_hash(tcfg),
                      wall_clock_s=time.monotonic() - t0)
    if out_dir is not None:
        write_run_dir(out_dir, model, prepared.vocab, tcfg, model_name, report)
    return report


def run_experiment_suite(stays: list, tcfg: TrainConfig, out_dir=None) -> tuple:
    """Train and evaluate all five comparison models on one cohort/split.

    Returns (reports in table-row order, CSV text). The CSV carries no
    timing fields, so same-seed reruns are byte-identical.
    """
    prepared = prepare_splits(stays, tcfg)
    reports = []
    for name in MODEL_ROWS:
        sub_dir = None if out_dir is None else Path(out_dir) / name
        reports.append(_run_one(prepared, tcfg, name, sub_dir))
    csv_text = reports_to_csv(reports)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "suite.csv").write_text(csv_text)
        payload = {"train_config": dataclasses.asdict(tcfg),
                   "reports": [r.to_dict() for r in reports]}
        (out / "suite.json").write_text(json.dumps(payload, indent=1))
    return reports, csv_text


def write_run_dir(out_dir, model, vocab: Vocabulary, tcfg: TrainConfig,
                  model_name: str, report: MetricsReport) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    nn.save_params(out / "params.bin", {n: p.data for n, p in model.named_parameters()})
    save_vocab(vocab, out / "vocab.json")
    cfg = dataclasses.asdict(tcfg)
    cfg["model"] = model_name
    (out / "config.json").write_text(json.dumps(cfg, indent=1))
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=1))
    (out / "report.csv").write_text(reports_to_csv([report]))


def load_run_dir(run_dir):
    """Rebuild the trained model and vocabulary from a run directory."""
    run = Path(run_dir)
    cfg_dict = json.loads((run / "config.json").read_text())
    tcfg = TrainConfig(**cfg_dict)
    vocab = load_vocab(run / "vocab.json")
    model = build_model(tcfg.model, vocab, tcfg.model_config())
    params = nn.load_params(run / "params.bin")
    model.load_state_dict(params)
    return model, vocab, tcfg
