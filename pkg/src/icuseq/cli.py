"""Command-line interface: generate, tokenize, train, evaluate, suite.

Config files are plain ``key = value`` text; any field can be overridden
with an ``ICUSEQ_<FIELD>`` environment variable. Exit codes: 0 success,
2 bad usage or config, 3 undefined metric, 4 training divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .cohort import GeneratorConfig, generate_cohort, read_cohort, split_chronological, write_cohort
from .configio import config_from_mapping, read_kv_config
from .metrics import UndefinedMetricError, reports_to_csv
from .tokenizer import build_vocabulary, save_vocab, tokenize_stay, write_tokenized
from .training import (
    TrainConfig,
    TrainingDivergedError,
    config_hash,
    evaluate,
    load_run_dir,
    prepare_tabular_data,
    prepare_token_data,
    representation_kind,
    run_experiment_suite,
    train_single,
)

EXIT_USAGE = 2
EXIT_UNDEFINED_METRIC = 3
EXIT_DIVERGED = 4


def _load_config(cls, path, overrides=None):
    mapping = read_kv_config(path) if path else {}
    if overrides:
        mapping.update({k: str(v) for k, v in overrides.items() if v is not None})
    return config_from_mapping(cls, mapping)


def cmd_generate(args) -> int:
    cfg = _load_config(GeneratorConfig, args.config, {"seed": args.seed})
    stays = generate_cohort(cfg)
    write_cohort(stays, args.out)
    print(f"wrote {len(stays)} stays to {args.out}")
    return 0


def cmd_tokenize(args) -> int:
    stays = read_cohort(args.cohort)
    dev, _ = split_chronological(stays, args.dev_frac)
    vocab = build_vocabulary(dev, min_prevalence=args.min_prevalence)
    save_vocab(vocab, args.vocab_out)
    records = []
    excluded = 0
    for stay in stays:
        try:
            static, tokens = tokenize_stay(stay, vocab, max_seq_len=args.max_seq_len)
        except ValueError:
            excluded += 1
            continue
        records.append((stay.stay_id, stay.los_hours, stay.labels, static, tokens))
    write_tokenized(args.out, records)
    print(f"vocabulary: {len(vocab.name_to_id)} variables -> {args.vocab_out}")
    print(f"tokenized {len(records)} stays ({excluded} excluded) -> {args.out}")
    return 0


def cmd_train(args) -> int:
    tcfg = _load_config(TrainConfig, args.config,
                        {"seed": args.seed, "model": args.model})
    if not tcfg.cohort:
        print("error: config must set 'cohort = <jsonl path>'", file=sys.stderr)
        return EXIT_USAGE
    stays = read_cohort(tcfg.cohort)
    report = train_single(stays, tcfg, out_dir=args.out)
    print(f"{report.model}: mean AUROC {report.mean_auroc:.4f} "
          f"after {report.epochs} epochs -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    model, vocab, tcfg = load_run_dir(args.checkpoint)
    stays = read_cohort(args.cohort)
    _, val = split_chronological(stays, tcfg.dev_frac)
    if representation_kind(tcfg.model) == "tokens":
        items = prepare_token_data(val, vocab, tcfg.max_seq_len)
    else:
        items = prepare_tabular_data(val, vocab)
    report = evaluate(model, items, tcfg.model, epochs=0, seed=tcfg.seed,
                      cfg_hash=config_hash(tcfg))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.with_suffix(".json").write_text(json.dumps(report.to_dict(), indent=1))
    out.with_suffix(".csv").write_text(reports_to_csv([report]))
    print(f"evaluated {tcfg.model} on {len(items)} stays: mean AUROC {report.mean_auroc:.4f}")
    return 0


def cmd_suite(args) -> int:
    tcfg = _load_config(TrainConfig, args.config, {"seed": args.seed})
    if not tcfg.cohort:
        print("error: config must set 'cohort = <jsonl path>'", file=sys.stderr)
        return EXIT_USAGE
    stays = read_cohort(tcfg.cohort)
    reports, csv_text = run_experiment_suite(stays, tcfg, out_dir=args.out)
    print(csv_text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="icuseq")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic cohort as JSONL")
    g.add_argument("--config", help="key=value generator config file")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_generate)

    t = sub.add_parser("tokenize", help="fit a vocabulary and tokenize a cohort")
    t.add_argument("--cohort", required=True)
    t.add_argument("--vocab-out", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--dev-frac", type=float, default=0.8)
    t.add_argument("--min-prevalence", type=float, default=0.01)
    t.add_argument("--max-seq-len", type=int, default=512)
    t.set_defaults(fn=cmd_tokenize)

    tr = sub.add_parser("train", help="train one model and write a run directory")
    tr.add_argument("--config", required=True)
    tr.add_argument("--model", default=None)
    tr.add_argument("--seed", type=int, default=None)
    tr.add_argument("--out", required=True)
    tr.set_defaults(fn=cmd_train)

    ev = sub.add_parser("evaluate", help="evaluate a run directory on a cohort's validation split")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--cohort", required=True)
    ev.add_argument("--out", required=True, help="output path prefix (.json/.csv)")
    ev.set_defaults(fn=cmd_evaluate)

    su = sub.add_parser("suite", help="train and evaluate all five comparison models")
    su.add_argument("--config", required=True)
    su.add_argument("--seed", type=int, default=None)
    su.add_argument("--out", required=True)
    su.set_defaults(fn=cmd_suite)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except UndefinedMetricError as exc:
        print(f"error: undefined metric: {exc}", file=sys.stderr)
        return EXIT_UNDEFINED_METRIC
    except TrainingDivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
