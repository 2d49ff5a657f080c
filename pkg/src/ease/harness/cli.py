"""``ease`` command line."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..corpus import SyntheticSpec, generate_synthetic_corpus, pairs_to_records, write_jsonl
from .checkpoint import CheckpointError, load_checkpoint
from .config import TrainConfig, apply_overrides, load_config
from .evaluation import evaluate, sparsity_sweep, summarize, write_report
from .training import (
    NonFiniteLossError, load_records, oracle_labels_for, pretrain, restore_state, resume, save_state, train, write_loss_csv,
)

COMMANDS = ("gen-data", "oracle", "pretrain", "train", "evaluate", "sweep", "summarize")
CHECKPOINT_NAME = "checkpoint.ease"


def _read_labels(path: str) -> list[list[int]]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line)["labels"] for line in fh if line.strip()]


def _emit(report: dict, out: Path, command: str) -> None:
    name = "summary.json" if command == "summarize" else "report.json"
    sys.stdout.write(write_report(report, out, name))


def _config(args) -> TrainConfig:
    cfg = load_config(args.config)
    pairs = list(args.set or [])
    if args.seed is not None:
        pairs.append(f"seed={args.seed}")
    if args.out is not None:
        pairs.append(f"out_dir={args.out}")
    return apply_overrides(cfg, pairs)


def _checkpoint_path(cfg: TrainConfig) -> str:
    return cfg.checkpoint or str(Path(cfg.out_dir) / CHECKPOINT_NAME)


def _state_for_eval(cfg: TrainConfig, args):
    ckpt = load_checkpoint(_checkpoint_path(cfg))
    saved = TrainConfig.from_dict(ckpt.config)
    # evaluation-time knobs come from the current config; the model shape from the checkpoint
    keep = {k: getattr(cfg, k) for k in ("max_gen_len", "beam", "report_seed", "eval_batch_size")}
    if any(p.startswith("pi=") for p in args.set or []):
        keep["pi"] = cfg.pi
        keep["beta"] = 0.0 if cfg.pi == 1 else saved.beta
    return restore_state(ckpt, saved.replace(**keep))


def cmd_gen_data(cfg: TrainConfig, args) -> dict:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = dict(sentences_per_doc=cfg.synth_sentences_per_doc, salient_fraction=cfg.synth_salient_fraction,
                vocab_size=cfg.synth_vocab_size)
    splits = {
        "train": SyntheticSpec(num_docs=cfg.synth_num_docs, seed=cfg.seed, **base),
        "eval": SyntheticSpec(num_docs=cfg.synth_eval_docs, seed=cfg.seed + 1, **base),
        "pretrain": SyntheticSpec(num_docs=cfg.synth_num_docs, seed=cfg.seed + 2, **base),
    }
    written = {}
    for name, spec in splits.items():
        records = pairs_to_records(generate_synthetic_corpus(spec))
        if name == "pretrain":
            records = [{"source": r["source"]} for r in records]
        path = out / f"{name}.jsonl"
        write_jsonl(path, records)
        written[name] = str(path)
    return {"files": written}


def cmd_oracle(cfg: TrainConfig, args) -> dict:
    records = load_records(cfg.train_data)
    labels = oracle_labels_for(records)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "oracle.jsonl"
    write_jsonl(path, ({"labels": lab} for lab in labels))
    return {"labels": str(path), "num_examples": len(labels)}


def _finish_training(state, cfg: TrainConfig) -> dict:
    out = Path(cfg.out_dir)
    ckpt = _checkpoint_path(cfg)
    save_state(state, ckpt)
    write_loss_csv(state.log, out / "loss.csv")
    last = state.log[-1] if state.log else {}
    return {"checkpoint": ckpt, "loss_csv": str(out / "loss.csv"), "step": state.step,
            "final": {k: v for k, v in last.items() if k != "step"}}


def cmd_pretrain(cfg: TrainConfig, args) -> dict:
    records = load_records(cfg.pretrain_data or cfg.train_data, require_target=False)
    if args.resume:
        state = resume(load_checkpoint(args.resume), records, reconstruction=True)
    else:
        state = pretrain(cfg, records)
    return _finish_training(state, cfg)


def cmd_train(cfg: TrainConfig, args) -> dict:
    records = load_records(cfg.train_data)
    labels = _read_labels(cfg.oracle_labels) if cfg.oracle_labels else None
    if args.resume:
        state = resume(load_checkpoint(args.resume), records, labels)
    else:
        init = load_checkpoint(cfg.init_checkpoint) if cfg.init_checkpoint else None
        state = train(cfg, records, labels, init)
    return _finish_training(state, cfg)


def cmd_evaluate(cfg: TrainConfig, args) -> dict:
    state = _state_for_eval(cfg, args)
    records = load_records(cfg.eval_data)
    variants = args.variants.split(",") if args.variants else None
    return evaluate(state, records, variants)


def cmd_sweep(cfg: TrainConfig, args) -> dict:
    labels = _read_labels(cfg.oracle_labels) if cfg.oracle_labels else None
    init = load_checkpoint(cfg.init_checkpoint) if cfg.init_checkpoint else None
    return sparsity_sweep(cfg, cfg.sweep_pis, load_records(cfg.train_data), load_records(cfg.eval_data), labels,
                          init)


def cmd_summarize(cfg: TrainConfig, args) -> dict:
    state = _state_for_eval(cfg, args)
    if args.text is not None:
        text = args.text
    elif args.input:
        text = Path(args.input).read_text(encoding="utf-8")
    else:
        text = sys.stdin.read()
    return summarize(state, text, args.pi)


HANDLERS = {
    "gen-data": cmd_gen_data, "oracle": cmd_oracle, "pretrain": cmd_pretrain, "train": cmd_train,
    "evaluate": cmd_evaluate, "sweep": cmd_sweep, "summarize": cmd_summarize,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ease", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat JSON config file")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config field")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("train", "pretrain"):
            p.add_argument("--resume", help="continue from a mid-training checkpoint")
        if name == "evaluate":
            p.add_argument("--variants", help="comma-separated subset of variants")
        if name == "summarize":
            p.add_argument("--text", help="document text (default: --input file or stdin)")
            p.add_argument("--input", help="file holding the document")
            p.add_argument("--pi", type=float, help="selection fraction at inference")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _config(args)
        report = HANDLERS[args.command](cfg, args)
    except (ValueError, OSError, CheckpointError, NonFiniteLossError) as exc:
        print(f"ease {args.command}: error: {exc}", file=sys.stderr)
        return 2
    _emit(report, Path(cfg.out_dir), args.command)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
