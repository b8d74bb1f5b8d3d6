"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure
(non-finite loss or a failed gradient check).

Settings resolve in three layers: preset defaults, then the flat JSON file
given with ``--config``, then explicit flags. Config keys are the fields of
the training and model configurations (``alpha``, ``lr``, ``batch_size``,
``epochs``, ``hidden``, ``hop_layers`` ...) plus ``seed``, ``preset`` and
``strict``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .checkpoint import CheckpointError
from .corpus import DataError, Sentence, SynthConfig, generate_synthetic, load_polarity_map, read_dataset, \
    save_corpus, to_public_json
from .gradcheck import NumericError
from .labeling import ESSENTIAL_LABELS, LabelCellSet, decode, encode
from .metrics import bucketize, evaluate
from .model import MAX_DECODED_TUPLES, ModelConfig, TokenGraphModel
from .training import TrainConfig, alpha_sweep, format_alpha_table, gradcheck, train

log = logging.getLogger("sentgraph")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}
_MODEL_KEYS = {f.name for f in dataclasses.fields(ModelConfig)}
_GLOBAL_KEYS = {"seed", "preset", "strict"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# settings
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class Settings:
    preset: str
    seed: int
    strict: bool
    train: TrainConfig
    model: ModelConfig


def load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(obj, dict):
        raise UsageError(f"config {path} must be a flat JSON object")
    unknown = set(obj) - _TRAIN_KEYS - _MODEL_KEYS - _GLOBAL_KEYS
    if unknown:
        raise UsageError(f"config {path}: unknown keys {sorted(unknown)}")
    return obj


def resolve_settings(args: argparse.Namespace, flag_overrides: dict | None = None) -> Settings:
    """Defaults < config file < flags."""
    file_cfg = load_config_file(args.config) if getattr(args, "config", None) else {}
    flags = {k: v for k, v in (flag_overrides or {}).items() if v is not None}
    preset = getattr(args, "preset", None) or file_cfg.get("preset") or "desk"
    try:
        train_cfg = TrainConfig.preset_defaults(preset)
        model_cfg = ModelConfig.preset(preset)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    merged = {**file_cfg, **flags}
    seed = args.seed if getattr(args, "seed", None) is not None else int(merged.get("seed", train_cfg.seed))
    strict = args.strict if getattr(args, "strict", None) is not None else bool(merged.get("strict", True))
    train_cfg = train_cfg.replace(**{k: v for k, v in merged.items() if k in _TRAIN_KEYS - {"seed", "preset"}},
                                  seed=seed, preset=preset)
    model_cfg = dataclasses.replace(model_cfg, **{k: v for k, v in merged.items() if k in _MODEL_KEYS})
    return Settings(preset, seed, strict, train_cfg, model_cfg)


# ---------------------------------------------------------------------------
# file helpers
# ---------------------------------------------------------------------------

def _write_json(path, obj) -> None:
    if path is None or str(path) == "-":
        json.dump(obj, sys.stdout, ensure_ascii=False, indent=1)
        sys.stdout.write("\n")
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=1)


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(str(path), f"malformed JSON: {exc}") from None


def _load_corpus(path, args, settings: Settings) -> list[Sentence]:
    polarity_map = load_polarity_map(args.polarity_map) if getattr(args, "polarity_map", None) else None
    result = read_dataset(path, strict=settings.strict, polarity_map=polarity_map)
    for err in result.errors:
        log.warning("skipped record: %s", err)
    if result.errors:
        print(f"skipped {result.skipped} malformed record(s) in {path}", file=sys.stderr)
    return result.sentences


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args, settings: Settings) -> int:
    cfg = SynthConfig(count=args.count, seed=settings.seed)
    for key in ("overlap_fraction", "long_span_fraction", "max_clauses"):
        value = getattr(args, key)
        if value is not None:
            setattr(cfg, key, value)
    sentences = generate_synthetic(cfg)
    if args.format == "public":
        _write_json(args.out, [to_public_json(s) for s in sentences])
    elif args.out in (None, "-"):
        _write_json(None, [s.to_json() for s in sentences])
    else:
        save_corpus(args.out, sentences)
    return EXIT_OK


def cmd_encode(args, settings: Settings) -> int:
    records = []
    for s in _load_corpus(args.data, args, settings):
        records.append({"sent_id": s.sent_id, "tokens": s.tokens, "cells": encode(s).to_json()})
    _write_json(args.out, records)
    return EXIT_OK


def cmd_decode(args, settings: Settings) -> int:
    records = _read_json(args.cells)
    if isinstance(records, dict):
        records = [records]
    out = []
    for k, rec in enumerate(records):
        sent_id = rec.get("sent_id", str(k)) if isinstance(rec, dict) else str(k)
        try:
            cells = LabelCellSet.from_json(rec["cells"] if "cells" in rec else rec)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(sent_id, f"bad cell set: {exc}") from None
        tokens = rec.get("tokens") or ["_"] * cells.n_tokens
        s = Sentence(str(sent_id), list(tokens), gold=decode(cells))
        out.append(s.to_json())
    _write_json(args.out, out)
    return EXIT_OK


def cmd_train(args, settings: Settings) -> int:
    sentences = _load_corpus(args.data, args, settings)
    dev = _load_corpus(args.dev, args, settings) if args.dev else None
    if not sentences:
        raise DataError(str(args.data), "no usable sentences")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = settings.train
    alphas = args.alpha if args.alpha else [cfg.alpha]
    if len(alphas) > 1:
        rows = alpha_sweep(sentences, alphas, cfg, settings.model, dev=dev, checkpoint_dir=out_dir)
        table = format_alpha_table(rows)
        print(table)
        _write_json(out_dir / "alpha_sweep.json", rows)
        return EXIT_OK
    cfg = cfg.replace(alpha=float(alphas[0]))
    checkpoint = Path(args.checkpoint) if args.checkpoint else out_dir / "model.npz"
    history = Path(args.history) if args.history else out_dir / "history.jsonl"
    result = train(sentences, cfg, settings.model, dev=dev, history_path=history, checkpoint_path=checkpoint)
    sf1 = "-" if result.best_dev_sf1 is None else f"{result.best_dev_sf1:.4f}"
    print(f"best dev SF1 {sf1} at epoch {result.best_epoch}; checkpoint {checkpoint}; history {history}")
    return EXIT_OK


def cmd_predict(args, settings: Settings) -> int:
    model, _ = TokenGraphModel.load(args.checkpoint)
    sentences = _load_corpus(args.data, args, settings)
    out, dumps = [], []
    for s in sentences:
        cells, fwd = model.predict_cells(s)
        pred = Sentence(s.sent_id, s.tokens, s.pos_tags, s.lemmas, gold=decode(cells, MAX_DECODED_TUPLES), text=s.text,
                        offsets=s.offsets)
        out.append(pred.to_json())
        if args.dump_scores:
            dumps.append({
                "sent_id": s.sent_id,
                "labels": [label.value for label in ESSENTIAL_LABELS],
                "scores": fwd.scores.data[:, 1:, 1:].tolist(),
                "thresholds": fwd.thresholds.data[1:, 1:].tolist(),
            })
    _write_json(args.out, out)
    if args.dump_scores:
        _write_json(args.dump_scores, dumps)
    return EXIT_OK


def cmd_evaluate(args, settings: Settings) -> int:
    gold = _load_corpus(args.gold, args, settings)
    pred = {s.sent_id: s.gold for s in _load_corpus(args.pred, args, settings)}
    known = {s.sent_id for s in gold}
    stray = sorted(set(pred) - known)
    if stray:
        raise DataError(stray[0], f"prediction for unknown sentence ({len(stray)} in total)")
    pred_lists = [pred.get(s.sent_id, []) for s in gold]
    gold_lists = [s.gold for s in gold]
    report = evaluate(pred_lists, gold_lists)
    if args.buckets:
        report.buckets = {by: bucketize(pred_lists, gold_lists, by) for by in ("expression_length", "tuple_extent")}
    print(report.table())
    if args.out:
        _write_json(args.out, report.to_json())
    return EXIT_OK


def cmd_gradcheck(args, settings: Settings) -> int:
    report = gradcheck(settings.model, alpha=settings.train.alpha, seed=settings.seed, epsilon=args.epsilon,
                       tolerance=args.tolerance)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # the same flags are accepted before and after the subcommand
    default = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", default=default, help="flat JSON config (see module docs for keys)")
    p.add_argument("--seed", type=int, metavar="N", default=default, help="random seed (default 0)")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="strict", action="store_true", default=default,
                      help="abort on the first malformed record (default)")
    mode.add_argument("--lenient", dest="strict", action="store_false", default=default,
                      help="skip malformed records and report how many were skipped")
    p.add_argument("--preset", choices=("desk", "fidelity"), default=default,
                   help="model/training size preset (default desk)")
    p.add_argument("--polarity-map", metavar="PATH", default=default,
                   help="JSON object mapping corpus polarity strings to Positive/Neutral/Negative")
    p.add_argument("-v", "--verbose", action="store_true", default=default, help="log progress to stderr")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sentgraph", description="Token-pair structured sentiment extraction.",
                     parents=[_global_flags(False)])
    common = _global_flags(True)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--count", type=int, default=32)
    p.add_argument("--overlap-fraction", type=float)
    p.add_argument("--long-span-fraction", type=float)
    p.add_argument("--max-clauses", type=int)
    p.add_argument("--format", choices=("canonical", "public"), default="canonical")
    p.add_argument("--out", "-o", default="-")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("encode", parents=[common], help="corpus -> essential label cells")
    p.add_argument("data")
    p.add_argument("--out", "-o", default="-")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", parents=[common], help="label cells -> tuples")
    p.add_argument("cells")
    p.add_argument("--out", "-o", default="-")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("train", parents=[common], help="train a model (several --alpha values run a sweep)")
    p.add_argument("data")
    p.add_argument("--dev", help="dev corpus (default: seeded split of the training data)")
    p.add_argument("--out-dir", default="run")
    p.add_argument("--checkpoint", help="checkpoint path (default OUT_DIR/model.npz)")
    p.add_argument("--history", help="history path (default OUT_DIR/history.jsonl)")
    p.add_argument("--alpha", type=float, nargs="+", help="loss mix weight(s)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--dev-fraction", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="predict tuples with a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("data")
    p.add_argument("--out", "-o", default="-")
    p.add_argument("--dump-scores", metavar="PATH", help="also write raw score and threshold matrices")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="score predictions against gold")
    p.add_argument("pred")
    p.add_argument("gold")
    p.add_argument("--out", "-o", help="write the report as JSON")
    p.add_argument("--buckets", action="store_true", help="add expression-length and tuple-extent buckets")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check on a 4-token sentence")
    p.add_argument("--alpha", type=float)
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--tolerance", type=float, default=1e-3)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def _flag_overrides(args) -> dict:
    keys = ("epochs", "lr", "batch_size", "eval_every", "dev_fraction")
    out = {k: getattr(args, k, None) for k in keys}
    if args.command == "gradcheck":
        out["alpha"] = args.alpha
    return out


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        settings = resolve_settings(args, _flag_overrides(args))
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, settings)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
