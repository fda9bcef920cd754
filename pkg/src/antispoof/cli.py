"""Command-line entry points: gen, train, eval, score.

Exit codes: 0 success, 2 missing file or unreadable input, 3 config
typo/parse failure, 4 checkpoint format-version mismatch, 1 anything
else that raised a domain error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .checkpoint import load_checkpoint
from .config import config_from_yaml, load_config
from .data import read_manifest
from .errors import (
    AntispoofError,
    CheckpointError,
    CheckpointVersionError,
    ConfigError,
    IngestError,
    ParseError,
)
from .evaluate import evaluate_records, score_records
from .features import read_wav
from .metrics import write_report, write_scores
from .model import HmConformer
from .synth import SynthSpec, build_corpus
from .train import Trainer


def load_model(ckpt_path) -> HmConformer:
    snapshot, state = load_checkpoint(ckpt_path)
    cfg = config_from_yaml(snapshot)
    model = HmConformer(cfg, np.random.default_rng(0))
    model.load_state_dict(state)
    model.eval()
    return model


def cmd_gen(args) -> int:
    artifacts = [a for a in args.artifacts.split(",") if a]
    spec = SynthSpec(n_utts=args.n, duration_s=args.duration, seed=args.seed, spoof_artifacts=artifacts)
    paths = build_corpus(spec, args.out)
    for name, path in paths.items():
        print(f"{name}\t{path}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set or [])
    if args.run_dir:
        cfg.io.run_dir = args.run_dir
    trainer = Trainer(cfg)
    history = trainer.run()
    if history["best_dev_eer"] is not None:
        print(f"best dev EER: {100.0 * history['best_dev_eer']:.2f}%")
    print(f"run dir: {trainer.run_dir}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.ckpt)
    records = read_manifest(args.manifest)
    rate, threshold, scored = evaluate_records(model, records, args.batch_size, args.cache_dir)
    print(f"EER: {100.0 * rate:.2f}%")
    print(f"threshold: {threshold:.6f}")
    if args.scores:
        write_scores(args.scores, scored)
    if args.report:
        write_report(args.report, {"eer": rate, "threshold": threshold, "n_utts": float(len(scored))})
    return 0


def cmd_score(args) -> int:
    model = load_model(args.ckpt)
    if args.wav:
        from .data import UttRecord

        utt_id = os.path.splitext(os.path.basename(args.wav))[0]
        read_wav(args.wav)  # fail fast with an ingest error before scoring
        records = [UttRecord(utt_id, args.wav, 0, "-")]
    else:
        records = read_manifest(args.manifest)
    for rec in score_records(model, records, args.batch_size):
        print(f"{rec.utt_id} {rec.score:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="antispoof", description="Audio anti-spoofing detector")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic corpus")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--n", type=int, default=100, help="number of utterances (even)")
    gen.add_argument("--duration", type=float, default=4.0)
    gen.add_argument("--seed", type=int, default=7)
    gen.add_argument("--artifacts", default="over_smooth,buzz,seam", help="comma-separated spoof artifacts")
    gen.set_defaults(func=cmd_gen)

    train = sub.add_parser("train", help="train a model")
    train.add_argument("--config", default=None, help="YAML config; defaults apply when omitted")
    train.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value")
    train.add_argument("--run-dir", default=None)
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="compute EER of a checkpoint over a manifest")
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--scores", default=None, help="write per-utterance scores here")
    ev.add_argument("--report", default=None, help="write key=value metrics here")
    ev.add_argument("--batch-size", type=int, default=32)
    ev.add_argument("--cache-dir", default="")
    ev.set_defaults(func=cmd_eval)

    sc = sub.add_parser("score", help="print scores for a wav or manifest")
    sc.add_argument("--ckpt", required=True)
    group = sc.add_mutually_exclusive_group(required=True)
    group.add_argument("--wav", default=None)
    group.add_argument("--manifest", default=None)
    sc.add_argument("--batch-size", type=int, default=32)
    sc.set_defaults(func=cmd_score)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CheckpointVersionError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except (ConfigError, ParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (IngestError, CheckpointError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except AntispoofError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
