"""Checkpoint-free scoring and evaluation over manifests."""

from __future__ import annotations

from .data import UttRecord, eval_batches, read_manifest
from .metrics import ScoreRecord, eer
from .model import HmConformer
from .tensor import Tensor

_LABEL_NAMES = {0: "bonafide", 1: "spoof"}


def score_records(model: HmConformer, records: list[UttRecord], batch_size: int = 32, cache_dir: str = "") -> list[ScoreRecord]:
    was_training = model.training
    model.eval()
    out: list[ScoreRecord] = []
    for utt_ids, feats, labels in eval_batches(records, batch_size, cache_dir):
        scores = model.decision_scores(Tensor(feats))
        for uid, s, y in zip(utt_ids, scores, labels):
            out.append(ScoreRecord(uid, float(s), _LABEL_NAMES[int(y)]))
    if was_training:
        model.train()
    return out


def evaluate_records(model: HmConformer, records: list[UttRecord], batch_size: int = 32, cache_dir: str = "") -> tuple[float, float, list[ScoreRecord]]:
    scored = score_records(model, records, batch_size, cache_dir)
    rate, threshold = eer(scored)
    return rate, threshold, scored


def evaluate_manifest(model: HmConformer, manifest_path, batch_size: int = 32, cache_dir: str = "") -> tuple[float, float, list[ScoreRecord]]:
    return evaluate_records(model, read_manifest(manifest_path), batch_size, cache_dir)
