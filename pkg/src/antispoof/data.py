"""Manifest parsing and the batch pipeline.

Training batches are assembled by index with one RNG stream per
(step, slot), so worker scheduling can never change batch contents and
identical seeds give identical batches.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .config import AugmentConfig
from .errors import ParseError
from .features import (
    TARGET_FRAMES,
    add_colored_noise,
    crop_or_pad,
    lfcc,
    load_feature_cache,
    read_wav,
    save_feature_cache,
    spec_augment,
    speed_perturb,
)
from .rng import RngHub

LABELS = {"bonafide": 0, "spoof": 1}


@dataclass
class UttRecord:
    utt_id: str
    path: str
    label: int
    artifacts: str


def read_manifest(path) -> list[UttRecord]:
    """Parse utt_id<TAB>path<TAB>label<TAB>artifacts lines; relative wav
    paths are resolved against the manifest's own directory."""
    base = os.path.dirname(os.path.abspath(os.fspath(path)))
    records = []
    try:
        f = open(path)
    except FileNotFoundError:
        raise ParseError(f"no such manifest: {path}")
    with f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
            utt_id, wav_path, label, artifacts = parts
            if label not in LABELS:
                raise ParseError(f"{path}:{lineno}: label must be bonafide|spoof, got {label!r}")
            if not utt_id:
                raise ParseError(f"{path}:{lineno}: empty utt_id")
            if not os.path.isabs(wav_path):
                wav_path = os.path.join(base, wav_path)
            records.append(UttRecord(utt_id, wav_path, LABELS[label], artifacts))
    return records


def augment_wave(wave: np.ndarray, rng: np.random.Generator, aug: AugmentConfig) -> np.ndarray:
    """Speed perturbation first (it changes length), then additive noise."""
    if aug.speed_prob > 0 and rng.random() < aug.speed_prob:
        factor = float(rng.choice(aug.speed_factors))
        wave = speed_perturb(wave, factor)
    if aug.noise_prob > 0 and rng.random() < aug.noise_prob:
        color = str(rng.choice(aug.colors))
        snr = float(rng.uniform(aug.snr_range[0], aug.snr_range[1]))
        wave = add_colored_noise(wave, rng, snr, color)
    return wave


def train_features(wave: np.ndarray, rng: np.random.Generator, aug: AugmentConfig) -> np.ndarray:
    if aug.enabled:
        wave = augment_wave(wave, rng, aug)
    feats = crop_or_pad(lfcc(wave), TARGET_FRAMES, train=True, rng=rng)
    if aug.enabled and aug.spec_augment:
        feats = spec_augment(feats, rng, aug.max_masked_bins)
    return feats


def eval_features(wave: np.ndarray) -> np.ndarray:
    return crop_or_pad(lfcc(wave), TARGET_FRAMES, train=False)


class TrainLoader:
    """Endless deterministic batch stream over a manifest."""

    def __init__(self, records: list[UttRecord], batch_size: int, hub: RngHub, aug: AugmentConfig):
        self.records = records
        self.batch_size = batch_size
        self.hub = hub
        self.aug = aug
        self._epoch = -1
        self._cursor = 0
        self._order: np.ndarray | None = None
        self._waves: dict[int, np.ndarray] = {}

    def _advance_epoch(self):
        self._epoch += 1
        self._order = self.hub.stream("shuffle", self._epoch).permutation(len(self.records))
        self._cursor = 0

    def _wave(self, idx: int) -> np.ndarray:
        if idx not in self._waves:
            self._waves[idx] = read_wav(self.records[idx].path)
        return self._waves[idx]

    def next_batch(self, step: int) -> tuple[np.ndarray, np.ndarray]:
        feats = np.empty((self.batch_size, TARGET_FRAMES, 120), dtype=np.float32)
        labels = np.empty(self.batch_size, dtype=np.int64)
        for slot in range(self.batch_size):
            if self._order is None or self._cursor >= len(self.records):
                self._advance_epoch()
            idx = int(self._order[self._cursor])
            self._cursor += 1
            rng = self.hub.stream("augment", step, slot)
            feats[slot] = train_features(self._wave(idx), rng, self.aug)
            labels[slot] = self.records[idx].label
        return feats, labels


def eval_batches(records: list[UttRecord], batch_size: int, cache_dir: str = ""):
    """Yields (utt_ids, features, labels) deterministically, optionally
    memoizing per-utterance features on disk."""
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
    for lo in range(0, len(records), batch_size):
        chunk = records[lo : lo + batch_size]
        feats = np.empty((len(chunk), TARGET_FRAMES, 120), dtype=np.float32)
        for i, rec in enumerate(chunk):
            cache_path = os.path.join(cache_dir, rec.utt_id + ".lfcc") if cache_dir else None
            if cache_path and os.path.exists(cache_path):
                feats[i] = load_feature_cache(cache_path)
            else:
                feats[i] = eval_features(read_wav(rec.path))
                if cache_path:
                    save_feature_cache(cache_path, feats[i])
        labels = np.array([r.label for r in chunk], dtype=np.int64)
        yield [r.utt_id for r in chunk], feats, labels
