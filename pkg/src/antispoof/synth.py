"""Deterministic synthetic speech-like corpus.

Bona-fide utterances are a jittered, vibrato-modulated harmonic source
shaped by slowly drifting formant resonators under a wandering amplitude
envelope, plus breath noise.  Spoofed utterances reuse the same source
but exhibit telltale artifacts: a frozen spectral envelope (global
over-smoothing), exactly periodic excitation (buzz), or abrupt envelope
discontinuities (seams).  Everything derives from per-utterance seeds,
so corpora are bit-reproducible.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError
from .features import write_wav
from .rng import derive_seed

SR = 16000
CONTROL_HOP = 160  # envelope/formant update interval: 10 ms

ARTIFACTS = ("over_smooth", "buzz", "seam")


@dataclass
class SynthSpec:
    n_utts: int = 100
    duration_s: float = 4.0
    seed: int = 7
    spoof_artifacts: list[str] = field(default_factory=lambda: list(ARTIFACTS))

    def __post_init__(self):
        if self.n_utts % 2:
            raise ConfigError(f"n_utts must be even for balanced classes, got {self.n_utts}")
        if self.duration_s < 0.5:
            raise ConfigError(f"duration_s must be >= 0.5, got {self.duration_s}")
        for a in self.spoof_artifacts:
            if a not in ARTIFACTS:
                raise ConfigError(f"unknown artifact {a!r}; choose from {ARTIFACTS}")
        if not self.spoof_artifacts:
            raise ConfigError("spoof_artifacts must not be empty")


def _wandering(rng, n_frames: int, lo: float, hi: float) -> np.ndarray:
    """Smooth value track: sinusoid with random rate/phase plus a slow
    interpolated noise component, clipped to [lo, hi]."""
    center, span = (lo + hi) / 2.0, (hi - lo) / 2.0
    t = np.arange(n_frames) / 100.0
    rate = rng.uniform(0.3, 1.5)
    phase = rng.uniform(0, 2 * np.pi)
    track = center + 0.6 * span * np.sin(2 * np.pi * rate * t + phase)
    knots = max(int(n_frames / 50), 2)
    noise = np.interp(np.linspace(0, 1, n_frames), np.linspace(0, 1, knots), rng.normal(0, 0.25 * span, knots))
    return np.clip(track + noise, lo, hi)


def _stepped(rng, n_frames: int, lo: float, hi: float) -> np.ndarray:
    """Piecewise-constant track with abrupt jumps every 0.3-0.8 s."""
    edges = [0]
    while edges[-1] < n_frames:
        edges.append(edges[-1] + int(rng.uniform(0.3, 0.8) * 100))
    levels = rng.uniform(lo, hi, size=len(edges) - 1)
    track = np.empty(n_frames)
    for i in range(len(edges) - 1):
        track[edges[i] : min(edges[i + 1], n_frames)] = levels[i]
    return track


def _harmonic_source(rng, n: int, f0: float, jitter: bool, vibrato: bool) -> np.ndarray:
    t = np.arange(n) / SR
    f_inst = np.full(n, f0)
    if vibrato:
        f_inst = f_inst * (1.0 + 0.03 * np.sin(2 * np.pi * 5.5 * t))
    if jitter:
        knots = max(n // 400, 2)  # fresh deviation every 25 ms
        dev = np.interp(np.linspace(0, 1, n), np.linspace(0, 1, knots), rng.normal(0, 1, knots))
        f_inst = f_inst * (1.0 + 0.015 * dev)
    phase = 2 * np.pi * np.cumsum(f_inst) / SR
    k_max = max(int((SR / 2 - 400) / f_inst.max()), 1)
    k = np.arange(1, k_max + 1)
    return (np.sin(np.outer(phase, k)) @ (1.0 / k)).astype(np.float64)


def _formant_filter(x: np.ndarray, rng, frozen: bool) -> np.ndarray:
    n_frames = -(-x.size // CONTROL_HOP)
    bands = [(350, 850), (950, 2100), (2300, 3400)]
    out = x
    for lo, hi in bands:
        center = rng.uniform(lo, hi)
        bw = rng.uniform(80, 180)
        if frozen:
            freqs = np.full(n_frames, center)
        else:
            freqs = _wandering(rng, n_frames, max(lo, center * 0.8), min(hi, center * 1.2))
        r = np.exp(-np.pi * bw / SR)
        y = np.empty_like(out)
        zi = np.zeros(2)
        for i in range(n_frames):
            theta = 2 * np.pi * freqs[i] / SR
            a = np.array([1.0, -2 * r * np.cos(theta), r * r])
            b = np.array([1.0 - r])
            sl = slice(i * CONTROL_HOP, min((i + 1) * CONTROL_HOP, out.size))
            y[sl], zi = lfilter(b, a, out[sl], zi=zi)
        out = y
    return out


def _render(rng, n: int, *, jitter: bool, vibrato: bool, frozen_formants: bool, envelope: str, breath: float) -> np.ndarray:
    f0 = rng.uniform(100.0, 300.0)
    source = _harmonic_source(rng, n, f0, jitter, vibrato)
    n_frames = -(-n // CONTROL_HOP)
    if envelope == "flat":
        env_track = np.full(n_frames, 0.7)
    elif envelope == "stepped":
        env_track = _stepped(rng, n_frames, 0.25, 1.0)
    else:
        env_track = _wandering(rng, n_frames, 0.2, 1.0)
    if envelope == "wander":  # linear interpolation keeps bona-fide seam-free
        env = np.interp(np.arange(n), np.arange(n_frames) * CONTROL_HOP, env_track)
    else:
        env = np.repeat(env_track, CONTROL_HOP)[:n]
    voiced = _formant_filter(source * env, rng, frozen_formants)
    signal = voiced + breath * env * rng.standard_normal(n)
    peak = np.max(np.abs(signal))
    return (0.95 * signal / peak).astype(np.float32) if peak > 0 else signal.astype(np.float32)


def gen_bonafide(seed: int, duration_s: float = 4.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return _render(
        rng,
        int(duration_s * SR),
        jitter=True,
        vibrato=True,
        frozen_formants=False,
        envelope="wander",
        breath=0.02,
    )


def gen_spoof(seed: int, artifacts: list[str], duration_s: float = 4.0) -> np.ndarray:
    if not artifacts:
        raise ConfigError("spoof generation needs at least one artifact")
    for a in artifacts:
        if a not in ARTIFACTS:
            raise ConfigError(f"unknown artifact {a!r}; choose from {ARTIFACTS}")
    rng = np.random.default_rng(seed)
    buzz = "buzz" in artifacts
    smooth = "over_smooth" in artifacts
    return _render(
        rng,
        int(duration_s * SR),
        jitter=not buzz,
        vibrato=not buzz,
        frozen_formants=smooth,
        envelope="flat" if smooth else ("stepped" if "seam" in artifacts else "wander"),
        breath=0.002 if buzz else 0.02,
    )


def build_corpus(spec: SynthSpec, out_dir) -> dict[str, str]:
    """Write WAVs and train/dev/eval manifests; returns manifest paths.

    Manifest lines are utt_id<TAB>path<TAB>label<TAB>artifacts with "-"
    for bona-fide artifacts; paths are relative to the manifest location.
    """
    out_dir = os.fspath(out_dir)
    wav_dir = os.path.join(out_dir, "wavs")
    os.makedirs(wav_dir, exist_ok=True)
    half = spec.n_utts // 2
    split_rng = np.random.default_rng(derive_seed(spec.seed, "splits"))

    rows = []
    for i in range(spec.n_utts):
        utt_seed = derive_seed(spec.seed, "utt", i)
        if i < half:
            utt_id = f"bona_{i:05d}"
            wave = gen_bonafide(utt_seed, spec.duration_s)
            label, artifacts = "bonafide", "-"
        else:
            utt_id = f"spoof_{i - half:05d}"
            pick_rng = np.random.default_rng(derive_seed(spec.seed, "artifacts", i))
            n_pick = int(pick_rng.integers(1, len(spec.spoof_artifacts) + 1))
            chosen = sorted(pick_rng.choice(spec.spoof_artifacts, size=n_pick, replace=False).tolist())
            wave = gen_spoof(utt_seed, chosen, spec.duration_s)
            label, artifacts = "spoof", ",".join(chosen)
        rel = os.path.join("wavs", f"{utt_id}.wav")
        write_wav(os.path.join(out_dir, rel), wave)
        rows.append((utt_id, rel, label, artifacts))

    order = split_rng.permutation(spec.n_utts)
    n_train = int(round(0.70 * spec.n_utts))
    n_dev = int(round(0.15 * spec.n_utts))
    splits = {
        "train": order[:n_train],
        "dev": order[n_train : n_train + n_dev],
        "eval": order[n_train + n_dev :],
    }
    paths = {}
    for name, idx in splits.items():
        path = os.path.join(out_dir, f"{name}.tsv")
        with open(path, "w") as f:
            for j in sorted(idx):
                f.write("\t".join(rows[j]) + "\n")
        paths[name] = path
    return paths
