"""Waveform ingest, LFCC extraction, and training-time augmentations.

All functions are pure: randomness comes in through an explicit
``np.random.Generator`` so per-worker pipelines stay reproducible.
Feature matrices are (frames, 120) float32: 40 static cepstra followed
by 40 deltas and 40 delta-deltas.
"""

from __future__ import annotations

import struct

import numpy as np
from scipy.io import wavfile

from .errors import IngestError

SAMPLE_RATE = 16000
WIN_LENGTH = 320  # 20 ms
HOP_LENGTH = 160  # 10 ms
N_FFT = 512
N_FILTERS = 40
N_COEFFS = 120
TARGET_FRAMES = 400
LOG_FLOOR = 1e-10
DELTA_WINDOW = 2

_CACHE_MAGIC = b"LFCC0001"


# ---- WAV ingest ----------------------------------------------------------------


def read_wav(path) -> np.ndarray:
    """Load a PCM-16 mono 16 kHz WAV as float32 in [-1, 1]."""
    try:
        rate, samples = wavfile.read(path)
    except FileNotFoundError:
        raise IngestError(f"no such file: {path}")
    except ValueError as e:
        raise IngestError(f"unreadable wav {path}: {e}")
    if rate != SAMPLE_RATE:
        raise IngestError(f"sample_rate must be {SAMPLE_RATE}, got {rate} in {path}")
    if samples.ndim != 1:
        raise IngestError(f"channels must be mono, got {samples.ndim}-channel audio in {path}")
    if samples.dtype != np.int16:
        raise IngestError(f"codec must be 16-bit PCM, got {samples.dtype} in {path}")
    if samples.size == 0:
        raise IngestError(f"empty waveform in {path}")
    return samples.astype(np.float32) / 32768.0


def write_wav(path, wave: np.ndarray):
    """Store float samples as PCM-16 mono at 16 kHz, clipping to full scale."""
    pcm = np.clip(np.round(np.asarray(wave) * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, SAMPLE_RATE, pcm)


# ---- LFCC ----------------------------------------------------------------------


def linear_filterbank(n_filters: int = N_FILTERS, n_fft: int = N_FFT, sr: int = SAMPLE_RATE) -> np.ndarray:
    """Triangular filters with linearly spaced edges on [0, sr/2].

    Returns (n_filters, n_fft//2 + 1); each row rises from edge i to
    edge i+1 and falls to edge i+2, peak amplitude 1.
    """
    edges = np.linspace(0.0, sr / 2.0, n_filters + 2)
    bin_freqs = np.arange(n_fft // 2 + 1) * (sr / n_fft)
    bank = np.zeros((n_filters, bin_freqs.size), dtype=np.float64)
    for i in range(n_filters):
        lo, mid, hi = edges[i], edges[i + 1], edges[i + 2]
        rising = (bin_freqs - lo) / (mid - lo)
        falling = (hi - bin_freqs) / (hi - mid)
        bank[i] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank.astype(np.float32)


def dct_matrix(n: int = N_FILTERS) -> np.ndarray:
    """Orthonormal DCT-II basis, (n, n); row k dotted with a log-energy
    vector gives cepstral coefficient k."""
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    basis = np.cos(np.pi * k * (2 * m + 1) / (2 * n)) * np.sqrt(2.0 / n)
    basis[0] *= np.sqrt(0.5)
    return basis.astype(np.float32)


def delta(x: np.ndarray, window: int = DELTA_WINDOW) -> np.ndarray:
    """Regression delta over +-window frames with replicated edges."""
    pad = np.pad(x, ((window, window), (0, 0)), mode="edge")
    num = np.zeros_like(x, dtype=np.float64)
    for n in range(1, window + 1):
        num += n * (pad[window + n : pad.shape[0] - window + n] - pad[window - n : -window - n])
    denom = 2.0 * sum(n * n for n in range(1, window + 1))
    return (num / denom).astype(np.float32)


def lfcc(
    wave: np.ndarray,
    log_floor: float = LOG_FLOOR,
    delta_window: int = DELTA_WINDOW,
) -> np.ndarray:
    """120-dim LFCC matrix: 20 ms Hamming frames, 10 ms hop, 512-pt FFT,
    40 linear triangular filters, log, orthonormal DCT-II, plus deltas."""
    wave = np.asarray(wave, dtype=np.float32)
    if wave.ndim != 1 or wave.size < WIN_LENGTH:
        raise IngestError(f"waveform must be mono with >= {WIN_LENGTH} samples, got shape {wave.shape}")
    frames = np.lib.stride_tricks.sliding_window_view(wave, WIN_LENGTH)[::HOP_LENGTH]
    windowed = frames * np.hamming(WIN_LENGTH).astype(np.float32)
    spectrum = np.fft.rfft(windowed, n=N_FFT, axis=1)
    power = (spectrum.real**2 + spectrum.imag**2).astype(np.float32)
    energies = power @ linear_filterbank().T
    static = np.log(np.maximum(energies, log_floor)) @ dct_matrix().T
    d1 = delta(static, delta_window)
    d2 = delta(d1, delta_window)
    return np.concatenate([static, d1, d2], axis=1).astype(np.float32)


def crop_or_pad(
    feats: np.ndarray,
    target: int = TARGET_FRAMES,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Force exactly ``target`` frames: random contiguous crop when
    training, center crop otherwise, cyclic repetition when short."""
    t = feats.shape[0]
    if t == target:
        return feats
    if t > target:
        if train:
            start = int(rng.integers(0, t - target + 1))
        else:
            start = (t - target) // 2
        return feats[start : start + target]
    reps = -(-target // t)
    return np.tile(feats, (reps, 1))[:target]


# ---- augmentations ---------------------------------------------------------------


def spec_augment(feats: np.ndarray, rng: np.random.Generator, max_masked_bins: int = 20) -> np.ndarray:
    """Zero 0..max_masked_bins random static bins plus their delta and
    delta-delta columns.  The draw is clamped to half the bin count."""
    n_bins = feats.shape[1] // 3
    m = int(rng.integers(0, min(max_masked_bins, n_bins // 2) + 1))
    if m == 0:
        return feats
    out = feats.copy()
    bins = rng.choice(n_bins, size=m, replace=False)
    for offset in (0, n_bins, 2 * n_bins):
        out[:, bins + offset] = 0.0
    return out


def add_colored_noise(wave: np.ndarray, rng: np.random.Generator, snr_db: float, color: str = "white") -> np.ndarray:
    """Mix in spectrally shaped noise at an exact signal-to-noise ratio.

    Power slopes: white flat, pink -3 dB/octave, brown -6 dB/octave.
    Silent input is returned unchanged (SNR undefined).
    """
    wave = np.asarray(wave, dtype=np.float32)
    sig_power = float(np.mean(wave.astype(np.float64) ** 2))
    if sig_power == 0.0:
        return wave
    noise = rng.standard_normal(wave.size)
    if color != "white":
        spec = np.fft.rfft(noise)
        freqs = np.fft.rfftfreq(wave.size, d=1.0 / SAMPLE_RATE)
        shape = np.zeros_like(freqs)
        nonzero = freqs > 0
        shape[nonzero] = 1.0 / np.sqrt(freqs[nonzero]) if color == "pink" else 1.0 / freqs[nonzero]
        noise = np.fft.irfft(spec * shape, n=wave.size)
    noise_power = float(np.mean(noise**2))
    scale = np.sqrt(sig_power / (noise_power * 10.0 ** (snr_db / 10.0)))
    return (wave + scale * noise).astype(np.float32)


def speed_perturb(wave: np.ndarray, factor: float) -> np.ndarray:
    """Resample by linear interpolation; factor 1.1 shortens, 0.9 stretches."""
    wave = np.asarray(wave, dtype=np.float32)
    out_len = int(round(wave.size / factor))
    positions = np.arange(out_len) * factor
    return np.interp(positions, np.arange(wave.size), wave).astype(np.float32)


# ---- feature cache -----------------------------------------------------------------


def save_feature_cache(path, feats: np.ndarray):
    feats = np.ascontiguousarray(feats, dtype="<f4")
    with open(path, "wb") as f:
        f.write(_CACHE_MAGIC)
        f.write(struct.pack("<II", feats.shape[0], feats.shape[1]))
        f.write(feats.tobytes())


def load_feature_cache(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != _CACHE_MAGIC:
        raise IngestError(f"bad feature-cache magic in {path}")
    n_frames, dim = struct.unpack_from("<II", blob, 8)
    payload = np.frombuffer(blob, dtype="<f4", offset=16)
    if payload.size != n_frames * dim:
        raise IngestError(f"feature cache {path} truncated: want {n_frames}x{dim}, have {payload.size} values")
    return payload.reshape(n_frames, dim).copy()
