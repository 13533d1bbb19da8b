"""Trial-set file format, synthetic MI-like data, and split protocols."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod

MAGIC = b"EEGB"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIIf")


class FormatError(ValueError):
    """Raised on malformed EEGB files; message carries the byte offset."""


@dataclass
class TrialSet:
    """One subject's trials: (B, C, T) float64 plus labels and record order."""
    subject_id: int
    sample_rate: float
    trials: np.ndarray
    labels: np.ndarray
    chronological_index: np.ndarray

    def __post_init__(self):
        self.trials = np.ascontiguousarray(self.trials, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int32)
        self.chronological_index = np.asarray(self.chronological_index,
                                              dtype=np.uint32)
        B = self.trials.shape[0]
        if self.trials.ndim != 3:
            raise ValueError(f"trials must be (B, C, T), got {self.trials.shape}")
        if self.labels.shape != (B,) or self.chronological_index.shape != (B,):
            raise ValueError("labels/chronological_index length mismatch")
        if B and sorted(self.chronological_index.tolist()) != list(range(B)):
            raise ValueError("chronological_index is not a permutation of 0..B-1")

    @property
    def n_trials(self):
        return self.trials.shape[0]

    @property
    def n_channels(self):
        return self.trials.shape[1]

    @property
    def n_samples(self):
        return self.trials.shape[2]


def write_trialset(path, ts: TrialSet):
    B, C, T = ts.trials.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, ts.subject_id, B, C, T,
                             ts.sample_rate))
        f.write(ts.labels.astype("<i4").tobytes())
        f.write(ts.chronological_index.astype("<u4").tobytes())
        f.write(ts.trials.astype("<f8").tobytes())


def read_trialset(path) -> TrialSet:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise FormatError(
            f"truncated header: need {_HEADER.size} bytes, got {len(raw)} "
            f"(offset 0)")
    magic, version, subject_id, B, C, T, rate = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    expected = _HEADER.size + B * 4 + B * 4 + B * C * T * 8
    if len(raw) != expected:
        raise FormatError(
            f"length mismatch: expected {expected} bytes for B={B}, C={C}, "
            f"T={T}, got {len(raw)} (payload starts at offset {_HEADER.size})")
    off = _HEADER.size
    labels = np.frombuffer(raw, "<i4", B, off)
    off += 4 * B
    chrono = np.frombuffer(raw, "<u4", B, off)
    off += 4 * B
    data = np.frombuffer(raw, "<f8", B * C * T, off)
    if B and (labels.min() < 0):
        raise FormatError(f"negative label at offset {_HEADER.size}")
    if B and sorted(chrono.tolist()) != list(range(B)):
        raise FormatError(
            f"chronological_index is not a permutation (offset {_HEADER.size + 4 * B})")
    if not np.all(np.isfinite(data)):
        raise FormatError(
            f"non-finite sample in data block (offset {_HEADER.size + 8 * B})")
    return TrialSet(subject_id, rate, data.reshape(B, C, T).copy(),
                    labels.copy(), chrono.copy())


# -- synthetic generator --------------------------------------------------------


@dataclass
class SynthSpec:
    """Generator knobs; attenuation=1.0 disables the class signal entirely."""
    n_subjects: int = 4
    trials_per_subject: int = 100
    channels: int = 8
    time_samples: int = 512
    sample_rate: float = 256.0
    attenuation: float = 0.5
    noise_exponent: float = 1.0
    osc_freq: float = 10.0
    osc_amp: float = 1.5
    slow_amp: float = 1.5
    gain_jitter: float = 0.2
    mixing_jitter: float = 0.05

    @property
    def informative_channels(self) -> tuple[int, int]:
        return self.channels // 4, (3 * self.channels) // 4


def _pink_noise(rng, shape, T, exponent):
    """1/f^exponent-power noise along the last axis via shaped rFFT."""
    freqs = np.fft.rfftfreq(T, d=1.0)
    amp = np.zeros_like(freqs)
    amp[1:] = freqs[1:] ** (-exponent / 2.0)
    spec = (rng.standard_normal(shape[:-1] + (len(freqs),))
            + 1j * rng.standard_normal(shape[:-1] + (len(freqs),)))
    x = np.fft.irfft(spec * amp, n=T, axis=-1)
    return x / x.std()


def generate_synthetic(spec: SynthSpec, seed: int = 0):
    """Two-class motor-imagery surrogate.

    Background pink noise on all channels plus an oscillation at
    `osc_freq` on the two informative channels; each class attenuates the
    oscillation amplitude on its designated channel (an
    event-related-desynchronization stand-in). Desynchronization is
    accompanied by a lateralized slow potential on the same channel, scaled
    by the desynchronization depth (``slow_amp * (1 - attenuation)``), so it
    vanishes exactly when ``attenuation=1.0``. Per-subject gain and mixing
    jitter create inter-subject shift.

    Returns (list of TrialSet, meta dict with the informative channels).
    """
    if spec.channels < 4:
        raise ValueError(f"need at least 4 channels, got {spec.channels}")
    if spec.time_samples < 64:
        raise ValueError(f"need at least 64 samples, got {spec.time_samples}")
    C, T, B = spec.channels, spec.time_samples, spec.trials_per_subject
    c_left, c_right = spec.informative_channels
    t = np.arange(T) / spec.sample_rate
    sets = []
    for s in range(spec.n_subjects):
        rng = rngmod.make_rng(seed, rngmod.SYNTH, s)
        labels = np.zeros(B, dtype=np.int32)
        labels[B // 2:] = 1
        rng.shuffle(labels)
        x = _pink_noise(rng, (B, C, T), T, spec.noise_exponent)
        phase = rng.uniform(0, 2 * np.pi, size=(B, 2))
        osc = np.sin(2 * np.pi * spec.osc_freq * t[None, :]
                     + phase[:, :1]), np.sin(
                         2 * np.pi * spec.osc_freq * t[None, :] + phase[:, 1:])
        amp_left = np.where(labels == 0, spec.attenuation, 1.0) * spec.osc_amp
        amp_right = np.where(labels == 1, spec.attenuation, 1.0) * spec.osc_amp
        x[:, c_left, :] += amp_left[:, None] * osc[0]
        x[:, c_right, :] += amp_right[:, None] * osc[1]
        # Lateralized slow potential accompanying the desynchronization:
        # depth = 1 - (trial amplitude / baseline amplitude), zero when
        # attenuation == 1.0 so the null condition stays class-free.
        envelope = np.hanning(T)
        depth_left = 1.0 - amp_left / spec.osc_amp
        depth_right = 1.0 - amp_right / spec.osc_amp
        x[:, c_left, :] += spec.slow_amp * depth_left[:, None] * envelope
        x[:, c_right, :] += spec.slow_amp * depth_right[:, None] * envelope
        gain = 1.0 + rng.uniform(-spec.gain_jitter, spec.gain_jitter)
        mix = np.eye(C) + spec.mixing_jitter * rng.standard_normal((C, C))
        x = gain * np.einsum("ij,bjt->bit", mix, x)
        sets.append(TrialSet(subject_id=s, sample_rate=spec.sample_rate,
                             trials=x, labels=labels,
                             chronological_index=np.arange(B)))
    meta = {"informative_channels": [c_left, c_right],
            "attenuation": spec.attenuation, "seed": seed}
    return sets, meta


# -- split protocols ------------------------------------------------------------


@dataclass
class SplitPlan:
    """Per-fold (train, test) index arrays; LOSO indices are global."""
    protocol: str
    folds: list = field(default_factory=list)


def split_co(ts: TrialSet, train_frac: float = 0.8) -> SplitPlan:
    """Chronological split: first floor(train_frac * B) trials train."""
    B = ts.n_trials
    if B < 5:
        raise ValueError(f"chronological split needs >= 5 trials, got {B}")
    order = np.argsort(ts.chronological_index, kind="stable")
    cut = int(np.floor(train_frac * B))
    return SplitPlan("CO", [(order[:cut], order[cut:])])


def split_cv(ts: TrialSet, k: int = 5) -> SplitPlan:
    """Per-class chronological blocks; fold i joins block i of every class."""
    labels = ts.labels
    order = np.argsort(ts.chronological_index, kind="stable")
    blocks = [[] for _ in range(k)]
    for cls in np.unique(labels):
        idx = order[labels[order] == cls]
        if len(idx) < k:
            raise ValueError(
                f"class {cls} has {len(idx)} trials, cannot balance {k} folds")
        for i, chunk in enumerate(np.array_split(idx, k)):
            blocks[i].append(chunk)
    folds = []
    all_idx = np.arange(ts.n_trials)
    for i in range(k):
        test = np.concatenate(blocks[i])
        mask = np.ones(ts.n_trials, dtype=bool)
        mask[test] = False
        folds.append((all_idx[mask], np.sort(test)))
    return SplitPlan("CV", folds)


def split_loso(sets: list[TrialSet], test_subject: int) -> SplitPlan:
    """Hold one subject out; indices are global over the concatenated sets."""
    if len(sets) < 2:
        raise ValueError("leave-one-subject-out needs >= 2 subjects")
    ids = [ts.subject_id for ts in sets]
    if test_subject not in ids:
        raise KeyError(f"unknown subject id {test_subject}; have {ids}")
    offsets = np.cumsum([0] + [ts.n_trials for ts in sets])
    train, test = [], []
    for ts, lo in zip(sets, offsets[:-1]):
        idx = np.arange(lo, lo + ts.n_trials)
        (test if ts.subject_id == test_subject else train).append(idx)
    return SplitPlan("LOSO", [(np.concatenate(train), np.concatenate(test))])
