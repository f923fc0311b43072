"""MFCC front end: WAV ingestion, framing and cepstral analysis."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from math import gcd
from pathlib import Path

import numpy as np
from scipy.fft import dct, rfft
from scipy.io import wavfile
from scipy.signal import resample_poly

TARGET_RATE = 16000


class TooShortError(ValueError):
    """Raised when a clip cannot hold a single analysis frame."""


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("AudioClip expects mono samples, got shape %s" % (self.samples.shape,))
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def duration(self) -> float:
        return len(self.samples) / float(self.sample_rate)


@dataclass
class MfccMatrix:
    vectors: np.ndarray
    frame_hop_seconds: float
    frame_length_seconds: float
    clip_id: str = ""

    @property
    def n_frames(self) -> int:
        return self.vectors.shape[0]

    def frame_centers(self) -> np.ndarray:
        """Center time (seconds) of every frame."""
        k = np.arange(self.n_frames)
        return k * self.frame_hop_seconds + 0.5 * self.frame_length_seconds


@dataclass(frozen=True)
class MfccConfig:
    sample_rate: int = TARGET_RATE
    frame_length: float = 0.020
    hop: float = 0.010
    n_fft: int = 512
    n_mels: int = 40
    n_coeffs: int = 21
    pre_emphasis: float = 0.97
    fmin: float = 0.0
    fmax: float | None = None
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.n_coeffs > self.n_mels:
            raise ValueError("n_coeffs (%d) must not exceed n_mels (%d)" % (self.n_coeffs, self.n_mels))
        if self.frame_length <= 0 or not 0 < self.hop <= self.frame_length:
            raise ValueError("need frame_length > 0 and 0 < hop <= frame_length")
        if round(self.frame_length * self.sample_rate) > self.n_fft:
            raise ValueError("n_fft is smaller than the frame length in samples")


def load_mfcc_config(path) -> MfccConfig:
    """Read a ``key = value`` file into an :class:`MfccConfig`.

    A section header is optional. Unknown keys raise ``KeyError``.
    """
    text = Path(path).read_text()
    parser = configparser.ConfigParser()
    if not text.lstrip().startswith("["):
        text = "[mfcc]\n" + text
    parser.read_string(text)
    section = parser[parser.sections()[0]]
    types = {f.name: f.type for f in fields(MfccConfig)}
    kwargs = {}
    for key, raw in section.items():
        if key not in types:
            raise KeyError("unknown MFCC config key %r" % key)
        if key == "fmax" and raw.strip().lower() in ("", "none"):
            kwargs[key] = None
        elif key in ("sample_rate", "n_fft", "n_mels", "n_coeffs"):
            kwargs[key] = int(raw)
        else:
            kwargs[key] = float(raw)
    return replace(MfccConfig(), **kwargs)


def read_wav(path, clip_id: str | None = None, target_rate: int = TARGET_RATE) -> AudioClip:
    """Load a mono PCM WAV (16-bit int or 32-bit float) resampled to ``target_rate``."""
    rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise ValueError("%s: expected single-channel audio, got %d channels" % (path, data.shape[1]))
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        samples = data.astype(np.float64)
    else:
        raise ValueError("%s: unsupported sample format %s" % (path, data.dtype))
    if clip_id is None:
        clip_id = Path(path).stem
    return resample(AudioClip(samples, int(rate), clip_id), target_rate)


def write_wav(path, clip: AudioClip) -> None:
    """Write ``clip`` as 16-bit PCM. Samples are clipped to [-1, 1]."""
    pcm = np.round(np.clip(clip.samples, -1.0, 1.0 - 1.0 / 32768) * 32768.0).astype(np.int16)
    wavfile.write(str(path), int(clip.sample_rate), pcm)


def resample(clip: AudioClip, rate: int = TARGET_RATE) -> AudioClip:
    if clip.sample_rate == rate:
        return clip
    g = gcd(int(rate), int(clip.sample_rate))
    out = resample_poly(clip.samples, rate // g, clip.sample_rate // g)
    return AudioClip(out, rate, clip.id)


def frame_signal(clip: AudioClip, frame_len: float, hop: float) -> np.ndarray:
    """Slice ``clip`` into overlapping windows.

    Returns an array of shape ``(floor((N - L) / H) + 1, L)`` where
    ``L = round(frame_len * rate)`` and ``H = round(hop * rate)``.
    Row ``k`` holds samples ``[k*H, k*H + L)``.
    """
    if frame_len <= 0 or not 0 < hop <= frame_len:
        raise ValueError("need frame_len > 0 and 0 < hop <= frame_len")
    L = int(round(frame_len * clip.sample_rate))
    H = int(round(hop * clip.sample_rate))
    N = len(clip.samples)
    if L < 1 or H < 1:
        raise ValueError("frame or hop shorter than one sample")
    if N < L:
        raise TooShortError(
            "clip %r too short: %d samples, need at least %d for one frame" % (clip.id, N, L))
    n_frames = (N - L) // H + 1
    idx = np.arange(L)[None, :] + H * np.arange(n_frames)[:, None]
    return clip.samples[idx]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int, fmin: float = 0.0,
                   fmax: float | None = None) -> np.ndarray:
    """Triangular HTK-style filters, shape ``(n_mels, n_fft // 2 + 1)``."""
    if fmax is None:
        fmax = sample_rate / 2.0
    bin_freqs = np.linspace(0.0, sample_rate / 2.0, n_fft // 2 + 1)
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_freqs[None, :] - lower) / (center - lower)
    falling = (upper - bin_freqs[None, :]) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


_FILTERBANKS: dict = {}


def _filterbank(cfg: MfccConfig) -> np.ndarray:
    key = (cfg.sample_rate, cfg.n_fft, cfg.n_mels, cfg.fmin, cfg.fmax)
    if key not in _FILTERBANKS:
        _FILTERBANKS[key] = mel_filterbank(*key)
    return _FILTERBANKS[key]


def mfcc(clip: AudioClip, config: MfccConfig | None = None) -> MfccMatrix:
    """Compute the MFCC matrix of ``clip`` (one row per frame, c0 included)."""
    cfg = config or MfccConfig()
    if clip.sample_rate != cfg.sample_rate:
        clip = resample(clip, cfg.sample_rate)
    x = clip.samples
    if cfg.pre_emphasis:
        x = np.concatenate([x[:1], x[1:] - cfg.pre_emphasis * x[:-1]])
    frames = frame_signal(AudioClip(x, clip.sample_rate, clip.id), cfg.frame_length, cfg.hop)
    frames = frames * np.hanning(frames.shape[1] + 2)[1:-1]
    power = np.abs(rfft(frames, n=cfg.n_fft, axis=1)) ** 2 / cfg.n_fft
    energies = power @ _filterbank(cfg).T
    log_energies = np.log(np.maximum(energies, cfg.log_floor))
    coeffs = dct(log_energies, type=2, norm="ortho", axis=1)[:, :cfg.n_coeffs]
    if not np.all(np.isfinite(coeffs)):
        raise FloatingPointError("non-finite MFCC output for clip %r" % clip.id)
    return MfccMatrix(coeffs, cfg.hop, cfg.frame_length, clip.id)
