"""Synthetic corpora with hidden instance truth: feature-space bags and rendered audio."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy.signal import chirp
from scipy.signal.windows import tukey

from .bags import Annotation, Bag, Manifest, Recording, save_manifest
from .dsp import AudioClip, write_wav

TEMPLATE_KINDS = ("tone", "noise", "chirp")


# --------------------------------------------------------------------------- feature space

def gen_feature_bags(separation: float, seed: int = 0, n_positive_bags: int = 100,
                     n_negative_bags: int = 100, bag_size: int = 5, positives_per_bag=(1, 3),
                     dim: int = 2):
    """Gaussian MIL problem.

    Negative instances come from N(0, I); positive ones from N(c, I) with
    ``|c| = separation`` along the diagonal. Each positive bag holds
    between ``positives_per_bag[0]`` and ``positives_per_bag[1]``
    positive instances, the rest negatives. Returns ``(bags, truths)``.
    """
    if separation < 0:
        raise ValueError("separation must be >= 0")
    lo, hi = positives_per_bag
    if not 1 <= lo <= hi <= bag_size:
        raise ValueError("positives_per_bag must satisfy 1 <= lo <= hi <= bag_size")
    rng = np.random.default_rng(seed)
    center = np.full(dim, separation / np.sqrt(dim))
    bags, truths = [], []
    spans = np.column_stack([np.arange(bag_size), np.arange(bag_size) + 1.0])
    labels = np.r_[np.ones(n_positive_bags, int), -np.ones(n_negative_bags, int)]
    for i, label in enumerate(labels):
        X = rng.standard_normal((bag_size, dim))
        truth = -np.ones(bag_size, dtype=int)
        if label == 1:
            k = int(rng.integers(lo, hi + 1))
            idx = rng.choice(bag_size, size=k, replace=False)
            X[idx] += center
            truth[idx] = 1
        bags.append(Bag("bag_%04d" % i, X, spans.copy(), int(label)))
        truths.append(truth)
    return bags, truths


# --------------------------------------------------------------------------- audio

@dataclass
class SynthConfig:
    n_events: int = 3
    event_names: list | None = None
    n_clips: int = 120
    positives_per_event: int = 40
    clip_duration: tuple = (4.0, 60.0)
    event_duration: tuple = (1.0, 2.5)
    occurrences: tuple = (1, 2)
    snr_db: float = 20.0
    noise_level: float = 0.02
    coloration_db: float = 3.0
    coloration_points: int = 8
    coloration_drift: float = 2.0
    level_jitter_db: float = 3.0
    sample_rate: int = 16000
    seed: int = 0
    templates: list | None = None

    def __post_init__(self):
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if min(self.clip_duration) <= 0 or min(self.event_duration) <= 0:
            raise ValueError("durations must be positive")
        if self.event_duration[0] > self.clip_duration[0]:
            raise ValueError("events may not be longer than the shortest clip")
        if self.coloration_drift < 0:
            raise ValueError("coloration_drift must be >= 0")
        if not 0 <= self.positives_per_event <= self.n_clips:
            raise ValueError("positives_per_event must lie in [0, n_clips]")
        if self.event_names is not None and len(self.event_names) != self.n_events:
            raise ValueError("event_names must have n_events entries")
        if len(set(self.names)) != self.n_events:
            raise ValueError("event names must be distinct")
        kinds = self.kinds
        if any(k not in TEMPLATE_KINDS for k in kinds):
            raise ValueError("templates must be drawn from %s" % (TEMPLATE_KINDS,))

    @property
    def names(self) -> list:
        return list(self.event_names or ["event_%d" % i for i in range(self.n_events)])

    @property
    def kinds(self) -> list:
        return list(self.templates or [TEMPLATE_KINDS[i % 3] for i in range(self.n_events)])

    def center_frequencies(self) -> np.ndarray:
        if self.n_events == 1:
            return np.array([1000.0])
        top = min(5000.0, 0.3 * self.sample_rate)
        return np.geomspace(500.0, top, self.n_events)

    @classmethod
    def from_json(cls, doc: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise KeyError("unknown synth config keys: %s" % ", ".join(sorted(unknown)))
        doc = dict(doc)
        for key in ("clip_duration", "event_duration", "occurrences"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(**doc)

    def to_json(self) -> dict:
        return asdict(self)


def event_band(fc: float):
    """Half-octave band around ``fc``: the support of an event's template."""
    return fc * 2 ** -0.25, fc * 2 ** 0.25


def render_template(kind: str, fc: float, duration: float, rate: int, rng) -> np.ndarray:
    """Unit-RMS event waveform confined to :func:`event_band` with tapered edges."""
    n = max(int(round(duration * rate)), 2)
    t = np.arange(n) / rate
    lo, hi = event_band(fc)
    if kind == "tone":
        x = np.sin(2 * np.pi * fc * t + rng.uniform(0, 2 * np.pi))
    elif kind == "chirp":
        x = chirp(t, f0=lo, t1=t[-1], f1=hi, method="linear")
    elif kind == "noise":
        x = _bandpass_noise(n, rate, lo, hi, rng)
    else:
        raise ValueError("unknown template kind %r" % kind)
    x = x * tukey(n, 0.1)
    return x / np.sqrt(np.mean(x ** 2))


def _bandpass_noise(n, rate, lo, hi, rng):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / rate)
    spec[(f < lo) | (f > hi)] = 0.0
    return np.fft.irfft(spec, n)


def colored_noise(n: int, rate: int, coloration_db: float, rng, points: int = 8) -> np.ndarray:
    """White noise shaped by a random smooth spectral envelope (+-coloration_db).

    The envelope interpolates ``points`` random gains spaced evenly in
    log-frequency between 50 Hz and Nyquist.
    """
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / rate)
    ctrl_f = np.geomspace(50.0, rate / 2.0, max(points, 2))
    ctrl_db = rng.uniform(-coloration_db, coloration_db, size=ctrl_f.size)
    gain_db = np.interp(np.log(np.maximum(f, 1.0)), np.log(ctrl_f), ctrl_db)
    x = np.fft.irfft(spec * 10 ** (gain_db / 20.0), n)
    return x / np.sqrt(np.mean(x ** 2))


def drifting_noise(n: int, rate: int, coloration_db: float, rng, points: int = 8,
                   drift: float = 2.0) -> np.ndarray:
    """Colored noise whose spectral envelope changes every ``drift`` seconds.

    Independent :func:`colored_noise` blocks are overlap-added under
    sine windows at 50% overlap; the squared windows sum to one, so the
    power stays constant while the envelope moves. ``drift=0`` gives a
    single stationary envelope.
    """
    hop = int(round(drift * rate))
    if hop <= 0 or n <= hop:
        return colored_noise(n, rate, coloration_db, rng, points)
    width = 2 * hop
    window = np.sin(np.pi * (np.arange(width) + 0.5) / width)
    out = np.zeros(n + 2 * width)
    for start in range(0, n + width, hop):
        out[start:start + width] += window * colored_noise(width, rate, coloration_db, rng, points)
    x = out[width: width + n]
    return x / np.sqrt(np.mean(x ** 2))


def band_power(x: np.ndarray, rate: int, lo: float, hi: float) -> float:
    """Mean power of ``x`` within [lo, hi] Hz (Parseval over the one-sided spectrum)."""
    spec = np.fft.rfft(x)
    f = np.fft.rfftfreq(len(x), 1.0 / rate)
    sel = (f >= lo) & (f <= hi)
    return float(2.0 * np.sum(np.abs(spec[sel]) ** 2) / len(x) ** 2)


def render_clip(config: SynthConfig, duration: float, events, rng, clip_id: str = "") -> AudioClip:
    """Background noise plus each ``(event, start, end)`` at ``config.snr_db``.

    SNR is measured against the background power inside the event's band.
    """
    rate = config.sample_rate
    n = int(round(duration * rate))
    jitter = config.level_jitter_db
    level = config.noise_level * 10 ** (rng.uniform(-jitter, jitter) / 20.0)
    x = level * drifting_noise(n, rate, config.coloration_db, rng, config.coloration_points,
                               config.coloration_drift)
    background = x.copy()
    freqs = dict(zip(config.names, config.center_frequencies()))
    kinds = dict(zip(config.names, config.kinds))
    for name, start, end in events:
        fc = freqs[name]
        a, b = int(round(start * rate)), min(int(round(end * rate)), n)
        wave = render_template(kinds[name], fc, (b - a) / rate, rate, rng)[: b - a]
        noise_pow = band_power(background, rate, *event_band(fc))
        x[a:b] += np.sqrt(noise_pow * 10 ** (config.snr_db / 10.0)) * wave
    return AudioClip(x, rate, clip_id)


def plan_corpus(config: SynthConfig) -> list:
    """Per-clip ``(clip_id, duration, [(event, start, end), ...])`` without rendering."""
    rng = np.random.default_rng(config.seed)
    n = config.n_clips
    durations = np.round(rng.uniform(*config.clip_duration, size=n), 3)
    events = [[] for _ in range(n)]
    for name in config.names:
        for i in np.sort(rng.choice(n, size=config.positives_per_event, replace=False)):
            k = int(rng.integers(config.occurrences[0], config.occurrences[1] + 1))
            for _ in range(k):
                length = float(np.round(rng.uniform(*config.event_duration), 3))
                length = min(length, float(durations[i]))
                start = float(np.round(rng.uniform(0.0, durations[i] - length), 3))
                events[i].append((name, start, round(start + length, 3)))
    return [("clip_%04d" % i, float(durations[i]), sorted(events[i], key=lambda e: e[1]))
            for i in range(n)]


def gen_audio_corpus(config: SynthConfig, out_dir) -> Manifest:
    """Render WAVs under ``out_dir/audio`` and write ``out_dir/manifest.json``."""
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    plan = plan_corpus(config)
    clip_seeds = np.random.SeedSequence(config.seed).spawn(len(plan))
    recordings = []
    for (clip_id, duration, events), ss in zip(plan, clip_seeds):
        clip = render_clip(config, duration, events, np.random.default_rng(ss), clip_id)
        path = out_dir / "audio" / ("%s.wav" % clip_id)
        write_wav(path, clip)
        recordings.append(Recording(
            clip_id=clip_id, audio_path=path,
            weak_labels=frozenset(e for e, _, _ in events),
            strong_annotations=[Annotation(e, s, t) for e, s, t in events],
            duration=duration,
        ))
    manifest = Manifest(config.names, recordings, out_dir)
    save_manifest(manifest, out_dir / "manifest.json")
    (out_dir / "synth_config.json").write_text(
        json.dumps(config.to_json(), indent=2, sort_keys=True) + "\n")
    return manifest
