"""Manifests, recording segmentation and MIL bag assembly."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import MfccConfig, mfcc, read_wav
from .gmm import DEFAULT_RELEVANCE, Gmm, adapted_means_from_stats, sufficient_stats

logger = logging.getLogger(__name__)

FEATURE_MODES = ("F", "F+M")
_EPS = 1e-9


@dataclass
class Annotation:
    event: str
    start: float
    end: float


@dataclass
class Recording:
    clip_id: str
    audio_path: Path
    weak_labels: frozenset
    strong_annotations: list | None = None
    duration: float | None = None


@dataclass
class Manifest:
    events: list
    recordings: list
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        ids = [r.clip_id for r in self.recordings]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError("duplicate clip ids in manifest: %s" % ", ".join(dup))
        known = set(self.events)
        for rec in self.recordings:
            unknown = set(rec.weak_labels) - known
            if unknown:
                raise ValueError("%s: weak labels not in event list: %s"
                                 % (rec.clip_id, ", ".join(sorted(unknown))))
            for ann in rec.strong_annotations or ():
                if ann.event not in known:
                    raise ValueError("%s: annotation event %r not in event list"
                                     % (rec.clip_id, ann.event))
                if not 0 <= ann.start < ann.end:
                    raise ValueError("%s: bad annotation span [%g, %g)"
                                     % (rec.clip_id, ann.start, ann.end))
                if rec.duration is not None and ann.end > rec.duration + _EPS:
                    raise ValueError("%s: annotation ends at %g past clip duration %g"
                                     % (rec.clip_id, ann.end, rec.duration))

    @property
    def has_strong(self) -> bool:
        return any(r.strong_annotations is not None for r in self.recordings)

    def check_event(self, event: str) -> None:
        if event not in self.events:
            raise KeyError("unknown event %r; known events: %s" % (event, ", ".join(self.events)))

    def bag_labels(self, event: str) -> np.ndarray:
        self.check_event(event)
        return np.array([1 if event in r.weak_labels else -1 for r in self.recordings])

    def to_json(self) -> dict:
        recs = []
        for r in self.recordings:
            path = Path(r.audio_path)
            try:
                path = path.relative_to(self.root)
            except ValueError:
                pass
            item = {"id": r.clip_id, "path": path.as_posix(), "weak": sorted(r.weak_labels)}
            if r.duration is not None:
                item["duration"] = r.duration
            if r.strong_annotations is not None:
                item["strong"] = [{"event": a.event, "start": a.start, "end": a.end}
                                  for a in r.strong_annotations]
            recs.append(item)
        return {"events": list(self.events), "recordings": recs}


def load_manifest(path) -> Manifest:
    """Parse a manifest JSON file; audio paths resolve relative to its directory."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError("manifest not found: %s" % path)
    doc = json.loads(path.read_text())
    return manifest_from_json(doc, root=path.parent)


def manifest_from_json(doc: dict, root=".") -> Manifest:
    root = Path(root)
    recordings = []
    for item in doc["recordings"]:
        strong = item.get("strong")
        if strong is not None:
            strong = [Annotation(a["event"], float(a["start"]), float(a["end"])) for a in strong]
        duration = item.get("duration")
        recordings.append(Recording(
            clip_id=str(item["id"]),
            audio_path=root / item["path"],
            weak_labels=frozenset(item.get("weak", [])),
            strong_annotations=strong,
            duration=None if duration is None else float(duration),
        ))
    return Manifest(list(doc["events"]), recordings, root)


def save_manifest(manifest: Manifest, path) -> None:
    Path(path).write_text(json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n")


def segment_spans(duration: float, length: float = 1.0, hop: float = 0.5) -> np.ndarray:
    """Instance time spans ``[(k-1)*hop, (k-1)*hop + length)``, shape (K, 2).

    Clips shorter than ``length`` yield the single truncated span ``[0, duration)``.
    """
    if duration <= 0:
        raise ValueError("duration must be positive, got %r" % duration)
    if length <= 0 or not 0 < hop <= length:
        raise ValueError("need length > 0 and 0 < hop <= length")
    if duration < length:
        return np.array([[0.0, float(duration)]])
    K = int(np.floor((duration - length) / hop + _EPS)) + 1
    starts = np.arange(K) * hop
    return np.column_stack([starts, starts + length])


def _union(intervals):
    merged = []
    for s, e in sorted(intervals):
        if merged and s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return merged


def instance_truth(annotations, spans, event: str) -> np.ndarray:
    """Evaluation-only instance labels: +1 when the event covers at least half a span."""
    intervals = _union([(a.start, a.end) for a in annotations or () if a.event == event])
    spans = np.asarray(spans, dtype=np.float64)
    truth = -np.ones(len(spans), dtype=int)
    for k, (s, e) in enumerate(spans):
        covered = sum(max(0.0, min(e, b) - max(s, a)) for a, b in intervals)
        if covered >= 0.5 * (e - s) - _EPS:
            truth[k] = 1
    return truth


@dataclass
class Bag:
    clip_id: str
    instances: np.ndarray
    spans: np.ndarray
    label: int

    def __post_init__(self):
        self.instances = np.atleast_2d(np.asarray(self.instances, dtype=np.float64))
        if self.instances.shape[0] < 1:
            raise ValueError("bag %r has no instances" % self.clip_id)
        if len(self.spans) != self.instances.shape[0]:
            raise ValueError("bag %r: %d spans for %d instances"
                             % (self.clip_id, len(self.spans), self.instances.shape[0]))

    def __len__(self):
        return self.instances.shape[0]


@dataclass
class ClipFeatures:
    clip_id: str
    instances: np.ndarray
    spans: np.ndarray


@dataclass
class ExtractionReport:
    n_ok: int = 0
    errors: dict = field(default_factory=dict)

    @property
    def n_skipped(self) -> int:
        return len(self.errors)


def feature_dimension(gmm: Gmm, mode: str) -> int:
    if mode == "F":
        return gmm.n_components
    if mode == "F+M":
        return gmm.n_components * (1 + gmm.n_features)
    raise ValueError("feature mode must be one of %s, got %r" % (FEATURE_MODES, mode))


def segment_features(gmm: Gmm, mfccs, spans, mode: str = "F",
                     relevance: float = DEFAULT_RELEVANCE) -> np.ndarray:
    """One feature row per span from the frames whose centers fall inside it."""
    feature_dimension(gmm, mode)
    X = mfccs.vectors
    post = gmm.posteriors(X)
    centers = mfccs.frame_centers()
    rows = []
    for s, e in spans:
        m = (centers >= s) & (centers < e)
        if not m.any():
            raise ValueError("empty segment [%g, %g) in clip %r" % (s, e, mfccs.clip_id))
        f = post[m].mean(axis=0)
        if mode == "F+M":
            n, first = sufficient_stats(post[m], X[m])
            f = np.concatenate([f, adapted_means_from_stats(gmm, n, first, relevance)])
        rows.append(f)
    return np.vstack(rows)


def clip_mfcc(recording: Recording, mfcc_config: MfccConfig | None = None):
    """Returns ``(mfcc_matrix, duration_seconds)`` for one recording."""
    clip = read_wav(recording.audio_path, recording.clip_id)
    return mfcc(clip, mfcc_config), clip.duration


def compute_mfccs(manifest: Manifest, mfcc_config: MfccConfig | None = None, n_jobs: int = 1):
    """MFCCs of every readable recording: ``({clip_id: (matrix, duration)}, report)``."""
    from joblib import Parallel, delayed

    def one(rec):
        try:
            return clip_mfcc(rec, mfcc_config)
        except (OSError, ValueError) as exc:
            return exc

    results = Parallel(n_jobs=n_jobs)(delayed(one)(r) for r in manifest.recordings)
    out, report = {}, ExtractionReport()
    for rec, res in zip(manifest.recordings, results):
        if isinstance(res, Exception):
            report.errors[rec.clip_id] = "%s: %s" % (type(res).__name__, res)
        else:
            out[rec.clip_id] = res
            report.n_ok += 1
    if report.errors:
        logger.warning("skipped %d of %d recordings with unreadable audio",
                       report.n_skipped, len(manifest.recordings))
    return out, report


def clip_features(recording: Recording, gmm: Gmm, mode: str = "F", length: float = 1.0,
                  hop: float = 0.5, mfcc_config: MfccConfig | None = None,
                  relevance: float = DEFAULT_RELEVANCE, precomputed=None) -> ClipFeatures:
    mat, duration = precomputed or clip_mfcc(recording, mfcc_config)
    spans = segment_spans(duration, length, hop)
    return ClipFeatures(recording.clip_id, segment_features(gmm, mat, spans, mode, relevance), spans)


def extract_features(manifest: Manifest, gmm: Gmm, mode: str = "F", length: float = 1.0,
                     hop: float = 0.5, mfcc_config: MfccConfig | None = None,
                     relevance: float = DEFAULT_RELEVANCE, n_jobs: int = 1, mfccs=None):
    """Instance features for every readable recording.

    Returns ``(features, report)``: ``features`` maps clip id to
    :class:`ClipFeatures`; failures are collected in ``report.errors``.
    ``mfccs`` may hold precomputed output of :func:`compute_mfccs`;
    recordings missing from it are treated as unreadable.
    """
    from joblib import Parallel, delayed

    def one(rec):
        if mfccs is not None and rec.clip_id not in mfccs:
            return ValueError("no MFCCs available")
        try:
            return clip_features(rec, gmm, mode, length, hop, mfcc_config, relevance,
                                 None if mfccs is None else mfccs[rec.clip_id])
        except (OSError, ValueError) as exc:
            return exc

    results = Parallel(n_jobs=n_jobs)(delayed(one)(r) for r in manifest.recordings)
    features, report = {}, ExtractionReport()
    for rec, res in zip(manifest.recordings, results):
        if isinstance(res, Exception):
            report.errors[rec.clip_id] = "%s: %s" % (type(res).__name__, res)
        else:
            features[rec.clip_id] = res
            report.n_ok += 1
    if report.errors:
        logger.warning("skipped %d of %d recordings with unreadable audio",
                       report.n_skipped, len(manifest.recordings))
    return features, report


def make_bags(manifest: Manifest, event: str, features: dict) -> list:
    """Bags for ``event``: label +1 iff the event is among a recording's weak tags."""
    manifest.check_event(event)
    bags = []
    for rec in manifest.recordings:
        if rec.clip_id not in features:
            continue
        cf = features[rec.clip_id]
        bags.append(Bag(rec.clip_id, cf.instances, cf.spans,
                        1 if event in rec.weak_labels else -1))
    return bags


def build_bags(manifest: Manifest, event: str, gmm: Gmm, feature_mode: str = "F",
               length: float = 1.0, hop: float = 0.5, mfcc_config: MfccConfig | None = None,
               relevance: float = DEFAULT_RELEVANCE, n_jobs: int = 1):
    """Returns ``(bags, report)`` for one target event."""
    manifest.check_event(event)
    features, report = extract_features(manifest, gmm, feature_mode, length, hop,
                                        mfcc_config, relevance, n_jobs)
    return make_bags(manifest, event, features), report


def bag_truths(manifest: Manifest, event: str, bags) -> list:
    """Instance truth for each bag (requires strong annotations)."""
    recs = {r.clip_id: r for r in manifest.recordings}
    return [instance_truth(recs[b.clip_id].strong_annotations, b.spans, event) for b in bags]
