"""Pipeline configuration and the end-to-end steps shared by the CLI and tests."""

from __future__ import annotations

import json
import logging
import zlib
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .bags import (FEATURE_MODES, Manifest, bag_truths, compute_mfccs, extract_features,
                   make_bags)
from .bpmil import BPMIL, default_hidden
from .evaluate import EvalReport, EventResult, kfold_evaluate
from .gmm import train_ubm
from .misvm import DEFAULT_C_GRID, MISVM

logger = logging.getLogger(__name__)

LEARNERS = ("misvm", "bpmil")


@dataclass(frozen=True)
class PipelineConfig:
    feature_mode: str = "F"
    gaussians: int = 64
    segment_length: float = 1.0
    segment_hop: float = 0.5
    relevance: float = 16.0
    learner: str = "misvm"
    c: object = "auto"
    c_grid: tuple = DEFAULT_C_GRID
    max_rounds: int = 50
    hidden: int | None = None
    lr_policy: str = "const"
    epochs: int = 60
    folds: int = 4
    ubm_max_iter: int = 100
    ubm_tol: float = 1e-6
    ubm_max_frames: int = 500_000
    seed: int = 0

    def __post_init__(self):
        if self.feature_mode not in FEATURE_MODES:
            raise ValueError("feature_mode must be one of %s" % (FEATURE_MODES,))
        if self.learner not in LEARNERS:
            raise ValueError("learner must be one of %s" % (LEARNERS,))
        if self.lr_policy not in ("const", "decay"):
            raise ValueError("lr_policy must be 'const' or 'decay'")
        if self.gaussians < 1:
            raise ValueError("gaussians must be >= 1")
        if self.segment_length <= 0 or not 0 < self.segment_hop <= self.segment_length:
            raise ValueError("need segment_length > 0 and 0 < segment_hop <= segment_length")
        if self.c != "auto" and float(self.c) <= 0:
            raise ValueError("c must be 'auto' or positive")
        object.__setattr__(self, "c_grid", tuple(float(c) for c in self.c_grid))

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise KeyError("unknown pipeline config keys: %s" % ", ".join(sorted(unknown)))
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def update(self, **overrides) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["c_grid"] = list(d["c_grid"])
        return d

    @property
    def n_hidden(self) -> int:
        return self.hidden or default_hidden(self.feature_mode, self.gaussians)


def event_seed(seed: int, event: str) -> int:
    """Deterministic per-event seed, independent of event order or job count."""
    return (int(seed) * 1_000_003 + zlib.crc32(event.encode())) % (2**31 - 1)


def make_learner(config: PipelineConfig, seed: int | None = None):
    seed = config.seed if seed is None else seed
    if config.learner == "misvm":
        return MISVM(C=config.c if config.c == "auto" else float(config.c),
                     c_grid=config.c_grid, cv_folds=config.folds,
                     max_rounds=config.max_rounds, seed=seed)
    return BPMIL(hidden=config.n_hidden, epochs=config.epochs, lr_policy=config.lr_policy,
                 seed=seed)


def fit_ubm(mfccs: dict, config: PipelineConfig):
    """Train the UBM on the pooled frames of ``mfccs`` (as from ``compute_mfccs``)."""
    if not mfccs:
        raise ValueError("no readable recordings to train the UBM on")
    frames = np.vstack([mfccs[k][0].vectors for k in sorted(mfccs)])
    return train_ubm(frames, config.gaussians, seed=config.seed, max_iter=config.ubm_max_iter,
                     tol=config.ubm_tol, max_frames=config.ubm_max_frames)


def manifest_features(manifest: Manifest, gmm, config: PipelineConfig, mfcc_config=None,
                      mfccs=None, n_jobs: int = 1):
    return extract_features(manifest, gmm, config.feature_mode, config.segment_length,
                            config.segment_hop, mfcc_config, config.relevance, n_jobs, mfccs)


def train_detector(manifest: Manifest, event: str, features: dict, config: PipelineConfig):
    bags = make_bags(manifest, event, features)
    est = make_learner(config, event_seed(config.seed, event))
    est.fit(bags)
    return est


def evaluate_event(manifest: Manifest, event: str, features: dict, config: PipelineConfig):
    bags = make_bags(manifest, event, features)
    seed = event_seed(config.seed, event)
    truths = bag_truths(manifest, event, bags) if _all_strong(manifest, bags) else None
    res = kfold_evaluate(bags, lambda: make_learner(config, seed), k=config.folds, seed=seed,
                         truths=truths)
    return bags, res


def _all_strong(manifest, bags) -> bool:
    recs = {r.clip_id: r for r in manifest.recordings}
    return all(recs[b.clip_id].strong_annotations is not None for b in bags)


def evaluate_manifest(manifest: Manifest, features: dict, config: PipelineConfig,
                      events=None, n_jobs: int = 1):
    """Run the k-fold protocol for each event.

    Returns ``(report, results)`` where ``results`` maps event name to
    ``(bags, FoldResult)``.
    """
    from joblib import Parallel, delayed

    events = list(events or manifest.events)
    for e in events:
        manifest.check_event(e)
    outs = Parallel(n_jobs=n_jobs)(
        delayed(evaluate_event)(manifest, e, features, config) for e in events)
    results, per_event = {}, {}
    for e, (bags, res) in zip(events, outs):
        results[e] = (bags, res)
        per_event[e] = EventResult(
            event=e, n_bags=len(bags), n_positive=int((res.bag_labels == 1).sum()),
            bag_auc=res.bag_auc, instance_auc=res.instance_auc,
            folds={b.clip_id: int(f) for b, f in zip(bags, res.folds)},
            fit_info=res.fit_info)
        logger.info("%s: bag AUC %.3f, instance AUC %s", e, res.bag_auc, res.instance_auc)
    return EvalReport(per_event, config.to_dict()), results


def run_pipeline(manifest: Manifest, config: PipelineConfig, mfcc_config=None, n_jobs: int = 1):
    """MFCC -> UBM -> features -> k-fold evaluation, all in memory."""
    mfccs, _ = compute_mfccs(manifest, mfcc_config, n_jobs)
    gmm, _ = fit_ubm(mfccs, config)
    features, _ = manifest_features(manifest, gmm, config, mfcc_config, mfccs, n_jobs)
    return evaluate_manifest(manifest, features, config, n_jobs=n_jobs)
