"""Command-line entry point: ``milaed <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .bags import compute_mfccs, load_manifest
from .dsp import MfccConfig, load_mfcc_config
from .evaluate import localize
from .modelio import (file_digest, load_container, load_detector, load_ubm, save_container,
                      save_detector, save_ubm)
from .pipeline import (PipelineConfig, evaluate_manifest, fit_ubm, manifest_features,
                       train_detector)
from .synth import SynthConfig, gen_audio_corpus

logger = logging.getLogger("milaed")

ENV_PREFIX = "MILAED_"


def _env(name, default=None):
    return os.environ.get(ENV_PREFIX + name, default)


def _c_value(text):
    return text if text == "auto" else float(text)


def _add_common(p, *, ubm=False, pipeline=True):
    p.add_argument("--manifest", required=True, help="corpus manifest JSON")
    if ubm:
        p.add_argument("--ubm", required=True, help="UBM model file from train-ubm")
    if pipeline:
        p.add_argument("--feature-mode", choices=("F", "F+M"))
        p.add_argument("--relevance", type=float, help="MAP relevance factor (default 16)")
        p.add_argument("--segment-length", type=float)
        p.add_argument("--segment-hop", type=float)


def _add_learner(p):
    p.add_argument("--learner", choices=("misvm", "bpmil"))
    p.add_argument("--c", type=_c_value, help="SVM trade-off: 'auto' (cross-validated) or a value")
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--hidden", type=int, help="BP-MIL hidden units")
    p.add_argument("--lr-policy", choices=("const", "decay"))
    p.add_argument("--epochs", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="milaed", description=__doc__)
    ap.add_argument("--seed", type=int, default=None,
                    help="global seed (env %sSEED)" % ENV_PREFIX)
    ap.add_argument("--jobs", type=int, default=None,
                    help="parallel jobs over recordings/events (env %sJOBS)" % ENV_PREFIX)
    ap.add_argument("--config", default=None,
                    help="pipeline config JSON; unknown keys are rejected (env %sCONFIG)" % ENV_PREFIX)
    ap.add_argument("--mfcc-config", default=None,
                    help="key = value MFCC settings file (env %sMFCC_CONFIG)" % ENV_PREFIX)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic corpus (WAVs + manifest)")
    p.add_argument("--config", dest="synth_config", help="synth config JSON")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-ubm", help="train the universal background GMM")
    _add_common(p, pipeline=False)
    p.add_argument("--gaussians", type=int)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("extract-features", help="cache instance features for a corpus")
    _add_common(p, ubm=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("train", help="train a detector for one event")
    _add_common(p, ubm=True)
    _add_learner(p)
    p.add_argument("--event", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")

    for name, helptext in (("predict", "bag scores per recording"),
                           ("localize", "detected intervals per recording")):
        p = sub.add_parser(name, help=helptext)
        _add_common(p, ubm=True)
        p.add_argument("--model", required=True)
        p.add_argument("--out", help="write JSON here instead of stdout")
        if name == "localize":
            p.add_argument("--threshold", type=float, required=True)

    p = sub.add_parser("evaluate", help="k-fold bag and instance AUC per event")
    _add_common(p, ubm=True)
    _add_learner(p)
    p.add_argument("--events", nargs="*", help="subset of events (default all)")
    p.add_argument("--out", help="report JSON path (default stdout table only)")
    p.add_argument("--roc-out", help="directory for per-event ROC CSV files")
    return ap


def _pipeline_config(args) -> PipelineConfig:
    path = args.config or _env("CONFIG")
    config = PipelineConfig.load(path) if path else PipelineConfig()
    seed = args.seed if args.seed is not None else _env("SEED")
    return config.update(
        seed=None if seed is None else int(seed),
        feature_mode=getattr(args, "feature_mode", None),
        relevance=getattr(args, "relevance", None),
        segment_length=getattr(args, "segment_length", None),
        segment_hop=getattr(args, "segment_hop", None),
        gaussians=getattr(args, "gaussians", None),
        ubm_max_iter=getattr(args, "max_iter", None),
        learner=getattr(args, "learner", None),
        c=getattr(args, "c", None),
        max_rounds=getattr(args, "max_rounds", None),
        hidden=getattr(args, "hidden", None),
        lr_policy=getattr(args, "lr_policy", None),
        epochs=getattr(args, "epochs", None),
    )


def _mfcc_config(args) -> MfccConfig:
    path = args.mfcc_config or _env("MFCC_CONFIG")
    return load_mfcc_config(path) if path else MfccConfig()


def _jobs(args) -> int:
    return int(args.jobs if args.jobs is not None else _env("JOBS", 1))


def _check_writable(path, force):
    if Path(path).exists() and not force:
        raise FileExistsError("%s exists; pass --force to overwrite" % path)


def _write_json(doc, path):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _mfcc_meta(cfg: MfccConfig) -> dict:
    return {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}


def cmd_synth(args):
    config = SynthConfig()
    if args.synth_config:
        config = SynthConfig.from_json(json.loads(Path(args.synth_config).read_text()))
    seed = args.seed if args.seed is not None else _env("SEED")
    if seed is not None and not args.synth_config:
        config = SynthConfig(**{**config.to_json(), "seed": int(seed)})
    manifest = gen_audio_corpus(config, args.out)
    logger.info("wrote %d clips to %s", len(manifest.recordings), args.out)


def cmd_train_ubm(args):
    config = _pipeline_config(args)
    mcfg = _mfcc_config(args)
    _check_writable(args.out, args.force)
    manifest = load_manifest(args.manifest)
    mfccs, report = compute_mfccs(manifest, mcfg, _jobs(args))
    gmm, history = fit_ubm(mfccs, config)
    save_ubm(args.out, gmm, {"seed": config.seed, "iterations": len(history),
                             "avg_log_likelihood": history[-1], "mfcc": _mfcc_meta(mcfg),
                             "skipped": sorted(report.errors)}, force=True)
    logger.info("UBM G=%d written to %s", gmm.n_components, args.out)


def _load_features(args, config, mcfg):
    manifest = load_manifest(args.manifest)
    gmm, ubm_meta = load_ubm(args.ubm)
    if "mfcc" in ubm_meta and ubm_meta["mfcc"] != _mfcc_meta(mcfg):
        logger.warning("MFCC settings differ from those used to train the UBM")
    config = config.update(gaussians=gmm.n_components)
    features, report = manifest_features(manifest, gmm, config, mcfg, n_jobs=_jobs(args))
    if report.errors:
        logger.warning("%d recordings skipped: %s", report.n_skipped,
                       "; ".join("%s (%s)" % kv for kv in sorted(report.errors.items())))
    return manifest, features, config


def cmd_extract_features(args):
    config = _pipeline_config(args)
    _check_writable(args.out, args.force)
    manifest, features, config = _load_features(args, config, _mfcc_config(args))
    arrays = {}
    for cid in sorted(features):
        arrays[cid + "/instances"] = features[cid].instances
        arrays[cid + "/spans"] = features[cid].spans
    save_container(args.out, "features",
                   {"feature_mode": config.feature_mode, "ubm_sha256": file_digest(args.ubm),
                    "clips": sorted(features)}, arrays)


def cmd_train(args):
    config = _pipeline_config(args)
    _check_writable(args.out, args.force)
    manifest = load_manifest(args.manifest)
    manifest.check_event(args.event)
    manifest, features, config = _load_features(args, config, _mfcc_config(args))
    est = train_detector(manifest, args.event, features, config)
    meta = {"event": args.event, "feature_mode": config.feature_mode,
            "gaussians": config.gaussians, "relevance": config.relevance,
            "segment_length": config.segment_length, "segment_hop": config.segment_hop,
            "ubm_sha256": file_digest(args.ubm), "seed": config.seed}
    if config.learner == "misvm":
        logger.info("event %s: C=%g, %d imputation rounds (%s)", args.event, est.C_,
                    est.n_rounds_, est.status_)
        if hasattr(est, "cv_scores_"):
            meta["cv_scores"] = {repr(k): v for k, v in est.cv_scores_.items()}
    else:
        logger.info("event %s: BP-MIL hidden=%d, %d epochs", args.event, est.hidden, est.n_epochs_)
    save_detector(args.out, est, meta, force=True)


def _detector_and_features(args):
    est, meta = load_detector(args.model)
    config = _pipeline_config(args)
    if args.feature_mode is not None and args.feature_mode != meta["feature_mode"]:
        raise ValueError("feature mode mismatch: model was trained with %s, config asks for %s"
                         % (meta["feature_mode"], args.feature_mode))
    if meta.get("ubm_sha256") and meta["ubm_sha256"] != file_digest(args.ubm):
        raise ValueError("UBM %s differs from the one the model was trained with" % args.ubm)
    config = config.update(feature_mode=meta["feature_mode"], relevance=meta["relevance"],
                           segment_length=meta["segment_length"],
                           segment_hop=meta["segment_hop"])
    manifest, features, _ = _load_features(args, config, _mfcc_config(args))
    ids = [r.clip_id for r in manifest.recordings if r.clip_id in features]
    scores = est.instance_decision_function([features[c].instances for c in ids])
    return meta, ids, features, scores


def cmd_predict(args):
    meta, ids, features, scores = _detector_and_features(args)
    doc = {"event": meta["event"], "learner": meta["learner"], "recordings": {
        cid: {"score": float(s.max()), "instance_scores": [float(v) for v in s],
              "spans": features[cid].spans.tolist()}
        for cid, s in zip(ids, scores)}}
    _write_json(doc, args.out)


def cmd_localize(args):
    meta, ids, features, scores = _detector_and_features(args)
    doc = {"event": meta["event"], "threshold": args.threshold, "recordings": {
        cid: [list(iv) for iv in localize(s, features[cid].spans, args.threshold)]
        for cid, s in zip(ids, scores)}}
    _write_json(doc, args.out)


def cmd_evaluate(args):
    config = _pipeline_config(args)
    manifest, features, config = _load_features(args, config, _mfcc_config(args))
    report, results = evaluate_manifest(manifest, features, config, args.events, _jobs(args))
    if args.out:
        Path(args.out).write_text(report.dumps())
    if args.roc_out:
        out = Path(args.roc_out)
        out.mkdir(parents=True, exist_ok=True)
        for event, (_, res) in results.items():
            stem = event.replace("/", "_").replace(" ", "_")
            res.bag_roc.to_csv(out / ("%s_bag.csv" % stem))
            if res.instance_roc is not None:
                res.instance_roc.to_csv(out / ("%s_instance.csv" % stem))
    print(report.table())


COMMANDS = {
    "synth": cmd_synth,
    "train-ubm": cmd_train_ubm,
    "extract-features": cmd_extract_features,
    "train": cmd_train,
    "predict": cmd_predict,
    "localize": cmd_localize,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (FileNotFoundError, FileExistsError, KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print("milaed %s: error: %s" % (args.command, msg), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
