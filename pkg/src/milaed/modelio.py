"""Versioned binary container for UBMs, detectors and feature caches.

Layout: 8 magic bytes, little-endian uint32 schema version, uint32
header length, a UTF-8 JSON header (sorted keys) and the raw
little-endian array payloads in header order. No timestamps are stored,
so identical content produces identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .bpmil import BPMIL, MilNet
from .gmm import Gmm
from .misvm import MISVM
from .svm import LinearModel

MAGIC = b"\x93MILAED\n"
SCHEMA_VERSION = 1


class ModelFormatError(ValueError):
    pass


def save_container(path, kind: str, meta: dict, arrays: dict, force: bool = True) -> None:
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError("%s exists; pass --force to overwrite" % path)
    entries, blobs, offset = [], [], 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                        "offset": offset, "nbytes": arr.nbytes})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps({"kind": kind, "meta": meta, "arrays": entries},
                        sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", SCHEMA_VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_container(path, expect_kind: str | None = None):
    """Returns ``(kind, meta, arrays)``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError("model file not found: %s" % path)
    data = path.read_bytes()
    if data[:len(MAGIC)] != MAGIC:
        raise ModelFormatError("%s is not a milaed model file" % path)
    version, hlen = struct.unpack_from("<II", data, len(MAGIC))
    if version > SCHEMA_VERSION:
        raise ModelFormatError("%s has schema version %d; this build reads <= %d"
                               % (path, version, SCHEMA_VERSION))
    start = len(MAGIC) + 8
    header = json.loads(data[start:start + hlen].decode())
    if expect_kind is not None and header["kind"] != expect_kind:
        raise ModelFormatError("%s holds a %r model, expected %r" % (path, header["kind"], expect_kind))
    base = start + hlen
    arrays = {}
    for e in header["arrays"]:
        buf = data[base + e["offset"]: base + e["offset"] + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(buf, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
    return header["kind"], header["meta"], arrays


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_ubm(path, gmm: Gmm, meta: dict | None = None, force: bool = True) -> None:
    meta = dict(meta or {})
    meta.update(n_components=gmm.n_components, n_features=gmm.n_features)
    save_container(path, "ubm", meta, {"weights": gmm.weights, "means": gmm.means,
                                       "variances": gmm.variances}, force=force)


def load_ubm(path):
    """Returns ``(gmm, meta)``."""
    _, meta, arr = load_container(path, "ubm")
    gmm = Gmm(arr["weights"], arr["means"], arr["variances"])
    if gmm.means.shape != (meta["n_components"], meta["n_features"]):
        raise ModelFormatError("%s: parameter shapes disagree with header" % path)
    return gmm, meta


def _scaling(est) -> dict:
    if getattr(est, "mean_", None) is None:
        return {}
    return {"scale_mean": est.mean_, "scale_std": est.scale_}


def save_detector(path, est, meta: dict, force: bool = True) -> None:
    """Persist a fitted :class:`MISVM` or :class:`BPMIL` with its scaling statistics."""
    meta = dict(meta)
    meta["params"] = est.get_params()
    arrays = _scaling(est)
    if isinstance(est, MISVM):
        meta.update(learner="misvm", C=est.C_, bias=est.model_.b, rounds=est.n_rounds_,
                    status=est.status_)
        arrays["w"] = est.model_.w
    elif isinstance(est, BPMIL):
        net = est.net_
        meta.update(learner="bpmil", hidden=net.n_hidden, input_dim=net.input_dim,
                    output_bias=net.output_bias, epochs_run=est.n_epochs_)
        arrays.update(hidden_weights=net.hidden_weights, hidden_bias=net.hidden_bias,
                      output_weights=net.output_weights)
    else:
        raise TypeError("cannot save %s" % type(est).__name__)
    save_container(path, "detector", meta, arrays, force=force)


def load_detector(path):
    """Returns ``(estimator, meta)`` ready for ``decision_function``."""
    _, meta, arr = load_container(path, "detector")
    if meta["learner"] == "misvm":
        est = MISVM(**meta["params"])
        est.model_ = LinearModel(arr["w"], float(meta["bias"]), float(meta["C"]))
        est.C_ = meta["C"]
        est.n_rounds_ = meta["rounds"]
        est.status_ = meta["status"]
    elif meta["learner"] == "bpmil":
        est = BPMIL(**meta["params"])
        est.net_ = MilNet(arr["hidden_weights"], arr["hidden_bias"], arr["output_weights"],
                          float(meta["output_bias"]))
        est.n_epochs_ = meta["epochs_run"]
    else:
        raise ModelFormatError("unknown learner %r in %s" % (meta["learner"], path))
    est.mean_ = arr.get("scale_mean")
    est.scale_ = arr.get("scale_std")
    est.classes_ = np.array([-1, 1])
    return est, meta
