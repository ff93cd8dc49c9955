#!/usr/bin/env python3
"""
lobfeat - Feature files and JSON artifacts

Binary feature file, little-endian:

    header    magic "LOBF", version u16, D u32, N u64, manifest offset u64
    values    D x N float64, row-major (one row per feature)
    flags     N uint8
    mids      N float64
    days      N int32
    stocks    N int16
    manifest  UTF-8 JSON {version, config_hash, features: [{index, name, group, appendix_ref}]}

Rankings, models, metrics and reports are JSON documents carrying the
config hash of the run that produced them.
"""

import json
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from .errors import FormatError
from .extraction import FeatureInfo, FeatureMatrix

logger = logging.getLogger(__name__)

MAGIC = b"LOBF"
FORMAT_VERSION = 1
HEADER = np.dtype([
    ("magic", "S4"),
    ("version", "<u2"),
    ("d", "<u4"),
    ("n", "<u8"),
    ("manifest_offset", "<u8"),
])
ARTIFACT_VERSION = 1


def write_features(path: Union[str, Path], matrix: FeatureMatrix, config_hash: str = "") -> Path:
    path = Path(path)
    d, n = matrix.values.shape
    body = [
        np.ascontiguousarray(matrix.values, dtype="<f8").tobytes(),
        np.asarray(matrix.flags, dtype=np.uint8).tobytes(),
        np.asarray(matrix.mids, dtype="<f8").tobytes(),
        np.asarray(matrix.days, dtype="<i4").tobytes(),
        np.asarray(matrix.stocks, dtype="<i2").tobytes(),
    ]
    offset = HEADER.itemsize + sum(len(b) for b in body)
    manifest = {
        "version": FORMAT_VERSION,
        "config_hash": config_hash,
        "features": [f.to_dict() for f in matrix.manifest],
    }
    header = np.array([(MAGIC, FORMAT_VERSION, d, n, offset)], dtype=HEADER)

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        for block in body:
            fh.write(block)
        fh.write(json.dumps(manifest).encode("utf-8"))
    logger.info(f"Wrote {d} x {n} features to {path}")
    return path


def _take(raw: bytes, offset: int, dtype: str, count: int):
    size = np.dtype(dtype).itemsize * count
    if offset + size > len(raw):
        raise FormatError(f"feature file truncated at byte {offset}")
    return np.frombuffer(raw, dtype=dtype, count=count, offset=offset).copy(), offset + size


def read_features(path: Union[str, Path]) -> FeatureMatrix:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"Cannot read feature file {path}: {e}")
    if len(raw) < HEADER.itemsize:
        raise FormatError(f"{path} is too short to be a feature file")
    header = np.frombuffer(raw, dtype=HEADER, count=1)[0]
    if bytes(header["magic"]) != MAGIC:
        raise FormatError(f"{path} is not a feature file (bad magic)")
    if int(header["version"]) != FORMAT_VERSION:
        raise FormatError(f"Unsupported feature file version {int(header['version'])}")
    d, n = int(header["d"]), int(header["n"])

    offset = HEADER.itemsize
    values, offset = _take(raw, offset, "<f8", d * n)
    flags, offset = _take(raw, offset, "u1", n)
    mids, offset = _take(raw, offset, "<f8", n)
    days, offset = _take(raw, offset, "<i4", n)
    stocks, offset = _take(raw, offset, "<i2", n)
    if offset != int(header["manifest_offset"]):
        raise FormatError(f"manifest offset {int(header['manifest_offset'])} does not follow the data ({offset})")

    try:
        manifest = json.loads(raw[offset:].decode("utf-8"))
        features = [FeatureInfo(**entry) for entry in manifest["features"]]
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"Invalid manifest in {path}: {e}")
    if len(features) != d:
        raise FormatError(f"manifest lists {len(features)} features, header says {d}")

    return FeatureMatrix(values.reshape(d, n), flags.astype(bool), mids, days.astype(np.int32),
                         stocks.astype(np.int16), features)


def read_manifest_hash(path: Union[str, Path]) -> str:
    raw = Path(path).read_bytes()
    offset = int(np.frombuffer(raw, dtype=HEADER, count=1)[0]["manifest_offset"])
    return json.loads(raw[offset:].decode("utf-8")).get("config_hash", "")


def write_artifact(path: Union[str, Path], kind: str, payload: dict, config_hash: str = "") -> Path:
    """JSON document tagged with its kind, format version and config hash"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {"kind": kind, "version": ARTIFACT_VERSION, "config_hash": config_hash, **payload}
    path.write_text(json.dumps(document, indent=2, default=_jsonable))
    logger.info(f"Wrote {kind} to {path}")
    return path


def read_artifact(path: Union[str, Path], kind: Optional[str] = None) -> dict:
    try:
        document = json.loads(Path(path).read_text())
    except OSError as e:
        raise FormatError(f"Cannot read {path}: {e}")
    except ValueError as e:
        raise FormatError(f"{path} is not valid JSON: {e}")
    if not isinstance(document, dict) or "kind" not in document:
        raise FormatError(f"{path} is not a lobfeat artifact")
    if kind is not None and document["kind"] != kind:
        raise FormatError(f"{path} holds a {document['kind']}, expected a {kind}")
    if document.get("version") != ARTIFACT_VERSION:
        raise FormatError(f"Unsupported {document['kind']} version {document.get('version')}")
    return document


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def write_labels(path: Union[str, Path], labels: np.ndarray) -> Path:
    path = Path(path)
    pd.DataFrame({"label": np.asarray(labels, dtype=np.int64)}).to_csv(path, index=False)
    return path


def read_labels(path: Union[str, Path]) -> np.ndarray:
    try:
        frame = pd.read_csv(path)
    except (OSError, ValueError) as e:
        raise FormatError(f"Cannot read labels from {path}: {e}")
    if list(frame.columns) != ["label"]:
        raise FormatError(f"{path}: expected a single 'label' column")
    return frame["label"].to_numpy(dtype=np.int64)
