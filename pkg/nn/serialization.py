"""
Model files

Layout:
    b"QNN1"
    uint32 little-endian length of the manifest
    manifest: UTF-8 JSON (sorted keys) with format_version, architecture,
              metadata and the ordered list of tensor names and shapes
    float64 little-endian payload of every tensor, in manifest order
"""

import logging
import struct
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import orjson

from nn.models import Model, build_model
from utils.exceptions import ConfigError, ModelFormatError, ModelVersionError, ShapeError

logger = logging.getLogger(__name__)

MAGIC = b"QNN1"
FORMAT_VERSION = 1
_LENGTH = struct.Struct("<I")


def model_to_bytes(model: Model, metadata: Optional[Dict] = None) -> bytes:
    state = model.state_dict()
    manifest = {
        "format_version": FORMAT_VERSION,
        "architecture": model.architecture,
        "metadata": metadata if metadata is not None else model.metadata,
        "tensors": [{"name": name, "shape": list(value.shape)} for name, value in state.items()],
    }
    header = orjson.dumps(manifest, option=orjson.OPT_SORT_KEYS)
    payload = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in state.values())
    return MAGIC + _LENGTH.pack(len(header)) + header + payload


def model_from_bytes(blob: bytes) -> Model:
    """
    Rebuild a model from its serialized form

    Raises:
        ModelFormatError: bad magic, malformed manifest or truncated payload
        ModelVersionError: unsupported format_version
    """
    if blob[:4] != MAGIC:
        raise ModelFormatError("Not a model file (bad magic bytes)")
    if len(blob) < 8:
        raise ModelFormatError("Model file truncated inside the header")
    (length,) = _LENGTH.unpack(blob[4:8])
    if len(blob) < 8 + length:
        raise ModelFormatError("Model file truncated inside the manifest")
    try:
        manifest = orjson.loads(blob[8:8 + length])
    except orjson.JSONDecodeError as e:
        raise ModelFormatError(f"Malformed model manifest: {e}") from e
    if not isinstance(manifest, dict):
        raise ModelFormatError("Model manifest is not a JSON object")

    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"Unsupported model format version {version!r} (expected {FORMAT_VERSION})")

    try:
        model = build_model(manifest["architecture"])
        tensors = manifest["tensors"]
    except (KeyError, ConfigError) as e:
        raise ModelFormatError(f"Invalid model manifest: {e}") from e

    offset = 8 + length
    state = {}
    for entry in tensors:
        try:
            shape = tuple(int(s) for s in entry["shape"])
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"Invalid tensor entry {entry!r}") from e
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(blob):
            raise ModelFormatError(f"Model file truncated in tensor {entry['name']}")
        state[entry["name"]] = np.frombuffer(blob, dtype="<f8", count=nbytes // 8, offset=offset).reshape(shape)
        offset += nbytes
    if offset != len(blob):
        raise ModelFormatError(f"{len(blob) - offset} unexpected trailing bytes in model file")

    try:
        model.load_state_dict(state)
    except ShapeError as e:
        raise ModelFormatError(str(e)) from e
    model.metadata = dict(manifest.get("metadata") or {})
    return model


def save_model(model: Model, path, metadata: Optional[Dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(model_to_bytes(model, metadata))
    logger.debug(f"Saved {model.architecture['kind']} model to {path}")
    return path


def load_model(path) -> Model:
    path = Path(path)
    if not path.exists():
        raise ModelFormatError(f"Model file not found: {path}")
    return model_from_bytes(path.read_bytes())
