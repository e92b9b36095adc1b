"""
Versioned checkpoint container for the denoising networks.

Layout::

    bytes 0-3       magic b"VCKP"
    bytes 4-7       u32 LE format version (1)
    bytes 8-11      u32 LE header length H
    bytes 12-12+H   UTF-8 JSON header with keys
                    model_name, cfg_class, cfg, manifest, tag, extra
    payload         for every manifest entry [name, shape], the weight values as
                    little-endian float32 in C order

Loading rebuilds the network from the stored config and refuses to continue if the
manifest does not match the weights of the rebuilt network.
"""
import dataclasses
import json
import logging
import struct
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import tensorflow as tf

from ..errors import FormatError
from .config import cfg_from_dict
from .registry import is_model, model_class, model_class_by_cfg

__all__ = [
    "CHECKPOINT_VERSION",
    "load_checkpoint",
    "save_checkpoint",
    "weight_manifest",
]

CHECKPOINT_MAGIC = b"VCKP"
CHECKPOINT_VERSION = 1
_PREFIX = struct.Struct("<4sII")


def _strip_prefix(name):
    """
    The model name prefix is made unique by TF, i.e., two networks will have variables
    'asmm_u_net/var:0' and 'asmm_u_net_1/var:0'. Here we return 'var:0'.
    """
    return name.split("/", 1)[-1]


def _ensure_built(model: tf.keras.Model):
    if not model.built:
        model(model.dummy_inputs)


def weight_manifest(model: tf.keras.Model):
    """List of ``(name, shape)`` pairs of all weights in creation order."""
    _ensure_built(model)
    return [
        (_strip_prefix(w.name), tuple(int(d) for d in w.shape)) for w in model.weights
    ]


def save_checkpoint(
    model: tf.keras.Model,
    path: Union[str, Path],
    tag: str = "",
    extra: Optional[dict] = None,
):
    """
    Writes all weights of ``model`` and its config to ``path``.

    Args:
        model: A registered network with a ``cfg`` attribute.
        path: Output file, parent directories are created.
        tag: Free-form version tag, e.g., the training step.
        extra: JSON-serializable metadata stored in the header, e.g., the noise
            schedule the network was trained with.
    """
    _ensure_built(model)
    weights = model.weights
    for w in weights:
        if not np.all(np.isfinite(w.numpy())):
            raise ValueError(f"Weight {w.name} has non-finite values.")

    header = {
        "model_name": model.cfg.name,
        "cfg_class": type(model.cfg).__name__,
        "cfg": dataclasses.asdict(model.cfg),
        "manifest": [[name, list(shape)] for name, shape in weight_manifest(model)],
        "tag": tag,
        "extra": extra or {},
    }
    header_bytes = json.dumps(header).encode("utf-8")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_PREFIX.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(header_bytes)))
        f.write(header_bytes)
        for w in weights:
            f.write(np.ascontiguousarray(w.numpy(), dtype="<f4").tobytes(order="C"))
    logging.info(f"Saved checkpoint {path} ({len(weights)} weights, tag={tag!r}).")


def _read_header(buffer: bytes, path) -> Tuple[dict, int]:
    if len(buffer) < _PREFIX.size:
        raise FormatError(f"{path}: file too short for a checkpoint.")
    magic, version, header_len = _PREFIX.unpack_from(buffer)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}.")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}.")
    end = _PREFIX.size + header_len
    if len(buffer) < end:
        raise FormatError(f"{path}: truncated header.")
    try:
        header = json.loads(buffer[_PREFIX.size : end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: cannot parse header: {e}") from e
    for key in ("model_name", "cfg_class", "cfg", "manifest"):
        if key not in header:
            raise FormatError(f"{path}: header is missing `{key}`.")
    return header, end


def load_checkpoint(path: Union[str, Path]) -> Tuple[tf.keras.Model, dict]:
    """
    Rebuilds the network stored in ``path``.

    Returns:
        Tuple ``(model, header)``, where ``header`` contains ``tag`` and ``extra``.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Checkpoint {path} does not exist.")
    buffer = path.read_bytes()
    header, offset = _read_header(buffer, path)

    if is_model(header["model_name"]):
        cls = model_class(header["model_name"])
    else:
        cls = model_class_by_cfg(header["cfg_class"])
    if cls.cfg_class.__name__ != header["cfg_class"]:
        raise FormatError(
            f"{path}: model {header['model_name']} expects config "
            f"{cls.cfg_class.__name__}, header has {header['cfg_class']}."
        )
    try:
        cfg = cfg_from_dict(cls.cfg_class, header["cfg"])
    except TypeError as e:
        raise FormatError(f"{path}: invalid model config: {e}") from e
    model = cls(cfg)

    manifest = [(name, tuple(shape)) for name, shape in header["manifest"]]
    expected = weight_manifest(model)
    if manifest != expected:
        stored, built = set(manifest), set(expected)
        raise FormatError(
            f"{path}: weight manifest does not match model {cfg.name}. "
            f"Only in checkpoint: {sorted(stored - built)[:5]}, "
            f"only in model: {sorted(built - stored)[:5]}."
        )

    sizes = [int(np.prod(shape)) for _, shape in manifest]
    if len(buffer) - offset != 4 * sum(sizes):
        raise FormatError(
            f"{path}: payload has {len(buffer) - offset} bytes, "
            f"expected {4 * sum(sizes)}."
        )
    weight_value_tuples = []
    for w, (_, shape), size in zip(model.weights, manifest, sizes):
        value = np.frombuffer(buffer, dtype="<f4", count=size, offset=offset)
        offset += 4 * size
        if not np.all(np.isfinite(value)):
            raise FormatError(f"{path}: weight {w.name} has non-finite values.")
        weight_value_tuples.append((w, value.reshape(shape)))
    tf.keras.backend.batch_set_value(weight_value_tuples)

    tag = header.get("tag", "")
    logging.info(f"Loaded checkpoint {path} (model {cfg.name}, tag={tag!r}).")
    return model, header
