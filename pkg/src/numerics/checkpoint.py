"""PCKT1 parameter checkpoints.

Layout: the magic ``PCKT1`` followed, per tensor, by the name length (u32
LE), the UTF-8 name, the rank (u32 LE), each dimension (u64 LE) and the
values as little-endian f64 in row-major order. Round trips are bit-exact.
"""

import logging
import struct
from pathlib import Path
from typing import Dict, Union

import numpy as np

from ..errors import CheckpointError
from .params import ParamSet

logger = logging.getLogger(__name__)

MAGIC = b"PCKT1"


def write_tensors(path: Union[str, Path], tensors: Dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chunks = [MAGIC]
    for name, values in tensors.items():
        raw_name = name.encode("utf-8")
        values = np.asarray(values, dtype=np.float64)
        chunks.append(struct.pack("<I", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack("<I", values.ndim))
        chunks.append(struct.pack(f"<{values.ndim}Q", *values.shape))
        chunks.append(values.astype("<f8").tobytes(order="C"))
    path.write_bytes(b"".join(chunks))
    logger.debug("wrote %d tensors to %s", len(tensors), path)
    return path


def read_tensors(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if not blob.startswith(MAGIC):
        raise CheckpointError(f"{path}: missing PCKT1 magic")
    pos = len(MAGIC)
    tensors: Dict[str, np.ndarray] = {}
    try:
        while pos < len(blob):
            (name_len,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}Q", blob, pos)
            pos += 8 * rank
            count = int(np.prod(shape)) if rank else 1
            values = np.frombuffer(blob, dtype="<f8", count=count, offset=pos)
            pos += 8 * count
            tensors[name] = values.astype(np.float64).reshape(shape)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({exc})") from exc
    return tensors


def save_params(path: Union[str, Path], params: ParamSet) -> Path:
    return write_tensors(path, {name: t.data for name, t in params.items()})


def load_params(path: Union[str, Path], params: ParamSet) -> ParamSet:
    """Overwrite ``params`` in place with the values stored at ``path``."""
    stored = read_tensors(path)
    missing = [n for n in params.names() if n not in stored]
    if missing:
        raise CheckpointError(f"{path}: missing parameters {missing[:5]}")
    for name in params.names():
        try:
            params.assign(name, stored[name])
        except ValueError as exc:
            raise CheckpointError(f"{path}: {exc}") from exc
    return params
