"""
FLCKPT01 checkpoint container.

Layout (little-endian):
    magic   8 bytes  b"FLCKPT01"
    count   u32      number of parameters
    then for every parameter, in model order:
        name length  u16
        name         UTF-8 bytes
        rank         u8
        dims         rank x u32
        values       prod(dims) x f32, C order
"""

import logging
import struct
from pathlib import Path
from typing import Dict

import numpy as np
from rxn.utilities.files import PathLike

from .errors import CheckpointError
from .nn import Module, StateDict
from .utils import atomic_write_bytes, ensure_input_file

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

CHECKPOINT_MAGIC = b"FLCKPT01"


def encode_state(state: StateDict) -> bytes:
    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", len(state))]
    for name, value in state.items():
        encoded_name = name.encode("utf-8")
        value = np.asarray(value)
        chunks.append(struct.pack("<H", len(encoded_name)))
        chunks.append(encoded_name)
        chunks.append(struct.pack("<B", value.ndim))
        chunks.append(struct.pack(f"<{value.ndim}I", *value.shape))
        chunks.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    return b"".join(chunks)


def decode_state(buffer: bytes) -> StateDict:
    """
    Raises:
        CheckpointError: for a bad magic or a truncated buffer.
    """
    if buffer[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(
            f"Bad checkpoint magic: {buffer[: len(CHECKPOINT_MAGIC)]!r}"
        )
    offset = len(CHECKPOINT_MAGIC)
    try:
        (count,) = struct.unpack_from("<I", buffer, offset)
        offset += 4
        state: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_length,) = struct.unpack_from("<H", buffer, offset)
            offset += 2
            name = buffer[offset : offset + name_length].decode("utf-8")
            offset += name_length
            (rank,) = struct.unpack_from("<B", buffer, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}I", buffer, offset)
            offset += 4 * rank
            size = int(np.prod(dims, dtype=np.int64))
            if offset + 4 * size > len(buffer):
                raise CheckpointError(f"Checkpoint truncated in parameter {name}.")
            values = np.frombuffer(buffer, dtype="<f4", count=size, offset=offset)
            offset += 4 * size
            state[name] = values.astype(np.float32).reshape(dims)
    except (struct.error, UnicodeDecodeError) as e:
        raise CheckpointError(f"Corrupted checkpoint: {e}") from e
    return state


def write_checkpoint(state: StateDict, path: PathLike) -> None:
    atomic_write_bytes(Path(path), encode_state(state))
    logger.info(f'Saved checkpoint with {len(state)} parameters to "{path}".')


def read_checkpoint(path: PathLike) -> StateDict:
    path = ensure_input_file(path)
    return decode_state(path.read_bytes())


def load_into(model: Module, path: PathLike) -> Module:
    """Read a checkpoint and load it into a freshly built model."""
    model.load_state_dict(read_checkpoint(path))
    logger.debug(f'Loaded checkpoint "{path}".')
    return model
