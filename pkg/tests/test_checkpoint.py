from pathlib import Path
from typing import Dict

import numpy as np
import pytest

from agri.flooddamage.checkpoint import (
    CHECKPOINT_MAGIC,
    decode_state,
    encode_state,
    load_into,
    read_checkpoint,
    write_checkpoint,
)
from agri.flooddamage.errors import CheckpointError, InputFileError
from agri.flooddamage.nn import Conv2d


def test_encode_layout():
    state = {"w": np.arange(6, dtype=np.float32).reshape(2, 3)}

    encoded = encode_state(state)

    # magic, count, name length, name, rank, two dims, six values
    assert encoded[:8] == CHECKPOINT_MAGIC
    assert len(encoded) == 8 + 4 + 2 + 1 + 1 + 2 * 4 + 6 * 4


def test_decode_restores_names_order_and_values():
    state = {
        "head.weight": np.random.default_rng(0).random((4, 1, 3, 3)).astype(np.float32),
        "head.bias": np.zeros(4, dtype=np.float32),
        "scale": np.array(0.5, dtype=np.float32),
    }

    decoded = decode_state(encode_state(state))

    assert list(decoded) == list(state)
    for name, value in state.items():
        assert decoded[name].shape == value.shape
        assert np.array_equal(decoded[name], value)


@pytest.mark.parametrize("seed", range(20))
def test_random_states_round_trip(seed: int):
    rng = np.random.default_rng(seed)
    state: Dict[str, np.ndarray] = {}
    for index in range(int(rng.integers(1, 6))):
        rank = int(rng.integers(0, 5))
        shape = tuple(int(v) for v in rng.integers(1, 5, size=rank))
        values = np.asarray(rng.standard_normal(shape), dtype=np.float32)
        state[f"layer{index}.param{seed}"] = values

    encoded = encode_state(state)
    decoded = decode_state(encoded)

    assert list(decoded) == list(state)
    for name, value in state.items():
        assert decoded[name].shape == value.shape
        assert decoded[name].tobytes() == value.tobytes()
    assert encode_state(decoded) == encoded


def test_corrupted_checkpoints():
    encoded = encode_state({"w": np.ones((3, 3), dtype=np.float32)})

    with pytest.raises(CheckpointError):
        decode_state(b"FLRASTR1" + encoded[8:])
    with pytest.raises(CheckpointError):
        decode_state(encoded[:-4])
    with pytest.raises(CheckpointError):
        decode_state(encoded[:14])


def test_file_round_trip_into_a_model(tmp_path: Path):
    source = Conv2d(2, 3, rng=np.random.default_rng(1))
    target = Conv2d(2, 3, rng=np.random.default_rng(2))
    path = tmp_path / "model.ckpt"

    write_checkpoint(source.state_dict(), path)
    load_into(target, path)

    assert np.array_equal(target.weight.data, source.weight.data)
    assert list(read_checkpoint(path)) == ["weight", "bias"]

    with pytest.raises(CheckpointError):
        load_into(Conv2d(2, 4), path)
    with pytest.raises(InputFileError):
        read_checkpoint(tmp_path / "missing.ckpt")
