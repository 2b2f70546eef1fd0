import struct

import numpy as np
import pytest

from ovpiano.model.config import MICRO_CONFIG
from ovpiano.model.ops import CorruptWeightsError
from ovpiano.model.weights import (CorruptFileError, WeightSchemaError,
                                   load_weights, save_weights, schema)
from ovpiano.training import he_init


@pytest.fixture()
def micro_bytes():
    return save_weights(he_init(MICRO_CONFIG, seed=0))


def test_round_trip_byte_exact(micro_bytes):
    assert save_weights(load_weights(micro_bytes)) == micro_bytes


def test_loaded_arrays_match(micro_bytes):
    original = he_init(MICRO_CONFIG, seed=0)
    loaded = load_weights(micro_bytes)
    assert set(loaded.arrays) == set(original.arrays)
    for name in original.arrays:
        assert np.array_equal(loaded.arrays[name], original.arrays[name])
    assert loaded.config == MICRO_CONFIG


def test_truncated_file(micro_bytes):
    with pytest.raises(CorruptFileError):
        load_weights(micro_bytes[:len(micro_bytes) // 2])
    with pytest.raises(CorruptFileError):
        load_weights(micro_bytes[:10])


def test_bad_magic(micro_bytes):
    with pytest.raises(CorruptFileError, match="magic"):
        load_weights(b"NOPE" + micro_bytes[4:])


def test_crc_mismatch(micro_bytes):
    corrupt = bytearray(micro_bytes)
    corrupt[50] ^= 0xFF
    with pytest.raises(CorruptFileError, match="CRC"):
        load_weights(bytes(corrupt))


def test_bad_version(micro_bytes):
    import zlib
    data = bytearray(micro_bytes[:-4])
    struct.pack_into("<I", data, 4, 9)
    data += struct.pack("<I", zlib.crc32(bytes(data)))
    with pytest.raises(CorruptFileError, match="version"):
        load_weights(bytes(data))


def _rebuild(weights):
    return load_weights(save_weights(weights), validate=False)


def test_misshaped_tensor_names_it():
    weights = he_init(MICRO_CONFIG, seed=1)
    name = "stage0.collapse.weight"
    weights.arrays[name] = weights.arrays[name][:, :, :1, :]
    with pytest.raises(WeightSchemaError, match="collapse"):
        _rebuild(weights).validate()


def test_missing_and_extra_tensor_names_listed():
    weights = he_init(MICRO_CONFIG, seed=2)
    del weights.arrays["stem.depth.bias"]
    weights.arrays["stem.bogus"] = np.zeros(3, dtype=np.float32)
    weights.layout = ["__config__"] + list(weights.arrays)
    with pytest.raises(WeightSchemaError) as err:
        _rebuild(weights).validate()
    assert "stem.depth.bias" in str(err.value)
    assert "stem.bogus" in str(err.value)


def test_nonpositive_running_variance_rejected():
    weights = he_init(MICRO_CONFIG, seed=3)
    weights.arrays["stem.bn_in.var"][0] = 0.0
    with pytest.raises(CorruptWeightsError):
        _rebuild(weights).validate()


def test_schema_covers_every_cam_branch():
    names = {s.name for s in schema(MICRO_CONFIG)}
    assert "stem.cam0.branch0.weight" in names
    assert "stem.cam0.att.mlp1.bias" in names
    assert "velocity.sbn_out.var" in names
    assert "stage0.mlp2.weight" in names


def test_he_init_statistics():
    weights = he_init(MICRO_CONFIG, seed=4)
    # attention gate biases start at exactly 1
    for s in schema(MICRO_CONFIG):
        if s.role == "att_bias":
            assert np.all(weights.arrays[s.name] == 1.0)
    # determinism
    again = he_init(MICRO_CONFIG, seed=4)
    assert save_weights(weights) == save_weights(again)
    assert save_weights(weights) != save_weights(he_init(MICRO_CONFIG, 5))


def test_he_init_variance_large_layer():
    from ovpiano.model.config import ModelConfig
    cfg = ModelConfig()
    weights = he_init(cfg, seed=6)
    arr = weights.arrays["stage0.collapse.weight"]   # 200*12*88*3 elements
    spec = next(s for s in schema(cfg)
                if s.name == "stage0.collapse.weight")
    assert arr.size > 10_000
    assert np.var(arr) == pytest.approx(2.0 / spec.fan_in, rel=0.10)


def test_weights_get_missing_name():
    weights = he_init(MICRO_CONFIG, seed=0)
    with pytest.raises(WeightSchemaError, match="nothere"):
        weights.get("nothere")


def test_config_round_trip_via_container(micro_bytes):
    loaded = load_weights(micro_bytes)
    assert loaded.config.stem_cam_kernel == (3, 3)
    assert loaded.config.stage_cam_dilations == (1, 2)


def test_duplicate_tensor_rejected():
    weights = he_init(MICRO_CONFIG, seed=0)
    weights.layout = weights.layout + ["stem.depth.bias"]
    with pytest.raises(WeightSchemaError, match="duplicate"):
        load_weights(save_weights(weights))
