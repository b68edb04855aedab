import json
import zipfile

import numpy as np
import pytest

from lslp.checkpoint import (CheckpointVersionError, CorruptCheckpointError, LevelMismatchError, load_checkpoint,
                             save_checkpoint)
from lslp.nets import init_decoder, init_encoder, init_generator


@pytest.fixture
def networks():
    return {"encoder": init_encoder(16, 8, seed=1), "decoder": init_decoder(8, 16, seed=2),
            "generator": init_generator(8, True, noise_dim=4, seed=3)}


def test_roundtrip_bitwise(tmp_path, networks):
    path = save_checkpoint(networks, tmp_path / "a.ckpt", level=1, metadata={"epoch": 7})
    loaded, header = load_checkpoint(path, expected_level=1)
    assert header["level"] == 1 and header["metadata"] == {"epoch": 7}
    for name, params in networks.items():
        back = loaded[name]
        assert back.kind == params.kind and back.arch == params.arch
        for t in params.tensors:
            assert back.tensors[t].tobytes() == params.tensors[t].tobytes()


def test_identical_params_identical_bytes(tmp_path, networks):
    a = save_checkpoint(networks, tmp_path / "a.ckpt", level=0)
    b = save_checkpoint(networks, tmp_path / "b.ckpt", level=0)
    assert a.read_bytes() == b.read_bytes()


def test_resave_is_stable(tmp_path, networks):
    a = save_checkpoint(networks, tmp_path / "a.ckpt", level=2)
    loaded, header = load_checkpoint(a)
    b = save_checkpoint(loaded, tmp_path / "b.ckpt", level=2)
    assert a.read_bytes() == b.read_bytes()


def test_level_mismatch(tmp_path, networks):
    path = save_checkpoint(networks, tmp_path / "a.ckpt", level=1)
    with pytest.raises(LevelMismatchError, match="expected level 2"):
        load_checkpoint(path, expected_level=2)


def _rewrite(path, member, transform):
    with zipfile.ZipFile(path) as zf:
        items = {n: zf.read(n) for n in zf.namelist()}
    items[member] = transform(items[member])
    with zipfile.ZipFile(path, "w") as zf:
        for n, data in items.items():
            zf.writestr(n, data)


def test_flipped_payload_byte_detected(tmp_path, networks):
    path = save_checkpoint(networks, tmp_path / "a.ckpt", level=0)
    _rewrite(path, "tensors/encoder/W0.bin", lambda d: bytes([d[0] ^ 1]) + d[1:])
    with pytest.raises(CorruptCheckpointError, match="checksum"):
        load_checkpoint(path)


def test_truncated_file(tmp_path, networks):
    path = save_checkpoint(networks, tmp_path / "a.ckpt", level=0)
    path.write_bytes(path.read_bytes()[:100])
    with pytest.raises(CorruptCheckpointError):
        load_checkpoint(path)


def test_version_mismatch(tmp_path, networks):
    path = save_checkpoint(networks, tmp_path / "a.ckpt", level=0)

    def bump(data):
        h = json.loads(data)
        h["version"] = 99
        return json.dumps(h).encode()

    _rewrite(path, "header.json", bump)
    with pytest.raises(CheckpointVersionError, match="version 99"):
        load_checkpoint(path)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "none.ckpt")


def test_float64_params_stored_as_float32(tmp_path):
    enc = init_encoder(8, 4).astype(np.float64)
    loaded, _ = load_checkpoint(save_checkpoint({"encoder": enc}, tmp_path / "a.ckpt"))
    assert loaded["encoder"].dtype == np.float32
    assert np.array_equal(loaded["encoder"].tensors["W0"], enc.tensors["W0"].astype(np.float32))
