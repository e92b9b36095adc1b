import json
import struct
import tempfile
from pathlib import Path

import numpy as np
import pytest

from cascade_volcomp import create_model
from cascade_volcomp.errors import FormatError
from cascade_volcomp.models import (
    load_checkpoint,
    randomize_weights,
    save_checkpoint,
    weight_manifest,
)


def _header(path):
    data = Path(path).read_bytes()
    _, _, length = struct.unpack_from("<4sII", data)
    return json.loads(data[12 : 12 + length]), data


@pytest.mark.parametrize("model_name", ["asmm_tiny", "sr_tiny"])
@pytest.mark.timeout(60)
def test_save_load_checkpoint(model_name):
    model = create_model(model_name)
    randomize_weights(model, seed=1)
    extra = {"schedule": {"beta_start": 1e-4, "beta_end": 2e-2, "timesteps": 10}}
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "model.vckp"
        save_checkpoint(model, path, tag="step-7", extra=extra)
        loaded, header = load_checkpoint(path)

    assert loaded.cfg == model.cfg
    assert header["tag"] == "step-7"
    assert header["extra"] == extra
    assert weight_manifest(loaded) == weight_manifest(model)
    for w_a, w_b in zip(model.weights, loaded.weights):
        assert np.array_equal(w_a.numpy(), w_b.numpy())

    res = model(model.dummy_inputs).numpy()
    res_loaded = loaded(model.dummy_inputs).numpy()
    assert np.array_equal(res, res_loaded)


@pytest.mark.timeout(60)
def test_create_model_from_checkpoint():
    model = create_model("sr_tiny")
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "model.vckp"
        save_checkpoint(model, path)
        loaded = create_model("sr_tiny", model_path=str(path))
        assert loaded.cfg == model.cfg
        with pytest.raises(ValueError):
            create_model("sr_tiny", model_path=str(path), low_dims=(8, 8, 8))


@pytest.mark.timeout(60)
def test_checkpoint_of_modified_config():
    """Overridden configs are rebuilt via their config class."""
    model = create_model("asmm_tiny", in_dims=(8, 8, 4))
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "model.vckp"
        save_checkpoint(model, path)
        loaded, _ = load_checkpoint(path)
    assert loaded.cfg.in_dims == (8, 8, 4)


@pytest.mark.timeout(60)
def test_checkpoint_errors():
    model = create_model("sr_tiny")
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "model.vckp"
        with pytest.raises(FileNotFoundError):
            load_checkpoint(path)

        save_checkpoint(model, path)
        header, data = _header(path)

        path.write_bytes(b"XXXX" + data[4:])
        with pytest.raises(FormatError):
            load_checkpoint(path)

        path.write_bytes(data[:-4])
        with pytest.raises(FormatError):
            load_checkpoint(path)

        # Manifest that does not match the rebuilt network
        header["manifest"] = header["manifest"][:-1]
        header_bytes = json.dumps(header).encode("utf-8")
        payload = data[12 + struct.unpack_from("<4sII", data)[2] :]
        path.write_bytes(
            struct.pack("<4sII", b"VCKP", 1, len(header_bytes)) + header_bytes + payload
        )
        with pytest.raises(FormatError):
            load_checkpoint(path)

        model.weights[0].assign(np.full(model.weights[0].shape, np.nan))
        with pytest.raises(ValueError):
            save_checkpoint(model, path)
