import json

import numpy as np
import pytest

from msformer.checkpoint import load_params, save_params
from msformer.errors import ContractError


def test_round_trip_is_bitwise(tmp_path, rng):
    state = {"embed.weight": rng.normal(size=(3, 8)), "head.bias": np.array([np.pi]), "x": rng.normal(size=(2, 2, 2))}
    save_params(tmp_path / "ck", state)
    back = load_params(tmp_path / "ck")
    assert set(back) == set(state)
    for k in state:
        assert back[k].dtype == np.float64
        assert back[k].tobytes() == state[k].tobytes()


def test_manifest_layout(tmp_path):
    save_params(tmp_path, {"a": np.ones((2, 3)), "b": np.zeros(4)})
    man = json.loads((tmp_path / "manifest.json").read_text())
    entries = {e["name"]: e for e in man["params"]}
    assert entries["a"]["shape"] == [2, 3] and entries["a"]["dtype"] == "float64-le"
    assert (entries["a"]["offset"], entries["b"]["offset"]) == (0, 6 * 8)
    assert man["total_bytes"] == 80
    assert (tmp_path / "params.bin").stat().st_size == 10 * 8


def test_truncated_blob_rejected(tmp_path):
    save_params(tmp_path, {"a": np.ones(4)})
    blob = tmp_path / "params.bin"
    blob.write_bytes(blob.read_bytes()[:-8])
    with pytest.raises(ContractError, match="bytes"):
        load_params(tmp_path)


def test_missing_manifest(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_params(tmp_path)
