import json

import numpy as np
import pytest

from cmtpan.checkpoint import load_checkpoint, save_checkpoint
from cmtpan.data import IntegrityError
from cmtpan.model import init_params, predict, toy_config
from cmtpan.rng import Rng


def perturbed(cfg):
    params = init_params(cfg, 1)
    rng = Rng(2)
    for p in params.values():
        p.data = p.data + rng.normal(p.shape, 0.1)
    return params


def test_round_trip_is_bit_exact(tmp_path):
    cfg = toy_config(variant="v3")
    params = perturbed(cfg)
    save_checkpoint(params, cfg, tmp_path, seed=7, extra={"note": "x"})
    back, cfg2, manifest = load_checkpoint(tmp_path)
    assert cfg2 == cfg and manifest["seed"] == 7 and manifest["note"] == "x"
    assert list(back) == list(params)
    assert all(np.array_equal(back[k].data, params[k].data) for k in params)
    rng = Rng(3)
    pan, lrms = rng.uniform((8, 8, 1)), rng.uniform((2, 2, 4))
    assert np.array_equal(predict(pan, lrms, back, cfg2), predict(pan, lrms, params, cfg))


def test_entries_are_f64(tmp_path):
    cfg = toy_config()
    save_checkpoint(init_params(cfg), cfg, tmp_path, seed=0)
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["kind"] == "checkpoint"
    e = m["entries"][0]
    assert e["encoding"] == "f64le" and e["length"] == 8 * int(np.prod(e["shape"]))


def test_config_mismatch_is_integrity_error(tmp_path):
    cfg = toy_config()
    save_checkpoint(init_params(cfg), cfg, tmp_path, seed=0)
    m = json.loads((tmp_path / "manifest.json").read_text())
    m["config"]["cmab_blocks"] = 2
    (tmp_path / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(IntegrityError, match="disagree"):
        load_checkpoint(tmp_path)


def test_shape_mismatch_and_truncation(tmp_path):
    cfg = toy_config()
    save_checkpoint(init_params(cfg), cfg, tmp_path, seed=0)
    m = json.loads((tmp_path / "manifest.json").read_text())
    m["entries"][0]["shape"] = [1, 1, 1, 8]
    (tmp_path / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(IntegrityError):
        load_checkpoint(tmp_path)
    save_checkpoint(init_params(cfg), cfg, tmp_path, seed=0)
    f = tmp_path / "aggregate.out.bias.f64"
    f.write_bytes(f.read_bytes()[:8])
    with pytest.raises(IntegrityError, match="aggregate.out.bias"):
        load_checkpoint(tmp_path)


def test_dataset_manifest_is_not_a_checkpoint(tmp_path):
    from cmtpan.data import save_dataset, synth_dataset
    save_dataset(synth_dataset(1, 16, 4, 4, seed=0), tmp_path)
    with pytest.raises(IntegrityError):
        load_checkpoint(tmp_path)
