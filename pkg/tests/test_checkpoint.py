import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from dpfnet.checkpoint import (CheckpointError, CheckpointShapeError, CheckpointVersionError, config_from_entries,
                               decode_entries, encode_entries, load_checkpoint, load_model_state, read_entries,
                               save_checkpoint, write_entries)
from dpfnet.config import Config
from dpfnet.model import DPFNet
from dpfnet.tensor import Tensor
from dpfnet.train import AdamState


def tiny(**kw):
    return Config.smoke(pfm_width=2, mdcm_width=4, afm_width=4, **kw)


class TestContainer:
    @settings(max_examples=30, deadline=None)
    @given(arr=arrays(np.float32, array_shapes(min_dims=0, max_dims=4, max_side=5),
                      elements=st.floats(-1e6, 1e6, width=32)))
    def test_round_trip_bitwise(self, arr):
        out = decode_entries(encode_entries({"a.b": arr}))
        assert out["a.b"].shape == arr.shape
        assert out["a.b"].tobytes() == arr.tobytes()

    def test_header_layout(self):
        buf = encode_entries({"w": np.ones((2, 3), dtype=np.float32)})
        assert buf[:4] == b"DPFN"
        assert struct.unpack("<II", buf[4:12]) == (1, 1)
        assert struct.unpack("<I", buf[12:16]) == (1,)
        assert buf[16:17] == b"w"
        assert struct.unpack("<I2Q", buf[17:37]) == (2, 2, 3)
        assert len(buf) == 37 + 6 * 4

    def test_bad_magic(self, tmp_path):
        buf = bytearray(encode_entries({"x": np.zeros(3, dtype=np.float32)}))
        buf[:4] = b"XXXX"
        (tmp_path / "bad.dpfn").write_bytes(bytes(buf))
        with pytest.raises(CheckpointVersionError, match="magic"):
            read_entries(tmp_path / "bad.dpfn")

    def test_bad_version(self):
        buf = bytearray(encode_entries({}))
        buf[4:8] = struct.pack("<I", 9)
        with pytest.raises(CheckpointVersionError, match="version 9"):
            decode_entries(bytes(buf))

    @pytest.mark.parametrize("cut", [3, 10, 20, 30])
    def test_truncated(self, cut):
        buf = encode_entries({"weight": np.arange(6, dtype=np.float32).reshape(2, 3)})
        with pytest.raises(CheckpointError):
            decode_entries(buf[:len(buf) - cut])

    def test_trailing_bytes(self):
        with pytest.raises(CheckpointError, match="trailing"):
            decode_entries(encode_entries({}) + b"\0")

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        write_entries(tmp_path / "c.dpfn", {"x": np.ones(2, dtype=np.float32)})
        assert [p.name for p in tmp_path.iterdir()] == ["c.dpfn"]


class TestModelCheckpoint:
    def test_save_load_forward_bitwise(self, tmp_path, rng):
        cfg = tiny(seed=3)
        model = DPFNet(cfg)
        for p in model.parameters():
            p.data += 0.01 * rng.standard_normal(p.shape).astype(np.float32)
        x = Tensor(rng.random((1, 3, 16, 16)).astype(np.float32))
        before = model(x).data
        save_checkpoint(tmp_path / "m.dpfn", model, cfg, epoch=7)
        loaded, cfg2, entries = load_checkpoint(tmp_path / "m.dpfn")
        assert cfg2.mdcm_width == 4 and cfg2.pfm_width == 2 and cfg2.seed == 3
        assert int(entries["meta.epoch"]) == 7
        for name, p in model.named_parameters().items():
            assert loaded.named_parameters()[name].data.tobytes() == p.data.tobytes()
        assert loaded(x).data.tobytes() == before.tobytes()

    def test_optimizer_state_round_trip(self, tmp_path, rng):
        cfg = tiny()
        model = DPFNet(cfg)
        params = model.named_parameters()
        adam = AdamState.fresh(params)
        adam.t = 5
        for k in adam.m:
            adam.m[k] = rng.standard_normal(params[k].shape).astype(np.float32)
            adam.v[k] = rng.random(params[k].shape).astype(np.float32)
        save_checkpoint(tmp_path / "m.dpfn", model, cfg, adam, epoch=1)
        back = AdamState.from_entries(read_entries(tmp_path / "m.dpfn"), params)
        assert back.t == 5
        for k in adam.m:
            assert back.m[k].tobytes() == adam.m[k].tobytes()
            assert back.v[k].tobytes() == adam.v[k].tobytes()

    @pytest.mark.parametrize("ablation", ["full", "mdcm_pfm", "mdcm_only"])
    def test_architecture_recovered(self, tmp_path, ablation):
        cfg = tiny(ablation=ablation, rb_activation="leaky_relu", leaky_slope=0.1)
        save_checkpoint(tmp_path / "m.dpfn", DPFNet(cfg), cfg)
        got = config_from_entries(read_entries(tmp_path / "m.dpfn"))
        assert (got.ablation, got.rb_activation, got.leaky_slope) == (ablation, "leaky_relu", 0.1)

    def test_mdcm_only_into_full_names_missing_group(self, tmp_path):
        cfg = tiny(ablation="mdcm_only")
        save_checkpoint(tmp_path / "m.dpfn", DPFNet(cfg), cfg)
        full = DPFNet(tiny(ablation="full"))
        with pytest.raises(CheckpointShapeError, match=r"missing parameter group\(s\): pfm"):
            load_model_state(full, read_entries(tmp_path / "m.dpfn"))

    def test_width_mismatch(self, tmp_path):
        cfg = tiny()
        save_checkpoint(tmp_path / "m.dpfn", DPFNet(cfg), cfg)
        other = DPFNet(tiny().replace(mdcm_width=6))
        with pytest.raises(CheckpointShapeError, match="shape mismatch for mdcm"):
            load_model_state(other, read_entries(tmp_path / "m.dpfn"))

    def test_missing_meta(self, tmp_path):
        write_entries(tmp_path / "m.dpfn", {"model.x": np.zeros(1, dtype=np.float32)})
        with pytest.raises(CheckpointError, match="architecture entry"):
            load_checkpoint(tmp_path / "m.dpfn")
