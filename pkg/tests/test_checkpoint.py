import numpy as np
import pytest
import torch

from egan import checkpoint as cp
from egan import dataset as ds
from egan import models, training


@pytest.fixture()
def stepped_state(tiny_config, small_batch):
    state = models.init_params(tiny_config, seed=8)
    training.train_step(state, small_batch, state.rng)
    return state


class TestRoundTrip:
    def test_bitwise_state_round_trip(self, stepped_state, tmp_path):
        path = cp.save_checkpoint(tmp_path / "ck", stepped_state, ds.SYNTHETIC_SCHEMA, {"loss": 1.0})
        loaded = cp.load_checkpoint(path)
        assert loaded.state.step == stepped_state.step
        assert loaded.schema.names == ds.SYNTHETIC_SCHEMA.names
        for name in models.NETWORK_NAMES:
            net_a = stepped_state.networks()[name]
            net_b = loaded.state.networks()[name]
            for pa, pb in zip(net_a.parameters(), net_b.parameters()):
                assert torch.equal(pa, pb)
            opt_a, opt_b = stepped_state.optimizers[name], loaded.state.optimizers[name]
            for pa, pb in zip(net_a.parameters(), net_b.parameters()):
                sa, sb = opt_a.state[pa], opt_b.state[pb]
                assert torch.equal(sa["exp_avg"], sb["exp_avg"])
                assert torch.equal(sa["exp_avg_sq"], sb["exp_avg_sq"])
                assert float(sa["step"]) == float(sb["step"])
        assert loaded.state.rng.bit_generator.state == stepped_state.rng.bit_generator.state

    def test_save_is_byte_stable(self, stepped_state, tmp_path):
        a = cp.save_checkpoint(tmp_path / "a", stepped_state, ds.SYNTHETIC_SCHEMA)
        b = cp.save_checkpoint(tmp_path / "b", stepped_state, ds.SYNTHETIC_SCHEMA)
        for file_a in sorted(a.iterdir()):
            assert file_a.read_bytes() == (b / file_a.name).read_bytes()

    def test_loaded_state_continues_identically(self, tiny_config, small_batch, tmp_path):
        state = models.init_params(tiny_config, seed=8)
        training.train_step(state, small_batch, state.rng)
        path = cp.save_checkpoint(tmp_path / "ck", state, ds.SYNTHETIC_SCHEMA)
        loaded = cp.load_checkpoint(path).state
        metrics_a = training.train_step(state, small_batch, state.rng)
        metrics_b = training.train_step(loaded, small_batch, loaded.rng)
        assert metrics_a.loss_generator_total == metrics_b.loss_generator_total
        assert metrics_a.loss_connection == metrics_b.loss_connection


class TestResolution:
    def test_resolve_latest_from_run_dir(self, stepped_state, tmp_path):
        target = cp.write_numbered_checkpoint(tmp_path, stepped_state, ds.SYNTHETIC_SCHEMA)
        assert cp.resolve_latest(tmp_path) == target
        assert cp.resolve_latest(target) == target
        assert cp.resolve_latest(tmp_path / "checkpoints") == target

    def test_missing_checkpoint_raises(self, tmp_path):
        with pytest.raises(cp.CheckpointError):
            cp.resolve_latest(tmp_path)

    def test_corrupt_blob_rejected(self, stepped_state, tmp_path):
        path = cp.save_checkpoint(tmp_path / "ck", stepped_state, ds.SYNTHETIC_SCHEMA)
        (path / "generator.blob").write_bytes(b"not a blob")
        with pytest.raises(cp.CheckpointError):
            cp.load_checkpoint(path)

    def test_checkpoint_id_tracks_content(self, stepped_state, tiny_config, tmp_path):
        a = cp.save_checkpoint(tmp_path / "a", stepped_state, ds.SYNTHETIC_SCHEMA)
        other = models.init_params(tiny_config, seed=99)
        b = cp.save_checkpoint(tmp_path / "b", other, ds.SYNTHETIC_SCHEMA)
        assert cp.checkpoint_id(a) != cp.checkpoint_id(b)
        assert cp.checkpoint_id(a) == cp.load_checkpoint(a).checkpoint_id
