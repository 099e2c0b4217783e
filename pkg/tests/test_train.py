"""Tests for the optimizer, the plateau schedule, checkpoints and the training loop."""

from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np
import pytest

from ical.autograd.nn import Parameter
from ical.errors import CheckpointError, NumericError
from ical.models.ical import ICALModel
from ical.train import checkpoint
from ical.train.loss import LossToggles
from ical.train.optim import SGD, ReduceLROnPlateau
from ical.train.trainer import Trainer, TrainSettings


def param(*values):
    p = Parameter(np.array(values, dtype=np.float64))
    p.data = p.data.astype(np.float64)
    return p


class TestSGD:
    def test_zero_gradient_zero_decay(self):
        p = param(1.0, -2.0)
        p.grad = np.zeros(2)
        SGD([("p", p)], lr=0.1, momentum=0.9, weight_decay=0.0).step()
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_single_step(self):
        p = param(1.0)
        p.grad = np.array([1.0])
        SGD([("p", p)], lr=0.1, momentum=0.0, weight_decay=1e-4).step()
        assert p.data[0] == pytest.approx(1.0 - 0.1 * (1.0 + 1e-4))

    def test_momentum_accumulates(self):
        p = param(0.0)
        opt = SGD([("p", p)], lr=0.1, momentum=0.9, weight_decay=0.0)
        for _ in range(2):
            p.grad = np.array([1.0])
            opt.step()
        assert opt.velocity["p"][0] == pytest.approx(1.9)
        assert p.data[0] == pytest.approx(-0.1 - 0.19)

    def test_missing_gradient_is_zero(self):
        p = param(2.0)
        SGD([("p", p)], lr=0.5, momentum=0.0, weight_decay=0.0).step()
        assert p.data[0] == 2.0

    def test_non_finite_gradient_halts(self):
        good, bad = param(1.0), param(1.0)
        good.grad, bad.grad = np.array([1.0]), np.array([np.nan])
        with pytest.raises(NumericError, match="non-finite gradient for bad"):
            SGD([("good", good), ("bad", bad)], lr=0.1).step()
        assert good.data[0] == 1.0

    def test_state_round_trip(self):
        p = param(1.0, 2.0)
        opt = SGD([("p", p)])
        opt.velocity["p"][:] = [0.5, -0.5]
        other = SGD([("p", param(0.0, 0.0))])
        other.load_state_dict(opt.state_dict())
        np.testing.assert_array_equal(other.velocity["p"], [0.5, -0.5])

    def test_state_mismatch(self):
        with pytest.raises(CheckpointError, match="optimizer state for p"):
            SGD([("p", param(1.0))]).load_state_dict({})


class TestPlateau:
    def test_reduces_after_patience(self):
        opt = SGD([("p", param(1.0))], lr=0.08)
        scheduler = ReduceLROnPlateau(opt, factor=0.25, patience=3)
        assert [scheduler.step(0.5) for _ in range(4)] == [False, False, False, True]
        assert opt.lr == pytest.approx(0.02)

    def test_improvement_resets_counter(self):
        opt = SGD([("p", param(1.0))], lr=0.08)
        scheduler = ReduceLROnPlateau(opt, patience=3)
        for metric in (0.1, 0.1, 0.1, 0.2, 0.2, 0.2):
            scheduler.step(metric)
        assert opt.lr == 0.08

    def test_rate_only_decreases(self):
        opt = SGD([("p", param(1.0))], lr=0.08)
        scheduler = ReduceLROnPlateau(opt, patience=1)
        rates = [opt.lr]
        for metric in np.random.default_rng(0).random(30):
            scheduler.step(float(metric))
            rates.append(opt.lr)
        steps = np.array(rates[1:]) / np.array(rates[:-1])
        assert set(np.round(steps, 12)) <= {1.0, 0.25}


class TestCheckpoint:
    def test_round_trip(self, tmp_path, tiny_model, synth_vocab):
        opt = SGD(tiny_model.named_parameters())
        scheduler = ReduceLROnPlateau(opt)
        scheduler.step(0.5)
        opt.velocity["head.bias"][:] = 1.5
        checkpoint.save_checkpoint(tmp_path, checkpoint.LAST, tiny_model, opt, scheduler, epoch=4, preset="toy")

        fresh = ICALModel.build(tiny_model.config, len(synth_vocab), seed=99, dtype="float64")
        fresh_opt = SGD(fresh.named_parameters())
        fresh_scheduler = ReduceLROnPlateau(fresh_opt)
        meta = checkpoint.load_checkpoint(tmp_path, checkpoint.LAST, fresh, fresh_opt, fresh_scheduler)
        assert meta["epoch"] == 4 and meta["preset"] == "toy"
        assert fresh_scheduler.best == 0.5
        np.testing.assert_array_equal(fresh_opt.velocity["head.bias"], 1.5)
        for (name, p), (_, q) in zip(tiny_model.named_parameters(), fresh.named_parameters()):
            np.testing.assert_array_equal(p.data, q.data, err_msg=name)

    def test_params_path(self, tmp_path):
        assert checkpoint.params_path(tmp_path) == tmp_path / "best.params"
        assert checkpoint.params_path(tmp_path / "last") == tmp_path / "last.params"
        assert checkpoint.params_path(tmp_path / "x.params") == tmp_path / "x.params"

    def test_read_meta(self, tmp_path, tiny_model):
        checkpoint.save_checkpoint(tmp_path, checkpoint.BEST, tiny_model, vocab=["a", "b"])
        assert checkpoint.read_meta(tmp_path)["vocab"] == ["a", "b"]
        assert checkpoint.read_meta(tmp_path / "absent") == {}

    def test_missing_checkpoint(self, tmp_path, tiny_model):
        opt = SGD(tiny_model.named_parameters())
        with pytest.raises(CheckpointError, match="No such checkpoint"):
            checkpoint.load_checkpoint(tmp_path, checkpoint.LAST, tiny_model, opt, ReduceLROnPlateau(opt))

    def test_shape_mismatch(self, tmp_path, tiny_model, synth_vocab):
        checkpoint.save_checkpoint(tmp_path, checkpoint.BEST, tiny_model)
        other = ICALModel.build(tiny_model.config, len(synth_vocab) + 1, seed=3, dtype="float64")
        with pytest.raises(CheckpointError, match="shape"):
            checkpoint.load_params(tmp_path, other)


SETTINGS = TrainSettings(seed=11, batch_size=2, epochs=2, lr=0.02, max_len=6)


def make_trainer(config, vocab, samples, out_dir=None, toggles=None, **changes):
    model = ICALModel.build(config, len(vocab), seed=3, dtype="float64")
    settings = replace(SETTINGS, **changes)
    return Trainer(model, vocab, samples, samples[:2], toggles or LossToggles(), settings, out_dir, meta={"preset": "tiny"})


class TestTrainer:
    def test_resume_replays_losses(self, tmp_path, tiny_config, synth_vocab, synth_samples):
        straight = make_trainer(tiny_config, synth_vocab, synth_samples).fit()

        first = make_trainer(tiny_config, synth_vocab, synth_samples, tmp_path, epochs=1)
        first.fit()
        second = make_trainer(tiny_config, synth_vocab, synth_samples, tmp_path)
        assert second.resume() == 1
        resumed = second.fit()
        assert [r.epoch for r in resumed] == [1]
        assert resumed[0].step_totals == straight[1].step_totals
        assert resumed[0].lr == straight[1].lr

    def test_checkpoints_written(self, tmp_path, tiny_config, synth_vocab, synth_samples):
        make_trainer(tiny_config, synth_vocab, synth_samples, tmp_path, epochs=1).fit()
        directory = tmp_path / "checkpoints"
        for tag in (checkpoint.BEST, checkpoint.LAST):
            assert (directory / f"{tag}.params").is_file()
            assert checkpoint.read_meta(directory / tag)["preset"] == "tiny"
        assert (directory / "last.optim").is_file()
        assert checkpoint.read_meta(directory / checkpoint.LAST)["seed"] == 11

    def test_epoch_log_line(self, caplog, tiny_config, synth_vocab, synth_samples):
        with caplog.at_level(logging.INFO, logger="ical.train.trainer"):
            make_trainer(tiny_config, synth_vocab, synth_samples, epochs=1).fit()
        lines = [r.getMessage() for r in caplog.records if r.getMessage().startswith("epoch 0:")]
        assert len(lines) == 1
        for key in ("initial=", "implicit=", "fusion=", "total=", "lr=0.02", "val_exprate="):
            assert key in lines[0]

    def test_baseline_log_has_only_initial(self, caplog, tiny_config, synth_vocab, synth_samples):
        toggles = LossToggles.regime("baseline")
        with caplog.at_level(logging.INFO, logger="ical.train.trainer"):
            history = make_trainer(tiny_config, synth_vocab, synth_samples, toggles=toggles, epochs=1).fit()
        assert set(history[0].losses) == {"initial", "total"}
        line = next(r.getMessage() for r in caplog.records if r.getMessage().startswith("epoch 0:"))
        assert "implicit=" not in line and "fusion=" not in line

    def test_baseline_trace_matches_model_without_iccm(self, tiny_config, synth_vocab, synth_samples):
        config = tiny_config.model_copy(update={"decoder": tiny_config.decoder.model_copy(update={"dropout": 0.1})})
        bare_config = config.model_copy(update={"use_iccm": False})
        toggles = LossToggles.regime("baseline")
        full = make_trainer(config, synth_vocab, synth_samples, toggles=toggles, epochs=3)
        bare = make_trainer(bare_config, synth_vocab, synth_samples, toggles=toggles, epochs=3)
        assert full.model.has_iccm and not bare.model.has_iccm

        # exprate is left out: recognition reads the fused head whenever the ICCM exists
        for a, b in zip(full.fit(), bare.fit(), strict=True):
            assert a.epoch == b.epoch
            assert a.lr == b.lr
            assert a.step_totals == b.step_totals
            assert a.losses == b.losses
        shared = dict(full.model.named_parameters())
        for name, p in bare.model.named_parameters():
            np.testing.assert_array_equal(shared[name].data, p.data, err_msg=name)

    def test_loss_decreases(self, tiny_config, synth_vocab, synth_samples):
        trainer = make_trainer(tiny_config, synth_vocab, synth_samples[:2], epochs=8, eval_every=8)
        history = trainer.fit()
        assert history[-1].losses["total"] < history[0].losses["total"]
