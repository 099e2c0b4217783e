"""Tests for the three-part loss and the implicit class weights."""

from __future__ import annotations

import math

import numpy as np
import pytest

from ical.autograd.gradcheck import check_gradients
from ical.autograd.random import derive_rng
from ical.autograd.tensor import Tensor
from ical.data.batch import make_batch
from ical.data.dataset import Sample
from ical.errors import ConfigError, ContractError
from ical.models.ical import ICALModel
from ical.presets import IMPLICIT_CLASSES
from ical.train.loss import (
    EPS,
    LossToggles,
    cross_entropy,
    token_weights,
    total_loss,
    weight_from_frequency,
    weighted_cross_entropy,
)
from ical.vocab import EOS, PAD, Direction, Vocab


def log_softmax(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class TestWeights:
    @pytest.mark.parametrize(
        ("freq", "expected"),
        [(0.5, 1 + math.log(3)), (1.0, 1.6931466805598), (0.0, 14.815511557963)],
    )
    def test_values(self, freq, expected):
        assert float(weight_from_frequency(freq)) == pytest.approx(expected, abs=1e-6)

    def test_half_is_exact(self):
        assert float(weight_from_frequency(0.5)) == pytest.approx(1 + math.log(1 + 1 / (0.5 + EPS)), abs=1e-12)

    def test_monotonic(self):
        freq = np.linspace(0.0, 1.0, 1000)
        assert np.all(np.diff(weight_from_frequency(freq)) < 0)

    def test_batch_frequencies(self):
        l2r = np.array([[3, 3, 4, EOS], [3, EOS, PAD, PAD]])
        r2l = np.array([[4, 3, 3, EOS], [3, EOS, PAD, PAD]])
        w = token_weights([l2r, r2l])
        assert w.shape == (IMPLICIT_CLASSES,)
        assert w[3] == pytest.approx(float(weight_from_frequency(6 / 12)))
        assert w[4] == pytest.approx(float(weight_from_frequency(2 / 12)))
        assert w[EOS] == pytest.approx(float(weight_from_frequency(4 / 12)))
        assert w[7] == pytest.approx(float(weight_from_frequency(0.0)))

    def test_single_class_batch(self):
        w = token_weights([np.array([[5, 5, 5]])])
        assert w[5] == pytest.approx(1.6931466805598, abs=1e-6)


class TestCrossEntropy:
    def test_hand_computed(self, rng, float64):
        logits = rng.normal(size=(1, 2, 4))
        targets = np.array([[2, 3]])
        expected = -(log_softmax(logits)[0, 0, 2] + log_softmax(logits)[0, 1, 3]) / 2
        assert cross_entropy(Tensor(logits), targets).item() == pytest.approx(expected, abs=1e-12)

    def test_pad_positions_ignored(self, rng, float64):
        logits = rng.normal(size=(2, 3, 5))
        targets = np.array([[1, 2, PAD], [4, PAD, PAD]])
        base = cross_entropy(Tensor(logits), targets).item()
        logits[0, 2] += 10 * rng.normal(size=5)
        logits[1, 1:] = 0.0
        assert cross_entropy(Tensor(logits), targets).item() == pytest.approx(base, abs=1e-12)

    def test_perfect_prediction(self, float64):
        targets = np.array([[3, 4, 5]])
        logits = np.full((1, 3, 8), -50.0)
        logits[0, np.arange(3), targets[0]] = 50.0
        assert weighted_cross_entropy(Tensor(logits), targets, np.ones(8)).item() == pytest.approx(0.0, abs=1e-12)

    def test_uniform_prediction(self, float64):
        targets = np.array([[3, 4, 5, PAD]])
        loss = weighted_cross_entropy(Tensor(np.zeros((1, 4, 8))), targets, np.ones(8))
        assert loss.item() == pytest.approx(math.log(8), abs=1e-12)

    def test_weighted_matches_loop(self, rng, float64):
        logits = rng.normal(size=(2, 4, 8))
        targets = np.array([[3, 4, 6, EOS], [5, EOS, PAD, PAD]])
        weights = rng.uniform(1, 3, size=8)
        logp = log_softmax(logits)
        num = den = 0.0
        for i in range(2):
            for t in range(4):
                if targets[i, t] != PAD:
                    num -= weights[targets[i, t]] * logp[i, t, targets[i, t]]
                    den += weights[targets[i, t]]
        assert weighted_cross_entropy(Tensor(logits), targets, weights).item() == pytest.approx(num / den, abs=1e-10)

    @pytest.mark.parametrize("seed", range(20))
    def test_weighted_gradients(self, seed, float64):
        rng = derive_rng(seed, "wce")
        logits = Tensor(rng.normal(size=(2, 4, 8)), requires_grad=True)
        targets = np.array([[3, 4, 6, EOS], [5, EOS, PAD, PAD]])
        weights = token_weights([targets])
        results = check_gradients(lambda: weighted_cross_entropy(logits, targets, weights), {"logits": logits})
        assert all(r.passed for r in results), results


class TestToggles:
    def test_regimes(self):
        assert LossToggles.regime("baseline").active == ("initial",)
        assert LossToggles.regime("implicit").active == ("initial", "implicit")
        assert LossToggles.regime("fusion").active == ("initial", "fusion")
        assert LossToggles.regime("full").active == ("initial", "implicit", "fusion")
        assert not LossToggles.regime("baseline").use_iccm

    def test_unknown_regime(self):
        with pytest.raises(ConfigError, match="unknown loss regime"):
            LossToggles.regime("half")


class TestTotalLoss:
    def test_components_sum_to_total(self, tiny_model, tiny_batch):
        loss, report = total_loss(tiny_model, tiny_batch, LossToggles())
        assert report.total == pytest.approx(report.initial + report.implicit + report.fusion, abs=1e-9)
        assert loss.item() == report.total
        for name in ("initial", "implicit", "fusion"):
            mean = 0.5 * sum(report.per_direction[d][name] for d in Direction)
            assert getattr(report, name) == pytest.approx(mean, abs=1e-9)

    def test_single_sample_by_hand(self, tiny_config, float64):
        vocab = Vocab(["x", "y"])
        image = np.zeros((32, 32), dtype=np.float32)
        image[8:24, 12:20] = 1.0
        batch = make_batch([Sample("one", image, ["x"])], vocab)
        model = ICALModel.build(tiny_config, len(vocab), seed=5, dtype="float64")
        _, report = total_loss(model, batch, LossToggles())

        # one content token with implicit class <space> plus the end slot, in both
        # directions: each class has frequency 1/2
        w = 1 + math.log(1 + 1 / (0.5 + 1e-6))
        grid = model.encode(batch.images, batch.image_mask)
        expected = 0.0
        for direction in Direction:
            assert batch.inputs(direction).shape == (1, 2)
            out = model.forward_features(grid, batch.inputs(direction))
            targets = batch.outputs(direction)[0]
            implicit = batch.implicit[direction][0]
            initial = log_softmax(out.initial_logits.data[0])
            fused = log_softmax(out.fused_logits.data[0])
            implicit_lp = log_softmax(out.implicit_logits.data[0])
            expected -= (initial[0, targets[0]] + initial[1, targets[1]]) / 2
            expected -= (fused[0, targets[0]] + fused[1, targets[1]]) / 2
            expected -= (w * implicit_lp[0, implicit[0]] + w * implicit_lp[1, implicit[1]]) / (2 * w)
        assert report.total == pytest.approx(expected / 2, abs=1e-6)

    @pytest.mark.parametrize("regime", ["baseline", "implicit", "fusion", "full"])
    def test_regimes_run(self, tiny_model, tiny_batch, regime):
        toggles = LossToggles.regime(regime)
        loss, report = total_loss(tiny_model, tiny_batch, toggles)
        loss.backward()
        assert set(report.as_dict(toggles)) == {*toggles.active, "total"}
        assert np.isfinite(report.total)

    def test_baseline_toggles_match_model_without_iccm(self, tiny_config, synth_vocab, tiny_batch):
        toggles = LossToggles.regime("baseline")
        full = ICALModel.build(tiny_config, len(synth_vocab), seed=3, dtype="float64")
        bare = ICALModel.build(tiny_config.model_copy(update={"use_iccm": False}), len(synth_vocab), seed=3, dtype="float64")
        first, _ = total_loss(full, tiny_batch, toggles)
        second, _ = total_loss(bare, tiny_batch, toggles)
        assert first.item() == second.item()

    def test_iccm_gradients_follow_toggles(self, tiny_model, tiny_batch):
        def grads(toggles):
            tiny_model.zero_grad()
            loss, _ = total_loss(tiny_model, tiny_batch, toggles)
            loss.backward()
            return {name: np.abs(p.grad).sum() for name, p in tiny_model.named_parameters()}

        baseline = grads(LossToggles.regime("baseline"))
        assert all(v == 0 for k, v in baseline.items() if k.startswith(("iccm.", "gate.", "implicit_head.")))
        implicit = grads(LossToggles.regime("implicit"))
        assert all(v == 0 for k, v in implicit.items() if k.startswith("gate."))
        assert any(v > 0 for k, v in implicit.items() if k.startswith("iccm."))
        fusion = grads(LossToggles.regime("fusion"))
        assert all(v == 0 for k, v in fusion.items() if k.startswith("implicit_head."))
        assert any(v > 0 for k, v in fusion.items() if k.startswith("gate."))

    def test_iccm_loss_needs_iccm(self, tiny_config, synth_vocab, tiny_batch):
        bare = ICALModel.build(tiny_config.model_copy(update={"use_iccm": False}), len(synth_vocab), seed=3)
        with pytest.raises(ContractError, match="needs a model built with the ICCM"):
            total_loss(bare, tiny_batch, LossToggles())

    def test_end_to_end_gradients(self, tiny_model, tiny_batch):
        def loss():
            return total_loss(tiny_model, tiny_batch, LossToggles())[0]

        results = check_gradients(loss, dict(tiny_model.named_parameters()), max_entries=2, rng=derive_rng(0, "e2e"))
        assert all(r.passed for r in results), [r for r in results if not r.passed]


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(20))
def test_full_model_gradients_across_seeds(seed, tiny_config, synth_samples, synth_vocab):
    model = ICALModel.build(tiny_config, len(synth_vocab), seed=seed, dtype="float64")
    batch = make_batch(synth_samples[seed % 3 : seed % 3 + 2], synth_vocab)

    def loss():
        return total_loss(model, batch, LossToggles())[0]

    results = check_gradients(loss, dict(model.named_parameters()), max_entries=4, rng=derive_rng(seed, "sweep"))
    assert all(r.passed for r in results), [r for r in results if not r.passed]
