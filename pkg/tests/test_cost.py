"""Tests for the analytic parameter and FLOP counts."""

from __future__ import annotations

import pytest

from ical.models.cost import (
    BASE_IMAGE,
    encoder_flops,
    estimate_cost,
    iccm_params,
    parameter_breakdown,
)
from ical.models.ical import ICALModel
from ical.presets import BASE, TOY
from ical.vocab import default_vocab


@pytest.fixture(scope="module")
def vocab_size():
    return len(default_vocab())


class TestParameters:
    def test_base_total(self, vocab_size):
        total = sum(parameter_breakdown(BASE, vocab_size).values())
        assert total == pytest.approx(7.37e6, rel=0.08)

    def test_iccm_delta(self, vocab_size):
        full = sum(parameter_breakdown(BASE, vocab_size).values())
        bare = sum(parameter_breakdown(BASE.model_copy(update={"use_iccm": False}), vocab_size).values())
        assert full - bare == iccm_params(BASE.decoder)
        assert full - bare == pytest.approx(0.98e6, rel=0.15)

    def test_toy_is_small(self, vocab_size):
        assert sum(parameter_breakdown(TOY, vocab_size).values()) < 0.5e6

    @pytest.mark.parametrize("use_iccm", [True, False])
    def test_breakdown_matches_built_model(self, vocab_size, use_iccm):
        config = TOY.model_copy(update={"use_iccm": use_iccm})
        model = ICALModel.build(config, vocab_size, seed=0)
        assert model.num_parameters() == sum(parameter_breakdown(config, vocab_size).values())

    def test_base_breakdown_matches_built_model(self, vocab_size):
        model = ICALModel.build(BASE, vocab_size, seed=0)
        assert model.num_parameters() == sum(parameter_breakdown(BASE, vocab_size).values())


class TestFlops:
    def test_base_total(self, vocab_size):
        report = estimate_cost(BASE, vocab_size, BASE_IMAGE)
        assert report.total_flops == pytest.approx(19.81e9, rel=0.25)

    def test_baseline_total(self, vocab_size):
        report = estimate_cost(BASE.model_copy(update={"use_iccm": False}), vocab_size, BASE_IMAGE)
        assert "iccm" not in report.flops
        assert report.total_flops == pytest.approx(18.81e9, rel=0.25)

    def test_iccm_overhead_is_small(self, vocab_size):
        report = estimate_cost(BASE, vocab_size, BASE_IMAGE)
        assert 0 < report.flops["iccm"] < 0.1 * report.total_flops

    def test_encoder_dominates(self, vocab_size):
        report = estimate_cost(BASE, vocab_size, BASE_IMAGE)
        assert report.flops["encoder"] > report.flops["decoder"]

    def test_grows_with_image(self):
        assert encoder_flops(BASE.encoder, 240, 800) > encoder_flops(BASE.encoder, 120, 800)

    def test_decoder_scales_with_directions(self, vocab_size):
        one = estimate_cost(BASE, vocab_size, directions=1)
        two = estimate_cost(BASE, vocab_size, directions=2)
        assert two.flops["decoder"] == pytest.approx(2 * one.flops["decoder"])
        assert two.flops["encoder"] == one.flops["encoder"]

    def test_seq_len_defaults_to_max_len(self, vocab_size):
        assert estimate_cost(TOY, vocab_size).total_flops == estimate_cost(TOY, vocab_size, seq_len=TOY.max_len).total_flops


def test_report_text(vocab_size):
    text = estimate_cost(TOY, vocab_size).as_text()
    assert "params.total:" in text and "flops.total_g:" in text
    assert "params.iccm:" in text
