"""Benchmark harness: report structure and growth fitting (tiny dims)."""

import numpy as np
import pytest

from diar.bench import fit_growth_exponent, format_bench_report, run_bench
from diar.encoder import EncoderConfig
from diar.ta import CombinerKind, TaConfig


def tiny_setup():
    encoder = EncoderConfig(
        num_blocks=1, model_dim=16, heads=2, ff_dim=16, conv_kernel=3,
        use_csv_token=True, dropout=0.0, input_dim=5,
    )
    ta = TaConfig(
        num_decoder_layers=1, heads=2, ff_dim=16,
        combiner=CombinerKind("amp", 1.0), max_speakers=2, dropout=0.0,
    )
    return encoder, ta


def test_report_contains_both_models_and_ratio():
    encoder, ta = tiny_setup()
    result = run_bench(encoder, ta, num_frames=30, repeats=5, seed=0)
    assert set(result.full_s) == {"eda", "ta"}
    assert result.full_ratio_ta_over_eda > 0
    text = format_bench_report(result)
    assert "full_ratio_ta_over_eda" in text
    assert "mixtures_per_s" in text
    assert "warning" not in text


def test_low_repeats_warns():
    encoder, ta = tiny_setup()
    result = run_bench(encoder, ta, num_frames=20, repeats=2, seed=0)
    assert any("unstable" in w for w in result.warnings)


def test_growth_fits_reported_for_both_models():
    encoder, ta = tiny_setup()
    result = run_bench(
        encoder, ta, num_frames=20, repeats=5, seed=0, growth_frames=(20, 40, 80)
    )
    assert set(result.growth) == {"eda", "ta"}
    text = format_bench_report(result)
    assert "growth_exponent_eda" in text
    assert "growth_exponent_ta" in text


def test_fit_growth_exponent_recovers_power_law():
    sizes = np.array([100, 200, 400, 800])
    assert fit_growth_exponent(sizes, 3e-6 * sizes) == pytest.approx(1.0)
    assert fit_growth_exponent(sizes, 5e-9 * sizes**2) == pytest.approx(2.0)
