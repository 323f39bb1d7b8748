from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superrad.correlation import (
    UndefinedResultWarning,
    default_bin_width,
    g2_histogram,
    g2_zero_estimate,
    g2_zero_from_states,
    intensity_variance,
    read_g2_csv,
    write_g2_csv,
)
from superrad.errors import ConfigError, EmptyEstimateError
from superrad.records import JumpRecord
from superrad.trajectory import EnsembleConfig, EnsembleResult, run_ensemble


def record(times, total, burn_in=0.0, label="cavity"):
    times = np.asarray(times, float)
    return JumpRecord(times, (label,) * times.size, total, 0, "adiabatic", burn_in)


def poisson(rate, total, seed):
    rng = np.random.default_rng(seed)
    t = np.cumsum(rng.exponential(1 / rate, int(rate * total * 1.2) + 100))
    return record(t[t < total], total)


def test_hand_counted_example():
    est = g2_histogram(record([0, 1, 2, 3, 4], 5.0), bin_width=1.0, n_lags=2)
    np.testing.assert_allclose(est.values, [1.0, 0.75], rtol=0, atol=1e-15)
    assert est.n_phot == 4
    assert est.n_bins == 5
    assert est.window == (0.0, 5.0)
    np.testing.assert_allclose(est.tau, [0.0, 1.0])


def test_poisson_record_is_flat():
    est = g2_histogram([poisson(5.0, 4000.0, s) for s in range(3)], bin_width=0.1, n_lags=40)
    z = (est.values - 1.0) / est.std_errors
    assert np.all(np.abs(z) < 3.0 + 0.6)  # 40 bins: allow the odd 3-sigma excursion
    assert np.mean(np.abs(z) < 3.0) > 0.95
    assert np.all(est.values >= 0) and np.all(est.std_errors >= 0)
    assert est.n_bins * est.bin_width <= 4000.0 + est.bin_width


@settings(max_examples=30, deadline=None)
@given(st.floats(-50.0, 1e4), st.integers(0, 2**16))
def test_time_translation_invariance(shift, seed):
    base = poisson(3.0, 50.0, seed)
    t0 = max(0.0, shift)
    moved = record(base.times + t0, 50.0 + t0, burn_in=t0)
    a = g2_histogram(base, bin_width=0.25, n_lags=5)
    b = g2_histogram(moved, bin_width=0.25, n_lags=5)
    np.testing.assert_allclose(a.values, b.values, rtol=1e-9)
    assert a.n_phot == b.n_phot


def test_burn_in_window_is_excluded():
    est = g2_histogram(record([0.5, 1.5, 5, 6, 7, 8], 10.0, burn_in=4.0), bin_width=1.0, n_lags=1)
    assert est.window == (4.0, 10.0)
    assert est.n_events == 4


def test_errors():
    with pytest.raises(EmptyEstimateError):
        g2_histogram(record([], 5.0), bin_width=1.0, n_lags=1)
    with pytest.raises(EmptyEstimateError):
        g2_histogram(record([4.5], 5.0), bin_width=1.0, n_lags=1)
    with pytest.raises(ValueError):
        g2_histogram(record([1.0], 5.0), bin_width=6.0, n_lags=1)
    with pytest.raises(ValueError):
        g2_histogram([], bin_width=1.0)


def test_csv_round_trip(tmp_path):
    est = g2_histogram(poisson(2.0, 100.0, 1), bin_width=0.5, n_lags=4)
    path = tmp_path / "g2.csv"
    write_g2_csv(path, est, {"thermal": np.ones(4)})
    header, cols = read_g2_csv(path)
    assert header["schema_version"] == "1"
    assert float(header["bin_width"]) == 0.5
    assert int(header["n_phot"]) == est.n_phot
    assert list(cols) == ["tau", "g2", "g2_err", "thermal"]
    np.testing.assert_array_equal(cols["g2"], est.values)
    lines = path.read_text().splitlines()
    assert [l for l in lines if not l.startswith("#")][0] == "tau,g2,g2_err,thermal"


@pytest.mark.parametrize(
    "w,expected", [(0.25, 0.1), (5.0, 0.02), (1.0, 0.02), (100.0, 0.001)]
)
def test_default_bin_width(w, expected):
    assert default_bin_width(w, 10, 1.0) == pytest.approx(expected)


@pytest.mark.parametrize("flux,g2,b,expected", [(7, 1, 100, 700), (10, 2, 1000, 10100), (0, 3.3, 5, 0)])
def test_intensity_variance(flux, g2, b, expected):
    assert intensity_variance(flux, g2, b) == pytest.approx(expected)


def test_intensity_variance_rejects_negative():
    with pytest.raises(ValueError):
        intensity_variance(-1, 1, 1)


def _synthetic(traces):
    t = np.arange(3) * 1.0
    return EnsembleResult([], 0, 2, 0.0, t, {k: np.asarray(v, float) for k, v in traces.items()})


def test_g2_from_states_examples(adiabatic):
    one = adiabatic(1, 2.0)
    ens = run_ensemble(
        one, EnsembleConfig(n_trajectories=2, duration=5.0, burn_in=1.0, sample_stride=0.1, observables=("jpjm", "jppjmm"))
    )
    assert g2_zero_from_states(ens, one) == 0.0
    two = adiabatic(2, 1.0)
    ens = _synthetic({"jpjm": [[2, 2, 2], [2, 2, 2]], "jppjmm": [[4, 4, 4], [4, 4, 4]]})
    assert g2_zero_from_states(ens, two) == 1.0


def test_g2_from_states_dark_and_missing(adiabatic):
    ops = adiabatic(2, 1.0)
    ens = _synthetic({"jpjm": np.zeros((2, 3)), "jppjmm": np.zeros((2, 3))})
    with pytest.warns(UndefinedResultWarning):
        v, e = g2_zero_estimate(ens, ops)
    assert math.isnan(v) and math.isnan(e)
    with pytest.raises(ConfigError):
        g2_zero_estimate(_synthetic({"s": np.zeros((2, 3))}), ops)


def test_histogram_agrees_with_states(adiabatic):
    ops = adiabatic(3, 5.0)
    ens = run_ensemble(
        ops,
        EnsembleConfig(
            n_trajectories=6, duration=300.0, burn_in=5.0, master_seed=12, sample_stride=0.02, observables=("jpjm", "jppjmm")
        ),
    )
    gs, gs_err = g2_zero_estimate(ens, ops)
    est = g2_histogram(ens.records, bin_width=0.05 / 3, n_lags=1)
    assert abs(est.values[0] - gs) < 3 * math.hypot(est.std_errors[0], gs_err)


def test_long_lag_decorrelation(adiabatic):
    ops = adiabatic(3, 5.0)
    ens = run_ensemble(ops, EnsembleConfig(n_trajectories=4, duration=400.0, burn_in=5.0, master_seed=13))
    est = g2_histogram(ens.records, bin_width=0.5, n_lags=12)
    tail = slice(4, None)
    z = (est.values[tail] - 1.0) / est.std_errors[tail]
    assert np.all(np.abs(z) < 3.0)
