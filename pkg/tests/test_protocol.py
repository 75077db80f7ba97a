import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionflop.errors import ConfigError, InvalidInputError
from ionflop.estimation import Calibration, fit_histogram, population_from_bright_weight
from ionflop.protocol import (
    CountHistogram,
    CycleRecord,
    CycleTiming,
    ExperimentModel,
    ReadoutModel,
    run_experiment,
    run_reference,
    simulate_cycle,
    simulate_cycles,
)
from ionflop.quantities import yb171_defaults

N_PAPER = 68500


def test_default_timing_matches_protocol():
    t = CycleTiming()
    assert t.active_time == pytest.approx(289e-6, rel=1e-12)
    assert t.cycle_period == pytest.approx(426.66e-6)


def test_timing_must_fit_in_period():
    with pytest.raises(InvalidInputError):
        CycleTiming(readout=400e-6)


def test_record_invariant():
    with pytest.raises(InvalidInputError):
        CycleRecord(excited=False, decayed_bright=True, photon_count=3)


def test_no_excitation_no_background_gives_zero_counts(rng):
    readout = ReadoutModel(bright_rate=1e5, dark_rate=0.0)
    for _ in range(20):
        rec = simulate_cycle(0.0, yb171_defaults(), readout, CycleTiming(), rng)
        assert rec.photon_count == 0
        assert not rec.excited
    _, _, counts = simulate_cycles(0.0, yb171_defaults(), readout, CycleTiming(), 10000, rng)
    assert counts.max() == 0


def test_full_excitation_decays_bright_two_thirds(rng):
    excited, bright, _ = simulate_cycles(1.0, yb171_defaults(), ReadoutModel(), CycleTiming(), N_PAPER, rng)
    assert excited.all()
    sigma = math.sqrt(2 / 9 / N_PAPER)
    assert abs(bright.mean() - 2 / 3) < 3 * sigma


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_decayed_bright_implies_excited(p, seed):
    rng = np.random.default_rng(seed)
    excited, bright, counts = simulate_cycles(p, yb171_defaults(), ReadoutModel(leak_rate=1e3), CycleTiming(), 500, rng)
    assert not np.any(bright & ~excited)
    assert counts.min() >= 0


def test_invalid_probability(rng):
    with pytest.raises(InvalidInputError):
        simulate_cycle(1.5, yb171_defaults(), ReadoutModel(), CycleTiming(), rng)


def test_round_trip_recovers_population(rng):
    readout = ReadoutModel.from_means(30.0, 1.0)
    _, _, counts = simulate_cycles(0.943, yb171_defaults(), readout, CycleTiming(), N_PAPER, rng)
    fit = fit_histogram(CountHistogram.from_counts(counts), Calibration.from_readout_model(readout))
    pop = population_from_bright_weight(fit.bright_weight)
    assert abs(pop - 0.943) < 2 * 1.5 * fit.weight_std_error


def test_leak_shortens_bright_counts(rng):
    T = CycleTiming().readout
    leaky = ReadoutModel(bright_rate=1e5, dark_rate=0.0, leak_rate=1 / T)
    _, bright, counts = simulate_cycles(1.0, yb171_defaults(), leaky, CycleTiming(), 50000, rng)
    # E[min(T, Exp(rate 1/T))] = T (1 - 1/e)
    assert counts[bright].mean() == pytest.approx(1e5 * T * (1 - math.exp(-1)), rel=0.01)


def test_preparation_error_reads_bright(rng):
    readout = ReadoutModel(preparation_error=1.0)
    _, bright, counts = simulate_cycles(0.0, yb171_defaults(), readout, CycleTiming(), 2000, rng)
    assert not bright.any()
    assert counts.mean() > 20


def model_33ghz(**kw):
    kw.setdefault("detuning", 2 * math.pi * 33e9)
    return ExperimentModel(alpha=1.3e11, scatter_counts_per_joule=1e12, **kw)


def test_run_experiment_is_deterministic():
    m = model_33ghz()
    a = run_experiment([1e-11], m, 1, seed=7)
    b = run_experiment([1e-11], m, 1, seed=7)
    assert a[0][1] == b[0][1]
    assert a[0][1].total == 1


def test_run_experiment_empty():
    assert run_experiment([], model_33ghz(), 100, seed=1) == []


def test_run_experiment_requires_repetitions():
    with pytest.raises(ConfigError):
        run_experiment([1e-11], model_33ghz(), 0, seed=1)


def test_model_requires_waist_without_alpha():
    with pytest.raises(ConfigError):
        ExperimentModel(waist=None)


@pytest.mark.parametrize("n_jobs", [2, 3, 8])
def test_worker_count_does_not_change_output(n_jobs):
    m = model_33ghz()
    energies = [5e-12, 5e-11, 1.2e-10]
    serial = run_experiment(energies, m, 30000, seed=11, n_jobs=1)
    parallel = run_experiment(energies, m, 30000, seed=11, n_jobs=n_jobs)
    assert [h for _, h in serial] == [h for _, h in parallel]


def test_different_seeds_differ():
    m = model_33ghz()
    a = run_experiment([5e-11], m, 5000, seed=1)[0][1]
    b = run_experiment([5e-11], m, 5000, seed=2)[0][1]
    assert a != b


def test_bright_fractions_trace_closed_form():
    m = model_33ghz()
    # Omega_eff t_eff from 0 to 2 pi
    theta = np.linspace(0.0, 2 * math.pi, 9)
    c_sc = (theta / (m.alpha * m.effective_duration)) ** 2
    energies = c_sc / m.scatter_counts_per_joule
    cal = Calibration.from_readout_model(m.readout, m.timing)
    for e, hist in run_experiment(energies, m, 20000, seed=3):
        fit = fit_histogram(hist, cal)
        expected = 2 / 3 * m.excitation_probability(e)
        assert abs(fit.bright_weight - expected) < 4 * fit.weight_std_error + 1e-3


def test_error_shrinks_as_inverse_sqrt_n():
    m = model_33ghz()
    e = 4e-11
    p_bright = 2 / 3 * m.excitation_probability(e)
    cal = Calibration.from_readout_model(m.readout, m.timing)
    for n in (1000, 10000, N_PAPER):
        (_, hist), = run_experiment([e], m, n, seed=5)
        w = fit_histogram(hist, cal).bright_weight
        assert abs(w - p_bright) < 4 * math.sqrt(p_bright * (1 - p_bright) / n)


def test_reference_histograms():
    bright, dark = run_reference(model_33ghz(), 20000, seed=1)
    assert bright.total == dark.total == 20000
    assert bright.mean() == pytest.approx(31.0, rel=0.01)
    assert dark.mean() == pytest.approx(1.0, rel=0.03)


def test_integrator_dynamics_option():
    closed = model_33ghz(shape="rectangular", pulse_duration=2.36e-12)
    numeric = model_33ghz(shape="rectangular", pulse_duration=2.36e-12, dynamics="integrator")
    assert numeric.excitation_probability(5e-11) == pytest.approx(closed.excitation_probability(5e-11), abs=1e-10)


def test_theory_mode_rabi_frequency():
    m = ExperimentModel(waist=8.5e-6)
    assert m.rabi_frequency(0.0867e-9) == pytest.approx(1.510e12, rel=1e-3)


class TestCountHistogram:
    def test_total_and_arrays(self):
        h = CountHistogram.from_counts([0, 0, 3, 5, 5, 5])
        assert h.total == 6
        values, occ = h.arrays()
        assert values.tolist() == [0, 3, 5]
        assert occ.tolist() == [2, 1, 3]

    @given(
        st.lists(st.integers(0, 40), max_size=50),
        st.lists(st.integers(0, 40), max_size=50),
        st.lists(st.integers(0, 40), max_size=50),
    )
    def test_merge_is_associative_and_commutative(self, a, b, c):
        ha, hb, hc = (CountHistogram.from_counts(x) for x in (a, b, c))
        assert (ha + hb) + hc == ha + (hb + hc)
        assert ha + hb == hb + ha
        assert (ha + hb).total == len(a) + len(b)

    def test_dict_round_trip(self):
        h = CountHistogram({0: 10, 7: 2})
        assert CountHistogram.from_dict(h.to_dict()) == h

    def test_rejects_negative(self):
        with pytest.raises(InvalidInputError):
            CountHistogram({-1: 3})
