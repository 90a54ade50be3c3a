import math

import numpy as np
import pytest

from conftest import fore_example_config, relerr
from resetfreq import elements, ltisys
from resetfreq.errors import ConfigError, SimulationError
from resetfreq.sim import (SignalComponent, SignalSpec, SimOptions,
                           cl_fr, common_base_frequency,
                           consecutive_reset_report, exact_fourier_spectrum,
                           fourier_spectrum, reconstruct_error, simulate,
                           steady_state, write_events_csv, write_signals_csv)

TWO_PI = 2.0 * math.pi


def test_common_base_frequency():
    assert abs(common_base_frequency([20.0]) - 20.0) < 1e-12
    assert abs(common_base_frequency([20.0, 100.0]) - 20.0) < 1e-9
    assert abs(common_base_frequency([6.0, 4.0]) - 2.0) < 1e-9
    with pytest.raises(ConfigError):
        common_base_frequency([1.0, math.sqrt(2.0)])


def test_signal_spec_validation():
    with pytest.raises(ConfigError):
        SignalSpec([])
    with pytest.raises(ConfigError):
        SignalComponent(1.0, -3.0)
    with pytest.raises(ConfigError):
        SignalComponent(1.0, 3.0, injection="anywhere")


def test_linear_loop_has_no_events_and_matches_phasor(fore_sim):
    cfg, _ = fore_sim
    lin = cfg.base_linear()
    res = simulate(lin, SignalSpec.sine(1.0, 1.0), SimOptions(max_periods=60))
    assert not res.events
    ss = steady_state(res)
    S_L, _ = lin.sensitivities()
    ph = ltisys.freq_response_scalar(S_L, res.omega)
    want = abs(ph) * np.sin(res.omega * ss.t + np.angle(ph))
    assert np.max(np.abs(ss.e - want)) < 1e-8


def test_post_reset_state_is_exact_map(fore_sim):
    cfg, res = fore_sim
    rho = cfg.R.reset_matrix
    for ev in res.events[:50]:
        assert np.array_equal(ev.x_post, rho @ ev.x_pre)


def test_reset_pattern_is_half_period_periodic(fore_sim):
    # the set of steady reset instants repeats with half the input period
    cfg, res = fore_sim
    ss = steady_state(res)
    half = math.pi / res.omega
    period = 2.0 * half
    times = np.array([ev.time for ev in ss.events])
    tol = 2.0 * res.options.resolve_event_tol(res.period) + 1e-9
    for t in times:
        shifted = (t + half) % period
        assert np.min(np.abs(times - shifted)) < tol


def test_steady_state_requires_convergence():
    cfg = fore_example_config()
    with pytest.warns(UserWarning):
        res = simulate(cfg, SignalSpec.sine(1.0, 1.0),
                       SimOptions(max_periods=2, ss_tol=1e-300))
    with pytest.raises(SimulationError):
        steady_state(res)


def test_steady_state_slice_bounds(fore_sim):
    _, res = fore_sim
    with pytest.raises(SimulationError):
        steady_state(res, periods=res.periods)


def test_reconstruction_matches_simulation(fore_sim):
    cfg, res = fore_sim
    e_rec = reconstruct_error(cfg, res.events, res.signal, res.t,
                              res.options)
    sl = res.last_period_slice()
    assert relerr(e_rec[sl], res.e[sl]) < 1e-6


def test_reconstruction_matches_on_cglp_loop(rs1_20hz_free):
    cfg, res = rs1_20hz_free
    e_rec = reconstruct_error(cfg, res.events, res.signal, res.t,
                              res.options)
    sl = res.last_period_slice()
    assert relerr(e_rec[sl], res.e[sl]) < 1e-6


def test_reconstruction_without_events_is_bls(fore_sim):
    cfg, res = fore_sim
    e_rec = reconstruct_error(cfg, [], res.signal, res.t, res.options)
    bls = simulate(cfg, res.signal, res.options, with_resets=False)
    n = min(e_rec.size, bls.e.size)
    assert np.max(np.abs(e_rec[:n] - bls.e[:n])) < 1e-12


def test_full_regularization_two_resets_per_period(rs0_20hz_full):
    _, res = rs0_20hz_full
    ss = steady_state(res)
    assert len(ss.events) == 2
    spacing = abs(ss.events[1].time - ss.events[0].time)
    assert abs(spacing - math.pi / res.omega) < 1e-6 * res.period


def test_steady_state_antisymmetry(rs0_20hz_full):
    _, res = rs0_20hz_full
    n = res.steps_per_period
    ss = steady_state(res)
    x = ss.x[:n]                  # one period, endpoint dropped
    shifted = np.roll(x, -n // 2, axis=0)
    scale = np.max(np.abs(x))
    assert np.max(np.abs(x + shifted)) < 1e-5 * scale


def test_even_harmonics_below_floor(rs0_20hz_full):
    _, res = rs0_20hz_full
    ss = steady_state(res)
    spec = fourier_spectrum(ss.e, res.omega, 10)
    fund = abs(spec.amplitude(1))
    for n in (2, 4, 6, 8, 10):
        assert abs(spec.amplitude(n)) < 1e-4 * fund


def test_exact_fourier_matches_fft_for_smooth_error(rs0_20hz_full):
    # e is C^1 here (plant relative degree 2): both extractions agree up to
    # the FFT aliasing floor
    _, res = rs0_20hz_full
    ss = steady_state(res)
    fft_spec = fourier_spectrum(ss.e, res.omega, 15)
    exact_spec = exact_fourier_spectrum(res, 15)
    fund = abs(fft_spec.amplitude(1))
    for n in (1, 3, 5, 9, 15):
        assert abs(fft_spec.amplitude(n) - exact_spec.amplitude(n)) \
            < 1e-6 * fund


def test_cl_fr_linear_loop():
    cfg = fore_example_config(gamma=1.0)
    w = TWO_PI * 1.0
    spec = cl_fr(cfg, w, 7, options=SimOptions(max_periods=60))
    S_L, _ = cfg.sensitivities()
    want = ltisys.freq_response_scalar(S_L, w)
    assert abs(spec.amplitude(1) - want) < 1e-8 * abs(want)
    for n in (3, 5, 7):
        assert abs(spec.amplitude(n)) < 1e-9


def test_grid_halving_leaves_steady_error(rs0_20hz_full):
    cfg, res = rs0_20hz_full
    fine = simulate(cfg, res.signal,
                    SimOptions(max_periods=300, steps_per_period=4000))
    ss_c = steady_state(res)
    ss_f = steady_state(fine)
    assert relerr(ss_f.e[::2], ss_c.e) < 1e-7


def test_consecutive_reset_report_classifies(rs1_20hz_free):
    _, res = rs1_20hz_free
    report = consecutive_reset_report(res)
    labels = {ev.label for ev in report.events}
    assert "modelled" in labels
    assert report.resets_per_period > 2
    assert report.consecutive_pairs > 0 or report.additional_count > 0
    if report.consecutive_pairs:
        rho = np.diag([0.5, 1.0])
        assert np.allclose(report.effective_reset_matrix, rho @ rho)
        assert report.effective_matches_single is False


def test_consecutive_report_full_regularization(rs0_20hz_full):
    _, res = rs0_20hz_full
    report = consecutive_reset_report(res)
    assert report.resets_per_period == 2
    assert all(ev.label == "modelled" for ev in report.events)


def test_full_reset_consecutive_pair_is_benign():
    # gamma = 0: a merged consecutive pair acts like a single reset
    cfg, _ = elements.build_cglp_loop(elements.TEST_TUNINGS["Rs0"], tau=0.0)
    res = simulate(cfg, SignalSpec.sine(1.0, 20.0),
                   SimOptions(max_periods=300))
    report = consecutive_reset_report(res)
    if report.consecutive_pairs:
        assert report.effective_matches_single is True


def test_events_strictly_increasing_and_respect_tau(rs1_20hz_free):
    cfg, _ = rs1_20hz_free
    tau = elements.resolve_tau("optimal", wc_hz=100.0)
    res = simulate(cfg.with_tau(tau), SignalSpec.sine(1.0, 20.0),
                   SimOptions(max_periods=300))
    times = np.array([ev.time for ev in res.events])
    gaps = np.diff(times)
    assert np.all(gaps > 0.0)
    tol = 4.0 * res.options.resolve_event_tol(res.period)
    assert np.all(gaps >= tau - tol)


def test_clegg_loop_has_many_resets_per_half_period():
    R = elements.make_gci(0.0)
    C = elements.make_lead_squared(1.0, 100.0, 3.73)
    cfg = elements.LoopConfig(K=ltisys.gain(1.0), R=R, C=C,
                              P=elements.stage_plant(), tau=0.0, wc_hz=100.0)
    cfg = elements.apply_gain(cfg, elements.tune_gain(cfg, 100.0))
    res = simulate(cfg, SignalSpec.sine(1.0, 20.0),
                   SimOptions(max_periods=300))
    ss = steady_state(res)
    assert len(ss.events) > 4      # more than 2 per half period


def test_zeno_guard_raises():
    cfg = fore_example_config()
    with pytest.raises(SimulationError):
        simulate(cfg, SignalSpec.sine(1.0, 1.0),
                 SimOptions(max_periods=10, max_events_per_period=10))


def test_multisine_disturbance_runs():
    cfg, _ = elements.build_cglp_loop(elements.TEST_TUNINGS["Rs0"], tau=0.0)
    sig = SignalSpec([SignalComponent(1.0, 20.0),
                      SignalComponent(0.1, 100.0, phase=0.3,
                                      injection="plant_input")])
    res = simulate(cfg, sig, SimOptions(max_periods=300))
    assert res.converged
    assert res.period == pytest.approx(1.0 / 20.0)


def test_stepper_backends_agree():
    from resetfreq.sim import core, _stepper_py

    try:
        from resetfreq.sim import _stepper as compiled
    except ImportError:
        pytest.skip("compiled kernel not built")
    cfg, _ = elements.build_cglp_loop(elements.TEST_TUNINGS["Rs1"], tau=0.0)
    sig = SignalSpec.sine(1.0, 20.0)
    opt = SimOptions(max_periods=40)
    original = core._kernel
    try:
        core._kernel = compiled
        res_c = simulate(cfg, sig, opt)
        core._kernel = _stepper_py
        res_p = simulate(cfg, sig, opt)
    finally:
        core._kernel = original
    assert len(res_c.events) == len(res_p.events)
    assert max(abs(a.time - b.time)
               for a, b in zip(res_c.events, res_p.events)) == 0.0
    assert np.max(np.abs(res_c.e - res_p.e)) < 1e-12


def test_csv_exports(tmp_path, fore_sim):
    _, res = fore_sim
    sig_path = tmp_path / "signals.csv"
    ev_path = tmp_path / "events.csv"
    write_signals_csv(res, sig_path)
    write_events_csv(res, ev_path)
    lines = sig_path.read_text().splitlines()
    assert lines[0] == "t,e,y,u,q"
    assert len(lines) == res.t.size + 1
    ev_lines = ev_path.read_text().splitlines()
    assert ev_lines[0].startswith("t_r,x_pre_0")
    assert len(ev_lines) == len(res.events) + 1
