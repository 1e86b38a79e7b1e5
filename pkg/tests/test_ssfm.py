import math

import numpy as np
import pytest

from fwnl.gn_model import ase_psd
from fwnl.spectra import (FrequencyGrid, Interval, PerturbationPair, Psd,
                          ShapeSpec, apsd, build_reference_spectrum,
                          shrink_interval, symmetric_layout)
from fwnl.ssfm import (FieldWaveform, SsfmControl, WaveformConfig, amplify,
                       apply_band_gains, band_symbols, load_waveform,
                       measure_nsr, measure_psd, propagate_link,
                       propagate_span, save_waveform, synthesize_waveform)
from conftest import ndsf_link

FS = 100e9


def std_setup(n_symbols=2000, height=None, seed=0, trx=0.0):
    grid = FrequencyGrid.centered(200e9, 50e6)
    layout = symmetric_layout(grid, 20e9, 10e9)
    if height is None:
        height = 1e-3 * 10 ** 0.2 / 40e9  # 2 dBm over the two bands
    tx = build_reference_spectrum(layout, ShapeSpec(height_a=height, height_b=height),
                                  grid)
    cfg = WaveformConfig(sample_rate=FS, n_symbols=n_symbols, rng_seed=seed, trx_nsr=trx)
    return grid, layout, tx, cfg


def test_waveform_config_validation():
    with pytest.raises(ValueError):
        WaveformConfig(sample_rate=0.0, n_symbols=100)
    with pytest.raises(ValueError):
        WaveformConfig(sample_rate=1e9, n_symbols=100, modulation="16qam")
    with pytest.raises(ValueError):  # non-integer sample count
        WaveformConfig(sample_rate=30e9, n_symbols=1001, symbol_rate=20e9)


def test_synthesize_matches_target_bands():
    grid, layout, tx, cfg = std_setup(n_symbols=80000, seed=3)
    w = synthesize_waveform(cfg, layout, tx)
    # total power within 0.05 dB of the target band power
    err_db = 10 * math.log10(w.mean_power() / w.reference_power)
    assert abs(err_db) < 0.05
    est = measure_psd(w, grid)
    h = tx.values.max()
    assert apsd(est, layout.f_a) == pytest.approx(h, rel=0.05)
    assert apsd(est, layout.f_b) == pytest.approx(h, rel=0.05)
    # notch: no measurable leakage in the central 85%
    inner = shrink_interval(layout.f_n, 0.85, grid)
    assert apsd(est, inner) < h * 1e-4  # >= 40 dB below the band level


def test_synthesize_zero_target():
    grid, layout, tx, cfg = std_setup()
    zero = Psd(grid, np.zeros(grid.n_points))
    w = synthesize_waveform(cfg, layout, zero)
    assert w.mean_power() == 0.0


def test_synthesize_rejects_super_nyquist_band():
    grid, layout, tx, _ = std_setup()
    cfg = WaveformConfig(sample_rate=40e9, n_symbols=2000)
    with pytest.raises(ValueError, match="Nyquist"):
        synthesize_waveform(cfg, layout, tx)


def test_band_symbols_invert_synthesis():
    grid, layout, tx, cfg = std_setup(seed=9)
    w = synthesize_waveform(cfg, layout, tx)
    sx, sy = band_symbols(w, layout.f_a)
    assert len(sx) == cfg.n_symbols
    # demodulating the clean waveform and rebuilding its band reproduces it:
    # NSR against itself is numerically zero
    assert measure_nsr(w, w, layout.f_a, cfg) < 1e-25


def test_propagate_unitary_when_linear_and_lossless():
    grid, layout, tx, cfg = std_setup(seed=1)
    w = synthesize_waveform(cfg, layout, tx)
    link = ndsf_link(gamma=0.0, alpha_db=0.0, amp_gain_db=0.0)
    out = propagate_span(w, link, SsfmControl())
    assert np.allclose(np.abs(np.fft.fft(out.x)), np.abs(np.fft.fft(w.x)), rtol=1e-9)
    assert out.mean_power() == pytest.approx(w.mean_power(), rel=1e-9)


def test_propagate_pure_loss():
    grid, layout, tx, cfg = std_setup(seed=1)
    w = synthesize_waveform(cfg, layout, tx)
    out = propagate_span(w, ndsf_link(gamma=0.0), SsfmControl())
    assert 10 * math.log10(out.mean_power() / w.mean_power()) == pytest.approx(
        -20.0, abs=1e-9)


def test_spm_phase_oracle():
    # beta2 = 0, alpha = 0, x-polarized tone: phase rotates by (8/9) gamma P L
    link = ndsf_link(gamma=1.3, dispersion=0.0, alpha_db=0.0, amp_gain_db=0.0,
                      amp_nf_db=0.0)
    power = 4e-3
    n = 4096
    w = FieldWaveform(np.full(n, math.sqrt(power), dtype=complex),
                      np.zeros(n, dtype=complex), FS, power)
    out = propagate_span(w, link, SsfmControl(nl_phase_cap=0.05))
    expected = (8 / 9) * link.gamma_si * power * link.span_length_m
    assert np.angle(out.x[0]) == pytest.approx(expected, abs=1e-12)
    assert out.mean_power() == pytest.approx(power, rel=1e-12)


def test_energy_conserved_without_loss():
    grid, layout, tx, cfg = std_setup(seed=2)
    w = synthesize_waveform(cfg, layout, tx)
    link = ndsf_link(alpha_db=0.0, amp_gain_db=0.0)
    out = propagate_span(w, link, SsfmControl())
    assert out.mean_power() == pytest.approx(w.mean_power(), rel=1e-9)


def test_transparent_link_preserves_power():
    grid, layout, tx, cfg = std_setup(seed=2)
    w = synthesize_waveform(cfg, layout, tx)
    out = propagate_link(w, ndsf_link(gamma=0.0, n_spans=3), SsfmControl())
    assert out.mean_power() == pytest.approx(w.mean_power(), rel=1e-9)


def test_propagate_link_is_span_plus_amplifier():
    grid, layout, tx, cfg = std_setup(seed=4)
    w = synthesize_waveform(cfg, layout, tx)
    ctrl = SsfmControl()
    link = ndsf_link(n_spans=1)
    manual = amplify(propagate_span(w, link, ctrl), link, ctrl)
    chained = propagate_link(w, link, ctrl)
    assert np.array_equal(manual.x, chained.x)
    assert np.array_equal(manual.y, chained.y)


def test_fixed_step_rejects_excess_nonlinear_phase():
    link = ndsf_link(dispersion=0.0, alpha_db=0.0, amp_gain_db=0.0, amp_nf_db=0.0)
    w = FieldWaveform(np.full(256, math.sqrt(0.5), dtype=complex),
                      np.zeros(256, dtype=complex), FS, 0.5)
    with pytest.raises(ValueError, match="0.3 rad"):
        propagate_span(w, link, SsfmControl(step_size=10e3))


def test_amplify_scaling_and_zero_gain_noise():
    grid, layout, tx, cfg = std_setup(seed=5)
    w = synthesize_waveform(cfg, layout, tx)
    quiet = amplify(w, ndsf_link(), SsfmControl())
    assert quiet.mean_power() == pytest.approx(100.0 * w.mean_power(), rel=1e-12)
    noisy_zero_gain = amplify(w, ndsf_link(amp_gain_db=0.0),
                              SsfmControl(noise_enabled=True, rng_seed=1))
    assert np.array_equal(noisy_zero_gain.x, w.x)  # (G-1) = 0: no added noise


def test_amplifier_chain_noise_matches_analytic_ase():
    # zero signal through 10 noisy spans: flat PSD equal to the chain formula
    grid = FrequencyGrid.centered(60e9, 50e6)
    link = ndsf_link(n_spans=10)
    analytic = ase_psd(link, grid).values[0]
    band = Interval(-20e9, 20e9)
    estimates = []
    for seed in range(16):
        w = FieldWaveform(np.zeros(20000, dtype=complex),
                          np.zeros(20000, dtype=complex), FS, 0.0)
        rx = propagate_link(w, link, SsfmControl(noise_enabled=True, rng_seed=seed))
        estimates.append(apsd(measure_psd(rx, grid), band))
    err_db = 10 * math.log10(np.mean(estimates) / analytic)
    assert abs(err_db) < 0.2


def test_measure_psd_white_noise_level():
    rng = np.random.default_rng(11)
    n = 1 << 17
    psd_target = 4e-17  # per two polarizations over fs
    sigma = math.sqrt(psd_target * FS / 2 / 2)  # per pol, split re/im
    w = FieldWaveform(sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n)),
                      sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n)),
                      FS, 0.0)
    grid = FrequencyGrid.centered(60e9, 50e6)
    est = apsd(measure_psd(w, grid), Interval(-25e9, 25e9))
    assert abs(10 * math.log10(est / psd_target)) < 0.1


def test_measure_psd_tone_power_parseval():
    n = 1 << 16
    t = np.arange(n) / FS
    power = 2.5e-3
    w = FieldWaveform(math.sqrt(power) * np.exp(2j * math.pi * 5e9 * t),
                      np.zeros(n, dtype=complex), FS, power)
    grid = FrequencyGrid.centered(40e9, 25e6)
    est = measure_psd(w, grid)
    assert est.total_power() == pytest.approx(power, rel=0.01)
    peak = np.argmax(est.values)
    assert abs(est.grid.frequencies()[peak] - 5e9) < 200e6


def test_measure_psd_edge_cases():
    grid = FrequencyGrid.centered(40e9, 50e6)
    zero = FieldWaveform(np.zeros(4096, dtype=complex), np.zeros(4096, dtype=complex),
                         FS, 0.0)
    assert measure_psd(zero, grid).total_power() == 0.0
    with pytest.raises(ValueError, match="few samples"):
        measure_psd(FieldWaveform(np.zeros(8, dtype=complex),
                                  np.zeros(8, dtype=complex), FS, 0.0),
                    grid, nperseg=64)


def test_measure_nsr_injected_noise_level():
    grid, layout, tx, cfg = std_setup(n_symbols=8000, seed=6)
    clean = synthesize_waveform(cfg, layout, tx)
    rng = np.random.default_rng(99)
    # white noise whose in-band part sits exactly 20 dB below the band power
    band_power_a = apsd(tx, layout.f_a) / 2 * layout.f_a.width  # per pol
    noise_psd = 0.01 * band_power_a / layout.f_a.width
    sigma = math.sqrt(noise_psd * FS / 2)
    n = len(clean.x)
    rx = FieldWaveform(clean.x + sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n)),
                       clean.y + sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n)),
                       FS, clean.reference_power)
    nsr = measure_nsr(rx, clean, layout.f_a, cfg)
    assert 10 * math.log10(nsr) == pytest.approx(-20.0, abs=0.1)


def test_measure_nsr_linear_channel_after_compensation():
    grid, layout, tx, cfg = std_setup(seed=7)
    w = synthesize_waveform(cfg, layout, tx)
    link = ndsf_link(gamma=0.0, n_spans=2)
    rx = propagate_link(w, link, SsfmControl())
    nsr = measure_nsr(rx, w, layout.f_a, cfg, link=link, n_spans=2)
    assert 10 * math.log10(max(nsr, 1e-40)) < -40.0
    # without compensation the dispersed signal is far from the reference
    assert measure_nsr(rx, w, layout.f_a, cfg) > 0.1


def test_measure_nsr_alignment_phase_invariance():
    grid, layout, tx, cfg = std_setup(seed=8)
    w = synthesize_waveform(cfg, layout, tx)
    link = ndsf_link(n_spans=1)
    rx = propagate_link(w, link, SsfmControl())
    base = measure_nsr(rx, w, layout.f_a, cfg, link=link, n_spans=1)
    rotated = FieldWaveform(rx.x * np.exp(0.7j), rx.y * np.exp(0.7j), FS,
                            rx.reference_power)
    assert measure_nsr(rotated, w, layout.f_a, cfg, link=link, n_spans=1) == \
        pytest.approx(base, rel=1e-12)
    with pytest.raises(ValueError, match="length"):
        measure_nsr(rx, FieldWaveform(w.x[:-2], w.y[:-2], FS, 0.0), layout.f_a, cfg)


def test_transmitter_noise_produces_constant_nsr():
    grid, layout, tx, cfg = std_setup(n_symbols=8000, seed=10, trx=10 ** (-2.0))
    clean_cfg = WaveformConfig(sample_rate=FS, n_symbols=8000, rng_seed=10)
    clean = synthesize_waveform(clean_cfg, layout, tx)
    noisy = synthesize_waveform(cfg, layout, tx)
    nsr_ref = measure_nsr(noisy, clean, layout.f_a, cfg)
    assert 10 * math.log10(nsr_ref) == pytest.approx(-20.0, abs=0.2)
    # gain on the band leaves the transmitter NSR unchanged (constant column)
    pert = apply_band_gains(noisy, layout, PerturbationPair(10 ** 0.2, 1.0))
    pert_ref = apply_band_gains(clean, layout, PerturbationPair(10 ** 0.2, 1.0))
    nsr_pert = measure_nsr(pert, pert_ref, layout.f_a, cfg)
    assert 10 * math.log10(nsr_pert) == pytest.approx(10 * math.log10(nsr_ref),
                                                      abs=0.05)


def test_apply_band_gains_matches_target_scaling():
    grid, layout, tx, cfg = std_setup(seed=12)
    from fwnl.spectra import apply_perturbation
    pair = PerturbationPair(10 ** 0.2, 10 ** -0.1)
    via_waveform = apply_band_gains(synthesize_waveform(cfg, layout, tx), layout, pair)
    via_target = synthesize_waveform(cfg, layout, apply_perturbation(tx, layout, pair))
    assert np.allclose(via_waveform.x, via_target.x, rtol=0, atol=1e-12)


def test_determinism_bit_identical():
    grid, layout, tx, cfg = std_setup(seed=13)
    link = ndsf_link(n_spans=2)
    ctrl = SsfmControl(noise_enabled=True, rng_seed=21)
    out1 = propagate_link(synthesize_waveform(cfg, layout, tx), link, ctrl)
    out2 = propagate_link(synthesize_waveform(cfg, layout, tx), link, ctrl)
    assert np.array_equal(out1.x, out2.x) and np.array_equal(out1.y, out2.y)
    psd1 = measure_psd(out1, grid)
    psd2 = measure_psd(out2, grid)
    assert np.array_equal(psd1.values, psd2.values)


def test_step_convergence_on_notch_apsd():
    grid, layout, tx, cfg = std_setup(n_symbols=2000, seed=14)
    link = ndsf_link(n_spans=10)
    inner = shrink_interval(layout.f_n, 0.85, grid)
    values = []
    for cap in (0.02, 0.01):
        w = synthesize_waveform(cfg, layout, tx)
        rx = propagate_link(w, link, SsfmControl(nl_phase_cap=cap, max_step=1900.0))
        values.append(apsd(measure_psd(rx, grid), inner))
    assert abs(10 * math.log10(values[0] / values[1])) < 0.1


def test_track_gain_levels_output_power():
    grid, layout, tx, cfg = std_setup(seed=15)
    w = synthesize_waveform(cfg, layout, tx)
    link = ndsf_link(amp_gain_db=17.0)  # wrong constant gain on purpose
    out = propagate_link(w, link, SsfmControl(gain_mode="track"))
    assert out.mean_power() == pytest.approx(w.reference_power, rel=1e-9)


def test_waveform_dump_round_trip(tmp_path):
    grid, layout, tx, cfg = std_setup(seed=16)
    w = synthesize_waveform(cfg, layout, tx)
    path = tmp_path / "wave.fwnl"
    save_waveform(path, w)
    raw = path.read_bytes()
    assert raw[:4] == b"FWNL"
    assert len(raw) == 32 + 2 * len(w.x) * 16
    back = load_waveform(path)
    assert back.sample_rate == w.sample_rate
    assert np.array_equal(back.x, w.x) and np.array_equal(back.y, w.y)
    with pytest.raises(ValueError, match="magic"):
        bad = tmp_path / "bad.fwnl"
        bad.write_bytes(b"X" * 64)
        load_waveform(bad)


def test_qpsk_modulation():
    grid, layout, tx, _ = std_setup()
    cfg = WaveformConfig(sample_rate=FS, n_symbols=2000, rng_seed=17,
                         modulation="qpsk")
    w = synthesize_waveform(cfg, layout, tx)
    sx, _ = band_symbols(w, layout.f_a)
    mags = np.abs(sx)
    assert np.allclose(mags, mags[0], rtol=1e-9)  # constant-modulus symbols
    assert w.mean_power() == pytest.approx(w.reference_power, rel=1e-9)
