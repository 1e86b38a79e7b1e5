"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 4 and 5 run scaled-down versions of the verification study (fewer
realizations and symbols than a production run) and dominate the suite's
runtime; everything else is algebra on small grids.
"""

import itertools
import math

import numpy as np
import pytest

import fwnl.categories as categories
import fwnl.gn_model as gn_model
from fwnl.categories import ASE, TRX, NoiseDecomposition, category
from fwnl.config import Scenario, db_to_lin
from fwnl.estimator import (SINGLE_CHANNEL_APSD, SINGLE_CHANNEL_NSR,
                            constant_power_coeffs_apsd,
                            constant_power_coeffs_nsr, constant_power_delta_b,
                            constant_power_pairs, delta_matrix_apsd,
                            delta_matrix_nsr, fit, fit_constant_power,
                            perturbation_grid, reference_vector)
from fwnl.gn_model import FwmKernelSpec, ase_psd, nln_psd
from fwnl.runner import run_scenario
from fwnl.spectra import (FrequencyGrid, PerturbationPair, Psd, ShapeSpec,
                          apply_perturbation, apsd, build_reference_spectrum,
                          symmetric_layout)
from conftest import INTRA_KEYS, ndsf_link

SEED = 20240817


def _report(num: int, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} - {detail}")


@pytest.fixture(scope="module")
def kernel():
    return FwmKernelSpec()


@pytest.fixture(scope="module")
def std_scenario(kernel):
    """Standard verification scenario: 20+20 GHz sub-carriers around a
    10 GHz notch at 2 dBm, mirror-exact layout, 50 MHz analysis grid."""
    grid = FrequencyGrid.centered(200e9, 50e6)
    layout = symmetric_layout(grid, 20e9, 10e9)
    height = 1e-3 * 10 ** 0.2 / 40e9
    tx = build_reference_spectrum(layout, ShapeSpec(height_a=height, height_b=height),
                                  grid)
    return grid, layout, tx


@pytest.fixture(scope="module")
def apsd_reference(std_scenario, kernel):
    grid, layout, tx = std_scenario
    link = ndsf_link(n_spans=10)
    vals = categories.multiset_apsd_table(tx, layout, link, kernel, INTRA_KEYS,
                                          layout.f_n, 0.85)
    vals[ASE] = float(ase_psd(link, grid).values[0])
    return NoiseDecomposition(vals, "apsd")


@pytest.fixture(scope="module")
def nsr_reference(std_scenario, kernel):
    grid, layout, tx = std_scenario
    link = ndsf_link(n_spans=10)
    vals = categories.multiset_nsr_table(tx, layout, link, kernel, INTRA_KEYS,
                                         layout.f_a)
    vals[ASE] = float(ase_psd(link, grid).values[0]) / apsd(tx, layout.f_a)
    vals[TRX] = 1e-3
    return NoiseDecomposition(vals, "nsr")


def test_criterion_1_partition_identity(kernel):
    """Multiset categories sum to the total NLN PSD pointwise, randomized.

    One conditioned-integration pass per spectrum covers all four multisets
    at once; the total comes from the independent unconditioned quadrature.
    """
    grid = FrequencyGrid.centered(512 * 100e6, 100e6)
    layout = symmetric_layout(grid, 16e9, 8e9)
    link = ndsf_link(n_spans=4)
    ids = layout.region_ids()
    occ_bins = np.flatnonzero((ids == 0) | (ids == 1))
    rng = np.random.default_rng(SEED)
    out_bins = np.linspace(8, grid.n_points - 9, 16).round().astype(int)
    out = FrequencyGrid(grid.f_start + out_bins[0] * grid.df,
                        grid.df * (out_bins[1] - out_bins[0]), len(out_bins))
    worst = 0.0
    for _ in range(50):
        vals = np.zeros(grid.n_points)
        vals[occ_bins] = 4e-14 * rng.uniform(0.2, 1.5, occ_bins.size)
        tx = Psd(grid, vals)
        total = nln_psd(tx, link, kernel, out).values
        table = categories._conditioned_table(
            tx, layout, link, kernel, categories._out_indices(grid, out))
        parts = np.zeros(out.n_points)
        for key in INTRA_KEYS:
            for triple in key.arrangements():
                parts += table[categories._triple_id(triple)]
        with np.errstate(invalid="ignore"):
            resid = np.where(total > 0, np.abs(parts - total) / total, np.abs(parts))
        worst = max(worst, float(resid.max()))
    ok = worst <= 1e-10
    _report(1, ok, f"partition identity worst relative residual {worst:.3e} (<= 1e-10)")
    assert ok


def test_criterion_2_scaling_laws(small_setup, kernel):
    """Category APSDs scale as delta_a^mA delta_b^mB; the total is cubic."""
    grid, layout, tx = small_setup
    link = ndsf_link()
    ref = categories.multiset_apsd_table(tx, layout, link, kernel, INTRA_KEYS,
                                         layout.f_n, 0.85)
    worst = 0.0
    for da, db in itertools.product((0.5, 1.0, 2.0), repeat=2):
        pert = apply_perturbation(tx, layout, PerturbationPair(da, db))
        per = categories.multiset_apsd_table(pert, layout, link, kernel, INTRA_KEYS,
                                             layout.f_n, 0.85)
        for key in INTRA_KEYS:
            expect = (ref[key] * da ** key.multiplicity(categories.RegionLabel.A)
                      * db ** key.multiplicity(categories.RegionLabel.B))
            worst = max(worst, abs(per[key] - expect) / expect)
    out = FrequencyGrid(layout.f_n.lo, grid.df * 16, 4)
    base = nln_psd(tx, link, kernel, out).values
    for g in (0.5, 2.0):
        scaled = nln_psd(Psd(grid, tx.values * g), link, kernel, out).values
        worst = max(worst, float(np.max(np.abs(scaled - g ** 3 * base) / (g ** 3 * base))))
    ok = worst <= 1e-12
    _report(2, ok, f"gain scaling worst relative residual {worst:.3e} (<= 1e-12)")
    assert ok


def test_criterion_3_synthetic_recovery(apsd_reference, nsr_reference):
    """Both fits recover GN-generated reference vectors; noisy Monte-Carlo
    recovers dominant categories within 0.5 dB."""
    pairs = perturbation_grid(range(-2, 3), range(-2, 3))
    worst_clean = 0.0
    noisy_fail = []
    rng = np.random.default_rng(SEED + 1)
    for ref, basis, dm in (
            (apsd_reference, SINGLE_CHANNEL_APSD, delta_matrix_apsd(pairs, SINGLE_CHANNEL_APSD)),
            (nsr_reference, SINGLE_CHANNEL_NSR, delta_matrix_nsr(pairs, SINGLE_CHANNEL_NSR))):
        clean = dm.predict(ref)
        result = fit(clean, dm)
        rec = reference_vector(result.decomposition, basis)
        truth = reference_vector(ref, basis)
        worst_clean = max(worst_clean, float(np.max(np.abs(rec - truth) / truth)))
        # dominant categories under 0.1 dB multiplicative noise: at least a
        # 10 dB estimate-to-noise margin
        sigma = math.log(10) / 10 * 0.1 * float(np.mean(clean))
        se = sigma * np.sqrt(np.diag(np.linalg.inv(dm.matrix.T @ dm.matrix)))
        dominant = [(i, k) for i, k in enumerate(basis) if truth[i] >= 10 * se[i]]
        assert dominant, "expected at least one dominant category"
        errors = {k: [] for _, k in dominant}
        for _ in range(120):
            noisy = clean * 10 ** (rng.normal(0.0, 0.1, clean.size) / 10.0)
            res = fit(noisy, dm)
            for i, k in dominant:
                errors[k].append(abs(10 * math.log10(res.decomposition[k] / truth[i])))
        for _, k in dominant:
            if np.mean(errors[k]) > 0.5:
                noisy_fail.append((k.name, np.mean(errors[k])))
    ok = worst_clean <= 1e-9 and not noisy_fail
    _report(3, ok, f"clean recovery {worst_clean:.2e} (<= 1e-9); "
                   f"noisy failures {noisy_fail if noisy_fail else 'none'}")
    assert ok


@pytest.fixture(scope="module")
def single_channel_sweep():
    sc = Scenario(spans=(5, 10, 15), realizations=8, n_symbols=4000,
                  mode="both", fit="apsd", seed=SEED, channels=1)
    return run_scenario(sc)


def test_criterion_4_gn_vs_ssfm_single_channel(single_channel_sweep):
    """Fitted [A,A,A] and [B,A,A] notch APSDs agree with direct GN
    conditioned integrals within 1 dB at 5, 10 and 15 spans."""
    rs = single_channel_sweep
    diffs = {}
    for span in (5, 10, 15):
        for cat in ("[A,A,A]", "[B,A,A]"):
            diffs[(span, cat)] = (rs.value(span, "fit", cat)
                                  - rs.value(span, "gn", cat))
    worst = max(abs(d) for d in diffs.values())
    ok = worst <= 1.0
    detail = ", ".join(f"{s} spans {c}: {d:+.2f} dB" for (s, c), d in diffs.items())
    _report(4, ok, f"worst |fit - GN| = {worst:.2f} dB (<= 1.0). {detail}")
    assert ok


def test_criterion_5_wdm_xpm(kernel):
    """3-channel scenario at 10 spans: fitted [OB,OB,A] within 1.5 dB of GN
    and equal to fitted [OB,OB,B] within 0.5 dB."""
    sc = Scenario(channels=3, spans=(10,), realizations=3, n_symbols=4000,
                  mode="both", fit="apsd", seed=SEED + 2)
    rs = run_scenario(sc)
    xpm_a = rs.value(10, "fit", "[OB,OB,A]")
    xpm_b = rs.value(10, "fit", "[OB,OB,B]")
    gn_a = rs.value(10, "gn", "[OB,OB,A]")
    d_gn = xpm_a - gn_a
    d_sym = xpm_a - xpm_b
    ok = abs(d_gn) <= 1.5 and abs(d_sym) <= 0.5
    _report(5, ok, f"[OB,OB,A] fit - GN = {d_gn:+.2f} dB (<= 1.5); "
                   f"[OB,OB,A] - [OB,OB,B] = {d_sym:+.2f} dB (<= 0.5)")
    assert ok


def test_criterion_6_ase_recovery(std_scenario, kernel):
    """Noise-enabled simulation: fitted ASE matches the amplifier-chain
    PSD within 0.5 dB and is stable across disjoint perturbation subsets."""
    from fwnl.runner import _ssfm_measurements
    grid, layout, tx = std_scenario
    sc = Scenario(spans=(10,), realizations=1, n_symbols=4000, mode="ssfm",
                  fit="apsd", seed=SEED + 3, noise=True)
    meas = _ssfm_measurements(sc)[0]
    pairs = perturbation_grid(sc.delta_a_db, sc.delta_b_db)
    analytic = float(ase_psd(ndsf_link(n_spans=10), grid).values[0])

    def ase_of(indices):
        dm = delta_matrix_apsd([pairs[i] for i in indices], SINGLE_CHANNEL_APSD)
        return fit(meas[list(indices)], dm).decomposition[ASE]

    full = ase_of(range(25))
    even = ase_of(range(0, 25, 2))
    odd = ase_of(range(1, 25, 2))
    d_analytic = 10 * math.log10(full / analytic)
    d_even = 10 * math.log10(even / full)
    d_odd = 10 * math.log10(odd / full)
    ok = abs(d_analytic) <= 0.5 and abs(d_even) <= 0.3 and abs(d_odd) <= 0.3
    _report(6, ok, f"ASE fit - analytic = {d_analytic:+.2f} dB (<= 0.5); "
                   f"subset deviations {d_even:+.2f} / {d_odd:+.2f} dB (<= 0.3)")
    assert ok


def test_criterion_7_constant_power_suite(apsd_reference, nsr_reference):
    """Constant-power pairs conserve power exactly; the coefficient
    expansion matches direct sums; the symmetry-constrained fit recovers
    {u, v, ASE} within 0.6 dB of the variable-power fit."""
    # power conservation, bitwise at k = 1/2
    deltas = [db_to_lin(d) for d in np.arange(-2.0, 2.5, 0.5)]
    conserve_ok = all(0.5 * p.delta_a + 0.5 * p.delta_b == 1.0
                      for p in constant_power_pairs(deltas, 0.5, 0.5))

    # coefficient expansion against direct category sums at 5 gains
    worst_poly = 0.0
    for dec, maker, denom in ((apsd_reference, constant_power_coeffs_apsd, 0),
                              (nsr_reference, constant_power_coeffs_nsr, 1)):
        coeffs = maker(dec, 0.5, 0.5)
        for da in (10 ** -0.2, 10 ** -0.1, 1.0, 10 ** 0.1, 10 ** 0.2):
            db = constant_power_delta_b(da, 0.5, 0.5)
            direct = (dec[INTRA_KEYS[0]] * da ** 3 + dec[INTRA_KEYS[1]] * da ** 2 * db
                      + dec[INTRA_KEYS[2]] * da * db ** 2 + dec[INTRA_KEYS[3]] * db ** 3)
            direct /= da ** denom
            worst_poly = max(worst_poly, abs(coeffs.evaluate(da) - direct) / direct)

    # symmetry-constrained recovery from GN category values. At exactly
    # k_a = k_b the three unknowns lose one dimension along the constant-
    # power curve (reported below), so the recovery is exercised at a
    # slightly asymmetric split.
    k_a, k_b = 0.45, 0.55
    dec = apsd_reference
    da = np.array([db_to_lin(d) for d in np.arange(-2.0, 2.5, 0.5)])
    dbv = np.array([constant_power_delta_b(d, k_a, k_b) for d in da])
    y = (dec[INTRA_KEYS[0]] * da ** 3 + dec[INTRA_KEYS[1]] * da ** 2 * dbv
         + dec[INTRA_KEYS[2]] * da * dbv ** 2 + dec[INTRA_KEYS[3]] * dbv ** 3
         + dec[ASE])
    sym = fit_constant_power(y, da, k_a, k_b, mode="apsd", symmetry_constrained=True)
    grid25 = perturbation_grid(range(-2, 3), range(-2, 3))
    dm = delta_matrix_apsd(grid25, SINGLE_CHANNEL_APSD)
    variable = fit(dm.predict(dec), dm).decomposition
    worst_rec = 0.0
    for keys, label in (((INTRA_KEYS[0], INTRA_KEYS[3]), "[A,A,A]=[B,B,B]"),
                        ((INTRA_KEYS[1], INTRA_KEYS[2]), "[B,A,A]=[B,B,A]"),
                        ((ASE,), "ASE")):
        for key in keys:
            worst_rec = max(worst_rec, abs(10 * math.log10(sym[label] / variable[key])))

    # the k_a = k_b degeneracy is detected and reported, not silently fit
    degen = fit_constant_power(y, da, 0.5, 0.5, mode="apsd", symmetry_constrained=True)
    reported = any("null" in n or "k_a = k_b" in n for n in degen.degeneracy)

    ok = (conserve_ok and worst_poly <= 1e-10 and worst_rec <= 0.6 and reported)
    _report(7, ok, f"conservation exact: {conserve_ok}; polynomial vs direct "
                   f"{worst_poly:.2e} (<= 1e-10); recovery {worst_rec:.2e} dB "
                   f"(<= 0.6); equal-k degeneracy reported: {reported}")
    assert ok


def test_criterion_8_symmetry_residuals(std_scenario, kernel):
    """Category symmetry residuals at or below 1e-9 for the symmetric
    layout, intra (single channel) and inter (3-channel) pairs."""
    grid, layout, tx = std_scenario
    link = ndsf_link(n_spans=5)
    intra = categories.check_symmetries(tx, layout, link, kernel, max_points=24)
    sc = Scenario(channels=3)
    wgrid = sc.build_grid()
    wlayout = sc.build_layout(wgrid)
    wtx = build_reference_spectrum(wlayout, sc.reference_shape(wlayout), wgrid)
    inter = categories.check_symmetries(wtx, wlayout, link, kernel, max_points=16)
    inter_applicable = [c for c in inter.checks if "OB" in c.name and c.applicable]
    worst = max(intra.max_residual, inter.max_residual)
    ok = (intra.symmetric_input and inter.symmetric_input and len(inter_applicable) == 2
          and worst <= 1e-9)
    _report(8, ok, f"worst symmetry residual {worst:.3e} (<= 1e-9), "
                   f"{len(inter_applicable)} inter pairs checked")
    assert ok


def test_criterion_9_determinism(tmp_path):
    """Identical seeds give byte-identical sweep CSVs, serial or parallel."""
    def scenario(threads):
        return Scenario(spans=(2,), delta_a_db=(-2.0, 0.0, 2.0),
                        delta_b_db=(-2.0, 0.0, 2.0), n_symbols=1200,
                        realizations=2, mode="both", fit="apsd", seed=SEED + 4,
                        noise=True, grid_bandwidth=120e9, threads=threads)
    first = run_scenario(scenario(1)).to_csv_text()
    second = run_scenario(scenario(1)).to_csv_text()
    parallel = run_scenario(scenario(2)).to_csv_text()
    ok = first == second == parallel
    _report(9, ok, f"{len(first.splitlines())}-row CSV byte-identical across "
                   "reruns and worker counts")
    assert ok
