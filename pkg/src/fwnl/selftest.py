"""Fast invariant suite behind the ``selftest`` subcommand.

Covers the algebraic identities the whole method rests on, on small grids:
partition of the GN integral into categories, multiset gain-scaling laws,
perturbation composition, forward-model consistency of the delta matrices,
category symmetries, and the constant-power expansion. Runs in seconds.
"""

from __future__ import annotations

import math

import numpy as np

from . import categories, estimator, gn_model, spectra

_CHECKS = []


def _check(name):
    def deco(fn):
        _CHECKS.append((name, fn))
        return fn
    return deco


def _small_setup(heights=(4e-12, 4e-12), seed=None):
    grid = spectra.FrequencyGrid.centered(80e9, 100e6)
    layout = spectra.symmetric_layout(grid, 16e9, 8e9)
    shape = spectra.ShapeSpec(height_a=heights[0], height_b=heights[1])
    tx = spectra.build_reference_spectrum(layout, shape, grid)
    if seed is not None:
        rng = np.random.default_rng(seed)
        vals = tx.values.copy()
        occ = vals > 0
        vals[occ] *= rng.uniform(0.3, 1.7, occ.sum())
        tx = spectra.Psd(grid, vals)
    link = gn_model.LinkParameters(gamma=1.3, dispersion=16.7, alpha_db=0.2,
                                   span_length=100.0, n_spans=3,
                                   amp_gain_db=20.0, amp_nf_db=4.5)
    return grid, layout, tx, link, gn_model.FwmKernelSpec()


@_check("partition: multiset categories sum to the total NLN PSD")
def _partition() -> float:
    grid, layout, tx, link, kernel = _small_setup(seed=7)
    out = spectra.FrequencyGrid(layout.f_n.lo, grid.df * 8, 9)
    total = gn_model.nln_psd(tx, link, kernel, out).values
    cats = [categories.category(*c) for c in
            (("A",) * 3, ("B", "A", "A"), ("B", "B", "A"), ("B",) * 3)]
    summed = np.zeros_like(total)
    for key in cats:
        summed += categories.nln_psd_multiset(tx, layout, link, kernel, key, out).values
    return float(np.max(np.abs(summed - total) / total))


@_check("scaling: category APSDs follow delta_a^mA * delta_b^mB")
def _scaling() -> float:
    grid, layout, tx, link, kernel = _small_setup()
    pair = spectra.PerturbationPair(2.0, 0.5)
    pert = spectra.apply_perturbation(tx, layout, pair)
    keys = [categories.category(*c) for c in
            (("A",) * 3, ("B", "A", "A"), ("B", "B", "A"), ("B",) * 3)]
    ref = categories.multiset_apsd_table(tx, layout, link, kernel, keys, layout.f_n, 0.85)
    per = categories.multiset_apsd_table(pert, layout, link, kernel, keys, layout.f_n, 0.85)
    worst = 0.0
    for key in keys:
        ma = key.multiplicity(categories.RegionLabel.A)
        mb = key.multiplicity(categories.RegionLabel.B)
        expected = ref[key] * pair.delta_a ** ma * pair.delta_b ** mb
        worst = max(worst, abs(per[key] - expected) / expected)
    return worst


@_check("perturbation: multiplicative composition is exact")
def _composition() -> float:
    grid, layout, tx, _, _ = _small_setup()
    p1 = spectra.PerturbationPair(1.2589, 0.7079)
    p2 = spectra.PerturbationPair(0.5012, 1.9953)
    once = spectra.apply_perturbation(
        spectra.apply_perturbation(tx, layout, p1), layout, p2)
    combined = spectra.apply_perturbation(
        tx, layout, spectra.PerturbationPair(p1.delta_a * p2.delta_a,
                                             p1.delta_b * p2.delta_b))
    denom = max(tx.values.max(), 1e-300)
    return float(np.max(np.abs(once.values - combined.values)) / denom)


@_check("forward model: delta matrix reproduces GN perturbed measurements")
def _forward() -> float:
    grid, layout, tx, link, kernel = _small_setup()
    basis = estimator.SINGLE_CHANNEL_APSD
    nln = [k for k in basis if k.is_nln]
    vals = categories.multiset_apsd_table(tx, layout, link, kernel, nln, layout.f_n, 0.85)
    vals[categories.ASE] = gn_model.ase_psd(link, grid).values[0]
    dec = categories.NoiseDecomposition(vals, "apsd")
    pairs = estimator.perturbation_grid((-2, 0, 2), (-2, 0, 2))
    dm = estimator.delta_matrix_apsd(pairs, basis)
    predicted = dm.predict(dec)
    worst = 0.0
    for pair, expect in zip(pairs, predicted):
        pert = spectra.apply_perturbation(tx, layout, pair)
        direct = sum(categories.multiset_apsd_table(
            pert, layout, link, kernel, nln, layout.f_n, 0.85).values())
        direct += vals[categories.ASE]
        worst = max(worst, abs(direct - expect) / expect)
    return worst


@_check("symmetry: intra category pairs agree for a symmetric spectrum")
def _symmetry() -> float:
    grid, layout, tx, link, kernel = _small_setup()
    report = categories.check_symmetries(tx, layout, link, kernel, max_points=16)
    return report.max_residual


@_check("constant power: pairs conserve power; expansion matches direct sums")
def _constant_power() -> float:
    grid, layout, tx, link, kernel = _small_setup()
    keys = [categories.category(*c) for c in
            (("A",) * 3, ("B", "A", "A"), ("B", "B", "A"), ("B",) * 3)]
    vals = categories.multiset_apsd_table(tx, layout, link, kernel, keys, layout.f_n, 0.85)
    dec = categories.NoiseDecomposition(vals, "apsd")
    k_a, k_b = spectra.relative_powers(tx, layout)
    worst = 0.0
    coeffs = estimator.constant_power_coeffs_apsd(dec, k_a, k_b)
    for da in (0.631, 0.794, 1.0, 1.259, 1.585):
        db = estimator.constant_power_delta_b(da, k_a, k_b)
        worst = max(worst, abs(k_a * da + k_b * db - 1.0))
        direct = (dec[keys[0]] * da ** 3 + dec[keys[1]] * da ** 2 * db
                  + dec[keys[2]] * da * db ** 2 + dec[keys[3]] * db ** 3)
        worst = max(worst, abs(coeffs.evaluate(da) - direct) / direct)
    return worst


_LIMITS = {
    "partition: multiset categories sum to the total NLN PSD": 1e-10,
    "scaling: category APSDs follow delta_a^mA * delta_b^mB": 1e-12,
    "perturbation: multiplicative composition is exact": 1e-15,
    "forward model: delta matrix reproduces GN perturbed measurements": 1e-10,
    "symmetry: intra category pairs agree for a symmetric spectrum": 1e-9,
    "constant power: pairs conserve power; expansion matches direct sums": 1e-10,
}


def run_selftest(verbose: bool = True) -> bool:
    ok = True
    for name, fn in _CHECKS:
        residual = fn()
        limit = _LIMITS[name]
        passed = math.isfinite(residual) and residual <= limit
        ok &= passed
        if verbose:
            status = "ok  " if passed else "FAIL"
            print(f"{status} {name}: residual {residual:.3e} (limit {limit:.0e})")
    return ok
