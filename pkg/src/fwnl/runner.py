"""Scenario orchestration: GN category tables, split-step measurement
sweeps, fits, and deterministic CSV emission.

The CSV contract (schema ``fwnl.results.v1``) has one row per
(span_count, mode, category): ``gn`` rows are direct GN-model category
values, ``ssfm`` rows raw per-instance measurements, ``fit`` rows the
least-squares estimates from the measurements. APSD values are reported in
dB relative to the reference-spectrum BOI average PSD (the usual
normalized view); NSR values are plain dB. Reruns with identical
configuration and seeds produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import categories, gn_model, spectra, ssfm
from .categories import ASE, TRX, NoiseDecomposition
from .config import Scenario, db_to_lin
from .estimator import (FitResult, constant_power_pairs,
                        delta_matrix_apsd, delta_matrix_nsr, fit,
                        fit_constant_power, perturbation_grid)
from .spectra import FrequencyGrid, apsd, bin_range, relative_powers, shrink_interval

__all__ = ["ResultRow", "ResultSet", "run_scenario", "compare"]

SCHEMA = "fwnl.results.v1"
_COLUMNS = ("span_count", "mode", "category", "value_db", "stderr_db",
            "residual_db", "condition_number", "realizations")


@dataclass(frozen=True)
class ResultRow:
    span_count: int
    mode: str          # gn | ssfm | fit
    category: str
    value_db: float
    stderr_db: float
    residual_db: float
    condition_number: float
    realizations: int


class ResultSet:
    """Ordered result rows with a stable CSV round trip."""

    def __init__(self, rows):
        self.rows = list(rows)

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)

    def select(self, mode: str | None = None, span: int | None = None):
        out = self.rows
        if mode is not None:
            out = [r for r in out if r.mode == mode]
        if span is not None:
            out = [r for r in out if r.span_count == span]
        return out

    def value(self, span: int, mode: str, category: str) -> float:
        for r in self.rows:
            if (r.span_count, r.mode, r.category) == (span, mode, category):
                return r.value_db
        raise KeyError((span, mode, category))

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema {SCHEMA}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_COLUMNS)
        for r in self.rows:
            writer.writerow([
                r.span_count, r.mode, r.category,
                f"{r.value_db:.6f}", f"{r.stderr_db:.6f}", f"{r.residual_db:.6f}",
                f"{r.condition_number:.6g}", r.realizations,
            ])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv_text())

    @classmethod
    def from_csv(cls, path) -> "ResultSet":
        rows = []
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        reader = csv.reader(lines)
        header = next(reader)
        if tuple(header) != _COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        for rec in reader:
            rows.append(ResultRow(
                span_count=int(rec[0]), mode=rec[1], category=rec[2],
                value_db=float(rec[3]), stderr_db=float(rec[4]),
                residual_db=float(rec[5]), condition_number=float(rec[6]),
                realizations=int(rec[7])))
        return cls(rows)


def _db(value: float) -> float:
    return 10.0 * math.log10(value) if value > 0 else math.nan


def _stderr_db(value: float, stderr: float) -> float:
    if not (value > 0) or not math.isfinite(stderr):
        return math.nan
    return 10.0 / math.log(10.0) * stderr / value


def _seed_for(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


# GN side -------------------------------------------------------------------


def _gn_reference(sc: Scenario, grid, layout, ref, kernel, n_spans: int) -> NoiseDecomposition:
    """Direct GN category values (plus analytic ASE / configured TRX) for
    one span count, in the scenario's fit domain."""
    link = sc.link(n_spans)
    nln_keys = [k for k in sc.basis() if k.is_nln]
    ase_value = gn_model.ase_psd(link, grid).values[0]
    if sc.fit == "apsd":
        vals = categories.multiset_apsd_table(
            ref, layout, link, kernel, nln_keys, layout.f_n, sc.notch_fraction)
        vals[ASE] = float(ase_value)
        return NoiseDecomposition(vals, "apsd")
    vals = categories.multiset_nsr_table(ref, layout, link, kernel, nln_keys, layout.f_a)
    vals[ASE] = float(ase_value) / apsd(ref, layout.f_a)
    vals[TRX] = db_to_lin(sc.trx_nsr_db) if sc.trx_nsr_db is not None else 0.0
    return NoiseDecomposition(vals, "nsr")


# SSFM side ------------------------------------------------------------------


def _notch_grid(sc: Scenario, grid, layout) -> FrequencyGrid:
    inner = shrink_interval(layout.f_n, sc.notch_fraction, grid)
    i0, i1 = bin_range(grid, inner)
    return FrequencyGrid(grid.f_start + i0 * grid.df, grid.df, i1 - i0)


def _pairs(sc: Scenario, ref, layout):
    if sc.constant_power:
        k_a, k_b = relative_powers(ref, layout)
        deltas = [db_to_lin(d) for d in sc.delta_a_db]
        return constant_power_pairs(deltas, k_a, k_b)
    return perturbation_grid(sc.delta_a_db, sc.delta_b_db)


def _max_step(sc: Scenario, layout) -> float | None:
    """Step bound keeping the widest mixing products' walk-off resolved:
    roughly one radian of relative dispersive phase across the occupied
    band per step."""
    beta2 = abs(sc.link(1).beta2)
    if beta2 == 0:
        return None
    boi_edge = layout.f_boi.hi
    edge = boi_edge if sc.channels == 1 else sc.channel_spacing + sc.ob_symbol_rate / 2
    return 1.0 / (4.0 * math.pi ** 2 * beta2 * edge * boi_edge)


def _run_realization(args) -> tuple[int, np.ndarray]:
    """One data realization: synthesize once, then propagate every
    perturbation instance, tapping the measurement at each requested span
    count. Returns (realization index, values[span, instance])."""
    sc, real = args
    grid = sc.build_grid()
    layout = sc.build_layout(grid)
    ref = spectra.build_reference_spectrum(layout, sc.reference_shape(layout), grid)
    pairs = _pairs(sc, ref, layout)
    spans = sorted(sc.spans)
    span_index = {s: i for i, s in enumerate(spans)}
    cfg = sc.waveform_config(rng_seed=_seed_for(sc.seed, 1, real))
    clean = ssfm.synthesize_waveform(cfg, layout, ref)
    notch_grid = _notch_grid(sc, grid, layout)
    values = np.zeros((len(spans), len(pairs)))
    trx_lin = db_to_lin(sc.trx_nsr_db) if sc.trx_nsr_db is not None else 0.0
    for inst, pair in enumerate(pairs):
        w = ssfm.apply_band_gains(clean, layout, pair)
        if trx_lin > 0:
            w = _add_trx_noise(w, layout, trx_lin, _seed_for(sc.seed, 2, real, inst))
        ctrl = ssfm.SsfmControl(
            step_size=sc.step_size_km * 1000.0 if sc.step_size_km else None,
            nl_phase_cap=sc.nl_phase_cap, max_step=_max_step(sc, layout),
            noise_enabled=sc.noise,
            rng_seed=_seed_for(sc.seed, 3, real, inst), gain_mode=sc.gain_mode)
        link = sc.link(spans[-1])

        def tap(span_no, wv, inst=inst):
            if span_no not in span_index:
                return
            if sc.fit == "apsd":
                # long segments: window leakage from the band edges into the
                # notch scales with the band gains and would masquerade as a
                # category; realizations already average the variance down
                est = ssfm.measure_psd(wv, notch_grid,
                                       nperseg=max(256, len(wv.x) // 8))
                values[span_index[span_no], inst] = est.values.mean()
            else:
                values[span_index[span_no], inst] = ssfm.measure_nsr(
                    wv, clean, layout.f_a, cfg, link=link, n_spans=span_no)

        ssfm.propagate_link(w, link, ctrl, tap=tap)
    return real, values


def _add_trx_noise(w, layout, nsr, seed):
    rng = np.random.default_rng([seed])
    spec = np.fft.fft(np.stack([w.x, w.y]), axis=1)
    n = spec.shape[1]
    for band in (layout.f_a, layout.f_b):
        bins = ssfm._band_bins(n, w.sample_rate, band)
        for pol in range(2):
            syms = np.fft.ifft(np.fft.ifftshift(spec[pol, bins]))
            noise = math.sqrt(0.5 * nsr) * np.abs(syms) * (
                rng.standard_normal(len(syms)) + 1j * rng.standard_normal(len(syms)))
            spec[pol, bins] = np.fft.fftshift(np.fft.fft(syms + noise))
    field = np.fft.ifft(spec, axis=1)
    return ssfm.FieldWaveform(field[0], field[1], w.sample_rate, w.reference_power)


def _ssfm_measurements(sc: Scenario) -> np.ndarray:
    """Averaged measurements, shape (n_spans_sorted, n_instances)."""
    tasks = [(sc, real) for real in range(sc.realizations)]
    if sc.threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=sc.threads) as pool:
            results = list(pool.map(_run_realization, tasks))
    else:
        results = [_run_realization(t) for t in tasks]
    results.sort(key=lambda item: item[0])
    stack = np.stack([vals for _, vals in results])
    return stack.mean(axis=0)


# assembly -------------------------------------------------------------------


def _fit_rows(sc: Scenario, span: int, result: FitResult, norm: float,
              n_real: int, meas_norm: float) -> list[ResultRow]:
    rows = []
    scale = norm if sc.fit == "apsd" else 1.0
    # residual relative to the measurement vector, as a power ratio in dB
    resid_db = _db(result.residual_norm / meas_norm) if meas_norm > 0 else math.nan
    if result.decomposition is not None:
        items = []
        for key in result.decomposition.values:
            lab = _fit_label(result, key)
            se = result.stderr[result.labels.index(lab)] if lab else math.nan
            items.append((key.name, result.decomposition[key], se))
    else:
        items = [(lab, float(c), float(se)) for lab, c, se in
                 zip(result.labels, result.coefficients, result.stderr)]
    for name, value, se in sorted(items, key=lambda it: it[0]):
        rows.append(ResultRow(
            span_count=span, mode="fit", category=name,
            value_db=_db(value / scale), stderr_db=_stderr_db(value, se),
            residual_db=resid_db, condition_number=result.condition_number,
            realizations=n_real))
    return rows


def _fit_label(result: FitResult, key) -> str | None:
    name = key.name
    if name in result.labels:
        return name
    for lab in result.labels:  # symmetry-constrained labels like "[A,A,A]=[B,B,B]"
        if name in lab.split("="):
            return lab
    return None


def run_scenario(sc: Scenario) -> ResultSet:
    """Execute one scenario and return its result rows (see module docstring
    for the emission rules per mode)."""
    sc.validate()
    grid = sc.build_grid()
    layout = sc.build_layout(grid)
    ref = spectra.build_reference_spectrum(layout, sc.reference_shape(layout), grid)
    kernel = sc.kernel()
    pairs = _pairs(sc, ref, layout)
    norm = apsd(ref, layout.f_boi)
    rows: list[ResultRow] = []

    if sc.mode in ("gn", "both"):
        for span in sorted(sc.spans):
            dec = _gn_reference(sc, grid, layout, ref, kernel, span)
            scale = norm if sc.fit == "apsd" else 1.0
            for key, value in sorted(dec.items(), key=lambda kv: kv[0].name):
                rows.append(ResultRow(
                    span_count=span, mode="gn", category=key.name,
                    value_db=_db(value / scale), stderr_db=math.nan,
                    residual_db=math.nan, condition_number=math.nan, realizations=0))

    if sc.mode in ("ssfm", "both"):
        meas = _ssfm_measurements(sc)
        spans = sorted(sc.spans)
        scale = norm if sc.fit == "apsd" else 1.0
        for si, span in enumerate(spans):
            for inst in range(meas.shape[1]):
                rows.append(ResultRow(
                    span_count=span, mode="ssfm", category=f"measured[{inst:02d}]",
                    value_db=_db(meas[si, inst] / scale), stderr_db=math.nan,
                    residual_db=math.nan, condition_number=math.nan,
                    realizations=sc.realizations))
            if not sc.fit_enabled:
                continue
            if sc.constant_power:
                k_a, k_b = relative_powers(ref, layout)
                deltas = [db_to_lin(d) for d in sc.delta_a_db]
                result = fit_constant_power(meas[si], deltas, k_a, k_b,
                                            mode=sc.fit, symmetry_constrained=True)
            else:
                dm = (delta_matrix_apsd(pairs, sc.basis()) if sc.fit == "apsd"
                      else delta_matrix_nsr(pairs, sc.basis()))
                result = fit(meas[si], dm)
            rows.extend(_fit_rows(sc, span, result, norm, sc.realizations,
                                  float(np.linalg.norm(meas[si]))))

    return ResultSet(rows)


def compare(result_a: ResultSet, result_b: ResultSet, mode_a: str = "fit",
            mode_b: str = "gn") -> list[tuple[int, str, float]]:
    """Per-(span, category) dB differences between two result sets.

    Requires matching span sweeps and category bases; returns NaN where
    either side is non-positive (its value_db is already NaN).
    """
    def table(rs, mode):
        out = {}
        for r in rs.select(mode=mode):
            if r.category.startswith("measured["):
                continue
            out[(r.span_count, r.category)] = r.value_db
        return out

    ta = table(result_a, mode_a)
    tb = table(result_b, mode_b)
    if set(ta) != set(tb):
        only_a = sorted(set(ta) - set(tb))[:4]
        only_b = sorted(set(tb) - set(ta))[:4]
        raise ValueError(f"basis mismatch between result sets "
                         f"(only in A: {only_a}, only in B: {only_b})")
    return [(span, cat, ta[(span, cat)] - tb[(span, cat)])
            for span, cat in sorted(ta)]
