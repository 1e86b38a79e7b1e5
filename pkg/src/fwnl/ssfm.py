"""Split-step fiber simulation: waveform synthesis, dual-polarization
Manakov propagation over identical amplified spans, and receiver-side
measurements.

Waveforms are complex baseband envelopes, circular in time (periodic
boundary), which makes rectangular-spectrum sub-carriers exact: symbols map
one-to-one onto contiguous FFT bins, so synthesis and matched-filter
demodulation invert each other bit-exactly on a clean channel.

The propagator pairs the 8/9 Manakov nonlinearity with the 16/27 GN-model
polarization coefficient so the two oracles share one convention.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.signal import welch

from .gn_model import PLANCK, LinkParameters
from .spectra import FrequencyGrid, Interval, Psd, SpectralLayout, PerturbationPair

__all__ = [
    "WaveformConfig",
    "FieldWaveform",
    "SsfmControl",
    "synthesize_waveform",
    "band_symbols",
    "apply_band_gains",
    "propagate_span",
    "amplify",
    "propagate_link",
    "measure_psd",
    "measure_nsr",
    "save_waveform",
    "load_waveform",
]

_MANAKOV = 8.0 / 9.0
_NOISE_STREAM = 0x0A5E   # rng stream tags; arbitrary but fixed
_DATA_STREAM = 0xDA7A
_TRX_STREAM = 0x7949


@dataclass(frozen=True)
class WaveformConfig:
    """Sampling and modulation parameters for waveform synthesis."""

    sample_rate: float            # Hz
    n_symbols: int                # per BOI sub-carrier
    symbol_rate: float = 20e9     # Baud, BOI sub-carriers
    ob_symbol_rate: float = 50e9  # Baud, out-of-band channels
    modulation: str = "gaussian"  # or "qpsk"
    rng_seed: int = 0
    trx_nsr: float = 0.0          # linear transmitter noise-to-signal ratio

    def __post_init__(self):
        if self.sample_rate <= 0 or self.symbol_rate <= 0 or self.ob_symbol_rate <= 0:
            raise ValueError("rates must be positive")
        if self.n_symbols < 2:
            raise ValueError("n_symbols must be >= 2")
        if self.modulation not in ("gaussian", "qpsk"):
            raise ValueError(f"unknown modulation {self.modulation!r}")
        if self.trx_nsr < 0:
            raise ValueError("trx_nsr must be >= 0")
        n = self.n_symbols / self.symbol_rate * self.sample_rate
        if abs(n - round(n)) > 1e-6:
            raise ValueError("sample_rate times the waveform duration must be an "
                             "integer sample count")

    @property
    def duration(self) -> float:
        return self.n_symbols / self.symbol_rate

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))


@dataclass
class FieldWaveform:
    """Dual-polarization complex baseband field, plus nominal launch power."""

    x: np.ndarray
    y: np.ndarray
    sample_rate: float
    reference_power: float  # W

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.complex128)
        self.y = np.ascontiguousarray(self.y, dtype=np.complex128)
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ValueError("polarizations must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(self.x.view(float))) and
                np.all(np.isfinite(self.y.view(float)))):
            raise ValueError("waveform samples must be finite")

    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.x) ** 2 + np.abs(self.y) ** 2))


@dataclass(frozen=True)
class SsfmControl:
    """Step-size policy, amplifier noise switch and seeding.

    The adaptive policy caps the peak nonlinear phase per step; ``max_step``
    additionally bounds the step so the dispersive walk-off of the widest
    mixing products stays resolved (the phase cap alone lets steps grow as
    the power decays, which is exact for the phase but not for strongly
    phase-mismatched four-wave products).
    """

    step_size: float | None = None   # m; None selects the adaptive policy
    nl_phase_cap: float = 0.02       # rad per step on the peak power (adaptive)
    max_step: float | None = None    # m; optional cap on adaptive steps
    noise_enabled: bool = False
    rng_seed: int = 0
    gain_mode: str = "constant"      # or "track": level output to reference power

    def __post_init__(self):
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.max_step is not None and not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if not 0 < self.nl_phase_cap <= 0.1:
            raise ValueError("nl_phase_cap must lie in (0, 0.1] rad")
        if self.gain_mode not in ("constant", "track"):
            raise ValueError(f"unknown gain_mode {self.gain_mode!r}")


def _band_bins(n: int, fs: float, band: Interval) -> np.ndarray:
    """FFT bin indices covering ``band``, in ascending-frequency order."""
    df = fs / n
    k0 = band.lo / df
    k1 = band.hi / df
    if abs(k0 - round(k0)) > 1e-6 or abs(k1 - round(k1)) > 1e-6:
        raise ValueError(
            f"band [{band.lo}, {band.hi}) Hz does not align with the simulation "
            f"bin width {df:.6g} Hz")
    if band.lo < -fs / 2 - 1e-6 * df or band.hi > fs / 2 + 1e-6 * df:
        raise ValueError("bandwidth exceeds Nyquist limit")
    return np.arange(int(round(k0)), int(round(k1))) % n


def _constant_bands(psd: Psd) -> list[tuple[Interval, float]]:
    """Contiguous constant-height nonzero runs of a piecewise-constant PSD."""
    v = psd.values
    grid = psd.grid
    bands = []
    nz = np.flatnonzero(v > 0)
    if nz.size == 0:
        return bands
    splits = np.flatnonzero(np.diff(nz) > 1)
    for seg in np.split(nz, splits + 1):
        h = v[seg[0]]
        if np.any(np.abs(v[seg] - h) > 1e-9 * h):
            raise ValueError("target PSD is not piecewise constant per band")
        lo = grid.f_start + seg[0] * grid.df
        hi = grid.f_start + (seg[-1] + 1) * grid.df
        bands.append((Interval(lo, hi), float(h)))
    return bands


def _draw_symbols(rng: np.random.Generator, n: int, modulation: str) -> np.ndarray:
    if modulation == "gaussian":
        return math.sqrt(0.5) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    pts = math.sqrt(0.5) * np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j])
    return pts[rng.integers(0, 4, size=n)]


def synthesize_waveform(cfg: WaveformConfig, layout: SpectralLayout,
                        target_psd: Psd) -> FieldWaveform:
    """Synthesize a dual-polarization waveform realizing ``target_psd``.

    Every contiguous constant band of the target becomes one Nyquist
    (zero roll-off) sub-carrier whose symbol rate equals its width, carried
    half per polarization. Symbols are independent per band and
    polarization; transmitter noise (when ``cfg.trx_nsr`` > 0) is added per
    symbol with variance proportional to that symbol's power, so the
    measured transmitter NSR is gain-independent.
    """
    fs = cfg.sample_rate
    n = cfg.n_samples
    duration = cfg.duration
    spectra = np.zeros((2, n), dtype=np.complex128)
    ref_power = 0.0
    for band_idx, (band, height) in enumerate(_constant_bands(target_psd)):
        n_sym = band.width * duration
        if abs(n_sym - round(n_sym)) > 1e-6:
            raise ValueError(
                f"band of width {band.width:.6g} Hz is not an integer number of "
                "symbols over the waveform duration; adjust n_symbols")
        n_sym = int(round(n_sym))
        bins = _band_bins(n, fs, band)
        if bins.size != n_sym:
            raise AssertionError("band bin count does not match symbol count")
        scale = math.sqrt(height * fs * n / (2.0 * n_sym))
        for pol in range(2):
            rng = np.random.default_rng([cfg.rng_seed, _DATA_STREAM, band_idx, pol])
            syms = _draw_symbols(rng, n_sym, cfg.modulation)
            if cfg.trx_nsr > 0:
                trx_rng = np.random.default_rng([cfg.rng_seed, _TRX_STREAM, band_idx, pol])
                noise = math.sqrt(0.5 * cfg.trx_nsr) * np.abs(syms) * (
                    trx_rng.standard_normal(n_sym) + 1j * trx_rng.standard_normal(n_sym))
                syms = syms + noise
            spectra[pol, bins] = scale * np.fft.fftshift(np.fft.fft(syms))
        ref_power += height * band.width
    field = np.fft.ifft(spectra, axis=1)
    return FieldWaveform(field[0], field[1], fs, ref_power)


def band_symbols(w: FieldWaveform, band: Interval) -> tuple[np.ndarray, np.ndarray]:
    """Matched-filter demodulation of one rectangular band: brick-wall
    band-select plus symbol-rate sampling. Returns unnormalized symbol
    estimates per polarization (absolute scale is left to alignment).
    """
    n = len(w.x)
    bins = _band_bins(n, w.sample_rate, band)
    out = []
    for pol in (w.x, w.y):
        spec = np.fft.fft(pol)
        out.append(np.fft.ifft(np.fft.ifftshift(spec[bins])))
    return out[0], out[1]


def apply_band_gains(w: FieldWaveform, layout: SpectralLayout,
                     pair: PerturbationPair) -> FieldWaveform:
    """Scale the F_A / F_B band contents of a waveform by the pair's linear
    power gains (field scaled by the square roots). Equivalent to
    synthesizing from the perturbed target with the same symbols."""
    n = len(w.x)
    spec = np.fft.fft(np.stack([w.x, w.y]), axis=1)
    for band, gain in ((layout.f_a, pair.delta_a), (layout.f_b, pair.delta_b)):
        bins = _band_bins(n, w.sample_rate, band)
        spec[:, bins] *= math.sqrt(gain)
    field = np.fft.ifft(spec, axis=1)
    out = FieldWaveform(field[0], field[1], w.sample_rate, w.reference_power)
    out.reference_power = out.mean_power()
    return out


def _linear_operator(omega2: np.ndarray, link: LinkParameters, h: float) -> np.ndarray:
    return np.exp((0.5j * link.beta2 * h) * omega2 - link.alpha_field * h)


def propagate_span(w: FieldWaveform, link: LinkParameters,
                   ctrl: SsfmControl) -> FieldWaveform:
    """Symmetrized split-step integration of the Manakov equation over one
    span: dispersion and loss in the linear step, a common nonlinear phase
    rotation of (8/9) gamma (|Ex|^2 + |Ey|^2) h for both polarizations.

    The adaptive policy caps the peak nonlinear phase per step at
    ``ctrl.nl_phase_cap``; consecutive linear half-steps are merged.
    """
    n = len(w.x)
    fs = w.sample_rate
    span = link.span_length_m
    field = np.stack([w.x, w.y])
    omega2 = (2.0 * math.pi * np.fft.fftfreq(n, d=1.0 / fs)) ** 2
    g_eff = _MANAKOV * link.gamma_si

    def linear(h: float) -> None:
        if h <= 0:
            return
        spec = np.fft.fft(field, axis=1)
        spec *= _linear_operator(omega2, link, h)
        field[:] = np.fft.ifft(spec, axis=1)

    def nonlinear(h: float) -> float:
        power = np.abs(field[0]) ** 2 + np.abs(field[1]) ** 2
        peak_phase = g_eff * h * float(power.max(initial=0.0))
        if peak_phase > 0.3:
            raise ValueError(
                f"nonlinear phase per step {peak_phase:.3f} rad exceeds 0.3 rad; "
                "reduce the step size")
        field[:] *= np.exp((1j * g_eff * h) * power)
        return peak_phase

    def next_step(remaining: float) -> float:
        if ctrl.step_size is not None:
            return min(ctrl.step_size, remaining)
        power = np.abs(field[0]) ** 2 + np.abs(field[1]) ** 2
        peak = float(power.max(initial=0.0))
        h = remaining if g_eff * peak <= 0 else ctrl.nl_phase_cap / (g_eff * peak)
        if ctrl.max_step is not None:
            h = min(h, ctrl.max_step)
        return min(h, remaining)

    if g_eff == 0.0 or w.mean_power() == 0.0:
        linear(span)
        return FieldWaveform(field[0], field[1], fs, w.reference_power)

    z = 0.0
    h = next_step(span)
    linear(0.5 * h)
    while True:
        nonlinear(h)
        z += h
        if z >= span - 1e-9:
            linear(0.5 * h)
            break
        h_next = next_step(span - z)
        linear(0.5 * (h + h_next))
        h = h_next
    return FieldWaveform(field[0], field[1], fs, w.reference_power)


def amplify(w: FieldWaveform, link: LinkParameters, ctrl: SsfmControl,
            rng: np.random.Generator | None = None) -> FieldWaveform:
    """Lumped amplifier: field gain sqrt(G) plus, when enabled, white
    circular Gaussian ASE of PSD (G-1) h nu NF/2 per polarization over the
    simulation bandwidth."""
    if ctrl.gain_mode == "track":
        current = w.mean_power()
        g = w.reference_power / current if current > 0 else link.gain_linear
    else:
        g = link.gain_linear
    x = w.x * math.sqrt(g)
    y = w.y * math.sqrt(g)
    if ctrl.noise_enabled:
        if rng is None:
            rng = np.random.default_rng([ctrl.rng_seed, _NOISE_STREAM])
        psd_pol = max(g - 1.0, 0.0) * PLANCK * link.frequency * link.nf_linear / 2.0
        sigma = math.sqrt(psd_pol * w.sample_rate / 2.0)
        if sigma > 0:
            n = len(x)
            x = x + sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
            y = y + sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return FieldWaveform(x, y, w.sample_rate, w.reference_power)


def propagate_link(w: FieldWaveform, link: LinkParameters, ctrl: SsfmControl,
                   tap=None) -> FieldWaveform:
    """n_spans repetitions of span propagation followed by amplification.

    Per-span ASE draws come from independent streams derived from
    ``ctrl.rng_seed`` and the span index, so any prefix of the chain is
    reproducible regardless of where measurements are taken. ``tap``, when
    given, is called as tap(span_number, waveform) after each amplifier.
    """
    for span_idx in range(link.n_spans):
        w = propagate_span(w, link, ctrl)
        rng = np.random.default_rng([ctrl.rng_seed, _NOISE_STREAM, span_idx])
        w = amplify(w, link, ctrl, rng=rng)
        if tap is not None:
            tap(span_idx + 1, w)
    return w


def measure_psd(w: FieldWaveform, grid: FrequencyGrid,
                nperseg: int | None = None, overlap: float = 0.5) -> Psd:
    """Averaged-periodogram PSD estimate resampled onto ``grid``, W/Hz,
    summed over polarizations (Hann window, 50% overlap by default)."""
    n = len(w.x)
    if nperseg is None:
        # aim for >= 64 half-overlapped segments on long records
        nperseg = max(16, 2 * n // 65)
        nperseg = 2 ** int(math.log2(nperseg))
        nperseg = min(nperseg, n)
    if n < nperseg or nperseg < 2:
        raise ValueError("too few samples for one periodogram segment")
    noverlap = int(nperseg * overlap)
    total = None
    for pol in (w.x, w.y):
        f, pxx = welch(pol, fs=w.sample_rate, window="hann", nperseg=nperseg,
                       noverlap=noverlap, detrend=False, return_onesided=False,
                       scaling="density")
        total = pxx if total is None else total + pxx
    f = np.fft.fftshift(f)
    total = np.fft.fftshift(total)
    values = np.interp(grid.frequencies(), f, total, left=0.0, right=0.0)
    return Psd(grid, np.maximum(values, 0.0))


def measure_nsr(rx: FieldWaveform, tx_reference: FieldWaveform, band: Interval,
                cfg: WaveformConfig, link: LinkParameters | None = None,
                n_spans: int = 0) -> float:
    """In-band noise-to-signal ratio against the clean transmit reference.

    Band-selects, removes the accumulated chromatic dispersion of
    ``n_spans`` spans when a link is given, matched-filters, samples at the
    symbol rate and applies one complex least-squares gain/phase alignment
    per polarization; the result is sum |r - b s|^2 / sum |b s|^2 over both
    polarizations.
    """
    if len(rx.x) != len(tx_reference.x):
        raise ValueError("received and reference waveforms differ in length")
    if abs(rx.sample_rate - cfg.sample_rate) > 1e-6:
        raise ValueError("waveform sample rate does not match the configuration")
    comp = rx
    if link is not None and n_spans > 0:
        n = len(rx.x)
        omega2 = (2.0 * math.pi * np.fft.fftfreq(n, d=1.0 / rx.sample_rate)) ** 2
        phase = np.exp(-0.5j * link.beta2 * link.span_length_m * n_spans * omega2)
        spec = np.fft.fft(np.stack([rx.x, rx.y]), axis=1) * phase
        field = np.fft.ifft(spec, axis=1)
        comp = FieldWaveform(field[0], field[1], rx.sample_rate, rx.reference_power)
    r_pols = band_symbols(comp, band)
    s_pols = band_symbols(tx_reference, band)
    num = 0.0
    den = 0.0
    for r, s in zip(r_pols, s_pols):
        s_energy = float(np.vdot(s, s).real)
        if s_energy == 0.0:
            continue
        b = np.vdot(s, r) / s_energy
        err = r - b * s
        num += float(np.vdot(err, err).real)
        den += float(abs(b) ** 2 * s_energy)
    if den == 0.0:
        raise ValueError("reference waveform carries no power in the band")
    return num / den


_HEADER = struct.Struct("<4sIdQ8x")  # magic, version, sample_rate, length, reserved
_MAGIC = b"FWNL"


def save_waveform(path, w: FieldWaveform) -> None:
    """Write the binary dump format: 32-byte header then the X and Y
    polarization blocks as little-endian interleaved complex float64."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, 1, w.sample_rate, len(w.x)))
        fh.write(np.ascontiguousarray(w.x, dtype="<c16").tobytes())
        fh.write(np.ascontiguousarray(w.y, dtype="<c16").tobytes())


def load_waveform(path) -> FieldWaveform:
    with open(path, "rb") as fh:
        magic, version, fs, length = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != _MAGIC:
            raise ValueError(f"not a waveform dump (magic {magic!r})")
        if version != 1:
            raise ValueError(f"unsupported waveform dump version {version}")
        data = np.frombuffer(fh.read(2 * length * 16), dtype="<c16")
    if data.size != 2 * length:
        raise ValueError("truncated waveform dump")
    w = FieldWaveform(data[:length].copy(), data[length:].copy(), fs, 0.0)
    w.reference_power = w.mean_power()
    return w
