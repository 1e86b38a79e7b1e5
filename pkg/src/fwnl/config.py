"""Scenario configuration: defaults, validation and the config-file parser.

The config format is line oriented ``key = value`` with ``#`` comments.
Dimensioned values carry a mandatory unit (``20 GHz``, ``2 dBm``,
``1.3 /W/km``); sweeps use range notation ``a:b`` or ``a:step:b``. Omitted
keys fall back to the standard verification scenario: NDSF spans, two
20 GBaud sub-carriers around a 10 GHz notch, optional 50 GBaud neighbors
on a 75 GHz grid, gains swept -2:1:2 dB.

dB and dBm exist only here; everything downstream is W, Hz and W/Hz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .estimator import SINGLE_CHANNEL_APSD, SINGLE_CHANNEL_NSR, WDM_APSD
from .gn_model import LinkParameters
from .spectra import (FrequencyGrid, ObChannel, ShapeSpec, SpectralLayout,
                      symmetric_layout)
from .ssfm import WaveformConfig

__all__ = ["ConfigError", "Scenario", "parse_config", "dbm_to_w", "db_to_lin"]


class ConfigError(ValueError):
    """Invalid scenario configuration (named key or config line)."""


def dbm_to_w(dbm: float) -> float:
    return 1e-3 * 10.0 ** (dbm / 10.0)


def db_to_lin(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass
class Scenario:
    """Full description of one study: link, layout, waveforms, sweep, modes."""

    gamma: float = 1.3                 # 1/(W km)
    dispersion: float = 16.7           # ps/(nm km)
    attenuation_db: float = 0.2        # dB/km
    span_length: float = 100.0         # km
    spans: tuple[int, ...] = tuple(range(1, 31))
    amp_gain_db: float = 20.0
    amp_nf_db: float = 4.5
    wavelength_nm: float = 1550.0
    channels: int = 1
    channel_spacing: float = 75e9      # Hz
    launch_power_dbm: float = 2.0
    width_a: float = 20e9              # Hz
    width_b: float = 20e9
    width_n: float = 10e9
    symbol_rate: float = 20e9          # Baud, BOI sub-carriers
    ob_symbol_rate: float = 50e9       # Baud, neighbors
    modulation: str = "gaussian"
    delta_a_db: tuple[float, ...] = (-2.0, -1.0, 0.0, 1.0, 2.0)
    delta_b_db: tuple[float, ...] = (-2.0, -1.0, 0.0, 1.0, 2.0)
    mode: str = "gn"                   # gn | ssfm | both
    fit: str = "apsd"                  # apsd | nsr
    constant_power: bool = False
    realizations: int = 1
    n_symbols: int = 8000
    sample_rate: float | None = None   # Hz; derived when omitted
    grid_df: float = 50e6
    grid_bandwidth: float | None = None
    seed: int = 1234
    noise: bool = False                # amplifier ASE in the simulation
    trx_nsr_db: float | None = None
    nl_phase_cap: float = 0.02         # rad
    step_size_km: float | None = None
    notch_fraction: float = 0.85
    threads: int = 1
    gain_mode: str = "constant"        # constant | track
    polarization_coefficient: float = 16.0 / 27.0
    coherence: str = "phased-array"    # or incoherent-sum
    fit_enabled: bool = True           # emit fit rows for measurement modes
    out: str | None = None

    def validate(self) -> "Scenario":
        def bad(msg):
            raise ConfigError(msg)

        if self.channels not in (1, 3):
            bad(f"channels must be 1 or 3, got {self.channels}")
        if self.mode not in ("gn", "ssfm", "both"):
            bad(f"mode must be gn, ssfm or both, got {self.mode!r}")
        if self.fit not in ("apsd", "nsr"):
            bad(f"fit must be apsd or nsr, got {self.fit!r}")
        if self.gain_mode not in ("constant", "track"):
            bad(f"gain_mode must be constant or track, got {self.gain_mode!r}")
        if self.coherence not in ("phased-array", "incoherent-sum"):
            bad(f"coherence must be phased-array or incoherent-sum, got {self.coherence!r}")
        if not self.polarization_coefficient > 0:
            bad("polarization_coefficient must be positive")
        if not self.spans or any(s < 1 or int(s) != s for s in self.spans):
            bad("spans must be a non-empty list of counts >= 1")
        if self.realizations < 1:
            bad("realizations must be >= 1")
        if self.threads < 1:
            bad("threads must be >= 1")
        if self.seed < 0:
            bad("seed must be non-negative")
        if not 0 < self.notch_fraction <= 1:
            bad("notch_fraction must lie in (0, 1]")
        if not self.delta_a_db or not self.delta_b_db:
            bad("perturbation gain lists must be non-empty")
        for name in ("width_a", "width_b", "width_n", "grid_df", "symbol_rate",
                     "ob_symbol_rate", "channel_spacing"):
            if getattr(self, name) <= 0:
                bad(f"{name} must be positive")
        for name in ("width_a", "width_b", "width_n"):
            w = getattr(self, name)
            if abs(w / self.grid_df - round(w / self.grid_df)) > 1e-9:
                bad(f"{name} = {w} Hz is not a multiple of grid_df = {self.grid_df} Hz")
        try:
            self.link(1)
        except ValueError as exc:
            bad(str(exc))
        return self

    # construction helpers -------------------------------------------------

    def link(self, n_spans: int) -> LinkParameters:
        return LinkParameters(
            gamma=self.gamma, dispersion=self.dispersion, alpha_db=self.attenuation_db,
            span_length=self.span_length, n_spans=n_spans, amp_gain_db=self.amp_gain_db,
            amp_nf_db=self.amp_nf_db, center_wavelength=self.wavelength_nm)

    def build_grid(self) -> FrequencyGrid:
        bw = self.grid_bandwidth
        if bw is None:
            bw = 200e9 if self.channels == 1 else 400e9
        return FrequencyGrid.centered(bw, self.grid_df)

    def build_layout(self, grid: FrequencyGrid) -> SpectralLayout:
        return symmetric_layout(grid, self.width_a, self.width_n, self.width_b)

    def reference_shape(self, layout: SpectralLayout) -> ShapeSpec:
        power = dbm_to_w(self.launch_power_dbm)
        height = power / (self.width_a + self.width_b)
        channels: list[ObChannel] = []
        if self.channels == 3:
            ob_height = power / self.ob_symbol_rate
            df = layout.grid.df
            channels = [
                # left neighbor shifted one bin up to mirror the right one
                ObChannel(-self.channel_spacing + df, self.ob_symbol_rate, ob_height),
                ObChannel(self.channel_spacing, self.ob_symbol_rate, ob_height),
            ]
        return ShapeSpec(height_a=height, height_b=height, ob_channels=tuple(channels))

    def effective_sample_rate(self) -> float:
        """Smallest tidy sample rate whose aliased third-order mixing products
        cannot fall back inside the BOI.

        Discrete-time propagation wraps any product beyond the Nyquist edge;
        occupied bands reaching f_edge generate products out to 3 f_edge, so
        fs >= 3 f_edge + f_boi keeps every wrapped line outside the measured
        regions.
        """
        if self.sample_rate is not None:
            return self.sample_rate
        boi_edge = self.width_n / 2 + max(self.width_a, self.width_b)
        if self.channels == 1:
            edge = boi_edge
        else:
            edge = self.channel_spacing + self.ob_symbol_rate / 2
        quantum = 5e9
        return quantum * math.ceil((3.0 * edge + boi_edge) / quantum)

    def waveform_config(self, rng_seed: int = 0) -> WaveformConfig:
        return WaveformConfig(
            sample_rate=self.effective_sample_rate(), n_symbols=self.n_symbols,
            symbol_rate=self.symbol_rate, ob_symbol_rate=self.ob_symbol_rate,
            modulation=self.modulation, rng_seed=rng_seed,
            trx_nsr=db_to_lin(self.trx_nsr_db) if self.trx_nsr_db is not None else 0.0)

    def kernel(self):
        from .gn_model import FwmKernelSpec
        return FwmKernelSpec(polarization_coefficient=self.polarization_coefficient,
                             coherence=self.coherence)

    def basis(self):
        if self.fit == "nsr":
            return SINGLE_CHANNEL_NSR
        return SINGLE_CHANNEL_APSD if self.channels == 1 else WDM_APSD


# config-file parsing ------------------------------------------------------

_FREQ = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9, "THz": 1e12}
_BAUD = {"Baud": 1.0, "kBaud": 1e3, "MBaud": 1e6, "GBaud": 1e9}
_TRUE = {"on", "true", "yes", "1"}
_FALSE = {"off", "false", "no", "0"}


def _unit_value(text: str, units: dict[str, float], what: str) -> float:
    parts = text.split()
    if len(parts) != 2:
        raise ValueError(f"expected '<number> <unit>' with unit in "
                         f"{sorted(units)}, got {text!r}")
    try:
        num = float(parts[0])
    except ValueError:
        raise ValueError(f"bad number {parts[0]!r}") from None
    if parts[1] not in units:
        raise ValueError(f"bad {what} unit {parts[1]!r}; expected one of {sorted(units)}")
    return num * units[parts[1]]


def _positive(value: float, text: str) -> float:
    if not value > 0:
        raise ValueError(f"unit violation: must be positive, got {text!r}")
    return value


def _number_list(text: str, units: dict[str, float] | None, what: str) -> tuple[float, ...]:
    """Range 'a:b' / 'a:step:b' or comma list, with one trailing unit."""
    parts = text.split()
    scale = 1.0
    if units is not None:
        if len(parts) != 2:
            raise ValueError(f"expected '<values> <unit>' for {what}, got {text!r}")
        if parts[1] not in units:
            raise ValueError(f"bad {what} unit {parts[1]!r}")
        scale = units[parts[1]]
        body = parts[0]
    else:
        if len(parts) != 1:
            raise ValueError(f"expected a plain value list for {what}, got {text!r}")
        body = parts[0]
    if ":" in body:
        nums = [float(t) for t in body.split(":")]
        if len(nums) == 2:
            start, step, stop = nums[0], 1.0, nums[1]
        elif len(nums) == 3:
            start, step, stop = nums
        else:
            raise ValueError(f"bad range {body!r}; use a:b or a:step:b")
        if step <= 0 or stop < start:
            raise ValueError(f"bad range {body!r}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        values = [start + i * step for i in range(count)]
    else:
        values = [float(t) for t in body.split(",") if t]
        if not values:
            raise ValueError(f"empty value list for {what}")
    return tuple(v * scale for v in values)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def _int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"expected an integer, got {text!r}") from None


def _choice(options):
    def parse(text: str) -> str:
        t = text.strip().lower()
        if t not in options:
            raise ValueError(f"expected one of {sorted(options)}, got {text!r}")
        return t
    return parse


_PARSERS = {
    "gamma": ("gamma", lambda t: _positive(_unit_value(t, {"/W/km": 1.0, "1/W/km": 1.0}, "gamma"), t)),
    "dispersion": ("dispersion", lambda t: _positive(_unit_value(t, {"ps/nm/km": 1.0}, "dispersion"), t)),
    "attenuation": ("attenuation_db", lambda t: _unit_value(t, {"dB/km": 1.0}, "attenuation")),
    "span_length": ("span_length", lambda t: _positive(_unit_value(t, {"km": 1.0, "m": 1e-3}, "length"), t)),
    "spans": ("spans", lambda t: tuple(int(v) for v in _number_list(t, None, "spans"))),
    "amp_gain": ("amp_gain_db", lambda t: _unit_value(t, {"dB": 1.0}, "gain")),
    "amp_nf": ("amp_nf_db", lambda t: _unit_value(t, {"dB": 1.0}, "noise figure")),
    "wavelength": ("wavelength_nm", lambda t: _positive(_unit_value(t, {"nm": 1.0}, "wavelength"), t)),
    "channels": ("channels", _int),
    "channel_spacing": ("channel_spacing", lambda t: _positive(_unit_value(t, _FREQ, "frequency"), t)),
    "launch_power": ("launch_power_dbm", lambda t: _unit_value(t, {"dBm": 1.0}, "power")),
    "width_fa": ("width_a", lambda t: _positive(_unit_value(t, _FREQ, "frequency"), t)),
    "width_fb": ("width_b", lambda t: _positive(_unit_value(t, _FREQ, "frequency"), t)),
    "width_fn": ("width_n", lambda t: _positive(_unit_value(t, _FREQ, "frequency"), t)),
    "symbol_rate": ("symbol_rate", lambda t: _positive(_unit_value(t, _BAUD, "symbol rate"), t)),
    "ob_symbol_rate": ("ob_symbol_rate", lambda t: _positive(_unit_value(t, _BAUD, "symbol rate"), t)),
    "modulation": ("modulation", _choice({"gaussian", "qpsk"})),
    "delta_a": ("delta_a_db", lambda t: _number_list(t, {"dB": 1.0}, "gain")),
    "delta_b": ("delta_b_db", lambda t: _number_list(t, {"dB": 1.0}, "gain")),
    "mode": ("mode", _choice({"gn", "ssfm", "both"})),
    "fit": ("fit", _choice({"apsd", "nsr"})),
    "constant_power": ("constant_power", _bool),
    "realizations": ("realizations", _int),
    "n_symbols": ("n_symbols", _int),
    "sample_rate": ("sample_rate", lambda t: _positive(_unit_value(t, _FREQ, "frequency"), t)),
    "grid_df": ("grid_df", lambda t: _positive(_unit_value(t, _FREQ, "frequency"), t)),
    "grid_bandwidth": ("grid_bandwidth", lambda t: _positive(_unit_value(t, _FREQ, "frequency"), t)),
    "seed": ("seed", _int),
    "noise": ("noise", _bool),
    "trx_nsr": ("trx_nsr_db", lambda t: None if t.strip().lower() == "off"
                else _unit_value(t, {"dB": 1.0}, "ratio")),
    "nl_phase_cap": ("nl_phase_cap", lambda t: _positive(_unit_value(t, {"rad": 1.0}, "phase"), t)),
    "step_size": ("step_size_km", lambda t: _positive(_unit_value(t, {"km": 1.0, "m": 1e-3}, "length"), t)),
    "notch_fraction": ("notch_fraction", lambda t: float(t)),
    "threads": ("threads", _int),
    "gain_mode": ("gain_mode", _choice({"constant", "track"})),
    "polarization_coefficient": ("polarization_coefficient", lambda t: float(t)),
    "coherence": ("coherence", _choice({"phased-array", "incoherent-sum"})),
    "out": ("out", lambda t: t.strip()),
}


def parse_config(text: str) -> Scenario:
    """Parse config text into a validated Scenario (defaults for omitted keys).

    Errors carry the offending line number and key.
    """
    sc = Scenario()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        attr, parser = _PARSERS[key]
        try:
            setattr(sc, attr, parser(value))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {key}: {exc}") from None
    return sc.validate()
