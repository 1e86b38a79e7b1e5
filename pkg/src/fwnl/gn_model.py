"""GN-model nonlinear-noise PSD and analytic amplifier-chain ASE.

Scope is an isotropic link: identical spans, lumped amplifiers that exactly
compensate span loss, dispersion through beta2 only. The four-wave-mixing
weight is the standard lumped-amplification kernel: single-span link
efficiency times the multi-span phased-array factor, with a configurable
polarization coefficient (16/27 for dual-polarization Manakov signals).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .spectra import FrequencyGrid, Psd

__all__ = [
    "SPEED_OF_LIGHT",
    "PLANCK",
    "PHASED_ARRAY",
    "INCOHERENT_SUM",
    "LinkParameters",
    "FwmKernelSpec",
    "fwm_weight",
    "nln_psd",
    "ase_psd",
]

SPEED_OF_LIGHT = 299792458.0   # m/s
PLANCK = 6.62607015e-34        # J s

PHASED_ARRAY = "phased-array"
INCOHERENT_SUM = "incoherent-sum"


@dataclass(frozen=True)
class LinkParameters:
    """Isotropic multi-span link description in data-sheet units.

    Derived SI quantities (beta2, field attenuation, ...) are computed once
    at construction.
    """

    gamma: float                     # nonlinear coefficient, 1/(W km)
    dispersion: float                # D, ps/(nm km)
    alpha_db: float                  # dB/km
    span_length: float               # km
    n_spans: int
    amp_gain_db: float
    amp_nf_db: float
    center_wavelength: float = 1550.0  # nm

    beta2: float = field(init=False, repr=False)        # s^2/m
    alpha_field: float = field(init=False, repr=False)  # Np/m (field convention)
    gamma_si: float = field(init=False, repr=False)     # 1/(W m)
    span_length_m: float = field(init=False, repr=False)
    frequency: float = field(init=False, repr=False)    # carrier, Hz

    def __post_init__(self):
        # gamma, D, alpha and the amplifier figures may legitimately be zero
        # (lossless / dispersionless / linear test links); lengths may not.
        for name in ("gamma", "dispersion", "alpha_db", "amp_gain_db", "amp_nf_db"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if not (math.isfinite(self.span_length) and self.span_length > 0):
            raise ValueError(f"span_length must be positive, got {self.span_length}")
        if not (math.isfinite(self.center_wavelength) and self.center_wavelength > 0):
            raise ValueError(f"center_wavelength must be positive, got {self.center_wavelength}")
        if int(self.n_spans) != self.n_spans or self.n_spans < 1:
            raise ValueError(f"n_spans must be an integer >= 1, got {self.n_spans}")
        lam = self.center_wavelength * 1e-9
        object.__setattr__(
            self, "beta2",
            -(self.dispersion * 1e-6) * lam ** 2 / (2.0 * math.pi * SPEED_OF_LIGHT),
        )
        object.__setattr__(self, "alpha_field", self.alpha_db * math.log(10.0) / 20.0 / 1000.0)
        object.__setattr__(self, "gamma_si", self.gamma / 1000.0)
        object.__setattr__(self, "span_length_m", self.span_length * 1000.0)
        object.__setattr__(self, "frequency", SPEED_OF_LIGHT / lam)

    @property
    def gain_linear(self) -> float:
        return 10.0 ** (self.amp_gain_db / 10.0)

    @property
    def nf_linear(self) -> float:
        return 10.0 ** (self.amp_nf_db / 10.0)

    @property
    def span_loss_db(self) -> float:
        return self.alpha_db * self.span_length


@dataclass(frozen=True)
class FwmKernelSpec:
    """Polarization coefficient and multi-span coherence mode of the kernel."""

    polarization_coefficient: float = 16.0 / 27.0
    coherence: str = PHASED_ARRAY

    def __post_init__(self):
        if not self.polarization_coefficient > 0:
            raise ValueError("polarization_coefficient must be > 0")
        if self.coherence not in (PHASED_ARRAY, INCOHERENT_SUM):
            raise ValueError(f"unknown coherence mode {self.coherence!r}")


def _kernel(dbeta: np.ndarray, link: LinkParameters, kernel: FwmKernelSpec) -> np.ndarray:
    """Four-wave-mixing weight as a function of the phase mismatch.

    The single-span link efficiency |L|^2 with L = (1 - e^{-2 a Ls}
    e^{j dbeta Ls}) / (2a - j dbeta) is written as (1-e)^2 + 4 e sin^2(x/2)
    over (2a)^2 + dbeta^2 to avoid cancellation; its a = 0 removable
    singularity tends to Ls^2. The phased-array factor sin^2(N x)/sin^2(x)
    is evaluated as the squared Chebyshev polynomial U_{N-1}(cos x), which
    is finite at every phase-matched point by construction (value N^2) and
    needs no extra trig calls; incoherent-sum mode replaces it with N.
    """
    shape = np.shape(dbeta)
    dbeta = np.atleast_1d(np.asarray(dbeta, dtype=float))
    a2 = 2.0 * link.alpha_field
    ls = link.span_length_m
    e = math.exp(-a2 * ls)
    x = dbeta * ls
    s_half = np.sin(0.5 * x)
    num = (1.0 - e) ** 2 + (4.0 * e) * (s_half * s_half)
    den = a2 * a2 + dbeta * dbeta
    with np.errstate(divide="ignore", invalid="ignore"):
        eff = num / den
    if a2 == 0.0:
        small = np.abs(x) < 1e-6
        eff = np.where(small, ls * ls * (1.0 - x * x / 12.0), eff)

    n = link.n_spans
    if kernel.coherence == INCOHERENT_SUM:
        eff *= float(n)
    elif n > 1:
        cy = np.cos(0.5 * x)  # chi argument is dbeta*Ls/2
        u_prev = np.ones_like(cy)
        u = 2.0 * cy
        if n > 2:
            scratch = np.empty_like(cy)
            for _ in range(n - 2):
                np.multiply(cy, u, out=scratch)
                scratch *= 2.0
                scratch -= u_prev
                u_prev, u, scratch = u, scratch, u_prev
        eff *= u
        eff *= u
    out = (kernel.polarization_coefficient * link.gamma_si ** 2) * eff
    return out.reshape(shape)


def fwm_weight(f1, f2, f, link: LinkParameters,
               kernel: FwmKernelSpec = FwmKernelSpec()):
    """Four-wave-mixing weight at mixing frequencies (f1, f2) and product f.

    The phase mismatch is dbeta = 4 pi^2 beta2 (f1 - f)(f2 - f); the weight
    is polarization_coefficient * gamma^2 * |L|^2 * chi, finite everywhere
    including phase matching. Symmetric under f1 <-> f2. Units 1/(W^2 Hz^2)
    up to the PSD normalization of the surrounding double integral.
    """
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    f = np.asarray(f, dtype=float)
    # product first, so the weight is bitwise symmetric under f1 <-> f2
    dbeta = (4.0 * math.pi ** 2 * link.beta2) * ((f1 - f) * (f2 - f))
    w = _kernel(dbeta, link, kernel)
    if w.ndim == 0:
        return float(w)
    return w


def _check_alignment(tx_grid: FrequencyGrid, out_grid: FrequencyGrid) -> None:
    ratio = out_grid.df / tx_grid.df
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ValueError(
            "grid misalignment: output grid spacing must be a whole multiple "
            "of the tx grid spacing")


def nln_psd(tx: Psd, link: LinkParameters, kernel: FwmKernelSpec,
            out_grid: FrequencyGrid, _row_chunk: int = 1024) -> Psd:
    """Nonlinear-noise PSD: rectangle-rule double sum of S S S * FWMW.

    The third PSD factor S(f1 + f2 - f) is looked up with linear
    interpolation, which reduces to exact indexing when ``out_grid`` is
    aligned with the tx grid. Pairs where any PSD factor vanishes are
    skipped. Cost is O(n_occupied^2) per output frequency.
    """
    _check_alignment(tx.grid, out_grid)
    grid = tx.grid
    values = tx.values
    occ = np.flatnonzero(values > 0)
    out = np.zeros(out_grid.n_points)
    if occ.size == 0:
        return Psd(out_grid, out)
    f_occ = grid.f_start + grid.df * occ
    s_occ = values[occ]
    scale = grid.df * grid.df
    c = 4.0 * math.pi ** 2 * link.beta2
    padded = np.concatenate([values, [0.0, 0.0]])  # slot n and n+1 read as zero
    n = grid.n_points
    for j in range(out_grid.n_points):
        f = out_grid.f_start + j * out_grid.df
        total = 0.0
        for r0 in range(0, occ.size, _row_chunk):
            r1 = min(r0 + _row_chunk, occ.size)
            u = f_occ[r0:r1, None] - f
            v = f_occ[None, :] - f
            w = _kernel(c * u * v, link, kernel)
            # S(f1 + f2 - f) by linear interpolation, snapped onto exact bins
            pos = (f_occ[r0:r1, None] + f_occ[None, :] - f - grid.f_start) / grid.df
            lo = np.floor(pos)
            frac = pos - lo
            snap = np.abs(frac - np.round(frac)) < 1e-6
            lo = np.where(snap, np.round(pos), lo).astype(np.int64)
            frac = np.where(snap, 0.0, frac)
            inside = (lo >= 0) & (lo < n)
            lo_c = np.where(inside, lo, n)  # padded zero slot
            s3 = (1.0 - frac) * padded[lo_c] + frac * padded[lo_c + 1]
            total += float(np.einsum("i,j,ij,ij->", s_occ[r0:r1], s_occ, s3, w))
        out[j] = total * scale
    return Psd(out_grid, out)


def ase_psd(link: LinkParameters, grid: FrequencyGrid,
            dual_polarization: bool = True) -> Psd:
    """Flat accumulated ASE PSD of the amplifier chain.

    Per polarization: n_spans * (G - 1) * h * nu * NF / 2; doubled for
    dual-polarization accounting. Warns when the gain does not exactly
    compensate the span loss (the isotropic default).
    """
    if abs(link.amp_gain_db - link.span_loss_db) > 1e-6:
        warnings.warn(
            f"amplifier gain {link.amp_gain_db} dB does not compensate the span loss "
            f"{link.span_loss_db:.3f} dB; the link is not transparent",
            stacklevel=2,
        )
    g = link.gain_linear
    per_pol = link.n_spans * (g - 1.0) * PLANCK * link.frequency * link.nf_linear / 2.0
    value = per_pol * (2.0 if dual_polarization else 1.0)
    return Psd(grid, np.full(grid.n_points, value))
