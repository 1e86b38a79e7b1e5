"""Frequency grids, spectral regions and power-spectral-density bookkeeping.

Internal units are physical everywhere: frequencies in Hz, PSDs in W/Hz,
powers in W. A PSD is piecewise constant over grid bins (rectangle rule),
which makes every band integral an exact finite sum and lets the partition
and perturbation identities hold to rounding error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FrequencyGrid",
    "Interval",
    "Psd",
    "SpectralLayout",
    "PerturbationPair",
    "ObChannel",
    "ShapeSpec",
    "build_reference_spectrum",
    "normalize_boi",
    "apply_perturbation",
    "apsd",
    "band_power",
    "relative_powers",
    "shrink_interval",
    "symmetric_layout",
]

# Tolerance (in bins) for deciding that a frequency sits on a grid point.
_ALIGN_TOL = 1e-6


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform baseband frequency grid: f_start + k*df for k in [0, n_points)."""

    f_start: float  # Hz
    df: float       # Hz
    n_points: int

    def __post_init__(self):
        if not (math.isfinite(self.df) and self.df > 0):
            raise ValueError(f"df must be positive and finite, got {self.df}")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError(f"n_points must be an integer >= 2, got {self.n_points}")
        if not math.isfinite(self.f_start):
            raise ValueError(f"f_start must be finite, got {self.f_start}")

    @classmethod
    def centered(cls, bandwidth: float, df: float) -> "FrequencyGrid":
        """Grid of width ``bandwidth`` roughly centered on 0 Hz."""
        n = int(round(bandwidth / df))
        return cls(f_start=-(n // 2) * df, df=df, n_points=n)

    @property
    def f_stop(self) -> float:
        """Upper edge of the last bin (the grid covers [f_start, f_stop))."""
        return self.f_start + self.n_points * self.df

    def frequencies(self) -> np.ndarray:
        return self.f_start + self.df * np.arange(self.n_points)

    def index_of(self, f: float) -> int:
        """Exact bin index of frequency ``f``; raises if off-grid.

        ``f == f_stop`` is allowed (upper boundary of the last bin).
        """
        k = (f - self.f_start) / self.df
        ki = round(k)
        if abs(k - ki) > _ALIGN_TOL:
            raise ValueError(
                f"{f} Hz does not lie on the grid (offset {k - ki:+.3g} bins)"
            )
        if not 0 <= ki <= self.n_points:
            raise ValueError(f"{f} Hz is outside the grid range")
        return int(ki)


@dataclass(frozen=True)
class Interval:
    """Half-open frequency interval [lo, hi) in Hz."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.hi > self.lo):
            raise ValueError(f"invalid interval [{self.lo}, {self.hi})")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)


def bin_range(grid: FrequencyGrid, region: Interval) -> tuple[int, int]:
    """Grid bin index range [i0, i1) covered by ``region`` (boundaries on grid)."""
    i0 = grid.index_of(region.lo)
    i1 = grid.index_of(region.hi)
    if i1 <= i0:
        raise ValueError(f"region [{region.lo}, {region.hi}) is empty on the grid")
    return i0, i1


@dataclass(frozen=True)
class Psd:
    """One power spectral density sampled on a grid, W/Hz, non-negative."""

    grid: FrequencyGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise ValueError(
                f"values length {v.shape} does not match grid n_points {self.grid.n_points}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("PSD values must be finite")
        if np.any(v < 0):
            raise ValueError("PSD values must be non-negative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def total_power(self) -> float:
        """Rectangle-rule integral over the whole grid, W."""
        return float(self.values.sum() * self.grid.df)


@dataclass(frozen=True)
class SpectralLayout:
    """Named regions F_A < F_N < F_B partitioning the controllable band.

    F_BOI is the hull of the three; F_OB is the grid complement of F_BOI.
    All boundaries must lie on grid points and the three regions must be
    contiguous in ascending frequency, matching the two-sub-carrier-plus-notch
    arrangement.
    """

    grid: FrequencyGrid
    f_a: Interval
    f_n: Interval
    f_b: Interval

    def __post_init__(self):
        for iv in (self.f_a, self.f_n, self.f_b):
            bin_range(self.grid, iv)  # validates alignment and non-emptiness
        if not (self.f_a.hi == self.f_n.lo and self.f_n.hi == self.f_b.lo):
            raise ValueError(
                "regions must be contiguous in the order F_A, F_N, F_B; got "
                f"A={self.f_a}, N={self.f_n}, B={self.f_b}"
            )

    @property
    def f_boi(self) -> Interval:
        return Interval(self.f_a.lo, self.f_b.hi)

    @property
    def ob_intervals(self) -> tuple[Interval, ...]:
        """Out-of-band pieces of the grid (below and above the BOI)."""
        pieces = []
        if self.f_a.lo > self.grid.f_start:
            pieces.append(Interval(self.grid.f_start, self.f_a.lo))
        if self.f_b.hi < self.grid.f_stop:
            pieces.append(Interval(self.f_b.hi, self.grid.f_stop))
        return tuple(pieces)

    def region_ids(self) -> np.ndarray:
        """Per-bin region id: 0=A, 1=B, 2=N, 3=OB (canonical label order)."""
        ids = np.full(self.grid.n_points, 3, dtype=np.int8)
        for iv, rid in ((self.f_a, 0), (self.f_b, 1), (self.f_n, 2)):
            i0, i1 = bin_range(self.grid, iv)
            ids[i0:i1] = rid
        return ids


@dataclass(frozen=True)
class PerturbationPair:
    """Linear power gains applied to F_A and F_B (dimensionless, > 0)."""

    delta_a: float
    delta_b: float

    def __post_init__(self):
        for name, v in (("delta_a", self.delta_a), ("delta_b", self.delta_b)):
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be strictly positive and finite, got {v}")


@dataclass(frozen=True)
class ObChannel:
    """Rectangular out-of-band channel: center/width in Hz, height in W/Hz."""

    center: float
    width: float
    height: float

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"channel width must be positive, got {self.width}")
        if not self.height >= 0:
            raise ValueError(f"channel height must be >= 0, got {self.height}")

    @property
    def interval(self) -> Interval:
        return Interval(self.center - 0.5 * self.width, self.center + 0.5 * self.width)


@dataclass(frozen=True)
class ShapeSpec:
    """Heights of the rectangular sub-carrier PSDs and optional OB channels."""

    height_a: float = 0.0  # W/Hz over F_A
    height_b: float = 0.0  # W/Hz over F_B
    ob_channels: tuple[ObChannel, ...] = ()

    def __post_init__(self):
        if self.height_a < 0 or self.height_b < 0:
            raise ValueError("sub-carrier PSD heights must be >= 0")


def build_reference_spectrum(layout: SpectralLayout, shape: ShapeSpec,
                             grid: FrequencyGrid) -> Psd:
    """Reference transmit PSD: flat sub-carriers in F_A/F_B, zero notch,
    optional rectangular out-of-band channels.
    """
    if grid != layout.grid:
        raise ValueError("grid does not match the layout grid")
    values = np.zeros(grid.n_points)
    for iv, h in ((layout.f_a, shape.height_a), (layout.f_b, shape.height_b)):
        i0, i1 = bin_range(grid, iv)
        values[i0:i1] = h
    occupied: list[tuple[int, int]] = []
    boi_lo, boi_hi = bin_range(grid, layout.f_boi)
    for ch in shape.ob_channels:
        i0, i1 = bin_range(grid, ch.interval)
        if i1 > boi_lo and i0 < boi_hi:
            raise ValueError(f"out-of-band channel at {ch.center} Hz overlaps the BOI")
        for j0, j1 in occupied:
            if i1 > j0 and i0 < j1:
                raise ValueError(f"out-of-band channels overlap near {ch.center} Hz")
        occupied.append((i0, i1))
        values[i0:i1] = ch.height
    return Psd(grid, values)


def normalize_boi(psd: Psd, layout: SpectralLayout) -> Psd:
    """Scale ``psd`` so its average PSD over F_BOI equals 1 (reporting view)."""
    mean = apsd(psd, layout.f_boi)
    if mean <= 0:
        raise ValueError("cannot normalize: zero power over the BOI")
    return Psd(psd.grid, psd.values / mean)


def apply_perturbation(psd: Psd, layout: SpectralLayout, p: PerturbationPair) -> Psd:
    """Multiply F_A by delta_a and F_B by delta_b; F_N and F_OB untouched."""
    if psd.grid != layout.grid:
        raise ValueError("psd grid does not match the layout grid")
    values = psd.values.copy()
    ia0, ia1 = bin_range(psd.grid, layout.f_a)
    ib0, ib1 = bin_range(psd.grid, layout.f_b)
    values[ia0:ia1] *= p.delta_a
    values[ib0:ib1] *= p.delta_b
    return Psd(psd.grid, values)


def apsd(psd: Psd, region: Interval) -> float:
    """Average PSD over ``region``: (integral of psd) / (region width), W/Hz."""
    i0, i1 = bin_range(psd.grid, region)
    return float(psd.values[i0:i1].mean())


def band_power(psd: Psd, region: Interval) -> float:
    """Rectangle-rule integral of ``psd`` over ``region``, W."""
    i0, i1 = bin_range(psd.grid, region)
    return float(psd.values[i0:i1].sum() * psd.grid.df)


def relative_powers(psd: Psd, layout: SpectralLayout) -> tuple[float, float]:
    """Fractions (K_A, K_B) of the BOI power carried by F_A and F_B."""
    total = band_power(psd, layout.f_boi)
    if total <= 0:
        raise ValueError("zero power over the BOI")
    return band_power(psd, layout.f_a) / total, band_power(psd, layout.f_b) / total


def shrink_interval(region: Interval, fraction: float, grid: FrequencyGrid) -> Interval:
    """Centered inner ``fraction`` of ``region``, edges snapped to grid points.

    Used for notch measurements where the region edges cannot be resolved
    and are discarded symmetrically.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    trim = 0.5 * (1.0 - fraction) * region.width
    i0 = int(round((region.lo + trim - grid.f_start) / grid.df))
    i1 = int(round((region.hi - trim - grid.f_start) / grid.df))
    if i1 <= i0:
        raise ValueError("shrunk region is empty on the grid")
    return Interval(grid.f_start + i0 * grid.df, grid.f_start + i1 * grid.df)


def symmetric_layout(grid: FrequencyGrid, width_a: float, width_n: float,
                     width_b: float | None = None) -> SpectralLayout:
    """Layout whose region bin sets are exact mirror images about f = 0.

    Half-open grid-aligned intervals cannot be sample-symmetric about a grid
    point, so the notch and the A band sit one bin high: the F_A and F_N
    sample sets are then the exact negations of F_B and F_N. This makes the
    category symmetry identities hold to rounding error instead of to one
    edge bin. The notch is one bin narrower than ``width_n``.
    """
    if width_b is None:
        width_b = width_a
    df = grid.df
    b_lo = 0.5 * width_n
    layout = SpectralLayout(
        grid=grid,
        f_a=Interval(-b_lo + df - width_a, -b_lo + df),
        f_n=Interval(-b_lo + df, b_lo),
        f_b=Interval(b_lo, b_lo + width_b),
    )
    return layout


def mirror_indices(grid: FrequencyGrid) -> np.ndarray:
    """Bin index of -f for every bin; -1 where -f is not on the grid."""
    k = np.arange(grid.n_points)
    m = np.round(-(grid.f_start / grid.df) * 2 - k).astype(int)
    bad = (m < 0) | (m >= grid.n_points)
    off = np.abs((-(grid.f_start + k * grid.df)) - (grid.f_start + m * grid.df))
    m[bad | (off > _ALIGN_TOL * grid.df)] = -1
    return m


def is_mirror_symmetric(psd: Psd, rtol: float = 1e-12) -> bool:
    """True when psd(f) equals psd(-f) on all bins with an on-grid mirror."""
    m = mirror_indices(psd.grid)
    ok = m >= 0
    scale = psd.values.max()
    if scale == 0:
        return True
    v = psd.values
    if np.any(~ok & (v > rtol * scale)):
        return False
    return bool(np.all(np.abs(v[ok] - v[m[ok]]) <= rtol * scale))
