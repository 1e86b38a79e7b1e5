"""Region-conditioned GN integration and noise-category bookkeeping.

A nonlinear-noise contribution is labeled by where its three mixing
components (f1, f2, f1 + f2 - f) originate: the ordered triple gives a
permutation category, the unordered multiset the physically meaningful
class whose power multiplicities drive the perturbation response.

Conditioning reuses the unconditioned quadrature with region indicator
masks, so the partition identities hold to rounding error. A single pass
accumulates all ordered triples at once (region-id bucketing), which is
what makes sweeping every category over a perturbation set affordable.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from .gn_model import FwmKernelSpec, LinkParameters, _kernel
from .spectra import (FrequencyGrid, Interval, Psd, SpectralLayout, apsd,
                      bin_range, is_mirror_symmetric, mirror_indices,
                      shrink_interval)

__all__ = [
    "RegionLabel",
    "CategoryKey",
    "ASE",
    "TRX",
    "category",
    "NoiseDecomposition",
    "nln_psd_permutation",
    "nln_psd_multiset",
    "multiset_apsd_table",
    "multiset_nsr_table",
    "category_apsd",
    "category_nsr",
    "check_symmetries",
    "SymmetryCheck",
    "SymmetryReport",
]


class RegionLabel(str, Enum):
    A = "A"
    B = "B"
    N = "N"
    OB = "OB"


# Canonical label order (A < B < N < OB); also the region-id encoding used
# by SpectralLayout.region_ids().
_ORDER = {RegionLabel.A: 0, RegionLabel.B: 1, RegionLabel.N: 2, RegionLabel.OB: 3}
_OFF_GRID = 4  # bucket for third frequencies falling outside the grid


@dataclass(frozen=True)
class CategoryKey:
    """Multiset of 3 source-region labels, or an ASE/TRX sentinel.

    NLN keys store their labels in canonical ascending order so any
    arrangement of the same multiset compares equal; the display form uses
    the conventional descending order, e.g. ``[B,A,A]`` or ``[OB,OB,A]``.
    """

    labels: tuple[RegionLabel, ...]
    sentinel: str = ""

    def __post_init__(self):
        if self.sentinel:
            if self.labels or self.sentinel not in ("ASE", "TRX"):
                raise ValueError(f"bad sentinel key {self.sentinel!r}")
            return
        if len(self.labels) != 3:
            raise ValueError("an NLN category key needs exactly 3 region labels")
        if list(self.labels) != sorted(self.labels, key=_ORDER.get):
            raise ValueError("labels must be in canonical order; use category(...)")

    @property
    def is_nln(self) -> bool:
        return not self.sentinel

    @property
    def name(self) -> str:
        if self.sentinel:
            return self.sentinel
        return "[" + ",".join(lab.value for lab in reversed(self.labels)) + "]"

    def multiplicity(self, label: RegionLabel) -> int:
        return self.labels.count(label)

    def arrangements(self) -> tuple[tuple[RegionLabel, ...], ...]:
        """Distinct ordered triples making up this multiset."""
        return tuple(sorted(set(itertools.permutations(self.labels)),
                            key=lambda t: [_ORDER[x] for x in t]))

    def __str__(self) -> str:
        return self.name

    def __repr__(self) -> str:
        return f"CategoryKey({self.name})"


def category(*labels) -> CategoryKey:
    """Build an NLN CategoryKey from region labels in any order."""
    labs = tuple(sorted((RegionLabel(lab) for lab in labels), key=_ORDER.get))
    return CategoryKey(labels=labs)


def parse_category(text: str) -> CategoryKey:
    """Inverse of CategoryKey.name, e.g. "[OB,OB,A]" or "ASE"."""
    text = text.strip()
    if text in ("ASE", "TRX"):
        return CategoryKey((), text)
    if not (text.startswith("[") and text.endswith("]")):
        raise ValueError(f"not a category label: {text!r}")
    return category(*text[1:-1].split(","))


ASE = CategoryKey((), "ASE")
TRX = CategoryKey((), "TRX")


@dataclass(frozen=True)
class NoiseDecomposition:
    """Category label -> APSD (W/Hz) or NSR value, tagged with which."""

    values: Mapping[CategoryKey, float]
    kind: str  # "apsd" | "nsr"

    def __post_init__(self):
        if self.kind not in ("apsd", "nsr"):
            raise ValueError(f"kind must be 'apsd' or 'nsr', got {self.kind!r}")
        vals = dict(self.values)
        for k, v in vals.items():
            if not math.isfinite(v):
                raise ValueError(f"non-finite value for {k}")
        object.__setattr__(self, "values", MappingProxyType(vals))

    def __getitem__(self, key: CategoryKey) -> float:
        return self.values[key]

    def get(self, key: CategoryKey, default: float = 0.0) -> float:
        return self.values.get(key, default)

    def items(self):
        return self.values.items()


def _triple_id(triple: Iterable[RegionLabel]) -> int:
    r1, r2, r3 = (_ORDER[RegionLabel(t)] for t in triple)
    return (r1 * 5 + r2) * 5 + r3


def _conditioned_table(tx: Psd, layout: SpectralLayout, link: LinkParameters,
                       kernel: FwmKernelSpec, out_indices: np.ndarray,
                       row_chunk: int = 768) -> np.ndarray:
    """All ordered-triple conditioned sums at tx-grid output bins.

    Returns shape (125, n_out): bucket (r1*5 + r2)*5 + r3 with region codes
    0..3 and 4 for third frequencies off the grid (zero PSD there anyway).
    """
    grid = tx.grid
    values = tx.values
    rid = layout.region_ids().astype(np.int16)
    occ = np.flatnonzero(values > 0)
    out = np.zeros((126, len(out_indices)))
    if occ.size == 0:
        return out[:125]
    f_occ = grid.f_start + grid.df * occ
    s_occ = values[occ]
    c = 4.0 * math.pi ** 2 * link.beta2
    scale = grid.df * grid.df
    n = grid.n_points
    rid_occ = rid[occ]
    base_id = (rid_occ[:, None].astype(np.int32) * 5
               + rid_occ[None, :].astype(np.int32)) * 5
    s12 = s_occ[:, None] * s_occ[None, :]
    i3_base = (occ[:, None] + occ[None, :]).astype(np.int64)
    v_pad = np.concatenate([values, [0.0]])
    r_pad = np.concatenate([rid, [np.int16(_OFF_GRID)]])
    for jx, k_out in enumerate(np.asarray(out_indices, dtype=np.int64)):
        f = grid.f_start + float(k_out) * grid.df
        acc = np.zeros(126)
        for r0 in range(0, occ.size, row_chunk):
            r1 = min(r0 + row_chunk, occ.size)
            u = f_occ[r0:r1, None] - f
            v = f_occ[None, :] - f
            w = _kernel(c * (u * v), link, kernel)
            i3 = i3_base[r0:r1] - k_out
            inside = (i3 >= 0) & (i3 < n)
            i3c = np.where(inside, i3, n)
            m = s12[r0:r1] * v_pad[i3c] * w
            ids = base_id[r0:r1] + r_pad[i3c]
            acc += np.bincount(ids.ravel(), weights=m.ravel(), minlength=126)
        out[:, jx] = acc * scale
    return out[:125]


def _out_indices(tx_grid: FrequencyGrid, out_grid: FrequencyGrid) -> np.ndarray:
    """Tx-grid indices of the output points (conditioned integration needs
    every output frequency to sit exactly on the tx grid)."""
    ratio = out_grid.df / tx_grid.df
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ValueError(
            "grid misalignment: output grid spacing must be a whole multiple "
            "of the tx grid spacing")
    off = (out_grid.f_start - tx_grid.f_start) / tx_grid.df
    if abs(off - round(off)) > 1e-6:
        raise ValueError("grid misalignment: output grid is not offset by whole bins")
    return int(round(off)) + int(round(ratio)) * np.arange(out_grid.n_points)


def nln_psd_permutation(tx: Psd, layout: SpectralLayout, link: LinkParameters,
                        kernel: FwmKernelSpec, triple, out_grid: FrequencyGrid) -> Psd:
    """NLN PSD with the double sum conditioned on an ordered region triple:
    f1 in region(triple[0]), f2 in region(triple[1]), f1+f2-f in region(triple[2]).
    """
    triple = tuple(RegionLabel(t) for t in triple)
    table = _conditioned_table(tx, layout, link, kernel, _out_indices(tx.grid, out_grid))
    return Psd(out_grid, table[_triple_id(triple)])


def nln_psd_multiset(tx: Psd, layout: SpectralLayout, link: LinkParameters,
                     kernel: FwmKernelSpec, key: CategoryKey,
                     out_grid: FrequencyGrid) -> Psd:
    """NLN PSD of a multiset category: sum over its distinct arrangements."""
    if not key.is_nln:
        raise ValueError(f"{key} is not an NLN category")
    table = _conditioned_table(tx, layout, link, kernel, _out_indices(tx.grid, out_grid))
    vals = np.zeros(out_grid.n_points)
    for tr in key.arrangements():
        vals += table[_triple_id(tr)]
    return Psd(out_grid, vals)


def _keys_from_table(table: np.ndarray, keys) -> dict[CategoryKey, np.ndarray]:
    out = {}
    for key in keys:
        v = np.zeros(table.shape[1])
        for tr in key.arrangements():
            v += table[_triple_id(tr)]
        out[key] = v
    return out


def _region_out_grid(grid: FrequencyGrid, region: Interval,
                     inner_fraction: float) -> FrequencyGrid:
    inner = shrink_interval(region, inner_fraction, grid) if inner_fraction < 1 else region
    i0, i1 = bin_range(grid, inner)
    return FrequencyGrid(grid.f_start + i0 * grid.df, grid.df, i1 - i0)


def multiset_apsd_table(tx: Psd, layout: SpectralLayout, link: LinkParameters,
                        kernel: FwmKernelSpec, keys, region: Interval,
                        inner_fraction: float = 0.85) -> dict[CategoryKey, float]:
    """APSDs of several multiset categories over the inner part of ``region``
    in one conditioned-integration pass.
    """
    og = _region_out_grid(tx.grid, region, inner_fraction)
    table = _conditioned_table(tx, layout, link, kernel, _out_indices(tx.grid, og))
    return {k: float(v.mean()) for k, v in _keys_from_table(table, keys).items()}


def multiset_nsr_table(tx: Psd, layout: SpectralLayout, link: LinkParameters,
                       kernel: FwmKernelSpec, keys,
                       signal_region: Interval) -> dict[CategoryKey, float]:
    """NSRs of several multiset categories over a signal band, one pass."""
    sig = apsd(tx, signal_region)
    if sig <= 0:
        raise ValueError("zero signal power over the signal region")
    cats = multiset_apsd_table(tx, layout, link, kernel, keys, signal_region,
                               inner_fraction=1.0)
    return {k: v / sig for k, v in cats.items()}


def category_apsd(tx: Psd, layout: SpectralLayout, link: LinkParameters,
                  kernel: FwmKernelSpec, key: CategoryKey, region: Interval,
                  inner_fraction: float = 0.85) -> float:
    """APSD of one multiset category over the centered ``inner_fraction`` of
    ``region`` (edges discarded symmetrically, emulating finite scope
    resolution at the notch edges).
    """
    return multiset_apsd_table(tx, layout, link, kernel, [key], region,
                               inner_fraction)[key]


def category_nsr(tx: Psd, layout: SpectralLayout, link: LinkParameters,
                 kernel: FwmKernelSpec, key: CategoryKey,
                 signal_region: Interval) -> float:
    """Category APSD over a signal band divided by the tx APSD there."""
    return multiset_nsr_table(tx, layout, link, kernel, [key], signal_region)[key]


@dataclass(frozen=True)
class SymmetryCheck:
    name: str
    lhs: float
    rhs: float
    residual: float
    applicable: bool


@dataclass(frozen=True)
class SymmetryReport:
    symmetric_input: bool
    checks: tuple[SymmetryCheck, ...]

    @property
    def max_residual(self) -> float:
        vals = [c.residual for c in self.checks if c.applicable]
        return max(vals) if vals else math.nan

    def __str__(self) -> str:
        lines = [f"symmetric input: {self.symmetric_input}"]
        for c in self.checks:
            if c.applicable:
                lines.append(f"  {c.name}: lhs={c.lhs:.6e} rhs={c.rhs:.6e} "
                             f"residual={c.residual:.3e}")
            else:
                lines.append(f"  {c.name}: not applicable")
        return "\n".join(lines)


def _relative_residual(lhs: float, rhs: float) -> float:
    m = max(abs(lhs), abs(rhs))
    return 0.0 if m == 0 else abs(lhs - rhs) / m


def _symmetric_subset(grid: FrequencyGrid, region: Interval, inner_fraction: float,
                      max_points: int) -> np.ndarray:
    """Thinned set of output bins inside ``region``, closed under reflection
    about the region's own center, so both sides of a symmetry pair are
    evaluated on exactly mirrored quadrature points."""
    inner = shrink_interval(region, inner_fraction, grid) if inner_fraction < 1 else region
    i0, i1 = bin_range(grid, inner)
    bins = np.arange(i0, i1)
    step = max(1, int(math.ceil(len(bins) / max_points)))
    mid = (len(bins) - 1) / 2.0
    picked = set(range(int(math.ceil(mid)), len(bins), step))
    picked |= {int(round(2 * mid - k)) for k in picked}
    return bins[sorted(picked)]


def check_symmetries(tx: Psd, layout: SpectralLayout, link: LinkParameters,
                     kernel: FwmKernelSpec, inner_fraction: float = 0.85,
                     max_points: int = 64) -> SymmetryReport:
    """Evaluate both sides of every category symmetry pair and report the
    relative residuals.

    Intra pairs compare notch APSDs ([A,A,A] vs [B,B,B], [B,A,A] vs [B,B,A]);
    inter pairs the out-of-band-driven ones; NSR pairs compare the in-band
    ratios between F_A and F_B. The pairs only hold for transmit spectra that
    mirror about the notch center, so asymmetric inputs are flagged and not
    scored. Both sides are evaluated on mirror-matched output bins.
    """
    grid = tx.grid
    symmetric = is_mirror_symmetric(tx)
    if not symmetric:
        names = ["notch [A,A,A] = [B,B,B]", "notch [B,A,A] = [B,B,A]",
                 "notch [OB,A,A] = [OB,B,B]", "notch [OB,OB,A] = [OB,OB,B]",
                 "nsr A:[A,A,A] = B:[B,B,B]", "nsr A:[B,A,A] = B:[B,B,A]",
                 "nsr A:[B,B,A] = B:[B,A,A]", "nsr A:[B,B,B] = B:[A,A,A]"]
        checks = tuple(SymmetryCheck(n, math.nan, math.nan, math.nan, False)
                       for n in names)
        return SymmetryReport(False, checks)

    mirror = mirror_indices(grid)
    checks: list[SymmetryCheck] = []

    # Notch APSD pairs, intra and (when the OB region is occupied) inter.
    notch_bins = _symmetric_subset(grid, layout.f_n, inner_fraction, max_points)
    table_n = _conditioned_table(tx, layout, link, kernel, notch_bins)
    rid = layout.region_ids()
    ob_power = bool(np.any((rid == 3) & (tx.values > 0)))

    def notch_apsd(key: CategoryKey) -> float:
        v = np.zeros(len(notch_bins))
        for tr in key.arrangements():
            v += table_n[_triple_id(tr)]
        return float(v.mean())

    intra_pairs = [(category("A", "A", "A"), category("B", "B", "B")),
                   (category("B", "A", "A"), category("B", "B", "A"))]
    inter_pairs = [(category("OB", "A", "A"), category("OB", "B", "B")),
                   (category("OB", "OB", "A"), category("OB", "OB", "B"))]
    for lhs_key, rhs_key in intra_pairs:
        lhs, rhs = notch_apsd(lhs_key), notch_apsd(rhs_key)
        checks.append(SymmetryCheck(f"notch {lhs_key} = {rhs_key}", lhs, rhs,
                                    _relative_residual(lhs, rhs), True))
    for lhs_key, rhs_key in inter_pairs:
        if ob_power:
            lhs, rhs = notch_apsd(lhs_key), notch_apsd(rhs_key)
            checks.append(SymmetryCheck(f"notch {lhs_key} = {rhs_key}", lhs, rhs,
                                        _relative_residual(lhs, rhs), True))
        else:
            checks.append(SymmetryCheck(f"notch {lhs_key} = {rhs_key}",
                                        math.nan, math.nan, math.nan, False))

    # NSR pairs between the two signal bands; the F_B subset is the exact
    # mirror of the (plainly thinned) F_A subset.
    ia0, ia1 = bin_range(grid, layout.f_a)
    step = max(1, int(math.ceil((ia1 - ia0) / max_points)))
    bins_a = np.arange(ia0, ia1, step)
    bins_b = np.sort(mirror[bins_a])
    if np.any(bins_b < 0):
        raise AssertionError("mirror of the F_A subset left the grid")
    table_a = _conditioned_table(tx, layout, link, kernel, bins_a)
    table_b = _conditioned_table(tx, layout, link, kernel, bins_b)
    sig_a = float(tx.values[bins_a].mean())
    sig_b = float(tx.values[bins_b].mean())

    def nsr(table, bins, sig, key):
        v = np.zeros(len(bins))
        for tr in key.arrangements():
            v += table[_triple_id(tr)]
        return float(v.mean()) / sig

    nsr_pairs = [(category("A", "A", "A"), category("B", "B", "B")),
                 (category("B", "A", "A"), category("B", "B", "A")),
                 (category("B", "B", "A"), category("B", "A", "A")),
                 (category("B", "B", "B"), category("A", "A", "A"))]
    for key_a, key_b in nsr_pairs:
        lhs = nsr(table_a, bins_a, sig_a, key_a)
        rhs = nsr(table_b, bins_b, sig_b, key_b)
        checks.append(SymmetryCheck(f"nsr A:{key_a} = B:{key_b}", lhs, rhs,
                                    _relative_residual(lhs, rhs), True))

    return SymmetryReport(True, tuple(checks))
