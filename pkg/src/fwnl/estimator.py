"""Perturbation sets, delta matrices and least-squares noise recovery.

Each perturbation instance scales the two sub-carrier bands by known linear
gains. A category with power multiplicities (m_A, m_B, m_OB) responds as
delta_a^m_A * delta_b^m_B (out-of-band gains pinned to 1), divided by the
signal-band gain for in-band noise-to-signal ratios. Stacking those
responses over the instances gives the design matrix whose ordinary
least-squares solution recovers the per-category reference values; ASE
enters as a perturbation-independent column and transceiver noise as a
constant ratio.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .categories import ASE, TRX, CategoryKey, NoiseDecomposition, RegionLabel, category
from .spectra import PerturbationPair

__all__ = [
    "DeltaMatrix",
    "FitResult",
    "ConstantPowerCoeffs",
    "perturbation_grid",
    "delta_matrix_nsr",
    "delta_matrix_apsd",
    "fit",
    "constant_power_delta_b",
    "constant_power_pairs",
    "constant_power_coeffs_nsr",
    "constant_power_coeffs_apsd",
    "fit_constant_power",
    "reference_vector",
    "SINGLE_CHANNEL_NSR",
    "SINGLE_CHANNEL_APSD",
    "WDM_APSD",
]

_AAA = category("A", "A", "A")
_BAA = category("B", "A", "A")
_BBA = category("B", "B", "A")
_BBB = category("B", "B", "B")

# Basis presets. The WDM preset keeps the dominant out-of-band categories
# (cross-phase-modulation-like terms and the squared-gain ones); [OB,OB,OB]
# is perturbation-independent and therefore folded into the ASE column.
SINGLE_CHANNEL_NSR = (_AAA, _BAA, _BBA, _BBB, TRX, ASE)
SINGLE_CHANNEL_APSD = (_AAA, _BAA, _BBA, _BBB, ASE)
WDM_APSD = (_AAA, _BAA, _BBA, _BBB,
            category("OB", "A", "A"), category("OB", "B", "B"),
            category("OB", "OB", "A"), category("OB", "OB", "B"), ASE)


def perturbation_grid(db_values_a, db_values_b) -> tuple[PerturbationPair, ...]:
    """Cartesian product of per-band gain lists, dB converted to linear."""
    a = list(db_values_a)
    b = list(db_values_b)
    if not a or not b:
        raise ValueError("gain lists must be non-empty")
    return tuple(PerturbationPair(10.0 ** (da / 10.0), 10.0 ** (db / 10.0))
                 for da, db in itertools.product(a, b))


@dataclass(frozen=True)
class DeltaMatrix:
    """Design matrix: one row per perturbation instance, one column per
    basis category; entries are the known category gain responses."""

    matrix: np.ndarray
    basis: tuple[CategoryKey, ...]
    pairs: tuple[PerturbationPair, ...]
    kind: str  # "nsr" | "apsd"
    condition_number: float = field(init=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (len(self.pairs), len(self.basis)):
            raise ValueError("matrix shape does not match pairs x basis")
        if not np.all(np.isfinite(m)) or np.any(m <= 0):
            raise ValueError("delta-matrix entries must be strictly positive and finite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        s = np.linalg.svd(m, compute_uv=False)
        cond = math.inf if s[-1] == 0 else float(s[0] / s[-1])
        object.__setattr__(self, "condition_number", cond)

    def predict(self, dec: NoiseDecomposition) -> np.ndarray:
        """Forward model: measurements implied by a reference decomposition."""
        return self.matrix @ reference_vector(dec, self.basis)


def reference_vector(dec: NoiseDecomposition, basis) -> np.ndarray:
    return np.array([dec.get(k) for k in basis], dtype=float)


def _nln_column(key: CategoryKey, pairs) -> np.ndarray:
    if key.multiplicity(RegionLabel.N) > 0:
        raise ValueError(
            f"{key} sources the notch, which carries no transmit power; "
            "it cannot appear in a fit basis")
    m_a = key.multiplicity(RegionLabel.A)
    m_b = key.multiplicity(RegionLabel.B)
    da = np.array([p.delta_a for p in pairs])
    db = np.array([p.delta_b for p in pairs])
    return da ** m_a * db ** m_b


def delta_matrix_nsr(pairs, basis, signal: RegionLabel = RegionLabel.A) -> DeltaMatrix:
    """Delta matrix for in-band noise-to-signal ratios.

    A category column is delta_a^m_A * delta_b^m_B divided by the signal
    band's own gain; TRX is all ones (noise proportional to the signal) and
    ASE is one over the signal gain (fixed noise over a scaled signal).
    """
    pairs = tuple(pairs)
    if signal not in (RegionLabel.A, RegionLabel.B):
        raise ValueError("NSR measurements live in a data-carrying band (A or B)")
    sig = np.array([p.delta_a if signal == RegionLabel.A else p.delta_b for p in pairs])
    cols = []
    for key in basis:
        if key == TRX:
            cols.append(np.ones(len(pairs)))
        elif key == ASE:
            cols.append(1.0 / sig)
        else:
            cols.append(_nln_column(key, pairs) / sig)
    return DeltaMatrix(np.column_stack(cols), tuple(basis), pairs, "nsr")


def delta_matrix_apsd(pairs, basis) -> DeltaMatrix:
    """Delta matrix for notch APSD measurements: columns delta_a^m_A *
    delta_b^m_B, with a constant column for ASE."""
    pairs = tuple(pairs)
    cols = []
    for key in basis:
        if key == TRX:
            raise ValueError("TRX has no defined APSD response; use the NSR basis")
        if key == ASE:
            cols.append(np.ones(len(pairs)))
        else:
            cols.append(_nln_column(key, pairs))
    return DeltaMatrix(np.column_stack(cols), tuple(basis), pairs, "apsd")


@dataclass(frozen=True)
class FitResult:
    """Least-squares estimate with diagnostics.

    ``labels`` aligns with ``coefficients`` and ``stderr``. For category
    bases a NoiseDecomposition view is attached; negative estimates are kept
    as-is (clamping would destroy the error statistics). ``degeneracy``
    carries a human-readable note per (near-)null direction or known
    conflation.
    """

    labels: tuple[str, ...]
    coefficients: np.ndarray
    stderr: np.ndarray
    residual_norm: float
    condition_number: float
    rank: int
    degeneracy: tuple[str, ...]
    decomposition: NoiseDecomposition | None

    def __getitem__(self, label: str) -> float:
        return float(self.coefficients[self.labels.index(label)])


def _combo_string(direction: np.ndarray, labels) -> str:
    terms = []
    top = np.max(np.abs(direction))
    for coef, lab in zip(direction, labels):
        if abs(coef) > 0.05 * top:
            terms.append(f"{coef:+.3f}*{lab}")
    return " ".join(terms)


def _solve(matrix: np.ndarray, y: np.ndarray, labels, weights=None,
           rcond: float = 1e-10, notes: tuple[str, ...] = ()) -> dict:
    y = np.asarray(y, dtype=float)
    p, n = matrix.shape
    if y.shape != (p,):
        raise ValueError(f"expected {p} measurements, got {y.shape}")
    if p < n:
        raise ValueError("need at least as many measurements as basis columns")
    x_mat = matrix
    y_fit = y
    if weights is not None:
        w = 1.0 / np.sqrt(np.asarray(weights, dtype=float))
        x_mat = matrix * w[:, None]
        y_fit = y * w
    u, s, vt = np.linalg.svd(x_mat, full_matrices=False)
    cutoff = s[0] * rcond if s[0] > 0 else 0.0
    keep = s > cutoff
    rank = int(keep.sum())
    s_inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    x = vt.T @ (s_inv * (u.T @ y_fit))
    resid = y_fit - x_mat @ x
    rss = float(resid @ resid)
    dof = p - rank
    sigma2 = rss / dof if dof > 0 else math.nan
    var_diag = (vt.T ** 2) @ (s_inv ** 2)
    stderr = np.sqrt(np.abs(sigma2) * var_diag) if dof > 0 else np.full(n, math.nan)
    cond = math.inf if s[-1] == 0 or rank < n else float(s[0] / s[-1])
    degeneracy = list(notes)
    for k in range(rank, n):
        degeneracy.append("null direction: " + _combo_string(vt[k], labels))
    return dict(coefficients=x, stderr=stderr, residual_norm=math.sqrt(rss),
                condition_number=cond, rank=rank, degeneracy=tuple(degeneracy))


def fit(measurements, dm: DeltaMatrix, weights=None, rcond: float = 1e-10) -> FitResult:
    """Ordinary (optionally variance-weighted) least squares on a delta matrix.

    Solved by SVD rather than the normal equations; rank-deficient systems
    return the minimum-norm solution with the conflated category combination
    reported in ``degeneracy``.
    """
    labels = tuple(k.name for k in dm.basis)
    sol = _solve(dm.matrix, np.asarray(measurements, dtype=float), labels,
                 weights=weights, rcond=rcond)
    dec = NoiseDecomposition(
        {k: float(v) for k, v in zip(dm.basis, sol["coefficients"])}, dm.kind)
    return FitResult(labels=labels, decomposition=dec, **sol)


def constant_power_delta_b(delta_a: float, k_a: float, k_b: float) -> float:
    """Gain on F_B that keeps k_a*delta_a + k_b*delta_b = 1 (total launch
    power unchanged)."""
    if not (k_a > 0 and k_b > 0):
        raise ValueError("relative powers must be positive")
    if not (math.isfinite(delta_a) and delta_a > 0):
        raise ValueError(f"delta_a must be positive, got {delta_a}")
    delta_b = (1.0 - k_a * delta_a) / k_b
    if delta_b <= 0:
        raise ValueError(
            f"infeasible constant-power perturbation: delta_a={delta_a} >= 1/k_a={1.0 / k_a}")
    return delta_b


def constant_power_pairs(delta_as, k_a: float, k_b: float) -> tuple[PerturbationPair, ...]:
    return tuple(PerturbationPair(da, constant_power_delta_b(da, k_a, k_b))
                 for da in delta_as)


@dataclass(frozen=True)
class ConstantPowerCoeffs:
    """Polynomial-in-delta_a coefficients of the intra-category noise sum
    under the constant-power constraint.

    Notch APSDs collapse to powers (3, 2, 1, 0) of delta_a. The in-band NSR
    keeps a 1/delta_a term (the [B,B,B] category over the scaled signal), so
    its powers are (2, 1, 0, -1); the published three-coefficient form drops
    the constant and mislabels the 1/delta term, which the forward-model
    oracle here pins down.
    """

    kind: str  # "nsr" | "apsd"
    powers: tuple[int, ...]
    coeffs: tuple[float, ...]

    def coeff(self, power: int) -> float:
        return self.coeffs[self.powers.index(power)]

    def evaluate(self, delta_a) -> np.ndarray | float:
        da = np.asarray(delta_a, dtype=float)
        out = sum(c * da ** p for p, c in zip(self.powers, self.coeffs))
        return float(out) if out.ndim == 0 else out


def _intra_values(dec: NoiseDecomposition) -> tuple[float, float, float, float]:
    try:
        return dec[_AAA], dec[_BAA], dec[_BBA], dec[_BBB]
    except KeyError as exc:
        raise ValueError(f"decomposition is missing intra category {exc}") from exc


def constant_power_coeffs_nsr(dec: NoiseDecomposition, k_a: float,
                              k_b: float) -> ConstantPowerCoeffs:
    """Expand the intra-category NSR sum in powers of delta_a with delta_b
    eliminated through the constant-power constraint."""
    n_aaa, n_baa, n_bba, n_bbb = _intra_values(dec)
    r = k_a / k_b
    c2 = n_aaa - r * n_baa + r ** 2 * n_bba - r ** 3 * n_bbb
    c1 = n_baa / k_b - 2.0 * k_a / k_b ** 2 * n_bba + 3.0 * k_a ** 2 / k_b ** 3 * n_bbb
    c0 = n_bba / k_b ** 2 - 3.0 * k_a / k_b ** 3 * n_bbb
    cm1 = n_bbb / k_b ** 3
    return ConstantPowerCoeffs("nsr", (2, 1, 0, -1), (c2, c1, c0, cm1))


def constant_power_coeffs_apsd(dec: NoiseDecomposition, k_a: float,
                               k_b: float) -> ConstantPowerCoeffs:
    """Expand the intra-category notch-APSD sum in powers of delta_a under
    the constant-power constraint."""
    s_aaa, s_baa, s_bba, s_bbb = _intra_values(dec)
    r = k_a / k_b
    c3 = s_aaa - r * s_baa + r ** 2 * s_bba - r ** 3 * s_bbb
    c2 = s_baa / k_b - 2.0 * k_a / k_b ** 2 * s_bba + 3.0 * k_a ** 2 / k_b ** 3 * s_bbb
    c1 = s_bba / k_b ** 2 - 3.0 * k_a / k_b ** 3 * s_bbb
    c0 = s_bbb / k_b ** 3
    return ConstantPowerCoeffs("apsd", (3, 2, 1, 0), (c3, c2, c1, c0))


def fit_constant_power(measurements, delta_as, k_a: float, k_b: float,
                       mode: str = "apsd", symmetry_constrained: bool = False,
                       rcond: float = 1e-10) -> FitResult:
    """Fit measurements taken along the constant-power perturbation curve.

    Unconstrained mode fits the raw polynomial basis ([d^3..d^0] for APSD,
    [d^2..1/d] for NSR); its constant term necessarily conflates ASE (and
    TRX for NSR) with the same-shaped NLN contribution, which is noted in
    the result. Symmetry-constrained mode exploits the mirror-layout
    equalities [A,A,A]=[B,B,B] and [B,A,A]=[B,B,A] to fit the categories
    {u, v} plus ASE directly; that system is identifiable except at exactly
    k_a = k_b, where a one-dimensional null space remains and is reported.
    """
    if mode not in ("nsr", "apsd"):
        raise ValueError(f"mode must be 'nsr' or 'apsd', got {mode!r}")
    da = np.asarray(list(delta_as), dtype=float)
    db = np.array([constant_power_delta_b(d, k_a, k_b) for d in da])
    y = np.asarray(measurements, dtype=float)

    if symmetry_constrained:
        if mode == "nsr":
            raise ValueError(
                "symmetry-constrained fitting applies to notch APSD data; the "
                "category symmetries relate NSRs across bands, not within one")
        cols = np.column_stack([da ** 3 + db ** 3,
                                da ** 2 * db + da * db ** 2,
                                np.ones_like(da)])
        labels = ("[A,A,A]=[B,B,B]", "[B,A,A]=[B,B,A]", "ASE")
        if len(np.unique(da)) < cols.shape[1]:
            raise ValueError("insufficient distinct perturbations for the basis")
        notes = ()
        if math.isclose(k_a, k_b, rel_tol=1e-9):
            notes = ("k_a = k_b: u + 3 v - (1/k_b^3) ASE spans a null direction "
                     "along the constant-power curve; estimates are minimum-norm",)
        sol = _solve(cols, y, labels, rcond=rcond, notes=notes)
        u, v, ase_val = (float(c) for c in sol["coefficients"])
        dec = NoiseDecomposition({_AAA: u, _BBB: u, _BAA: v, _BBA: v, ASE: ase_val},
                                 "apsd")
        return FitResult(labels=labels, decomposition=dec, **sol)

    if mode == "apsd":
        powers = (3, 2, 1, 0)
        notes = ("delta^0 conflates ASE with the constant NLN term",)
    else:
        powers = (2, 1, 0, -1)
        notes = ("delta^0 conflates TRX with the constant NLN term",
                 "delta^-1 conflates ASE with the 1/delta NLN term")
    if len(np.unique(da)) < len(powers):
        raise ValueError("insufficient distinct perturbations for the basis")
    cols = np.column_stack([da ** p for p in powers])
    labels = tuple(f"delta^{p}" for p in powers)
    sol = _solve(cols, y, labels, rcond=rcond, notes=notes)
    return FitResult(labels=labels, decomposition=None, **sol)
