import pytest

from fwnl.categories import category
from fwnl.gn_model import FwmKernelSpec, LinkParameters
from fwnl.spectra import (FrequencyGrid, ShapeSpec, SpectralLayout, Interval,
                          build_reference_spectrum, symmetric_layout)

INTRA_KEYS = (category("A", "A", "A"), category("B", "A", "A"),
              category("B", "B", "A"), category("B", "B", "B"))


def small_grid(bandwidth=80e9, df=100e6) -> FrequencyGrid:
    return FrequencyGrid.centered(bandwidth, df)


def ndsf_link(n_spans=3, **overrides) -> LinkParameters:
    params = dict(gamma=1.3, dispersion=16.7, alpha_db=0.2, span_length=100.0,
                  n_spans=n_spans, amp_gain_db=20.0, amp_nf_db=4.5)
    params.update(overrides)
    return LinkParameters(**params)


@pytest.fixture(scope="session")
def kernel() -> FwmKernelSpec:
    return FwmKernelSpec()


@pytest.fixture(scope="session")
def small_setup():
    """Small mirror-symmetric two-band layout with a flat reference, cheap
    enough for conditioned-integration property tests."""
    grid = small_grid()
    layout = symmetric_layout(grid, 16e9, 8e9)
    shape = ShapeSpec(height_a=4e-14, height_b=4e-14)
    tx = build_reference_spectrum(layout, shape, grid)
    return grid, layout, tx


def plain_layout(grid: FrequencyGrid, width_a=20e9, width_n=10e9, width_b=20e9,
                 lo=None) -> SpectralLayout:
    """Naive grid-aligned layout (no mirror correction), for arithmetic
    examples quoted with round widths."""
    if lo is None:
        lo = -(width_a + width_n / 2)
    return SpectralLayout(
        grid=grid,
        f_a=Interval(lo, lo + width_a),
        f_n=Interval(lo + width_a, lo + width_a + width_n),
        f_b=Interval(lo + width_a + width_n, lo + width_a + width_n + width_b),
    )
