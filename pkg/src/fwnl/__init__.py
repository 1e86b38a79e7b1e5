"""fwnl: separation of ASE and four-wave-mixing noise categories in optical
fiber links via engineered spectral power perturbations and least-squares
fitting, with a GN-model calculator and a split-step simulator as mutually
verifying oracles."""

from .spectra import (FrequencyGrid, Interval, Psd, SpectralLayout,
                      PerturbationPair, ObChannel, ShapeSpec,
                      build_reference_spectrum, normalize_boi,
                      apply_perturbation, apsd, band_power, relative_powers,
                      symmetric_layout)
from .gn_model import LinkParameters, FwmKernelSpec, fwm_weight, nln_psd, ase_psd
from .categories import (RegionLabel, CategoryKey, ASE, TRX, category,
                         NoiseDecomposition, nln_psd_permutation,
                         nln_psd_multiset, category_apsd, category_nsr,
                         check_symmetries)
from .estimator import (DeltaMatrix, FitResult, ConstantPowerCoeffs,
                        perturbation_grid, delta_matrix_nsr, delta_matrix_apsd,
                        fit, constant_power_delta_b, constant_power_pairs,
                        constant_power_coeffs_nsr, constant_power_coeffs_apsd,
                        fit_constant_power, SINGLE_CHANNEL_NSR,
                        SINGLE_CHANNEL_APSD, WDM_APSD)
from .ssfm import (WaveformConfig, FieldWaveform, SsfmControl,
                   synthesize_waveform, propagate_span, amplify,
                   propagate_link, measure_psd, measure_nsr, save_waveform,
                   load_waveform)
from .config import Scenario, ConfigError, parse_config
from .runner import ResultRow, ResultSet, run_scenario, compare

__version__ = "0.1.0"
