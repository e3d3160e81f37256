"""Corrected inference for spiked eigenvalues of sample covariance matrices.

The package covers the full pipeline: spiked-model sampling, closed-form
first-order corrections to the Gaussian limit of the leading eigenvalues,
data-driven moment estimation, confidence intervals and spike-count
estimation, and a deterministic Monte Carlo harness with a CLI front end.
"""

from __future__ import annotations

from .edgeworth import (
    EdgeworthCoefficients,
    SpikeContext,
    centering_rho,
    coefficients,
    coefficients_single_spike,
    cornish_fisher_quantile,
    correction_poly_p1,
    edgeworth_cdf,
    edgeworth_pdf,
    kappa2,
    kappa3,
    monotonicity_defect,
    mu_g,
    cross_spike_A,
    r_statistic,
    sigma_sq,
    tilde_kappa2,
    tilde_kappa3,
    tilde_sigma_sq,
)
from .harness import (
    ACCURACY_CELLS,
    ACCURACY_SPIKES,
    SETTINGS,
    AccuracyResult,
    DensityResult,
    ExperimentSpec,
    MomentsResult,
    cell_seed,
    derive_seed,
    ks_distance,
    oracle_coefficients,
    resolve_workers,
    run_accuracy,
    run_density,
    run_moments,
)
from .inference import (
    CI_METHODS,
    ConfidenceInterval,
    SpikeCountEstimate,
    bootstrap_coefficients,
    ci_root_solving,
    ci_scaled,
    clamped_triple,
    e_pivot,
    estimate_spike_count,
    estimate_spike_count_multi,
    invert_psi,
    phase_threshold,
    z_pivot,
)
from .linalg import (
    EigenConvergenceError,
    EigenDecomposition,
    FloatArray,
    SingularMatrixError,
    loo_inverse,
    lto_inverse,
    pseudo_inverse,
    sample_covariance,
    sym_eigen,
    validate_data,
)
from .model import (
    DIAGONAL_VSUMS,
    DISTRIBUTION_TAGS,
    EmbeddedHaar,
    FullHaar,
    Identity,
    MomentTriple,
    Rotation,
    SpikedModel,
    VSums,
    build_model,
    generate_data,
    haar_orthogonal,
    population_moments,
    sample_entries,
    v_power_sums,
)
from .moments import (
    GAMMA_VARIANTS,
    MomentEstimates,
    estimate_all,
    estimate_beta_z,
    estimate_delta,
    estimate_gamma_sq,
    loo_trace_inverse,
)

__version__ = "0.1.0"

__all__ = [
    "ACCURACY_CELLS",
    "ACCURACY_SPIKES",
    "AccuracyResult",
    "CI_METHODS",
    "ConfidenceInterval",
    "DIAGONAL_VSUMS",
    "DISTRIBUTION_TAGS",
    "DensityResult",
    "EdgeworthCoefficients",
    "EigenConvergenceError",
    "EigenDecomposition",
    "EmbeddedHaar",
    "ExperimentSpec",
    "FloatArray",
    "FullHaar",
    "GAMMA_VARIANTS",
    "Identity",
    "MomentEstimates",
    "MomentTriple",
    "MomentsResult",
    "Rotation",
    "SETTINGS",
    "SingularMatrixError",
    "SpikeContext",
    "SpikeCountEstimate",
    "SpikedModel",
    "VSums",
    "bootstrap_coefficients",
    "build_model",
    "cell_seed",
    "centering_rho",
    "ci_root_solving",
    "ci_scaled",
    "clamped_triple",
    "coefficients",
    "coefficients_single_spike",
    "cornish_fisher_quantile",
    "correction_poly_p1",
    "cross_spike_A",
    "derive_seed",
    "e_pivot",
    "edgeworth_cdf",
    "edgeworth_pdf",
    "estimate_all",
    "estimate_beta_z",
    "estimate_delta",
    "estimate_gamma_sq",
    "estimate_spike_count",
    "estimate_spike_count_multi",
    "generate_data",
    "haar_orthogonal",
    "invert_psi",
    "kappa2",
    "kappa3",
    "ks_distance",
    "loo_inverse",
    "loo_trace_inverse",
    "lto_inverse",
    "monotonicity_defect",
    "mu_g",
    "oracle_coefficients",
    "phase_threshold",
    "population_moments",
    "pseudo_inverse",
    "r_statistic",
    "resolve_workers",
    "run_accuracy",
    "run_density",
    "run_moments",
    "sample_covariance",
    "sample_entries",
    "sigma_sq",
    "sym_eigen",
    "tilde_kappa2",
    "tilde_kappa3",
    "tilde_sigma_sq",
    "v_power_sums",
    "validate_data",
    "z_pivot",
]
