"""Swap-mixture likelihoods for correlation in unordered twin pairs.

Fits MZ-only, DZ-only and combined MZ + DZ models, tests DZ mean
homogeneity with a boundary likelihood-ratio test, gives bootstrap
intervals for the Falconer contrast ``rho_M - rho_D`` and runs the
matching Monte Carlo experiments.
"""

__version__ = "0.1.0"

from .errors import (
    ConvergenceError,
    DegenerateDataError,
    DomainError,
    InputError,
    TwinMixError,
)
from .model import (
    BvnParams,
    ModelParams,
    PairObs,
    UnconstrainedParams,
    bvn_logpdf,
    from_unconstrained,
    mixture_logpdf,
    mixture_moments,
    pearson_limit,
    sample_pair,
    sample_pairs,
    to_unconstrained,
)
from .estimation import (
    FitOptions,
    FitResult,
    canonicalize,
    combined_loglik,
    fit_combined,
    fit_combined_generic,
    fit_combined_null,
    fit_dz_separate,
    fit_dz_separate_equal_means,
    fit_mz,
    pearson_r,
)
from .inference import (
    BootstrapResult,
    CalibrationReport,
    LrtResult,
    a_n_empirical,
    bootstrap_ci,
    calibrate_an,
    lrt_homogeneity,
)
from .dataio import (
    TraitTable,
    TwinDataset,
    inv_norm_cdf,
    load_trait_file,
    load_twin_csv,
    normality_check,
    probit_transform,
    variance_diagnostic,
    write_dataset_csv,
    write_report,
)
from .simulation import (
    ScenarioConfig,
    ScenarioReport,
    generate_dataset,
    run_null_qq,
    run_table1,
    run_table2,
)
