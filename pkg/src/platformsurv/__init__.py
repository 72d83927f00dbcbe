"""Causal survival estimation for platform trials with non-concurrent controls."""

from .curves import SurvivalMatrix, ThetaCurve, contrast, drmst, product_limit, theta_plugin
from .data import (
    PersonPeriodTable,
    SubjectRecord,
    TrialDataset,
    TrialSchema,
    collapse_person_period,
    expand_person_period,
    load_trial_csv,
)
from .dgp import (
    DgpConfig,
    GeneratedTrial,
    TruthTable,
    calibrate_availability,
    gen_stochastic_availability,
    gen_trial,
    misspecify,
    solve_threshold,
    truth_oracle,
)
from .errors import (
    BootstrapInstabilityError,
    ConfigError,
    DataError,
    DegenerateHazardError,
    DesignViolationError,
    EmptyPopulationError,
    NumericalError,
    PlatformSurvError,
    PoolingDiagnosticWarning,
    SchemaError,
    SeparationError,
    SingularDesignError,
)
from .estimators import (
    EifTerms,
    EstimateReport,
    NuisanceValues,
    bootstrap_se,
    compute_eif,
    delta_ratio,
    eif_theta,
    estimate,
    estimate_dr,
    estimate_or,
    fit_nuisances,
    pointwise_bands,
    survival_curves,
)
from .hazard import (
    HazardFit,
    KnownPropensity,
    LogisticAvailability,
    ModelSpec,
    fit_hazard,
    fit_logistic,
    known_propensity,
)

__version__ = "0.1.0"
