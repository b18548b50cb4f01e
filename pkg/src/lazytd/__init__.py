"""Desk-scale laboratory for temporal-difference policy evaluation with
lazily scaled and population-limit nonlinear approximators."""

from .mrp import (
    Mrp,
    StationaryMeasure,
    contraction_modulus,
    cyclic_chain,
    exact_value,
    load_mrp,
    mu_inner,
    mu_norm,
    mu_projection,
    random_chain,
    save_mrp,
    stationary_measure,
    td_operator,
    td_resolvent,
)
from .models import (
    LinearModel,
    RankProfile,
    ReluNet,
    SpiralModel,
    TangentModel,
    ValueModel,
    finite_difference_jacobian,
    model_from_spec,
    rank_profile,
)
from .dynamics import (
    TrainConfig,
    Trajectory,
    averaged_rhs,
    integrate,
    lazy_rhs,
    make_lazy_rhs,
    run_stochastic_td,
    sample_chain,
    stochastic_td_step,
)
from .analysis import (
    DecayCertificate,
    DisplacementReport,
    FixedPointCertificate,
    LazyGeometry,
    displacement_scaling,
    estimate_jacobian_lipschitz,
    fit_exponential_rate,
    metric_drift,
    overparametrized_certificate,
    projected_td_error,
    underparametrized_certificate,
)
from .meanfield import (
    EnsembleHistory,
    FeatureMap,
    GaussianBumpFeatures,
    OptimalityReport,
    ParticleEnsemble,
    ReluFeatures,
    SeparationReport,
    calibrate_gap_constant,
    doubled_ensemble,
    ensemble_value,
    fixed_point_optimality,
    g_profile,
    h1_profile,
    integrate_ensemble,
    linearized_gap_bound,
    particle_rhs,
    separation_check,
)

__version__ = "0.1.0"
