"""Bandit-walk A/B testing with doubly robust pseudo-outcomes.

The pipeline: construct per-unit effect surrogates (cross-fitted AIPW for
i.i.d. experiments, value/ratio corrections for Markovian panels), run the
sign-following bandit walk over random reorderings, and aggregate the
per-permutation p-values.  A plain z-test over the same surrogates serves as
the baseline, and a simulation suite reproduces the reference environments.
"""

from .core import (
    CsvFormatError,
    DataError,
    DegenerateSampleError,
    IidDataset,
    IidRecord,
    InvalidArgumentError,
    MissingArmError,
    NumericError,
    PanelDataset,
    RngStream,
    SchemaError,
    Trajectory,
    kfold_split,
    load_iid_csv,
    load_panel_csv,
    write_iid_csv,
    write_panel_csv,
)
from .dist import BanditParams, bandit_pdf, std_normal_cdf, std_normal_quantile, tab_rejection_probability
from .drl import (
    ArmValueFunction,
    BehaviorPolicy,
    GaussianDynamics,
    RatioModel,
    ValueModel,
    build_pseudo_dynamic,
    drl_pseudo,
    drl_z_test,
    dynamics_from_coefficients,
    fit_mis_ratio,
    fit_value_backward,
    fit_value_model,
)
from .nuisance import (
    FeatureMap,
    KnownPropensity,
    LearnerConfig,
    OutcomeModel,
    PropensityModel,
    crossfit_predict,
    fit_outcome,
    fit_propensity,
)
from .pseudo_iid import PseudoOutcomes, aipw_pseudo, build_pseudo, ipw_pseudo, pseudo_from_models
from .sim import (
    BootstrapEnv,
    IidDgpSpec,
    MdpCoefficients,
    MdpDgpSpec,
    build_bootstrap_env,
    draw_mdp_coefficients,
    gen_confounded_iid,
    gen_mdp,
    gen_randomized_iid,
    sample_bootstrap,
    switchback_assign,
    switchback_assign_per_day,
    true_ate_iid,
    true_ate_linear,
    true_ate_mdp,
    true_value_affine,
)
from .study import iid_rejection_study, mdp_rejection_study
from .tab import (
    CombinedTest,
    TabStatistic,
    WalkTrace,
    cauchy_combine,
    p_tab,
    permute,
    quantile_combine,
    standardize_rewards,
    tab_test,
    tab_walk,
    z_test,
)

__version__ = "0.1.0"
