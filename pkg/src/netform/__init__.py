"""Bayesian estimation of directed network formation with direct, mutual and
indirect link utilities, plus a dyadic logit baseline and counterfactual
simulation."""

__version__ = "0.1.0"

from .counterfactual import (
    CounterfactualResult,
    Scenario,
    ScenarioKind,
    dispersion_transform,
    regenerate_covariates,
    run_counterfactual,
)
from .exchange import (
    AdaptationSchedule,
    DivergedChainError,
    EstimationData,
    PosteriorChain,
    SamplerConfig,
    TwoPhaseResult,
    adapt_scale,
    exchange_step,
    run_two_phase,
    summarize_posterior,
)
from .features import (
    DyadFeatureSet,
    FeatureRecipe,
    GenderCoding,
    build_features,
    structural_recipe,
    table2_recipe,
)
from .gibbs import GibbsConfig, gibbs_step, simulate_network, simulate_villages
from .graph import (
    VillageNetwork,
    clustering,
    density,
    link_proportion_diagnostics,
    mean_distance,
    network_stats,
)
from .households import (
    GeneratorSpec,
    Household,
    Village,
    generate_synthetic,
    load_households,
    summarize_households,
    write_households,
)
from .logit import LogitSpec, fit_logit, stack_dyads
from .potential import (
    ParameterVector,
    ScoreMatrices,
    delta_potential,
    potential,
    score,
    sufficient_statistics,
)
from .rng import stream
