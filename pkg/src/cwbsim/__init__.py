"""cwbsim: social-media dynamics simulator with a collective well-being
metric engine, pluggable recommenders, and a well-being-aware re-ranker."""

from .agents import DynamicsParams, UserState, accept_connection, generate_post, update_opinion
from .config import SimConfig, load_preset, parse_config, preset_cwbrs_vs_chrono, preset_fig6
from .content import (
    Aspect,
    ContentItem,
    DetectorParams,
    ItemFactory,
    Polarity,
    debias_prevalence,
    measured_prevalence,
    noisy_detect,
    true_aspect_score,
)
from .cwb import (
    CWBConfig,
    CWBReport,
    StateView,
    aggregate_time,
    aggregate_users,
    contact_creation,
    content_exposure,
    content_shared,
    cwb_total,
    feed_diversity_entropy,
    satisfaction,
)
from .errors import (
    CwbsimError,
    InvalidConfigError,
    InvalidInputError,
    NotFoundError,
    UndefinedMeasureError,
)
from .network import (
    SocialGraph,
    centrality_weighted_threat,
    closeness,
    common_neighbors,
    degree_gini,
    generate_homophily_pa,
    homophily_index,
)
from .recommenders import (
    ObjectiveBandit,
    ObjectiveThresholds,
    cwbrs_rerank,
    objective_bandit_update,
    rank_chronological,
    recommend_connection,
    select_objective,
)
from .sim import EnsembleStats, RunConfig, RunTrace, run, run_ensemble, step

__version__ = "0.1.0"
