//! Closed-loop simulation, tracking metrics and experiment campaigns.

mod campaign;
mod episode;
mod metrics;
mod reference;

pub use campaign::{run_campaign, CampaignResult, CampaignSpec, CellResult, LawSummary};
pub use episode::{initial_state, run_episode, step, EpisodeSetup, EpisodeTrace, Mode, DEFAULT_INIT_JITTER};
pub use metrics::{
    composite_score, improvement, metrics_from_signal, percentile, MetricSet, METRIC_NAMES, METRIC_WEIGHTS,
    SETTLE_THRESHOLD,
};
pub use reference::{builtin_condition, builtin_conditions, Condition, PAPER_DISTURBANCE};
