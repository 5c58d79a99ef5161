//! The layered lower-bound construction and its tower bookkeeping.

pub mod instance;
pub mod schedule;
pub mod tower;
pub mod verify;

pub use instance::{
    sample_spanning_tuple, verify_spanning, ConsistencyReport, Instance, Layer, SpanningTuple,
};
pub use schedule::{
    hlms_weights, sarl_schedule, tower_lower_bound, DimensionSchedule, EpsSchedule, SarlSchedule,
    TowerReport,
};
pub use tower::{TowerInt, TowerRange, Verdict};
pub use verify::{
    adversarial_family, claim_mean, claim_mean_check, locate_layer, verify_large_bias,
    LargeBiasReport,
};
