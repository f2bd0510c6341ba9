mod jitter;
mod model;

pub use jitter::{jitter_qber, max_jitter, JitterSpec};
pub use model::{
    expected_tally, gain_qber, simulate_capacity, splitter_loss_db, sweep, weighted_qber,
    write_capacity_csv, CapacityParams, CapacityPoint, SPLITTER_EXCESS_DB,
};
