mod bounds;
mod tally;

pub use bounds::{
    binary_entropy, decoy_bounds, lambda_ec, secure_key_rate, security_cost_bits, DecoyBounds,
    KeyRateInputs, KeyRateResult, SecurityBudget,
};
pub use tally::{read_tally_csv, sift, write_tally_csv, Counts, SiftedTally};
