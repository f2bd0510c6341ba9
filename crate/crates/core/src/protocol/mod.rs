//! Frames, symbols and synchronization strings on the transmit side.

mod frame;
pub mod io;
mod matrix;
mod symbol;
mod sync_code;

pub use frame::{build_frame, BitFrame, FrameSpec, PulseStream};
pub use matrix::{reshape_to_matrix, Matrix};
pub use symbol::{
    generate_random_payload, Basis, Intensity, PayloadSource, QubitSymbol, Role,
    SourceProbabilities,
};
pub use sync_code::{default_period_len, generate_sync_string, SyncString, DEFAULT_PERIOD_LEN};
