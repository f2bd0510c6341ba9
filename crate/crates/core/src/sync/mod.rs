mod clock;
mod correlate;
mod frame;
mod identify;
mod slots;

pub use clock::{
    estimate_clock_fft, interval_error_terms, refine_clock_lts, ClockEstimate, LtsOptions,
    DEFAULT_FFT_SAMPLES,
};
pub use correlate::{direct_correlation, matrix_correlation};
pub use frame::{
    extract_received_frame, frame_from_clicks, slot_clicks, ternary_of, ReceivedFrame,
};
pub use identify::{
    identify_transmitter, min_sync_length, read_report, snr_delta, write_report,
    IdentificationReport, IdentificationResult, IdentifyOptions, ReportEntry,
};
pub use slots::{demarcate_slots, SlotAssignment, SlotCluster};
