mod config;
mod crosstalk;
mod event;
mod sim;

pub use config::{
    db_to_transmittance, transmittance_to_db, ReceiverConfig, TransmitterConfig, DEFAULT_PERIOD_PS,
};
pub use crosstalk::{
    apply_crosstalk, calibrate_crosstalk, crosstalk_rate, gate_capture, measure_crosstalk,
    CrosstalkCalibration, CrosstalkPoint,
};
pub use event::{
    read_events_binary, read_events_csv, read_ground_truth, write_events_binary, write_events_csv,
    write_ground_truth, Channel, DetectionEvent, EventRecord, GroundTruth, Origin,
};
pub use sim::{pulse_stream, simulate_transmission, ChannelSimulator, PS_PER_S};
