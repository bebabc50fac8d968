//! Simulated robot interface: encoder calibration, the Sweep/Hold/Run state
//! machine, the command/sensor packet codec and frame timing statistics.

pub mod calibration;
pub mod packet;
pub mod state_machine;
pub mod timing;

pub use calibration::{
    apply_index_offsets, soft_calibrate, sweep_reference, CalibrationError, CalibrationResult, CalibrationStatus,
    EncoderModel, SweepParams, CAPTURE_WINDOW, PULSE_SPACING,
};
pub use packet::{
    decode_command, decode_sensor, encode_command, encode_sensor, CommandPacket, CommandPayload, PacketError,
    SensorPacket, SequenceGuard,
};
pub use state_machine::{state_machine_step, Event, InterfaceState, StateMachine, TransitionError};
pub use timing::{TimingMonitor, TimingSummary, DEADLINE_US};
