//! Fixed-layout little-endian packets with a trailing CRC-32 (IEEE).
//!
//! Command, onboard PD mode (105 bytes):
//! `[0x01][seq u32][12 × (q_ref f32, dq_ref f32)][crc u32]`
//!
//! Command, torque mode (57 bytes):
//! `[0x02][seq u32][12 × tau f32][crc u32]`
//!
//! Sensor (116 bytes):
//! `[seq u32][12 × (q f32, dq f32)][roll, pitch, yaw rate f32][crc u32]`
//!
//! The CRC covers every byte before it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::JOINT_COUNT;

pub const MODE_ONBOARD_PD: u8 = 0x01;
pub const MODE_TORQUE: u8 = 0x02;
pub const PD_PACKET_LEN: usize = 1 + 4 + 8 * JOINT_COUNT + 4;
pub const TORQUE_PACKET_LEN: usize = 1 + 4 + 4 * JOINT_COUNT + 4;
pub const SENSOR_PACKET_LEN: usize = 4 + 8 * JOINT_COUNT + 12 + 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PacketError {
    #[error("bad frame length: expected {expected} bytes, got {got}")]
    Length { expected: usize, got: usize },
    #[error("crc mismatch: frame says {stored:#010x}, computed {computed:#010x}")]
    Crc { stored: u32, computed: u32 },
    #[error("unknown mode tag {0:#04x}")]
    UnknownMode(u8),
    #[error("empty frame")]
    Empty,
    #[error("sequence {got} does not follow {last}")]
    Sequence { last: u32, got: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CommandPayload {
    OnboardPd { q_ref: [f32; JOINT_COUNT], dq_ref: [f32; JOINT_COUNT] },
    Torque { tau: [f32; JOINT_COUNT] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandPacket {
    pub seq: u32,
    pub payload: CommandPayload,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorPacket {
    pub seq: u32,
    pub q: [f32; JOINT_COUNT],
    pub dq: [f32; JOINT_COUNT],
    pub imu_rates: [f32; 3],
}

pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

fn to_f32(v: &[f64; JOINT_COUNT]) -> [f32; JOINT_COUNT] {
    std::array::from_fn(|i| v[i] as f32)
}

impl CommandPacket {
    pub fn onboard_pd(seq: u32, q_ref: &[f64; JOINT_COUNT], dq_ref: &[f64; JOINT_COUNT]) -> Self {
        Self { seq, payload: CommandPayload::OnboardPd { q_ref: to_f32(q_ref), dq_ref: to_f32(dq_ref) } }
    }

    pub fn torque(seq: u32, tau: &[f64; JOINT_COUNT]) -> Self {
        Self { seq, payload: CommandPayload::Torque { tau: to_f32(tau) } }
    }

    pub fn mode_tag(&self) -> u8 {
        match self.payload {
            CommandPayload::OnboardPd { .. } => MODE_ONBOARD_PD,
            CommandPayload::Torque { .. } => MODE_TORQUE,
        }
    }
}

fn put_f32s(out: &mut Vec<u8>, vals: impl IntoIterator<Item = f32>) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn seal(mut out: Vec<u8>) -> Vec<u8> {
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn check_frame(bytes: &[u8], expected: usize) -> Result<(), PacketError> {
    if bytes.len() != expected {
        return Err(PacketError::Length { expected, got: bytes.len() });
    }
    let (body, tail) = bytes.split_at(expected - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4-byte tail"));
    let computed = crc32(body);
    if stored != computed {
        return Err(PacketError::Crc { stored, computed });
    }
    Ok(())
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

fn read_f32(b: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

pub fn encode_command(packet: &CommandPacket) -> Vec<u8> {
    let mut out = Vec::with_capacity(PD_PACKET_LEN);
    out.push(packet.mode_tag());
    out.extend_from_slice(&packet.seq.to_le_bytes());
    match &packet.payload {
        CommandPayload::OnboardPd { q_ref, dq_ref } => {
            put_f32s(&mut out, (0..JOINT_COUNT).flat_map(|j| [q_ref[j], dq_ref[j]]));
        }
        CommandPayload::Torque { tau } => put_f32s(&mut out, tau.iter().copied()),
    }
    seal(out)
}

pub fn decode_command(bytes: &[u8]) -> Result<CommandPacket, PacketError> {
    let tag = *bytes.first().ok_or(PacketError::Empty)?;
    let expected = match tag {
        MODE_ONBOARD_PD => PD_PACKET_LEN,
        MODE_TORQUE => TORQUE_PACKET_LEN,
        other => return Err(PacketError::UnknownMode(other)),
    };
    check_frame(bytes, expected)?;
    let seq = read_u32(bytes, 1);
    let payload = if tag == MODE_ONBOARD_PD {
        CommandPayload::OnboardPd {
            q_ref: std::array::from_fn(|j| read_f32(bytes, 5 + 8 * j)),
            dq_ref: std::array::from_fn(|j| read_f32(bytes, 9 + 8 * j)),
        }
    } else {
        CommandPayload::Torque { tau: std::array::from_fn(|j| read_f32(bytes, 5 + 4 * j)) }
    };
    Ok(CommandPacket { seq, payload })
}

pub fn encode_sensor(packet: &SensorPacket) -> Vec<u8> {
    let mut out = Vec::with_capacity(SENSOR_PACKET_LEN);
    out.extend_from_slice(&packet.seq.to_le_bytes());
    put_f32s(&mut out, (0..JOINT_COUNT).flat_map(|j| [packet.q[j], packet.dq[j]]));
    put_f32s(&mut out, packet.imu_rates);
    seal(out)
}

pub fn decode_sensor(bytes: &[u8]) -> Result<SensorPacket, PacketError> {
    if bytes.is_empty() {
        return Err(PacketError::Empty);
    }
    check_frame(bytes, SENSOR_PACKET_LEN)?;
    Ok(SensorPacket {
        seq: read_u32(bytes, 0),
        q: std::array::from_fn(|j| read_f32(bytes, 4 + 8 * j)),
        dq: std::array::from_fn(|j| read_f32(bytes, 8 + 8 * j)),
        imu_rates: std::array::from_fn(|i| read_f32(bytes, 4 + 8 * JOINT_COUNT + 4 * i)),
    })
}

/// Rejects frames whose sequence number does not strictly increase.
#[derive(Debug, Clone, Default)]
pub struct SequenceGuard {
    last: Option<u32>,
}

impl SequenceGuard {
    pub fn accept(&mut self, seq: u32) -> Result<(), PacketError> {
        if let Some(last) = self.last {
            if seq <= last {
                return Err(PacketError::Sequence { last, got: seq });
            }
        }
        self.last = Some(seq);
        Ok(())
    }
}
