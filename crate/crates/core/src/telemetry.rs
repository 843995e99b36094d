//! Wire formats and transport modelling for the mocap -> controller ->
//! flight-controller pipeline.
//!
//! Packets use fixed little-endian 32-bit float layouts sized for a
//! microcontroller endpoint. The in-process [`Link`] applies rate, latency,
//! jitter, and drop behaviour with a seeded RNG so delivery traces are
//! reproducible; an optional UDP loopback transport carries the same bytes
//! over real sockets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("bad magic: expected {expected:?}, got {got:?}")]
    BadMagic { expected: [u8; 4], got: [u8; 4] },
    #[error("bad length: expected {expected} bytes, got {got}")]
    BadLength { expected: usize, got: usize },
}

pub const POSE_MAGIC: [u8; 4] = *b"AGP1";
pub const POSE_PACKET_LEN: usize = 32;
pub const COMMAND_MAGIC: [u8; 4] = *b"AGC1";
pub const COMMAND_PACKET_LEN: usize = 40;

/// 6-DoF pose sample: position plus unit quaternion (w, x, y, z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosePacket {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub qw: f32,
    pub qx: f32,
    pub qy: f32,
    pub qz: f32,
}

impl PosePacket {
    pub fn quaternion_norm(&self) -> f32 {
        (self.qw * self.qw + self.qx * self.qx + self.qy * self.qy + self.qz * self.qz).sqrt()
    }
}

/// Attitude targets plus the six thruster values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandPacket {
    pub roll: f32,
    pub pitch: f32,
    pub yaw: f32,
    pub thrusts: [f32; 6],
}

/// 32-byte layout: magic, then x y z qw qx qy qz as LE f32.
pub fn encode_pose(p: &PosePacket) -> [u8; POSE_PACKET_LEN] {
    let mut buf = [0u8; POSE_PACKET_LEN];
    buf[..4].copy_from_slice(&POSE_MAGIC);
    let fields = [p.x, p.y, p.z, p.qw, p.qx, p.qy, p.qz];
    for (i, f) in fields.iter().enumerate() {
        buf[4 + 4 * i..8 + 4 * i].copy_from_slice(&f.to_le_bytes());
    }
    buf
}

pub fn decode_pose(bytes: &[u8]) -> Result<PosePacket, CodecError> {
    if bytes.len() != POSE_PACKET_LEN {
        return Err(CodecError::BadLength {
            expected: POSE_PACKET_LEN,
            got: bytes.len(),
        });
    }
    if bytes[..4] != POSE_MAGIC {
        return Err(CodecError::BadMagic {
            expected: POSE_MAGIC,
            got: [bytes[0], bytes[1], bytes[2], bytes[3]],
        });
    }
    let f = |i: usize| f32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    Ok(PosePacket {
        x: f(0),
        y: f(1),
        z: f(2),
        qw: f(3),
        qx: f(4),
        qy: f(5),
        qz: f(6),
    })
}

/// 40-byte layout: magic, then roll pitch yaw f1..f6 as LE f32.
pub fn encode_command(c: &CommandPacket) -> [u8; COMMAND_PACKET_LEN] {
    let mut buf = [0u8; COMMAND_PACKET_LEN];
    buf[..4].copy_from_slice(&COMMAND_MAGIC);
    let mut fields = [0.0f32; 9];
    fields[0] = c.roll;
    fields[1] = c.pitch;
    fields[2] = c.yaw;
    fields[3..].copy_from_slice(&c.thrusts);
    for (i, f) in fields.iter().enumerate() {
        buf[4 + 4 * i..8 + 4 * i].copy_from_slice(&f.to_le_bytes());
    }
    buf
}

pub fn decode_command(bytes: &[u8]) -> Result<CommandPacket, CodecError> {
    if bytes.len() != COMMAND_PACKET_LEN {
        return Err(CodecError::BadLength {
            expected: COMMAND_PACKET_LEN,
            got: bytes.len(),
        });
    }
    if bytes[..4] != COMMAND_MAGIC {
        return Err(CodecError::BadMagic {
            expected: COMMAND_MAGIC,
            got: [bytes[0], bytes[1], bytes[2], bytes[3]],
        });
    }
    let f = |i: usize| f32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    Ok(CommandPacket {
        roll: f(0),
        pitch: f(1),
        yaw: f(2),
        thrusts: [f(3), f(4), f(5), f(6), f(7), f(8)],
    })
}

/// Stream characteristics of one hop.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinkModel {
    pub rate_hz: u32,
    /// Nominal one-way delay, s.
    pub latency: f64,
    /// Uniform +/- jitter on the delay, s.
    pub jitter: f64,
    /// Independent per-packet drop probability in [0, 1).
    pub drop_probability: f64,
}

impl LinkModel {
    /// Mocap stream defaults: 240 Hz, 2.8 ms pipeline delay.
    pub fn pose_default() -> Self {
        Self {
            rate_hz: 240,
            latency: 2.8e-3,
            jitter: 0.0,
            drop_probability: 0.0,
        }
    }

    /// Command stream defaults: 200 Hz over local wireless.
    pub fn command_default() -> Self {
        Self {
            rate_hz: 200,
            latency: 1.0e-3,
            jitter: 0.0,
            drop_probability: 0.0,
        }
    }
}

/// In-process transport applying a [`LinkModel`] to queued packets.
///
/// Delivery order among surviving packets matches send order; a packet is
/// never delivered earlier than `send + latency - jitter`.
#[derive(Debug, Clone)]
pub struct Link<T> {
    model: LinkModel,
    rng: ChaCha8Rng,
    queue: VecDeque<(f64, T)>,
    last_delivery: f64,
}

impl<T> Link<T> {
    pub fn new(model: LinkModel, seed: u64) -> Self {
        Self {
            model,
            rng: ChaCha8Rng::seed_from_u64(seed),
            queue: VecDeque::new(),
            last_delivery: f64::NEG_INFINITY,
        }
    }

    pub fn model(&self) -> &LinkModel {
        &self.model
    }

    /// Queue a packet sent at time `now`.
    pub fn send(&mut self, packet: T, now: f64) {
        if self.model.drop_probability > 0.0
            && self.rng.gen::<f64>() < self.model.drop_probability
        {
            return;
        }
        let jitter = if self.model.jitter > 0.0 {
            self.rng.gen_range(-self.model.jitter..=self.model.jitter)
        } else {
            0.0
        };
        let mut deliver_at = now + self.model.latency + jitter;
        // FIFO among survivors.
        if deliver_at < self.last_delivery {
            deliver_at = self.last_delivery;
        }
        self.last_delivery = deliver_at;
        self.queue.push_back((deliver_at, packet));
    }

    /// Pop every packet whose delivery time has passed.
    pub fn poll(&mut self, now: f64) -> Vec<T> {
        let mut out = Vec::new();
        while let Some((t, _)) = self.queue.front() {
            if *t <= now {
                out.push(self.queue.pop_front().unwrap().1);
            } else {
                break;
            }
        }
        out
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }
}

/// 16-bit PWM quantization of a thrust command at the actuator stage.
pub fn pwm_quantize(f: f64, f_max: f64) -> f64 {
    let level = (f.clamp(0.0, f_max) / f_max * 65535.0).round();
    level * f_max / 65535.0
}

/// UDP loopback endpoints speaking the same wire formats.
pub mod udp {
    use super::*;
    use std::io;
    use std::net::{SocketAddr, UdpSocket};

    /// Default pose stream port (conventional mocap streaming port).
    pub const DEFAULT_POSE_PORT: u16 = 3883;

    /// One UDP endpoint bound to a local address.
    pub struct Endpoint {
        socket: UdpSocket,
    }

    impl Endpoint {
        pub fn bind(addr: SocketAddr) -> io::Result<Self> {
            let socket = UdpSocket::bind(addr)?;
            socket.set_nonblocking(true)?;
            Ok(Self { socket })
        }

        pub fn local_addr(&self) -> io::Result<SocketAddr> {
            self.socket.local_addr()
        }

        pub fn send_pose(&self, p: &PosePacket, to: SocketAddr) -> io::Result<()> {
            self.socket.send_to(&encode_pose(p), to).map(|_| ())
        }

        pub fn send_command(&self, c: &CommandPacket, to: SocketAddr) -> io::Result<()> {
            self.socket.send_to(&encode_command(c), to).map(|_| ())
        }

        /// Non-blocking receive of one pose packet, if any arrived.
        pub fn recv_pose(&self) -> io::Result<Option<PosePacket>> {
            let mut buf = [0u8; 64];
            match self.socket.recv_from(&mut buf) {
                Ok((n, _)) => Ok(decode_pose(&buf[..n]).ok()),
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => Ok(None),
                Err(e) => Err(e),
            }
        }

        pub fn recv_command(&self) -> io::Result<Option<CommandPacket>> {
            let mut buf = [0u8; 64];
            match self.socket.recv_from(&mut buf) {
                Ok((n, _)) => Ok(decode_command(&buf[..n]).ok()),
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => Ok(None),
                Err(e) => Err(e),
            }
        }
    }
}
