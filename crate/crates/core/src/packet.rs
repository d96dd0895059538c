//! Simulated user-plane packet records.

use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::slice::SliceId;

macro_rules! token {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:016x}", self.0)
            }
        }
    };
}

token!(
    /// Opaque network address.
    Addr
);
token!(
    /// Opaque subscriber identity.
    Imsi
);
token!(
    /// Opaque link-layer identity.
    Mac
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Tcp,
    Udp,
}

impl Protocol {
    pub const fn number(self) -> u8 {
        match self {
            Protocol::Tcp => 6,
            Protocol::Udp => 17,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            6 => Some(Protocol::Tcp),
            17 => Some(Protocol::Udp),
            _ => None,
        }
    }
}

/// Ground-truth provenance of a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Spoofed,
    Replayed,
}

impl Label {
    pub const fn as_str(self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Spoofed => "spoofed",
            Label::Replayed => "replayed",
        }
    }

    pub fn is_attack(self) -> bool {
        self != Label::Benign
    }
}

/// Class of a flow window: the detection target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowLabel {
    Benign,
    Spoofed,
}

impl WindowLabel {
    pub const fn as_str(self) -> &'static str {
        match self {
            WindowLabel::Benign => "benign",
            WindowLabel::Spoofed => "spoofed",
        }
    }

    pub fn is_spoofed(self) -> bool {
        self == WindowLabel::Spoofed
    }

    pub fn from_bool(spoofed: bool) -> Self {
        if spoofed {
            WindowLabel::Spoofed
        } else {
            WindowLabel::Benign
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    /// Microseconds since the scenario epoch.
    pub ts_us: u64,
    pub src_addr: Addr,
    pub dst_addr: Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: Protocol,
    pub size_bytes: u32,
    pub imsi: Imsi,
    pub mac: Mac,
    pub slice: SliceId,
    pub label: Label,
    pub attack_event_id: Option<u32>,
}

/// Checks that timestamps never decrease.
pub fn check_time_ordered(packets: &[PacketRecord]) -> Result<()> {
    match packets.windows(2).position(|w| w[1].ts_us < w[0].ts_us) {
        Some(i) => Err(Error::Unordered { index: i + 1 }),
        None => Ok(()),
    }
}

/// Dotted-quad style address token used for the simulated subnets.
pub const fn ipv4(a: u8, b: u8, c: u8, d: u8) -> Addr {
    Addr(((a as u64) << 24) | ((b as u64) << 16) | ((c as u64) << 8) | d as u64)
}
