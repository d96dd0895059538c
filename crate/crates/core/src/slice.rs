//! Slice profiles: identity, QoS targets and workload shape of each service
//! class.

use alloc::string::{String, ToString};
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceId {
    Embb,
    Urllc,
    Mmtc,
}

impl SliceId {
    pub const ALL: [SliceId; 3] = [SliceId::Embb, SliceId::Urllc, SliceId::Mmtc];

    /// Slice/service type code carried in the S-NSSAI.
    pub const fn sst(self) -> u8 {
        match self {
            SliceId::Embb => 1,
            SliceId::Urllc => 2,
            SliceId::Mmtc => 3,
        }
    }

    pub fn from_sst(sst: u8) -> Result<Self> {
        match sst {
            1 => Ok(SliceId::Embb),
            2 => Ok(SliceId::Urllc),
            3 => Ok(SliceId::Mmtc),
            other => Err(Error::UnknownSst(other)),
        }
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            SliceId::Embb => "embb",
            SliceId::Urllc => "urllc",
            SliceId::Mmtc => "mmtc",
        }
    }

    pub const fn index(self) -> usize {
        self.sst() as usize - 1
    }
}

impl fmt::Display for SliceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SliceId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "embb" => Ok(SliceId::Embb),
            "urllc" => Ok(SliceId::Urllc),
            "mmtc" => Ok(SliceId::Mmtc),
            _ => Err(Error::InvalidConfig(alloc::format!("unknown slice `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    TcpLike,
    MqttLike,
    UdpLike,
}

/// Workload envelope of one service class. Ranges are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkloadSpec {
    /// Bulk TCP transfers.
    Bulk {
        session_bytes: (u64, u64),
        session_secs: (f64, f64),
    },
    /// Publish/subscribe control messages at a steady rate.
    Messaging {
        rate_per_sec: (u32, u32),
        payload_bytes: u32,
    },
    /// Periodic small telemetry bursts.
    Telemetry {
        burst_packets: (u32, u32),
        period_secs: (f64, f64),
    },
}

impl WorkloadSpec {
    pub fn transport(&self) -> Transport {
        match self {
            WorkloadSpec::Bulk { .. } => Transport::TcpLike,
            WorkloadSpec::Messaging { .. } => Transport::MqttLike,
            WorkloadSpec::Telemetry { .. } => Transport::UdpLike,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceProfile {
    pub slice: SliceId,
    pub snssai_sst: u8,
    pub qos_delay_target_ms: u32,
    pub bandwidth_cap_bps: u64,
    pub subnet_tag: String,
    pub workload: WorkloadSpec,
}

impl SliceProfile {
    pub fn default_for(slice: SliceId) -> Self {
        let (delay, cap, subnet, workload) = match slice {
            SliceId::Embb => (
                20,
                100_000_000,
                "10.1.0.0/16",
                WorkloadSpec::Bulk {
                    session_bytes: (5_000_000, 200_000_000),
                    session_secs: (30.0, 60.0),
                },
            ),
            SliceId::Urllc => (
                5,
                10_000_000,
                "10.2.0.0/16",
                WorkloadSpec::Messaging {
                    rate_per_sec: (50, 200),
                    payload_bytes: 64,
                },
            ),
            SliceId::Mmtc => (
                50,
                1_000_000,
                "10.3.0.0/16",
                WorkloadSpec::Telemetry {
                    burst_packets: (3, 5),
                    period_secs: (30.0, 120.0),
                },
            ),
        };
        SliceProfile {
            slice,
            snssai_sst: slice.sst(),
            qos_delay_target_ms: delay,
            bandwidth_cap_bps: cap,
            subnet_tag: subnet.to_string(),
            workload,
        }
    }
}

/// The three slice profiles of the testbed configuration, in eMBB, URLLC,
/// mMTC order.
pub fn build_default_profiles() -> [SliceProfile; 3] {
    SliceId::ALL.map(SliceProfile::default_for)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_profiles_match_slice_table() {
        let [embb, urllc, mmtc] = build_default_profiles();
        assert_eq!(
            (embb.slice, embb.qos_delay_target_ms, embb.bandwidth_cap_bps),
            (SliceId::Embb, 20, 100_000_000)
        );
        assert_eq!(
            (
                urllc.slice,
                urllc.qos_delay_target_ms,
                urllc.bandwidth_cap_bps
            ),
            (SliceId::Urllc, 5, 10_000_000)
        );
        assert_eq!(
            (mmtc.slice, mmtc.qos_delay_target_ms, mmtc.bandwidth_cap_bps),
            (SliceId::Mmtc, 50, 1_000_000)
        );
        assert_eq!(
            [embb.snssai_sst, urllc.snssai_sst, mmtc.snssai_sst],
            [1, 2, 3]
        );
        assert_eq!(embb.workload.transport(), Transport::TcpLike);
        assert_eq!(urllc.workload.transport(), Transport::MqttLike);
        assert_eq!(mmtc.workload.transport(), Transport::UdpLike);
    }

    #[test]
    fn sst_round_trip() {
        for s in SliceId::ALL {
            assert_eq!(SliceId::from_sst(s.sst()).unwrap(), s);
            assert_eq!(s.as_str().parse::<SliceId>().unwrap(), s);
        }
        assert_eq!(SliceId::from_sst(9), Err(Error::UnknownSst(9)));
    }
}
