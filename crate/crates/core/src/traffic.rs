//! Benign per-slice traffic generation.
//!
//! Each slice is driven by a pool of simulated UEs with stable identities.
//! Bulk (eMBB) sessions are admitted only while the aggregate nominal rate
//! stays under the slice cap and are mirrored with 1-in-N packet sampling;
//! messaging (URLLC) UEs alternate steady-rate episodes with idle gaps;
//! telemetry (mMTC) devices emit short fixed-spacing bursts. A FIFO shaper
//! then guarantees the per-slice cap over every 1 s sliding window.

use alloc::collections::{BinaryHeap, VecDeque};
use alloc::vec::Vec;
use core::cmp::Reverse;

use rand::Rng as _;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::packet::{ipv4, Addr, Imsi, Label, Mac, PacketRecord, Protocol};
use crate::rng::{derive, rng_for, Rng};
use crate::slice::{build_default_profiles, SliceId, SliceProfile, WorkloadSpec};

pub const US_PER_SEC: u64 = 1_000_000;

/// Per-packet header overhead added to messaging payloads.
pub const MESSAGING_HEADER_BYTES: u32 = 54;
/// Size range of bulk data packets.
pub const BULK_PACKET_BYTES: (u32, u32) = (1000, 1400);
pub const BULK_ACK_BYTES: u32 = 60;
/// Size range of telemetry packets.
pub const TELEMETRY_PACKET_BYTES: (u32, u32) = (80, 200);

/// Density and pacing knobs of the traffic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficParams {
    pub embb_ues: u32,
    pub urllc_ues: u32,
    pub mmtc_ues: u32,
    /// One in `embb_sampling` bulk packets is mirrored to the monitor.
    pub embb_sampling: u32,
    /// Idle time between consecutive sessions of one eMBB UE.
    pub embb_idle_secs: (f64, f64),
    /// Log-normal sigma of bulk inter-packet spacing.
    pub embb_iat_sigma: f64,
    /// Whole-second duration range of one URLLC message episode.
    pub urllc_episode_secs: (u32, u32),
    pub urllc_idle_secs: (f64, f64),
    /// Uniform per-message timing jitter as a fraction of the message interval
    /// (must stay below 0.25 to keep per-second counts exact).
    pub urllc_jitter: f64,
    /// Intra-burst spacing range of telemetry devices.
    pub mmtc_spacing_ms: (u32, u32),
    /// Optional clock skew applied to every timestamp, uniform in +/- this value.
    pub clock_jitter_us: u32,
}

impl Default for TrafficParams {
    fn default() -> Self {
        Self::paper_scale()
    }
}

impl TrafficParams {
    /// Density calibrated for 20-minute captures of roughly 98 000 packets.
    pub fn paper_scale() -> Self {
        TrafficParams {
            embb_ues: 20,
            urllc_ues: 10,
            mmtc_ues: 200,
            embb_sampling: 288,
            embb_idle_secs: (5.0, 30.0),
            embb_iat_sigma: 0.1 / 3.0,
            urllc_episode_secs: (2, 8),
            urllc_idle_secs: (150.0, 350.0),
            urllc_jitter: 0.02,
            mmtc_spacing_ms: (2, 20),
            clock_jitter_us: 0,
        }
    }

    /// Denser traffic for desk-scale captures that still yield thousands of
    /// flow windows per slice.
    pub fn desk_scale() -> Self {
        TrafficParams {
            embb_ues: 20,
            urllc_ues: 30,
            mmtc_ues: 600,
            embb_sampling: 32,
            embb_idle_secs: (5.0, 30.0),
            urllc_idle_secs: (4.0, 16.0),
            ..Self::paper_scale()
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.embb_sampling == 0 {
            return bad("embb_sampling must be >= 1");
        }
        if !(0.0..0.25).contains(&self.urllc_jitter) {
            return bad("urllc_jitter must be in [0, 0.25)");
        }
        if self.urllc_episode_secs.0 == 0 || self.urllc_episode_secs.0 > self.urllc_episode_secs.1 {
            return bad("urllc_episode_secs must be a non-empty range of whole seconds >= 1");
        }
        if self.mmtc_spacing_ms.0 == 0 || self.mmtc_spacing_ms.0 > self.mmtc_spacing_ms.1 {
            return bad("mmtc_spacing_ms must be a non-empty positive range");
        }
        if !(self.embb_iat_sigma >= 0.0) {
            return bad("embb_iat_sigma must be >= 0");
        }
        for (lo, hi) in [self.embb_idle_secs, self.urllc_idle_secs] {
            if !(lo >= 0.0 && lo <= hi) {
                return bad("idle ranges must be non-negative and ordered");
            }
        }
        Ok(())
    }
}

/// Everything needed to regenerate one benign capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub duration_s: f64,
    pub seed: u64,
    #[serde(default)]
    pub params: TrafficParams,
    #[serde(default = "default_profiles_vec")]
    pub profiles: Vec<SliceProfile>,
}

fn default_profiles_vec() -> Vec<SliceProfile> {
    build_default_profiles().to_vec()
}

impl ScenarioConfig {
    pub fn paper_scale(seed: u64) -> Self {
        ScenarioConfig {
            duration_s: 1200.0,
            seed,
            params: TrafficParams::paper_scale(),
            profiles: default_profiles_vec(),
        }
    }

    pub fn desk_scale(seed: u64) -> Self {
        ScenarioConfig {
            duration_s: 600.0,
            seed,
            params: TrafficParams::desk_scale(),
            profiles: default_profiles_vec(),
        }
    }

    pub fn generate(&self) -> Result<Vec<PacketRecord>> {
        generate_scenario(&self.profiles, &self.params, self.duration_s, self.seed)
    }
}

/// A simulated UE with stable identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ue {
    pub index: u32,
    pub imsi: Imsi,
    pub mac: Mac,
    pub addr: Addr,
}

/// Deterministic identity of UE `index` in `slice`.
pub fn ue_identity(slice: SliceId, index: u32) -> Ue {
    let sst = slice.sst() as u64;
    let host = index + 1;
    Ue {
        index,
        imsi: Imsi(1_010_000_000_000 + sst * 100_000_000 + index as u64),
        mac: Mac(0x0200_0000_0000 | (sst << 32) | index as u64),
        addr: ipv4(10, sst as u8, (host >> 8) as u8, (host & 0xff) as u8),
    }
}

pub fn ue_pool(slice: SliceId, params: &TrafficParams) -> Vec<Ue> {
    let n = match slice {
        SliceId::Embb => params.embb_ues,
        SliceId::Urllc => params.urllc_ues,
        SliceId::Mmtc => params.mmtc_ues,
    };
    (0..n).map(|i| ue_identity(slice, i)).collect()
}

/// Server endpoint (address, port) that UEs of `slice` talk to.
pub fn server_endpoint(slice: SliceId) -> (Addr, u16) {
    match slice {
        SliceId::Embb => (ipv4(10, 0, 1, 1), 5201),
        SliceId::Urllc => (ipv4(10, 0, 2, 1), 1883),
        SliceId::Mmtc => (ipv4(10, 0, 3, 1), 5683),
    }
}

fn secs_to_us(s: f64) -> u64 {
    if s <= 0.0 {
        0
    } else {
        math::round(s * US_PER_SEC as f64) as u64
    }
}

fn uniform(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn check_duration(duration_s: f64) -> Result<u64> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::NonPositiveDuration(duration_s));
    }
    Ok(secs_to_us(duration_s))
}

/// Generates the benign packet stream of one slice.
pub fn generate_benign_stream(
    profile: &SliceProfile,
    params: &TrafficParams,
    duration_s: f64,
    seed: u64,
) -> Result<Vec<PacketRecord>> {
    let horizon = check_duration(duration_s)?;
    params.validate()?;
    let slice_seed = derive(seed, profile.snssai_sst as u64);
    let mut packets = match &profile.workload {
        WorkloadSpec::Bulk {
            session_bytes,
            session_secs,
        } => bulk_stream(
            profile,
            params,
            *session_bytes,
            *session_secs,
            horizon,
            slice_seed,
        ),
        WorkloadSpec::Messaging {
            rate_per_sec,
            payload_bytes,
        } => messaging_stream(
            profile,
            params,
            *rate_per_sec,
            *payload_bytes,
            horizon,
            slice_seed,
        ),
        WorkloadSpec::Telemetry {
            burst_packets,
            period_secs,
        } => telemetry_stream(
            profile,
            params,
            *burst_packets,
            *period_secs,
            horizon,
            slice_seed,
        ),
    };
    if params.clock_jitter_us > 0 {
        let mut rng = rng_for(slice_seed, 0xC10C);
        let j = params.clock_jitter_us as i64;
        for p in packets.iter_mut() {
            let d = rng.random_range(-j..=j);
            p.ts_us = (p.ts_us as i64 + d).max(0) as u64;
        }
    }
    packets.sort_by_key(|p| p.ts_us);
    shape_to_cap(&mut packets, profile.bandwidth_cap_bps);
    Ok(packets)
}

/// Generates every slice and merges them into one time-ordered stream.
pub fn generate_scenario(
    profiles: &[SliceProfile],
    params: &TrafficParams,
    duration_s: f64,
    seed: u64,
) -> Result<Vec<PacketRecord>> {
    if profiles.is_empty() {
        return Err(Error::NoProfiles);
    }
    let mut all = Vec::new();
    for p in profiles {
        all.extend(generate_benign_stream(p, params, duration_s, seed)?);
    }
    all.sort_by_key(|p| p.ts_us);
    Ok(all)
}

#[allow(clippy::too_many_arguments)]
fn packet(
    ts_us: u64,
    slice: SliceId,
    ue: &Ue,
    src: (Addr, u16),
    dst: (Addr, u16),
    protocol: Protocol,
    size_bytes: u32,
) -> PacketRecord {
    PacketRecord {
        ts_us,
        src_addr: src.0,
        dst_addr: dst.0,
        src_port: src.1,
        dst_port: dst.1,
        protocol,
        size_bytes,
        imsi: ue.imsi,
        mac: ue.mac,
        slice,
        label: Label::Benign,
        attack_event_id: None,
    }
}

fn bulk_stream(
    profile: &SliceProfile,
    params: &TrafficParams,
    session_bytes: (u64, u64),
    session_secs: (f64, f64),
    horizon: u64,
    seed: u64,
) -> Vec<PacketRecord> {
    let slice = profile.slice;
    let ues = ue_pool(slice, params);
    let server = server_endpoint(slice);
    let cap = profile.bandwidth_cap_bps as f64;
    let jitter = LogNormal::new(0.0, params.embb_iat_sigma.max(1e-12)).expect("valid sigma");
    let mut rngs: Vec<Rng> = ues.iter().map(|u| rng_for(seed, u.index as u64)).collect();
    let mut session_no = alloc::vec![0u32; ues.len()];

    let mut pending = BinaryHeap::new();
    for (i, rng) in rngs.iter_mut().enumerate() {
        let start = secs_to_us(uniform(rng, (0.0, params.embb_idle_secs.1)));
        pending.push(Reverse((start, i)));
    }
    // (end_us, nominal rate) of admitted sessions.
    let mut active: Vec<(u64, f64)> = Vec::new();
    let (log_lo, log_hi) = (
        math::ln(session_bytes.0 as f64),
        math::ln(session_bytes.1 as f64),
    );
    let mut out = Vec::new();

    while let Some(Reverse((t, i))) = pending.pop() {
        if t >= horizon {
            continue;
        }
        let rng = &mut rngs[i];
        let bytes = math::exp(uniform(rng, (log_lo, log_hi)));
        let secs = uniform(rng, session_secs);
        let rate = bytes * 8.0 / secs;
        active.retain(|&(end, _)| end > t);
        let load: f64 = active.iter().map(|&(_, r)| r).sum();
        if load + rate > cap {
            let retry = active
                .iter()
                .map(|&(end, _)| end)
                .min()
                .unwrap_or(t + US_PER_SEC);
            pending.push(Reverse((retry.max(t + 1), i)));
            continue;
        }
        let end = t + secs_to_us(secs);
        active.push((end, rate));

        let ue = &ues[i];
        let port = 32768 + (session_no[i] % 28000) as u16;
        session_no[i] += 1;
        let client = (ue.addr, port);
        let rtt = rng.random_range(2_000..=12_000u64);
        let mean_size = (BULK_PACKET_BYTES.0 + BULK_PACKET_BYTES.1) as f64 / 2.0;
        let base_gap_s = params.embb_sampling as f64 * mean_size * 8.0 / rate;
        let mut ts = t + secs_to_us(uniform(rng, (0.0, base_gap_s)));
        let mut k = 0u64;
        while ts < end.min(horizon) {
            let size = rng.random_range(BULK_PACKET_BYTES.0..=BULK_PACKET_BYTES.1);
            out.push(packet(ts, slice, ue, client, server, Protocol::Tcp, size));
            k += 1;
            if k % 2 == 0 && ts + rtt < horizon {
                out.push(packet(
                    ts + rtt,
                    slice,
                    ue,
                    server,
                    client,
                    Protocol::Tcp,
                    BULK_ACK_BYTES,
                ));
            }
            ts += secs_to_us(base_gap_s * jitter.sample(rng)).max(1);
        }
        let idle = secs_to_us(uniform(rng, params.embb_idle_secs));
        pending.push(Reverse((end + idle, i)));
    }
    out
}

fn messaging_stream(
    profile: &SliceProfile,
    params: &TrafficParams,
    rate_per_sec: (u32, u32),
    payload_bytes: u32,
    horizon: u64,
    seed: u64,
) -> Vec<PacketRecord> {
    let slice = profile.slice;
    let broker = server_endpoint(slice);
    let size = payload_bytes + MESSAGING_HEADER_BYTES;
    let mut out = Vec::new();
    for ue in ue_pool(slice, params) {
        let mut rng = rng_for(seed, ue.index as u64);
        let client = (ue.addr, 49152 + (ue.index % 16000) as u16);
        let mut t = secs_to_us(uniform(&mut rng, (0.0, params.urllc_idle_secs.1)));
        while t < horizon {
            let secs = rng.random_range(params.urllc_episode_secs.0..=params.urllc_episode_secs.1);
            let rate = rng.random_range(rate_per_sec.0..=rate_per_sec.1);
            let interval = 1.0 / rate as f64;
            for j in 0..secs * rate {
                let d = if params.urllc_jitter > 0.0 {
                    rng.random_range(-params.urllc_jitter..=params.urllc_jitter)
                } else {
                    0.0
                };
                let ts = t + secs_to_us((j as f64 + 0.5 + d) * interval);
                if ts >= horizon {
                    break;
                }
                out.push(packet(ts, slice, &ue, client, broker, Protocol::Tcp, size));
            }
            t += secs as u64 * US_PER_SEC + secs_to_us(uniform(&mut rng, params.urllc_idle_secs));
        }
    }
    out
}

fn telemetry_stream(
    profile: &SliceProfile,
    params: &TrafficParams,
    burst_packets: (u32, u32),
    period_secs: (f64, f64),
    horizon: u64,
    seed: u64,
) -> Vec<PacketRecord> {
    let slice = profile.slice;
    let collector = server_endpoint(slice);
    let mut out = Vec::new();
    for ue in ue_pool(slice, params) {
        let mut rng = rng_for(seed, ue.index as u64);
        let client = (ue.addr, 20000 + (ue.index % 40000) as u16);
        let spacing =
            rng.random_range(params.mmtc_spacing_ms.0..=params.mmtc_spacing_ms.1) as u64 * 1000;
        let mut t = secs_to_us(uniform(&mut rng, (0.0, period_secs.1)));
        loop {
            let n = rng.random_range(burst_packets.0..=burst_packets.1);
            if t + (n as u64 - 1) * spacing >= horizon {
                break;
            }
            for j in 0..n as u64 {
                let size = rng.random_range(TELEMETRY_PACKET_BYTES.0..=TELEMETRY_PACKET_BYTES.1);
                out.push(packet(
                    t + j * spacing,
                    slice,
                    &ue,
                    client,
                    collector,
                    Protocol::Udp,
                    size,
                ));
            }
            t += secs_to_us(uniform(&mut rng, period_secs));
        }
    }
    out
}

/// Delays packets (FIFO, order preserving) so that no 1 s window carries more
/// than `cap_bps` worth of bytes.
pub fn shape_to_cap(packets: &mut [PacketRecord], cap_bps: u64) {
    let budget = cap_bps / 8;
    let mut recent: VecDeque<(u64, u64)> = VecDeque::new();
    let mut in_window = 0u64;
    let mut last = 0u64;
    for p in packets.iter_mut() {
        let mut t = p.ts_us.max(last);
        let size = p.size_bytes as u64;
        loop {
            while let Some(&(ts, b)) = recent.front() {
                if ts + US_PER_SEC <= t {
                    recent.pop_front();
                    in_window -= b;
                } else {
                    break;
                }
            }
            if in_window + size <= budget || recent.is_empty() {
                break;
            }
            t = recent.front().map(|&(ts, _)| ts + US_PER_SEC).unwrap_or(t);
        }
        p.ts_us = t;
        last = t;
        recent.push_back((t, size));
        in_window += size;
    }
}

/// Largest byte total carried by `packets` (time-ordered) inside any window
/// of `window_us` microseconds.
pub fn max_bytes_in_window(packets: &[PacketRecord], window_us: u64) -> u64 {
    let mut best = 0;
    let mut sum = 0u64;
    let mut lo = 0;
    for hi in 0..packets.len() {
        sum += packets[hi].size_bytes as u64;
        while packets[hi].ts_us >= packets[lo].ts_us + window_us {
            sum -= packets[lo].size_bytes as u64;
            lo += 1;
        }
        best = best.max(sum);
    }
    best
}
