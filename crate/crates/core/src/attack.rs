//! Identity-spoofing and replay injection.
//!
//! The attack unit is the flow (five-tuple). For every target slice a fixed
//! share of its flows is selected; each selected flow then receives either
//! forged-identity packets interleaved with its genuine traffic or a
//! time-shifted, re-timed replay of its own captured packets. Attack packets are
//! grouped into events (maximal runs with gaps below [`EVENT_SPLIT_GAP_US`]),
//! which is what the attacker log records.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowKey;
use crate::math;
use crate::packet::{check_time_ordered, Addr, Imsi, Label, Mac, PacketRecord};
use crate::rng::{derive, rng_for, Rng};
use crate::slice::SliceId;
use crate::traffic::{ue_identity, US_PER_SEC};

/// Attack packets further apart than this start a new logged event.
pub const EVENT_SPLIT_GAP_US: u64 = 100_000;

/// Attacker node identity before any forging.
pub const ATTACKER_IMSI: Imsi = Imsi(999_990_000_000_001);
pub const ATTACKER_MAC: Mac = Mac(0x0666_0000_0001);
pub const ATTACKER_ADDR: Addr = Addr(0xC0A8_6401);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackStrategy {
    IdentityImpersonation,
    Replay,
}

impl AttackStrategy {
    pub const fn as_str(self) -> &'static str {
        match self {
            AttackStrategy::IdentityImpersonation => "identity_impersonation",
            AttackStrategy::Replay => "replay",
        }
    }
}

/// Subset of {imsi, ip, mac}.
/// Serialized as its text form, e.g. `"imsi|mac"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FieldSet(u8);

impl FieldSet {
    pub const IMSI: FieldSet = FieldSet(1);
    pub const IP: FieldSet = FieldSet(2);
    pub const MAC: FieldSet = FieldSet(4);
    pub const EMPTY: FieldSet = FieldSet(0);
    pub const ALL: FieldSet = FieldSet(7);

    pub const fn union(self, other: FieldSet) -> FieldSet {
        FieldSet(self.0 | other.0)
    }

    pub const fn contains(self, other: FieldSet) -> bool {
        self.0 & other.0 == other.0
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub fn from_bits(bits: u8) -> Option<FieldSet> {
        (bits <= 7).then_some(FieldSet(bits))
    }

    /// Parses `imsi|ip|mac` style lists; the empty string is the empty set.
    pub fn parse(s: &str) -> Option<FieldSet> {
        let mut set = FieldSet::EMPTY;
        for part in s.split('|').filter(|p| !p.is_empty()) {
            set = set.union(match part {
                "imsi" => FieldSet::IMSI,
                "ip" => FieldSet::IP,
                "mac" => FieldSet::MAC,
                _ => return None,
            });
        }
        Some(set)
    }
}

impl fmt::Display for FieldSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (flag, name) in [
            (FieldSet::IMSI, "imsi"),
            (FieldSet::IP, "ip"),
            (FieldSet::MAC, "mac"),
        ] {
            if self.contains(flag) {
                if !first {
                    f.write_str("|")?;
                }
                f.write_str(name)?;
                first = false;
            }
        }
        Ok(())
    }
}

/// Where forged identifiers come from.
impl Serialize for FieldSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FieldSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = FieldSet;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("identifier fields joined by `|`")
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> core::result::Result<FieldSet, E> {
                FieldSet::parse(v).ok_or_else(|| E::custom(alloc::format!("bad field set `{v}`")))
            }
        }
        d.deserialize_str(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgeSource {
    /// Fresh tokens that belong to no legitimate UE.
    #[default]
    OutsidePool,
    /// Tokens of other legitimate UEs of the same slice.
    CollidingWithPool,
}

/// When an attacked flow starts receiving attack traffic.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Onset {
    /// From the first packet of the flow.
    #[default]
    FlowStart,
    /// From an absolute scenario time (microseconds).
    At(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub strategy: AttackStrategy,
    /// Fraction of each target slice's flows that are attacked.
    pub intensity: f64,
    pub target_slices: Vec<SliceId>,
    pub seed: u64,
    #[serde(default = "default_fields")]
    pub forged_fields: FieldSet,
    #[serde(default)]
    pub forge_source: ForgeSource,
    /// Per-packet probability that an impersonating flow rotates its forged tokens.
    #[serde(default = "default_churn")]
    pub churn: f64,
    /// Per genuine packet, probability range of an injected burst (drawn per flow).
    #[serde(default = "default_inject_prob")]
    pub inject_prob: (f64, f64),
    /// Packets per injected burst.
    #[serde(default = "default_burst_len")]
    pub burst_len: (u32, u32),
    /// Replay start offset relative to the captured segment, seconds.
    #[serde(default = "default_replay_offset")]
    pub replay_offset_s: (f64, f64),
    /// Replay per-packet jitter as a fraction of the original inter-arrival.
    #[serde(default = "default_replay_jitter")]
    pub replay_jitter: f64,
    /// Length of the replayed capture, seconds; the rest of the flow when unset.
    #[serde(default)]
    pub replay_capture_s: Option<f64>,
    #[serde(default)]
    pub onset: Onset,
}

fn default_fields() -> FieldSet {
    FieldSet::ALL
}
fn default_churn() -> f64 {
    0.3
}
fn default_inject_prob() -> (f64, f64) {
    (0.05, 0.25)
}
fn default_burst_len() -> (u32, u32) {
    (2, 6)
}
fn default_replay_offset() -> (f64, f64) {
    (5.0, 60.0)
}
fn default_replay_jitter() -> f64 {
    0.2
}

impl AttackConfig {
    pub fn new(strategy: AttackStrategy, intensity: f64, seed: u64) -> Self {
        AttackConfig {
            strategy,
            intensity,
            target_slices: SliceId::ALL.to_vec(),
            seed,
            forged_fields: default_fields(),
            forge_source: ForgeSource::default(),
            churn: default_churn(),
            inject_prob: default_inject_prob(),
            burst_len: default_burst_len(),
            replay_offset_s: default_replay_offset(),
            replay_jitter: default_replay_jitter(),
            replay_capture_s: None,
            onset: Onset::default(),
        }
    }

    /// Intensity presets used by the experiments.
    pub const PRESETS: [f64; 3] = [0.10, 0.20, 0.40];

    fn validate(&self) -> Result<()> {
        if !(self.intensity > 0.0 && self.intensity <= 1.0) {
            return Err(Error::InvalidIntensity(self.intensity));
        }
        if self.strategy == AttackStrategy::IdentityImpersonation && self.forged_fields.is_empty() {
            return Err(Error::EmptyFieldSet);
        }
        if !(0.0..=1.0).contains(&self.churn) {
            return Err(Error::InvalidConfig("churn must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// One logged attacker action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackEvent {
    pub event_id: u32,
    pub ts_start_us: u64,
    pub ts_end_us: u64,
    pub strategy: AttackStrategy,
    pub forged_fields: FieldSet,
    /// Five-tuple carried by the attack packets (the victim flow).
    pub flow_key: FlowKey,
    pub slice: SliceId,
}

/// Source of forged identifiers for one impersonating flow.
#[derive(Debug, Clone)]
pub struct IdPool {
    slice: SliceId,
    source: ForgeSource,
    legit_size: u32,
    exclude_index: Option<u32>,
    /// Address written when `ip` is forged; drawn when `None`.
    pub impersonate_addr: Option<Addr>,
}

impl IdPool {
    pub fn new(slice: SliceId, source: ForgeSource, legit_size: u32) -> Self {
        IdPool {
            slice,
            source,
            legit_size,
            exclude_index: None,
            impersonate_addr: None,
        }
    }

    /// Never hand out the identity of legitimate UE `index` when colliding.
    pub fn excluding(mut self, index: Option<u32>) -> Self {
        self.exclude_index = index;
        self
    }

    pub fn impersonating(mut self, addr: Addr) -> Self {
        self.impersonate_addr = Some(addr);
        self
    }

    fn draw(&self, rng: &mut Rng) -> (Imsi, Mac, Addr) {
        let colliding = self.source == ForgeSource::CollidingWithPool && self.legit_size > 1;
        if colliding {
            loop {
                let i = rng.random_range(0..self.legit_size);
                if Some(i) != self.exclude_index {
                    let ue = ue_identity(self.slice, i);
                    return (ue.imsi, ue.mac, ue.addr);
                }
            }
        }
        // Outside every legitimate range: high bit set on all tokens.
        let r: u64 = rng.random();
        (
            Imsi((1 << 63) | (r >> 8)),
            Mac((1 << 63) | (r & 0xFFFF_FFFF_FFFF)),
            Addr((1 << 63) | (r >> 16)),
        )
    }
}

/// Whether a token value can belong to a legitimate UE.
pub fn is_forged_token(v: u64) -> bool {
    v >> 63 == 1
}

/// Replaces the listed identifier fields of `packet` with forged values and
/// marks it spoofed. Nothing else changes.
pub fn forge_identity(
    packet: &PacketRecord,
    fields: FieldSet,
    pool: &IdPool,
    rng: &mut Rng,
) -> Result<PacketRecord> {
    if fields.is_empty() {
        return Err(Error::EmptyFieldSet);
    }
    let (imsi, mac, addr) = pool.draw(rng);
    let mut out = packet.clone();
    if fields.contains(FieldSet::IMSI) {
        out.imsi = imsi;
    }
    if fields.contains(FieldSet::MAC) {
        out.mac = mac;
    }
    if fields.contains(FieldSet::IP) {
        out.src_addr = pool.impersonate_addr.unwrap_or(addr);
    }
    out.label = Label::Spoofed;
    Ok(out)
}

/// Injects a single attack configuration.
pub fn inject(
    stream: &[PacketRecord],
    config: &AttackConfig,
) -> Result<(Vec<PacketRecord>, Vec<AttackEvent>)> {
    inject_all(stream, core::slice::from_ref(config))
}

/// Injects several configurations over disjoint flow selections: each config
/// takes `round(intensity * flows)` flows per target slice from the flows not
/// already taken by an earlier config.
pub fn inject_all(
    stream: &[PacketRecord],
    configs: &[AttackConfig],
) -> Result<(Vec<PacketRecord>, Vec<AttackEvent>)> {
    if stream.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_time_ordered(stream)?;
    for c in configs {
        c.validate()?;
    }
    let horizon = stream.last().map(|p| p.ts_us).unwrap_or(0);

    // Distinct flows per slice, with the indices of their packets.
    let mut flows: BTreeMap<(SliceId, FlowKey), Vec<usize>> = BTreeMap::new();
    for (i, p) in stream.iter().enumerate() {
        flows.entry((p.slice, FlowKey::of(p))).or_default().push(i);
    }
    let mut per_slice: BTreeMap<SliceId, Vec<FlowKey>> = BTreeMap::new();
    for (slice, key) in flows.keys() {
        per_slice.entry(*slice).or_default().push(*key);
    }
    let legit_sizes = legit_pool_sizes(stream);

    let mut taken: BTreeSet<(SliceId, FlowKey)> = BTreeSet::new();
    let mut attack_packets: Vec<PacketRecord> = Vec::new();
    let mut events: Vec<AttackEvent> = Vec::new();

    for (ci, cfg) in configs.iter().enumerate() {
        let mut targets: Vec<SliceId> = cfg.target_slices.clone();
        targets.sort();
        targets.dedup();
        for slice in targets {
            let Some(keys) = per_slice.get(&slice) else {
                continue;
            };
            let want = math::round(cfg.intensity * keys.len() as f64) as usize;
            let mut rng = rng_for(derive(cfg.seed, ci as u64), slice.sst() as u64);
            let mut candidates: Vec<FlowKey> = keys
                .iter()
                .filter(|k| !taken.contains(&(slice, **k)))
                .copied()
                .collect();
            candidates.shuffle(&mut rng);
            candidates.truncate(want);
            candidates.sort();
            for key in candidates {
                taken.insert((slice, key));
                let idx = &flows[&(slice, key)];
                let genuine: Vec<&PacketRecord> = idx.iter().map(|&i| &stream[i]).collect();
                let flow_seed = derive(rng.random(), 0xF10);
                let mut frng = rng_for(flow_seed, 0);
                let pkts = match cfg.strategy {
                    AttackStrategy::IdentityImpersonation => {
                        impersonate(&genuine, cfg, legit_sizes[slice.index()], &mut frng)
                    }
                    AttackStrategy::Replay => replay(&genuine, cfg, horizon, &mut frng),
                };
                let first_event = events.len() as u32;
                let tagged = group_into_events(pkts, cfg, slice, key, first_event, &mut events);
                attack_packets.extend(tagged);
            }
        }
    }

    attack_packets.sort_by_key(|p| (p.ts_us, p.attack_event_id));
    let merged = merge_ordered(stream, attack_packets);
    events.sort_by_key(|e| (e.ts_start_us, e.event_id));
    Ok((merged, events))
}

fn legit_pool_sizes(stream: &[PacketRecord]) -> [u32; 3] {
    let mut sets: [BTreeSet<Imsi>; 3] = Default::default();
    for p in stream.iter().filter(|p| p.label == Label::Benign) {
        sets[p.slice.index()].insert(p.imsi);
    }
    sets.map(|s| s.len() as u32)
}

fn onset_ok(cfg: &AttackConfig, ts: u64) -> bool {
    match cfg.onset {
        Onset::FlowStart => true,
        Onset::At(t0) => ts >= t0,
    }
}

/// Forged-identity bursts riding along the genuine packets of one flow.
fn impersonate(
    genuine: &[&PacketRecord],
    cfg: &AttackConfig,
    legit_size: u32,
    rng: &mut Rng,
) -> Vec<PacketRecord> {
    let victim = genuine[0];
    let key = FlowKey::of(victim);
    let legit_index = ue_index_of(victim.imsi);
    let pool = IdPool::new(victim.slice, cfg.forge_source, legit_size)
        .excluding(legit_index)
        .impersonating(key.src_addr);
    let q = uniform(rng, cfg.inject_prob);
    let mut identity = forge_identity(&attacker_base(victim), cfg.forged_fields, &pool, rng)
        .expect("validated field set");
    let eligible: Vec<&&PacketRecord> = genuine.iter().filter(|g| onset_ok(cfg, g.ts_us)).collect();
    // A selected flow always carries at least one burst.
    let forced = if eligible.is_empty() {
        0
    } else {
        rng.random_range(0..eligible.len())
    };
    let mut out = Vec::new();
    for (i, g) in eligible.iter().enumerate() {
        if i != forced && rng.random::<f64>() >= q {
            continue;
        }
        let n = rng.random_range(cfg.burst_len.0..=cfg.burst_len.1.max(cfg.burst_len.0));
        let mut ts = g.ts_us;
        for _ in 0..n {
            ts += rng.random_range(200..=2_000u64);
            if rng.random::<f64>() < cfg.churn {
                identity = forge_identity(&attacker_base(victim), cfg.forged_fields, &pool, rng)
                    .expect("validated");
            }
            let mut p = identity.clone();
            p.ts_us = ts;
            p.size_bytes = g.size_bytes;
            out.push(p);
        }
    }
    out
}

/// The attacker's own packet addressed like the victim's flow.
fn attacker_base(victim: &PacketRecord) -> PacketRecord {
    PacketRecord {
        src_addr: ATTACKER_ADDR,
        imsi: ATTACKER_IMSI,
        mac: ATTACKER_MAC,
        ..victim.clone()
    }
}

fn ue_index_of(imsi: Imsi) -> Option<u32> {
    let base = 1_010_000_000_000u64;
    (imsi.0 >= base && imsi.0 < base + 400_000_000).then(|| (imsi.0 % 100_000_000) as u32)
}

/// Time-shifted, jittered copy of the flow from its first packet after onset.
fn replay(
    genuine: &[&PacketRecord],
    cfg: &AttackConfig,
    horizon: u64,
    rng: &mut Rng,
) -> Vec<PacketRecord> {
    let Some(first) = genuine.iter().position(|p| onset_ok(cfg, p.ts_us)) else {
        return Vec::new();
    };
    let cap_start = genuine[first].ts_us;
    let cap_end = match cfg.replay_capture_s {
        Some(secs) => cap_start + (secs * US_PER_SEC as f64) as u64,
        None => u64::MAX,
    };
    let segment: Vec<&PacketRecord> = genuine[first..]
        .iter()
        .take_while(|p| p.ts_us <= cap_end)
        .copied()
        .collect();
    let offset = (uniform(rng, cfg.replay_offset_s) * US_PER_SEC as f64) as u64;
    let mut ts = cap_start + offset;
    let mut out = Vec::with_capacity(segment.len());
    for (i, p) in segment.iter().enumerate() {
        if i > 0 {
            let gap = (p.ts_us - segment[i - 1].ts_us) as f64;
            let j = if cfg.replay_jitter > 0.0 {
                rng.random_range(-cfg.replay_jitter..=cfg.replay_jitter)
            } else {
                0.0
            };
            ts += math::round(gap * (1.0 + j)) as u64;
        }
        if ts > horizon {
            break;
        }
        let mut copy = (*p).clone();
        copy.ts_us = ts;
        copy.label = Label::Replayed;
        out.push(copy);
    }
    out
}

fn uniform(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn group_into_events(
    mut pkts: Vec<PacketRecord>,
    cfg: &AttackConfig,
    slice: SliceId,
    key: FlowKey,
    mut next_id: u32,
    events: &mut Vec<AttackEvent>,
) -> Vec<PacketRecord> {
    pkts.sort_by_key(|p| p.ts_us);
    let fields = match cfg.strategy {
        AttackStrategy::IdentityImpersonation => cfg.forged_fields,
        AttackStrategy::Replay => FieldSet::EMPTY,
    };
    let mut current: Option<AttackEvent> = None;
    for p in pkts.iter_mut() {
        let extend = matches!(&current, Some(e) if p.ts_us <= e.ts_end_us + EVENT_SPLIT_GAP_US);
        if !extend {
            if let Some(e) = current.take() {
                events.push(e);
            }
            current = Some(AttackEvent {
                event_id: next_id,
                ts_start_us: p.ts_us,
                ts_end_us: p.ts_us,
                strategy: cfg.strategy,
                forged_fields: fields,
                flow_key: FlowKey::of(p),
                slice,
            });
            next_id += 1;
        }
        let e = current.as_mut().expect("event open");
        e.ts_end_us = p.ts_us;
        p.attack_event_id = Some(e.event_id);
    }
    if let Some(e) = current {
        events.push(e);
    }
    let _ = key;
    pkts
}

/// Merges two time-ordered streams; on equal timestamps `base` comes first.
fn merge_ordered(base: &[PacketRecord], extra: Vec<PacketRecord>) -> Vec<PacketRecord> {
    let mut out = Vec::with_capacity(base.len() + extra.len());
    let mut it = extra.into_iter().peekable();
    for p in base {
        while let Some(e) = it.next_if(|e| e.ts_us < p.ts_us) {
            out.push(e);
        }
        out.push(p.clone());
    }
    out.extend(it);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slice::build_default_profiles;
    use crate::traffic::{generate_scenario, TrafficParams};
    use alloc::collections::BTreeMap;
    use alloc::string::ToString;

    fn stream() -> Vec<PacketRecord> {
        generate_scenario(
            &build_default_profiles(),
            &TrafficParams::desk_scale(),
            60.0,
            11,
        )
        .unwrap()
    }

    fn benign_packet() -> PacketRecord {
        let ue = ue_identity(SliceId::Embb, 3);
        PacketRecord {
            ts_us: 1000,
            src_addr: ue.addr,
            dst_addr: Addr(42),
            src_port: 40000,
            dst_port: 5201,
            protocol: crate::packet::Protocol::Tcp,
            size_bytes: 1200,
            imsi: ue.imsi,
            mac: ue.mac,
            slice: SliceId::Embb,
            label: Label::Benign,
            attack_event_id: None,
        }
    }

    #[test]
    fn forge_single_field_is_local() {
        let p = benign_packet();
        let pool = IdPool::new(SliceId::Embb, ForgeSource::OutsidePool, 20);
        let out = forge_identity(&p, FieldSet::IMSI, &pool, &mut rng_for(1, 1)).unwrap();
        assert_ne!(out.imsi, p.imsi);
        assert!(is_forged_token(out.imsi.0));
        assert_eq!(out.label, Label::Spoofed);
        let restored = PacketRecord {
            imsi: p.imsi,
            label: Label::Benign,
            ..out
        };
        assert_eq!(restored, p);
    }

    #[test]
    fn forge_all_fields() {
        let p = benign_packet();
        let pool = IdPool::new(SliceId::Embb, ForgeSource::OutsidePool, 20);
        let out = forge_identity(&p, FieldSet::ALL, &pool, &mut rng_for(1, 2)).unwrap();
        assert_ne!(out.imsi, p.imsi);
        assert_ne!(out.mac, p.mac);
        assert_ne!(out.src_addr, p.src_addr);
        assert_eq!(
            forge_identity(&p, FieldSet::EMPTY, &pool, &mut rng_for(1, 2)),
            Err(Error::EmptyFieldSet)
        );
    }

    #[test]
    fn colliding_source_uses_other_ues() {
        let p = benign_packet();
        let pool =
            IdPool::new(SliceId::Embb, ForgeSource::CollidingWithPool, 20).excluding(Some(3));
        let mut rng = rng_for(5, 5);
        for _ in 0..50 {
            let out =
                forge_identity(&p, FieldSet::IMSI.union(FieldSet::MAC), &pool, &mut rng).unwrap();
            assert!(!is_forged_token(out.imsi.0));
            assert_ne!(out.imsi, p.imsi);
        }
    }

    #[test]
    fn field_set_text() {
        assert_eq!(FieldSet::ALL.to_string(), "imsi|ip|mac");
        assert_eq!(
            FieldSet::parse("mac|imsi"),
            Some(FieldSet::IMSI.union(FieldSet::MAC))
        );
        assert_eq!(FieldSet::parse(""), Some(FieldSet::EMPTY));
        assert_eq!(FieldSet::parse("tmsi"), None);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = stream();
        for bad in [0.0, -0.1, 1.5, f64::NAN] {
            let cfg = AttackConfig::new(AttackStrategy::Replay, bad, 1);
            assert!(matches!(inject(&s, &cfg), Err(Error::InvalidIntensity(_))));
        }
        let cfg = AttackConfig::new(AttackStrategy::Replay, 0.2, 1);
        assert_eq!(inject(&[], &cfg).unwrap_err(), Error::EmptyInput);
        let mut unordered = s[..10].to_vec();
        unordered.swap(2, 7);
        unordered[7].ts_us = 0;
        unordered[2].ts_us = 10_000_000_000;
        assert!(matches!(
            inject(&unordered, &cfg),
            Err(Error::Unordered { .. })
        ));
    }

    #[test]
    fn benign_packets_are_preserved_and_labels_sound() {
        let s = stream();
        let configs = [
            AttackConfig::new(AttackStrategy::IdentityImpersonation, 0.1, 9),
            AttackConfig::new(AttackStrategy::Replay, 0.1, 9),
        ];
        let (out, events) = inject_all(&s, &configs).unwrap();
        assert!(out.windows(2).all(|w| w[0].ts_us <= w[1].ts_us));
        let benign: Vec<&PacketRecord> = out.iter().filter(|p| p.label == Label::Benign).collect();
        assert_eq!(benign.len(), s.len());
        assert!(benign.iter().zip(&s).all(|(a, b)| *a == b));
        let by_id: BTreeMap<u32, &AttackEvent> = events.iter().map(|e| (e.event_id, e)).collect();
        assert_eq!(by_id.len(), events.len());
        for p in out.iter().filter(|p| p.label.is_attack()) {
            let e = by_id[&p.attack_event_id.unwrap()];
            assert!(e.ts_start_us <= p.ts_us && p.ts_us <= e.ts_end_us);
            assert_eq!(e.flow_key, FlowKey::of(p));
        }
    }

    #[test]
    fn intensity_controls_attacked_flow_share() {
        let s = stream();
        let cfg = AttackConfig::new(AttackStrategy::IdentityImpersonation, 0.2, 9);
        let (out, _) = inject(&s, &cfg).unwrap();
        for slice in SliceId::ALL {
            let all: BTreeSet<FlowKey> = s
                .iter()
                .filter(|p| p.slice == slice)
                .map(FlowKey::of)
                .collect();
            let hit: BTreeSet<FlowKey> = out
                .iter()
                .filter(|p| p.slice == slice && p.label.is_attack())
                .map(FlowKey::of)
                .collect();
            let n = all.len() as f64;
            let sigma = (n * 0.2 * 0.8).sqrt();
            assert!(
                (hit.len() as f64 - 0.2 * n).abs() <= 3.0 * sigma + 1.0,
                "{slice}: {} of {n}",
                hit.len()
            );
        }
    }

    #[test]
    fn replay_copies_sizes_and_perturbs_timing() {
        let s = stream();
        let cfg = AttackConfig::new(AttackStrategy::Replay, 0.1, 3);
        let (out, _) = inject(&s, &cfg).unwrap();
        let mut replayed: BTreeMap<FlowKey, Vec<&PacketRecord>> = BTreeMap::new();
        for p in out.iter().filter(|p| p.label == Label::Replayed) {
            replayed.entry(FlowKey::of(p)).or_default().push(p);
        }
        assert!(!replayed.is_empty());
        let mut differing = 0;
        for (key, rp) in &replayed {
            let src: Vec<&PacketRecord> = s.iter().filter(|p| FlowKey::of(p) == *key).collect();
            let sizes: Vec<u32> = rp.iter().map(|p| p.size_bytes).collect();
            let src_sizes: Vec<u32> = src.iter().map(|p| p.size_bytes).collect();
            let pos = src_sizes
                .windows(sizes.len())
                .position(|w| w == sizes.as_slice())
                .expect("replayed sizes are a contiguous copy of the source flow");
            let iat = |v: &[&PacketRecord]| {
                v.windows(2)
                    .map(|w| w[1].ts_us - w[0].ts_us)
                    .collect::<Vec<_>>()
            };
            if sizes.len() > 2 && iat(rp) != iat(&src[pos..pos + sizes.len()]) {
                differing += 1;
            }
            // identifiers are copied verbatim
            assert!(rp
                .iter()
                .all(|p| p.imsi == src[0].imsi && p.mac == src[0].mac));
        }
        assert!(differing > 0);
    }

    #[test]
    fn injection_is_deterministic() {
        let s = stream();
        let cfg = AttackConfig::new(AttackStrategy::IdentityImpersonation, 0.2, 4);
        assert_eq!(inject(&s, &cfg).unwrap(), inject(&s, &cfg).unwrap());
    }
}
