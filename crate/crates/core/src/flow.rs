//! Five-tuple keyed tumbling-window aggregation, label joining and
//! anonymization.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::AttackEvent;
use crate::error::{Error, Result};
use crate::packet::{
    check_time_ordered, Addr, Imsi, Label, Mac, PacketRecord, Protocol, WindowLabel,
};
use crate::slice::SliceId;
use crate::traffic::US_PER_SEC;

pub const DEFAULT_WINDOW_SECS: u64 = 2;
pub const MIN_WINDOW_SECS: u64 = 1;
pub const MAX_WINDOW_SECS: u64 = 4;
pub const DEFAULT_TOLERANCE_MS: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowKey {
    pub src_addr: Addr,
    pub dst_addr: Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: Protocol,
}

impl FlowKey {
    pub fn of(p: &PacketRecord) -> FlowKey {
        FlowKey {
            src_addr: p.src_addr,
            dst_addr: p.dst_addr,
            src_port: p.src_port,
            dst_port: p.dst_port,
            protocol: p.protocol,
        }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}-{}:{}/{}",
            self.src_addr,
            self.src_port,
            self.dst_addr,
            self.dst_port,
            self.protocol.number()
        )
    }
}

impl FromStr for FlowKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(alloc::format!("bad flow key `{s}`"));
        let (ends, proto) = s.rsplit_once('/').ok_or_else(bad)?;
        let (src, dst) = ends.split_once('-').ok_or_else(bad)?;
        let endpoint = |e: &str| -> Result<(Addr, u16)> {
            let (a, p) = e.split_once(':').ok_or_else(bad)?;
            let a = u64::from_str_radix(a, 16).map_err(|_| bad())?;
            Ok((Addr(a), p.parse().map_err(|_| bad())?))
        };
        let (src_addr, src_port) = endpoint(src)?;
        let (dst_addr, dst_port) = endpoint(dst)?;
        let protocol = Protocol::from_number(proto.parse().map_err(|_| bad())?).ok_or_else(bad)?;
        Ok(FlowKey {
            src_addr,
            dst_addr,
            src_port,
            dst_port,
            protocol,
        })
    }
}

/// Identifier triple carried by one packet.
pub type IdTriple = (Imsi, Mac, Addr);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowWindow {
    pub key: FlowKey,
    pub slice: SliceId,
    pub window_index: u64,
    pub window_start_us: u64,
    pub window_len_us: u64,
    pub pkt_sizes: Vec<u32>,
    pub arrival_ts: Vec<u64>,
    pub identifiers: Vec<IdTriple>,
    /// Per-packet ground truth as seen at aggregation time.
    pub pkt_labels: Vec<Label>,
    pub label: WindowLabel,
    pub byte_count: u64,
    pub pkt_count: u32,
}

impl FlowWindow {
    pub(crate) fn open(p: &PacketRecord, index: u64, len_us: u64) -> Self {
        FlowWindow {
            key: FlowKey::of(p),
            slice: p.slice,
            window_index: index,
            window_start_us: index * len_us,
            window_len_us: len_us,
            pkt_sizes: Vec::new(),
            arrival_ts: Vec::new(),
            identifiers: Vec::new(),
            pkt_labels: Vec::new(),
            label: WindowLabel::Benign,
            byte_count: 0,
            pkt_count: 0,
        }
    }

    pub(crate) fn push(&mut self, p: &PacketRecord) {
        self.pkt_sizes.push(p.size_bytes);
        self.arrival_ts.push(p.ts_us);
        self.identifiers.push((p.imsi, p.mac, p.src_addr));
        self.pkt_labels.push(p.label);
        self.byte_count += p.size_bytes as u64;
        self.pkt_count += 1;
        if p.label.is_attack() {
            self.label = WindowLabel::Spoofed;
        }
    }

    /// Label implied by the per-packet ground truth.
    pub fn truth(&self) -> WindowLabel {
        WindowLabel::from_bool(self.pkt_labels.iter().any(|l| l.is_attack()))
    }

    pub fn window_end_us(&self) -> u64 {
        self.window_start_us + self.window_len_us
    }
}

pub fn window_len_us(window_len_s: u64) -> Result<u64> {
    if !(MIN_WINDOW_SECS..=MAX_WINDOW_SECS).contains(&window_len_s) {
        return Err(Error::InvalidWindow(window_len_s));
    }
    Ok(window_len_s * US_PER_SEC)
}

/// Buckets packets into tumbling windows by five-tuple. Windows come out in
/// `(window_index, key)` order; the window label is set from packet labels.
pub fn aggregate(packets: &[PacketRecord], window_len_s: u64) -> Result<Vec<FlowWindow>> {
    let len = window_len_us(window_len_s)?;
    check_time_ordered(packets)?;
    let mut buckets: BTreeMap<(u64, FlowKey), FlowWindow> = BTreeMap::new();
    for p in packets {
        let index = p.ts_us / len;
        buckets
            .entry((index, FlowKey::of(p)))
            .or_insert_with(|| FlowWindow::open(p, index, len))
            .push(p);
    }
    Ok(buckets.into_values().collect())
}

/// Packets of the windows, time-ordered. Event ids are not retained.
pub fn flatten(windows: &[FlowWindow]) -> Vec<PacketRecord> {
    let mut out = Vec::with_capacity(windows.iter().map(|w| w.pkt_count as usize).sum());
    for w in windows {
        for i in 0..w.pkt_count as usize {
            let (imsi, mac, src_addr) = w.identifiers[i];
            out.push(PacketRecord {
                ts_us: w.arrival_ts[i],
                src_addr,
                dst_addr: w.key.dst_addr,
                src_port: w.key.src_port,
                dst_port: w.key.dst_port,
                protocol: w.key.protocol,
                size_bytes: w.pkt_sizes[i],
                imsi,
                mac,
                slice: w.slice,
                label: w.pkt_labels[i],
                attack_event_id: None,
            });
        }
    }
    out.sort_by_key(|p| p.ts_us);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelJoinReport {
    pub total_windows: u64,
    pub labeled_spoofed: u64,
    pub labeled_benign: u64,
    /// Spoofed only because of the tolerance margin.
    pub ambiguous: u64,
}

impl LabelJoinReport {
    pub fn labeling_accuracy_estimate(&self) -> f64 {
        if self.total_windows == 0 {
            return 1.0;
        }
        1.0 - self.ambiguous as f64 / self.total_windows as f64
    }
}

/// Labels windows from the attacker event log: spoofed iff some packet lies
/// within `tolerance_ms` of an event of the same flow.
pub fn join_labels(
    windows: &[FlowWindow],
    events: &[AttackEvent],
    tolerance_ms: u64,
) -> (Vec<FlowWindow>, LabelJoinReport) {
    let tol = tolerance_ms * 1000;
    let mut by_key: BTreeMap<FlowKey, Vec<(u64, u64)>> = BTreeMap::new();
    for e in events {
        by_key
            .entry(e.flow_key)
            .or_default()
            .push((e.ts_start_us, e.ts_end_us));
    }
    let by_key: BTreeMap<FlowKey, Vec<(u64, u64)>> = by_key
        .into_iter()
        .map(|(k, v)| (k, prefix_max(v)))
        .collect();
    let mut report = LabelJoinReport {
        total_windows: windows.len() as u64,
        ..Default::default()
    };
    let out = windows
        .iter()
        .map(|w| {
            let mut w = w.clone();
            let (exact, near) = match by_key.get(&w.key) {
                Some(iv) => (hits(iv, &w.arrival_ts, 0), hits(iv, &w.arrival_ts, tol)),
                None => (false, false),
            };
            w.label = WindowLabel::from_bool(near);
            if near {
                report.labeled_spoofed += 1;
                if !exact {
                    report.ambiguous += 1;
                }
            } else {
                report.labeled_benign += 1;
            }
            w
        })
        .collect();
    (out, report)
}

/// Intervals sorted by start, each paired with the running max of ends.
fn prefix_max(mut iv: Vec<(u64, u64)>) -> Vec<(u64, u64)> {
    iv.sort_unstable();
    let mut m = 0;
    for x in iv.iter_mut() {
        m = m.max(x.1);
        x.1 = m;
    }
    iv
}

/// Whether any timestamp falls in an interval widened by `tol`.
fn hits(intervals: &[(u64, u64)], ts: &[u64], tol: u64) -> bool {
    ts.iter().any(|&t| {
        let upto = intervals.partition_point(|&(s, _)| s <= t + tol);
        upto > 0 && intervals[upto - 1].1 + tol >= t
    })
}

/// Fraction of windows whose joined label equals the per-packet truth.
pub fn join_agreement(joined: &[FlowWindow]) -> f64 {
    if joined.is_empty() {
        return 1.0;
    }
    let agree = joined.iter().filter(|w| w.label == w.truth()).count();
    agree as f64 / joined.len() as f64
}

/// Keyed token hashing.
#[derive(Clone)]
pub struct Anonymizer {
    key: Vec<u8>,
}

pub const QUANTUM_US: u64 = 1000;

impl Anonymizer {
    pub fn new(key: &[u8]) -> Self {
        Anonymizer { key: key.to_vec() }
    }

    fn digest(&self, domain: u8, v: u64) -> u64 {
        let mut h = Sha256::new();
        h.update((self.key.len() as u64).to_le_bytes());
        h.update(&self.key);
        h.update([domain]);
        h.update(v.to_le_bytes());
        let out = h.finalize();
        let mut b = [0u8; 8];
        b.copy_from_slice(&out[..8]);
        u64::from_le_bytes(b)
    }

    pub fn addr(&self, a: Addr) -> Addr {
        Addr(self.digest(b'a', a.0))
    }

    pub fn imsi(&self, i: Imsi) -> Imsi {
        Imsi(self.digest(b'i', i.0))
    }

    pub fn mac(&self, m: Mac) -> Mac {
        Mac(self.digest(b'm', m.0))
    }

    pub fn key(&self, k: FlowKey) -> FlowKey {
        FlowKey {
            src_addr: self.addr(k.src_addr),
            dst_addr: self.addr(k.dst_addr),
            ..k
        }
    }

    pub fn packet(&self, p: &PacketRecord) -> PacketRecord {
        PacketRecord {
            ts_us: quantize(p.ts_us),
            src_addr: self.addr(p.src_addr),
            dst_addr: self.addr(p.dst_addr),
            imsi: self.imsi(p.imsi),
            mac: self.mac(p.mac),
            ..p.clone()
        }
    }

    pub fn window(&self, w: &FlowWindow) -> FlowWindow {
        FlowWindow {
            key: self.key(w.key),
            arrival_ts: w.arrival_ts.iter().map(|&t| quantize(t)).collect(),
            identifiers: w
                .identifiers
                .iter()
                .map(|&(i, m, a)| (self.imsi(i), self.mac(m), self.addr(a)))
                .collect(),
            ..w.clone()
        }
    }
}

/// Floors to whole milliseconds.
pub fn quantize(ts_us: u64) -> u64 {
    ts_us - ts_us % QUANTUM_US
}

pub fn anonymize_packets(packets: &[PacketRecord], key: &[u8]) -> Vec<PacketRecord> {
    let a = Anonymizer::new(key);
    packets.iter().map(|p| a.packet(p)).collect()
}

/// Anonymized windows, re-sorted into `(window_index, key)` order.
pub fn anonymize_windows(windows: &[FlowWindow], key: &[u8]) -> Vec<FlowWindow> {
    let a = Anonymizer::new(key);
    let mut out: Vec<FlowWindow> = windows.iter().map(|w| a.window(w)).collect();
    out.sort_by_key(|w| (w.window_index, w.key));
    out
}
