//! Incremental window assembly for streaming inference.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::Result;
use crate::flow::{window_len_us, FlowKey, FlowWindow};
use crate::packet::PacketRecord;

/// Builds tumbling five-tuple windows from a packet feed and releases each
/// window index once the feed has moved `grace_us` past its end. Fed with a
/// time-ordered stream and flushed at the end, it emits exactly what
/// [`crate::flow::aggregate`] returns, in the same order.
#[derive(Debug, Clone)]
pub struct WindowAssembler {
    len_us: u64,
    grace_us: u64,
    open: BTreeMap<(u64, FlowKey), FlowWindow>,
    watermark: u64,
    /// Lowest window index that may still be opened.
    floor_index: u64,
    late: u64,
}

impl WindowAssembler {
    pub fn new(window_len_s: u64, grace_us: u64) -> Result<Self> {
        Ok(WindowAssembler {
            len_us: window_len_us(window_len_s)?,
            grace_us,
            open: BTreeMap::new(),
            watermark: 0,
            floor_index: 0,
            late: 0,
        })
    }

    /// Adds a packet; completed windows are appended to `out`. Packets for
    /// an already released window are counted as late and dropped.
    pub fn push(&mut self, p: &PacketRecord, out: &mut Vec<FlowWindow>) {
        let index = p.ts_us / self.len_us;
        if index < self.floor_index {
            self.late += 1;
            return;
        }
        self.open
            .entry((index, FlowKey::of(p)))
            .or_insert_with(|| FlowWindow::open(p, index, self.len_us))
            .push(p);
        self.advance(p.ts_us, out);
    }

    /// Moves the clock without a packet, e.g. on an idle tick.
    pub fn advance(&mut self, now_us: u64, out: &mut Vec<FlowWindow>) {
        self.watermark = self.watermark.max(now_us);
        while let Some(entry) = self.open.first_entry() {
            let index = entry.key().0;
            if (index + 1) * self.len_us + self.grace_us > self.watermark {
                break;
            }
            out.push(entry.remove());
            self.floor_index = self.floor_index.max(index + 1);
        }
    }

    pub fn flush(&mut self, out: &mut Vec<FlowWindow>) {
        if let Some(((last, _), _)) = self.open.last_key_value() {
            self.floor_index = self.floor_index.max(last + 1);
        }
        out.extend(core::mem::take(&mut self.open).into_values());
    }

    pub fn late_packets(&self) -> u64 {
        self.late
    }

    pub fn open_windows(&self) -> usize {
        self.open.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::aggregate;
    use crate::slice::build_default_profiles;
    use crate::traffic::{generate_scenario, TrafficParams};

    #[test]
    fn streaming_equals_batch() {
        let s = generate_scenario(
            &build_default_profiles(),
            &TrafficParams::desk_scale(),
            30.0,
            2,
        )
        .unwrap();
        for (len, grace) in [(1, 0), (2, 0), (2, 250_000), (4, 1)] {
            let mut a = WindowAssembler::new(len, grace).unwrap();
            let mut out = Vec::new();
            for p in &s {
                a.push(p, &mut out);
            }
            a.flush(&mut out);
            assert_eq!(out, aggregate(&s, len).unwrap());
            assert_eq!(a.late_packets(), 0);
        }
    }

    #[test]
    fn late_packets_are_counted() {
        let s = generate_scenario(
            &build_default_profiles(),
            &TrafficParams::desk_scale(),
            10.0,
            2,
        )
        .unwrap();
        let mut a = WindowAssembler::new(1, 0).unwrap();
        let mut out = Vec::new();
        for p in &s {
            a.push(p, &mut out);
        }
        a.push(&s[0], &mut out);
        assert_eq!(a.late_packets(), 1);
    }
}
