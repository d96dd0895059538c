//! Streaming detector: one aggregation pipeline per slice, fed by a
//! dispatcher over bounded queues, and a single sink writing JSON lines.

use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use slicewatch_core::eval::percentile;
use slicewatch_core::features::extract;
use slicewatch_core::flow::{FlowKey, FlowWindow};
use slicewatch_core::learn::ModelKind;
use slicewatch_core::stream::WindowAssembler;
use slicewatch_core::{PacketRecord, SliceId, WindowLabel};

use crate::error::{Error, Result};
use crate::formats::stream::StreamLines;
use crate::registry::ModelRegistry;

pub const DEFAULT_GRACE_US: u64 = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ServeConfig {
    pub window_len_s: u64,
    pub threshold: f64,
    pub grace_us: u64,
    /// Packets buffered per slice between dispatcher and pipeline.
    pub queue_capacity: usize,
    /// Replay at stream time divided by this factor; a full queue then drops
    /// the packet. Without pacing the dispatcher blocks instead.
    pub pace: Option<f64>,
    /// Keep every verdict in memory as well.
    pub collect: bool,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            window_len_s: 2,
            threshold: 0.5,
            grace_us: DEFAULT_GRACE_US,
            queue_capacity: 65_536,
            pace: None,
            collect: false,
        }
    }
}

/// One line of the verdict log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictRecord {
    pub ts: String,
    pub slice: SliceId,
    pub flow: String,
    pub label: WindowLabel,
    pub confidence: f64,
    pub model: ModelKind,
    pub lat_us: u64,
}

/// One line of the unscored log: a completed window no model accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnscoredRecord {
    pub ts: String,
    pub slice: SliceId,
    pub flow: String,
    pub window_start_us: u64,
    pub reason: String,
}

/// In-memory form of a verdict, keyed like the batch pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredWindow {
    pub key: FlowKey,
    pub slice: SliceId,
    pub window_index: u64,
    pub label: WindowLabel,
    pub confidence: f64,
    pub model: ModelKind,
    pub partial: bool,
}

pub fn flow_digest(key: &FlowKey) -> String {
    let d = Sha256::digest(key.to_string().as_bytes());
    d[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn now_iso() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ServiceStats {
    pub packets: u64,
    pub windows: u64,
    pub elapsed_s: f64,
    pub windows_per_s: f64,
    pub latency_mean_us: Option<f64>,
    pub latency_p50_us: Option<f64>,
    pub latency_p95_us: Option<f64>,
    pub latency_p99_us: Option<f64>,
    /// Late packets plus queue overflows.
    pub dropped: u64,
    pub late_packets: u64,
    pub queue_drops: u64,
    pub malformed: u64,
    pub partial: u64,
    pub unscored: u64,
    pub cpu_fraction: Option<f64>,
    pub rss_bytes: Option<u64>,
}

impl ServiceStats {
    /// Fills the latency fields from raw samples.
    pub fn with_latencies(mut self, lat_us: &[u64]) -> Self {
        let v: Vec<f64> = lat_us.iter().map(|&x| x as f64).collect();
        self.latency_mean_us = (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        self.latency_p50_us = percentile(&v, 50.0);
        self.latency_p95_us = percentile(&v, 95.0);
        self.latency_p99_us = percentile(&v, 99.0);
        self
    }
}

#[derive(Default)]
struct Counters {
    packets: AtomicU64,
    windows: AtomicU64,
    late: AtomicU64,
    queue_drops: AtomicU64,
    malformed: AtomicU64,
    partial: AtomicU64,
    unscored: AtomicU64,
    cpu_bits: AtomicU64,
    rss: AtomicU64,
}

/// Process CPU seconds and resident bytes from procfs.
fn proc_sample() -> Option<(f64, u64)> {
    let stat = std::fs::read_to_string("/proc/self/stat").ok()?;
    let rest = &stat[stat.rfind(')')? + 2..];
    let f: Vec<&str> = rest.split_whitespace().collect();
    // utime and stime are fields 14 and 15, in clock ticks of 1/100 s.
    let ticks: u64 = f.get(11)?.parse::<u64>().ok()? + f.get(12)?.parse::<u64>().ok()?;
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let kb: u64 = status
        .lines()
        .find(|l| l.starts_with("VmRSS:"))?
        .split_whitespace()
        .nth(1)?
        .parse()
        .ok()?;
    Some((ticks as f64 / 100.0, kb * 1024))
}

enum SinkMsg {
    Verdict(VerdictRecord, Option<ScoredWindow>),
    Unscored(UnscoredRecord),
}

pub struct ServeOutcome {
    pub stats: ServiceStats,
    pub verdicts: Vec<ScoredWindow>,
}

/// A running service. Feed packets in per-slice time order, then `finish`.
pub struct Service {
    config: ServeConfig,
    senders: Vec<SyncSender<PacketRecord>>,
    workers: Vec<JoinHandle<Vec<u64>>>,
    latencies: Vec<Arc<Mutex<Vec<u64>>>>,
    sink: Option<JoinHandle<std::io::Result<Vec<ScoredWindow>>>>,
    sampler: Option<(mpsc::Sender<()>, JoinHandle<()>)>,
    counters: Arc<Counters>,
    started: Instant,
    first_ts: Option<u64>,
}

impl Service {
    pub fn start(
        registry: Arc<ModelRegistry>,
        config: ServeConfig,
        mut verdict_out: Box<dyn Write + Send>,
        mut unscored_out: Box<dyn Write + Send>,
    ) -> Result<Service> {
        if config.queue_capacity == 0 {
            return Err(Error::Usage("queue capacity must be positive".into()));
        }
        if !(0.0..=1.0).contains(&config.threshold) {
            return Err(Error::Usage("threshold must be in [0, 1]".into()));
        }
        if config.pace.is_some_and(|p| !(p > 0.0)) {
            return Err(Error::Usage("pace factor must be positive".into()));
        }
        // Validates the window length before any thread starts.
        WindowAssembler::new(config.window_len_s, config.grace_us)?;
        let counters = Arc::new(Counters::default());
        let (sink_tx, sink_rx) = mpsc::channel::<SinkMsg>();
        let collect = config.collect;
        let sink = thread::spawn(move || -> std::io::Result<Vec<ScoredWindow>> {
            let mut kept = Vec::new();
            for msg in sink_rx {
                match msg {
                    SinkMsg::Verdict(v, w) => {
                        serde_json::to_writer(&mut verdict_out, &v)?;
                        verdict_out.write_all(b"\n")?;
                        if collect {
                            kept.extend(w);
                        }
                    }
                    SinkMsg::Unscored(u) => {
                        serde_json::to_writer(&mut unscored_out, &u)?;
                        unscored_out.write_all(b"\n")?;
                    }
                }
            }
            verdict_out.flush()?;
            unscored_out.flush()?;
            Ok(kept)
        });
        let mut senders = Vec::new();
        let mut workers = Vec::new();
        let mut latencies = Vec::new();
        for _ in SliceId::ALL {
            let (tx, rx) = mpsc::sync_channel(config.queue_capacity);
            let lat = Arc::new(Mutex::new(Vec::new()));
            let pipeline = Pipeline {
                assembler: WindowAssembler::new(config.window_len_s, config.grace_us)?,
                registry: registry.clone(),
                threshold: config.threshold,
                sink: sink_tx.clone(),
                counters: counters.clone(),
                latencies: lat.clone(),
                collect,
            };
            workers.push(thread::spawn(move || pipeline.run(rx)));
            senders.push(tx);
            latencies.push(lat);
        }
        drop(sink_tx);
        let (stop_tx, stop_rx) = mpsc::channel::<()>();
        let c = counters.clone();
        let sampler = thread::spawn(move || {
            let mut last = (Instant::now(), proc_sample());
            loop {
                let stop = !matches!(
                    stop_rx.recv_timeout(Duration::from_secs(1)),
                    Err(mpsc::RecvTimeoutError::Timeout)
                );
                let now = (Instant::now(), proc_sample());
                if let (Some((cpu0, _)), Some((cpu1, rss))) = (last.1, now.1) {
                    let wall = now.0.duration_since(last.0).as_secs_f64();
                    if wall > 0.05 {
                        c.cpu_bits
                            .store(((cpu1 - cpu0) / wall).to_bits(), Ordering::Relaxed);
                    }
                    c.rss.fetch_max(rss, Ordering::Relaxed);
                }
                last = now;
                if stop {
                    break;
                }
            }
        });
        Ok(Service {
            config,
            senders,
            workers,
            latencies,
            sink: Some(sink),
            sampler: Some((stop_tx, sampler)),
            counters,
            started: Instant::now(),
            first_ts: None,
        })
    }

    /// Hands one packet to its slice's pipeline.
    pub fn feed(&mut self, p: PacketRecord) -> Result<()> {
        self.counters.packets.fetch_add(1, Ordering::Relaxed);
        let tx = &self.senders[p.slice.index()];
        match self.config.pace {
            None => tx
                .send(p)
                .map_err(|_| Error::Format("pipeline stopped".into())),
            Some(speed) => {
                let t0 = *self.first_ts.get_or_insert(p.ts_us);
                let due = Duration::from_secs_f64(p.ts_us.saturating_sub(t0) as f64 / 1e6 / speed);
                let elapsed = self.started.elapsed();
                if due > elapsed + Duration::from_micros(500) {
                    thread::sleep(due - elapsed);
                }
                match tx.try_send(p) {
                    Ok(()) => Ok(()),
                    Err(TrySendError::Full(_)) => {
                        self.counters.queue_drops.fetch_add(1, Ordering::Relaxed);
                        Ok(())
                    }
                    Err(TrySendError::Disconnected(_)) => {
                        Err(Error::Format("pipeline stopped".into()))
                    }
                }
            }
        }
    }

    pub fn malformed(&self) {
        self.counters.malformed.fetch_add(1, Ordering::Relaxed);
    }

    /// Consistent view of the counters so far.
    pub fn snapshot(&self) -> ServiceStats {
        let mut lat = Vec::new();
        for l in &self.latencies {
            lat.extend_from_slice(&l.lock().expect("latency buffer"));
        }
        self.stats_with(&lat)
    }

    fn stats_with(&self, lat: &[u64]) -> ServiceStats {
        let c = &self.counters;
        let elapsed = self.started.elapsed().as_secs_f64();
        let windows = c.windows.load(Ordering::Relaxed);
        let late = c.late.load(Ordering::Relaxed);
        let queue = c.queue_drops.load(Ordering::Relaxed);
        let cpu = f64::from_bits(c.cpu_bits.load(Ordering::Relaxed));
        let rss = c.rss.load(Ordering::Relaxed);
        ServiceStats {
            packets: c.packets.load(Ordering::Relaxed),
            windows,
            elapsed_s: elapsed,
            windows_per_s: if elapsed > 0.0 {
                windows as f64 / elapsed
            } else {
                0.0
            },
            dropped: late + queue,
            late_packets: late,
            queue_drops: queue,
            malformed: c.malformed.load(Ordering::Relaxed),
            partial: c.partial.load(Ordering::Relaxed),
            unscored: c.unscored.load(Ordering::Relaxed),
            cpu_fraction: (cpu > 0.0).then_some(cpu),
            rss_bytes: (rss > 0).then_some(rss),
            ..ServiceStats::default()
        }
        .with_latencies(lat)
    }

    /// Ends the stream: open windows are flushed as partial, every thread
    /// is joined and the sinks are flushed.
    pub fn finish(mut self) -> Result<ServeOutcome> {
        self.senders.clear();
        let mut lat = Vec::new();
        for w in self.workers.drain(..) {
            lat.extend(
                w.join()
                    .map_err(|_| Error::Format("pipeline panicked".into()))?,
            );
        }
        let verdicts = self
            .sink
            .take()
            .expect("sink running")
            .join()
            .map_err(|_| Error::Format("sink panicked".into()))?
            .map_err(|e| Error::io("verdict sink", e))?;
        if let Some((stop, h)) = self.sampler.take() {
            let _ = stop.send(());
            let _ = h.join();
        }
        Ok(ServeOutcome {
            stats: self.stats_with(&lat),
            verdicts,
        })
    }
}

struct Pipeline {
    assembler: WindowAssembler,
    registry: Arc<ModelRegistry>,
    threshold: f64,
    sink: mpsc::Sender<SinkMsg>,
    counters: Arc<Counters>,
    latencies: Arc<Mutex<Vec<u64>>>,
    collect: bool,
}

impl Pipeline {
    fn run(mut self, rx: Receiver<PacketRecord>) -> Vec<u64> {
        let mut done = Vec::new();
        let mut lat = Vec::new();
        for p in rx {
            self.assembler.push(&p, &mut done);
            for w in done.drain(..) {
                self.score(w, false, &mut lat);
            }
        }
        self.counters
            .late
            .fetch_add(self.assembler.late_packets(), Ordering::Relaxed);
        self.assembler.flush(&mut done);
        self.counters
            .partial
            .fetch_add(done.len() as u64, Ordering::Relaxed);
        for w in done.drain(..) {
            self.score(w, true, &mut lat);
        }
        lat
    }

    fn score(&self, w: FlowWindow, partial: bool, lat: &mut Vec<u64>) {
        let t = Instant::now();
        let x = extract(&w);
        let model = match self.registry.route(w.slice) {
            Ok(m) => m,
            Err(e) => {
                self.counters.unscored.fetch_add(1, Ordering::Relaxed);
                let _ = self.sink.send(SinkMsg::Unscored(UnscoredRecord {
                    ts: now_iso(),
                    slice: w.slice,
                    flow: flow_digest(&w.key),
                    window_start_us: w.window_start_us,
                    reason: e.to_string(),
                }));
                return;
            }
        };
        let v = model.classify(&x, self.threshold);
        let record = VerdictRecord {
            ts: now_iso(),
            slice: w.slice,
            flow: flow_digest(&w.key),
            label: v.label,
            confidence: v.confidence,
            model: model.kind(),
            lat_us: 0,
        };
        let lat_us = t.elapsed().as_micros() as u64;
        let record = VerdictRecord { lat_us, ..record };
        let kept = self.collect.then(|| ScoredWindow {
            key: w.key,
            slice: w.slice,
            window_index: w.window_index,
            label: v.label,
            confidence: v.confidence,
            model: model.kind(),
            partial,
        });
        self.counters.windows.fetch_add(1, Ordering::Relaxed);
        lat.push(lat_us);
        self.latencies.lock().expect("latency buffer").push(lat_us);
        let _ = self.sink.send(SinkMsg::Verdict(record, kept));
    }
}

/// Runs the service over a finished source: `Err` items are malformed
/// records, counted and skipped.
pub fn serve<I>(
    source: I,
    registry: Arc<ModelRegistry>,
    config: ServeConfig,
    verdict_out: Box<dyn Write + Send>,
    unscored_out: Box<dyn Write + Send>,
) -> Result<ServeOutcome>
where
    I: IntoIterator<Item = std::result::Result<PacketRecord, String>>,
{
    let mut svc = Service::start(registry, config, verdict_out, unscored_out)?;
    for item in source {
        match item {
            Ok(p) => svc.feed(p)?,
            Err(_) => svc.malformed(),
        }
    }
    svc.finish()
}

/// Packet source over the text stream format. A read error ends the
/// source as a disconnect would.
pub fn line_source<R: BufRead>(
    reader: R,
) -> impl Iterator<Item = std::result::Result<PacketRecord, String>> {
    StreamLines::new(reader).map_while(|item| item.ok().map(|(_, rec)| rec))
}

/// Batch reference: the verdicts `serve` must reproduce for these packets.
pub fn offline_verdicts(
    packets: &[PacketRecord],
    registry: &ModelRegistry,
    config: &ServeConfig,
) -> Result<Vec<ScoredWindow>> {
    let windows = slicewatch_core::flow::aggregate(packets, config.window_len_s)?;
    Ok(windows
        .iter()
        .filter_map(|w| {
            let m = registry.route(w.slice).ok()?;
            let v = m.classify(&extract(w), config.threshold);
            Some(ScoredWindow {
                key: w.key,
                slice: w.slice,
                window_index: w.window_index,
                label: v.label,
                confidence: v.confidence,
                model: m.kind(),
                partial: false,
            })
        })
        .collect())
}
