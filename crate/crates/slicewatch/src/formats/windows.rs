//! Labeled flow windows: a delimited summary file, one window per line,
//! plus a binary sidecar (`<name>.series`) with the per-packet sub-series.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use slicewatch_core::flow::{FlowKey, FlowWindow};
use slicewatch_core::{Addr, Imsi, Label, Mac, SliceId, WindowLabel};

use crate::error::{Error, Result};

pub const WINDOW_COLUMNS: [&str; 8] = [
    "window_index",
    "window_start_us",
    "window_len_us",
    "slice",
    "flow",
    "pkt_count",
    "byte_count",
    "label",
];

const SIDECAR_MAGIC: &[u8; 8] = b"SWWIN\0\0\x01";

pub fn sidecar_path(summary: &Path) -> PathBuf {
    let mut p = summary.as_os_str().to_owned();
    p.push(".series");
    PathBuf::from(p)
}

pub fn write_windows(path: &Path, windows: &[FlowWindow]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{}", WINDOW_COLUMNS.join(",")).map_err(io)?;
    let mut side = Vec::new();
    side.extend_from_slice(SIDECAR_MAGIC);
    side.extend_from_slice(&(windows.len() as u64).to_le_bytes());
    for win in windows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            win.window_index,
            win.window_start_us,
            win.window_len_us,
            win.slice,
            win.key,
            win.pkt_count,
            win.byte_count,
            win.label.as_str()
        )
        .map_err(io)?;
        side.extend_from_slice(&(win.pkt_sizes.len() as u32).to_le_bytes());
        for i in 0..win.pkt_sizes.len() {
            let (imsi, mac, addr) = win.identifiers[i];
            side.extend_from_slice(&win.arrival_ts[i].to_le_bytes());
            side.extend_from_slice(&win.pkt_sizes[i].to_le_bytes());
            side.extend_from_slice(&imsi.0.to_le_bytes());
            side.extend_from_slice(&mac.0.to_le_bytes());
            side.extend_from_slice(&addr.0.to_le_bytes());
            side.push(win.pkt_labels[i] as u8);
        }
    }
    w.flush().map_err(io)?;
    let sp = sidecar_path(path);
    std::fs::write(&sp, side).map_err(|e| Error::io(&sp, e))
}

struct Cursor<'a> {
    b: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Option<[u8; N]> {
        let s = self.b.get(self.at..self.at + N)?;
        self.at += N;
        Some(s.try_into().unwrap())
    }
    fn u64(&mut self) -> Option<u64> {
        self.take::<8>().map(u64::from_le_bytes)
    }
    fn u32(&mut self) -> Option<u32> {
        self.take::<4>().map(u32::from_le_bytes)
    }
    fn u8(&mut self) -> Option<u8> {
        self.take::<1>().map(|b| b[0])
    }
}

pub fn read_windows(path: &Path) -> Result<Vec<FlowWindow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let sp = sidecar_path(path);
    let mut side = Vec::new();
    File::open(&sp)
        .and_then(|mut f| f.read_to_end(&mut side))
        .map_err(|e| Error::io(&sp, e))?;
    let bad = |line: u64, msg: String| Error::Parse {
        path: path.into(),
        line,
        msg,
    };
    if side.len() < 16 || &side[..8] != SIDECAR_MAGIC {
        return Err(bad(0, "sidecar is not a window series file".into()));
    }
    let mut cur = Cursor { b: &side, at: 8 };
    let n = cur.u64().unwrap() as usize;
    let mut out = Vec::with_capacity(n);
    for (i, line) in text.lines().enumerate().skip(1) {
        let ln = i as u64 + 1;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != WINDOW_COLUMNS.len() {
            return Err(bad(
                ln,
                format!("expected {} columns", WINDOW_COLUMNS.len()),
            ));
        }
        let num = |j: usize| {
            f[j].parse::<u64>()
                .map_err(|_| bad(ln, format!("bad {}", WINDOW_COLUMNS[j])))
        };
        let key: FlowKey = f[4]
            .parse()
            .map_err(|e: slicewatch_core::Error| bad(ln, e.to_string()))?;
        let slice: SliceId = f[3]
            .parse()
            .map_err(|e: slicewatch_core::Error| bad(ln, e.to_string()))?;
        let label = match f[7] {
            "benign" => WindowLabel::Benign,
            "spoofed" => WindowLabel::Spoofed,
            other => return Err(bad(ln, format!("bad label `{other}`"))),
        };
        let short = || bad(ln, "sidecar ends early".into());
        let k = cur.u32().ok_or_else(short)? as usize;
        let mut win = FlowWindow {
            key,
            slice,
            window_index: num(0)?,
            window_start_us: num(1)?,
            window_len_us: num(2)?,
            pkt_sizes: Vec::with_capacity(k),
            arrival_ts: Vec::with_capacity(k),
            identifiers: Vec::with_capacity(k),
            pkt_labels: Vec::with_capacity(k),
            label,
            byte_count: num(6)?,
            pkt_count: num(5)? as u32,
        };
        for _ in 0..k {
            win.arrival_ts.push(cur.u64().ok_or_else(short)?);
            win.pkt_sizes.push(cur.u32().ok_or_else(short)?);
            let imsi = Imsi(cur.u64().ok_or_else(short)?);
            let mac = Mac(cur.u64().ok_or_else(short)?);
            let addr = Addr(cur.u64().ok_or_else(short)?);
            win.identifiers.push((imsi, mac, addr));
            win.pkt_labels.push(match cur.u8().ok_or_else(short)? {
                0 => Label::Benign,
                1 => Label::Spoofed,
                2 => Label::Replayed,
                c => return Err(bad(ln, format!("bad label code {c}"))),
            });
        }
        if win.pkt_count as usize != k
            || win.byte_count != win.pkt_sizes.iter().map(|&s| s as u64).sum::<u64>()
        {
            return Err(bad(ln, "summary disagrees with sidecar".into()));
        }
        out.push(win);
    }
    if out.len() != n || cur.at != side.len() {
        return Err(bad(
            0,
            format!("sidecar holds {n} windows, summary {}", out.len()),
        ));
    }
    Ok(out)
}
