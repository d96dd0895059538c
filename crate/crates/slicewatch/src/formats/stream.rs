//! Packet stream files: delimited text with a fixed column order, and a
//! compact little-endian binary form.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use slicewatch_core::{Addr, Imsi, Label, Mac, PacketRecord, Protocol, SliceId};

use crate::error::{Error, Result};

pub const STREAM_COLUMNS: [&str; 12] = [
    "ts_us",
    "slice",
    "src_addr",
    "dst_addr",
    "sport",
    "dport",
    "proto",
    "size",
    "imsi",
    "mac",
    "label",
    "attack_event_id",
];

const BINARY_MAGIC: &[u8; 8] = b"SWPKT\0\0\x01";
const BINARY_RECORD: usize = 55;

pub fn header_line() -> String {
    STREAM_COLUMNS.join(",")
}

pub fn format_packet(p: &PacketRecord) -> String {
    let event = p.attack_event_id.map(|e| e.to_string()).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        p.ts_us,
        p.slice,
        p.src_addr,
        p.dst_addr,
        p.src_port,
        p.dst_port,
        proto_name(p.protocol),
        p.size_bytes,
        p.imsi,
        p.mac,
        p.label.as_str(),
        event
    )
}

fn proto_name(p: Protocol) -> &'static str {
    match p {
        Protocol::Tcp => "tcp",
        Protocol::Udp => "udp",
    }
}

fn hex_token(s: &str, what: &str) -> std::result::Result<u64, String> {
    u64::from_str_radix(s, 16).map_err(|_| format!("bad {what} `{s}`"))
}

/// Parses one data line of the text format.
pub fn parse_packet(line: &str) -> std::result::Result<PacketRecord, String> {
    let f: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(',').collect();
    if f.len() != STREAM_COLUMNS.len() {
        return Err(format!(
            "expected {} columns, got {}",
            STREAM_COLUMNS.len(),
            f.len()
        ));
    }
    let num = |i: usize| {
        f[i].parse::<u64>()
            .map_err(|_| format!("bad {} `{}`", STREAM_COLUMNS[i], f[i]))
    };
    let label = match f[10] {
        "benign" => Label::Benign,
        "spoofed" => Label::Spoofed,
        "replayed" => Label::Replayed,
        other => return Err(format!("bad label `{other}`")),
    };
    let attack_event_id = if f[11].is_empty() {
        None
    } else {
        Some(
            f[11]
                .parse::<u32>()
                .map_err(|_| format!("bad attack_event_id `{}`", f[11]))?,
        )
    };
    if (label == Label::Benign) != attack_event_id.is_none() {
        return Err("label and attack_event_id disagree".into());
    }
    let size = num(7)?;
    if size == 0 || size > u32::MAX as u64 {
        return Err(format!("bad size `{}`", f[7]));
    }
    let port = |i: usize| -> std::result::Result<u16, String> {
        u16::try_from(num(i)?).map_err(|_| format!("bad port `{}`", f[i]))
    };
    Ok(PacketRecord {
        ts_us: num(0)?,
        slice: f[1].parse::<SliceId>().map_err(|e| e.to_string())?,
        src_addr: Addr(hex_token(f[2], "src_addr")?),
        dst_addr: Addr(hex_token(f[3], "dst_addr")?),
        src_port: port(4)?,
        dst_port: port(5)?,
        protocol: match f[6] {
            "tcp" => Protocol::Tcp,
            "udp" => Protocol::Udp,
            other => return Err(format!("bad proto `{other}`")),
        },
        size_bytes: size as u32,
        imsi: Imsi(hex_token(f[8], "imsi")?),
        mac: Mac(hex_token(f[9], "mac")?),
        label,
        attack_event_id,
    })
}

pub fn write_stream_csv(path: &Path, packets: &[PacketRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| {
        writeln!(w, "{}", header_line())?;
        for p in packets {
            writeln!(w, "{}", format_packet(p))?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Line-by-line reader of the text format. Yields one item per data line;
/// malformed lines come back as errors and reading continues after them.
pub struct StreamLines<R> {
    inner: R,
    line: u64,
    buf: String,
}

impl<R: BufRead> StreamLines<R> {
    pub fn new(inner: R) -> Self {
        StreamLines {
            inner,
            line: 0,
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for StreamLines<R> {
    /// `(line number, parsed record or message)`.
    type Item = std::io::Result<(u64, std::result::Result<PacketRecord, String>)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.inner.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e)),
            }
            self.line += 1;
            let trimmed = self.buf.trim();
            if trimmed.is_empty() || (self.line == 1 && trimmed.starts_with("ts_us")) {
                continue;
            }
            return Some(Ok((self.line, parse_packet(trimmed))));
        }
    }
}

/// Strict reader: any malformed line is an error.
pub fn read_stream_csv(path: &Path) -> Result<Vec<PacketRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for item in StreamLines::new(BufReader::new(file)) {
        let (line, rec) = item.map_err(|e| Error::io(path, e))?;
        out.push(rec.map_err(|msg| Error::Parse {
            path: path.into(),
            line,
            msg,
        })?);
    }
    Ok(out)
}

fn encode(p: &PacketRecord, out: &mut Vec<u8>) {
    out.extend_from_slice(&p.ts_us.to_le_bytes());
    out.extend_from_slice(&p.src_addr.0.to_le_bytes());
    out.extend_from_slice(&p.dst_addr.0.to_le_bytes());
    out.extend_from_slice(&p.src_port.to_le_bytes());
    out.extend_from_slice(&p.dst_port.to_le_bytes());
    out.push(p.protocol.number());
    out.extend_from_slice(&p.size_bytes.to_le_bytes());
    out.extend_from_slice(&p.imsi.0.to_le_bytes());
    out.extend_from_slice(&p.mac.0.to_le_bytes());
    out.push(p.slice.sst());
    out.push(p.label as u8);
    out.extend_from_slice(&p.attack_event_id.unwrap_or(u32::MAX).to_le_bytes());
}

fn decode(b: &[u8]) -> std::result::Result<PacketRecord, String> {
    let u64_at = |i: usize| u64::from_le_bytes(b[i..i + 8].try_into().unwrap());
    let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
    let u16_at = |i: usize| u16::from_le_bytes(b[i..i + 2].try_into().unwrap());
    let label = match b[50] {
        0 => Label::Benign,
        1 => Label::Spoofed,
        2 => Label::Replayed,
        other => return Err(format!("bad label code {other}")),
    };
    let event = u32_at(51);
    Ok(PacketRecord {
        ts_us: u64_at(0),
        src_addr: Addr(u64_at(8)),
        dst_addr: Addr(u64_at(16)),
        src_port: u16_at(24),
        dst_port: u16_at(26),
        protocol: Protocol::from_number(b[28]).ok_or_else(|| format!("bad protocol {}", b[28]))?,
        size_bytes: u32_at(29),
        imsi: Imsi(u64_at(33)),
        mac: Mac(u64_at(41)),
        slice: SliceId::from_sst(b[49]).map_err(|e| e.to_string())?,
        label,
        attack_event_id: (event != u32::MAX).then_some(event),
    })
}

pub fn write_stream_bin(path: &Path, packets: &[PacketRecord]) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + packets.len() * BINARY_RECORD);
    buf.extend_from_slice(BINARY_MAGIC);
    buf.extend_from_slice(&(packets.len() as u64).to_le_bytes());
    for p in packets {
        encode(p, &mut buf);
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_stream_bin(path: &Path) -> Result<Vec<PacketRecord>> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Parse {
        path: path.into(),
        line: 0,
        msg,
    };
    if buf.len() < 16 || &buf[..8] != BINARY_MAGIC {
        return Err(bad("not a binary packet stream".into()));
    }
    let n = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    if buf.len() != 16 + n * BINARY_RECORD {
        return Err(bad(format!(
            "expected {n} records, file has {} bytes",
            buf.len()
        )));
    }
    buf[16..]
        .chunks_exact(BINARY_RECORD)
        .map(|c| decode(c).map_err(&bad))
        .collect()
}

/// Picks the reader by extension: `.bin` is binary, anything else text.
pub fn read_stream(path: &Path) -> Result<Vec<PacketRecord>> {
    if path.extension().is_some_and(|e| e == "bin") {
        read_stream_bin(path)
    } else {
        read_stream_csv(path)
    }
}

pub fn write_stream(path: &Path, packets: &[PacketRecord]) -> Result<()> {
    if path.extension().is_some_and(|e| e == "bin") {
        write_stream_bin(path, packets)
    } else {
        write_stream_csv(path, packets)
    }
}
