//! Attacker event log: one JSON object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use slicewatch_core::attack::{AttackEvent, AttackStrategy, FieldSet};
use slicewatch_core::flow::FlowKey;
use slicewatch_core::SliceId;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EventLine {
    event_id: u32,
    ts_start_us: u64,
    ts_end_us: u64,
    strategy: AttackStrategy,
    forged_fields: FieldSet,
    flow_key: String,
    slice: SliceId,
}

pub fn write_events(path: &Path, events: &[AttackEvent]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in events {
        let line = EventLine {
            event_id: e.event_id,
            ts_start_us: e.ts_start_us,
            ts_end_us: e.ts_end_us,
            strategy: e.strategy,
            forged_fields: e.forged_fields,
            flow_key: e.flow_key.to_string(),
            slice: e.slice,
        };
        let text = serde_json::to_string(&line).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "{text}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_events(path: &Path) -> Result<Vec<AttackEvent>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse {
            path: path.into(),
            line: i as u64 + 1,
            msg,
        };
        let e: EventLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        out.push(AttackEvent {
            event_id: e.event_id,
            ts_start_us: e.ts_start_us,
            ts_end_us: e.ts_end_us,
            strategy: e.strategy,
            forged_fields: e.forged_fields,
            flow_key: e
                .flow_key
                .parse::<FlowKey>()
                .map_err(|e| bad(e.to_string()))?,
            slice: e.slice,
        });
    }
    Ok(out)
}
