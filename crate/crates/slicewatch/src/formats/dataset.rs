//! Feature dataset: the twelve named feature columns in order, then slice,
//! label, window start and the flow key.

use std::path::Path;

use slicewatch_core::features::{FeatureVector, FEATURE_NAMES, N_FEATURES};
use slicewatch_core::flow::FlowKey;
use slicewatch_core::{SliceId, WindowLabel};

use crate::error::{Error, Result};

pub const TRAILING_COLUMNS: [&str; 4] = ["slice", "label", "window_start_us", "flow"];

pub fn dataset_header() -> Vec<&'static str> {
    FEATURE_NAMES
        .iter()
        .chain(TRAILING_COLUMNS.iter())
        .copied()
        .collect()
}

pub fn write_dataset(path: &Path, rows: &[FeatureVector]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(dataset_header())
        .map_err(|e| csv_error(path, e))?;
    for r in rows {
        let mut rec: Vec<String> = r.values.iter().map(|v| v.to_string()).collect();
        rec.push(r.slice.to_string());
        rec.push(r.label.as_str().to_string());
        rec.push(r.window_start_us.to_string());
        rec.push(r.key.to_string());
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Parse {
            path: path.into(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        }
    }
}

pub fn read_dataset(path: &Path) -> Result<Vec<FeatureVector>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let expected = dataset_header();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            msg: format!("header must be `{}`", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |msg: String| Error::Parse {
            path: path.into(),
            line,
            msg,
        };
        let mut values = [0.0; N_FEATURES];
        for (j, v) in values.iter_mut().enumerate() {
            *v = rec[j]
                .parse()
                .map_err(|_| bad(format!("bad {} `{}`", FEATURE_NAMES[j], &rec[j])))?;
        }
        out.push(FeatureVector {
            values,
            slice: rec[N_FEATURES]
                .parse::<SliceId>()
                .map_err(|e| bad(e.to_string()))?,
            label: match &rec[N_FEATURES + 1] {
                "benign" => WindowLabel::Benign,
                "spoofed" => WindowLabel::Spoofed,
                other => return Err(bad(format!("bad label `{other}`"))),
            },
            window_start_us: rec[N_FEATURES + 2]
                .parse()
                .map_err(|_| bad("bad window_start_us".into()))?,
            key: rec[N_FEATURES + 3]
                .parse::<FlowKey>()
                .map_err(|e| bad(e.to_string()))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use slicewatch_core::eval::experiment::{build_labeled, CampaignSpec};

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = CampaignSpec {
            duration_s: 30.0,
            ..CampaignSpec::desk(0.2)
        };
        let rows = build_labeled(&spec, 3).unwrap().vectors;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset(&path, &rows).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            assert!(a
                .values
                .iter()
                .zip(&b.values)
                .all(|(x, y)| x.to_bits() == y.to_bits()));
            assert_eq!(
                (a.slice, a.label, a.window_start_us, a.key),
                (b.slice, b.label, b.window_start_us, b.key)
            );
        }
    }

    #[test]
    fn header_is_part_of_the_contract() {
        let h = dataset_header();
        assert_eq!(h.len(), 16);
        assert_eq!(h[0], "pkt_count");
        assert_eq!(&h[12..], &["slice", "label", "window_start_us", "flow"]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Parse { .. })));
    }
}
