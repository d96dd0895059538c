use proptest::prelude::*;

use slicewatch::formats::{
    self, read_dataset, read_events, read_stream, write_dataset, write_events, write_stream,
};
use slicewatch_core::attack::{AttackEvent, AttackStrategy, FieldSet};
use slicewatch_core::features::{FeatureVector, N_FEATURES};
use slicewatch_core::flow::FlowKey;
use slicewatch_core::traffic::ScenarioConfig;
use slicewatch_core::{Addr, Imsi, Label, Mac, PacketRecord, Protocol, SliceId, WindowLabel};

fn slice() -> impl Strategy<Value = SliceId> {
    prop::sample::select(SliceId::ALL.to_vec())
}

fn key() -> impl Strategy<Value = FlowKey> {
    (
        any::<u64>(),
        any::<u64>(),
        any::<u16>(),
        any::<u16>(),
        any::<bool>(),
    )
        .prop_map(|(s, d, sp, dp, tcp)| FlowKey {
            src_addr: Addr(s),
            dst_addr: Addr(d),
            src_port: sp,
            dst_port: dp,
            protocol: if tcp { Protocol::Tcp } else { Protocol::Udp },
        })
}

fn packet() -> impl Strategy<Value = PacketRecord> {
    (
        0u64..10_000_000_000,
        key(),
        any::<u32>(),
        any::<u64>(),
        any::<u64>(),
        slice(),
        prop::sample::select(vec![Label::Benign, Label::Spoofed, Label::Replayed]),
        any::<u32>(),
    )
        .prop_map(|(ts, k, size, imsi, mac, slice, label, ev)| PacketRecord {
            ts_us: ts,
            src_addr: k.src_addr,
            dst_addr: k.dst_addr,
            src_port: k.src_port,
            dst_port: k.dst_port,
            protocol: k.protocol,
            size_bytes: size,
            imsi: Imsi(imsi),
            mac: Mac(mac),
            slice,
            label,
            attack_event_id: label.is_attack().then_some(ev),
        })
}

fn stream() -> impl Strategy<Value = Vec<PacketRecord>> {
    prop::collection::vec(packet(), 0..80).prop_map(|mut v| {
        v.sort_by_key(|p| p.ts_us);
        v
    })
}

fn finite() -> impl Strategy<Value = f64> {
    any::<f64>().prop_filter("finite", |v| v.is_finite())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn streams_round_trip_in_both_encodings(packets in stream()) {
        let d = tempfile::tempdir().unwrap();
        for name in ["s.csv", "s.bin"] {
            let p = d.path().join(name);
            write_stream(&p, &packets).unwrap();
            prop_assert_eq!(read_stream(&p).unwrap(), packets.clone());
        }
    }

    #[test]
    fn packet_lines_round_trip(p in packet()) {
        let line = formats::stream::format_packet(&p);
        prop_assert_eq!(formats::stream::parse_packet(&line).unwrap(), p);
    }

    #[test]
    fn events_round_trip(events in prop::collection::vec(
        (any::<u32>(), 0u64..1 << 40, 0u64..1 << 20, any::<bool>(), 0u8..8, key(), slice()),
        0..30,
    )) {
        let events: Vec<AttackEvent> = events
            .into_iter()
            .map(|(id, start, len, replay, bits, flow_key, slice)| AttackEvent {
                event_id: id,
                ts_start_us: start,
                ts_end_us: start + len,
                strategy: if replay { AttackStrategy::Replay } else { AttackStrategy::IdentityImpersonation },
                forged_fields: FieldSet::from_bits(bits).unwrap(),
                flow_key,
                slice,
            })
            .collect();
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("e.jsonl");
        write_events(&p, &events).unwrap();
        prop_assert_eq!(read_events(&p).unwrap(), events);
    }

    #[test]
    fn datasets_round_trip_bit_exact(rows in prop::collection::vec(
        (prop::collection::vec(finite(), N_FEATURES), slice(), any::<bool>(), any::<u64>(), key()),
        0..40,
    )) {
        let rows: Vec<FeatureVector> = rows
            .into_iter()
            .map(|(v, slice, spoofed, start, key)| FeatureVector {
                values: v.try_into().unwrap(),
                slice,
                label: WindowLabel::from_bool(spoofed),
                window_start_us: start,
                key,
            })
            .collect();
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("d.csv");
        write_dataset(&p, &rows).unwrap();
        let back = read_dataset(&p).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            prop_assert_eq!(a.values.map(f64::to_bits), b.values.map(f64::to_bits));
            prop_assert_eq!((a.slice, a.label, a.window_start_us, a.key), (b.slice, b.label, b.window_start_us, b.key));
        }
    }

    #[test]
    fn scenarios_round_trip(seed in any::<u64>(), secs in 1.0f64..2000.0, paper in any::<bool>()) {
        let mut c = if paper { ScenarioConfig::paper_scale(seed) } else { ScenarioConfig::desk_scale(seed) };
        c.duration_s = secs;
        let text = formats::config::scenario_to_toml(&c).unwrap();
        prop_assert_eq!(formats::config::scenario_from_toml(&text).unwrap(), c);
    }
}

#[test]
fn truncated_binary_stream_is_a_parse_error() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("s.bin");
    let mut c = ScenarioConfig::desk_scale(1);
    c.duration_s = 2.0;
    write_stream(&p, &c.generate().unwrap()).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(
        read_stream(&p),
        Err(slicewatch::Error::Parse { .. }) | Err(slicewatch::Error::Format(_))
    ));
}

#[test]
fn malformed_stream_line_names_its_line() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("s.csv");
    let mut text = formats::stream::header_line();
    text.push('\n');
    text.push_str("12,embb,not,a,packet\n");
    std::fs::write(&p, text).unwrap();
    match read_stream(&p) {
        Err(slicewatch::Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}
