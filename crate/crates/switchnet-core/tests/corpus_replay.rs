//! Replay the checked-in fuzz corpus seeds through the same oracles the fuzz
//! targets assert, so the round-trip contracts are exercised in regular CI
//! runs as well.

use std::fs;
use std::path::PathBuf;

use switchnet_core::model::ModelSpec;
use switchnet_core::plot::{parse_csv, to_csv};
use switchnet_core::{checkpoint, data};

fn corpus(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out = Vec::new();
    for entry in fs::read_dir(&dir).unwrap_or_else(|e| panic!("missing corpus {dir:?}: {e}")) {
        let path = entry.unwrap().path();
        if path.is_file() {
            let bytes = fs::read(&path).unwrap();
            out.push((path, bytes));
        }
    }
    assert!(!out.is_empty(), "no seeds under {dir:?}");
    out
}

#[test]
fn dataset_seeds_round_trip() {
    for (path, bytes) in corpus("dataset_decode") {
        let ds = data::decode(&bytes).unwrap_or_else(|e| panic!("{path:?}: {e}"));
        assert_eq!(data::encode(&ds), bytes, "{path:?} must round-trip byte-exactly");
    }
}

#[test]
fn checkpoint_seeds_round_trip() {
    for (path, bytes) in corpus("checkpoint_decode") {
        let params = checkpoint::decode(&bytes).unwrap_or_else(|e| panic!("{path:?}: {e}"));
        assert_eq!(checkpoint::encode(&params), bytes, "{path:?} must round-trip byte-exactly");
    }
}

#[test]
fn model_spec_seeds_round_trip() {
    for (path, bytes) in corpus("model_spec_parse") {
        let text = std::str::from_utf8(&bytes).unwrap();
        let spec = ModelSpec::parse(text).unwrap_or_else(|e| panic!("{path:?}: {e}"));
        assert_eq!(ModelSpec::parse(&spec.to_text()).unwrap(), spec);
    }
}

#[test]
fn csv_seeds_round_trip() {
    for (path, bytes) in corpus("csv_parse") {
        let text = std::str::from_utf8(&bytes).unwrap();
        let rows = parse_csv(text).unwrap_or_else(|e| panic!("{path:?}: {e}"));
        let cols = rows[0].len();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let rendered = to_csv(&flat, rows.len(), cols).unwrap();
        let back: Vec<f64> = parse_csv(&rendered).unwrap().into_iter().flatten().collect();
        assert_eq!(
            flat.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            back.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
