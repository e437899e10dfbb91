//! Regenerate the checked-in fuzz corpus seeds.
//! Run: cargo run -p switchnet-core --example make_fuzz_seeds -- <fuzz/corpus dir>

use std::fs;
use std::path::PathBuf;

use switchnet_core::data::{self, Dataset, GenerateConfig, SamplePair};
use switchnet_core::domain::{GaussianMixtureSpec, GridSpec, Rect};
use switchnet_core::helmholtz::PmlSpec;
use switchnet_core::model::{build, InitMode, MapDirection, ModelKind, ModelSpec};
use switchnet_core::{checkpoint, plot};

fn main() {
    let root: PathBuf = std::env::args().nth(1).expect("corpus directory").into();

    // dataset seeds: a tiny real far-field dataset and a header-only file
    let dir = root.join("dataset_decode");
    fs::create_dir_all(&dir).unwrap();
    let grid = GridSpec::new(4, 2.0).unwrap();
    let cfg = GenerateConfig {
        kind: ModelKind::FarField,
        count: 1,
        grid,
        m: 2,
        mixture: GaussianMixtureSpec::with_params(
            1,
            0.1,
            0.1,
            Rect::new(-0.2, 0.2, -0.2, 0.2).unwrap(),
        )
        .unwrap(),
        pml: PmlSpec::default_for(2.0),
        line_depth: 0.45,
        seed: 1,
    };
    let ds = data::generate(&cfg).unwrap();
    fs::write(dir.join("farfield_one_sample.bin"), data::encode(&ds)).unwrap();
    let empty = Dataset {
        kind: ModelKind::Seismic,
        n: 4,
        m: 3,
        omega: 8.0,
        flags: 0,
        samples: Vec::<SamplePair>::new(),
    };
    fs::write(dir.join("header_only.bin"), data::encode(&empty)).unwrap();

    // checkpoint seed: a tiny built model
    let dir = root.join("checkpoint_decode");
    fs::create_dir_all(&dir).unwrap();
    let spec = ModelSpec {
        kind: ModelKind::Seismic,
        direction: MapDirection::Inverse,
        t: 1,
        p_d: 1,
        p_x: 1,
        n: 2,
        m: 2,
        window: 1,
        alpha: 1,
        layers: 1,
        init: InitMode::Glorot,
    };
    let params = build(&spec, 7, None).unwrap();
    fs::write(dir.join("tiny_model.bin"), checkpoint::encode(&params)).unwrap();

    // model-spec text seed
    let dir = root.join("model_spec_parse");
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join("tiny_model.txt"), spec.to_text()).unwrap();

    // csv seed
    let dir = root.join("csv_parse");
    fs::create_dir_all(&dir).unwrap();
    let table = plot::to_csv(&[0.0, 1.5, -2.25, 1.0 / 3.0, 1e-12, 42.0], 2, 3).unwrap();
    fs::write(dir.join("small_table.csv"), table).unwrap();

    println!("seeds written under {}", root.display());
}
