//! Scratch experiment loop for calibrating the desk-scale training runs.
//! Run: cargo run --release -p switchnet-core --example pilot -- <train.ds> <test.ds> <lr> <epochs> <init> <normalize>

use std::path::Path;

use switchnet_core::born::{build_factorization, BornOperator};
use switchnet_core::data;
use switchnet_core::domain::{make_directions, make_partition, make_receiver_line, GridSpec};
use switchnet_core::helmholtz::{BackgroundModel, PmlSpec, SeismicBackground};
use switchnet_core::model::{
    build, model_backward, model_forward, InitMode, MapDirection, ModelGrads, ModelIo, ModelKind,
    ModelSpec,
};
use switchnet_core::nn::AdamState;
use switchnet_core::train::evaluate;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let train_path = &args[1];
    let test_path = &args[2];
    let lr: f64 = args[3].parse().unwrap();
    let epochs: usize = args[4].parse().unwrap();
    let init = match args[5].as_str() {
        "glorot" => InitMode::Glorot,
        _ => InitMode::FromFactorization,
    };
    let normalize: bool = args[6].parse().unwrap();

    let train_ds = data::read_file(Path::new(train_path)).unwrap();
    let test_ds = data::read_file(Path::new(test_path)).unwrap();
    let spec = ModelSpec {
        kind: train_ds.kind,
        direction: MapDirection::Inverse,
        t: 3,
        p_d: 16,
        p_x: 16,
        n: train_ds.n,
        m: train_ds.m,
        window: 5,
        alpha: 8,
        layers: 3,
        init,
    };

    let factorization = match init {
        InitMode::FromFactorization => {
            let grid = GridSpec::new(train_ds.n, train_ds.omega).unwrap();
            let op = match train_ds.kind {
                ModelKind::FarField => {
                    let dirs = make_directions(train_ds.m).unwrap();
                    BornOperator::far_field(&grid, &dirs).unwrap()
                }
                ModelKind::Seismic => {
                    let pml = PmlSpec::default_for(train_ds.omega);
                    let model = BackgroundModel::free_space(&grid, train_ds.omega, pml).unwrap();
                    let line = make_receiver_line(train_ds.m, 0.45, &grid).unwrap();
                    let background = SeismicBackground::new(&model, &grid, &line).unwrap();
                    BornOperator::seismic(&background).unwrap()
                }
            };
            let d_part = make_partition(spec.m, spec.p_d).unwrap();
            let x_part = make_partition(spec.n, spec.p_x).unwrap();
            Some(build_factorization(&op, &d_part, &x_part, spec.t).unwrap())
        }
        InitMode::Glorot => None,
    };

    let scale = if normalize {
        train_ds
            .samples
            .iter()
            .flat_map(|s| s.d.iter())
            .map(|z| z.norm())
            .fold(0.0f64, f64::max)
    } else {
        1.0
    };
    println!("input scale: {scale}");

    let mut params = build(&spec, 1, factorization.as_ref()).unwrap();
    let mut flat = params.flat_params();
    let mut adam = AdamState::new(flat.len(), lr);
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(123);

    let batch = 32usize;
    let mut indices: Vec<usize> = (0..train_ds.len()).collect();
    for epoch in 0..epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut nbatches = 0;
        for chunk in indices.chunks(batch) {
            let mut total = ModelGrads::zeros_like(&params);
            let mut batch_loss = 0.0;
            for &i in chunk {
                let s = &train_ds.samples[i];
                let input = ModelIo::Pattern(s.d.iter().map(|z| z / scale).collect());
                let (out, tape) = model_forward(&params, &input).unwrap();
                let pred = match &out {
                    ModelIo::Field(v) => v.clone(),
                    _ => unreachable!(),
                };
                let len = pred.len() as f64;
                let mut loss = 0.0;
                let grad: Vec<f64> = pred
                    .iter()
                    .zip(&s.eta)
                    .map(|(p, t)| {
                        let d = p - t;
                        loss += d * d;
                        2.0 * d / len
                    })
                    .collect();
                batch_loss += loss / len;
                let (grads, _) = model_backward(&params, &tape, &ModelIo::Field(grad)).unwrap();
                total.accumulate(&grads);
            }
            let inv_b = 1.0 / chunk.len() as f64;
            let mut g_flat = total.flat();
            g_flat.iter_mut().for_each(|g| *g *= inv_b);
            adam.apply(&mut flat, &g_flat);
            params.read_params(&flat).unwrap();
            epoch_loss += batch_loss * inv_b;
            nbatches += 1;

            if epoch == 0 && nbatches <= 3 {
                // per-layer gradient summary at the start
                let switch_len = params.switch.param_count();
                let g_switch: f64 =
                    g_flat[..switch_len].iter().map(|g| g * g).sum::<f64>().sqrt();
                let g_rest: f64 =
                    g_flat[switch_len..].iter().map(|g| g * g).sum::<f64>().sqrt();
                println!(
                    "  step {nbatches}: batch loss {:.3e}, |g_switch| {:.3e}, |g_conv| {:.3e}",
                    batch_loss * inv_b,
                    g_switch,
                    g_rest
                );
            }
        }
        if epoch % 10 == 0 || epoch == epochs - 1 {
            let m_test = evaluate(&params, &test_ds, normalize).unwrap();
            let m_train_head = {
                let head = data::Dataset {
                    samples: train_ds.samples[..100].to_vec(),
                    ..train_ds.clone()
                };
                evaluate(&params, &head, normalize).unwrap()
            };
            println!(
                "epoch {epoch:3}: loss {:.4e}, train[0..100] rel {:.4}, test rel {:.4}",
                epoch_loss / nbatches as f64,
                m_train_head.mean_rel_error,
                m_test.mean_rel_error
            );
        }
    }
}
