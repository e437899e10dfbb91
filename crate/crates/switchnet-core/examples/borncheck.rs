//! Scratch check: Born deviation of generated data and FBP on synthetic
//! linear data. Run: ... --example borncheck -- <kind> <beta>

use num_complex::Complex64;
use switchnet_core::born::{filtered_backprojection, BornOperator};
use switchnet_core::domain::{
    make_directions, make_receiver_line, sample_scatterer, GaussianMixtureSpec, GridSpec, Rect,
    ScatteringPattern,
};
use switchnet_core::helmholtz::{gen_farfield, gen_seismic, BackgroundModel, PmlSpec, SeismicBackground};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let kind = args[1].as_str();
    let beta: f64 = args[2].parse().unwrap();

    let omega = 24.0;
    let grid = GridSpec::new(32, omega).unwrap();
    let pml = PmlSpec::default_for(omega);
    let model = BackgroundModel::free_space(&grid, omega, pml).unwrap();
    let region = if kind == "seismic" {
        Rect::new(-0.5, 0.5, -0.5, 0.25).unwrap()
    } else {
        Rect::new(-0.5, 0.5, -0.5, 0.5).unwrap()
    };
    let mixture = GaussianMixtureSpec::with_params(2, beta, 0.0375, region).unwrap();
    let eta = sample_scatterer(&mixture, &grid, 4242).unwrap();

    let (op, d) = if kind == "seismic" {
        let line = make_receiver_line(32, 0.45, &grid).unwrap();
        let bg = SeismicBackground::new(&model, &grid, &line).unwrap();
        let op = BornOperator::seismic(&bg).unwrap();
        let d = gen_seismic(&eta, &model, &bg).unwrap();
        (op, d)
    } else {
        let dirs = make_directions(32).unwrap();
        let op = BornOperator::far_field(&grid, &dirs).unwrap();
        let d = gen_farfield(&eta, &model, &dirs, &dirs).unwrap();
        (op, d)
    };

    let born = op.apply_field(&eta).unwrap();
    let num: f64 = d
        .values
        .iter()
        .zip(&born.values)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let den = born.norm();
    println!("beta {beta}: |d - A eta| / |A eta| = {:.4e}", num / den);

    // FBP on the exactly linear data
    let a_fro2: f64 = {
        let dense = op.dense();
        dense.fro_norm().powi(2)
    };
    for eps_rel in [1e-8, 1e-6, 1e-4, 1e-2] {
        let eps = eps_rel * a_fro2;
        let bp = filtered_backprojection(
            &op,
            &ScatteringPattern::from_values(32, born.values.clone()).unwrap(),
            eps,
        )
        .unwrap();
        let err: f64 = bp
            .field
            .values
            .iter()
            .zip(&eta.values)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            .sqrt()
            / eta.norm();
        println!(
            "  fbp on A*eta, eps = {eps_rel:.0e} * |A|_F^2: rel err {:.4} ({} iters, converged {})",
            err, bp.iterations, bp.converged
        );
    }
}
