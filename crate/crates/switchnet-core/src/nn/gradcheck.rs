//! Central finite-difference checks for every layer's backward pass.
//!
//! The relative gap per component is `|g_fd - g_an| / max(1, |g_fd|, |g_an|)`,
//! so components with O(1) gradients are compared relatively while dead units
//! (exact zero gradients) only need to beat the difference noise floor.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::conv::{conv_backward, conv_forward, Activation, ConvParams};
use super::perm::{square, vect};
use super::pm::{pm_backward, pm_forward, PmParams};
use super::switch::{switch_backward, switch_forward, SwitchParams};
use super::tensor::RealTensor;

/// Step for central differences.
pub const FD_STEP: f64 = 1e-6;
/// Acceptance threshold on the worst relative gap.
pub const FD_TOL: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct LayerCheck {
    pub name: String,
    pub max_rel_err: f64,
}

impl LayerCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= FD_TOL
    }
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Worst relative gap between `analytic` and central differences of `loss`
/// over every component of `params`.
pub fn check_gradient(
    mut loss: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
) -> f64 {
    assert_eq!(params.len(), analytic.len());
    let mut work = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + FD_STEP;
        let plus = loss(&work);
        work[i] = orig - FD_STEP;
        let minus = loss(&work);
        work[i] = orig;
        let fd = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max(rel_gap(fd, analytic[i]));
    }
    worst
}

fn random_cvec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn random_rvec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Real loss over a complex vector: weights pair with real and imaginary
/// parts, so the matching upstream gradient is `wr + i wi`.
fn complex_loss(out: &[Complex64], w: &[Complex64]) -> f64 {
    out.iter().zip(w).map(|(z, c)| z.re * c.re + z.im * c.im).sum()
}

fn real_loss(out: &[f64], w: &[f64]) -> f64 {
    out.iter().zip(w).map(|(a, b)| a * b).sum()
}

fn flatten_complex(z: &[Complex64]) -> Vec<f64> {
    z.iter().flat_map(|v| [v.re, v.im]).collect()
}

fn unflatten_complex(flat: &[f64]) -> Vec<Complex64> {
    flat.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

fn check_switch(rng: &mut ChaCha8Rng, out: &mut Vec<LayerCheck>) {
    let params = SwitchParams::glorot(2, 2, 4, 8, 16, rng).unwrap();
    let input = random_cvec(rng, 8);
    let w = random_cvec(rng, 16);

    let (_, tape) = switch_forward(&params, &input).unwrap();
    let (g_in, grads) = switch_backward(&params, &tape, &w).unwrap();

    let mut flat = Vec::new();
    params.write_params(&mut flat);
    let mut g_flat = Vec::new();
    grads.write(&mut g_flat);
    let loss_params = |p: &[f64]| {
        let mut layer = params.clone();
        let mut cursor = 0;
        layer.read_params(p, &mut cursor);
        let (o, _) = switch_forward(&layer, &input).unwrap();
        complex_loss(&o, &w)
    };
    out.push(LayerCheck {
        name: "switch/params".into(),
        max_rel_err: check_gradient(loss_params, &flat, &g_flat),
    });

    let loss_input = |zf: &[f64]| {
        let z = unflatten_complex(zf);
        let (o, _) = switch_forward(&params, &z).unwrap();
        complex_loss(&o, &w)
    };
    out.push(LayerCheck {
        name: "switch/input".into(),
        max_rel_err: check_gradient(loss_input, &flatten_complex(&input), &flatten_complex(&g_in)),
    });
}

fn check_conv(
    rng: &mut ChaCha8Rng,
    name: &str,
    window: usize,
    c_i: usize,
    c_o: usize,
    n: usize,
    activation: Activation,
    out: &mut Vec<LayerCheck>,
) {
    let params = ConvParams::glorot(window, c_i, c_o, activation, rng).unwrap();
    let input = RealTensor::from_vec(n, n, c_i, random_rvec(rng, n * n * c_i)).unwrap();
    let w = random_rvec(rng, n * n * c_o);

    let (_, tape) = conv_forward(&params, &input).unwrap();
    let g_out = RealTensor::from_vec(n, n, c_o, w.clone()).unwrap();
    let (g_in, grads) = conv_backward(&params, &tape, &g_out).unwrap();

    let mut flat = Vec::new();
    params.write_params(&mut flat);
    let mut g_flat = Vec::new();
    grads.write(&mut g_flat);
    let loss_params = |p: &[f64]| {
        let mut layer = params.clone();
        let mut cursor = 0;
        layer.read_params(p, &mut cursor);
        let (o, _) = conv_forward(&layer, &input).unwrap();
        real_loss(&o.data, &w)
    };
    out.push(LayerCheck {
        name: format!("{name}/params"),
        max_rel_err: check_gradient(loss_params, &flat, &g_flat),
    });

    let loss_input = |zf: &[f64]| {
        let z = RealTensor::from_vec(n, n, c_i, zf.to_vec()).unwrap();
        let (o, _) = conv_forward(&params, &z).unwrap();
        real_loss(&o.data, &w)
    };
    out.push(LayerCheck {
        name: format!("{name}/input"),
        max_rel_err: check_gradient(loss_input, &input.data, &g_in.data),
    });
}

fn check_pm(rng: &mut ChaCha8Rng, out: &mut Vec<LayerCheck>) {
    let n = 5;
    let params = PmParams {
        n,
        w: random_rvec(rng, n * n),
        b: random_rvec(rng, n * n),
    };
    let input = RealTensor::from_vec(n, n, 1, random_rvec(rng, n * n)).unwrap();
    let w = random_rvec(rng, n * n);

    let (_, tape) = pm_forward(&params, &input).unwrap();
    let g_out = RealTensor::from_vec(n, n, 1, w.clone()).unwrap();
    let (g_in, grads) = pm_backward(&params, &tape, &g_out).unwrap();

    let mut flat = Vec::new();
    params.write_params(&mut flat);
    let mut g_flat = Vec::new();
    grads.write(&mut g_flat);
    let loss_params = |p: &[f64]| {
        let mut layer = params.clone();
        let mut cursor = 0;
        layer.read_params(p, &mut cursor);
        let (o, _) = pm_forward(&layer, &input).unwrap();
        real_loss(&o.data, &w)
    };
    out.push(LayerCheck {
        name: "pm/params".into(),
        max_rel_err: check_gradient(loss_params, &flat, &g_flat),
    });

    let loss_input = |zf: &[f64]| {
        let z = RealTensor::from_vec(n, n, 1, zf.to_vec()).unwrap();
        let (o, _) = pm_forward(&params, &z).unwrap();
        real_loss(&o.data, &w)
    };
    out.push(LayerCheck {
        name: "pm/input".into(),
        max_rel_err: check_gradient(loss_input, &input.data, &g_in.data),
    });
}

fn check_perm(rng: &mut ChaCha8Rng, out: &mut Vec<LayerCheck>) {
    // vect/square carry no parameters; their backward is the inverse
    // permutation, checked here through the input gradient
    let (n, p) = (4usize, 4usize);
    let input = random_cvec(rng, n * n);
    let w = random_cvec(rng, n * n);

    let loss_vect = |zf: &[f64]| {
        let z = unflatten_complex(zf);
        complex_loss(&vect(&z, n, p).unwrap(), &w)
    };
    // gradient of vect is square applied to the upstream weights
    let g_vect = square(&w, n, p).unwrap();
    out.push(LayerCheck {
        name: "vect/input".into(),
        max_rel_err: check_gradient(loss_vect, &flatten_complex(&input), &flatten_complex(&g_vect)),
    });

    let loss_square = |zf: &[f64]| {
        let z = unflatten_complex(zf);
        complex_loss(&square(&z, n, p).unwrap(), &w)
    };
    let g_square = vect(&w, n, p).unwrap();
    out.push(LayerCheck {
        name: "square/input".into(),
        max_rel_err: check_gradient(
            loss_square,
            &flatten_complex(&input),
            &flatten_complex(&g_square),
        ),
    });
}

/// Finite-difference check of every layer, including the even conv window
/// used by the reference models. Returns one entry per checked gradient.
pub fn run_layer_checks(seed: u64) -> Vec<LayerCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    check_switch(&mut rng, &mut out);
    check_conv(&mut rng, "conv-relu-w3", 3, 2, 3, 6, Activation::Relu, &mut out);
    check_conv(&mut rng, "conv-linear-w3", 3, 3, 1, 6, Activation::Linear, &mut out);
    check_conv(&mut rng, "conv-relu-w10", 10, 1, 2, 12, Activation::Relu, &mut out);
    check_pm(&mut rng, &mut out);
    check_perm(&mut rng, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_passes_finite_difference_check() {
        for check in run_layer_checks(7) {
            assert!(
                check.passed(),
                "{} failed: max relative error {}",
                check.name,
                check.max_rel_err
            );
        }
    }

    #[test]
    fn checks_catch_a_broken_gradient() {
        // sanity: corrupting the analytic gradient must trip the detector
        let loss = |p: &[f64]| p[0] * p[0] + 3.0 * p[1];
        let params = [0.7, -0.2];
        let good = [2.0 * 0.7, 3.0];
        assert!(check_gradient(loss, &params, &good) <= FD_TOL);
        let bad = [2.0 * 0.7 + 0.05, 3.0];
        assert!(check_gradient(loss, &params, &bad) > FD_TOL);
    }
}
