//! Stride-1 zero-padded convolution layer (cross-correlation form) with an
//! optional ReLU.
//!
//! Taps cover `l - k` in `[-floor((w-1)/2), ceil((w-1)/2)]`, which reduces to
//! the symmetric window for odd `w` and puts the extra tap on the right for
//! even `w`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::glorot_scale;
use super::tensor::RealTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub window: usize,
    pub c_i: usize,
    pub c_o: usize,
    /// `window x window x c_i x c_o`, last index fastest.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl ConvParams {
    pub fn zeros(window: usize, c_i: usize, c_o: usize, activation: Activation) -> Result<Self> {
        if window == 0 || c_i == 0 || c_o == 0 {
            return Err(Error::config(format!(
                "conv needs positive window and channel counts, got w={window}, c_i={c_i}, c_o={c_o}"
            )));
        }
        Ok(ConvParams {
            window,
            c_i,
            c_o,
            weights: vec![0.0; window * window * c_i * c_o],
            bias: vec![0.0; c_o],
            activation,
        })
    }

    pub fn glorot(
        window: usize,
        c_i: usize,
        c_o: usize,
        activation: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Self::glorot_scaled(window, c_i, c_o, activation, rng, 1.0)
    }

    /// Glorot draw with an extra multiplier on the half-width. Output heads
    /// use a small multiplier so training starts near zero output without
    /// dead upstream units.
    pub fn glorot_scaled(
        window: usize,
        c_i: usize,
        c_o: usize,
        activation: Activation,
        rng: &mut ChaCha8Rng,
        scale: f64,
    ) -> Result<Self> {
        let mut p = Self::zeros(window, c_i, c_o, activation)?;
        let s = scale * glorot_scale(window * window * c_i, window * window * c_o);
        for w in p.weights.iter_mut() {
            *w = rng.random_range(-s..s);
        }
        Ok(p)
    }

    #[cfg(test)]
    fn w_at(&self, o1: usize, o2: usize, l3: usize, k3: usize) -> f64 {
        self.weights[((o1 * self.window + o2) * self.c_i + l3) * self.c_o + k3]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.weights);
        out.extend_from_slice(&self.bias);
    }

    pub fn read_params(&mut self, src: &[f64], cursor: &mut usize) {
        let len = self.weights.len();
        self.weights.copy_from_slice(&src[*cursor..*cursor + len]);
        *cursor += len;
        let len = self.bias.len();
        self.bias.copy_from_slice(&src[*cursor..*cursor + len]);
        *cursor += len;
    }
}

#[derive(Debug, Clone)]
pub struct ConvTape {
    input: RealTensor,
    /// Pre-activation values; the ReLU mask is recovered from their sign.
    pre: RealTensor,
}

pub fn conv_forward(p: &ConvParams, z: &RealTensor) -> Result<(RealTensor, ConvTape)> {
    if z.c != p.c_i {
        return Err(Error::shape("conv input", format!("{} channels", p.c_i), format!("{}", z.c)));
    }
    let (n1, n2) = (z.h, z.w);
    let off = (p.window - 1) / 2;
    let mut pre = RealTensor::zeros(n1, n2, p.c_o);

    for k1 in 0..n1 {
        for k2 in 0..n2 {
            let out_base = (k1 * n2 + k2) * p.c_o;
            pre.data[out_base..out_base + p.c_o].copy_from_slice(&p.bias);
            for o1 in 0..p.window {
                let l1 = k1 + o1;
                if l1 < off || l1 - off >= n1 {
                    continue;
                }
                let l1 = l1 - off;
                for o2 in 0..p.window {
                    let l2 = k2 + o2;
                    if l2 < off || l2 - off >= n2 {
                        continue;
                    }
                    let l2 = l2 - off;
                    let in_base = (l1 * n2 + l2) * p.c_i;
                    let w_base = (o1 * p.window + o2) * p.c_i * p.c_o;
                    for l3 in 0..p.c_i {
                        let zv = z.data[in_base + l3];
                        if zv == 0.0 {
                            continue;
                        }
                        let w_row = &p.weights[w_base + l3 * p.c_o..w_base + (l3 + 1) * p.c_o];
                        let acc = &mut pre.data[out_base..out_base + p.c_o];
                        for (a, w) in acc.iter_mut().zip(w_row) {
                            *a += w * zv;
                        }
                    }
                }
            }
        }
    }

    let mut out = pre.clone();
    if p.activation == Activation::Relu {
        for v in out.data.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    Ok((out, ConvTape { input: z.clone(), pre }))
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvGrads {
    pub fn zeros_like(p: &ConvParams) -> Self {
        ConvGrads { weights: vec![0.0; p.weights.len()], bias: vec![0.0; p.bias.len()] }
    }

    pub fn write(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.weights);
        out.extend_from_slice(&self.bias);
    }

    pub fn accumulate(&mut self, other: &ConvGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }
}

pub fn conv_backward(
    p: &ConvParams,
    tape: &ConvTape,
    g_out: &RealTensor,
) -> Result<(RealTensor, ConvGrads)> {
    let z = &tape.input;
    let (n1, n2) = (z.h, z.w);
    if g_out.h != n1 || g_out.w != n2 || g_out.c != p.c_o {
        return Err(Error::shape(
            "conv grad",
            format!("{n1}x{n2}x{}", p.c_o),
            format!("{}x{}x{}", g_out.h, g_out.w, g_out.c),
        ));
    }
    let off = (p.window - 1) / 2;

    // activation backward: ReLU passes gradient where the pre-activation is positive
    let mut delta = g_out.clone();
    if p.activation == Activation::Relu {
        for (d, &pre) in delta.data.iter_mut().zip(&tape.pre.data) {
            if pre <= 0.0 {
                *d = 0.0;
            }
        }
    }

    let mut grads = ConvGrads::zeros_like(p);
    for k3 in 0..p.c_o {
        let mut acc = 0.0;
        for k1 in 0..n1 {
            for k2 in 0..n2 {
                acc += delta.at(k1, k2, k3);
            }
        }
        grads.bias[k3] = acc;
    }

    let mut g_in = RealTensor::zeros(n1, n2, p.c_i);
    for k1 in 0..n1 {
        for k2 in 0..n2 {
            let d_base = (k1 * n2 + k2) * p.c_o;
            for o1 in 0..p.window {
                let l1 = k1 + o1;
                if l1 < off || l1 - off >= n1 {
                    continue;
                }
                let l1 = l1 - off;
                for o2 in 0..p.window {
                    let l2 = k2 + o2;
                    if l2 < off || l2 - off >= n2 {
                        continue;
                    }
                    let l2 = l2 - off;
                    let in_base = (l1 * n2 + l2) * p.c_i;
                    let w_base = (o1 * p.window + o2) * p.c_i * p.c_o;
                    for l3 in 0..p.c_i {
                        let zv = z.data[in_base + l3];
                        let w_row = &p.weights[w_base + l3 * p.c_o..w_base + (l3 + 1) * p.c_o];
                        let gw_row =
                            &mut grads.weights[w_base + l3 * p.c_o..w_base + (l3 + 1) * p.c_o];
                        let deltas = &delta.data[d_base..d_base + p.c_o];
                        let mut g_acc = 0.0;
                        for ((gw, w), d) in gw_row.iter_mut().zip(w_row).zip(deltas) {
                            *gw += d * zv;
                            g_acc += w * d;
                        }
                        g_in.data[in_base + l3] += g_acc;
                    }
                }
            }
        }
    }

    Ok((g_in, grads))
}
