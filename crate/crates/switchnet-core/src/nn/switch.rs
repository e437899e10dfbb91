//! The switch layer: a trainable map with the sparsity pattern of
//! `U Sigma V*`, wiring every input region to every output region through
//! rank-`t` channels.
//!
//! Forward, for input blocks `z^(a)` of length `n_I/P_I`:
//!
//! 1. `z1^(a) = U_a^T z^(a)` with `U_a` of shape `(n_I/P_I) x (t P_O)`,
//! 2. shuffle `z2[b t P_I + a t + k] = z1[a t P_O + b t + k]`,
//! 3. output block `b` is `V_b z2^(b)` with `V_b` of shape `(n_O/P_O) x (t P_I)`.
//!
//! Gradients use the convention `g = dL/dRe + i dL/dIm`, under which the
//! complex-linear stages backpropagate through the conjugated matrices and
//! real/imaginary parts of `U`, `V` act as independent real parameters.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::CMat;

use super::glorot_scale;

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchParams {
    pub t: usize,
    pub p_i: usize,
    pub p_o: usize,
    pub n_i: usize,
    pub n_o: usize,
    /// `P_I` blocks, each `(n_I/P_I) x (t P_O)`.
    pub u: Vec<CMat>,
    /// `P_O` blocks, each `(n_O/P_O) x (t P_I)`.
    pub v: Vec<CMat>,
}

impl SwitchParams {
    pub fn validate_dims(t: usize, p_i: usize, p_o: usize, n_i: usize, n_o: usize) -> Result<()> {
        if t == 0 {
            return Err(Error::config("switch layer needs t >= 1"));
        }
        if p_i == 0 || n_i % p_i != 0 {
            return Err(Error::config(format!("P_I = {p_i} must divide n_I = {n_i}")));
        }
        if p_o == 0 || n_o % p_o != 0 {
            return Err(Error::config(format!("P_O = {p_o} must divide n_O = {n_o}")));
        }
        Ok(())
    }

    pub fn zeros(t: usize, p_i: usize, p_o: usize, n_i: usize, n_o: usize) -> Result<Self> {
        Self::validate_dims(t, p_i, p_o, n_i, n_o)?;
        let u = (0..p_i).map(|_| CMat::zeros(n_i / p_i, t * p_o)).collect();
        let v = (0..p_o).map(|_| CMat::zeros(n_o / p_o, t * p_i)).collect();
        Ok(SwitchParams { t, p_i, p_o, n_i, n_o, u, v })
    }

    pub fn glorot(
        t: usize,
        p_i: usize,
        p_o: usize,
        n_i: usize,
        n_o: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut p = Self::zeros(t, p_i, p_o, n_i, n_o)?;
        let su = glorot_scale(n_i / p_i, t * p_o);
        for block in p.u.iter_mut() {
            for z in block.data.iter_mut() {
                *z = Complex64::new(rng.random_range(-su..su), rng.random_range(-su..su));
            }
        }
        let sv = glorot_scale(t * p_i, n_o / p_o);
        for block in p.v.iter_mut() {
            for z in block.data.iter_mut() {
                *z = Complex64::new(rng.random_range(-sv..sv), rng.random_range(-sv..sv));
            }
        }
        Ok(p)
    }

    /// Real parameter count `2t(P_O n_I + P_I n_O)`.
    pub fn param_count(&self) -> usize {
        2 * self.t * (self.p_o * self.n_i + self.p_i * self.n_o)
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        for block in self.u.iter().chain(self.v.iter()) {
            for z in &block.data {
                out.push(z.re);
                out.push(z.im);
            }
        }
    }

    pub fn read_params(&mut self, src: &[f64], cursor: &mut usize) {
        for block in self.u.iter_mut().chain(self.v.iter_mut()) {
            for z in block.data.iter_mut() {
                *z = Complex64::new(src[*cursor], src[*cursor + 1]);
                *cursor += 2;
            }
        }
    }

    /// Blockwise dense assembly `V Sigma U^T`; test oracles only.
    pub fn dense(&self) -> CMat {
        let t = self.t;
        let bi = self.n_i / self.p_i;
        let bo = self.n_o / self.p_o;
        let mut out = CMat::zeros(self.n_o, self.n_i);
        for b in 0..self.p_o {
            for a in 0..self.p_i {
                // output block (b, a) = V_b[:, a-slot] * U_a[:, b-slot]^T
                for r in 0..bo {
                    for c in 0..bi {
                        let mut acc = Complex64::ZERO;
                        for k in 0..t {
                            acc += self.v[b].at(r, a * t + k) * self.u[a].at(c, b * t + k);
                        }
                        out.set(b * bo + r, a * bi + c, acc);
                    }
                }
            }
        }
        out
    }
}

/// Forward intermediates needed by the backward pass.
#[derive(Debug, Clone)]
pub struct SwitchTape {
    input: Vec<Complex64>,
    z2: Vec<Complex64>,
}

pub fn switch_forward(p: &SwitchParams, z: &[Complex64]) -> Result<(Vec<Complex64>, SwitchTape)> {
    if z.len() != p.n_i {
        return Err(Error::shape("switch input", format!("{}", p.n_i), format!("{}", z.len())));
    }
    let t = p.t;
    let bi = p.n_i / p.p_i;
    let bo = p.n_o / p.p_o;

    let mut z1 = vec![Complex64::ZERO; p.p_i * t * p.p_o];
    for a in 0..p.p_i {
        let block = p.u[a].matvec_t(&z[a * bi..(a + 1) * bi]);
        z1[a * t * p.p_o..(a + 1) * t * p.p_o].copy_from_slice(&block);
    }

    let mut z2 = vec![Complex64::ZERO; p.p_o * t * p.p_i];
    for a in 0..p.p_i {
        for b in 0..p.p_o {
            for k in 0..t {
                z2[b * t * p.p_i + a * t + k] = z1[a * t * p.p_o + b * t + k];
            }
        }
    }

    let mut out = vec![Complex64::ZERO; p.n_o];
    for b in 0..p.p_o {
        let block = p.v[b].matvec(&z2[b * t * p.p_i..(b + 1) * t * p.p_i]);
        out[b * bo..(b + 1) * bo].copy_from_slice(&block);
    }

    Ok((out, SwitchTape { input: z.to_vec(), z2 }))
}

#[derive(Debug, Clone)]
pub struct SwitchGrads {
    pub u: Vec<CMat>,
    pub v: Vec<CMat>,
}

impl SwitchGrads {
    pub fn zeros_like(p: &SwitchParams) -> Self {
        SwitchGrads {
            u: p.u.iter().map(|b| CMat::zeros(b.rows, b.cols)).collect(),
            v: p.v.iter().map(|b| CMat::zeros(b.rows, b.cols)).collect(),
        }
    }

    pub fn write(&self, out: &mut Vec<f64>) {
        for block in self.u.iter().chain(self.v.iter()) {
            for z in &block.data {
                out.push(z.re);
                out.push(z.im);
            }
        }
    }

    pub fn accumulate(&mut self, other: &SwitchGrads) {
        for (a, b) in self.u.iter_mut().zip(&other.u) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
        for (a, b) in self.v.iter_mut().zip(&other.v) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }
}

/// Backward pass: upstream gradient on the output, returns the gradient on
/// the input plus parameter gradients.
pub fn switch_backward(
    p: &SwitchParams,
    tape: &SwitchTape,
    g_out: &[Complex64],
) -> Result<(Vec<Complex64>, SwitchGrads)> {
    if g_out.len() != p.n_o {
        return Err(Error::shape("switch grad", format!("{}", p.n_o), format!("{}", g_out.len())));
    }
    let t = p.t;
    let bi = p.n_i / p.p_i;
    let bo = p.n_o / p.p_o;
    let mut grads = SwitchGrads::zeros_like(p);

    // V stage: out_b = V_b w_b  =>  g_w = V_b^H g_out,  g_Vb = g_out w_b^H
    let mut g_z2 = vec![Complex64::ZERO; p.p_o * t * p.p_i];
    for b in 0..p.p_o {
        let g_block = &g_out[b * bo..(b + 1) * bo];
        let w_b = &tape.z2[b * t * p.p_i..(b + 1) * t * p.p_i];
        let g_w = p.v[b].matvec_h(g_block);
        g_z2[b * t * p.p_i..(b + 1) * t * p.p_i].copy_from_slice(&g_w);
        let gv = &mut grads.v[b];
        let cols = t * p.p_i;
        for r in 0..bo {
            let g = g_block[r];
            if g == Complex64::ZERO {
                continue;
            }
            let row = &mut gv.data[r * cols..(r + 1) * cols];
            for (slot, w) in row.iter_mut().zip(w_b) {
                *slot += g * w.conj();
            }
        }
    }

    // inverse shuffle
    let mut g_z1 = vec![Complex64::ZERO; p.p_i * t * p.p_o];
    for a in 0..p.p_i {
        for b in 0..p.p_o {
            for k in 0..t {
                g_z1[a * t * p.p_o + b * t + k] = g_z2[b * t * p.p_i + a * t + k];
            }
        }
    }

    // U stage: z1_a = U_a^T x_a  =>  g_x = conj(U_a) g_z1,  g_Ua = conj(x_a) g_z1^T
    let mut g_in = vec![Complex64::ZERO; p.n_i];
    for a in 0..p.p_i {
        let g_block = &g_z1[a * t * p.p_o..(a + 1) * t * p.p_o];
        let x_a = &tape.input[a * bi..(a + 1) * bi];
        let g_x = p.u[a].matvec_conj(g_block);
        g_in[a * bi..(a + 1) * bi].copy_from_slice(&g_x);
        let gu = &mut grads.u[a];
        let cols = t * p.p_o;
        for r in 0..bi {
            let xc = x_a[r].conj();
            if xc == Complex64::ZERO {
                continue;
            }
            let row = &mut gu.data[r * cols..(r + 1) * cols];
            for (slot, g) in row.iter_mut().zip(g_block) {
                *slot += xc * g;
            }
        }
    }

    Ok((g_in, grads))
}
