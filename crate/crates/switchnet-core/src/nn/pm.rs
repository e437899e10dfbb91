//! Pointwise multiplication layer: `out(k1,k2) = W(k1,k2) z(k1,k2) + b(k1,k2)`,
//! no activation. Captures position-dependent scaling that a convolution
//! cannot, used by the seismic models.

use crate::error::{Error, Result};

use super::tensor::RealTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct PmParams {
    pub n: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl PmParams {
    /// Identity initialization (W = 1, b = 0), a pass-through before training.
    pub fn identity(n: usize) -> Self {
        PmParams { n, w: vec![1.0; n * n], b: vec![0.0; n * n] }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.w);
        out.extend_from_slice(&self.b);
    }

    pub fn read_params(&mut self, src: &[f64], cursor: &mut usize) {
        let len = self.w.len();
        self.w.copy_from_slice(&src[*cursor..*cursor + len]);
        *cursor += len;
        let len = self.b.len();
        self.b.copy_from_slice(&src[*cursor..*cursor + len]);
        *cursor += len;
    }
}

#[derive(Debug, Clone)]
pub struct PmTape {
    input: RealTensor,
}

pub fn pm_forward(p: &PmParams, z: &RealTensor) -> Result<(RealTensor, PmTape)> {
    if z.h != p.n || z.w != p.n || z.c != 1 {
        return Err(Error::shape(
            "pm input",
            format!("{}x{}x1", p.n, p.n),
            format!("{}x{}x{}", z.h, z.w, z.c),
        ));
    }
    let mut out = RealTensor::zeros(p.n, p.n, 1);
    for (o, ((w, b), zv)) in out.data.iter_mut().zip(p.w.iter().zip(&p.b).zip(&z.data)) {
        *o = w * zv + b;
    }
    Ok((out, PmTape { input: z.clone() }))
}

#[derive(Debug, Clone)]
pub struct PmGrads {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl PmGrads {
    pub fn zeros_like(p: &PmParams) -> Self {
        PmGrads { w: vec![0.0; p.w.len()], b: vec![0.0; p.b.len()] }
    }

    pub fn write(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.w);
        out.extend_from_slice(&self.b);
    }

    pub fn accumulate(&mut self, other: &PmGrads) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            *a += b;
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            *a += b;
        }
    }
}

pub fn pm_backward(p: &PmParams, tape: &PmTape, g_out: &RealTensor) -> Result<(RealTensor, PmGrads)> {
    if g_out.h != p.n || g_out.w != p.n || g_out.c != 1 {
        return Err(Error::shape(
            "pm grad",
            format!("{}x{}x1", p.n, p.n),
            format!("{}x{}x{}", g_out.h, g_out.w, g_out.c),
        ));
    }
    let mut grads = PmGrads::zeros_like(p);
    let mut g_in = RealTensor::zeros(p.n, p.n, 1);
    for i in 0..p.n * p.n {
        let d = g_out.data[i];
        grads.w[i] = d * tape.input.data[i];
        grads.b[i] = d;
        g_in.data[i] = d * p.w[i];
    }
    Ok((g_in, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_pass_bias() {
        let mut p = PmParams::identity(3);
        p.w.iter_mut().for_each(|w| *w = 0.0);
        p.b = (0..9).map(|k| k as f64).collect();
        let z = RealTensor::from_vec(3, 3, 1, vec![5.0; 9]).unwrap();
        let (out, _) = pm_forward(&p, &z).unwrap();
        assert_eq!(out.data, p.b);
    }

    #[test]
    fn identity_params_pass_input() {
        let p = PmParams::identity(2);
        let z = RealTensor::from_vec(2, 2, 1, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let (out, _) = pm_forward(&p, &z).unwrap();
        assert_eq!(out.data, z.data);
    }

    #[test]
    fn matches_elementwise_oracle() {
        let p = PmParams {
            n: 4,
            w: (0..16).map(|k| (k as f64 * 0.29).sin()).collect(),
            b: (0..16).map(|k| (k as f64 * 0.53).cos()).collect(),
        };
        let z = RealTensor::from_vec(4, 4, 1, (0..16).map(|k| k as f64 * 0.11 - 0.7).collect())
            .unwrap();
        let (out, _) = pm_forward(&p, &z).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let k = i * 4 + j;
                let expect = p.w[k] * z.data[k] + p.b[k];
                assert!((out.at(i, j, 0) - expect).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn backward_shapes_and_values() {
        let p = PmParams {
            n: 2,
            w: vec![2.0, -1.0, 0.5, 3.0],
            b: vec![0.0; 4],
        };
        let z = RealTensor::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (_, tape) = pm_forward(&p, &z).unwrap();
        let g = RealTensor::from_vec(2, 2, 1, vec![1.0, 1.0, -1.0, 0.5]).unwrap();
        let (g_in, grads) = pm_backward(&p, &tape, &g).unwrap();
        assert_eq!(g_in.data, vec![2.0, -1.0, -0.5, 1.5]);
        assert_eq!(grads.w, vec![1.0, 2.0, -3.0, 2.0]);
        assert_eq!(grads.b, g.data);
    }
}
