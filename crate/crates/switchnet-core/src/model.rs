//! End-to-end trainable models for the forward and inverse maps.
//!
//! The inverse pipeline is
//! `Vect[P_D] -> Switch[t,P_D,P_X,N^2] -> Square[P_X] -> split into 2 real
//! channels -> L x Conv[w,alpha] -> Conv[w,1] (linear) -> (seismic: PM)`,
//! and the forward pipeline reverses it:
//! `(seismic: PM) -> L x Conv[w,alpha] -> Conv[w,1] (linear) -> Vect[P_X] ->
//! Switch[t,P_X,P_D,M^2] -> Square[P_D]`.
//!
//! Patterns cross the switch stages as complex vectors; the two-real-channel
//! boundary feeds the convolution stack (channel 0 = real part, channel 1 =
//! imaginary part).

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::born::SwitchFactorization;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::nn::{
    conv_backward, conv_forward, pm_backward, pm_forward, square, switch_backward, switch_forward,
    vect, Activation, ConvGrads, ConvParams, ConvTape, PmGrads, PmParams, PmTape, RealTensor,
    SwitchGrads, SwitchParams, SwitchTape,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    FarField,
    Seismic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapDirection {
    /// data -> scatterer
    Inverse,
    /// scatterer -> data
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    Glorot,
    FromFactorization,
}

/// Hyperparameters of one assembled model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub direction: MapDirection,
    pub t: usize,
    pub p_d: usize,
    pub p_x: usize,
    pub n: usize,
    pub m: usize,
    pub window: usize,
    pub alpha: usize,
    pub layers: usize,
    pub init: InitMode,
}

fn is_square_divisor(p: usize, n: usize) -> bool {
    let sqrt_p = (p as f64).sqrt().round() as usize;
    p > 0 && sqrt_p * sqrt_p == p && n % sqrt_p == 0
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(Error::config("model needs t >= 1"));
        }
        if self.layers == 0 {
            return Err(Error::config("model needs L >= 1"));
        }
        if self.alpha == 0 {
            return Err(Error::config("model needs alpha >= 1"));
        }
        if self.window == 0 {
            return Err(Error::config("model needs window >= 1"));
        }
        if self.n < 2 || self.m == 0 {
            return Err(Error::config(format!(
                "model needs N >= 2 and M >= 1, got N = {}, M = {}",
                self.n, self.m
            )));
        }
        if !is_square_divisor(self.p_d, self.m) {
            return Err(Error::config(format!(
                "sqrt(P_D) must divide M: P_D = {}, M = {}",
                self.p_d, self.m
            )));
        }
        if !is_square_divisor(self.p_x, self.n) {
            return Err(Error::config(format!(
                "sqrt(P_X) must divide N: P_X = {}, N = {}",
                self.p_x, self.n
            )));
        }
        Ok(())
    }

    /// Switch-stage dimensions for this direction:
    /// `(n_i, p_i, n_o, p_o, first conv input channels)`.
    fn stage_dims(&self) -> (usize, usize, usize, usize, usize) {
        let n2 = self.n * self.n;
        let m2 = self.m * self.m;
        match self.direction {
            MapDirection::Inverse => (m2, self.p_d, n2, self.p_x, 2),
            MapDirection::Forward => (n2, self.p_x, m2, self.p_d, 1),
        }
    }

    pub fn to_text(&self) -> String {
        let kind = match self.kind {
            ModelKind::FarField => "far-field",
            ModelKind::Seismic => "seismic",
        };
        let direction = match self.direction {
            MapDirection::Inverse => "inverse",
            MapDirection::Forward => "forward",
        };
        let init = match self.init {
            InitMode::Glorot => "glorot",
            InitMode::FromFactorization => "from-factorization",
        };
        format!(
            "kind = {kind}\ndirection = {direction}\nt = {}\npd = {}\npx = {}\nn = {}\nm = {}\nwindow = {}\nalpha = {}\nlayers = {}\ninit = {init}\n",
            self.t, self.p_d, self.p_x, self.n, self.m, self.window, self.alpha, self.layers
        )
    }

    /// Parse the `key = value` text form. Unknown keys are rejected; every
    /// field must appear exactly once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut direction = None;
        let mut init = None;
        let mut nums: [Option<usize>; 8] = [None; 8];
        const KEYS: [&str; 8] = ["t", "pd", "px", "n", "m", "window", "alpha", "layers"];

        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "kind" => {
                    let v = match value {
                        "far-field" => ModelKind::FarField,
                        "seismic" => ModelKind::Seismic,
                        other => return Err(Error::format(format!("unknown kind `{other}`"))),
                    };
                    if kind.replace(v).is_some() {
                        return Err(Error::format("duplicate key `kind`"));
                    }
                }
                "direction" => {
                    let v = match value {
                        "inverse" => MapDirection::Inverse,
                        "forward" => MapDirection::Forward,
                        other => return Err(Error::format(format!("unknown direction `{other}`"))),
                    };
                    if direction.replace(v).is_some() {
                        return Err(Error::format("duplicate key `direction`"));
                    }
                }
                "init" => {
                    let v = match value {
                        "glorot" => InitMode::Glorot,
                        "from-factorization" => InitMode::FromFactorization,
                        other => return Err(Error::format(format!("unknown init `{other}`"))),
                    };
                    if init.replace(v).is_some() {
                        return Err(Error::format("duplicate key `init`"));
                    }
                }
                _ => {
                    let slot = KEYS
                        .iter()
                        .position(|&k| k == key)
                        .ok_or_else(|| Error::format(format!("unknown key `{key}`")))?;
                    let v: usize = value
                        .parse()
                        .map_err(|_| Error::format(format!("bad integer for `{key}`: `{value}`")))?;
                    if nums[slot].replace(v).is_some() {
                        return Err(Error::format(format!("duplicate key `{key}`")));
                    }
                }
            }
        }

        let missing = |name: &str| Error::format(format!("missing key `{name}`"));
        let spec = ModelSpec {
            kind: kind.ok_or_else(|| missing("kind"))?,
            direction: direction.ok_or_else(|| missing("direction"))?,
            t: nums[0].ok_or_else(|| missing("t"))?,
            p_d: nums[1].ok_or_else(|| missing("pd"))?,
            p_x: nums[2].ok_or_else(|| missing("px"))?,
            n: nums[3].ok_or_else(|| missing("n"))?,
            m: nums[4].ok_or_else(|| missing("m"))?,
            window: nums[5].ok_or_else(|| missing("window"))?,
            alpha: nums[6].ok_or_else(|| missing("alpha"))?,
            layers: nums[7].ok_or_else(|| missing("layers"))?,
            init: init.ok_or_else(|| missing("init"))?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Exact real-parameter total for a spec.
pub fn param_count(spec: &ModelSpec) -> usize {
    let (n_i, p_i, n_o, p_o, c_first) = spec.stage_dims();
    let switch = 2 * spec.t * (p_o * n_i + p_i * n_o);
    let w2 = spec.window * spec.window;
    let mut conv = w2 * c_first * spec.alpha + spec.alpha;
    conv += (spec.layers - 1) * (w2 * spec.alpha * spec.alpha + spec.alpha);
    conv += w2 * spec.alpha + 1;
    let pm = match spec.kind {
        ModelKind::Seismic => 2 * spec.n * spec.n,
        ModelKind::FarField => 0,
    };
    switch + conv + pm
}

/// Complex switch-stage entry count `t (P_O n_I + P_I n_O)`.
pub fn switch_complex_entries(spec: &ModelSpec) -> usize {
    let (n_i, p_i, n_o, p_o, _) = spec.stage_dims();
    spec.t * (p_o * n_i + p_i * n_o)
}

/// Trainable parameters of one assembled model, in pipeline order.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub spec: ModelSpec,
    pub switch: SwitchParams,
    /// `L` ReLU convolutions followed by the linear `Conv[w, 1]`.
    pub convs: Vec<ConvParams>,
    /// Present for seismic models.
    pub pm: Option<PmParams>,
}

/// Build a model, drawing Glorot weights from a generator seeded by `seed`.
/// `FromFactorization` requires a compatible factorization and copies its
/// switch blocks (adjoint orientation for inverse models); the convolution
/// stack stays Glorot-initialized and the PM stage starts as the identity.
pub fn build(
    spec: &ModelSpec,
    seed: u64,
    factorization: Option<&SwitchFactorization>,
) -> Result<ModelParams> {
    spec.validate()?;
    let (n_i, p_i, n_o, p_o, c_first) = spec.stage_dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut switch = SwitchParams::glorot(spec.t, p_i, p_o, n_i, n_o, &mut rng)?;
    match spec.init {
        InitMode::Glorot => {}
        InitMode::FromFactorization => {
            let f = factorization.ok_or_else(|| {
                Error::config("from-factorization init needs a switch factorization")
            })?;
            copy_factorization(spec, f, &mut switch)?;
        }
    }

    let mut convs = Vec::with_capacity(spec.layers + 1);
    let mut c_in = c_first;
    for _ in 0..spec.layers {
        convs.push(ConvParams::glorot(spec.window, c_in, spec.alpha, Activation::Relu, &mut rng)?);
        c_in = spec.alpha;
    }
    // small output head: training starts near zero output, which matches the
    // mostly-empty targets, while upstream activations stay alive
    convs.push(ConvParams::glorot_scaled(spec.window, c_in, 1, Activation::Linear, &mut rng, 0.01)?);

    let pm = match spec.kind {
        ModelKind::Seismic => Some(PmParams::identity(spec.n)),
        ModelKind::FarField => None,
    };

    Ok(ModelParams { spec: *spec, switch, convs, pm })
}

fn copy_factorization(
    spec: &ModelSpec,
    f: &SwitchFactorization,
    switch: &mut SwitchParams,
) -> Result<()> {
    if f.t != spec.t || f.m() != spec.m || f.n() != spec.n || f.d_part.p != spec.p_d || f.x_part.p != spec.p_x
    {
        return Err(Error::shape(
            "factorization init",
            format!(
                "t={}, M={}, N={}, P_D={}, P_X={}",
                spec.t, spec.m, spec.n, spec.p_d, spec.p_x
            ),
            format!(
                "t={}, M={}, N={}, P_D={}, P_X={}",
                f.t,
                f.m(),
                f.n(),
                f.d_part.p,
                f.x_part.p
            ),
        ));
    }
    let conj = |m: &CMat| CMat {
        rows: m.rows,
        cols: m.cols,
        data: m.data.iter().map(|z| z.conj()).collect(),
    };
    match spec.direction {
        // switch computes V Sigma* U^T z; to mimic A* = V Sigma* U* we need
        // the layer's U to be conj(U) and its V to be V
        MapDirection::Inverse => {
            switch.u = f.u.iter().map(conj).collect();
            switch.v = f.v.clone();
        }
        // to mimic A = U Sigma V*, the layer's U is conj(V) and its V is U
        MapDirection::Forward => {
            switch.u = f.v.iter().map(conj).collect();
            switch.v = f.u.clone();
        }
    }
    Ok(())
}

impl ModelParams {
    pub fn param_count(&self) -> usize {
        let conv: usize = self.convs.iter().map(|c| c.param_count()).sum();
        let pm = self.pm.as_ref().map_or(0, |p| p.param_count());
        self.switch.param_count() + conv + pm
    }

    /// Flatten all parameters in declaration order (switch U then V blocks as
    /// re/im pairs, convolutions in pipeline order, then PM).
    pub fn write_params(&self, out: &mut Vec<f64>) {
        self.switch.write_params(out);
        for c in &self.convs {
            c.write_params(out);
        }
        if let Some(pm) = &self.pm {
            pm.write_params(out);
        }
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.write_params(&mut out);
        out
    }

    pub fn read_params(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.param_count() {
            return Err(Error::shape(
                "model params",
                format!("{}", self.param_count()),
                format!("{}", src.len()),
            ));
        }
        let mut cursor = 0;
        self.switch.read_params(src, &mut cursor);
        for c in self.convs.iter_mut() {
            c.read_params(src, &mut cursor);
        }
        if let Some(pm) = self.pm.as_mut() {
            pm.read_params(src, &mut cursor);
        }
        Ok(())
    }
}

/// A value flowing into or out of a model.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelIo {
    /// Complex pattern, `M x M` row-major (receiver x source). Equivalent to
    /// an `M x M x 2` real tensor with channels (re, im).
    Pattern(Vec<Complex64>),
    /// Real field, `N x N` row-major.
    Field(Vec<f64>),
}

impl ModelIo {
    pub fn len_real(&self) -> usize {
        match self {
            ModelIo::Pattern(z) => 2 * z.len(),
            ModelIo::Field(v) => v.len(),
        }
    }

    /// View a pattern as its `M x M x 2` channel tensor.
    pub fn as_channels(&self, m: usize) -> Result<RealTensor> {
        match self {
            ModelIo::Pattern(z) => Ok(complex_to_channels(z, m)?),
            ModelIo::Field(_) => Err(Error::config("field output has a single channel")),
        }
    }
}

pub fn complex_to_channels(z: &[Complex64], n: usize) -> Result<RealTensor> {
    if z.len() != n * n {
        return Err(Error::shape("channel split", format!("{}", n * n), format!("{}", z.len())));
    }
    let mut t = RealTensor::zeros(n, n, 2);
    for (k, v) in z.iter().enumerate() {
        t.data[2 * k] = v.re;
        t.data[2 * k + 1] = v.im;
    }
    Ok(t)
}

pub fn channels_to_complex(t: &RealTensor) -> Result<Vec<Complex64>> {
    if t.c != 2 {
        return Err(Error::shape("channel merge", "2 channels".to_string(), format!("{}", t.c)));
    }
    Ok(t.data.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect())
}

/// Per-layer intermediates retained by the forward pass.
#[derive(Debug, Clone)]
pub struct ModelTape {
    switch: SwitchTape,
    convs: Vec<ConvTape>,
    pm: Option<PmTape>,
}

pub fn model_forward(params: &ModelParams, input: &ModelIo) -> Result<(ModelIo, ModelTape)> {
    let spec = &params.spec;
    let n = spec.n;
    let m = spec.m;
    match (spec.direction, input) {
        (MapDirection::Inverse, ModelIo::Pattern(d)) => {
            if d.len() != m * m {
                return Err(Error::shape("inverse model input", format!("{}", m * m), format!("{}", d.len())));
            }
            let d1 = vect(d, m, spec.p_d)?;
            let (d2, switch_tape) = switch_forward(&params.switch, &d1)?;
            let e0 = square(&d2, n, spec.p_x)?;
            let mut tensor = complex_to_channels(&e0, n)?;
            let mut conv_tapes = Vec::with_capacity(params.convs.len());
            for conv in &params.convs {
                let (next, tape) = conv_forward(conv, &tensor)?;
                conv_tapes.push(tape);
                tensor = next;
            }
            let (out, pm_tape) = match &params.pm {
                Some(pm) => {
                    let (o, t) = pm_forward(pm, &tensor)?;
                    (o, Some(t))
                }
                None => (tensor, None),
            };
            Ok((
                ModelIo::Field(out.data),
                ModelTape { switch: switch_tape, convs: conv_tapes, pm: pm_tape },
            ))
        }
        (MapDirection::Forward, ModelIo::Field(eta)) => {
            if eta.len() != n * n {
                return Err(Error::shape("forward model input", format!("{}", n * n), format!("{}", eta.len())));
            }
            let mut tensor = RealTensor::from_vec(n, n, 1, eta.clone())?;
            let pm_tape = match &params.pm {
                Some(pm) => {
                    let (o, t) = pm_forward(pm, &tensor)?;
                    tensor = o;
                    Some(t)
                }
                None => None,
            };
            let mut conv_tapes = Vec::with_capacity(params.convs.len());
            for conv in &params.convs {
                let (next, tape) = conv_forward(conv, &tensor)?;
                conv_tapes.push(tape);
                tensor = next;
            }
            // single-channel real output enters the switch stage as complex
            let z: Vec<Complex64> = tensor.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            let d2 = vect(&z, n, spec.p_x)?;
            let (d3, switch_tape) = switch_forward(&params.switch, &d2)?;
            let out = square(&d3, m, spec.p_d)?;
            Ok((
                ModelIo::Pattern(out),
                ModelTape { switch: switch_tape, convs: conv_tapes, pm: pm_tape },
            ))
        }
        (MapDirection::Inverse, ModelIo::Field(_)) => {
            Err(Error::shape("inverse model input", "pattern".to_string(), "field".to_string()))
        }
        (MapDirection::Forward, ModelIo::Pattern(_)) => {
            Err(Error::shape("forward model input", "field".to_string(), "pattern".to_string()))
        }
    }
}

/// Parameter gradients, aligned with [`ModelParams`].
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub switch: SwitchGrads,
    pub convs: Vec<ConvGrads>,
    pub pm: Option<PmGrads>,
}

impl ModelGrads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        ModelGrads {
            switch: SwitchGrads::zeros_like(&params.switch),
            convs: params.convs.iter().map(ConvGrads::zeros_like).collect(),
            pm: params.pm.as_ref().map(PmGrads::zeros_like),
        }
    }

    pub fn write(&self, out: &mut Vec<f64>) {
        self.switch.write(out);
        for c in &self.convs {
            c.write(out);
        }
        if let Some(pm) = &self.pm {
            pm.write(out);
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.write(&mut out);
        out
    }

    pub fn accumulate(&mut self, other: &ModelGrads) {
        self.switch.accumulate(&other.switch);
        for (a, b) in self.convs.iter_mut().zip(&other.convs) {
            a.accumulate(b);
        }
        if let (Some(a), Some(b)) = (self.pm.as_mut(), other.pm.as_ref()) {
            a.accumulate(b);
        }
    }
}

/// Backward pass through the whole pipeline. `g_output` pairs with the
/// forward output (field gradient for inverse models, pattern gradient with
/// the `dL/dRe + i dL/dIm` convention for forward models). Returns parameter
/// gradients and the gradient on the model input.
pub fn model_backward(
    params: &ModelParams,
    tape: &ModelTape,
    g_output: &ModelIo,
) -> Result<(ModelGrads, ModelIo)> {
    let spec = &params.spec;
    let n = spec.n;
    let m = spec.m;
    match (spec.direction, g_output) {
        (MapDirection::Inverse, ModelIo::Field(g)) => {
            let mut g_tensor = RealTensor::from_vec(n, n, 1, g.clone())?;
            let mut pm_grads = None;
            if let (Some(pm), Some(pm_tape)) = (&params.pm, &tape.pm) {
                let (g_in, grads) = pm_backward(pm, pm_tape, &g_tensor)?;
                g_tensor = g_in;
                pm_grads = Some(grads);
            }
            let mut conv_grads = vec![None; params.convs.len()];
            for (idx, (conv, conv_tape)) in
                params.convs.iter().zip(&tape.convs).enumerate().rev()
            {
                let (g_in, grads) = conv_backward(conv, conv_tape, &g_tensor)?;
                conv_grads[idx] = Some(grads);
                g_tensor = g_in;
            }
            let g_complex = channels_to_complex(&g_tensor)?;
            // gradient through square = the vect permutation
            let g_d2 = vect(&g_complex, n, spec.p_x)?;
            let (g_d1, switch_grads) = switch_backward(&params.switch, &tape.switch, &g_d2)?;
            let g_input = square(&g_d1, m, spec.p_d)?;
            Ok((
                ModelGrads {
                    switch: switch_grads,
                    convs: conv_grads.into_iter().map(|g| g.expect("filled")).collect(),
                    pm: pm_grads,
                },
                ModelIo::Pattern(g_input),
            ))
        }
        (MapDirection::Forward, ModelIo::Pattern(g)) => {
            if g.len() != m * m {
                return Err(Error::shape("forward model grad", format!("{}", m * m), format!("{}", g.len())));
            }
            let g_d3 = vect(g, m, spec.p_d)?;
            let (g_d2, switch_grads) = switch_backward(&params.switch, &tape.switch, &g_d3)?;
            let g_z = square(&g_d2, n, spec.p_x)?;
            // real-to-complex boundary: only the real part flows back
            let mut g_tensor = RealTensor::from_vec(n, n, 1, g_z.iter().map(|z| z.re).collect())?;
            let mut conv_grads = vec![None; params.convs.len()];
            for (idx, (conv, conv_tape)) in
                params.convs.iter().zip(&tape.convs).enumerate().rev()
            {
                let (g_in, grads) = conv_backward(conv, conv_tape, &g_tensor)?;
                conv_grads[idx] = Some(grads);
                g_tensor = g_in;
            }
            let mut pm_grads = None;
            if let (Some(pm), Some(pm_tape)) = (&params.pm, &tape.pm) {
                let (g_in, grads) = pm_backward(pm, pm_tape, &g_tensor)?;
                g_tensor = g_in;
                pm_grads = Some(grads);
            }
            Ok((
                ModelGrads {
                    switch: switch_grads,
                    convs: conv_grads.into_iter().map(|g| g.expect("filled")).collect(),
                    pm: pm_grads,
                },
                ModelIo::Field(g_tensor.data),
            ))
        }
        _ => Err(Error::shape(
            "model backward",
            "gradient matching the output kind".to_string(),
            "mismatched gradient kind".to_string(),
        )),
    }
}

/// Finite-difference check of a tiny end-to-end inverse model (all
/// parameters against a random linear loss). Returns the worst relative gap.
pub fn end_to_end_gradcheck(seed: u64) -> Result<f64> {
    use crate::nn::gradcheck::check_gradient;
    use rand::Rng;

    let spec = ModelSpec {
        kind: ModelKind::FarField,
        direction: MapDirection::Inverse,
        t: 1,
        p_d: 4,
        p_x: 4,
        n: 8,
        m: 8,
        window: 3,
        alpha: 2,
        layers: 1,
        init: InitMode::Glorot,
    };
    let params = build(&spec, seed, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d6f_64656c);
    let input = ModelIo::Pattern(
        (0..64)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect(),
    );
    let w: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();

    let loss_of = |flat: &[f64]| {
        let mut p = params.clone();
        p.read_params(flat).expect("same layout");
        let (out, _) = model_forward(&p, &input).expect("valid shapes");
        match out {
            ModelIo::Field(v) => v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>(),
            _ => unreachable!(),
        }
    };
    let (_, tape) = model_forward(&params, &input)?;
    let (grads, _) = model_backward(&params, &tape, &ModelIo::Field(w.clone()))?;
    Ok(check_gradient(loss_of, &params.flat_params(), &grads.flat()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::born::{build_factorization, BornOperator};
    use crate::domain::{make_directions, make_partition, GridSpec};
    use crate::nn::gradcheck::{check_gradient, FD_TOL};
    use rand::Rng;

    fn tiny_spec() -> ModelSpec {
        ModelSpec {
            kind: ModelKind::FarField,
            direction: MapDirection::Inverse,
            t: 1,
            p_d: 4,
            p_x: 4,
            n: 8,
            m: 8,
            window: 3,
            alpha: 2,
            layers: 1,
            init: InitMode::Glorot,
        }
    }

    fn random_pattern(seed: u64, m: usize) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m * m)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn inverse_shape_contract() {
        let spec = ModelSpec { n: 16, m: 16, ..tiny_spec() };
        let params = build(&spec, 1, None).unwrap();
        let input = ModelIo::Pattern(random_pattern(2, 16));
        let (out, _) = model_forward(&params, &input).unwrap();
        match out {
            ModelIo::Field(v) => assert_eq!(v.len(), 16 * 16),
            _ => panic!("inverse model must output a field"),
        }
    }

    #[test]
    fn forward_shape_contract() {
        let spec = ModelSpec { direction: MapDirection::Forward, ..tiny_spec() };
        let params = build(&spec, 3, None).unwrap();
        let eta: Vec<f64> = (0..64).map(|k| (k as f64 * 0.1).sin()).collect();
        let (out, _) = model_forward(&params, &ModelIo::Field(eta)).unwrap();
        let channels = out.as_channels(8).unwrap();
        assert_eq!((channels.h, channels.w, channels.c), (8, 8, 2));
    }

    #[test]
    fn paper_far_field_inverse_spec_builds() {
        let spec = ModelSpec {
            kind: ModelKind::FarField,
            direction: MapDirection::Inverse,
            t: 3,
            p_d: 16,
            p_x: 64,
            n: 80,
            m: 80,
            window: 10,
            alpha: 18,
            layers: 3,
            init: InitMode::Glorot,
        };
        assert_eq!(switch_complex_entries(&spec), 1_536_000);
        let total = param_count(&spec);
        assert!((3_000_000..=3_300_000).contains(&total), "total {total}");
        let params = build(&spec, 1, None).unwrap();
        assert_eq!(params.param_count(), total);
    }

    #[test]
    fn seismic_rectangular_geometry_accepted() {
        let spec = ModelSpec {
            kind: ModelKind::Seismic,
            direction: MapDirection::Inverse,
            t: 3,
            p_d: 16,
            p_x: 64,
            n: 64,
            m: 80,
            window: 8,
            alpha: 18,
            layers: 3,
            init: InitMode::Glorot,
        };
        spec.validate().unwrap();
        let total = param_count(&spec);
        assert!((2_700_000..=3_100_000).contains(&total), "total {total}");
    }

    #[test]
    fn invalid_specs_rejected() {
        let spec = ModelSpec { t: 0, ..tiny_spec() };
        assert!(spec.validate().is_err());
        let spec = ModelSpec { p_d: 3, ..tiny_spec() };
        assert!(spec.validate().is_err());
        let spec = ModelSpec { p_x: 16, n: 6, ..tiny_spec() };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn switch_dominates_parameter_count() {
        for spec in [
            ModelSpec {
                kind: ModelKind::FarField,
                direction: MapDirection::Inverse,
                t: 3,
                p_d: 16,
                p_x: 64,
                n: 80,
                m: 80,
                window: 10,
                alpha: 18,
                layers: 3,
                init: InitMode::Glorot,
            },
            ModelSpec {
                kind: ModelKind::Seismic,
                direction: MapDirection::Forward,
                t: 3,
                p_d: 16,
                p_x: 64,
                n: 64,
                m: 80,
                window: 8,
                alpha: 18,
                layers: 3,
                init: InitMode::Glorot,
            },
        ] {
            let switch = 2 * switch_complex_entries(&spec);
            let total = param_count(&spec);
            assert!(switch as f64 > 0.9 * total as f64, "switch {switch} of {total}");
        }
    }

    #[test]
    fn zero_input_zero_biases_gives_zero_output() {
        let spec = tiny_spec();
        let params = build(&spec, 5, None).unwrap();
        // glorot leaves biases at zero already; zero complex input
        let input = ModelIo::Pattern(vec![Complex64::ZERO; 64]);
        let (out, _) = model_forward(&params, &input).unwrap();
        match out {
            ModelIo::Field(v) => assert!(v.iter().all(|&x| x == 0.0)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn evaluation_is_deterministic() {
        let spec = tiny_spec();
        let params = build(&spec, 7, None).unwrap();
        let params2 = build(&spec, 7, None).unwrap();
        assert_eq!(params.flat_params(), params2.flat_params()); // bitwise

        let input = ModelIo::Pattern(random_pattern(8, 8));
        let (a, _) = model_forward(&params, &input).unwrap();
        let (b, _) = model_forward(&params, &input).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spec_text_round_trip_and_rejects() {
        let spec = ModelSpec { kind: ModelKind::Seismic, ..tiny_spec() };
        let text = spec.to_text();
        assert_eq!(ModelSpec::parse(&text).unwrap(), spec);
        assert!(ModelSpec::parse("kind = far-field\n").is_err()); // missing keys
        assert!(ModelSpec::parse(&format!("{text}bogus = 3\n")).is_err());
        assert!(ModelSpec::parse(&format!("{text}t = 3\n")).is_err()); // duplicate
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        let spec = tiny_spec();
        let params = build(&spec, 11, None).unwrap();
        let input = ModelIo::Pattern(random_pattern(12, 8));
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let w: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();

        let loss_of = |flat: &[f64]| {
            let mut p = params.clone();
            p.read_params(flat).unwrap();
            let (out, _) = model_forward(&p, &input).unwrap();
            match out {
                ModelIo::Field(v) => v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>(),
                _ => unreachable!(),
            }
        };

        let (out, tape) = model_forward(&params, &input).unwrap();
        assert!(matches!(out, ModelIo::Field(_)));
        let g_out = ModelIo::Field(w.clone());
        let (grads, _) = model_backward(&params, &tape, &g_out).unwrap();

        let worst = check_gradient(loss_of, &params.flat_params(), &grads.flat());
        assert!(worst <= FD_TOL, "end-to-end inverse gradcheck {worst}");
    }

    #[test]
    fn end_to_end_forward_direction_gradients() {
        let spec = ModelSpec {
            direction: MapDirection::Forward,
            kind: ModelKind::Seismic,
            ..tiny_spec()
        };
        let params = build(&spec, 17, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let eta: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<Complex64> = (0..64)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();

        let loss_of = |flat: &[f64]| {
            let mut p = params.clone();
            p.read_params(flat).unwrap();
            let (out, _) = model_forward(&p, &ModelIo::Field(eta.clone())).unwrap();
            match out {
                ModelIo::Pattern(z) => {
                    z.iter().zip(&w).map(|(a, b)| a.re * b.re + a.im * b.im).sum::<f64>()
                }
                _ => unreachable!(),
            }
        };

        let (_, tape) = model_forward(&params, &ModelIo::Field(eta.clone())).unwrap();
        let (grads, _) = model_backward(&params, &tape, &ModelIo::Pattern(w.clone())).unwrap();
        let worst = check_gradient(loss_of, &params.flat_params(), &grads.flat());
        assert!(worst <= FD_TOL, "end-to-end forward gradcheck {worst}");
    }

    /// Configure the conv stack as an exact pass-through of its first input
    /// channel: channel 0 carries ReLU(x), channel 1 carries ReLU(-x), and
    /// the final linear conv reassembles x = ReLU(x) - ReLU(-x).
    fn make_conv_stack_identity(params: &mut ModelParams) {
        let spec = params.spec;
        assert!(spec.alpha >= 2);
        let off = (spec.window - 1) / 2;
        let center = |c: &ConvParams, l3: usize, k3: usize| {
            ((off * c.window + off) * c.c_i + l3) * c.c_o + k3
        };
        for conv in params.convs.iter_mut() {
            conv.weights.iter_mut().for_each(|w| *w = 0.0);
            conv.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        let first = &mut params.convs[0];
        let (p, m) = (center(first, 0, 0), center(first, 0, 1));
        first.weights[p] = 1.0;
        first.weights[m] = -1.0;
        for conv in params.convs[1..spec.layers].iter_mut() {
            let (a, b) = (center(conv, 0, 0), center(conv, 1, 1));
            conv.weights[a] = 1.0;
            conv.weights[b] = 1.0;
        }
        let last = params.convs.last_mut().unwrap();
        let (a, b) = (center(last, 0, 0), center(last, 1, 0));
        last.weights[a] = 1.0;
        last.weights[b] = -1.0;
    }

    #[test]
    fn factorization_init_reproduces_adjoint() {
        let grid = GridSpec::new(8, 6.0).unwrap();
        let dirs = make_directions(8).unwrap();
        let op = BornOperator::far_field(&grid, &dirs).unwrap();
        let d_part = make_partition(8, 4).unwrap();
        let x_part = make_partition(8, 4).unwrap();
        let f = build_factorization(&op, &d_part, &x_part, 2).unwrap();

        let spec = ModelSpec {
            t: 2,
            init: InitMode::FromFactorization,
            ..tiny_spec()
        };
        let mut params = build(&spec, 23, Some(&f)).unwrap();

        // switch stage alone equals apply_adjoint
        let d = random_pattern(29, 8);
        let d1 = vect(&d, 8, 4).unwrap();
        let (d2, _) = switch_forward(&params.switch, &d1).unwrap();
        let stage = square(&d2, 8, 4).unwrap();
        let oracle = f.apply_adjoint_vec(&d).unwrap();
        let num: f64 =
            stage.iter().zip(&oracle).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let den: f64 = oracle.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!(num / den <= 1e-12, "switch stage vs adjoint {}", num / den);

        // whole model with identity conv stack equals Re(apply_adjoint)
        make_conv_stack_identity(&mut params);
        let (out, _) = model_forward(&params, &ModelIo::Pattern(d)).unwrap();
        match out {
            ModelIo::Field(v) => {
                let num: f64 = v
                    .iter()
                    .zip(&oracle)
                    .map(|(a, b)| (a - b.re) * (a - b.re))
                    .sum::<f64>()
                    .sqrt();
                assert!(num / den <= 1e-10, "model vs Re(adjoint) {}", num / den);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn factorization_init_forward_reproduces_apply() {
        let grid = GridSpec::new(8, 6.0).unwrap();
        let dirs = make_directions(8).unwrap();
        let op = BornOperator::far_field(&grid, &dirs).unwrap();
        let d_part = make_partition(8, 4).unwrap();
        let x_part = make_partition(8, 4).unwrap();
        let f = build_factorization(&op, &d_part, &x_part, 2).unwrap();

        let spec = ModelSpec {
            t: 2,
            direction: MapDirection::Forward,
            init: InitMode::FromFactorization,
            ..tiny_spec()
        };
        let mut params = build(&spec, 31, Some(&f)).unwrap();
        make_conv_stack_identity(&mut params);

        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let eta: Vec<f64> = (0..64).map(|_| rng.random_range(-0.5..0.5)).collect();
        let (out, _) = model_forward(&params, &ModelIo::Field(eta.clone())).unwrap();
        let eta_c: Vec<Complex64> = eta.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let oracle = f.apply_vec(&eta_c).unwrap();
        match out {
            ModelIo::Pattern(z) => {
                let num: f64 =
                    z.iter().zip(&oracle).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
                let den: f64 = oracle.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
                assert!(num / den <= 1e-10, "model vs apply {}", num / den);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn factorization_init_shape_mismatch_rejected() {
        let grid = GridSpec::new(8, 6.0).unwrap();
        let dirs = make_directions(8).unwrap();
        let op = BornOperator::far_field(&grid, &dirs).unwrap();
        let d_part = make_partition(8, 4).unwrap();
        let x_part = make_partition(8, 4).unwrap();
        let f = build_factorization(&op, &d_part, &x_part, 2).unwrap();
        let spec = ModelSpec { t: 3, init: InitMode::FromFactorization, ..tiny_spec() };
        assert!(build(&spec, 1, Some(&f)).is_err()); // t mismatch
        let spec = ModelSpec { init: InitMode::FromFactorization, ..tiny_spec() };
        assert!(build(&spec, 1, None).is_err()); // missing factorization
    }
}
