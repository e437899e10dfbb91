//! Finite-difference frequency-domain Helmholtz solver with a perfectly
//! matched layer.
//!
//! The operator is assembled on a padded grid (interior `N x N` plus a PML
//! collar of `thickness` points per side) with the 5-point stencil under
//! complex coordinate stretching `s(u) = 1 + i sigma(u)/omega`, quadratic
//! absorption profile. Rows are scaled by `s_x s_y`, which keeps the matrix
//! complex symmetric; inside the physical domain the scaling is exactly 1,
//! so right-hand sides supported there need no compensation.

use num_complex::Complex64;

use crate::domain::{DirectionSet, GridSpec, ReceiverLine, ScattererField, ScatteringPattern};
use crate::error::{Error, Result};
use crate::linalg::{BandLu, BandMatrix};

/// Absorbing layer description: width in grid points and peak absorption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmlSpec {
    pub thickness: usize,
    pub sigma_max: f64,
}

impl PmlSpec {
    pub fn new(thickness: usize, sigma_max: f64) -> Result<Self> {
        if thickness < 8 {
            return Err(Error::config(format!("PML needs thickness >= 8, got {thickness}")));
        }
        if !(sigma_max > 0.0) {
            return Err(Error::config(format!("PML needs sigma_max > 0, got {sigma_max}")));
        }
        Ok(PmlSpec { thickness, sigma_max })
    }

    /// Default layer for a given frequency: 12 points, absorption scaled with
    /// omega so the round-trip attenuation is grid-independent.
    pub fn default_for(omega: f64) -> Self {
        PmlSpec { thickness: 12, sigma_max: 2.5 * omega.max(4.0) }
    }
}

/// Index bookkeeping for the padded grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaddedGrid {
    pub n: usize,
    pub thickness: usize,
    pub h: f64,
    pub lo: f64,
    pub hi: f64,
}

impl PaddedGrid {
    pub fn new(grid: &GridSpec, pml: &PmlSpec) -> Self {
        PaddedGrid {
            n: grid.n,
            thickness: pml.thickness,
            h: grid.h(),
            lo: grid.lo,
            hi: grid.hi,
        }
    }

    pub fn np(&self) -> usize {
        self.n + 2 * self.thickness
    }

    pub fn len(&self) -> usize {
        self.np() * self.np()
    }

    /// Cell-center coordinate along one axis of the padded grid.
    pub fn coord(&self, k: usize) -> f64 {
        self.lo - self.thickness as f64 * self.h + (k as f64 + 0.5) * self.h
    }

    #[inline]
    pub fn flat(&self, i: usize, j: usize) -> usize {
        i * self.np() + j
    }

    /// Padded index of interior grid point `(i, j)`.
    pub fn interior_flat(&self, i: usize, j: usize) -> usize {
        self.flat(i + self.thickness, j + self.thickness)
    }

    /// Padded-grid node nearest to a physical coordinate, per axis.
    pub fn nearest_index(&self, u: f64) -> usize {
        let raw = (u - (self.lo - self.thickness as f64 * self.h)) / self.h - 0.5;
        let k = raw.round().max(0.0) as usize;
        k.min(self.np() - 1)
    }
}

/// Background medium on the padded grid.
#[derive(Debug, Clone)]
pub struct BackgroundModel {
    pub omega: f64,
    pub pml: PmlSpec,
    /// Velocity at every padded grid point, row-major.
    pub c0: Vec<f64>,
}

impl BackgroundModel {
    /// Constant-velocity background.
    pub fn uniform(grid: &GridSpec, omega: f64, pml: PmlSpec, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::config(format!("background velocity must be positive, got {c}")));
        }
        let padded = PaddedGrid::new(grid, &pml);
        Ok(BackgroundModel { omega, pml, c0: vec![c; padded.len()] })
    }

    /// Free-space background (c0 = 1), the far-field setting.
    pub fn free_space(grid: &GridSpec, omega: f64, pml: PmlSpec) -> Result<Self> {
        Self::uniform(grid, omega, pml, 1.0)
    }

    pub fn is_free_space(&self) -> bool {
        self.c0.iter().all(|&c| c == 1.0)
    }
}

/// Assembled banded operator together with its grid bookkeeping.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub padded: PaddedGrid,
    pub matrix: BandMatrix,
}

fn sigma_profile(u: f64, lo: f64, hi: f64, delta: f64, sigma_max: f64) -> f64 {
    if u < lo {
        let d = (lo - u) / delta;
        sigma_max * d * d
    } else if u > hi {
        let d = (u - hi) / delta;
        sigma_max * d * d
    } else {
        0.0
    }
}

/// Assemble `L0` (eta = None) or `L = L0 - diag(eta)` on the padded grid.
///
/// The scatterer is zero-extended onto the padding; its support must lie in
/// the interior, where the PML stretching is exactly 1, so the eta term is a
/// plain diagonal subtraction.
pub fn assemble(
    model: &BackgroundModel,
    grid: &GridSpec,
    eta: Option<&ScattererField>,
) -> Result<DiscreteOperator> {
    let padded = PaddedGrid::new(grid, &model.pml);
    let np = padded.np();
    if model.c0.len() != padded.len() {
        return Err(Error::shape(
            "assemble background",
            format!("{} c0 values", padded.len()),
            format!("{}", model.c0.len()),
        ));
    }
    if let Some(f) = eta {
        if f.grid != *grid {
            return Err(Error::shape(
                "assemble scatterer",
                format!("grid n={}", grid.n),
                format!("grid n={}", f.grid.n),
            ));
        }
    }

    let h = padded.h;
    let delta = model.pml.thickness as f64 * h;
    let omega = model.omega;
    let stretch = |u: f64| -> Complex64 {
        let s = sigma_profile(u, grid.lo, grid.hi, delta, model.pml.sigma_max);
        Complex64::new(1.0, s / omega.max(f64::MIN_POSITIVE))
    };

    // per-axis stretch factors at cell centers and cell faces
    let s_center: Vec<Complex64> = (0..np).map(|k| stretch(padded.coord(k))).collect();
    let s_face: Vec<Complex64> = (0..=np).map(|k| stretch(padded.coord(k) - 0.5 * h)).collect();

    let inv_h2 = 1.0 / (h * h);
    let mut m = BandMatrix::zeros(np * np, np, np);

    for i in 0..np {
        for j in 0..np {
            let row = padded.flat(i, j);
            let sx = s_center[i];
            let sy = s_center[j];
            // face factors: x-faces at i -/+ 1/2, y-faces at j -/+ 1/2
            let fxm = sy / s_face[i] * inv_h2;
            let fxp = sy / s_face[i + 1] * inv_h2;
            let fym = sx / s_face[j] * inv_h2;
            let fyp = sx / s_face[j + 1] * inv_h2;

            let mut diag = fxm + fxp + fym + fyp;
            if i > 0 {
                m.set(row, padded.flat(i - 1, j), -fxm);
            }
            if i + 1 < np {
                m.set(row, padded.flat(i + 1, j), -fxp);
            }
            if j > 0 {
                m.set(row, padded.flat(i, j - 1), -fym);
            }
            if j + 1 < np {
                m.set(row, padded.flat(i, j + 1), -fyp);
            }

            let idx = padded.flat(i, j);
            let w2c2 = omega * omega / (model.c0[idx] * model.c0[idx]);
            diag -= sx * sy * w2c2;
            m.set(row, row, diag);
        }
    }

    if let Some(f) = eta {
        for i in 0..grid.n {
            for j in 0..grid.n {
                let row = padded.interior_flat(i, j);
                m.add(row, row, Complex64::new(-f.at(i, j), 0.0));
            }
        }
    }

    Ok(DiscreteOperator { padded, matrix: m })
}

/// Reusable LU factorization of a [`DiscreteOperator`].
#[derive(Debug, Clone)]
pub struct SolverFactorization {
    pub padded: PaddedGrid,
    lu: BandLu,
}

pub fn factorize(op: DiscreteOperator) -> Result<SolverFactorization> {
    let padded = op.padded;
    let lu = op.matrix.factorize()?;
    Ok(SolverFactorization { padded, lu })
}

pub fn solve(fact: &SolverFactorization, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
    fact.lu.solve(rhs)
}

/// Far-field observation data for plane-wave sources and receiver directions.
///
/// For each source direction `s` the incident wave `exp(i omega s.x)` is
/// evaluated on the padded grid and the scattered field solves
/// `(L0 - E) u_sc = E u_inc`; one factorization serves all sources. The data
/// value is the plain grid sum
/// `d(r,s) = sum_x exp(-i omega r.x) eta(x) (u_inc + u_sc)(x)`.
pub fn gen_farfield(
    eta: &ScattererField,
    model: &BackgroundModel,
    sources: &DirectionSet,
    receivers: &DirectionSet,
) -> Result<ScatteringPattern> {
    if !model.is_free_space() {
        return Err(Error::config("far-field data requires a free-space background (c0 = 1)"));
    }
    if sources.m != receivers.m {
        return Err(Error::shape(
            "far-field directions",
            format!("{} sources", sources.m),
            format!("{} receivers", receivers.m),
        ));
    }
    let grid = eta.grid;
    let m = sources.m;
    let omega = model.omega;
    let op = assemble(model, &grid, Some(eta))?;
    let padded = op.padded;
    let fact = factorize(op)?;

    let n = grid.n;
    let interior_points = grid.points();
    // receiver phases exp(-i omega r.x) over interior points
    let recv_phase: Vec<Vec<Complex64>> = (0..m)
        .map(|k| {
            let r = receivers.unit(k);
            interior_points
                .iter()
                .map(|x| Complex64::cis(-omega * (r[0] * x[0] + r[1] * x[1])))
                .collect()
        })
        .collect();

    let mut pattern = ScatteringPattern::zeros(m);
    let np = padded.np();
    for ks in 0..m {
        let s = sources.unit(ks);
        let mut u_inc = vec![Complex64::ZERO; padded.len()];
        for i in 0..np {
            for j in 0..np {
                let x = [padded.coord(i), padded.coord(j)];
                u_inc[padded.flat(i, j)] = Complex64::cis(omega * (s[0] * x[0] + s[1] * x[1]));
            }
        }
        let mut rhs = vec![Complex64::ZERO; padded.len()];
        let mut any = false;
        for i in 0..n {
            for j in 0..n {
                let e = eta.at(i, j);
                if e != 0.0 {
                    let p = padded.interior_flat(i, j);
                    rhs[p] = e * u_inc[p];
                    any = true;
                }
            }
        }
        // zero scatterer: scattered field formulation gives exactly zero data
        let u_sc = if any { solve(&fact, &rhs)? } else { vec![Complex64::ZERO; padded.len()] };

        // weights eta(x) (u_inc + u_sc)(x) on the interior
        let mut w = vec![Complex64::ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                let p = padded.interior_flat(i, j);
                w[i * n + j] = eta.at(i, j) * (u_inc[p] + u_sc[p]);
            }
        }
        for kr in 0..m {
            let d: Complex64 = recv_phase[kr].iter().zip(&w).map(|(p, q)| p * q).sum();
            pattern.values[kr * m + ks] = d;
        }
    }
    Ok(pattern)
}

/// Background Green's function columns for a seismic acquisition line,
/// computed once per background and reused across samples.
#[derive(Debug, Clone)]
pub struct SeismicBackground {
    pub grid: GridSpec,
    pub line: ReceiverLine,
    pub padded: PaddedGrid,
    /// One column per line point, each on the padded grid.
    pub columns: Vec<Vec<Complex64>>,
}

impl SeismicBackground {
    /// Solve `L0 g_s = e_s` for a unit source at the grid node nearest to
    /// each line point.
    pub fn new(model: &BackgroundModel, grid: &GridSpec, line: &ReceiverLine) -> Result<Self> {
        let op = assemble(model, grid, None)?;
        let padded = op.padded;
        let fact = factorize(op)?;
        let mut columns = Vec::with_capacity(line.m);
        for p in &line.points {
            let i = padded.nearest_index(p[0]);
            let j = padded.nearest_index(p[1]);
            let mut rhs = vec![Complex64::ZERO; padded.len()];
            rhs[padded.flat(i, j)] = Complex64::ONE;
            columns.push(solve(&fact, &rhs)?);
        }
        Ok(SeismicBackground { grid: *grid, line: line.clone(), padded, columns })
    }

    /// Column `k` restricted to the interior grid, row-major over X.
    pub fn interior_column(&self, k: usize) -> Vec<Complex64> {
        let n = self.grid.n;
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.columns[k][self.padded.interior_flat(i, j)]);
            }
        }
        out
    }
}

/// Seismic observation data with sources and receivers on the same line.
///
/// `d(r,s) = sum_x g_r(x) eta(x) (g_s + u_sc)(x)` with
/// `(L0 - E) u_sc = E g_s` solved per source; `g` are the precomputed
/// background columns.
pub fn gen_seismic(
    eta: &ScattererField,
    model: &BackgroundModel,
    background: &SeismicBackground,
) -> Result<ScatteringPattern> {
    let grid = eta.grid;
    if background.grid != grid {
        return Err(Error::shape(
            "seismic background",
            format!("grid n={}", grid.n),
            format!("grid n={}", background.grid.n),
        ));
    }
    let m = background.line.m;
    let n = grid.n;
    let op = assemble(model, &grid, Some(eta))?;
    let padded = op.padded;
    let fact = factorize(op)?;

    let g_int: Vec<Vec<Complex64>> = (0..m).map(|k| background.interior_column(k)).collect();

    let mut pattern = ScatteringPattern::zeros(m);
    for ks in 0..m {
        let g_s = &background.columns[ks];
        let mut rhs = vec![Complex64::ZERO; padded.len()];
        let mut any = false;
        for i in 0..n {
            for j in 0..n {
                let e = eta.at(i, j);
                if e != 0.0 {
                    let p = padded.interior_flat(i, j);
                    rhs[p] = e * g_s[p];
                    any = true;
                }
            }
        }
        let u_sc = if any { solve(&fact, &rhs)? } else { vec![Complex64::ZERO; padded.len()] };

        let mut w = vec![Complex64::ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                let p = padded.interior_flat(i, j);
                w[i * n + j] = eta.at(i, j) * (g_s[p] + u_sc[p]);
            }
        }
        for kr in 0..m {
            let d: Complex64 = g_int[kr].iter().zip(&w).map(|(p, q)| p * q).sum();
            pattern.values[kr * m + ks] = d;
        }
    }
    Ok(pattern)
}
