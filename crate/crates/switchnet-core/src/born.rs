//! Linearized (Born) scattering operator, its blockwise low-rank structure,
//! and the switch factorization `A ~ U Sigma V*`.
//!
//! The operator maps a scatterer on the `N x N` grid to data indexed by
//! receiver-source pairs. Its entries are
//!
//! * far field: `A(rs, x) = exp(i omega (s - r) . x)`,
//! * seismic:   `A(rs, x) = G0(r, x) G0(s, x)` with background Green's
//!   columns from the solver.
//!
//! Both are Khatri-Rao products of two `M x N^2` factors, so full
//! applications stream through the factors and the `M^2 x N^2` matrix is
//! never materialized; individual blocks are generated on demand.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::domain::{DirectionSet, GridSpec, PartitionScheme, ScattererField, ScatteringPattern};
use crate::error::{Error, Result};
use crate::helmholtz::SeismicBackground;
use crate::linalg::{hermitian_cg, svd, CMat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BornKind {
    FarField,
    Seismic,
}

/// The linearized forward map `d ~ A eta` for one acquisition geometry.
#[derive(Debug, Clone)]
pub struct BornOperator {
    pub kind: BornKind,
    pub grid: GridSpec,
    pub m: usize,
    pub omega: f64,
    /// Receiver factor, `M x N^2`: far field `exp(-i omega r.x)`, seismic `G0(r, x)`.
    recv: CMat,
    /// Source factor, `M x N^2`: far field `exp(i omega s.x)`, seismic `G0(s, x)`.
    src: CMat,
    /// Geometry kept for the phase-identity check (far field only).
    dirs: Option<DirectionSet>,
}

impl BornOperator {
    pub fn far_field(grid: &GridSpec, dirs: &DirectionSet) -> Result<Self> {
        let omega = grid.omega;
        let points = grid.points();
        let m = dirs.m;
        let n2 = points.len();
        let mut recv = CMat::zeros(m, n2);
        let mut src = CMat::zeros(m, n2);
        for k in 0..m {
            let u = dirs.unit(k);
            for (x_idx, x) in points.iter().enumerate() {
                let phase = omega * (u[0] * x[0] + u[1] * x[1]);
                recv.set(k, x_idx, Complex64::cis(-phase));
                src.set(k, x_idx, Complex64::cis(phase));
            }
        }
        Ok(BornOperator {
            kind: BornKind::FarField,
            grid: *grid,
            m,
            omega,
            recv,
            src,
            dirs: Some(dirs.clone()),
        })
    }

    /// Seismic operator from precomputed background columns (sources and
    /// receivers share the line, so the two factors coincide).
    pub fn seismic(background: &SeismicBackground) -> Result<Self> {
        let grid = background.grid;
        let m = background.line.m;
        let n2 = grid.n * grid.n;
        let mut g = CMat::zeros(m, n2);
        for k in 0..m {
            let col = background.interior_column(k);
            for (x_idx, v) in col.into_iter().enumerate() {
                g.set(k, x_idx, v);
            }
        }
        Ok(BornOperator {
            kind: BornKind::Seismic,
            grid,
            m,
            omega: grid.omega,
            recv: g.clone(),
            src: g,
            dirs: None,
        })
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    /// Single entry `A(rs, x)` with `rs = r*M + s` flat and `x` flat over the
    /// grid. Far-field entries are evaluated from the phase directly so they
    /// match elementwise recomputation.
    pub fn entry(&self, rs: usize, x: usize) -> Complex64 {
        let r = rs / self.m;
        let s = rs % self.m;
        match self.kind {
            BornKind::FarField => {
                let dirs = self.dirs.as_ref().expect("far-field operator keeps its directions");
                let ru = dirs.unit(r);
                let su = dirs.unit(s);
                let p = self.grid.point(x / self.grid.n, x % self.grid.n);
                Complex64::cis(self.omega * ((su[0] - ru[0]) * p[0] + (su[1] - ru[1]) * p[1]))
            }
            BornKind::Seismic => self.recv.at(r, x) * self.src.at(s, x),
        }
    }

    /// Dense block for row group `i` of the data partition and column group
    /// `j` of the grid partition.
    pub fn block(
        &self,
        d_part: &PartitionScheme,
        x_part: &PartitionScheme,
        i: usize,
        j: usize,
    ) -> Result<CMat> {
        self.check_partitions(d_part, x_part)?;
        let rows = d_part
            .groups
            .get(i)
            .ok_or_else(|| Error::config(format!("data group {i} out of range (P_D = {})", d_part.p)))?;
        let cols = x_part
            .groups
            .get(j)
            .ok_or_else(|| Error::config(format!("grid group {j} out of range (P_X = {})", x_part.p)))?;
        Ok(CMat::from_fn(rows.len(), cols.len(), |r, c| self.entry(rows[r], cols[c])))
    }

    fn check_partitions(&self, d_part: &PartitionScheme, x_part: &PartitionScheme) -> Result<()> {
        if d_part.n != self.m {
            return Err(Error::shape(
                "data partition",
                format!("side {}", self.m),
                format!("side {}", d_part.n),
            ));
        }
        if x_part.n != self.grid.n {
            return Err(Error::shape(
                "grid partition",
                format!("side {}", self.grid.n),
                format!("side {}", x_part.n),
            ));
        }
        Ok(())
    }

    /// Full matrix; test oracles only.
    pub fn dense(&self) -> CMat {
        let m2 = self.m * self.m;
        let n2 = self.grid.n * self.grid.n;
        CMat::from_fn(m2, n2, |rs, x| self.entry(rs, x))
    }

    /// `A x` through the Khatri-Rao factors.
    pub fn apply_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let m = self.m;
        let n2 = self.recv.cols;
        assert_eq!(x.len(), n2);
        // B = recv * diag(x), then out(r, s) = sum_x B(r, x) src(s, x)
        let mut out = vec![Complex64::ZERO; m * m];
        let mut row = vec![Complex64::ZERO; n2];
        for r in 0..m {
            for xi in 0..n2 {
                row[xi] = self.recv.at(r, xi) * x[xi];
            }
            for s in 0..m {
                let src_row = &self.src.data[s * n2..(s + 1) * n2];
                let mut acc = Complex64::ZERO;
                for (rv, sv) in row.iter().zip(src_row) {
                    acc += rv * sv;
                }
                out[r * m + s] = acc;
            }
        }
        out
    }

    /// `A* y` through the factors.
    pub fn apply_adjoint_vec(&self, y: &[Complex64]) -> Vec<Complex64> {
        let m = self.m;
        let n2 = self.recv.cols;
        assert_eq!(y.len(), m * m);
        let mut out = vec![Complex64::ZERO; n2];
        let mut inner = vec![Complex64::ZERO; n2];
        for r in 0..m {
            for v in inner.iter_mut() {
                *v = Complex64::ZERO;
            }
            for s in 0..m {
                let yv = y[r * m + s];
                if yv == Complex64::ZERO {
                    continue;
                }
                let src_row = &self.src.data[s * n2..(s + 1) * n2];
                for (acc, sv) in inner.iter_mut().zip(src_row) {
                    *acc += yv * sv.conj();
                }
            }
            let recv_row = &self.recv.data[r * n2..(r + 1) * n2];
            for ((o, rv), iv) in out.iter_mut().zip(recv_row).zip(&inner) {
                *o += rv.conj() * iv;
            }
        }
        out
    }

    /// Born prediction `A eta` as a scattering pattern.
    pub fn apply_field(&self, eta: &ScattererField) -> Result<ScatteringPattern> {
        if eta.grid != self.grid {
            return Err(Error::shape(
                "born apply",
                format!("grid n={}", self.grid.n),
                format!("grid n={}", eta.grid.n),
            ));
        }
        let x: Vec<Complex64> = eta.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        ScatteringPattern::from_values(self.m, self.apply_vec(&x))
    }

    /// Entry `(x, y)` of the normal operator `A* A`, by direct summation over
    /// all receiver-source pairs.
    pub fn normal_entry(&self, x: usize, y: usize) -> Complex64 {
        let m2 = self.m * self.m;
        let mut acc = Complex64::ZERO;
        for rs in 0..m2 {
            acc += self.entry(rs, x).conj() * self.entry(rs, y);
        }
        acc
    }
}

/// Numerical epsilon-rank: smallest `k` such that `sigma_{k+1} <= tol * sigma_1`.
pub fn block_rank(block: &CMat, tol: f64) -> usize {
    let s = svd(block);
    rank_from_sigma(&s.sigma, tol)
}

fn rank_from_sigma(sigma: &[f64], tol: f64) -> usize {
    if sigma.is_empty() || sigma[0] == 0.0 {
        return 0;
    }
    let cut = tol * sigma[0];
    sigma.iter().take_while(|&&s| s > cut).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub i: usize,
    pub j: usize,
    pub tol: f64,
    pub rank: usize,
    pub sigma_max: f64,
}

/// Per-block epsilon-ranks over a whole partition pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockRankReport {
    pub entries: Vec<RankEntry>,
}

impl BlockRankReport {
    pub fn max_rank(&self, tol: f64) -> usize {
        self.entries
            .iter()
            .filter(|e| e.tol == tol)
            .map(|e| e.rank)
            .max()
            .unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,tol,rank,sigma_max\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{},{},{}\n", e.i, e.j, e.tol, e.rank, e.sigma_max));
        }
        out
    }
}

/// Measure the epsilon-rank of every `(i, j)` block at each tolerance.
/// Blocks are independent, so the scan runs in parallel.
pub fn rank_report(
    op: &BornOperator,
    d_part: &PartitionScheme,
    x_part: &PartitionScheme,
    tols: &[f64],
) -> Result<BlockRankReport> {
    op.check_partitions(d_part, x_part)?;
    for &tol in tols {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Error::config(format!("rank tolerance must lie in (0,1), got {tol}")));
        }
    }
    let pairs: Vec<(usize, usize)> = (0..d_part.p)
        .flat_map(|i| (0..x_part.p).map(move |j| (i, j)))
        .collect();
    let per_block: Vec<Vec<RankEntry>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let block = op.block(d_part, x_part, i, j).expect("valid indices");
            let s = svd(&block);
            let sigma_max = s.sigma.first().copied().unwrap_or(0.0);
            tols.iter()
                .map(|&tol| RankEntry { i, j, tol, rank: rank_from_sigma(&s.sigma, tol), sigma_max })
                .collect()
        })
        .collect();
    Ok(BlockRankReport { entries: per_block.into_iter().flatten().collect() })
}

/// Evaluate both sides of the centered phase splitting
/// `exp(iw(s-r).x) = exp(iw((s-r)-(s_i-r_i)).(x-x_j)) exp(iw(s_i-r_i).x)
///  exp(iw(s-r).x_j) exp(-iw(s_i-r_i).x_j)`
/// at sampled points; returns the largest absolute deviation.
pub fn verify_phase_identity(
    op: &BornOperator,
    d_part: &PartitionScheme,
    x_part: &PartitionScheme,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if op.kind != BornKind::FarField {
        return Err(Error::config("phase identity applies to the far-field kernel"));
    }
    op.check_partitions(d_part, x_part)?;
    let dirs = op.dirs.as_ref().expect("far-field operator keeps its directions");
    let grid = op.grid;
    let omega = op.omega;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_dev: f64 = 0.0;

    for _ in 0..samples {
        let gi = rng.random_range(0..d_part.p);
        let gj = rng.random_range(0..x_part.p);
        let rs = d_part.groups[gi][rng.random_range(0..d_part.groups[gi].len())];
        let xf = x_part.groups[gj][rng.random_range(0..x_part.groups[gj].len())];

        let (r, s) = (dirs.unit(rs / op.m), dirs.unit(rs % op.m));
        let x = grid.point(xf / grid.n, xf % grid.n);
        let (ri, si) = d_group_center(d_part, gi);
        let xj = x_group_center(x_part, &grid, gj);

        let q = [s[0] - r[0], s[1] - r[1]];
        let qi = [si[0] - ri[0], si[1] - ri[1]];
        let lhs = Complex64::cis(omega * (q[0] * x[0] + q[1] * x[1]));
        let rhs = Complex64::cis(
            omega * ((q[0] - qi[0]) * (x[0] - xj[0]) + (q[1] - qi[1]) * (x[1] - xj[1])),
        ) * Complex64::cis(omega * (qi[0] * x[0] + qi[1] * x[1]))
            * Complex64::cis(omega * (q[0] * xj[0] + q[1] * xj[1]))
            * Complex64::cis(-omega * (qi[0] * xj[0] + qi[1] * xj[1]));
        max_dev = max_dev.max((lhs - rhs).norm());
    }
    Ok(max_dev)
}

/// Center directions `(r_i, s_i)` of one square of the data partition, taken
/// in the angular parameterization.
pub fn d_group_center(d_part: &PartitionScheme, g: usize) -> ([f64; 2], [f64; 2]) {
    let sqrt_p = d_part.sqrt_p();
    let side = d_part.n / sqrt_p;
    let (a, c) = (g / sqrt_p, g % sqrt_p);
    let theta = |k0: usize| {
        let mid = k0 as f64 + (side as f64 - 1.0) / 2.0;
        std::f64::consts::TAU * mid / d_part.n as f64
    };
    let tr = theta(a * side);
    let ts = theta(c * side);
    ([tr.cos(), tr.sin()], [ts.cos(), ts.sin()])
}

/// Geometric center of one square of the grid partition.
pub fn x_group_center(x_part: &PartitionScheme, grid: &GridSpec, g: usize) -> [f64; 2] {
    let sqrt_p = x_part.sqrt_p();
    let side = x_part.n / sqrt_p;
    let (a, c) = (g / sqrt_p, g % sqrt_p);
    let h = grid.h();
    // midpoint of the first and last cell centers of the square
    let coord = |k0: usize| grid.lo + (k0 as f64 + side as f64 / 2.0) * h;
    [coord(a * side), coord(c * side)]
}

/// Blockwise rank-`t` factorization `A ~ U Sigma V*`: block-diagonal `U`
/// (one block per data group) and `V` (one per grid group), with the shuffle
/// `Sigma` kept as an index permutation.
#[derive(Debug, Clone)]
pub struct SwitchFactorization {
    pub t: usize,
    pub d_part: PartitionScheme,
    pub x_part: PartitionScheme,
    /// `P_D` blocks, each `(M^2/P_D) x (t P_X)`; singular values absorbed here.
    pub u: Vec<CMat>,
    /// `P_X` blocks, each `(N^2/P_X) x (t P_D)`.
    pub v: Vec<CMat>,
    /// True when `t` exceeded a block dimension and was padded with zeros.
    pub clamped: bool,
}

impl SwitchFactorization {
    pub fn m(&self) -> usize {
        self.d_part.n
    }

    pub fn n(&self) -> usize {
        self.x_part.n
    }

    /// Stored complex entries in `U` and `V` (the shuffle is an index map).
    pub fn storage_entries(&self) -> usize {
        let u: usize = self.u.iter().map(|b| b.rows * b.cols).sum();
        let v: usize = self.v.iter().map(|b| b.rows * b.cols).sum();
        u + v
    }

    /// `U Sigma V* x`.
    pub fn apply_vec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let n2 = self.n() * self.n();
        let m2 = self.m() * self.m();
        if x.len() != n2 {
            return Err(Error::shape("switch apply", format!("{n2}"), format!("{}", x.len())));
        }
        let t = self.t;
        let p_d = self.d_part.p;
        let p_x = self.x_part.p;

        // y_j = V_j^* x^{(j)}
        let mut y = Vec::with_capacity(p_x);
        for j in 0..p_x {
            let gathered: Vec<Complex64> = self.x_part.groups[j].iter().map(|&g| x[g]).collect();
            y.push(self.v[j].matvec_h(&gathered));
        }
        // shuffle and apply U_i
        let mut out = vec![Complex64::ZERO; m2];
        for i in 0..p_d {
            let mut w = vec![Complex64::ZERO; t * p_x];
            for j in 0..p_x {
                w[j * t..(j + 1) * t].copy_from_slice(&y[j][i * t..(i + 1) * t]);
            }
            let block_out = self.u[i].matvec(&w);
            for (row, &g) in self.d_part.groups[i].iter().enumerate() {
                out[g] = block_out[row];
            }
        }
        Ok(out)
    }

    /// `V Sigma* U* y`.
    pub fn apply_adjoint_vec(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        let n2 = self.n() * self.n();
        let m2 = self.m() * self.m();
        if y.len() != m2 {
            return Err(Error::shape("switch adjoint", format!("{m2}"), format!("{}", y.len())));
        }
        let t = self.t;
        let p_d = self.d_part.p;
        let p_x = self.x_part.p;

        let mut z = Vec::with_capacity(p_d);
        for i in 0..p_d {
            let gathered: Vec<Complex64> = self.d_part.groups[i].iter().map(|&g| y[g]).collect();
            z.push(self.u[i].matvec_h(&gathered));
        }
        let mut out = vec![Complex64::ZERO; n2];
        for j in 0..p_x {
            let mut w = vec![Complex64::ZERO; t * p_d];
            for i in 0..p_d {
                w[i * t..(i + 1) * t].copy_from_slice(&z[i][j * t..(j + 1) * t]);
            }
            let block_out = self.v[j].matvec(&w);
            for (row, &g) in self.x_part.groups[j].iter().enumerate() {
                out[g] = block_out[row];
            }
        }
        Ok(out)
    }

    pub fn apply(&self, eta: &ScattererField) -> Result<ScatteringPattern> {
        if eta.grid.n != self.n() {
            return Err(Error::shape(
                "factorization apply",
                format!("grid n={}", self.n()),
                format!("grid n={}", eta.grid.n),
            ));
        }
        let x: Vec<Complex64> = eta.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        ScatteringPattern::from_values(self.m(), self.apply_vec(&x)?)
    }

    pub fn apply_adjoint(&self, d: &ScatteringPattern) -> Result<Vec<Complex64>> {
        if d.m != self.m() {
            return Err(Error::shape(
                "factorization adjoint",
                format!("M={}", self.m()),
                format!("M={}", d.m),
            ));
        }
        self.apply_adjoint_vec(&d.values)
    }

    /// Dense `U Sigma V*`; test oracles only.
    pub fn dense(&self) -> CMat {
        let m2 = self.m() * self.m();
        let n2 = self.n() * self.n();
        let t = self.t;
        let mut out = CMat::zeros(m2, n2);
        for i in 0..self.d_part.p {
            for j in 0..self.x_part.p {
                let rows = &self.d_part.groups[i];
                let cols = &self.x_part.groups[j];
                for (br, &gr) in rows.iter().enumerate() {
                    for (bc, &gc) in cols.iter().enumerate() {
                        let mut acc = Complex64::ZERO;
                        for k in 0..t {
                            acc += self.u[i].at(br, j * t + k) * self.v[j].at(bc, i * t + k).conj();
                        }
                        out.set(gr, gc, acc);
                    }
                }
            }
        }
        out
    }
}

/// Truncated-SVD factorization: per block the best rank-`t` approximation,
/// singular values absorbed into `U`.
pub fn build_factorization(
    op: &BornOperator,
    d_part: &PartitionScheme,
    x_part: &PartitionScheme,
    t: usize,
) -> Result<SwitchFactorization> {
    if t == 0 {
        return Err(Error::config("factorization rank t must be >= 1"));
    }
    op.check_partitions(d_part, x_part)?;
    let p_x = x_part.p;
    let rows_per = d_part.group_len();
    let cols_per = x_part.group_len();
    let clamped = t > rows_per.min(cols_per);

    let blocks: Vec<(usize, usize)> =
        (0..d_part.p).flat_map(|i| (0..p_x).map(move |j| (i, j))).collect();
    let factored: Vec<(CMat, CMat)> = blocks
        .par_iter()
        .map(|&(i, j)| {
            let block = op.block(d_part, x_part, i, j).expect("valid indices");
            let s = svd(&block);
            let mut u_ij = CMat::zeros(rows_per, t);
            let mut v_ij = CMat::zeros(cols_per, t);
            for k in 0..t.min(s.sigma.len()) {
                let sk = s.sigma[k];
                for r in 0..rows_per {
                    u_ij.set(r, k, s.u.at(r, k) * sk);
                }
                for c in 0..cols_per {
                    v_ij.set(c, k, s.v.at(c, k));
                }
            }
            (u_ij, v_ij)
        })
        .collect();

    Ok(assemble_factorization(d_part, x_part, t, clamped, |i, j| &factored[i * p_x + j]))
}

/// Variant with one column basis per data group, reused by every grid group,
/// so the assembled `V_0, .., V_{P_X-1}` all coincide.
///
/// Grid squares are translated copies of each other, so for a fixed data
/// group the blocks differ only by unit-modulus row phases; the right
/// singular basis of the first block therefore serves every other one, and
/// each `U_ij` is the projection of its block onto that shared basis.
pub fn build_factorization_shared_v(
    op: &BornOperator,
    d_part: &PartitionScheme,
    x_part: &PartitionScheme,
    t: usize,
) -> Result<SwitchFactorization> {
    if t == 0 {
        return Err(Error::config("factorization rank t must be >= 1"));
    }
    op.check_partitions(d_part, x_part)?;
    let p_x = x_part.p;
    let rows_per = d_part.group_len();
    let cols_per = x_part.group_len();
    let clamped = t > rows_per.min(cols_per);

    let per_group: Vec<Vec<(CMat, CMat)>> = (0..d_part.p)
        .into_par_iter()
        .map(|i| {
            let first = op.block(d_part, x_part, i, 0).expect("valid indices");
            let s = svd(&first);
            let mut basis = CMat::zeros(cols_per, t);
            for k in 0..t.min(s.sigma.len()) {
                for c in 0..cols_per {
                    basis.set(c, k, s.v.at(c, k));
                }
            }
            (0..p_x)
                .map(|j| {
                    let block = op.block(d_part, x_part, i, j).expect("valid indices");
                    (block.matmul(&basis), basis.clone())
                })
                .collect()
        })
        .collect();

    Ok(assemble_factorization(d_part, x_part, t, clamped, |i, j| &per_group[i][j]))
}

fn assemble_factorization<'a>(
    d_part: &PartitionScheme,
    x_part: &PartitionScheme,
    t: usize,
    clamped: bool,
    factored: impl Fn(usize, usize) -> &'a (CMat, CMat),
) -> SwitchFactorization {
    let p_d = d_part.p;
    let p_x = x_part.p;
    let rows_per = d_part.group_len();
    let cols_per = x_part.group_len();

    let mut u = Vec::with_capacity(p_d);
    for i in 0..p_d {
        let mut ui = CMat::zeros(rows_per, t * p_x);
        for j in 0..p_x {
            let (u_ij, _) = factored(i, j);
            for r in 0..rows_per {
                for k in 0..t {
                    ui.set(r, j * t + k, u_ij.at(r, k));
                }
            }
        }
        u.push(ui);
    }
    let mut v = Vec::with_capacity(p_x);
    for j in 0..p_x {
        let mut vj = CMat::zeros(cols_per, t * p_d);
        for i in 0..p_d {
            let (_, v_ij) = factored(i, j);
            for c in 0..cols_per {
                for k in 0..t {
                    vj.set(c, i * t + k, v_ij.at(c, k));
                }
            }
        }
        v.push(vj);
    }
    SwitchFactorization { t, d_part: d_part.clone(), x_part: x_part.clone(), u, v, clamped }
}

/// Blockwise Eckart-Young tail `sqrt(sum_ij sum_{k > t} sigma_k(A_ij)^2)`:
/// the Frobenius error any rank-`t` blockwise truncation attains at best.
pub fn eckart_young_tail(
    op: &BornOperator,
    d_part: &PartitionScheme,
    x_part: &PartitionScheme,
    t: usize,
) -> Result<f64> {
    op.check_partitions(d_part, x_part)?;
    let pairs: Vec<(usize, usize)> = (0..d_part.p)
        .flat_map(|i| (0..x_part.p).map(move |j| (i, j)))
        .collect();
    let total: f64 = pairs
        .par_iter()
        .map(|&(i, j)| {
            let block = op.block(d_part, x_part, i, j).expect("valid indices");
            let s = svd(&block);
            s.sigma.iter().skip(t).map(|x| x * x).sum::<f64>()
        })
        .sum();
    Ok(total.sqrt())
}

/// Result of the linear back-projection baseline.
#[derive(Debug, Clone)]
pub struct Backprojection {
    /// Real part of the regularized solution, on the grid.
    pub field: ScattererField,
    /// The full complex solution of `(A*A + eps I) z = A* d`.
    pub complex: Vec<Complex64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Filtered back-projection `(A*A + eps I)^{-1} A* d` by conjugate gradients
/// on the normal equations (relative residual 1e-8, at most 500 iterations).
pub fn filtered_backprojection(
    op: &BornOperator,
    d: &ScatteringPattern,
    eps: f64,
) -> Result<Backprojection> {
    if !(eps > 0.0) {
        return Err(Error::config(format!("regularization eps must be positive, got {eps}")));
    }
    if d.m != op.m {
        return Err(Error::shape("backprojection", format!("M={}", op.m), format!("M={}", d.m)));
    }
    let rhs = op.apply_adjoint_vec(&d.values);
    let normal = |x: &[Complex64]| {
        let ax = op.apply_vec(x);
        let mut out = op.apply_adjoint_vec(&ax);
        for (o, xi) in out.iter_mut().zip(x) {
            *o += eps * xi;
        }
        out
    };
    let outcome = hermitian_cg(normal, &rhs, 1e-8, 500);
    let field = ScattererField::from_values(op.grid, outcome.x.iter().map(|z| z.re).collect())?;
    Ok(Backprojection {
        field,
        complex: outcome.x,
        converged: outcome.converged,
        iterations: outcome.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_directions, make_partition};
    use crate::linalg::{dot_hermitian, norm2};

    fn far_field_op(n: usize, m: usize, omega: f64) -> BornOperator {
        let grid = GridSpec::new(n, omega).unwrap();
        let dirs = make_directions(m).unwrap();
        BornOperator::far_field(&grid, &dirs).unwrap()
    }

    fn random_cvec(seed: u64, n: usize) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn zero_frequency_block_is_all_ones() {
        let op = far_field_op(4, 4, 0.0);
        let d_part = make_partition(4, 4).unwrap();
        let x_part = make_partition(4, 4).unwrap();
        let b = op.block(&d_part, &x_part, 1, 2).unwrap();
        for v in &b.data {
            assert!((v - Complex64::ONE).norm() < 1e-15);
        }
    }

    #[test]
    fn singleton_block_has_unit_modulus() {
        let op = far_field_op(4, 4, 2.0);
        let d_part = make_partition(4, 16).unwrap();
        let x_part = make_partition(4, 16).unwrap();
        let b = op.block(&d_part, &x_part, 7, 3).unwrap();
        assert_eq!((b.rows, b.cols), (1, 1));
        assert!((b.at(0, 0).norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn far_field_block_matches_elementwise_oracle() {
        let op = far_field_op(32, 32, 24.0);
        let d_part = make_partition(32, 16).unwrap();
        let x_part = make_partition(32, 16).unwrap();
        let grid = GridSpec::new(32, 24.0).unwrap();
        let dirs = make_directions(32).unwrap();
        for (i, j) in [(0usize, 0usize), (5, 11), (15, 15)] {
            let b = op.block(&d_part, &x_part, i, j).unwrap();
            for (br, &rs) in d_part.groups[i].iter().enumerate() {
                for (bc, &xf) in x_part.groups[j].iter().enumerate() {
                    let r = dirs.unit(rs / 32);
                    let s = dirs.unit(rs % 32);
                    let x = grid.point(xf / 32, xf % 32);
                    let expect =
                        Complex64::cis(24.0 * ((s[0] - r[0]) * x[0] + (s[1] - r[1]) * x[1]));
                    assert!((b.at(br, bc) - expect).norm() <= 1e-15);
                }
            }
        }
    }

    #[test]
    fn block_out_of_range_rejected() {
        let op = far_field_op(4, 4, 2.0);
        let d_part = make_partition(4, 4).unwrap();
        let x_part = make_partition(4, 4).unwrap();
        assert!(op.block(&d_part, &x_part, 4, 0).is_err());
    }

    #[test]
    fn rank_of_outer_product_and_zero() {
        let u = random_cvec(1, 8);
        let w = random_cvec(2, 6);
        let rank1 = CMat::from_fn(8, 6, |r, c| u[r] * w[c]);
        assert_eq!(block_rank(&rank1, 1e-3), 1);
        assert_eq!(block_rank(&rank1, 0.9999), 1);
        let zero = CMat::zeros(5, 4);
        assert_eq!(block_rank(&zero, 1e-3), 0);
    }

    #[test]
    fn rank_report_monotone_in_tolerance() {
        let op = far_field_op(8, 8, 6.0);
        let d_part = make_partition(8, 4).unwrap();
        let x_part = make_partition(8, 4).unwrap();
        let report = rank_report(&op, &d_part, &x_part, &[1e-1, 1e-3, 1e-6]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let ranks: Vec<usize> = [1e-1, 1e-3, 1e-6]
                    .iter()
                    .map(|&tol| {
                        report
                            .entries
                            .iter()
                            .find(|e| e.i == i && e.j == j && e.tol == tol)
                            .unwrap()
                            .rank
                    })
                    .collect();
                assert!(ranks[0] <= ranks[1] && ranks[1] <= ranks[2]);
                assert!(ranks[2] <= 16); // block dims
            }
        }
        let csv = report.to_csv();
        assert!(csv.starts_with("i,j,tol,rank,sigma_max\n"));
        assert_eq!(csv.lines().count(), 1 + 3 * 16);
    }

    #[test]
    fn phase_identity_small_and_degenerate() {
        let op = far_field_op(16, 16, 12.0);
        let d_part = make_partition(16, 16).unwrap();
        let x_part = make_partition(16, 16).unwrap();
        let dev = verify_phase_identity(&op, &d_part, &x_part, 1, 3).unwrap();
        assert!(dev <= 1e-12, "single point deviation {dev}");

        // degenerate: centers themselves collapse the first factor to 1
        let grid = GridSpec::new(16, 12.0).unwrap();
        let (ri, si) = d_group_center(&d_part, 5);
        let xj = x_group_center(&x_part, &grid, 2);
        let q = [si[0] - ri[0], si[1] - ri[1]];
        let lhs = Complex64::cis(12.0 * (q[0] * xj[0] + q[1] * xj[1]));
        let rhs = Complex64::cis(0.0)
            * Complex64::cis(12.0 * (q[0] * xj[0] + q[1] * xj[1]))
            * Complex64::cis(12.0 * (q[0] * xj[0] + q[1] * xj[1]))
            * Complex64::cis(-12.0 * (q[0] * xj[0] + q[1] * xj[1]));
        assert!((lhs - rhs).norm() <= 1e-12);
    }

    #[test]
    fn phase_identity_at_high_frequency() {
        let grid = GridSpec::new(80, 60.0).unwrap();
        let dirs = make_directions(80).unwrap();
        let op = BornOperator::far_field(&grid, &dirs).unwrap();
        let d_part = make_partition(80, 16).unwrap();
        let x_part = make_partition(80, 64).unwrap();
        let dev = verify_phase_identity(&op, &d_part, &x_part, 1000, 9).unwrap();
        assert!(dev <= 1e-10, "max deviation {dev}");
    }

    #[test]
    fn full_rank_truncation_reconstructs_exactly() {
        let op = far_field_op(8, 8, 6.0);
        let d_part = make_partition(8, 4).unwrap();
        let x_part = make_partition(8, 4).unwrap();
        // t = full block dimension
        let f = build_factorization(&op, &d_part, &x_part, 16).unwrap();
        let dense = op.dense();
        let err = dense.sub(&f.dense()).fro_norm() / dense.fro_norm();
        assert!(err < 1e-12, "full-rank reconstruction error {err}");
    }

    #[test]
    fn rank_one_kernel_needs_t_one() {
        // omega = 0 kernel is the all-ones matrix
        let op = far_field_op(4, 4, 0.0);
        let d_part = make_partition(4, 4).unwrap();
        let x_part = make_partition(4, 4).unwrap();
        let f = build_factorization(&op, &d_part, &x_part, 1).unwrap();
        let dense = op.dense();
        let err = dense.sub(&f.dense()).fro_norm() / dense.fro_norm();
        assert!(err < 1e-13, "rank-1 reconstruction error {err}");
    }

    #[test]
    fn truncation_error_matches_eckart_young_tail() {
        let op = far_field_op(8, 8, 6.0);
        let d_part = make_partition(8, 4).unwrap();
        let x_part = make_partition(8, 4).unwrap();
        let dense = op.dense();
        let mut previous = f64::INFINITY;
        for t in [1usize, 2, 3] {
            let f = build_factorization(&op, &d_part, &x_part, t).unwrap();
            let err = dense.sub(&f.dense()).fro_norm();
            let tail = eckart_young_tail(&op, &d_part, &x_part, t).unwrap();
            assert!(
                (err - tail).abs() <= 1e-10 * tail.max(1e-30),
                "t={t}: err {err} vs tail {tail}"
            );
            assert!(err <= previous + 1e-12, "error not monotone at t={t}");
            previous = err;
        }
    }

    #[test]
    fn apply_matches_dense_oracle_and_adjoint_pairing() {
        let op = far_field_op(8, 8, 6.0);
        let d_part = make_partition(8, 4).unwrap();
        let x_part = make_partition(8, 16).unwrap();
        let f = build_factorization(&op, &d_part, &x_part, 2).unwrap();
        let dense = f.dense();

        let x = random_cvec(4, 64);
        let via_layer = f.apply_vec(&x).unwrap();
        let via_dense = dense.matvec(&x);
        let dev = via_layer
            .iter()
            .zip(&via_dense)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / norm2(&via_dense);
        assert!(dev <= 1e-12, "apply vs dense {dev}");

        // eta = 0 gives d = 0
        let zero = f.apply_vec(&vec![Complex64::ZERO; 64]).unwrap();
        assert!(zero.iter().all(|z| *z == Complex64::ZERO));

        // <F x, y> = <x, F* y>
        let y = random_cvec(5, 64);
        let fx_y = dot_hermitian(&f.apply_vec(&x).unwrap(), &y);
        let x_fty = dot_hermitian(&x, &f.apply_adjoint_vec(&y).unwrap());
        assert!(
            (fx_y - x_fty).norm() <= 1e-12 * fx_y.norm().max(x_fty.norm()),
            "pairing mismatch {} vs {}",
            fx_y,
            x_fty
        );
    }

    #[test]
    fn born_adjoint_pairing() {
        let op = far_field_op(8, 8, 6.0);
        let x = random_cvec(6, 64);
        let y = random_cvec(7, 64);
        let ax_y = dot_hermitian(&op.apply_vec(&x), &y);
        let x_aty = dot_hermitian(&x, &op.apply_adjoint_vec(&y));
        assert!((ax_y - x_aty).norm() <= 1e-12 * ax_y.norm());
    }

    #[test]
    fn clamped_rank_is_reported() {
        let op = far_field_op(4, 4, 2.0);
        let d_part = make_partition(4, 16).unwrap(); // singleton blocks
        let x_part = make_partition(4, 16).unwrap();
        let f = build_factorization(&op, &d_part, &x_part, 3).unwrap();
        assert!(f.clamped);
        // still reconstructs exactly: every block is 1x1
        let dense = op.dense();
        let err = dense.sub(&f.dense()).fro_norm() / dense.fro_norm();
        assert!(err < 1e-13);
    }

    #[test]
    fn backprojection_zero_data_gives_zero() {
        let op = far_field_op(8, 8, 6.0);
        let d = ScatteringPattern::zeros(8);
        let bp = filtered_backprojection(&op, &d, 1e-3).unwrap();
        assert!(bp.converged);
        assert!(bp.field.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backprojection_large_eps_is_scaled_adjoint() {
        let op = far_field_op(8, 8, 6.0);
        let d = ScatteringPattern::from_values(8, random_cvec(8, 64)).unwrap();
        let a_fro2 = op.dense().fro_norm().powi(2); // upper bound on ||A*A||
        let eps = 1e6 * a_fro2;
        let bp = filtered_backprojection(&op, &d, eps).unwrap();
        let target: Vec<Complex64> =
            op.apply_adjoint_vec(&d.values).iter().map(|z| z / eps).collect();
        let dev = bp
            .complex
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / norm2(&target);
        assert!(dev <= 1e-3, "Neumann-limit deviation {dev}");
    }

    #[test]
    fn normal_operator_translation_invariance_far_field() {
        let op = far_field_op(8, 8, 6.0);
        let n = 8;
        // pairs (x, y) and (x', y') with equal index offset have equal entries
        for &((x0, y0), (dx, dy)) in
            &[((1usize, 2usize), (3usize, 1usize)), ((0, 0), (4, 4)), ((2, 5), (1, 3))]
        {
            let x = x0 * n + y0;
            let y = (x0 + dx) * n + (y0 + dy);
            let xs = (x0 + 1) * n + (y0 + 2);
            let ys = (x0 + 1 + dx) * n + (y0 + 2 + dy);
            let a = op.normal_entry(x, y);
            let b = op.normal_entry(xs, ys);
            assert!(
                (a - b).norm() <= 1e-12 * a.norm().max(1.0),
                "offset pair mismatch {a} vs {b}"
            );
        }
    }
}
