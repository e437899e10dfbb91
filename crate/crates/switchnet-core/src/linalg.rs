//! Dense and banded complex linear algebra used by the solver and the
//! operator factorization: banded LU with partial pivoting, one-sided Jacobi
//! SVD, and conjugate gradients for Hermitian positive-definite systems.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Unconjugated bilinear pairing `sum_i x_i y_i`.
pub fn dot_unconjugated(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Hermitian inner product `sum_i conj(x_i) y_i`.
pub fn dot_hermitian(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm2(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat { rows, cols, data: vec![Complex64::ZERO; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = CMat::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![Complex64::ZERO; self.rows];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            y[r] = dot_unconjugated(row, x);
        }
        y
    }

    /// `A^T x` (unconjugated).
    pub fn matvec_t(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![Complex64::ZERO; self.cols];
        for r in 0..self.rows {
            let xv = x[r];
            if xv == Complex64::ZERO {
                continue;
            }
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (yv, av) in y.iter_mut().zip(row) {
                *yv += av * xv;
            }
        }
        y
    }

    /// `A^H x`.
    pub fn matvec_h(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![Complex64::ZERO; self.cols];
        for r in 0..self.rows {
            let xv = x[r];
            if xv == Complex64::ZERO {
                continue;
            }
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (yv, av) in y.iter_mut().zip(row) {
                *yv += av.conj() * xv;
            }
        }
        y
    }

    /// `conj(A) x`.
    pub fn matvec_conj(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![Complex64::ZERO; self.rows];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = Complex64::ZERO;
            for (av, xv) in row.iter().zip(x) {
                acc += av.conj() * xv;
            }
            y[r] = acc;
        }
        y
    }

    pub fn matmul(&self, other: &CMat) -> CMat {
        assert_eq!(self.cols, other.rows);
        let mut out = CMat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(r, k);
                if a == Complex64::ZERO {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.at(k, c);
                }
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |r, c| self.at(c, r).conj())
    }

    pub fn fro_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn sub(&self, other: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        CMat { rows: self.rows, cols: self.cols, data }
    }
}

/// Complex band matrix in LAPACK-style storage: `kl` subdiagonals, `ku`
/// superdiagonals, column-major panels of height `2*kl + ku + 1` so that LU
/// fill-in fits in place. Entry `(i, j)` lives at panel row `kl + ku + i - j`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    ldab: usize,
    data: Vec<Complex64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, ldab, data: vec![Complex64::ZERO; ldab * n] }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + self.ku >= j && j + self.kl >= i);
        j * self.ldab + (self.kl + self.ku + i - j)
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        if i + self.ku >= j && j + self.kl >= i {
            self.data[self.slot(i, j)]
        } else {
            Complex64::ZERO
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: Complex64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![Complex64::ZERO; self.n];
        for j in 0..self.n {
            let xj = x[j];
            if xj == Complex64::ZERO {
                continue;
            }
            let i0 = j.saturating_sub(self.ku);
            let i1 = (j + self.kl).min(self.n - 1);
            let base = j * self.ldab + self.kl + self.ku;
            for i in i0..=i1 {
                y[i] += self.data[base + i - j] * xj;
            }
        }
        y
    }

    /// LU factorization with partial pivoting, in place. Fails on an exactly
    /// zero pivot, naming its index.
    pub fn factorize(mut self) -> Result<BandLu> {
        let n = self.n;
        let (kl, ku, ldab) = (self.kl, self.ku, self.ldab);
        let kv = kl + ku; // superdiagonals in U after pivoting
        let mut ipiv = vec![0usize; n];

        for j in 0..n {
            // pivot search within the column's subdiagonal window
            let i1 = (j + kl).min(n - 1);
            let mut piv_row = j;
            let mut piv_mag = self.data[self.slot(j, j)].norm();
            for i in (j + 1)..=i1 {
                let mag = self.data[self.slot(i, j)].norm();
                if mag > piv_mag {
                    piv_mag = mag;
                    piv_row = i;
                }
            }
            if piv_mag == 0.0 {
                return Err(Error::SingularPivot { pivot: j });
            }
            ipiv[j] = piv_row;

            // swap rows j and piv_row over the active columns
            if piv_row != j {
                let k1 = (j + kv).min(n - 1);
                for k in j..=k1 {
                    let a = k * ldab + kl + ku + j - k;
                    let b = k * ldab + kl + ku + piv_row - k;
                    self.data.swap(a, b);
                }
            }

            // eliminate below the pivot
            let pivot = self.data[self.slot(j, j)];
            let k1 = (j + kv).min(n - 1);
            for i in (j + 1)..=i1 {
                let l = self.data[self.slot(i, j)] / pivot;
                self.data[j * ldab + kl + ku + i - j] = l;
                if l != Complex64::ZERO {
                    for k in (j + 1)..=k1 {
                        let base = k * ldab + kl + ku;
                        let ujk = self.data[base + j - k];
                        if ujk != Complex64::ZERO {
                            self.data[base + i - k] -= l * ujk;
                        }
                    }
                }
            }
        }

        Ok(BandLu { n, kl, ku, ldab, data: self.data, ipiv })
    }
}

/// Factored band matrix; reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    data: Vec<Complex64>,
    ipiv: Vec<usize>,
}

impl BandLu {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
        if rhs.len() != self.n {
            return Err(Error::shape("band solve", format!("{}", self.n), format!("{}", rhs.len())));
        }
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [Complex64]) {
        let n = self.n;
        let (kl, ku, ldab) = (self.kl, self.ku, self.ldab);
        let kv = kl + ku;

        // L y = P b
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                x.swap(j, p);
            }
            let xj = x[j];
            if xj == Complex64::ZERO {
                continue;
            }
            let i1 = (j + kl).min(n - 1);
            let base = j * ldab + kl + ku;
            for i in (j + 1)..=i1 {
                x[i] -= self.data[base + i - j] * xj;
            }
        }

        // U x = y
        for j in (0..n).rev() {
            let base = j * ldab + kl + ku;
            x[j] /= self.data[base];
            let xj = x[j];
            if xj == Complex64::ZERO {
                continue;
            }
            let i0 = j.saturating_sub(kv);
            for i in i0..j {
                x[i] -= self.data[base + i - j] * xj;
            }
        }
    }
}

/// Result of a singular value decomposition `A = U diag(sigma) V^H`.
///
/// `sigma` is sorted in descending order. Columns of `U` associated with a
/// zero singular value are left as zero vectors.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: CMat,
    pub sigma: Vec<f64>,
    pub v: CMat,
}

impl SvdResult {
    /// Reassemble `U[,:t] diag(sigma[:t]) V[,:t]^H`.
    pub fn truncated(&self, t: usize) -> CMat {
        let t = t.min(self.sigma.len());
        let m = self.u.rows;
        let n = self.v.rows;
        let mut out = CMat::zeros(m, n);
        for k in 0..t {
            let s = self.sigma[k];
            for r in 0..m {
                let us = self.u.at(r, k) * s;
                for c in 0..n {
                    out.data[r * n + c] += us * self.v.at(c, k).conj();
                }
            }
        }
        out
    }
}

/// One-sided Jacobi SVD for complex matrices.
///
/// Accurate to machine precision for the block sizes used here (a few
/// hundred); cost is O(m n^2) per sweep.
pub fn svd(a: &CMat) -> SvdResult {
    if a.rows < a.cols {
        // factor the adjoint and swap roles
        let s = svd(&a.adjoint());
        return SvdResult { u: s.v, sigma: s.sigma, v: s.u };
    }
    let m = a.rows;
    let n = a.cols;

    // column-major working copies
    let mut cols: Vec<Vec<Complex64>> = (0..n)
        .map(|c| (0..m).map(|r| a.at(r, c)).collect())
        .collect();
    let mut v: Vec<Vec<Complex64>> = (0..n)
        .map(|c| {
            let mut e = vec![Complex64::ZERO; n];
            e[c] = Complex64::ONE;
            e
        })
        .collect();

    let tol = 1e-15;
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let app: f64 = cols[p].iter().map(|z| z.norm_sqr()).sum();
                let aqq: f64 = cols[q].iter().map(|z| z.norm_sqr()).sum();
                let apq = dot_hermitian(&cols[p], &cols[q]);
                let mag = apq.norm();
                if mag <= tol * (app * aqq).sqrt() || mag == 0.0 {
                    continue;
                }
                rotated = true;
                let phase = apq / mag; // e^{i phi}
                let zeta = (aqq - app) / (2.0 * mag);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                let sp = sn * phase; // sn e^{i phi}
                let spc = sn * phase.conj(); // sn e^{-i phi}
                for r in 0..m {
                    let xp = cols[p][r];
                    let xq = cols[q][r];
                    cols[p][r] = cs * xp - spc * xq;
                    cols[q][r] = sp * xp + cs * xq;
                }
                for r in 0..n {
                    let xp = v[p][r];
                    let xq = v[q][r];
                    v[p][r] = cs * xp - spc * xq;
                    v[q][r] = sp * xp + cs * xq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    // singular values and descending sort
    let mut order: Vec<usize> = (0..n).collect();
    let sigmas: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    order.sort_by(|&i, &j| sigmas[j].partial_cmp(&sigmas[i]).unwrap());

    let mut u = CMat::zeros(m, n);
    let mut vm = CMat::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (k, &idx) in order.iter().enumerate() {
        let s = sigmas[idx];
        sigma.push(s);
        if s > 0.0 {
            for r in 0..m {
                u.set(r, k, cols[idx][r] / s);
            }
        }
        for r in 0..n {
            vm.set(r, k, v[idx][r]);
        }
    }
    SvdResult { u, sigma, v: vm }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<Complex64>,
    pub converged: bool,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradients for a Hermitian positive-definite operator given as a
/// closure. Stops at `rel_tol` on the residual or after `max_iter` steps,
/// returning the best iterate either way.
pub fn hermitian_cg(
    apply: impl Fn(&[Complex64]) -> Vec<Complex64>,
    b: &[Complex64],
    rel_tol: f64,
    max_iter: usize,
) -> CgOutcome {
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return CgOutcome { x: vec![Complex64::ZERO; n], converged: true, iterations: 0, relative_residual: 0.0 };
    }
    let mut x = vec![Complex64::ZERO; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rho = dot_hermitian(&r, &r).re;
    let mut iterations = 0;
    for _ in 0..max_iter {
        if rho.sqrt() <= rel_tol * bnorm {
            return CgOutcome { x, converged: true, iterations, relative_residual: rho.sqrt() / bnorm };
        }
        let ap = apply(&p);
        let denom = dot_hermitian(&p, &ap).re;
        if denom <= 0.0 {
            break; // lost positive definiteness numerically
        }
        let alpha = rho / denom;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rho_next = dot_hermitian(&r, &r).re;
        let beta = rho_next / rho;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rho = rho_next;
        iterations += 1;
    }
    let relres = rho.sqrt() / bnorm;
    CgOutcome { x, converged: relres <= rel_tol, iterations, relative_residual: relres }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn random_band(rng: &mut ChaCha8Rng, n: usize, kl: usize, ku: usize) -> BandMatrix {
        let mut b = BandMatrix::zeros(n, kl, ku);
        for j in 0..n {
            let i0 = j.saturating_sub(ku);
            let i1 = (j + kl).min(n - 1);
            for i in i0..=i1 {
                let v = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                b.set(i, j, v);
            }
        }
        // diagonal dominance keeps it comfortably nonsingular
        for i in 0..n {
            b.add(i, i, Complex64::new(4.0 + (kl + ku) as f64, 1.0));
        }
        b
    }

    #[test]
    fn band_solve_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (n, kl, ku) in [(12usize, 3usize, 3usize), (40, 7, 7), (25, 2, 5)] {
            let a = random_band(&mut rng, n, kl, ku);
            let v = random_vec(&mut rng, n);
            let rhs = a.matvec(&v);
            let lu = a.clone().factorize().unwrap();
            let x = lu.solve(&rhs).unwrap();
            let err: f64 = x
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt()
                / norm2(&v);
            assert!(err < 1e-10, "round trip error {err}");
        }
    }

    #[test]
    fn band_solve_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_band(&mut rng, 60, 9, 9);
        let rhs = random_vec(&mut rng, 60);
        let lu = a.clone().factorize().unwrap();
        let x = lu.solve(&rhs).unwrap();
        let ax = a.matvec(&x);
        let res: f64 = ax
            .iter()
            .zip(&rhs)
            .map(|(p, q)| (p - q).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / norm2(&rhs);
        assert!(res < 1e-10, "residual {res}");
    }

    #[test]
    fn band_zero_rhs_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_band(&mut rng, 20, 4, 4);
        let lu = a.factorize().unwrap();
        let x = lu.solve(&vec![Complex64::ZERO; 20]).unwrap();
        assert!(x.iter().all(|v| *v == Complex64::ZERO));
    }

    #[test]
    fn singular_pivot_is_reported() {
        // row 2 entirely zero
        let mut a = BandMatrix::zeros(4, 1, 1);
        for i in 0..4 {
            if i != 2 {
                a.set(i, i, Complex64::ONE);
            }
        }
        a.set(0, 1, Complex64::new(0.5, 0.0));
        match a.factorize() {
            Err(Error::SingularPivot { pivot }) => assert_eq!(pivot, 2),
            other => panic!("expected singular pivot, got {other:?}"),
        }
    }

    #[test]
    fn band_pivoting_handles_zero_diagonal() {
        // nonsingular but needs row interchanges
        let mut a = BandMatrix::zeros(3, 1, 1);
        a.set(0, 0, Complex64::ZERO);
        a.set(1, 0, Complex64::ONE);
        a.set(0, 1, Complex64::ONE);
        a.set(2, 1, Complex64::new(0.0, 1.0));
        a.set(1, 2, Complex64::new(2.0, 0.0));
        a.set(2, 2, Complex64::ONE);
        let v = vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 2.0),
            Complex64::new(0.5, 0.5),
        ];
        let rhs = a.matvec(&v);
        let x = a.clone().factorize().unwrap().solve(&rhs).unwrap();
        for (p, q) in x.iter().zip(&v) {
            assert!((p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn svd_reconstructs_random_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (m, n) in [(8usize, 8usize), (12, 5), (5, 12)] {
            let a = CMat::from_fn(m, n, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let s = svd(&a);
            let full = s.truncated(n.min(m));
            let err = a.sub(&full).fro_norm() / a.fro_norm();
            assert!(err < 1e-12, "svd reconstruction error {err}");
            // descending order
            for w in s.sigma.windows(2) {
                assert!(w[0] >= w[1]);
            }
            // orthonormal columns of U and V
            for k in 0..s.sigma.len() {
                for l in 0..s.sigma.len() {
                    let uk: Vec<Complex64> = (0..m).map(|r| s.u.at(r, k)).collect();
                    let ul: Vec<Complex64> = (0..m).map(|r| s.u.at(r, l)).collect();
                    let d = dot_hermitian(&uk, &ul);
                    let expect = if k == l { 1.0 } else { 0.0 };
                    assert!((d - expect).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn svd_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_vec(&mut rng, 9);
        let w = random_vec(&mut rng, 6);
        let a = CMat::from_fn(9, 6, |r, c| u[r] * w[c]);
        let s = svd(&a);
        assert!(s.sigma[0] > 1e-3);
        assert!(s.sigma[1] < 1e-13 * s.sigma[0]);
    }

    #[test]
    fn svd_zero_matrix() {
        let a = CMat::zeros(5, 3);
        let s = svd(&a);
        assert!(s.sigma.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cg_solves_hermitian_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 24;
        let b = CMat::from_fn(n, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        // H = B^H B + I is Hermitian positive definite
        let h = b.adjoint().matmul(&b);
        let apply = |x: &[Complex64]| {
            let mut y = h.matvec(x);
            for (yi, xi) in y.iter_mut().zip(x) {
                *yi += xi;
            }
            y
        };
        let rhs = random_vec(&mut rng, n);
        let out = hermitian_cg(apply, &rhs, 1e-12, 500);
        assert!(out.converged);
        let mut res = apply(&out.x);
        for (r, b) in res.iter_mut().zip(&rhs) {
            *r -= b;
        }
        assert!(norm2(&res) / norm2(&rhs) < 1e-10);
    }

    #[test]
    fn cg_zero_rhs() {
        let out = hermitian_cg(|x| x.to_vec(), &vec![Complex64::ZERO; 7], 1e-10, 10);
        assert!(out.converged);
        assert!(out.x.iter().all(|v| *v == Complex64::ZERO));
    }
}
