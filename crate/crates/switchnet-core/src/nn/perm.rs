//! The vect and square layers: mutually inverse permutations that regroup a
//! square field by partition squares.
//!
//! `vect` reshapes an `n x n` field to `(sqrt P, n/sqrt P, sqrt P, n/sqrt P)`,
//! swaps the middle axes, and flattens (last axis fastest), so entries of one
//! partition square become contiguous. `square` is the inverse.

use num_complex::Complex64;

use crate::error::{Error, Result};

fn check(n: usize, p: usize) -> Result<usize> {
    let sqrt_p = (p as f64).sqrt().round() as usize;
    if p == 0 || sqrt_p * sqrt_p != p {
        return Err(Error::config(format!("vect/square needs a perfect-square P, got {p}")));
    }
    if n % sqrt_p != 0 {
        return Err(Error::config(format!("sqrt(P) = {sqrt_p} does not divide n = {n}")));
    }
    Ok(sqrt_p)
}

/// Index map of the vect layer: `out[k] = input[perm[k]]`.
pub fn vect_perm(n: usize, p: usize) -> Result<Vec<usize>> {
    let sqrt_p = check(n, p)?;
    let side = n / sqrt_p;
    let mut perm = Vec::with_capacity(n * n);
    for a in 0..sqrt_p {
        for c in 0..sqrt_p {
            for b in 0..side {
                for d in 0..side {
                    perm.push((a * side + b) * n + (c * side + d));
                }
            }
        }
    }
    Ok(perm)
}

pub fn vect(z: &[Complex64], n: usize, p: usize) -> Result<Vec<Complex64>> {
    if z.len() != n * n {
        return Err(Error::shape("vect", format!("{}", n * n), format!("{}", z.len())));
    }
    let perm = vect_perm(n, p)?;
    Ok(perm.into_iter().map(|src| z[src]).collect())
}

pub fn square(z: &[Complex64], n: usize, p: usize) -> Result<Vec<Complex64>> {
    if z.len() != n * n {
        return Err(Error::shape("square", format!("{}", n * n), format!("{}", z.len())));
    }
    let perm = vect_perm(n, p)?;
    let mut out = vec![Complex64::ZERO; n * n];
    for (k, src) in perm.into_iter().enumerate() {
        out[src] = z[k];
    }
    Ok(out)
}
