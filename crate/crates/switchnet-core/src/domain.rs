//! Geometry, discretization, partitions, and random scatterer generation.
//!
//! Everything here is immutable after construction and safe to share across
//! parallel workers. Random sampling takes an explicit seed; no global state.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Square Cartesian grid over the computation domain.
///
/// Grid points are cell centers: `x(i,j) = (lo + (i+1/2)h, lo + (j+1/2)h)`
/// with `h = (hi-lo)/n`, so all points are strictly inside the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n: usize,
    pub omega: f64,
    pub lo: f64,
    pub hi: f64,
}

impl GridSpec {
    /// Grid over the default domain `[-0.5, 0.5]^2`.
    pub fn new(n: usize, omega: f64) -> Result<Self> {
        Self::with_bounds(n, omega, -0.5, 0.5)
    }

    pub fn with_bounds(n: usize, omega: f64, lo: f64, hi: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::config(format!("grid needs n >= 2, got {n}")));
        }
        if !(hi > lo) {
            return Err(Error::config(format!("empty domain [{lo}, {hi}]")));
        }
        if omega < 0.0 || !omega.is_finite() {
            return Err(Error::config(format!("invalid frequency {omega}")));
        }
        let spec = GridSpec { n, omega, lo, hi };
        // At least ~4 points per wavelength.
        if spec.h() * omega > std::f64::consts::PI / 2.0 + 1e-12 {
            return Err(Error::config(format!(
                "grid too coarse: h*omega = {:.4} exceeds pi/2",
                spec.h() * omega
            )));
        }
        Ok(spec)
    }

    pub fn h(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    /// Cell-center coordinates of grid point `(i, j)`; `i` indexes the first
    /// coordinate, `j` the second.
    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.h();
        [
            self.lo + (i as f64 + 0.5) * h,
            self.lo + (j as f64 + 0.5) * h,
        ]
    }

    /// All `n*n` grid points in row-major order (flat index `i*n + j`).
    pub fn points(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.n * self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.push(self.point(i, j));
            }
        }
        out
    }
}

/// Uniformly spaced unit directions on the circle.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    pub m: usize,
    pub angles: Vec<f64>,
}

impl DirectionSet {
    pub fn unit(&self, k: usize) -> [f64; 2] {
        let a = self.angles[k];
        [a.cos(), a.sin()]
    }

    pub fn units(&self) -> Vec<[f64; 2]> {
        (0..self.m).map(|k| self.unit(k)).collect()
    }
}

/// `M` uniformly spaced directions `theta_k = 2 pi k / M`.
pub fn make_directions(m: usize) -> Result<DirectionSet> {
    if m == 0 {
        return Err(Error::config("direction set needs M >= 1"));
    }
    let angles = (0..m)
        .map(|k| std::f64::consts::TAU * k as f64 / m as f64)
        .collect();
    Ok(DirectionSet { m, angles })
}

/// Horizontal acquisition line near the top surface of the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverLine {
    pub m: usize,
    pub depth: f64,
    pub points: Vec<[f64; 2]>,
}

/// `M` uniformly spaced points on the horizontal line at height `depth`,
/// with first coordinates `lo + (k+1/2)(hi-lo)/M`.
///
/// The line must sit inside the domain, within the top 10% of its height.
pub fn make_receiver_line(m: usize, depth: f64, grid: &GridSpec) -> Result<ReceiverLine> {
    if m == 0 {
        return Err(Error::config("receiver line needs M >= 1"));
    }
    if depth <= grid.lo || depth >= grid.hi {
        return Err(Error::config(format!(
            "line depth {depth} outside domain ({}, {})",
            grid.lo, grid.hi
        )));
    }
    let height = grid.hi - grid.lo;
    if depth < grid.hi - 0.1 * height {
        return Err(Error::config(format!(
            "line depth {depth} below the top 10% of the domain (needs >= {})",
            grid.hi - 0.1 * height
        )));
    }
    let points = (0..m)
        .map(|k| [grid.lo + (k as f64 + 0.5) * height / m as f64, depth])
        .collect();
    Ok(ReceiverLine { m, depth, points })
}

/// Disjoint cover of the flat indices `{0, .., n^2-1}` by `P` Cartesian
/// squares of the underlying `n x n` index grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionScheme {
    pub n: usize,
    pub p: usize,
    pub groups: Vec<Vec<usize>>,
}

impl PartitionScheme {
    pub fn group_len(&self) -> usize {
        self.n * self.n / self.p
    }

    /// Side length of one square, as a fraction of the index grid.
    pub fn sqrt_p(&self) -> usize {
        (self.p as f64).sqrt().round() as usize
    }
}

/// Partition the `n x n` index grid into `P` square blocks.
///
/// Group `g` contains flat index `i*n + j` iff
/// `floor(i/(n/sqrt P)) * sqrt P + floor(j/(n/sqrt P)) = g`; members are
/// listed in ascending flat order.
pub fn make_partition(n: usize, p: usize) -> Result<PartitionScheme> {
    let sqrt_p = (p as f64).sqrt().round() as usize;
    if sqrt_p * sqrt_p != p || p == 0 {
        return Err(Error::config(format!("partition count {p} is not a perfect square")));
    }
    if n % sqrt_p != 0 {
        return Err(Error::config(format!(
            "sqrt(P) = {sqrt_p} does not divide grid side {n}"
        )));
    }
    let side = n / sqrt_p;
    let mut groups = vec![Vec::with_capacity(side * side); p];
    for i in 0..n {
        for j in 0..n {
            let g = (i / side) * sqrt_p + j / side;
            groups[g].push(i * n + j);
        }
    }
    Ok(PartitionScheme { n, p, groups })
}

/// Axis-aligned rectangle, used for the region scatterer centers are drawn
/// from. Degenerate sides (`x0 == x1`) are allowed and sample that exact
/// coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        if !(x0 <= x1 && y0 <= y1) {
            return Err(Error::config(format!(
                "degenerate rectangle [{x0},{x1}]x[{y0},{y1}]"
            )));
        }
        Ok(Rect { x0, x1, y0, y1 })
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> [f64; 2] {
        let x = if self.x0 == self.x1 {
            self.x0
        } else {
            rng.random_range(self.x0..self.x1)
        };
        let y = if self.y0 == self.y1 {
            self.y0
        } else {
            rng.random_range(self.y0..self.y1)
        };
        [x, y]
    }
}

/// Gaussian-mixture scatterer model: `n_s` bumps of amplitude `beta` and
/// width `sigma`, centers drawn uniformly from `center_region`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMixtureSpec {
    pub n_s: usize,
    pub beta: f64,
    pub sigma: f64,
    pub center_region: Rect,
}

impl GaussianMixtureSpec {
    /// Mixture with the standard amplitude 0.2 and width 0.015, centers
    /// anywhere in the grid's domain.
    pub fn new(n_s: usize, grid: &GridSpec) -> Result<Self> {
        Self::with_params(
            n_s,
            0.2,
            0.015,
            Rect::new(grid.lo, grid.hi, grid.lo, grid.hi)?,
        )
    }

    pub fn with_params(n_s: usize, beta: f64, sigma: f64, center_region: Rect) -> Result<Self> {
        if n_s < 1 {
            return Err(Error::config("mixture needs at least one bump"));
        }
        if beta <= 0.0 || sigma <= 0.0 {
            return Err(Error::config(format!(
                "mixture needs beta > 0 and sigma > 0, got beta={beta}, sigma={sigma}"
            )));
        }
        Ok(GaussianMixtureSpec { n_s, beta, sigma, center_region })
    }

    /// Validate that the center region sits inside the grid's domain.
    pub fn check_region(&self, grid: &GridSpec) -> Result<()> {
        let r = self.center_region;
        if r.x0 < grid.lo || r.x1 > grid.hi || r.y0 < grid.lo || r.y1 > grid.hi {
            return Err(Error::config("center region extends outside the domain"));
        }
        Ok(())
    }
}

/// Real scatterer values sampled on the grid, row-major (`i*n + j`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScattererField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ScattererField {
    pub fn zeros(grid: GridSpec) -> Self {
        let n2 = grid.n * grid.n;
        ScattererField { grid, values: vec![0.0; n2] }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n * grid.n {
            return Err(Error::shape(
                "scatterer field",
                format!("{} values", grid.n * grid.n),
                format!("{}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("scatterer field has non-finite entries"));
        }
        Ok(ScattererField { grid, values })
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n + j]
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Complex observation data indexed by receiver (row) x source (column),
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringPattern {
    pub m: usize,
    pub values: Vec<Complex64>,
}

impl ScatteringPattern {
    pub fn zeros(m: usize) -> Self {
        ScatteringPattern { m, values: vec![Complex64::ZERO; m * m] }
    }

    pub fn from_values(m: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != m * m {
            return Err(Error::shape(
                "scattering pattern",
                format!("{} values", m * m),
                format!("{}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::numerical("scattering pattern has non-finite entries"));
        }
        Ok(ScatteringPattern { m, values })
    }

    pub fn at(&self, r: usize, s: usize) -> Complex64 {
        self.values[r * self.m + s]
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Draw a Gaussian-mixture scatterer on the grid.
///
/// The centers are sampled uniformly from the mixture's region with a
/// generator seeded by `seed`; identical `(spec, seed)` pairs produce
/// bitwise-identical fields.
pub fn sample_scatterer(
    spec: &GaussianMixtureSpec,
    grid: &GridSpec,
    seed: u64,
) -> Result<ScattererField> {
    spec.check_region(grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<[f64; 2]> = (0..spec.n_s)
        .map(|_| spec.center_region.sample(&mut rng))
        .collect();
    Ok(evaluate_mixture(spec, grid, &centers))
}

/// Evaluate the mixture for known centers.
pub fn evaluate_mixture(
    spec: &GaussianMixtureSpec,
    grid: &GridSpec,
    centers: &[[f64; 2]],
) -> ScattererField {
    let n = grid.n;
    let inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let p = grid.point(i, j);
            let mut v = 0.0;
            for c in centers {
                let dx = p[0] - c[0];
                let dy = p[1] - c[1];
                v += spec.beta * (-(dx * dx + dy * dy) * inv).exp();
            }
            values[i * n + j] = v;
        }
    }
    ScattererField { grid: *grid, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn partition_hand_trace_n4_p4() {
        let p = make_partition(4, 4).unwrap();
        assert_eq!(p.groups[0], vec![0, 1, 4, 5]);
        assert_eq!(p.groups[1], vec![2, 3, 6, 7]);
        assert_eq!(p.groups[2], vec![8, 9, 12, 13]);
        assert_eq!(p.groups[3], vec![10, 11, 14, 15]);
    }

    #[test]
    fn partition_single_group() {
        let p = make_partition(4, 1).unwrap();
        assert_eq!(p.groups.len(), 1);
        assert_eq!(p.groups[0], (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn partition_singletons() {
        let p = make_partition(4, 16).unwrap();
        assert_eq!(p.groups.len(), 16);
        for (g, group) in p.groups.iter().enumerate() {
            assert_eq!(group, &vec![g]);
        }
    }

    #[test]
    fn partition_rejects_bad_counts() {
        assert!(make_partition(4, 3).is_err()); // not a square
        assert!(make_partition(6, 16).is_err()); // 4 does not divide 6
        assert!(make_partition(4, 0).is_err());
    }

    #[test]
    fn partition_is_exact_cover_brute_force() {
        for (n, p) in [(4usize, 4usize), (8, 4), (8, 16), (12, 9), (16, 16)] {
            let scheme = make_partition(n, p).unwrap();
            // every flat index is in exactly one group
            for idx in 0..n * n {
                let hits: usize = scheme
                    .groups
                    .iter()
                    .map(|g| g.iter().filter(|&&x| x == idx).count())
                    .sum();
                assert_eq!(hits, 1, "index {idx} covered {hits} times");
            }
            for g in &scheme.groups {
                assert_eq!(g.len(), n * n / p);
            }
        }
    }

    proptest! {
        #[test]
        fn partition_cover_sorts_to_identity(k in 1usize..5, s in 1usize..5) {
            let sqrt_p = k;
            let n = sqrt_p * s;
            let scheme = make_partition(n, sqrt_p * sqrt_p).unwrap();
            let mut all: Vec<usize> = scheme.groups.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n * n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn directions_m4() {
        let d = make_directions(4).unwrap();
        let expected = [0.0, PI / 2.0, PI, 3.0 * PI / 2.0];
        for (a, e) in d.angles.iter().zip(expected) {
            assert!((a - e).abs() < 1e-15);
        }
        for k in 0..4 {
            let u = d.unit(k);
            assert!((u[0].hypot(u[1]) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn receiver_line_midpoints() {
        let grid = GridSpec::new(8, 1.0).unwrap();
        let line = make_receiver_line(2, 0.45, &grid).unwrap();
        assert_eq!(line.points[0], [-0.25, 0.45]);
        assert_eq!(line.points[1], [0.25, 0.45]);
    }

    #[test]
    fn receiver_line_m80_spacing() {
        let grid = GridSpec::new(64, 24.0).unwrap();
        let line = make_receiver_line(80, 0.45, &grid).unwrap();
        assert_eq!(line.points.len(), 80);
        for w in line.points.windows(2) {
            assert!((w[1][0] - w[0][0] - 0.0125).abs() < 1e-15);
        }
        assert!(line.points.iter().all(|p| p[0] > -0.5 && p[0] < 0.5));
    }

    #[test]
    fn receiver_line_depth_validation() {
        let grid = GridSpec::new(8, 1.0).unwrap();
        assert!(make_receiver_line(4, 0.6, &grid).is_err()); // outside
        assert!(make_receiver_line(4, 0.0, &grid).is_err()); // below top 10%
        assert!(make_receiver_line(4, 0.41, &grid).is_ok());
    }

    #[test]
    fn grid_rejects_coarse_sampling() {
        // h = 1/4, omega = 8: h*omega = 2 > pi/2
        assert!(GridSpec::new(4, 8.0).is_err());
        assert!(GridSpec::new(32, 24.0).is_ok());
    }

    #[test]
    fn mixture_rejects_zero_bumps() {
        let grid = GridSpec::new(8, 1.0).unwrap();
        assert!(GaussianMixtureSpec::new(0, &grid).is_err());
    }

    #[test]
    fn mixture_peak_at_grid_point_is_beta() {
        let grid = GridSpec::new(8, 1.0).unwrap();
        let p = grid.point(3, 5);
        let spec = GaussianMixtureSpec::with_params(
            1,
            0.2,
            0.015,
            Rect::new(p[0], p[0], p[1], p[1]).unwrap(),
        )
        .unwrap();
        let field = sample_scatterer(&spec, &grid, 7).unwrap();
        assert_eq!(field.at(3, 5), 0.2);
    }

    #[test]
    fn mixture_two_equal_centers_double_peak() {
        let grid = GridSpec::new(8, 1.0).unwrap();
        let p = grid.point(2, 2);
        let spec = GaussianMixtureSpec::with_params(
            2,
            0.2,
            0.015,
            Rect::new(p[0], p[0], p[1], p[1]).unwrap(),
        )
        .unwrap();
        let field = sample_scatterer(&spec, &grid, 0).unwrap();
        assert!((field.at(2, 2) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn mixture_bounds_hold() {
        let grid = GridSpec::new(16, 4.0).unwrap();
        let spec = GaussianMixtureSpec::new(3, &grid).unwrap();
        let field = sample_scatterer(&spec, &grid, 42).unwrap();
        assert!(field.values.iter().all(|&v| v >= 0.0 && v <= 3.0 * 0.2));
    }

    #[test]
    fn sampling_is_reproducible() {
        let grid = GridSpec::new(16, 4.0).unwrap();
        let spec = GaussianMixtureSpec::new(4, &grid).unwrap();
        let a = sample_scatterer(&spec, &grid, 123).unwrap();
        let b = sample_scatterer(&spec, &grid, 123).unwrap();
        assert_eq!(a.values, b.values); // bitwise
        let c = sample_scatterer(&spec, &grid, 124).unwrap();
        assert_ne!(a.values, c.values);
    }
}
