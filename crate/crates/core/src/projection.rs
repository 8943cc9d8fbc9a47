//! Random projection matrices and the linear map `z = M x`.
//!
//! Three constructions are available:
//!
//! * [`ProjectionKind::StandardGaussian`]: i.i.d. `N(0, 1/m)` entries.
//! * [`ProjectionKind::RandomSignDense`]: `±1/√m` with equal probability.
//! * [`ProjectionKind::RandomSignSparse`]: `±√(3/m)` with probability 1/6
//!   each and `0` with probability 2/3.
//!
//! All three satisfy `E[MᵀM] = I`, so inner products are preserved in
//! expectation. Entries are drawn row-major from a single ChaCha8 stream
//! seeded by the matrix seed, so `(kind, m, n, seed)` fully determines the
//! matrix on every platform.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::context::ContextVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionKind {
    StandardGaussian,
    RandomSignDense,
    RandomSignSparse,
}

/// Where a matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixSource {
    Generated { kind: ProjectionKind, seed: u64 },
    /// Built through one of the test hooks with explicit entries.
    TestHook,
}

/// A fixed `m × n` projection matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    source: MatrixSource,
    m: usize,
    n: usize,
    entries: Vec<f64>,
}

impl ProjectionMatrix {
    /// Draw a matrix of the given kind. Requires `1 <= m <= n`.
    pub fn build(kind: ProjectionKind, m: usize, n: usize, seed: u64) -> Result<Self> {
        check_dims(m, n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mf = m as f64;
        let len = m * n;
        let entries: Vec<f64> = match kind {
            ProjectionKind::StandardGaussian => {
                let sd = 1.0 / mf.sqrt();
                (0..len)
                    .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
            ProjectionKind::RandomSignDense => {
                let a = 1.0 / mf.sqrt();
                (0..len)
                    .map(|_| if rng.random::<bool>() { a } else { -a })
                    .collect()
            }
            ProjectionKind::RandomSignSparse => {
                let a = (3.0 / mf).sqrt();
                (0..len)
                    .map(|_| match rng.random_range(0u32..6) {
                        0 => a,
                        1 => -a,
                        _ => 0.0,
                    })
                    .collect()
            }
        };
        Ok(ProjectionMatrix {
            source: MatrixSource::Generated { kind, seed },
            m,
            n,
            entries,
        })
    }

    /// Test hook: a matrix with explicit row-major entries.
    pub fn from_entries(m: usize, n: usize, entries: Vec<f64>) -> Result<Self> {
        check_dims(m, n)?;
        if entries.len() != m * n {
            return Err(Error::InvalidDimension(format!(
                "{} entries for a {m}x{n} matrix",
                entries.len()
            )));
        }
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        Ok(ProjectionMatrix {
            source: MatrixSource::TestHook,
            m,
            n,
            entries,
        })
    }

    /// Test hook: the `n × n` identity.
    pub fn identity(n: usize) -> Result<Self> {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self::from_entries(n, n, entries)
    }

    /// Test hook: a random `n × n` orthogonal matrix (Q factor of a Gaussian matrix).
    pub fn random_orthogonal(n: usize, seed: u64) -> Result<Self> {
        check_dims(n, n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
        let q = g.qr().q();
        let mut entries = Vec::with_capacity(n * n);
        for p in 0..n {
            for c in 0..n {
                entries.push(q[(p, c)]);
            }
        }
        Self::from_entries(n, n, entries)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn source(&self) -> MatrixSource {
        self.source
    }

    pub fn kind(&self) -> Option<ProjectionKind> {
        match self.source {
            MatrixSource::Generated { kind, .. } => Some(kind),
            MatrixSource::TestHook => None,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self.source {
            MatrixSource::Generated { seed, .. } => Some(seed),
            MatrixSource::TestHook => None,
        }
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.entries[p * self.n..(p + 1) * self.n]
    }

    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.entries[p * self.n + q]
    }

    /// Writes `M x` into `out` (length `m`). Sparse inputs cost `m × nnz`.
    pub fn project_into(&self, x: &ContextVector, out: &mut [f64]) -> Result<()> {
        if x.dim() != self.n {
            return Err(Error::dim(self.n, x.dim()));
        }
        if out.len() != self.m {
            return Err(Error::dim(self.m, out.len()));
        }
        match x {
            ContextVector::Dense(v) => {
                for (p, o) in out.iter_mut().enumerate() {
                    *o = crate::context::dot(self.row(p), v);
                }
            }
            ContextVector::Sparse {
                indices, values, ..
            } => {
                for (p, o) in out.iter_mut().enumerate() {
                    let row = self.row(p);
                    *o = indices.iter().zip(values).map(|(&q, &v)| row[q] * v).sum();
                }
            }
        }
        Ok(())
    }

    /// `z = M x` as a dense `m`-dimensional vector.
    pub fn project(&self, x: &ContextVector) -> Result<ContextVector> {
        let mut out = vec![0.0; self.m];
        self.project_into(x, &mut out)?;
        Ok(ContextVector::Dense(out))
    }

    /// Normalized inner-product distortion
    /// `|⟨x, θ⟩ − ⟨Mx, Mθ⟩| / (‖x‖₂ ‖θ‖₂)`.
    pub fn inner_product_error(&self, x: &ContextVector, theta: &ContextVector) -> Result<f64> {
        if x.dim() != self.n {
            return Err(Error::dim(self.n, x.dim()));
        }
        if theta.dim() != self.n {
            return Err(Error::dim(self.n, theta.dim()));
        }
        let scale = x.norm() * theta.norm();
        if scale == 0.0 {
            return Err(Error::Degenerate("zero-norm vector in inner_product_error".into()));
        }
        let exact = x.dot(theta)?;
        let mut zx = vec![0.0; self.m];
        let mut zt = vec![0.0; self.m];
        self.project_into(x, &mut zx)?;
        self.project_into(theta, &mut zt)?;
        let projected = crate::context::dot(&zx, &zt);
        Ok((exact - projected).abs() / scale)
    }
}

/// Upper bound `min(1, 2·exp(−m·ε₁²/8))` on the probability that a
/// Gaussian projection distorts a normalized inner product by more than `ε₁`.
pub fn kaban_failure_bound(m: usize, eps1: f64) -> f64 {
    (2.0 * (-(m as f64) * eps1 * eps1 / 8.0).exp()).min(1.0)
}

fn check_dims(m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidDimension(format!(
            "dimensions must be positive (m={m}, n={n})"
        )));
    }
    if m > n {
        return Err(Error::InvalidDimension(format!(
            "reduced dimension m={m} exceeds ambient dimension n={n}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_dimensions() {
        for (m, n) in [(0, 4), (5, 4), (1, 0)] {
            assert!(matches!(
                ProjectionMatrix::build(ProjectionKind::StandardGaussian, m, n, 1),
                Err(Error::InvalidDimension(_))
            ));
        }
    }

    #[test]
    fn single_entry_gaussian_is_unit_variance_draw() {
        let p = ProjectionMatrix::build(ProjectionKind::StandardGaussian, 1, 1, 99).unwrap();
        assert_eq!(p.entries().len(), 1);
        assert!(p.get(0, 0).is_finite());
        // m = 1 means no rescaling: entry equals the raw standard normal draw
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let raw: f64 = rand::Rng::sample(&mut rng, StandardNormal);
        assert_eq!(p.get(0, 0), raw);
    }

    #[test]
    fn dense_signs_are_half_for_m4() {
        let p = ProjectionMatrix::build(ProjectionKind::RandomSignDense, 4, 10, 3).unwrap();
        assert_eq!(p.entries().len(), 40);
        assert!(p.entries().iter().all(|e| e.abs() == 0.5));
        // each row's squared norm is exactly n/m
        for r in 0..4 {
            let sq: f64 = p.row(r).iter().map(|e| e * e).sum();
            assert_eq!(sq, 10.0 / 4.0);
        }
    }

    #[test]
    fn gaussian_entry_variance_within_chi_square_interval() {
        // 32768 samples, two-sided 99.9% chi-square interval for s²/σ²:
        // [0.974492, 1.025908] (scipy chi2.ppf with 32767 dof).
        for seed in [1u64, 2, 3, 42] {
            let p = ProjectionMatrix::build(ProjectionKind::StandardGaussian, 64, 512, seed).unwrap();
            let e = p.entries();
            let n = e.len() as f64;
            let mean = e.iter().sum::<f64>() / n;
            let var = e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let ratio = var * 64.0;
            assert!((0.8..=1.2).contains(&ratio), "seed {seed}: ratio {ratio}");
            assert!((0.974492..=1.025908).contains(&ratio), "seed {seed}: ratio {ratio}");
        }
    }

    #[test]
    fn sparse_signs_values_and_zero_fraction() {
        let m = 12;
        let p = ProjectionMatrix::build(ProjectionKind::RandomSignSparse, m, 3000, 11).unwrap();
        let a = (3.0 / m as f64).sqrt();
        assert!(p.entries().iter().all(|&e| e == 0.0 || e == a || e == -a));
        let total = p.entries().len() as f64;
        let zeros = p.entries().iter().filter(|e| **e == 0.0).count() as f64;
        let frac = zeros / total;
        let sd = ((2.0 / 9.0) / total).sqrt();
        assert!((frac - 2.0 / 3.0).abs() < 5.0 * sd, "zero fraction {frac}");
    }

    #[test]
    fn generation_is_deterministic() {
        for kind in [
            ProjectionKind::StandardGaussian,
            ProjectionKind::RandomSignDense,
            ProjectionKind::RandomSignSparse,
        ] {
            let a = ProjectionMatrix::build(kind, 7, 33, 2024).unwrap();
            let b = ProjectionMatrix::build(kind, 7, 33, 2024).unwrap();
            let c = ProjectionMatrix::build(kind, 7, 33, 2025).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.entries(), c.entries());
            assert_eq!(a.kind(), Some(kind));
            assert_eq!(a.seed(), Some(2024));
        }
    }

    #[test]
    fn project_explicit_matrix() {
        let p = ProjectionMatrix::from_entries(2, 3, vec![1.0, 2.0, 3.0, 0.0, 1.0, 0.0]).unwrap();
        let z = p.project(&ContextVector::Dense(vec![1.0, 1.0, 1.0])).unwrap();
        assert_eq!(z.to_dense(), vec![6.0, 1.0]);
        let s = ContextVector::sparse(3, vec![0, 2], vec![1.0, 1.0]).unwrap();
        assert_eq!(p.project(&s).unwrap().to_dense(), vec![4.0, 0.0]);
        assert_eq!(p.kind(), None);
    }

    #[test]
    fn project_zero_and_identity() {
        let p = ProjectionMatrix::build(ProjectionKind::StandardGaussian, 5, 20, 8).unwrap();
        assert_eq!(p.project(&ContextVector::zeros(20)).unwrap().to_dense(), vec![0.0; 5]);
        let id = ProjectionMatrix::identity(4).unwrap();
        let x = vec![0.5, -1.0, 2.0, 3.25];
        assert_eq!(id.project(&ContextVector::Dense(x.clone())).unwrap().to_dense(), x);
        assert!(matches!(
            p.project(&ContextVector::zeros(19)),
            Err(Error::InvalidDimension(_))
        ));
    }

    #[test]
    fn inner_product_error_cases() {
        let rows = ProjectionMatrix::from_entries(2, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let e1 = ContextVector::basis(3, 0);
        assert_eq!(rows.inner_product_error(&e1, &e1).unwrap(), 0.0);
        assert!(matches!(
            rows.inner_product_error(&e1, &ContextVector::zeros(3)),
            Err(Error::Degenerate(_))
        ));

        let q = ProjectionMatrix::random_orthogonal(6, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let x = ContextVector::random_unit(&mut rng, 6);
            let t = ContextVector::random_unit(&mut rng, 6);
            assert!(q.inner_product_error(&x, &t).unwrap() < 1e-12);
        }
    }

    #[test]
    fn kaban_bound_values() {
        assert!((kaban_failure_bound(8, 1.0) - 0.735_758_882_342_884_6).abs() < 1e-12);
        assert!((kaban_failure_bound(32, 0.75) - 0.210_798_449_123_728_7).abs() < 1e-12);
        assert!(kaban_failure_bound(1_000_000, 1.0) < 1e-300);
        assert_eq!(kaban_failure_bound(8, 1e-9), 1.0);
    }

    #[test]
    fn kaban_tail_small_sample() {
        // reduced-trial version of the tail check; acceptance runs the full grid
        let m = 32;
        let n = 64;
        let trials = 4000;
        let eps = [0.5, 0.75, 1.0];
        let mut exceed = [0usize; 3];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for t in 0..trials {
            let p = ProjectionMatrix::build(ProjectionKind::StandardGaussian, m, n, 10_000 + t).unwrap();
            let x = ContextVector::random_unit(&mut rng, n);
            let th = ContextVector::random_unit(&mut rng, n);
            let err = p.inner_product_error(&x, &th).unwrap();
            for (k, &e) in eps.iter().enumerate() {
                if err > e {
                    exceed[k] += 1;
                }
            }
        }
        for (k, &e) in eps.iter().enumerate() {
            let rate = exceed[k] as f64 / trials as f64;
            assert!(rate <= kaban_failure_bound(m, e), "eps {e}: rate {rate}");
        }
    }

    proptest! {
        #[test]
        fn projection_is_linear(
            seed in any::<u64>(),
            a in -10.0f64..10.0,
            b in -10.0f64..10.0,
            xs in proptest::collection::vec(-1.0f64..1.0, 24),
            ys in proptest::collection::vec(-1.0f64..1.0, 24),
        ) {
            let p = ProjectionMatrix::build(ProjectionKind::StandardGaussian, 6, 24, seed).unwrap();
            let x = ContextVector::Dense(xs);
            let y = ContextVector::Dense(ys);
            let lhs = p.project(&x.linear_combination(a, &y, b).unwrap()).unwrap().to_dense();
            let px = p.project(&x).unwrap().to_dense();
            let py = p.project(&y).unwrap().to_dense();
            for i in 0..6 {
                let rhs = a * px[i] + b * py[i];
                let scale = lhs[i].abs().max(rhs.abs()).max(1.0);
                prop_assert!((lhs[i] - rhs).abs() <= 1e-9 * scale);
            }
        }
    }
}
