//! Sequential ℓ²-regularized least squares in the projected space.
//!
//! The state keeps the sufficient statistics `A = λI + Σ z zᵀ` and
//! `b = Σ π z` together with an explicitly maintained `A⁻¹`. Each update
//! applies the Sherman–Morrison identity
//!
//! ```text
//! (A + z zᵀ)⁻¹ = A⁻¹ − (A⁻¹z)(A⁻¹z)ᵀ / (1 + zᵀA⁻¹z)
//! ```
//!
//! in `O(m²)`. Every `refresh_interval` updates, or whenever a residual
//! probe detects drift, `A⁻¹` is recomputed directly from `A` with a
//! Cholesky factorization.

use nalgebra::DMatrix;

use crate::context::{dot, ContextVector};
use crate::error::{Error, Result};

pub const DEFAULT_REFRESH_INTERVAL: usize = 512;
const DEFAULT_PROBE_INTERVAL: usize = 8;
/// Relative residual `‖A (A⁻¹ z) − z‖∞ / ‖z‖∞` that triggers a re-inversion.
const PROBE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct RidgeState {
    m: usize,
    lambda: f64,
    a: Vec<f64>,
    a_inv: Vec<f64>,
    b: Vec<f64>,
    t: usize,
    refresh_interval: Option<usize>,
    probe_interval: usize,
    since_refresh: usize,
    refreshes: usize,
}

impl RidgeState {
    /// Fresh state: `A = λI`, `A⁻¹ = I/λ`, `b = 0`, `t = 0`.
    pub fn new(m: usize, lambda: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidDimension("ridge dimension must be positive".into()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
        }
        let mut a = vec![0.0; m * m];
        let mut a_inv = vec![0.0; m * m];
        for i in 0..m {
            a[i * m + i] = lambda;
            a_inv[i * m + i] = 1.0 / lambda;
        }
        Ok(RidgeState {
            m,
            lambda,
            a,
            a_inv,
            b: vec![0.0; m],
            t: 0,
            refresh_interval: Some(DEFAULT_REFRESH_INTERVAL),
            probe_interval: DEFAULT_PROBE_INTERVAL,
            since_refresh: 0,
            refreshes: 0,
        })
    }

    /// Periodic re-inversion interval; `None` leaves only the drift probe.
    pub fn with_refresh_interval(mut self, interval: Option<usize>) -> Self {
        self.refresh_interval = interval.filter(|i| *i > 0);
        self
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of updates applied so far.
    pub fn t(&self) -> usize {
        self.t
    }

    /// Row-major `A`.
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// Row-major `A⁻¹`.
    pub fn a_inv(&self) -> &[f64] {
        &self.a_inv
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Number of direct re-inversions performed.
    pub fn refreshes(&self) -> usize {
        self.refreshes
    }

    fn check_dim(&self, z: &ContextVector) -> Result<()> {
        if z.dim() != self.m {
            return Err(Error::dim(self.m, z.dim()));
        }
        Ok(())
    }

    /// `A⁻¹ z` for a (possibly sparse) `z`.
    fn a_inv_times(&self, z: &ContextVector) -> Vec<f64> {
        let m = self.m;
        match z {
            ContextVector::Dense(v) => (0..m)
                .map(|i| dot(&self.a_inv[i * m..(i + 1) * m], v))
                .collect(),
            ContextVector::Sparse {
                indices, values, ..
            } => (0..m)
                .map(|i| {
                    let row = &self.a_inv[i * m..(i + 1) * m];
                    indices.iter().zip(values).map(|(&j, &v)| row[j] * v).sum()
                })
                .collect(),
        }
    }

    /// Rank-one update with observation `(z, reward)`.
    pub fn update(&mut self, z: &ContextVector, reward: f64) -> Result<()> {
        self.check_dim(z)?;
        if !reward.is_finite() {
            return Err(Error::InvalidInput(format!("reward must be finite, got {reward}")));
        }
        let m = self.m;
        let nz: Vec<(usize, f64)> = z.entries().filter(|(_, v)| *v != 0.0).collect();
        self.t += 1;
        if nz.is_empty() {
            return Ok(());
        }

        for &(i, zi) in &nz {
            let row = &mut self.a[i * m..(i + 1) * m];
            for &(j, zj) in &nz {
                row[j] += zi * zj;
            }
            self.b[i] += reward * zi;
        }

        let u = self.a_inv_times(z);
        let denom = 1.0 + z.dot_dense(&u);
        let scale = 1.0 / denom;
        for i in 0..m {
            let ui = u[i];
            if ui == 0.0 {
                continue;
            }
            let row = &mut self.a_inv[i * m..(i + 1) * m];
            for (r, &uj) in row.iter_mut().zip(&u) {
                // (ui * uj) is commutative, so the update preserves exact symmetry
                *r -= (ui * uj) * scale;
            }
        }

        self.since_refresh += 1;
        let periodic = self
            .refresh_interval
            .is_some_and(|every| self.since_refresh >= every);
        if periodic || (self.t.is_multiple_of(self.probe_interval) && self.drift_detected(z)) {
            self.refresh();
        }
        Ok(())
    }

    fn drift_detected(&self, z: &ContextVector) -> bool {
        let w = self.a_inv_times(z);
        let m = self.m;
        let mut worst: f64 = 0.0;
        let mut zmax: f64 = 0.0;
        let zd = z.to_dense();
        for i in 0..m {
            let r = dot(&self.a[i * m..(i + 1) * m], &w) - zd[i];
            worst = worst.max(r.abs());
            zmax = zmax.max(zd[i].abs());
        }
        worst > PROBE_TOLERANCE * zmax.max(f64::MIN_POSITIVE)
    }

    /// Recompute `A⁻¹` directly from `A`.
    pub fn refresh(&mut self) {
        let m = self.m;
        let a = DMatrix::from_row_slice(m, m, &self.a);
        // A = λI + Σ zzᵀ is positive definite, so Cholesky succeeds for λ > 0
        let inv = match a.clone().cholesky() {
            Some(ch) => ch.inverse(),
            None => a.try_inverse().expect("ridge matrix is positive definite"),
        };
        for i in 0..m {
            for j in i..m {
                let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                self.a_inv[i * m + j] = v;
                self.a_inv[j * m + i] = v;
            }
        }
        self.since_refresh = 0;
        self.refreshes += 1;
    }

    /// Ridge estimate `A⁻¹ b`.
    pub fn estimate(&self) -> Vec<f64> {
        let m = self.m;
        (0..m)
            .map(|i| dot(&self.a_inv[i * m..(i + 1) * m], &self.b))
            .collect()
    }

    /// `‖z‖_{A⁻¹} = √(zᵀ A⁻¹ z)`.
    pub fn weighted_norm(&self, z: &ContextVector) -> Result<f64> {
        self.check_dim(z)?;
        let m = self.m;
        let q = match z {
            ContextVector::Dense(v) => (0..m)
                .filter(|&i| v[i] != 0.0)
                .map(|i| v[i] * dot(&self.a_inv[i * m..(i + 1) * m], v))
                .sum::<f64>(),
            ContextVector::Sparse {
                indices, values, ..
            } => {
                let mut acc = 0.0;
                for (&i, &vi) in indices.iter().zip(values) {
                    let row = &self.a_inv[i * m..(i + 1) * m];
                    let inner: f64 = indices.iter().zip(values).map(|(&j, &vj)| row[j] * vj).sum();
                    acc += vi * inner;
                }
                acc
            }
        };
        // rounding can push a tiny quadratic form below zero
        Ok(q.max(0.0).sqrt())
    }

    /// `‖v‖_A = √(vᵀ A v)` for a dense `m`-vector.
    pub fn a_norm(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.m {
            return Err(Error::dim(self.m, v.len()));
        }
        let m = self.m;
        let q: f64 = (0..m)
            .map(|i| v[i] * dot(&self.a[i * m..(i + 1) * m], v))
            .sum();
        Ok(q.max(0.0).sqrt())
    }

    /// `max |A A⁻¹ − I|` entrywise. `O(m³)`; meant for diagnostics and tests.
    pub fn inverse_drift(&self) -> f64 {
        let m = self.m;
        let mut worst: f64 = 0.0;
        for i in 0..m {
            let arow = &self.a[i * m..(i + 1) * m];
            for j in 0..m {
                let mut s = 0.0;
                for (k, &aik) in arow.iter().enumerate() {
                    s += aik * self.a_inv[k * m + j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }
}
