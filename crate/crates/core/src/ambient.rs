//! Flat ambient spaces (Euclidean or Lorentzian) and the space forms
//! modelled as quadrics inside them.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum AmbientError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid ambient: {0}")]
    Invalid(String),
    #[error("degenerate span: {0}")]
    DegenerateSpan(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Signature {
    Euclidean,
    /// First coordinate is timelike: `-x1 y1 + x2 y2 + ...`.
    Lorentzian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AmbientSpace {
    dim: usize,
    signature: Signature,
}

impl AmbientSpace {
    pub fn new(dim: usize, signature: Signature) -> Result<Self, AmbientError> {
        if dim == 0 {
            return Err(AmbientError::Invalid("dimension must be positive".into()));
        }
        Ok(AmbientSpace { dim, signature })
    }

    pub fn euclidean(dim: usize) -> Self {
        AmbientSpace::new(dim, Signature::Euclidean).expect("positive dimension")
    }

    pub fn lorentzian(dim: usize) -> Self {
        AmbientSpace::new(dim, Signature::Lorentzian).expect("positive dimension")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn is_lorentzian(&self) -> bool {
        self.signature == Signature::Lorentzian
    }

    /// Diagonal entry of the metric.
    pub fn sign(&self, i: usize) -> f64 {
        if i == 0 && self.is_lorentzian() {
            -1.0
        } else {
            1.0
        }
    }

    /// Checked inner product.
    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64, AmbientError> {
        for v in [x, y] {
            if v.len() != self.dim {
                return Err(AmbientError::DimensionMismatch {
                    expected: self.dim,
                    got: v.len(),
                });
            }
        }
        Ok(self.dot(x, y))
    }

    /// Inner product without the dimension check.
    pub fn dot(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        let d = x.dot(y);
        if self.is_lorentzian() {
            d - 2.0 * x[0] * y[0]
        } else {
            d
        }
    }

    pub fn norm_sq(&self, x: &DVector<f64>) -> f64 {
        self.dot(x, x)
    }

    /// The metric applied to `x`, so that `x.dot(lower(y)) = <x, y>`.
    pub fn lower(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = x.clone();
        if self.is_lorentzian() {
            y[0] = -y[0];
        }
        y
    }

    /// Metric matrix (diagonal).
    pub fn metric(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| if i == j { self.sign(i) } else { 0.0 })
    }

    /// Gram-Schmidt in input order. Output vectors have squared norm +-1.
    pub fn orthonormalize(
        &self,
        vectors: &[DVector<f64>],
        tol: f64,
    ) -> Result<Vec<DVector<f64>>, AmbientError> {
        let mut out: Vec<DVector<f64>> = Vec::with_capacity(vectors.len());
        for v in vectors {
            if v.len() != self.dim {
                return Err(AmbientError::DimensionMismatch {
                    expected: self.dim,
                    got: v.len(),
                });
            }
            let w = self.project_out(v, &out);
            let q = self.norm_sq(&w);
            let e = w.norm_squared();
            if e <= tol * tol * v.norm_squared().max(f64::MIN_POSITIVE) {
                return Err(AmbientError::DegenerateSpan("linearly dependent vectors".into()));
            }
            if q.abs() <= tol * e {
                return Err(AmbientError::DegenerateSpan("light-like direction".into()));
            }
            out.push(w / q.abs().sqrt());
        }
        Ok(out)
    }

    /// Removes the components along an orthonormal family.
    pub fn project_out(&self, v: &DVector<f64>, onb: &[DVector<f64>]) -> DVector<f64> {
        let mut w = v.clone();
        for u in onb {
            let s = self.norm_sq(u).signum();
            let c = self.dot(&w, u) * s;
            w.axpy(-c, u, 1.0);
        }
        w
    }

    /// Orthonormal basis of the complement of `span(basis)`.
    ///
    /// The basis is first checked for non-degeneracy through the Gram
    /// determinant of its unit-normalised vectors; the complement is then
    /// filled from the canonical vectors `e_1, ..., e_N` in order.
    pub fn orthonormal_complement(
        &self,
        basis: &[DVector<f64>],
        tol: f64,
    ) -> Result<Vec<DVector<f64>>, AmbientError> {
        let k = basis.len();
        if k > self.dim {
            return Err(AmbientError::DegenerateSpan("more vectors than dimensions".into()));
        }
        for v in basis {
            if v.len() != self.dim {
                return Err(AmbientError::DimensionMismatch {
                    expected: self.dim,
                    got: v.len(),
                });
            }
        }
        if k > 0 {
            let unit: Vec<DVector<f64>> = basis
                .iter()
                .map(|v| {
                    let n = v.norm();
                    if n > 0.0 {
                        v / n
                    } else {
                        v.clone()
                    }
                })
                .collect();
            let gram = DMatrix::from_fn(k, k, |i, j| self.dot(&unit[i], &unit[j]));
            let det = gram.determinant();
            if det.abs() <= tol {
                return Err(AmbientError::DegenerateSpan(format!(
                    "Gram determinant {det:.3e} within {tol:.1e} of zero"
                )));
            }
        }
        let mut onb = self.orthonormalize(basis, tol.min(1e-12))?;
        let need = self.dim - k;
        let canon = |i: usize| DVector::from_fn(self.dim, |j, _| if i == j { 1.0 } else { 0.0 });
        let mut out = Vec::with_capacity(need);
        let mut used = vec![false; self.dim];
        // Greedy pass in canonical order with a comfortable acceptance bar.
        let bar = 0.5 / self.dim as f64;
        for i in 0..self.dim {
            if out.len() == need {
                break;
            }
            let w = self.project_out(&canon(i), &onb);
            let q = self.norm_sq(&w);
            if q.abs() >= bar {
                let u = w / q.abs().sqrt();
                onb.push(u.clone());
                out.push(u);
                used[i] = true;
            }
        }
        // Fallback: best remaining canonical vector, then pairwise sums.
        while out.len() < need {
            let mut best: Option<(f64, DVector<f64>)> = None;
            let mut consider = |c: DVector<f64>| {
                let w = self.project_out(&c, &onb);
                let q = self.norm_sq(&w).abs();
                if best.as_ref().is_none_or(|(b, _)| q > *b) {
                    best = Some((q, w));
                }
            };
            for i in 0..self.dim {
                if !used[i] {
                    consider(canon(i));
                }
            }
            for i in 0..self.dim {
                for j in i + 1..self.dim {
                    consider(canon(i) + canon(j));
                    consider(canon(i) - canon(j));
                }
            }
            let (q, w) = best.expect("at least one candidate");
            if q <= tol.max(1e-12) {
                return Err(AmbientError::DegenerateSpan("complement is degenerate".into()));
            }
            let u = w / q.sqrt();
            onb.push(u.clone());
            out.push(u);
        }
        Ok(out)
    }
}

/// A space form of curvature sign `epsilon` and radius `radius`, modelled
/// as `{x : <x, x> = epsilon R^2}` (plus `x_1 > 0` when `epsilon = -1`).
/// `epsilon = 0` is the whole flat ambient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceForm {
    epsilon: i8,
    radius: f64,
    ambient: AmbientSpace,
}

impl SpaceForm {
    pub fn new(epsilon: i8, radius: f64, ambient: AmbientSpace) -> Result<Self, AmbientError> {
        if !matches!(epsilon, -1..=1) {
            return Err(AmbientError::Invalid(format!("epsilon {epsilon} not in {{-1, 0, 1}}")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(AmbientError::Invalid(format!("radius {radius} must be positive")));
        }
        match (epsilon, ambient.signature()) {
            (-1, Signature::Euclidean) => {
                return Err(AmbientError::Invalid(
                    "hyperbolic space needs a Lorentzian ambient".into(),
                ))
            }
            (1, Signature::Lorentzian) => {
                return Err(AmbientError::Invalid("spheres need a Euclidean ambient".into()))
            }
            _ => {}
        }
        Ok(SpaceForm {
            epsilon,
            radius,
            ambient,
        })
    }

    pub fn flat(ambient: AmbientSpace) -> Self {
        SpaceForm {
            epsilon: 0,
            radius: 1.0,
            ambient,
        }
    }

    pub fn epsilon(&self) -> i8 {
        self.epsilon
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn ambient(&self) -> AmbientSpace {
        self.ambient
    }

    pub fn is_flat(&self) -> bool {
        self.epsilon == 0
    }

    /// `epsilon R^2`, the prescribed value of `<x, x>`.
    pub fn level(&self) -> f64 {
        self.epsilon as f64 * self.radius * self.radius
    }

    /// `| <x, x> - epsilon R^2 |`; zero for flat forms.
    pub fn closure_defect(&self, x: &DVector<f64>) -> f64 {
        if self.is_flat() {
            return 0.0;
        }
        (self.ambient.norm_sq(x) - self.level()).abs()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        if x.len() != self.ambient.dim() {
            return false;
        }
        if self.epsilon == -1 && x[0] <= 0.0 {
            return false;
        }
        self.closure_defect(x) <= tol * self.radius.powi(2).max(1.0)
    }
}
