//! Focal data of a base immersion relative to a parallel flat normal
//! subbundle, and membership in the regular set `Omega`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::Result;
use crate::immersion::principal::joint_eigen;
use crate::normconn::FrameField;

/// Focal data at one base sample.
#[derive(Clone, Debug)]
pub struct FocalPoint {
    pub point: Vec<f64>,
    /// Fiber vectors `V_i` with `<Y, V_i> = 1` on the focal hyperplanes.
    pub sheets: Vec<DVector<f64>>,
    pub multiplicities: Vec<usize>,
    /// Orthonormal-frame eigenvectors of each sheet.
    pub eigenvectors: Vec<Vec<DVector<f64>>>,
    /// Shape operators of the frame vectors in an orthonormal tangent frame.
    symmetric: Vec<DMatrix<f64>>,
}

/// Focal sheets over the base grid.
#[derive(Clone, Debug)]
pub struct FocalData {
    pub points: Vec<FocalPoint>,
}

/// Signed regularity margins of one fiber vector.
///
/// Both margins are negative when `P` fails to be positive definite at some
/// base sample, i.e. when `Y` lies beyond a focal hyperplane as seen from
/// the origin. The sign flips across every focal hyperplane, whatever its
/// multiplicity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OmegaStatus {
    pub margin: f64,
    pub min_singular_value: f64,
}

impl OmegaStatus {
    pub fn contains(&self, margin_tol: f64, singular_tol: f64) -> bool {
        self.margin.abs() > margin_tol && self.min_singular_value.abs() > singular_tol
    }

    /// Whether the two criteria disagree on the side of the focal set.
    pub fn sign_disagreement(&self) -> bool {
        (self.margin < 0.0) != (self.min_singular_value < 0.0)
    }
}

impl FocalData {
    pub fn compute(phi: &dyn FrameField, seed: u64, cluster_tol: f64) -> Result<FocalData> {
        let base = phi.base();
        let fiber = phi.fiber();
        let points = base
            .grid()
            .points()
            .par_iter()
            .map(|p| -> Result<FocalPoint> {
                let l = base.local(p)?;
                let frame = phi.frame(p)?;
                let symmetric: Vec<DMatrix<f64>> = frame.iter().map(|x| l.shape_symmetric(x)).collect();
                let clusters = joint_eigen(&symmetric, l.k(), seed, cluster_tol)?;
                let sheets = clusters
                    .iter()
                    .map(|c| DVector::from_fn(fiber.dim(), |j, _| fiber.sign(j) * c.eigenvalues[j]))
                    .collect();
                Ok(FocalPoint {
                    point: p.clone(),
                    sheets,
                    multiplicities: clusters.iter().map(|c| c.vectors.len()).collect(),
                    eigenvectors: clusters.iter().map(|c| c.vectors.clone()).collect(),
                    symmetric,
                })
            })
            .collect::<Result<_>>()?;
        Ok(FocalData { points })
    }

    /// Margins of a fiber vector `Y`, in the coordinates where `P = I -
    /// A_{phi(Y)}` (the shifted fiber for position-carrying frames).
    pub fn omega(&self, y: &DVector<f64>, fiber_signs: &[f64]) -> OmegaStatus {
        let mut margin = f64::INFINITY;
        let mut sigma = f64::INFINITY;
        let (mut neg_m, mut neg_s) = (false, false);
        for fp in &self.points {
            for v in &fp.sheets {
                let ip: f64 = (0..y.len()).map(|j| fiber_signs[j] * y[j] * v[j]).sum();
                let d = 1.0 - ip;
                margin = margin.min(d.abs());
                neg_m |= d < 0.0;
            }
            let k = fp.symmetric[0].nrows();
            let mut ps = DMatrix::identity(k, k);
            for j in 0..y.len() {
                ps -= &fp.symmetric[j] * y[j];
            }
            sigma = sigma.min(ps.singular_values().min());
            neg_s |= ps.symmetric_eigenvalues().min() < 0.0;
        }
        OmegaStatus {
            margin: if neg_m { -margin } else { margin },
            min_singular_value: if neg_s { -sigma } else { sigma },
        }
    }

    /// Largest `|A_{xi_j} w - <xi_j, phi(V_i)> w|` over frame vectors
    /// `xi_j`, sheets `V_i` and their eigenvectors `w`: how well `phi(V_i)`
    /// acts as the principal normal of its eigenspace.
    pub fn consistency_defect(&self, fiber_signs: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for fp in &self.points {
            for (v, ws) in fp.sheets.iter().zip(&fp.eigenvectors) {
                for w in ws {
                    for (j, s) in fp.symmetric.iter().enumerate() {
                        let r = s * w - w * (fiber_signs[j] * v[j]);
                        worst = worst.max(r.amax());
                    }
                }
            }
        }
        worst
    }
}
