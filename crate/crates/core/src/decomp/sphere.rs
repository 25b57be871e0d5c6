//! Recovery of the hypersphere carrying a unit-speed curve that admits a
//! parallel normal subbundle `E` with `gamma''' in E^perp` and
//! `gamma'' notin E^perp`.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::immersion::Immersion;
use crate::normconn::FrameField;

const UNIT_SPEED_TOL: f64 = 1e-6;
const THIRD_STEP: f64 = 1e-4;

/// Residuals measured while recovering the sphere.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SphereResiduals {
    /// Largest `|<gamma''', xi>|` over frame vectors of `E`.
    pub third_derivative: f64,
    /// Smallest length of the `E`-projection of `gamma''`.
    pub min_projection: f64,
    /// Largest deviation of `lambda` from its mean.
    pub lambda_deviation: f64,
    /// Largest deviation of `gamma - zeta / lambda` from the center.
    pub center_deviation: f64,
    /// Largest `| |gamma - center| - R |`.
    pub radius_deviation: f64,
    /// Largest change of the projector onto `F = zeta^perp cap E`.
    pub complement_drift: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SphereRecovery {
    pub center: DVector<f64>,
    pub radius: f64,
    /// `-<zeta, gamma''>`; negative when `zeta` points to the center.
    pub lambda: f64,
    /// Unit field `zeta` at the curve grid points.
    pub zeta: Vec<DVector<f64>>,
    /// Orthonormal basis of the constant subspace `F`, at the first sample.
    pub complement: Vec<DVector<f64>>,
    pub residuals: SphereResiduals,
    pub samples: usize,
}

struct Sample {
    gamma: DVector<f64>,
    zeta: DVector<f64>,
    lambda: f64,
    projector: DMatrix<f64>,
}

fn third_derivative(gamma: &Immersion, t: f64) -> Result<DVector<f64>> {
    let j = gamma.jet(&[t], true)?;
    if let Some(d) = j.d3(0, 0, 0) {
        return Ok(d.clone());
    }
    let a = gamma.jet(&[t + THIRD_STEP], false)?;
    let b = gamma.jet(&[t - THIRD_STEP], false)?;
    Ok((a.d2(0, 0) - b.d2(0, 0)) / (2.0 * THIRD_STEP))
}

/// Recovers center, radius and the field `zeta` from a unit-speed curve in a
/// Euclidean ambient and a parallel frame of `E` over it.
///
/// Every hypothesis is measured on the curve grid; a `tol` violation of the
/// third-derivative condition or of the constancy of `lambda` is an error,
/// as is an `E`-projection of `gamma''` shorter than `tol` somewhere.
pub fn curve_sphere_recovery(gamma: &Immersion, e: &dyn FrameField, tol: f64) -> Result<SphereRecovery> {
    let amb = gamma.ambient();
    if gamma.dim() != 1 {
        return Err(invalid("sphere recovery needs a curve"));
    }
    if amb.is_lorentzian() || e.fiber().is_lorentzian() {
        return Err(Error::Unsupported("sphere recovery in a Lorentzian ambient".into()));
    }
    if e.base().ambient().dim() != amb.dim() {
        return Err(invalid("frame field lives in another ambient"));
    }
    let n = amb.dim();
    let mut res = SphereResiduals {
        min_projection: f64::INFINITY,
        ..Default::default()
    };
    let mut samples = Vec::new();
    for p in gamma.grid().points() {
        let j = gamma.jet(&p, false)?;
        let speed = j.col(0).norm();
        if (speed - 1.0).abs() > UNIT_SPEED_TOL {
            return Err(Error::Hypothesis {
                what: format!("curve is not unit speed at t = {:.6}", p[0]),
                defect: (speed - 1.0).abs(),
                tol: UNIT_SPEED_TOL,
            });
        }
        let g2 = j.d2(0, 0).clone();
        let g3 = third_derivative(gamma, p[0])?;
        let fr = e.frame(&p)?;
        let mut proj = DVector::zeros(n);
        let mut pe = DMatrix::zeros(n, n);
        for v in &fr {
            res.third_derivative = res.third_derivative.max(g3.dot(v).abs());
            proj.axpy(g2.dot(v), v, 1.0);
            pe += v * v.transpose();
        }
        let len = proj.norm();
        res.min_projection = res.min_projection.min(len);
        if len <= tol {
            return Err(Error::Hypothesis {
                what: format!("second derivative lies in the complement of E at t = {:.6}", p[0]),
                defect: len,
                tol,
            });
        }
        let zeta = proj / len;
        let lambda = -zeta.dot(&g2);
        let projector = pe - &zeta * zeta.transpose();
        samples.push(Sample {
            gamma: j.value.clone(),
            zeta,
            lambda,
            projector,
        });
    }
    if res.third_derivative > tol {
        return Err(Error::Hypothesis {
            what: "third derivative has a component along E".into(),
            defect: res.third_derivative,
            tol,
        });
    }
    let m = samples.len() as f64;
    let lambda = samples.iter().map(|s| s.lambda).sum::<f64>() / m;
    res.lambda_deviation = samples.iter().map(|s| (s.lambda - lambda).abs()).fold(0.0, f64::max);
    if res.lambda_deviation > tol {
        return Err(Error::Hypothesis {
            what: "lambda = -<zeta, gamma''> is not constant".into(),
            defect: res.lambda_deviation,
            tol,
        });
    }
    let centers: Vec<DVector<f64>> = samples.iter().map(|s| &s.gamma - &s.zeta / s.lambda).collect();
    let center = centers.iter().fold(DVector::zeros(n), |a, c| a + c) / m;
    let radius = 1.0 / lambda.abs();
    res.center_deviation = centers.iter().map(|c| (c - &center).norm()).fold(0.0, f64::max);
    res.radius_deviation = samples
        .iter()
        .map(|s| ((&s.gamma - &center).norm() - radius).abs())
        .fold(0.0, f64::max);
    let p0 = &samples[0].projector;
    res.complement_drift = samples.iter().map(|s| (&s.projector - p0).amax()).fold(0.0, f64::max);
    let eig = p0.clone().symmetric_eigen();
    let complement = (0..n)
        .filter(|&i| eig.eigenvalues[i] > 0.5)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    Ok(SphereRecovery {
        center,
        radius,
        lambda,
        zeta: samples.into_iter().map(|s| s.zeta).collect(),
        complement,
        residuals: res,
        samples: m as usize,
    })
}
