//! Unit-speed reparametrisation of a regular curve.

use std::sync::Arc;

use gauss_quad::GaussLegendre;
use nalgebra::DVector;

use crate::ambient::AmbientSpace;
use crate::error::{invalid, Result};
use crate::immersion::{Grid, Immersion, MapJet, ParamBox, SmoothMap};

/// `s -> gamma(t(s))` with `t(s)` the inverse of the arc length from the
/// start of the curve's domain.
///
/// Arc length is accumulated panel by panel with Gauss-Legendre quadrature
/// and inverted with Newton's method, so jets follow exactly from the chain
/// rule.
pub struct ArcLengthCurve {
    curve: Arc<dyn SmoothMap>,
    ambient: AmbientSpace,
    lo: f64,
    panel: f64,
    /// Arc length at the panel boundaries.
    cumulative: Vec<f64>,
    quad: GaussLegendre,
}

const PANELS: usize = 256;

impl ArcLengthCurve {
    pub fn new(curve: &Immersion) -> Result<ArcLengthCurve> {
        if curve.dim() != 1 {
            return Err(invalid("arc-length reparametrisation needs a curve"));
        }
        let (lo, hi) = (curve.domain().lo()[0], curve.domain().hi()[0]);
        let quad = GaussLegendre::new(8.try_into().expect("nonzero degree"));
        let mut out = ArcLengthCurve {
            curve: curve.map().clone(),
            ambient: curve.ambient(),
            lo,
            panel: (hi - lo) / PANELS as f64,
            cumulative: vec![0.0],
            quad,
        };
        for i in 0..PANELS {
            let a = lo + i as f64 * out.panel;
            let len = out.piece(a, a + out.panel)?;
            let last = *out.cumulative.last().expect("seeded");
            out.cumulative.push(last + len);
        }
        Ok(out)
    }

    fn speed(&self, t: f64) -> Result<f64> {
        let j = self.curve.jet(&[t], false)?;
        let v = j.col(0);
        let s = self.ambient.norm_sq(&v);
        if !(s > 0.0) {
            return Err(invalid(format!("curve is not regular at t = {t}")));
        }
        Ok(s.sqrt())
    }

    fn piece(&self, a: f64, b: f64) -> Result<f64> {
        let mut err = None;
        let v = self.quad.integrate(a, b, |t| match self.speed(t) {
            Ok(s) => s,
            Err(e) => {
                err = Some(e);
                0.0
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    fn arc(&self, t: f64) -> Result<f64> {
        let i = (((t - self.lo) / self.panel).floor().max(0.0) as usize).min(PANELS - 1);
        let a = self.lo + i as f64 * self.panel;
        Ok(self.cumulative[i] + self.piece(a, t)?)
    }

    /// Curve parameter at arc length `s`.
    pub fn parameter(&self, s: f64) -> Result<f64> {
        let i = self
            .cumulative
            .partition_point(|&c| c <= s)
            .clamp(1, PANELS)
            - 1;
        let (c0, c1) = (self.cumulative[i], self.cumulative[i + 1]);
        let mut t = self.lo + self.panel * (i as f64 + (s - c0) / (c1 - c0));
        for _ in 0..50 {
            let dt = (self.arc(t)? - s) / self.speed(t)?;
            t -= dt;
            if dt.abs() <= 1e-15 * (1.0 + t.abs()) {
                break;
            }
        }
        Ok(t)
    }

    /// The reparametrised curve on `[0, L]` with `n` grid samples.
    pub fn into_immersion(self, name: &str, n: usize) -> Result<Immersion> {
        let len = self.length();
        let ambient = self.ambient;
        let out = ArcLengthMap {
            inner: self,
            name: name.to_string(),
        };
        let grid = Grid::new(ParamBox::new(vec![0.0], vec![len])?, vec![n])?;
        Immersion::new(Arc::new(out), grid, ambient)
    }
}

struct ArcLengthMap {
    inner: ArcLengthCurve,
    name: String,
}

impl SmoothMap for ArcLengthMap {
    fn source_dim(&self) -> usize {
        1
    }

    fn target_dim(&self) -> usize {
        self.inner.curve.target_dim()
    }

    fn variables(&self) -> Vec<String> {
        vec![self.name.clone()]
    }

    fn value(&self, p: &[f64]) -> Result<DVector<f64>> {
        self.inner.curve.value(&[self.inner.parameter(p[0])?])
    }

    fn jet(&self, p: &[f64], third: bool) -> Result<MapJet> {
        let third = third && self.has_third();
        let t = self.inner.parameter(p[0])?;
        let j = self.inner.curve.jet(&[t], third)?;
        let amb = self.inner.ambient;
        let (g1, g2) = (j.col(0), j.d2(0, 0).clone());
        // u = |gamma'|^{-1} as a function of t; t' = u, t'' = u' u,
        // t''' = (u'' u + u'^2) u.
        let a = amb.dot(&g1, &g2);
        let u = 1.0 / amb.norm_sq(&g1).sqrt();
        let du = -a * u.powi(3);
        let t1 = u;
        let t2 = du * u;
        let mut out = MapJet::zeros(j.n(), 1, third);
        out.value = j.value.clone();
        out.d1.set_column(0, &(&g1 * t1));
        out.d2[0] = &g2 * (t1 * t1) + &g1 * t2;
        if let Some(g3) = j.d3(0, 0, 0) {
            let ddu = -(amb.norm_sq(&g2) + amb.dot(&g1, g3)) * u.powi(3) + 3.0 * a * a * u.powi(5);
            let t3 = (ddu * u + du * du) * u;
            out.d3.as_mut().expect("third requested")[0] =
                g3 * t1.powi(3) + &g2 * (3.0 * t1 * t2) + &g1 * t3;
        }
        Ok(out)
    }

    fn has_third(&self) -> bool {
        self.inner.curve.has_third()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ellipse_becomes_unit_speed() {
        let c = Immersion::from_expressions(
            &["t"],
            &["2*cos(t)", "sin(t)"],
            &[(0.0, 3.0)],
            &[5],
            AmbientSpace::euclidean(2),
        )
        .unwrap();
        let a = ArcLengthCurve::new(&c).unwrap().into_immersion("s", 9).unwrap();
        for p in a.grid().points() {
            let j = a.jet(&p, true).unwrap();
            assert!((j.col(0).norm() - 1.0).abs() < 1e-12);
            // unit speed: acceleration is normal to velocity
            assert!(j.col(0).dot(&j.d2[0]).abs() < 1e-10);
        }
        // third derivative against a difference of second derivatives
        let s = 1.3;
        let h = 1e-4;
        let d = (a.jet(&[s + h], false).unwrap().d2[0].clone() - a.jet(&[s - h], false).unwrap().d2[0].clone())
            / (2.0 * h);
        let j3 = a.jet(&[s], true).unwrap();
        assert!((&j3.d3.unwrap()[0] - d).norm() < 1e-6);
    }

    #[test]
    fn length_of_circle_arc() {
        let c = Immersion::from_expressions(
            &["t"],
            &["3*cos(t)", "3*sin(t)"],
            &[(0.0, 2.0)],
            &[3],
            AmbientSpace::euclidean(2),
        )
        .unwrap();
        let a = ArcLengthCurve::new(&c).unwrap();
        assert!((a.length() - 6.0).abs() < 1e-12);
        assert!((a.parameter(4.5).unwrap() - 1.5).abs() < 1e-12);
    }
}
