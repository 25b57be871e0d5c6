//! Immersions of parameter boxes into flat ambients and their pointwise
//! extrinsic geometry: differential, induced metric, normal spaces, second
//! fundamental form and shape operators, plus grid-level diagnostics for
//! product charts.

pub mod chart;
pub mod map;
pub mod metric;
pub mod principal;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::ambient::{AmbientSpace, SpaceForm};
use crate::error::{invalid, Error, Result};

pub use chart::{
    adaptedness_defect, leaf_constancy_defect, subbundle_character, ProductChart, SubbundleCharacter,
};
pub use map::{AffineImage, ExprMap, MapJet, ProductMap, Reordered, Restriction, SmoothMap};
pub use principal::{principal_normal_decomposition, PrincipalNormals, PrincipalTolerances};

/// Axis-aligned parameter box.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl ParamBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<ParamBox> {
        if lo.len() != hi.len() {
            return Err(invalid("box corners have different lengths"));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if !(a.is_finite() && b.is_finite() && a <= b) {
                return Err(invalid(format!("bad box interval [{a}, {b}]")));
            }
        }
        Ok(ParamBox { lo, hi })
    }

    pub fn from_intervals(iv: &[(f64, f64)]) -> Result<ParamBox> {
        ParamBox::new(iv.iter().map(|x| x.0).collect(), iv.iter().map(|x| x.1).collect())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn product(&self, other: &ParamBox) -> ParamBox {
        ParamBox {
            lo: [self.lo.clone(), other.lo.clone()].concat(),
            hi: [self.hi.clone(), other.hi.clone()].concat(),
        }
    }

    pub fn contains(&self, p: &[f64], slack: f64) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (a, b))| *x >= a - slack && *x <= b + slack)
    }

    /// Sub-box on the given axes.
    pub fn select(&self, axes: &[usize]) -> ParamBox {
        ParamBox {
            lo: axes.iter().map(|&a| self.lo[a]).collect(),
            hi: axes.iter().map(|&a| self.hi[a]).collect(),
        }
    }
}

/// Uniform tensor grid over a box, enumerated row-major (last axis fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    bbox: ParamBox,
    counts: Vec<usize>,
}

impl Grid {
    pub fn new(bbox: ParamBox, counts: Vec<usize>) -> Result<Grid> {
        if counts.len() != bbox.dim() {
            return Err(invalid(format!(
                "grid has {} counts for a {}-dimensional box",
                counts.len(),
                bbox.dim()
            )));
        }
        if counts.contains(&0) {
            return Err(invalid("grid counts must be positive"));
        }
        Ok(Grid { bbox, counts })
    }

    pub fn bbox(&self) -> &ParamBox {
        &self.bbox
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinate of node `i` along `axis`; single-node axes sit mid-box.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        let n = self.counts[axis];
        let (a, b) = (self.bbox.lo[axis], self.bbox.hi[axis]);
        if n == 1 {
            0.5 * (a + b)
        } else {
            a + (b - a) * i as f64 / (n - 1) as f64
        }
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let n = self.counts[axis];
        if n == 1 {
            0.0
        } else {
            self.bbox.width(axis) / (n - 1) as f64
        }
    }

    pub fn multi_index(&self, mut linear: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            idx[axis] = linear % self.counts[axis];
            linear /= self.counts[axis];
        }
        idx
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.counts)
            .fold(0, |acc, (i, n)| acc * n + i)
    }

    pub fn node(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(axis, &i)| self.coord(axis, i))
            .collect()
    }

    pub fn point(&self, linear: usize) -> Vec<f64> {
        self.node(&self.multi_index(linear))
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Closest node, clamped to the grid.
    pub fn nearest(&self, p: &[f64]) -> Vec<usize> {
        (0..self.dim())
            .map(|axis| {
                let n = self.counts[axis];
                let h = self.spacing(axis);
                if n == 1 || h == 0.0 {
                    0
                } else {
                    let t = ((p[axis] - self.bbox.lo[axis]) / h).round();
                    t.clamp(0.0, (n - 1) as f64) as usize
                }
            })
            .collect()
    }

    pub fn product(&self, other: &Grid) -> Grid {
        Grid {
            bbox: self.bbox.product(&other.bbox),
            counts: [self.counts.clone(), other.counts.clone()].concat(),
        }
    }

    pub fn select(&self, axes: &[usize]) -> Grid {
        Grid {
            bbox: self.bbox.select(axes),
            counts: axes.iter().map(|&a| self.counts[a]).collect(),
        }
    }

    /// Same box with different counts.
    pub fn with_counts(&self, counts: Vec<usize>) -> Result<Grid> {
        Grid::new(self.bbox.clone(), counts)
    }
}

/// Pointwise geometry cached from one jet evaluation.
#[derive(Clone, Debug)]
pub struct Local {
    pub point: Vec<f64>,
    pub jet: MapJet,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    /// Lower Cholesky factor of `g`.
    pub chol: DMatrix<f64>,
    ambient: AmbientSpace,
}

impl Local {
    pub fn new(ambient: AmbientSpace, point: &[f64], jet: MapJet) -> Result<Local> {
        let k = jet.k();
        let g = DMatrix::from_fn(k, k, |i, j| ambient.dot(&jet.col(i), &jet.col(j)));
        let scale = (0..k).map(|i| g[(i, i)].abs()).fold(0.0, f64::max);
        let chol = g
            .clone()
            .cholesky()
            .filter(|c| {
                let l = c.l();
                (0..k).all(|i| l[(i, i)] * l[(i, i)] > 1e-14 * scale)
            })
            .ok_or_else(|| Error::NotPositiveDefinite {
                point: point.to_vec(),
            })?;
        let g_inv = chol.inverse();
        Ok(Local {
            point: point.to_vec(),
            chol: chol.l(),
            jet,
            g,
            g_inv,
            ambient,
        })
    }

    pub fn ambient(&self) -> AmbientSpace {
        self.ambient
    }

    pub fn k(&self) -> usize {
        self.jet.k()
    }

    pub fn value(&self) -> &DVector<f64> {
        &self.jet.value
    }

    pub fn differential(&self) -> &DMatrix<f64> {
        &self.jet.d1
    }

    pub fn tangent(&self, i: usize) -> DVector<f64> {
        self.jet.col(i)
    }

    /// Coordinates of the tangential part of `v` in the basis `d_i f`.
    pub fn tangent_coeffs(&self, v: &DVector<f64>) -> DVector<f64> {
        let k = self.k();
        let rhs = DVector::from_fn(k, |l, _| self.ambient.dot(v, &self.tangent(l)));
        &self.g_inv * rhs
    }

    pub fn tangential_part(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.jet.d1 * self.tangent_coeffs(v)
    }

    pub fn normal_part(&self, v: &DVector<f64>) -> DVector<f64> {
        v - self.tangential_part(v)
    }

    /// Relative size of the tangential part of `v`.
    pub fn normal_residual(&self, v: &DVector<f64>) -> f64 {
        self.tangential_part(v).norm() / v.norm().max(f64::MIN_POSITIVE)
    }

    /// Second fundamental form on coordinate vectors.
    pub fn sff(&self, i: usize, j: usize) -> DVector<f64> {
        self.normal_part(self.jet.d2(i, j))
    }

    /// `[<d_i d_j f, xi>]`.
    pub fn shape_matrix(&self, xi: &DVector<f64>) -> DMatrix<f64> {
        let k = self.k();
        let mut s = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let v = self.ambient.dot(self.jet.d2(i, j), xi);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    /// Shape operator in coordinates, `g(A X, Y) = <alpha(X, Y), xi>`.
    pub fn shape_operator(&self, xi: &DVector<f64>, tol: f64) -> Result<DMatrix<f64>> {
        let residual = self.normal_residual(xi);
        if residual > tol {
            return Err(Error::NotNormal { residual });
        }
        Ok(&self.g_inv * self.shape_matrix(xi))
    }

    pub fn normal_basis(&self, tol: f64) -> Result<Vec<DVector<f64>>> {
        let cols: Vec<DVector<f64>> = (0..self.k()).map(|i| self.tangent(i)).collect();
        Ok(self.ambient.orthonormal_complement(&cols, tol)?)
    }

    /// Columns form a `g`-orthonormal basis of the parameter space.
    pub fn orthonormal_frame(&self) -> DMatrix<f64> {
        self.chol
            .clone()
            .try_inverse()
            .expect("Cholesky factor is invertible")
            .transpose()
    }

    /// Shape operator in the orthonormal frame (a symmetric matrix).
    pub fn shape_symmetric(&self, xi: &DVector<f64>) -> DMatrix<f64> {
        let e = self.orthonormal_frame();
        let s = e.transpose() * self.shape_matrix(xi) * &e;
        (&s + s.transpose()) * 0.5
    }

    /// Christoffel symbols `Gamma^m_ij`, index `(m * k + i) * k + j`, from
    /// the tangential part of the second derivatives.
    pub fn christoffel(&self) -> Vec<f64> {
        let k = self.k();
        let mut out = vec![0.0; k * k * k];
        for i in 0..k {
            for j in 0..k {
                let c = self.tangent_coeffs(self.jet.d2(i, j));
                for m in 0..k {
                    out[(m * k + i) * k + j] = c[m];
                }
            }
        }
        out
    }
}

/// An immersion of a parameter box, sampled on a grid.
#[derive(Clone)]
pub struct Immersion {
    map: Arc<dyn SmoothMap>,
    grid: Grid,
    ambient: AmbientSpace,
    target: Option<SpaceForm>,
}

impl std::fmt::Debug for Immersion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Immersion")
            .field("variables", &self.map.variables())
            .field("grid", &self.grid)
            .field("ambient", &self.ambient)
            .field("target", &self.target)
            .finish()
    }
}

impl Immersion {
    pub fn new(map: Arc<dyn SmoothMap>, grid: Grid, ambient: AmbientSpace) -> Result<Immersion> {
        if map.source_dim() != grid.dim() {
            return Err(invalid(format!(
                "map has {} parameters but the grid has {}",
                map.source_dim(),
                grid.dim()
            )));
        }
        if map.target_dim() != ambient.dim() {
            return Err(invalid(format!(
                "map has {} coordinates but the ambient has dimension {}",
                map.target_dim(),
                ambient.dim()
            )));
        }
        Ok(Immersion {
            map,
            grid,
            ambient,
            target: None,
        })
    }

    pub fn from_expressions<S: AsRef<str>>(
        vars: &[S],
        coords: &[S],
        intervals: &[(f64, f64)],
        counts: &[usize],
        ambient: AmbientSpace,
    ) -> Result<Immersion> {
        let map = Arc::new(ExprMap::parse(vars, coords)?);
        let grid = Grid::new(ParamBox::from_intervals(intervals)?, counts.to_vec())?;
        Immersion::new(map, grid, ambient)
    }

    pub fn with_target(mut self, target: SpaceForm) -> Result<Immersion> {
        if target.ambient() != self.ambient {
            return Err(invalid("target space form lives in a different ambient"));
        }
        self.target = (!target.is_flat()).then_some(target);
        Ok(self)
    }

    pub fn with_grid(mut self, grid: Grid) -> Result<Immersion> {
        if grid.dim() != self.dim() {
            return Err(invalid("grid dimension differs from the parameter count"));
        }
        self.grid = grid;
        Ok(self)
    }

    pub fn map(&self) -> &Arc<dyn SmoothMap> {
        &self.map
    }

    pub fn dim(&self) -> usize {
        self.map.source_dim()
    }

    pub fn ambient(&self) -> AmbientSpace {
        self.ambient
    }

    pub fn target(&self) -> Option<SpaceForm> {
        self.target
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn domain(&self) -> &ParamBox {
        self.grid.bbox()
    }

    pub fn variables(&self) -> Vec<String> {
        self.map.variables()
    }

    pub fn value(&self, p: &[f64]) -> Result<DVector<f64>> {
        self.map.value(p)
    }

    pub fn jet(&self, p: &[f64], third: bool) -> Result<MapJet> {
        self.map.jet(p, third)
    }

    pub fn local(&self, p: &[f64]) -> Result<Local> {
        Local::new(self.ambient, p, self.map.jet(p, false)?)
    }

    pub fn differential(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.local(p)?.jet.d1)
    }

    pub fn first_fundamental_form(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.local(p)?.g)
    }

    pub fn normal_basis(&self, p: &[f64], tol: f64) -> Result<Vec<DVector<f64>>> {
        self.local(p)?.normal_basis(tol)
    }

    /// `alpha(d_i, d_j)` at `k * i + j`.
    pub fn second_fundamental_form(&self, p: &[f64]) -> Result<Vec<DVector<f64>>> {
        let l = self.local(p)?;
        let k = l.k();
        Ok((0..k * k).map(|ij| l.sff(ij / k, ij % k)).collect())
    }

    pub fn shape_operator(&self, p: &[f64], xi: &DVector<f64>, tol: f64) -> Result<DMatrix<f64>> {
        self.local(p)?.shape_operator(xi, tol)
    }

    /// Checks the immersion property and target containment on the grid.
    pub fn validate(&self, closure_tol: f64) -> Result<()> {
        self.grid
            .points()
            .par_iter()
            .map(|p| -> Result<()> {
                let l = self.local(p).map_err(|e| match e {
                    Error::NotPositiveDefinite { point } => Error::NotImmersion {
                        point,
                        reason: "differential is rank deficient".into(),
                    },
                    other => other,
                })?;
                if let Some(t) = self.target {
                    if !t.contains(l.value(), closure_tol) {
                        return Err(Error::NotImmersion {
                            point: p.clone(),
                            reason: format!(
                                "value leaves the space form (defect {:.3e})",
                                t.closure_defect(l.value())
                            ),
                        });
                    }
                }
                Ok(())
            })
            .collect::<Result<Vec<()>>>()?;
        Ok(())
    }

    /// Values at every grid point, row-major.
    pub fn sample_values(&self) -> Result<Vec<DVector<f64>>> {
        self.grid
            .points()
            .par_iter()
            .map(|p| self.value(p))
            .collect()
    }

    /// Restriction with some parameters frozen; the grid keeps free axes.
    pub fn restrict(&self, fixed: &[Option<f64>]) -> Result<Immersion> {
        let map: Arc<dyn SmoothMap> = Arc::new(Restriction::new(self.map.clone(), fixed.to_vec())?);
        let free: Vec<usize> = (0..fixed.len()).filter(|&i| fixed[i].is_none()).collect();
        let mut out = Immersion::new(map, self.grid.select(&free), self.ambient)?;
        out.target = self.target;
        Ok(out)
    }

    /// Same immersion with parameters permuted (new axis `i` is old `order[i]`).
    pub fn reorder(&self, order: &[usize]) -> Result<Immersion> {
        let map: Arc<dyn SmoothMap> = Arc::new(Reordered::new(self.map.clone(), order.to_vec())?);
        let mut out = Immersion::new(map, self.grid.select(order), self.ambient)?;
        out.target = self.target;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_sphere() -> Immersion {
        Immersion::from_expressions(
            &["t", "p"],
            &["cos(t)*cos(p)", "cos(t)*sin(p)", "sin(t)"],
            &[(-1.0, 1.0), (0.0, 3.0)],
            &[5, 5],
            AmbientSpace::euclidean(3),
        )
        .unwrap()
    }

    #[test]
    fn sphere_shape_operator_along_position_is_minus_identity() {
        let f = unit_sphere();
        let p = [0.3, 1.1];
        let x = f.value(&p).unwrap();
        let a = f.shape_operator(&p, &x, 1e-9).unwrap();
        assert!((a - DMatrix::<f64>::identity(2, 2) * -1.0).amax() < 1e-12);
    }

    #[test]
    fn tangent_vector_is_rejected_as_normal() {
        let f = unit_sphere();
        let l = f.local(&[0.3, 1.1]).unwrap();
        let t = l.tangent(0);
        assert!(matches!(l.shape_operator(&t, 1e-9), Err(Error::NotNormal { .. })));
    }

    #[test]
    fn grid_enumeration_is_row_major() {
        let g = Grid::new(ParamBox::from_intervals(&[(0., 1.), (0., 2.)]).unwrap(), vec![2, 3]).unwrap();
        assert_eq!(g.point(1), vec![0.0, 1.0]);
        assert_eq!(g.point(3), vec![1.0, 0.0]);
        assert_eq!(g.linear_index(&[1, 2]), 5);
        assert_eq!(g.nearest(&[0.4, 1.6]), vec![0, 2]);
    }

    #[test]
    fn normal_basis_is_orthonormal_and_normal() {
        let f = unit_sphere();
        let l = f.local(&[0.2, 0.4]).unwrap();
        let nb = l.normal_basis(1e-9).unwrap();
        assert_eq!(nb.len(), 1);
        assert!(l.normal_residual(&nb[0]) < 1e-14);
        assert!((nb[0].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_christoffel_of_sphere() {
        // Gamma^t_pp = sin t cos t at index 3, Gamma^p_tp = -tan t at index 5.
        let f = unit_sphere();
        let t: f64 = 0.3;
        let c = f.local(&[t, 1.0]).unwrap().christoffel();
        assert!((c[3] - t.sin() * t.cos()).abs() < 1e-14);
        assert!((c[5] + t.tan()).abs() < 1e-14);
    }
}
