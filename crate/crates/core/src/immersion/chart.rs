//! Product charts `(M_0 | M_1 | ... | M_r)` and grid diagnostics for the
//! coordinate distributions they define.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::metric::{distribution_shape_at, spherical_defect, split_basis, MetricFn};
use super::{Grid, Immersion};
use crate::error::{invalid, Result};

/// Splits `k` parameters into consecutive factor blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProductChart {
    dims: Vec<usize>,
}

impl ProductChart {
    pub fn new(dims: Vec<usize>) -> Result<ProductChart> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(invalid("a product chart needs at least two non-empty factors"));
        }
        Ok(ProductChart { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn factors(&self) -> usize {
        self.dims.len()
    }

    pub fn total(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn block(&self, a: usize) -> Vec<usize> {
        let start: usize = self.dims[..a].iter().sum();
        (start..start + self.dims[a]).collect()
    }

    pub fn complement(&self, a: usize) -> Vec<usize> {
        let b = self.block(a);
        (0..self.total()).filter(|i| !b.contains(i)).collect()
    }

    pub fn factor_of(&self, axis: usize) -> usize {
        let mut acc = 0;
        for (a, d) in self.dims.iter().enumerate() {
            acc += d;
            if axis < acc {
                return a;
            }
        }
        panic!("axis {axis} outside the chart")
    }

    pub fn check(&self, k: usize) -> Result<()> {
        if self.total() != k {
            return Err(invalid(format!(
                "chart covers {} parameters, immersion has {k}",
                self.total()
            )));
        }
        Ok(())
    }
}

fn check_step(grid: &Grid, h: f64) -> Result<()> {
    if !(h > 0.0) {
        return Err(invalid("differencing step must be positive"));
    }
    for axis in 0..grid.dim() {
        if grid.counts()[axis] > 1 && grid.spacing(axis) < 2.0 * h {
            return Err(invalid(format!(
                "grid spacing {:.3e} on axis {axis} is too small for differencing step {h:.1e}",
                grid.spacing(axis)
            )));
        }
    }
    Ok(())
}

/// `max |alpha(e_i, e_j)|` over unit coordinate vectors from different factors.
pub fn adaptedness_defect(f: &Immersion, chart: &ProductChart) -> Result<f64> {
    chart.check(f.dim())?;
    let k = f.dim();
    let per: Vec<f64> = f
        .grid()
        .points()
        .par_iter()
        .map(|p| -> Result<f64> {
            let l = f.local(p)?;
            let mut worst = 0.0f64;
            for i in 0..k {
                for j in i + 1..k {
                    if chart.factor_of(i) != chart.factor_of(j) {
                        let s = (l.g[(i, i)] * l.g[(j, j)]).sqrt();
                        worst = worst.max(l.sff(i, j).norm() / s);
                    }
                }
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().fold(0.0, f64::max))
}

fn euclidean_onb(vs: &[DVector<f64>]) -> DMatrix<f64> {
    let m = DMatrix::from_columns(vs);
    m.qr().q()
}

/// Largest principal-angle sine between `f_*(D^perp)` at the first point of
/// each `D`-leaf of the grid and at the other points of that leaf.
pub fn leaf_constancy_defect(f: &Immersion, chart: &ProductChart, factor: usize) -> Result<f64> {
    chart.check(f.dim())?;
    let grid = f.grid();
    let axes = chart.block(factor);
    let spans: Vec<DMatrix<f64>> = grid
        .points()
        .par_iter()
        .map(|p| -> Result<DMatrix<f64>> {
            let l = f.local(p)?;
            let (_, comp) = split_basis(&l.g, &axes);
            let vs: Vec<DVector<f64>> = comp.iter().map(|z| l.differential() * z).collect();
            Ok(euclidean_onb(&vs))
        })
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for (i, q) in spans.iter().enumerate() {
        let mut idx = grid.multi_index(i);
        for &a in &axes {
            idx[a] = 0;
        }
        let q0 = &spans[grid.linear_index(&idx)];
        let resid = q - q0 * (q0.transpose() * q);
        let s = resid.singular_values();
        worst = worst.max(s.iter().cloned().fold(0.0, f64::max));
    }
    Ok(worst)
}

/// Defects of one coordinate distribution `E_a` of a product chart.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SubbundleCharacter {
    pub orthogonal_net_defect: f64,
    pub totally_geodesic_defect: f64,
    pub umbilical_defect: f64,
    pub spherical_defect: f64,
    /// Totally-geodesic defect of the span of the other factors.
    pub complement_totally_geodesic_defect: f64,
    pub samples: usize,
}

/// Characterises `E_a` for the metric `g` sampled on `grid`.
pub fn metric_character(
    g: &MetricFn,
    grid: &Grid,
    chart: &ProductChart,
    factor: usize,
    h: f64,
) -> Result<SubbundleCharacter> {
    chart.check(grid.dim())?;
    check_step(grid, h)?;
    let axes = chart.block(factor);
    let comp = chart.complement(factor);
    let k = grid.dim();
    let per: Vec<SubbundleCharacter> = grid
        .points()
        .par_iter()
        .map(|p| -> Result<SubbundleCharacter> {
            let g0 = g(p)?;
            let mut net = 0.0f64;
            for i in 0..k {
                for j in i + 1..k {
                    if chart.factor_of(i) != chart.factor_of(j) {
                        net = net.max(g0[(i, j)].abs() / (g0[(i, i)] * g0[(j, j)]).sqrt());
                    }
                }
            }
            let s = distribution_shape_at(g, p, &axes, h)?;
            let c = distribution_shape_at(g, p, &comp, h)?;
            Ok(SubbundleCharacter {
                orthogonal_net_defect: net,
                totally_geodesic_defect: s.totally_geodesic_defect,
                umbilical_defect: s.umbilical_defect,
                spherical_defect: spherical_defect(g, p, &axes, h)?,
                complement_totally_geodesic_defect: c.totally_geodesic_defect,
                samples: 1,
            })
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().fold(SubbundleCharacter::default(), |a, b| SubbundleCharacter {
        orthogonal_net_defect: a.orthogonal_net_defect.max(b.orthogonal_net_defect),
        totally_geodesic_defect: a.totally_geodesic_defect.max(b.totally_geodesic_defect),
        umbilical_defect: a.umbilical_defect.max(b.umbilical_defect),
        spherical_defect: a.spherical_defect.max(b.spherical_defect),
        complement_totally_geodesic_defect: a
            .complement_totally_geodesic_defect
            .max(b.complement_totally_geodesic_defect),
        samples: a.samples + b.samples,
    }))
}

/// Characterises `E_a` for the metric induced by `f` on its grid.
pub fn subbundle_character(
    f: &Immersion,
    chart: &ProductChart,
    factor: usize,
    h: f64,
) -> Result<SubbundleCharacter> {
    let g = |p: &[f64]| f.first_fundamental_form(p);
    metric_character(&g, f.grid(), chart, factor, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::AmbientSpace;

    fn torus() -> Immersion {
        // fiber u (meridian), base v (core direction)
        Immersion::from_expressions(
            &["u", "v"],
            &["(2 + 0.5*cos(u))*cos(v)", "(2 + 0.5*cos(u))*sin(v)", "0.5*sin(u)"],
            &[(0.2, 2.8), (0.0, 3.0)],
            &[6, 6],
            AmbientSpace::euclidean(3),
        )
        .unwrap()
    }

    #[test]
    fn torus_chart_is_adapted_and_fiber_leaves_constant() {
        let f = torus();
        let chart = ProductChart::new(vec![1, 1]).unwrap();
        assert!(adaptedness_defect(&f, &chart).unwrap() < 1e-12);
        assert!(leaf_constancy_defect(&f, &chart, 0).unwrap() < 1e-6);
        assert!(leaf_constancy_defect(&f, &chart, 1).unwrap() > 1e-2);
    }

    #[test]
    fn torus_core_direction_is_spherical_meridians_geodesic() {
        let f = torus();
        let chart = ProductChart::new(vec![1, 1]).unwrap();
        let base = subbundle_character(&f, &chart, 1, 1e-3).unwrap();
        assert!(base.orthogonal_net_defect < 1e-12);
        assert!(base.umbilical_defect < 1e-12);
        assert!(base.spherical_defect < 1e-6);
        assert!(base.totally_geodesic_defect > 1e-2);
        assert!(base.complement_totally_geodesic_defect < 1e-6);
        assert_eq!(base.samples, 36);
    }

    #[test]
    fn tiny_grid_spacing_is_rejected() {
        let f = Immersion::from_expressions(
            &["u", "v"],
            &["u", "v", "0"],
            &[(0.0, 1e-3), (0.0, 1.0)],
            &[3, 3],
            AmbientSpace::euclidean(3),
        )
        .unwrap();
        let chart = ProductChart::new(vec![1, 1]).unwrap();
        assert!(subbundle_character(&f, &chart, 0, 1e-3).is_err());
    }
}
