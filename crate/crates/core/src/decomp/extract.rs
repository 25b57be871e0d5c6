//! Extraction of a partial-tube triple `(f0, f1, phi)` from an immersion of
//! a product with adapted second fundamental form and polar metric.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::ambient::AmbientSpace;
use crate::error::{invalid, Error, Result};
use crate::immersion::map::AffineImage;
use crate::immersion::metric::distribution_shape_at;
use crate::immersion::{adaptedness_defect, Grid, Immersion, MapJet, ProductChart, SmoothMap};
use crate::normconn::{
    build_parallel_isometry, transport, CombinedFrames, FrameField, IsometryOptions, Path,
};
use crate::tube::{build_tube, PartialTube, PartialTubeSpec, TubeOptions};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtractOptions {
    /// Accepted adaptedness defect.
    pub adapted_tol: f64,
    /// Accepted totally-geodesic defect of the fiber distribution.
    pub geodesic_tol: f64,
    /// Step for Christoffel symbols of the induced metric.
    pub christoffel_step: f64,
    /// Singular values below `rank_tol * sigma_1` are dropped.
    pub rank_tol: f64,
    /// Required ratio between the last kept and first dropped singular value.
    pub rank_gap: f64,
    pub isometry: IsometryOptions,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            adapted_tol: 1e-6,
            geodesic_tol: 1e-4,
            christoffel_step: 1e-3,
            rank_tol: 1e-6,
            rank_gap: 10.0,
            isometry: IsometryOptions::default(),
        }
    }
}

/// Measured hypotheses and outcomes of an extraction.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Certificates {
    pub adaptedness: f64,
    pub fiber_geodesic: f64,
    /// Largest relative tangential part of `xi^{p0}(p1)`.
    pub normality: f64,
    /// Largest relative mismatch between one-edge transport of `xi^{p0}`
    /// and its value at the next lattice node.
    pub parallelism: f64,
    /// Largest relative `|f1 + phi(f0) - f|` on the grid.
    pub reconstruction: f64,
}

/// The triple recovered from `f`.
#[derive(Clone)]
pub struct ExtractionResult {
    pub source: Immersion,
    pub chart: ProductChart,
    /// Fixed fiber parameters defining `f1 = f(pbar0, .)`.
    pub fiber_point: Vec<f64>,
    /// Base point where the frame is seeded and `f0` is read off.
    pub base_point: Vec<f64>,
    pub base: Immersion,
    pub phi: Arc<dyn FrameField>,
    pub fiber: Immersion,
    pub singular_values: Vec<f64>,
    pub certificates: Certificates,
}

impl std::fmt::Debug for ExtractionResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExtractionResult")
            .field("rank", &self.rank())
            .field("fiber_point", &self.fiber_point)
            .field("base_point", &self.base_point)
            .field("singular_values", &self.singular_values)
            .field("certificates", &self.certificates)
            .finish()
    }
}

impl ExtractionResult {
    pub fn rank(&self) -> usize {
        self.phi.rank()
    }

    /// Fiber samples `f0(p0)` on the fiber grid.
    pub fn fiber_samples(&self) -> Result<Vec<DVector<f64>>> {
        self.fiber.sample_values()
    }

    /// Builds the tube of the extracted triple.
    pub fn rebuild(&self, opts: TubeOptions) -> Result<PartialTube> {
        build_tube(PartialTubeSpec::new(self.fiber.clone(), self.phi.clone()), opts)
    }

    /// Wraps a known triple for `source`, seeded at the grid centers; only
    /// the reconstruction certificate is measured.
    pub fn from_triple(
        source: Immersion,
        chart: ProductChart,
        base: Immersion,
        phi: Arc<dyn FrameField>,
        fiber: Immersion,
    ) -> Result<ExtractionResult> {
        chart.check(source.dim())?;
        if fiber.dim() + base.dim() != source.dim() || fiber.dim() != chart.dims()[0] {
            return Err(invalid("triple does not match the chart of the source"));
        }
        let mut out = ExtractionResult {
            chart,
            fiber_point: node_nearest(fiber.grid(), &fiber.grid().bbox().center()),
            base_point: node_nearest(base.grid(), &base.grid().bbox().center()),
            source,
            base,
            phi,
            fiber,
            singular_values: Vec::new(),
            certificates: Certificates::default(),
        };
        out.certificates.reconstruction = out.reconstruction()?;
        Ok(out)
    }

    fn reconstruction(&self) -> Result<f64> {
        reconstruction_residual(&self.source, &self.base, self.phi.as_ref(), &self.fiber)
    }
}

fn node_nearest(grid: &Grid, p: &[f64]) -> Vec<f64> {
    grid.node(&grid.nearest(p))
}

fn rel(d: f64, scale: f64) -> f64 {
    d / scale.max(1.0)
}

fn reconstruction_residual(
    f: &Immersion,
    base: &Immersion,
    phi: &dyn FrameField,
    fiber: &Immersion,
) -> Result<f64> {
    let k0 = fiber.dim();
    let per: Vec<f64> = f
        .grid()
        .points()
        .par_iter()
        .map(|p| -> Result<f64> {
            let (p0, p1) = p.split_at(k0);
            let x = f.value(p)?;
            let y = base.value(p1)? + phi.apply(p1, &fiber.value(p0)?)?;
            Ok(rel((&x - y).amax(), x.amax()))
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().fold(0.0, f64::max))
}

/// Orthonormal seed for `E(pbar1)` with any timelike vector first.
fn seed_frame(amb: AmbientSpace, cols: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    let mut onb = amb.orthonormalize(cols, 1e-10)?;
    onb.sort_by_key(|v| amb.norm_sq(v) > 0.0);
    Ok(onb)
}

/// Recovers `(f0, f1, phi)` from `f` on a chart `(M0 | M1 | ...)` whose
/// first block is the fiber; all later blocks together form the base.
///
/// Both hypotheses (adapted second fundamental form, totally geodesic
/// fiber distribution) are measured and must hold. `fiber_point` selects
/// the fiber leaf through which `f1` passes (nearest grid node).
pub fn extract_tube(
    f: &Immersion,
    chart: &ProductChart,
    fiber_point: Option<&[f64]>,
    opts: ExtractOptions,
) -> Result<ExtractionResult> {
    chart.check(f.dim())?;
    if chart.factors() < 2 {
        return Err(invalid("extraction needs at least two chart blocks"));
    }
    let k0 = chart.dims()[0];
    let k = f.dim();
    let grid = f.grid();
    let fiber_axes: Vec<usize> = (0..k0).collect();
    let base_axes: Vec<usize> = (k0..k).collect();

    let adapted = adaptedness_defect(f, chart)?;
    if adapted > opts.adapted_tol {
        return Err(Error::Hypothesis {
            what: "second fundamental form is not adapted to the chart".into(),
            defect: adapted,
            tol: opts.adapted_tol,
        });
    }
    let g = |q: &[f64]| f.first_fundamental_form(q);
    let geo: Vec<f64> = grid
        .points()
        .par_iter()
        .map(|p| Ok(distribution_shape_at(&g, p, &fiber_axes, opts.christoffel_step)?.totally_geodesic_defect))
        .collect::<Result<_>>()?;
    let fiber_geodesic = geo.into_iter().fold(0.0, f64::max);
    if fiber_geodesic > opts.geodesic_tol {
        return Err(Error::Hypothesis {
            what: "fiber distribution is not totally geodesic (metric is not polar)".into(),
            defect: fiber_geodesic,
            tol: opts.geodesic_tol,
        });
    }

    let fiber_grid = grid.select(&fiber_axes);
    let base_grid = grid.select(&base_axes);
    let pbar0 = match fiber_point {
        Some(p) => node_nearest(&fiber_grid, p),
        None => node_nearest(&fiber_grid, &fiber_grid.bbox().center()),
    };
    let pbar1 = node_nearest(&base_grid, &base_grid.bbox().center());
    let mut fixed: Vec<Option<f64>> = pbar0.iter().map(|&x| Some(x)).collect();
    fixed.extend(std::iter::repeat_n(None, k - k0));
    let base = f.restrict(&fixed)?;
    let amb = f.ambient();

    let fiber_pts = fiber_grid.points();
    let base_pts = base_grid.points();
    // xi^{p0}(p1) for all p0, one row of vectors per base node.
    let xis: Vec<Vec<DVector<f64>>> = base_pts
        .par_iter()
        .map(|p1| -> Result<Vec<DVector<f64>>> {
            let b = base.value(p1)?;
            fiber_pts
                .iter()
                .map(|p0| {
                    let mut q = p0.clone();
                    q.extend_from_slice(p1);
                    Ok(f.value(&q)? - &b)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let scale = xis
        .iter()
        .flatten()
        .map(|x| x.amax())
        .fold(0.0, f64::max);
    let normality = base_pts
        .par_iter()
        .zip(&xis)
        .map(|(p1, row)| -> Result<f64> {
            let l = base.local(p1)?;
            Ok(row.iter().map(|x| l.normal_residual(x)).fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0f64, |a, b| a.max(rel(b, scale)));

    let i_bar = base_grid.linear_index(&base_grid.nearest(&pbar1));
    let cols = DMatrix::from_columns(&xis[i_bar]);
    let svd = cols.clone().svd(true, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let top = sv.first().cloned().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > opts.rank_tol * top).count();
    if rank == 0 {
        return Err(Error::NotImmersion {
            point: pbar0.clone(),
            reason: "every fiber leaf collapses onto the base leaf".into(),
        });
    }
    if rank < sv.len() && sv[rank] > 0.0 && sv[rank - 1] / sv[rank] < opts.rank_gap {
        return Err(Error::RankInstability { singular_values: sv });
    }
    // Left singular vectors in decreasing order of singular value.
    let u = svd.u.expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let span: Vec<DVector<f64>> = order[..rank].iter().map(|&i| u.column(i).into_owned()).collect();
    let l_bar = base.local(&pbar1)?;
    let span: Vec<DVector<f64>> = span.iter().map(|x| l_bar.normal_part(x)).collect();
    let seed = seed_frame(amb, &span)?;
    let iso = build_parallel_isometry(&base, &pbar1, &seed, &base_grid, opts.isometry)?;
    let fiber_amb = iso.fiber();
    let phi: Arc<dyn FrameField> = Arc::new(iso);

    // f0(p0) = phi_{pbar1}^{-1}(f(p0, pbar1) - f1(pbar1)), an affine map of
    // the restriction of f to the fiber leaf through pbar1.
    let frame = phi.frame(&pbar1)?;
    let coeff = DMatrix::from_fn(rank, amb.dim(), |j, c| fiber_amb.sign(j) * amb.sign(c) * frame[j][c]);
    let offset = -(&coeff * base.value(&pbar1)?);
    let mut fixed1: Vec<Option<f64>> = vec![None; k0];
    fixed1.extend(pbar1.iter().map(|&x| Some(x)));
    let leaf = f.restrict(&fixed1)?;
    let map: Arc<dyn SmoothMap> = Arc::new(AffineImage::new(leaf.map().clone(), coeff, offset)?);
    let fiber = Immersion::new(map, fiber_grid.clone(), fiber_amb)?;

    let parallelism = parallelism_defect(&base, &base_grid, &xis, scale, opts.isometry)?;
    let reconstruction = reconstruction_residual(f, &base, phi.as_ref(), &fiber)?;
    Ok(ExtractionResult {
        source: f.clone(),
        chart: chart.clone(),
        fiber_point: pbar0,
        base_point: pbar1,
        base,
        phi,
        fiber,
        singular_values: sv,
        certificates: Certificates {
            adaptedness: adapted,
            fiber_geodesic,
            normality,
            parallelism,
            reconstruction,
        },
    })
}

/// Transports every `xi^{p0}` across each lattice edge and compares with
/// its value at the far node.
fn parallelism_defect(
    base: &Immersion,
    lattice: &Grid,
    xis: &[Vec<DVector<f64>>],
    scale: f64,
    opts: IsometryOptions,
) -> Result<f64> {
    let mut edges = Vec::new();
    for i in 0..lattice.len() {
        let idx = lattice.multi_index(i);
        for axis in 0..lattice.dim() {
            if idx[axis] + 1 < lattice.counts()[axis] {
                let mut j = idx.clone();
                j[axis] += 1;
                edges.push((i, lattice.linear_index(&j)));
            }
        }
    }
    let per: Vec<f64> = edges
        .par_iter()
        .map(|&(a, b)| -> Result<f64> {
            let (pa, pb) = (lattice.point(a), lattice.point(b));
            let path = Path::segment(&pa, &pb);
            let steps = ((opts.steps_per_unit * path.length()).ceil() as usize).max(2);
            let moved = transport(base, &path, &xis[a], steps, f64::INFINITY)?;
            Ok(moved
                .vectors
                .iter()
                .zip(&xis[b])
                .map(|(x, y)| (x - y).amax())
                .fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    Ok(rel(per.into_iter().fold(0.0, f64::max), scale))
}

/// `p -> f1(p) + phi_p(v)`: a parallel displacement of the base.
struct Displaced {
    base: Arc<dyn SmoothMap>,
    phi: Arc<dyn FrameField>,
    v: DVector<f64>,
}

impl SmoothMap for Displaced {
    fn source_dim(&self) -> usize {
        self.base.source_dim()
    }

    fn target_dim(&self) -> usize {
        self.base.target_dim()
    }

    fn variables(&self) -> Vec<String> {
        self.base.variables()
    }

    fn value(&self, p: &[f64]) -> Result<DVector<f64>> {
        Ok(self.base.value(p)? + self.phi.apply(p, &self.v)?)
    }

    fn jet(&self, p: &[f64], _third: bool) -> Result<MapJet> {
        let mut out = self.base.jet(p, false)?;
        for (c, x) in self.v.iter().zip(self.phi.frame_jets(p)?) {
            out.value.axpy(*c, &x.value, 1.0);
            out.d1 += &x.d1 * *c;
            for (o, s) in out.d2.iter_mut().zip(&x.d2) {
                o.axpy(*c, s, 1.0);
            }
        }
        Ok(out)
    }
}

/// Shrinks the fiber space to the affine hull of the fiber samples,
/// displacing the base by the hull offset. Identity when `f0` is already
/// substantial.
pub fn substantial_reduction(result: &ExtractionResult, tol: f64) -> Result<ExtractionResult> {
    let ys = result.fiber_samples()?;
    let s = result.rank();
    let n = ys.len() as f64;
    let mean = ys.iter().fold(DVector::zeros(s), |a, y| a + y) / n;
    let centered = DMatrix::from_columns(&ys.iter().map(|y| y - &mean).collect::<Vec<_>>());
    let svd = centered.svd(true, false);
    let top = svd.singular_values.max();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let hull = order.iter().filter(|&&i| svd.singular_values[i] > tol * top.max(f64::MIN_POSITIVE)).count();
    if hull == 0 {
        return Err(Error::NotImmersion {
            point: result.fiber_point.clone(),
            reason: "fiber samples collapse to a point".into(),
        });
    }
    if hull == s {
        return Ok(result.clone());
    }
    if result.phi.fiber().is_lorentzian() {
        return Err(Error::Unsupported("reduction of Lorentzian fiber spaces".into()));
    }
    let u = svd.u.expect("requested");
    let w = DMatrix::from_columns(&order[..hull].iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>());
    let v = &mean - &w * (w.transpose() * &mean);
    let base_map: Arc<dyn SmoothMap> = Arc::new(Displaced {
        base: result.base.map().clone(),
        phi: result.phi.clone(),
        v,
    });
    // The displaced base generally leaves any space form carrying f1.
    let base = Immersion::new(base_map, result.base.grid().clone(), result.base.ambient())?;
    let fiber_amb = AmbientSpace::euclidean(hull);
    let phi: Arc<dyn FrameField> = Arc::new(CombinedFrames::new(
        result.phi.clone(),
        base.clone(),
        w.clone(),
        fiber_amb,
    )?);
    let fiber_map: Arc<dyn SmoothMap> = Arc::new(AffineImage::new(
        result.fiber.map().clone(),
        w.transpose(),
        DVector::zeros(hull),
    )?);
    let fiber = Immersion::new(fiber_map, result.fiber.grid().clone(), fiber_amb)?;
    let mut out = ExtractionResult {
        base,
        phi,
        fiber,
        singular_values: svd.singular_values.iter().cloned().collect(),
        ..result.clone()
    };
    out.certificates.reconstruction = out.reconstruction()?;
    Ok(out)
}
