//! Partial tubes `f(p0, p1) = f1(p1) + phi_{p1}(f0(p0))` and their
//! closed-form geometry, plus the forward constructions built on them.

pub mod arclength;
pub mod build;
pub mod focal;
pub mod frames;

use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::ambient::{AmbientSpace, SpaceForm};
use crate::error::{invalid, Error, OmegaViolation, Result};
use crate::immersion::map::fd_jet;
use crate::immersion::metric::{distribution_shape_at, sectional_curvatures};
use crate::immersion::{Immersion, Local, MapJet, ProductChart, SmoothMap};
use crate::normconn::FrameField;

pub use arclength::ArcLengthCurve;
pub use build::{
    build_curve_tube, build_product, build_quasiwarped_multi, build_warped, endpoint_representation,
    EndpointRepresentation, FactorSpec, WarpedPreset,
};
pub use focal::{FocalData, OmegaStatus};
pub use frames::{ExprFrames, FrameBlock, ProductFrames};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TubeOptions {
    /// Smallest accepted `|1 - <Y, V_i>|` over focal sheets.
    pub omega_margin: f64,
    /// Smallest accepted singular value of `P`.
    pub min_singular: f64,
    /// Accepted `|phi(c) - f1|` for the position vector.
    pub position_tol: f64,
    /// Accepted `|<x, x> - epsilon R^2|` for space-form containment.
    pub closure_tol: f64,
    pub cluster_tol: f64,
    pub seed: u64,
}

impl Default for TubeOptions {
    fn default() -> Self {
        TubeOptions {
            omega_margin: 1e-6,
            min_singular: 1e-8,
            position_tol: 1e-8,
            closure_tol: 1e-9,
            cluster_tol: 1e-6,
            seed: 0,
        }
    }
}

/// Role of one factor of a product base.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FactorKind {
    /// Lies in a (pseudo-)sphere of this radius; its slot carries `f_a / R_a`.
    Position { radius: f64 },
    /// Unit-speed curve with a parallel flat normal subbundle.
    Curve,
    /// Contributes nothing to the fiber.
    Flat,
}

/// One factor of a product base and where it sits.
#[derive(Clone)]
pub struct FactorInfo {
    pub immersion: Immersion,
    pub kind: FactorKind,
    /// Parameters of the factor inside the base parameters.
    pub params: Range<usize>,
    /// Fiber slots mapped into this factor's normal bundle.
    pub slots: Range<usize>,
    /// Frame of the factor's subbundle (curve factors).
    pub frames: Option<Arc<dyn FrameField>>,
}

impl FactorInfo {
    /// Factor-level frame vectors at the factor parameters `q`.
    fn frame(&self, q: &[f64]) -> Result<Vec<DVector<f64>>> {
        match (&self.kind, &self.frames) {
            (FactorKind::Position { radius }, _) => Ok(vec![self.immersion.value(q)? / *radius]),
            (_, Some(fr)) => fr.frame(q),
            _ => Ok(Vec::new()),
        }
    }
}

/// Factor structure of a product base.
#[derive(Clone)]
pub struct FactorLayout {
    pub factors: Vec<FactorInfo>,
}

/// The triple `(f0, f1, phi)` with an optional fiber offset and target.
#[derive(Clone)]
pub struct PartialTubeSpec {
    pub fiber: Immersion,
    pub base: Immersion,
    pub phi: Arc<dyn FrameField>,
    /// Fiber offset `c`; the tube uses `f0 - c`. With a space-form target
    /// it must satisfy `phi_p(c) = f1(p)`.
    pub offset: Option<DVector<f64>>,
    /// Space form containing the base and the tube, for `epsilon != 0`.
    pub target: Option<SpaceForm>,
    pub layout: Option<FactorLayout>,
}

impl PartialTubeSpec {
    pub fn new(fiber: Immersion, phi: Arc<dyn FrameField>) -> PartialTubeSpec {
        PartialTubeSpec {
            fiber,
            base: phi.base().clone(),
            phi,
            offset: None,
            target: None,
            layout: None,
        }
    }

    pub fn with_offset(mut self, c: DVector<f64>) -> Self {
        self.offset = Some(c);
        self
    }

    pub fn with_target(mut self, target: SpaceForm) -> Self {
        self.target = (!target.is_flat()).then_some(target);
        self
    }

    pub fn with_layout(mut self, layout: FactorLayout) -> Self {
        self.layout = Some(layout);
        self
    }

    /// The same tube seen through an isometry `o` of the model fiber:
    /// `f0 -> o f0`, `phi -> phi o^{-1}`, `c -> o c`. The factor layout is
    /// dropped since fiber slots no longer line up with factors.
    pub fn gauge(&self, o: &DMatrix<f64>) -> Result<PartialTubeSpec> {
        let amb = self.phi.fiber();
        let s = amb.dim();
        if o.nrows() != s || o.ncols() != s {
            return Err(invalid("gauge transform has the wrong shape"));
        }
        let eta = amb.metric();
        if (o.transpose() * &eta * o - &eta).amax() > 1e-12 {
            return Err(invalid("gauge transform is not an isometry of the fiber"));
        }
        let inv = &eta * o.transpose() * &eta;
        let phi: Arc<dyn FrameField> = Arc::new(crate::normconn::CombinedFrames::new(
            self.phi.clone(),
            self.base.clone(),
            inv,
            amb,
        )?);
        let map: Arc<dyn SmoothMap> = Arc::new(crate::immersion::AffineImage::new(
            self.fiber.map().clone(),
            o.clone(),
            DVector::zeros(s),
        )?);
        let mut fiber = Immersion::new(map, self.fiber.grid().clone(), self.fiber.ambient())?;
        if let Some(t) = self.fiber.target() {
            fiber = fiber.with_target(t)?;
        }
        Ok(PartialTubeSpec {
            fiber,
            base: self.base.clone(),
            phi,
            offset: self.offset.as_ref().map(|c| o * c),
            target: self.target,
            layout: None,
        })
    }

    fn shift(&self) -> DVector<f64> {
        self.offset
            .clone()
            .unwrap_or_else(|| DVector::zeros(self.phi.rank()))
    }

    fn position_form(&self) -> bool {
        self.target.is_some() && self.offset.is_some()
    }
}

/// The evaluator `(p0, p1) -> f1(p1) + phi_{p1}(f0(p0) - c)`, written as
/// `phi_{p1}(f0(p0))` in the space-form case.
struct TubeMap {
    fiber: Arc<dyn SmoothMap>,
    base: Arc<dyn SmoothMap>,
    phi: Arc<dyn FrameField>,
    offset: DVector<f64>,
    position_form: bool,
    k0: usize,
}

impl TubeMap {
    fn weights(&self, y: &DVector<f64>) -> DVector<f64> {
        if self.position_form {
            y.clone()
        } else {
            y - &self.offset
        }
    }
}

impl SmoothMap for TubeMap {
    fn source_dim(&self) -> usize {
        self.k0 + self.base.source_dim()
    }

    fn target_dim(&self) -> usize {
        self.base.target_dim()
    }

    fn variables(&self) -> Vec<String> {
        let mut v = self.fiber.variables();
        v.extend(self.base.variables());
        v
    }

    fn value(&self, p: &[f64]) -> Result<DVector<f64>> {
        let (p0, p1) = p.split_at(self.k0);
        let w = self.weights(&self.fiber.value(p0)?);
        let mut out = if self.position_form {
            DVector::zeros(self.target_dim())
        } else {
            self.base.value(p1)?
        };
        for (c, x) in w.iter().zip(self.phi.frame(p1)?) {
            out.axpy(*c, &x, 1.0);
        }
        Ok(out)
    }

    fn jet(&self, p: &[f64], _third: bool) -> Result<MapJet> {
        let (p0, p1) = p.split_at(self.k0);
        let k0 = self.k0;
        let k1 = p1.len();
        let k = k0 + k1;
        let fj = self.fiber.jet(p0, false)?;
        let xs = self.phi.frame_jets(p1)?;
        let w = self.weights(&fj.value);
        let n = self.target_dim();
        let mut out = MapJet::zeros(n, k, false);
        if !self.position_form {
            let bj = self.base.jet(p1, false)?;
            out.value = bj.value;
            for i in 0..k1 {
                out.d1.set_column(k0 + i, &bj.d1.column(i));
                for l in 0..k1 {
                    out.d2[(k0 + i) * k + k0 + l] = bj.d2[i * k1 + l].clone();
                }
            }
        }
        for (j, x) in xs.iter().enumerate() {
            out.value.axpy(w[j], &x.value, 1.0);
            for a in 0..k0 {
                let mut col = out.d1.column_mut(a);
                col.axpy(fj.d1[(j, a)], &x.value, 1.0);
                for b in 0..k0 {
                    out.d2[a * k + b].axpy(fj.d2[a * k0 + b][j], &x.value, 1.0);
                }
                for i in 0..k1 {
                    let dxi = x.d1.column(i);
                    out.d2[a * k + k0 + i].axpy(fj.d1[(j, a)], &dxi, 1.0);
                    out.d2[(k0 + i) * k + a].axpy(fj.d1[(j, a)], &dxi, 1.0);
                }
            }
            for i in 0..k1 {
                let mut col = out.d1.column_mut(k0 + i);
                col.axpy(w[j], &x.d1.column(i), 1.0);
                for l in 0..k1 {
                    out.d2[(k0 + i) * k + k0 + l].axpy(w[j], &x.d2[i * k1 + l], 1.0);
                }
            }
        }
        Ok(out)
    }
}

/// Closed-form geometry of a partial tube at one point.
pub struct TubeGeometry {
    /// `f0(p0) - c`.
    pub shifted: DVector<f64>,
    pub frame: Vec<DVector<f64>>,
    /// `P = I - A^{f1}_{phi(f0 - c)}` in base coordinates.
    pub p_matrix: DMatrix<f64>,
    /// `f_* d/dp0 = phi(f0_* d/dp0)`.
    pub diff_fiber: DMatrix<f64>,
    /// `f_* d/dp1 = f1_* P`.
    pub diff_base: DMatrix<f64>,
    pub g0: DMatrix<f64>,
    pub g1: DMatrix<f64>,
    /// `P^T g1 P`.
    pub g1p0: DMatrix<f64>,
    base: Local,
    fiber: Local,
}

impl TubeGeometry {
    pub fn metric(&self) -> DMatrix<f64> {
        let (k0, k1) = (self.g0.nrows(), self.g1.nrows());
        let mut g = DMatrix::zeros(k0 + k1, k0 + k1);
        g.view_mut((0, 0), (k0, k0)).copy_from(&self.g0);
        g.view_mut((k0, k0), (k1, k1)).copy_from(&self.g1p0);
        g
    }

    pub fn differential(&self) -> DMatrix<f64> {
        let n = self.diff_fiber.nrows();
        let (k0, k1) = (self.diff_fiber.ncols(), self.diff_base.ncols());
        let mut d = DMatrix::zeros(n, k0 + k1);
        d.view_mut((0, 0), (n, k0)).copy_from(&self.diff_fiber);
        d.view_mut((0, k0), (n, k1)).copy_from(&self.diff_base);
        d
    }

    pub fn p_inverse(&self) -> Option<DMatrix<f64>> {
        self.p_matrix.clone().try_inverse()
    }

    /// `P^{-1} A^{f1}_xi`: the shape operator of the tube on base directions.
    pub fn base_shape_block(&self, xi: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.p_inverse()? * (&self.base.g_inv * self.base.shape_matrix(xi)))
    }

    /// `A^{f0}_zeta` for a fiber normal `zeta`.
    pub fn fiber_shape_block(&self, zeta: &DVector<f64>) -> DMatrix<f64> {
        &self.fiber.g_inv * self.fiber.shape_matrix(zeta)
    }

    /// Orthonormal normals of `f0` in the fiber model space.
    pub fn fiber_normals(&self) -> Result<Vec<DVector<f64>>> {
        self.fiber.normal_basis(1e-9)
    }

    /// Orthonormal basis of the complement of `E` in the normal space of `f1`.
    pub fn complement_normals(&self) -> Result<Vec<DVector<f64>>> {
        let mut span: Vec<DVector<f64>> = (0..self.base.k()).map(|i| self.base.tangent(i)).collect();
        span.extend(self.frame.iter().cloned());
        Ok(self.base.ambient().orthonormal_complement(&span, 1e-9)?)
    }

    /// `phi(zeta)` for a fiber vector.
    pub fn image(&self, zeta: &DVector<f64>) -> DVector<f64> {
        let mut v = DVector::zeros(self.frame[0].len());
        for (c, x) in zeta.iter().zip(&self.frame) {
            v.axpy(*c, x, 1.0);
        }
        v
    }
}

/// How the reference jets of the assembled tube are obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DirectJets {
    /// Jets of the evaluator, assembled from fiber, base and frame jets.
    Analytic,
    /// Central differences of evaluator values only.
    FiniteDifference { step: f64 },
}

/// Largest relative discrepancy (`|closed - direct| / max(1, |direct|)`,
/// max norms) between each closed-form identity and direct computation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IdentityReport {
    pub diff_fiber: f64,
    pub diff_base: f64,
    /// Base-direction shape operators for normals of the tube.
    pub shape_base: f64,
    /// Fiber-direction shape operators for normals outside `E`.
    pub shape_complement: f64,
    /// Fiber-direction shape operators for images of fiber normals.
    pub shape_fiber: f64,
    /// Induced metric against `g0 + P^T g1 P`.
    pub polar_metric: f64,
    /// Base metric against the per-factor sum of `P_a^T g_a P_a`.
    pub factor_split: Option<f64>,
    /// Factor metric blocks against `rho_a^2 g_a`.
    pub warping: Option<f64>,
    /// Per-factor `P_a^2` against `rho_a^2 I`.
    pub umbilical_factor: Option<f64>,
    pub samples: usize,
}

impl IdentityReport {
    pub fn worst(&self) -> f64 {
        [
            self.diff_fiber,
            self.diff_base,
            self.shape_base,
            self.shape_complement,
            self.shape_fiber,
            self.polar_metric,
            self.factor_split.unwrap_or(0.0),
            self.warping.unwrap_or(0.0),
            self.umbilical_factor.unwrap_or(0.0),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    fn merge(self, o: IdentityReport) -> IdentityReport {
        let opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (None, None) => None,
            (a, b) => Some(a.unwrap_or(0.0).max(b.unwrap_or(0.0))),
        };
        IdentityReport {
            diff_fiber: self.diff_fiber.max(o.diff_fiber),
            diff_base: self.diff_base.max(o.diff_base),
            shape_base: self.shape_base.max(o.shape_base),
            shape_complement: self.shape_complement.max(o.shape_complement),
            shape_fiber: self.shape_fiber.max(o.shape_fiber),
            polar_metric: self.polar_metric.max(o.polar_metric),
            factor_split: opt(self.factor_split, o.factor_split),
            warping: opt(self.warping, o.warping),
            umbilical_factor: opt(self.umbilical_factor, o.umbilical_factor),
            samples: self.samples + o.samples,
        }
    }
}

fn rel(closed: &DMatrix<f64>, direct: &DMatrix<f64>) -> f64 {
    (closed - direct).amax() / direct.amax().max(1.0)
}

fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut at = 0;
    for b in blocks {
        out.view_mut((at, at), (b.nrows(), b.nrows())).copy_from(b);
        at += b.nrows();
    }
    out
}

/// A built partial tube.
#[derive(Clone)]
pub struct PartialTube {
    spec: PartialTubeSpec,
    immersion: Immersion,
    focal: FocalData,
}

impl std::fmt::Debug for PartialTube {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PartialTube")
            .field("fiber_dim", &self.fiber_dim())
            .field("base_dim", &self.base_dim())
            .field("rank", &self.spec.phi.rank())
            .field("target", &self.spec.target)
            .finish()
    }
}

/// Builds the tube after checking dimensions, the fiber offset, space
/// form containment of the fiber, and that the shifted fiber stays in the
/// regular set over the base grid.
pub fn build_tube(spec: PartialTubeSpec, opts: TubeOptions) -> Result<PartialTube> {
    let s = spec.phi.rank();
    let fiber_amb = spec.fiber.ambient();
    if fiber_amb != spec.phi.fiber() {
        return Err(invalid(format!(
            "fiber immersion lives in a {}-dimensional {:?} space, frame models {:?}",
            fiber_amb.dim(),
            fiber_amb.signature(),
            spec.phi.fiber()
        )));
    }
    if spec.base.ambient() != spec.phi.base().ambient() || spec.base.dim() != spec.phi.base().dim() {
        return Err(invalid("base immersion differs from the frame's base"));
    }
    if let Some(c) = &spec.offset {
        if c.len() != s {
            return Err(invalid("fiber offset has the wrong length"));
        }
    }
    if let (Some(c), Some(_)) = (&spec.offset, &spec.target) {
        let mut worst = 0.0f64;
        for p in spec.base.grid().points() {
            let d = (spec.phi.apply(&p, c)? - spec.base.value(&p)?).amax();
            worst = worst.max(d);
        }
        if worst > opts.position_tol * c.amax().max(1.0) {
            return Err(Error::Hypothesis {
                what: "frame does not carry the position vector".into(),
                defect: worst,
                tol: opts.position_tol,
            });
        }
    }
    if let Some(t) = spec.target {
        if t.ambient() != spec.base.ambient() {
            return Err(invalid("target space form lives in a different ambient"));
        }
        if spec.offset.is_none() {
            return Err(invalid("space-form tubes need the position vector in the frame"));
        }
        let fiber_form = SpaceForm::new(t.epsilon(), t.radius(), fiber_amb)?;
        for (p, y) in spec.fiber.grid().points().iter().zip(spec.fiber.sample_values()?) {
            let d = fiber_form.closure_defect(&y);
            if d > opts.closure_tol * t.radius().powi(2).max(1.0) {
                return Err(Error::NotImmersion {
                    point: p.clone(),
                    reason: format!("fiber leaves the model space form (defect {d:.3e})"),
                });
            }
        }
    }
    spec.fiber.validate(opts.closure_tol)?;
    let focal = FocalData::compute(spec.phi.as_ref(), opts.seed, opts.cluster_tol)?;
    let offset = spec.shift();
    let signs: Vec<f64> = (0..s).map(|j| fiber_amb.sign(j)).collect();
    let samples: Vec<(Vec<f64>, DVector<f64>, OmegaStatus)> = spec
        .fiber
        .grid()
        .points()
        .into_iter()
        .zip(spec.fiber.sample_values()?)
        .map(|(p, y)| {
            let st = focal.omega(&(&y - &offset), &signs);
            (p, y, st)
        })
        .collect();
    // The fiber is connected, so samples on both sides of the focal set
    // mean it crosses it somewhere in between.
    let first_side = samples[0].2.margin < 0.0;
    let mut bad = Vec::new();
    for (p, y, st) in samples {
        if !st.contains(opts.omega_margin, opts.min_singular) || (st.margin < 0.0) != first_side {
            bad.push(OmegaViolation {
                fiber_param: p,
                fiber_value: y.iter().cloned().collect(),
                margin: st.margin,
                min_singular_value: st.min_singular_value,
            });
        }
    }
    if !bad.is_empty() {
        return Err(Error::OutsideOmega { samples: bad });
    }
    let map = TubeMap {
        fiber: spec.fiber.map().clone(),
        base: spec.base.map().clone(),
        phi: spec.phi.clone(),
        offset,
        position_form: spec.position_form(),
        k0: spec.fiber.dim(),
    };
    let grid = spec.fiber.grid().product(spec.base.grid());
    let mut immersion = Immersion::new(Arc::new(map), grid, spec.base.ambient())?;
    if let Some(t) = spec.target {
        immersion = immersion.with_target(t)?;
    }
    Ok(PartialTube {
        spec,
        immersion,
        focal,
    })
}

impl PartialTube {
    pub fn spec(&self) -> &PartialTubeSpec {
        &self.spec
    }

    pub fn immersion(&self) -> &Immersion {
        &self.immersion
    }

    pub fn focal(&self) -> &FocalData {
        &self.focal
    }

    pub fn fiber_dim(&self) -> usize {
        self.spec.fiber.dim()
    }

    pub fn base_dim(&self) -> usize {
        self.spec.base.dim()
    }

    /// `(M0 | M1)`, or `(M0 | M1 | ... | Mr)` for a product base.
    pub fn chart(&self) -> Result<ProductChart> {
        let mut dims = vec![self.fiber_dim()];
        match &self.spec.layout {
            Some(l) if l.factors.len() > 1 => dims.extend(l.factors.iter().map(|f| f.params.len())),
            _ => dims.push(self.base_dim()),
        }
        ProductChart::new(dims)
    }

    pub fn split<'a>(&self, p: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        p.split_at(self.fiber_dim())
    }

    fn fiber_signs(&self) -> Vec<f64> {
        let a = self.spec.fiber.ambient();
        (0..a.dim()).map(|j| a.sign(j)).collect()
    }

    /// `f0(p0) - c`.
    pub fn shifted_fiber(&self, p0: &[f64]) -> Result<DVector<f64>> {
        Ok(self.spec.fiber.value(p0)? - self.spec.shift())
    }

    pub fn p_operator(&self, p0: &[f64], p1: &[f64]) -> Result<DMatrix<f64>> {
        let l = self.spec.base.local(p1)?;
        let v = self.spec.phi.apply(p1, &self.shifted_fiber(p0)?)?;
        Ok(DMatrix::identity(l.k(), l.k()) - &l.g_inv * l.shape_matrix(&v))
    }

    /// Regularity margins of a vector `Y` of the shifted fiber space.
    pub fn omega(&self, y: &DVector<f64>) -> OmegaStatus {
        self.focal.omega(y, &self.fiber_signs())
    }

    /// Closed-form geometry at `p = (p0, p1)`.
    pub fn geometry(&self, p: &[f64]) -> Result<TubeGeometry> {
        let (p0, p1) = self.split(p);
        let base = self.spec.base.local(p1)?;
        let fiber = self.spec.fiber.local(p0)?;
        let frame = self.spec.phi.frame(p1)?;
        let shifted = &fiber.jet.value - self.spec.shift();
        let mut v = DVector::zeros(base.ambient().dim());
        for (c, x) in shifted.iter().zip(&frame) {
            v.axpy(*c, x, 1.0);
        }
        let k1 = base.k();
        let p_matrix = DMatrix::identity(k1, k1) - &base.g_inv * base.shape_matrix(&v);
        let mut diff_fiber = DMatrix::zeros(base.ambient().dim(), fiber.k());
        for a in 0..fiber.k() {
            let mut col = DVector::zeros(base.ambient().dim());
            for (j, x) in frame.iter().enumerate() {
                col.axpy(fiber.jet.d1[(j, a)], x, 1.0);
            }
            diff_fiber.set_column(a, &col);
        }
        let diff_base = base.differential() * &p_matrix;
        let g1p0 = p_matrix.transpose() * &base.g * &p_matrix;
        Ok(TubeGeometry {
            shifted,
            frame,
            diff_fiber,
            diff_base,
            g0: fiber.g.clone(),
            g1: base.g.clone(),
            g1p0,
            p_matrix,
            base,
            fiber,
        })
    }

    /// The closed-form induced metric `g0 + P^T g1 P`.
    pub fn closed_form_metric(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.geometry(p)?.metric())
    }

    /// Warping functions `rho_a` of a product base, from their closed forms.
    pub fn warping(&self, p: &[f64]) -> Result<Option<Vec<f64>>> {
        let Some(layout) = &self.spec.layout else {
            return Ok(None);
        };
        let (p0, p1) = self.split(p);
        let y = self.spec.fiber.value(p0)?;
        let shifted = &y - self.spec.shift();
        let mut out = Vec::new();
        for f in &layout.factors {
            let q = &p1[f.params.clone()];
            let rho = match f.kind {
                FactorKind::Position { radius } => y[f.slots.start].abs() / radius,
                FactorKind::Flat => 1.0,
                FactorKind::Curve => {
                    let j = f.immersion.jet(q, false)?;
                    let fr = f.frame(q)?;
                    let mut v = DVector::zeros(j.n());
                    for (c, x) in shifted.rows_range(f.slots.clone()).iter().zip(&fr) {
                        v.axpy(*c, x, 1.0);
                    }
                    (1.0 - f.immersion.ambient().dot(j.d2(0, 0), &v)).abs()
                }
            };
            out.push(rho);
        }
        Ok(Some(out))
    }

    /// Per-factor `P_a` from the factor immersions and frames alone.
    fn factor_operators(&self, layout: &FactorLayout, p0: &[f64], p1: &[f64]) -> Result<Vec<(DMatrix<f64>, DMatrix<f64>)>> {
        let shifted = self.shifted_fiber(p0)?;
        layout
            .factors
            .iter()
            .map(|f| {
                let q = &p1[f.params.clone()];
                let l = f.immersion.local(q)?;
                let fr = f.frame(q)?;
                let mut v = DVector::zeros(f.immersion.ambient().dim());
                for (c, x) in shifted.rows_range(f.slots.clone()).iter().zip(&fr) {
                    v.axpy(*c, x, 1.0);
                }
                let pa = DMatrix::identity(l.k(), l.k()) - &l.g_inv * l.shape_matrix(&v);
                Ok((pa, l.g.clone()))
            })
            .collect()
    }

    fn direct_local(&self, p: &[f64], mode: DirectJets) -> Result<Local> {
        match mode {
            DirectJets::Analytic => self.immersion.local(p),
            DirectJets::FiniteDifference { step } => {
                let f = |q: &[f64]| self.immersion.value(q);
                Local::new(self.immersion.ambient(), p, fd_jet(&f, p, step)?)
            }
        }
    }

    fn verify_point(&self, p: &[f64], mode: DirectJets) -> Result<IdentityReport> {
        let k0 = self.fiber_dim();
        let k1 = self.base_dim();
        let k = k0 + k1;
        let geo = self.geometry(p)?;
        let d = self.direct_local(p, mode)?;
        let mut r = IdentityReport {
            samples: 1,
            ..Default::default()
        };
        r.diff_fiber = rel(&geo.diff_fiber, &d.jet.d1.columns(0, k0).into_owned());
        r.diff_base = rel(&geo.diff_base, &d.jet.d1.columns(k0, k1).into_owned());
        r.polar_metric = rel(&geo.metric(), &d.g);
        let direct_shape = |xi: &DVector<f64>| &d.g_inv * d.shape_matrix(xi);
        for xi in d.normal_basis(1e-6)? {
            let a = direct_shape(&xi);
            let mut want = DMatrix::zeros(k, k1);
            let blk = geo
                .base_shape_block(&xi)
                .ok_or_else(|| invalid("P is singular at a sample point"))?;
            want.view_mut((k0, 0), (k1, k1)).copy_from(&blk);
            r.shape_base = r.shape_base.max(rel(&want, &a.columns(k0, k1).into_owned()));
        }
        for delta in geo.complement_normals()? {
            let a = direct_shape(&delta);
            r.shape_complement = r
                .shape_complement
                .max(rel(&DMatrix::zeros(k, k0), &a.columns(0, k0).into_owned()));
        }
        for zeta in geo.fiber_normals()? {
            let a = direct_shape(&geo.image(&zeta));
            let mut want = DMatrix::zeros(k, k0);
            want.view_mut((0, 0), (k0, k0)).copy_from(&geo.fiber_shape_block(&zeta));
            r.shape_fiber = r.shape_fiber.max(rel(&want, &a.columns(0, k0).into_owned()));
        }
        if let Some(layout) = &self.spec.layout {
            let (p0, p1) = self.split(p);
            let ops = self.factor_operators(layout, p0, p1)?;
            let split: Vec<DMatrix<f64>> = ops.iter().map(|(pa, ga)| pa.transpose() * ga * pa).collect();
            let gb = d.g.view((k0, k0), (k1, k1)).into_owned();
            r.factor_split = Some(rel(&block_diag(&split), &gb));
            let rho = self.warping(p)?.expect("layout present");
            let warped: Vec<DMatrix<f64>> = ops
                .iter()
                .zip(&rho)
                .map(|((_, ga), r)| ga * (r * r))
                .collect();
            r.warping = Some(rel(&block_diag(&warped), &gb));
            let squares: Vec<DMatrix<f64>> = ops.iter().map(|(pa, _)| pa * pa).collect();
            let scalars: Vec<DMatrix<f64>> = ops
                .iter()
                .zip(&rho)
                .map(|((pa, _), r)| DMatrix::identity(pa.nrows(), pa.nrows()) * (r * r))
                .collect();
            r.umbilical_factor = Some(rel(&block_diag(&squares), &block_diag(&scalars)));
        }
        Ok(r)
    }

    /// Checks every closed-form identity against direct computation at the
    /// given points.
    pub fn verify(&self, points: &[Vec<f64>], mode: DirectJets) -> Result<IdentityReport> {
        let parts: Vec<IdentityReport> = points
            .par_iter()
            .map(|p| self.verify_point(p, mode))
            .collect::<Result<_>>()?;
        Ok(parts.into_iter().fold(IdentityReport::default(), IdentityReport::merge))
    }

    pub fn verify_on_grid(&self, mode: DirectJets) -> Result<IdentityReport> {
        self.verify(&self.immersion.grid().points(), mode)
    }

    /// Largest `|<f, f> - epsilon R^2|` over the tube grid (zero when flat).
    pub fn closure_defect(&self) -> Result<f64> {
        let Some(t) = self.spec.target else {
            return Ok(0.0);
        };
        Ok(self
            .immersion
            .sample_values()?
            .iter()
            .map(|x| t.closure_defect(x))
            .fold(0.0, f64::max))
    }

    /// Largest totally-geodesic defect of the fiber distribution over the
    /// tube grid, from differences of the induced metric with step `h`.
    pub fn polar_defect(&self, h: f64) -> Result<f64> {
        let axes: Vec<usize> = (0..self.fiber_dim()).collect();
        let g = |q: &[f64]| self.immersion.first_fundamental_form(q);
        let per: Vec<f64> = self
            .immersion
            .grid()
            .points()
            .par_iter()
            .map(|p| Ok(distribution_shape_at(&g, p, &axes, h)?.totally_geodesic_defect))
            .collect::<Result<_>>()?;
        Ok(per.into_iter().fold(0.0, f64::max))
    }

    /// Largest `|K - epsilon / R^2|` over coordinate planes, with `K` the
    /// sectional curvature of the closed-form metric at the given points.
    pub fn curvature_defect(&self, points: &[Vec<f64>], h: f64) -> Result<f64> {
        let model = match self.spec.target {
            Some(t) => t.epsilon() as f64 / t.radius().powi(2),
            None => 0.0,
        };
        let g = |q: &[f64]| self.closed_form_metric(q);
        let per: Vec<f64> = points
            .par_iter()
            .map(|p| -> Result<f64> {
                Ok(sectional_curvatures(&g, p, h)?
                    .into_iter()
                    .map(|(_, kk)| (kk - model).abs())
                    .fold(0.0, f64::max))
            })
            .collect::<Result<_>>()?;
        Ok(per.into_iter().fold(0.0, f64::max))
    }

    /// Fiber model space.
    pub fn fiber_ambient(&self) -> AmbientSpace {
        self.spec.fiber.ambient()
    }
}
