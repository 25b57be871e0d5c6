//! Forward constructions: extrinsic products, warped products (generic,
//! rotation, cone), tubes over curves, multi-factor quasi-warped products
//! and end-point representations.

use std::sync::Arc;

use nalgebra::DVector;

use crate::ambient::{AmbientSpace, SpaceForm};
use crate::error::{invalid, Error, Result};
use crate::immersion::{Grid, Immersion, ProductMap, SmoothMap};
use crate::normconn::FrameField;

use super::frames::{FrameBlock, ProductFrames};
use super::{build_tube, FactorInfo, FactorKind, FactorLayout, PartialTube, PartialTubeSpec, TubeOptions};

const LEVEL_TOL: f64 = 1e-9;
const UNIT_SPEED_TOL: f64 = 1e-6;
const CURVATURE_STEP: f64 = 2e-4;

/// `<f, f>` on the grid, required constant.
fn sphere_level(f: &Immersion) -> Result<f64> {
    let amb = f.ambient();
    let levels: Vec<f64> = f.sample_values()?.iter().map(|x| amb.norm_sq(x)).collect();
    let level = levels[0];
    let spread = levels.iter().map(|l| (l - level).abs()).fold(0.0, f64::max);
    if spread > LEVEL_TOL * level.abs().max(1.0) || level == 0.0 {
        return Err(Error::Hypothesis {
            what: "factor does not lie in a sphere or pseudo-sphere about the origin".into(),
            defect: spread,
            tol: LEVEL_TOL,
        });
    }
    if amb.is_lorentzian() != (level < 0.0) {
        return Err(invalid("factor level has the wrong sign for its ambient"));
    }
    Ok(level)
}

fn check_unit_speed(c: &Immersion) -> Result<()> {
    if c.dim() != 1 {
        return Err(invalid("curve factor must have one parameter"));
    }
    let amb = c.ambient();
    let mut worst = 0.0f64;
    for p in c.grid().points() {
        let d = c.jet(&p, false)?.col(0);
        worst = worst.max((amb.norm_sq(&d) - 1.0).abs());
    }
    if worst > UNIT_SPEED_TOL {
        return Err(Error::Hypothesis {
            what: "curve is not unit speed (reparametrise by arc length)".into(),
            defect: worst,
            tol: UNIT_SPEED_TOL,
        });
    }
    Ok(())
}

/// Concatenated ambient of the factors plus `padding` flat directions; a
/// Lorentzian factor is only allowed first.
fn product_ambient(factors: &[Immersion], padding: usize) -> Result<AmbientSpace> {
    let n: usize = factors.iter().map(|f| f.ambient().dim()).sum::<usize>() + padding;
    if factors.iter().skip(1).any(|f| f.ambient().is_lorentzian()) {
        return Err(invalid("only the first factor may be Lorentzian"));
    }
    Ok(match factors.first() {
        Some(f) if f.ambient().is_lorentzian() => AmbientSpace::lorentzian(n),
        _ => AmbientSpace::euclidean(n),
    })
}

fn product_immersion(factors: &[Immersion], padding: usize) -> Result<Immersion> {
    let ambient = product_ambient(factors, padding)?;
    let maps: Vec<Arc<dyn SmoothMap>> = factors.iter().map(|f| f.map().clone()).collect();
    let grid = factors[1..]
        .iter()
        .fold(factors[0].grid().clone(), |g: Grid, f| g.product(f.grid()));
    Immersion::new(Arc::new(ProductMap::new(maps, padding)?), grid, ambient)
}

/// `(f_1, ..., f_r)` with concatenated coordinates.
///
/// For a curved target, every factor must have constant `<f_a, f_a>` and
/// the levels must add up to `epsilon R^2`.
pub fn build_product(factors: &[Immersion], target: Option<SpaceForm>) -> Result<Immersion> {
    if factors.is_empty() {
        return Err(invalid("product of no factors"));
    }
    let f = product_immersion(factors, 0)?;
    match target {
        Some(t) if !t.is_flat() => {
            let sum: f64 = factors.iter().map(sphere_level).sum::<Result<f64>>()?;
            let want = t.level();
            if (sum - want).abs() > LEVEL_TOL * want.abs().max(1.0) {
                return Err(Error::Hypothesis {
                    what: format!("radius relation fails: factor levels sum to {sum}, target needs {want}"),
                    defect: (sum - want).abs(),
                    tol: LEVEL_TOL,
                });
            }
            f.with_target(t)
        }
        _ => Ok(f),
    }
}

/// Role of a factor in a multi-factor quasi-warped product.
#[derive(Clone)]
pub enum FactorSpec {
    /// Lies in a sphere (or pseudo-sphere) about the origin.
    Spherical(Immersion),
    /// Unit-speed curve with a parallel frame of a flat normal subbundle.
    Curve {
        curve: Immersion,
        frames: Arc<dyn FrameField>,
    },
    Flat(Immersion),
}

impl FactorSpec {
    fn immersion(&self) -> &Immersion {
        match self {
            FactorSpec::Spherical(f) | FactorSpec::Flat(f) => f,
            FactorSpec::Curve { curve, .. } => curve,
        }
    }
}

/// Product base `f_1 x ... x f_r x 0_m` with fiber space
/// `span{f_a / R_a} + (+) E_curve + R^m`, and the tube of `fiber` over it,
/// offset by `sum R_a e_a`.
///
/// Fiber slots are ordered spherical factors first, then curve frames, then
/// the flat directions. With a curved `target`, only spherical and flat
/// factors are allowed and the fiber must lie in the model space form.
pub fn build_quasiwarped_multi(
    factors: Vec<FactorSpec>,
    extra_flat: usize,
    fiber: Immersion,
    target: Option<SpaceForm>,
    opts: TubeOptions,
) -> Result<PartialTube> {
    if factors.is_empty() {
        return Err(invalid("quasi-warped product needs at least one factor"));
    }
    let target = target.filter(|t| !t.is_flat());
    let imms: Vec<Immersion> = factors.iter().map(|f| f.immersion().clone()).collect();
    let base = product_immersion(&imms, extra_flat)?;
    let mut blocks = Vec::new();
    let mut radii = Vec::new();
    for (a, f) in factors.iter().enumerate() {
        if let FactorSpec::Spherical(imm) = f {
            let radius = sphere_level(imm)?.abs().sqrt();
            blocks.push(FrameBlock::Position { factor: a, radius });
            radii.push((a, radius));
        }
    }
    for (a, f) in factors.iter().enumerate() {
        if let FactorSpec::Curve { curve, frames } = f {
            if target.is_some() {
                return Err(Error::Unsupported(
                    "curve factors in a curved target: use a curve tube instead".into(),
                ));
            }
            check_unit_speed(curve)?;
            if frames.base().dim() != 1 || frames.base().ambient() != curve.ambient() {
                return Err(invalid("curve frame lives over a different base"));
            }
            blocks.push(FrameBlock::Factor {
                factor: a,
                frames: frames.clone(),
            });
        }
    }
    let pad_start = base.ambient().dim() - extra_flat;
    for i in 0..extra_flat {
        blocks.push(FrameBlock::Constant { axis: pad_start + i });
    }
    if blocks.is_empty() {
        return Err(invalid("fiber space is empty"));
    }
    let phi = ProductFrames::new(base.clone(), imms.clone(), blocks)?;
    let slots = phi.slots();
    let s = phi.rank();
    let mut offset = DVector::zeros(s);
    let mut infos = Vec::new();
    let mut param_at = 0;
    for (a, f) in factors.iter().enumerate() {
        let imm = f.immersion();
        let params = param_at..param_at + imm.dim();
        param_at += imm.dim();
        let block = phi.blocks().iter().position(|b| match b {
            FrameBlock::Position { factor, .. } | FrameBlock::Factor { factor, .. } => *factor == a,
            FrameBlock::Constant { .. } => false,
        });
        let slot = block.map(|b| slots[b].clone()).unwrap_or(0..0);
        let (kind, frames) = match f {
            FactorSpec::Spherical(_) => {
                let r = radii.iter().find(|(b, _)| *b == a).expect("recorded").1;
                offset[slot.start] = r;
                (FactorKind::Position { radius: r }, None)
            }
            FactorSpec::Curve { frames, .. } => (FactorKind::Curve, Some(frames.clone())),
            FactorSpec::Flat(_) => (FactorKind::Flat, None),
        };
        infos.push(FactorInfo {
            immersion: imm.clone(),
            kind,
            params,
            slots: slot,
            frames,
        });
    }
    if let Some(t) = target {
        if factors.iter().any(|f| matches!(f, FactorSpec::Flat(_))) {
            return Err(Error::Unsupported("flat factors in a curved target".into()));
        }
        let worst = base
            .sample_values()?
            .iter()
            .map(|x| t.closure_defect(x))
            .fold(0.0, f64::max);
        if worst > opts.closure_tol * t.radius().powi(2).max(1.0) {
            return Err(Error::Hypothesis {
                what: "radius relation fails: product base leaves the target".into(),
                defect: worst,
                tol: opts.closure_tol,
            });
        }
    }
    let phi: Arc<dyn FrameField> = Arc::new(phi);
    let mut spec = PartialTubeSpec::new(fiber, phi)
        .with_offset(offset)
        .with_layout(FactorLayout { factors: infos });
    if let Some(t) = target {
        spec = spec.with_target(SpaceForm::new(t.epsilon(), t.radius(), base.ambient())?);
    }
    build_tube(spec, opts)
}

/// Extra structure checked for a warped product.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WarpedPreset {
    Generic,
    /// Base is an open piece of a round sphere of full dimension.
    Rotation,
    /// One-dimensional fiber: `f(t, p1) = t f1(p1) / R`.
    Cone,
}

/// Warped product of `fiber` (into the fiber model space of dimension `s`)
/// with a base lying in a sphere; the base is padded by `s - 1` flat
/// directions and the fiber's first slot carries the position.
///
/// The warping function is `rho = |<f0, e1>| / R`, required not to change
/// sign on the fiber grid.
pub fn build_warped(
    fiber: Immersion,
    base: Immersion,
    preset: WarpedPreset,
    target: Option<SpaceForm>,
    opts: TubeOptions,
) -> Result<PartialTube> {
    let s = fiber.ambient().dim();
    match preset {
        WarpedPreset::Generic => {}
        WarpedPreset::Rotation => {
            if base.dim() + 1 != base.ambient().dim() {
                return Err(invalid("rotation preset needs a hypersurface of its sphere as base"));
            }
        }
        WarpedPreset::Cone => {
            if s != 1 || fiber.dim() != 1 {
                return Err(invalid("cone preset needs a one-dimensional fiber space"));
            }
        }
    }
    let mut sign = 0.0f64;
    for y in fiber.sample_values()? {
        let v = y[0].signum();
        if y[0] == 0.0 || (sign != 0.0 && v != sign) {
            return Err(Error::Hypothesis {
                what: "warping function vanishes or changes sign on the fiber grid".into(),
                defect: y[0].abs(),
                tol: 0.0,
            });
        }
        sign = v;
    }
    build_quasiwarped_multi(vec![FactorSpec::Spherical(base)], s - 1, fiber, target, opts)
}

/// Tube of `fiber` over a unit-speed curve along a parallel frame.
///
/// With a curved target, the curve's position must lie in the frame's span
/// with constant coordinates, which become the fiber offset.
pub fn build_curve_tube(
    curve: Immersion,
    frames: Arc<dyn FrameField>,
    fiber: Immersion,
    target: Option<SpaceForm>,
    opts: TubeOptions,
) -> Result<PartialTube> {
    check_unit_speed(&curve)?;
    let target = target.filter(|t| !t.is_flat());
    let s = frames.rank();
    let info = FactorInfo {
        immersion: curve.clone(),
        kind: FactorKind::Curve,
        params: 0..1,
        slots: 0..s,
        frames: Some(frames.clone()),
    };
    let mut spec = PartialTubeSpec::new(fiber, frames.clone()).with_layout(FactorLayout {
        factors: vec![info],
    });
    if let Some(t) = target {
        let p = curve.domain().center();
        let c = frames.coordinates(&p, &curve.value(&p)?)?;
        spec = spec.with_offset(c).with_target(t);
    }
    build_tube(spec, opts)
}

/// A tube whose frame spans the whole normal bundle of the base, so that it
/// is an open piece of the ambient space form when the fiber is.
pub struct EndpointRepresentation {
    pub tube: PartialTube,
    /// Largest `|K - epsilon / R^2|` of the closed-form induced metric over
    /// coordinate planes at the sampled points.
    pub curvature_defect: f64,
}

/// `psi = G o phi o (f0 x id)` with `G(v) = f1(pi(v)) + v`.
///
/// The frame must span the full normal bundle and the fiber must be
/// equidimensional with its model space (or a hypersurface of it, for a
/// curved target, in which case `offset` carries the base position).
pub fn endpoint_representation(
    fiber: Immersion,
    phi: Arc<dyn FrameField>,
    target: Option<SpaceForm>,
    offset: Option<DVector<f64>>,
    opts: TubeOptions,
) -> Result<EndpointRepresentation> {
    let base = phi.base();
    let n = base.ambient().dim();
    let target = target.filter(|t| !t.is_flat());
    if base.dim() == 0 || phi.rank() + base.dim() != n {
        return Err(invalid(format!(
            "frame of rank {} does not span the normal bundle of a {}-dimensional base in dimension {n}",
            phi.rank(),
            base.dim()
        )));
    }
    let want = phi.rank() - usize::from(target.is_some());
    if fiber.dim() != want {
        return Err(invalid(format!(
            "fiber has {} parameters, a local isometry onto its model needs {want}",
            fiber.dim()
        )));
    }
    let mut spec = PartialTubeSpec::new(fiber, phi);
    if let Some(c) = offset {
        spec = spec.with_offset(c);
    }
    if let Some(t) = target {
        spec = spec.with_target(t);
    }
    let tube = build_tube(spec, opts)?;
    let points = tube.immersion().grid().points();
    let curvature_defect = if tube.immersion().dim() >= 2 {
        tube.curvature_defect(&points, CURVATURE_STEP)?
    } else {
        0.0
    };
    Ok(EndpointRepresentation {
        tube,
        curvature_defect,
    })
}
