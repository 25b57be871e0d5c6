//! Frame fields with closed-form jets: frames given by expressions, and the
//! block frames of products of immersions (position vectors of spherical
//! factors, parallel frames of curve factors, constant directions).

use std::sync::Arc;

use nalgebra::DVector;

use crate::ambient::AmbientSpace;
use crate::error::{invalid, Error, Result};
use crate::immersion::{Immersion, MapJet, SmoothMap};
use crate::normconn::FrameField;

/// Frame vectors given as smooth maps over the base parameters.
pub struct ExprFrames {
    base: Immersion,
    fields: Vec<Arc<dyn SmoothMap>>,
    fiber: AmbientSpace,
}

impl ExprFrames {
    /// Checks on the base grid that the fields are orthonormal with the
    /// signature of `fiber`, normal, and parallel, all within `tol`.
    pub fn new(
        base: Immersion,
        fields: Vec<Arc<dyn SmoothMap>>,
        fiber: AmbientSpace,
        tol: f64,
    ) -> Result<ExprFrames> {
        if fields.len() != fiber.dim() || fields.is_empty() {
            return Err(invalid("frame count differs from the fiber dimension"));
        }
        let amb = base.ambient();
        for f in &fields {
            if f.source_dim() != base.dim() || f.target_dim() != amb.dim() {
                return Err(invalid("frame field has the wrong shape"));
            }
        }
        let out = ExprFrames {
            base,
            fields,
            fiber,
        };
        for p in out.base.grid().points() {
            let l = out.base.local(&p)?;
            let jets = out.frame_jets(&p)?;
            for (i, a) in jets.iter().enumerate() {
                let r = l.normal_residual(&a.value);
                if r > tol {
                    return Err(Error::NotNormal { residual: r });
                }
                for (j, b) in jets.iter().enumerate() {
                    let want = if i == j { fiber.sign(i) } else { 0.0 };
                    let d = (amb.dot(&a.value, &b.value) - want).abs();
                    if d > tol {
                        return Err(invalid(format!(
                            "frame is not orthonormal at {p:?} (defect {d:.3e})"
                        )));
                    }
                }
                for c in 0..l.k() {
                    let dn = l.normal_part(&a.col(c)).norm();
                    if dn > tol {
                        return Err(Error::Hypothesis {
                            what: format!("frame vector {i} is not parallel"),
                            defect: dn,
                            tol,
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

impl FrameField for ExprFrames {
    fn base(&self) -> &Immersion {
        &self.base
    }

    fn rank(&self) -> usize {
        self.fields.len()
    }

    fn fiber(&self) -> AmbientSpace {
        self.fiber
    }

    fn frame(&self, p: &[f64]) -> Result<Vec<DVector<f64>>> {
        self.fields.iter().map(|f| f.value(p)).collect()
    }

    fn frame_jets(&self, p: &[f64]) -> Result<Vec<MapJet>> {
        self.fields.iter().map(|f| f.jet(p, false)).collect()
    }
}

/// One block of a product frame.
#[derive(Clone)]
pub enum FrameBlock {
    /// `f_a / R_a` for a factor lying in a sphere (or pseudo-sphere) of
    /// radius `R_a` about the origin.
    Position { factor: usize, radius: f64 },
    /// A parallel frame of a flat normal subbundle of a curve or other
    /// factor, in that factor's own ambient.
    Factor {
        factor: usize,
        frames: Arc<dyn FrameField>,
    },
    /// The constant unit vector along one global ambient axis.
    Constant { axis: usize },
}

/// Parallel frames along a product `f_1 x ... x f_r` (ambient blocks in
/// factor order, followed by any trailing flat directions).
pub struct ProductFrames {
    base: Immersion,
    factors: Vec<Immersion>,
    param_offsets: Vec<usize>,
    ambient_offsets: Vec<usize>,
    blocks: Vec<FrameBlock>,
    fiber: AmbientSpace,
}

impl ProductFrames {
    pub fn new(
        base: Immersion,
        factors: Vec<Immersion>,
        blocks: Vec<FrameBlock>,
    ) -> Result<ProductFrames> {
        let (mut po, mut ao) = (Vec::new(), Vec::new());
        let (mut a, mut b) = (0, 0);
        for f in &factors {
            po.push(a);
            ao.push(b);
            a += f.dim();
            b += f.ambient().dim();
        }
        if a != base.dim() || b > base.ambient().dim() {
            return Err(invalid("factors do not match the product base"));
        }
        let mut signs = Vec::new();
        for blk in &blocks {
            match blk {
                FrameBlock::Position { factor, radius } => {
                    let f = factors.get(*factor).ok_or_else(|| invalid("no such factor"))?;
                    if !(*radius > 0.0) {
                        return Err(invalid("radius must be positive"));
                    }
                    signs.push(if f.ambient().is_lorentzian() { -1.0 } else { 1.0 });
                }
                FrameBlock::Factor { factor, frames } => {
                    if *factor >= factors.len() {
                        return Err(invalid("no such factor"));
                    }
                    let fib = frames.fiber();
                    signs.extend((0..fib.dim()).map(|i| fib.sign(i)));
                }
                FrameBlock::Constant { axis } => {
                    if *axis >= base.ambient().dim() {
                        return Err(invalid("constant direction outside the ambient"));
                    }
                    signs.push(base.ambient().sign(*axis));
                }
            }
        }
        let fiber = match signs.iter().position(|&s| s < 0.0) {
            None => AmbientSpace::euclidean(signs.len()),
            Some(0) if signs.iter().filter(|&&s| s < 0.0).count() == 1 => {
                AmbientSpace::lorentzian(signs.len())
            }
            _ => return Err(invalid("a timelike frame vector must come first")),
        };
        Ok(ProductFrames {
            base,
            factors,
            param_offsets: po,
            ambient_offsets: ao,
            blocks,
            fiber,
        })
    }

    pub fn blocks(&self) -> &[FrameBlock] {
        &self.blocks
    }

    pub fn factors(&self) -> &[Immersion] {
        &self.factors
    }

    /// Fiber slots used by each block, in block order.
    pub fn slots(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut at = 0;
        for blk in &self.blocks {
            let n = match blk {
                FrameBlock::Factor { frames, .. } => frames.rank(),
                _ => 1,
            };
            out.push(at..at + n);
            at += n;
        }
        out
    }

    fn factor_params<'a>(&self, p: &'a [f64], a: usize) -> &'a [f64] {
        &p[self.param_offsets[a]..self.param_offsets[a] + self.factors[a].dim()]
    }

    /// Embeds a factor-level jet into the global ambient and parameters.
    fn embed(&self, a: usize, j: &MapJet, scale: f64) -> MapJet {
        let n = self.base.ambient().dim();
        let k = self.base.dim();
        let (po, ao) = (self.param_offsets[a], self.ambient_offsets[a]);
        let (ka, na) = (j.k(), j.n());
        let mut out = MapJet::zeros(n, k, false);
        for r in 0..na {
            out.value[ao + r] = scale * j.value[r];
            for c in 0..ka {
                out.d1[(ao + r, po + c)] = scale * j.d1[(r, c)];
            }
        }
        for c in 0..ka {
            for d in 0..ka {
                let src = j.d2(c, d);
                let dst = &mut out.d2[(po + c) * k + po + d];
                for r in 0..na {
                    dst[ao + r] = scale * src[r];
                }
            }
        }
        out
    }
}

impl FrameField for ProductFrames {
    fn base(&self) -> &Immersion {
        &self.base
    }

    fn rank(&self) -> usize {
        self.fiber.dim()
    }

    fn fiber(&self) -> AmbientSpace {
        self.fiber
    }

    fn frame(&self, p: &[f64]) -> Result<Vec<DVector<f64>>> {
        Ok(self.frame_jets_inner(p, false)?.into_iter().map(|j| j.value).collect())
    }

    fn frame_jets(&self, p: &[f64]) -> Result<Vec<MapJet>> {
        self.frame_jets_inner(p, true)
    }

    fn flatness_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| match b {
                FrameBlock::Factor { frames, .. } => frames.flatness_defect(),
                _ => 0.0,
            })
            .fold(0.0, f64::max)
    }
}

impl ProductFrames {
    fn frame_jets_inner(&self, p: &[f64], derivs: bool) -> Result<Vec<MapJet>> {
        let n = self.base.ambient().dim();
        let k = self.base.dim();
        let mut out = Vec::with_capacity(self.rank());
        for blk in &self.blocks {
            match blk {
                FrameBlock::Position { factor, radius } => {
                    let q = self.factor_params(p, *factor);
                    let j = if derivs {
                        self.factors[*factor].jet(q, false)?
                    } else {
                        let f = &self.factors[*factor];
                        let mut j = MapJet::zeros(f.ambient().dim(), f.dim(), false);
                        j.value = f.value(q)?;
                        j
                    };
                    out.push(self.embed(*factor, &j, 1.0 / radius));
                }
                FrameBlock::Factor { factor, frames } => {
                    let q = self.factor_params(p, *factor);
                    if derivs {
                        for j in frames.frame_jets(q)? {
                            out.push(self.embed(*factor, &j, 1.0));
                        }
                    } else {
                        let f = &self.factors[*factor];
                        for v in frames.frame(q)? {
                            let mut j = MapJet::zeros(f.ambient().dim(), f.dim(), false);
                            j.value = v;
                            out.push(self.embed(*factor, &j, 1.0));
                        }
                    }
                }
                FrameBlock::Constant { axis } => {
                    let mut j = MapJet::zeros(n, k, false);
                    j.value[*axis] = 1.0;
                    out.push(j);
                }
            }
        }
        Ok(out)
    }
}
