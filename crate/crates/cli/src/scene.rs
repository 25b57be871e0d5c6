//! Scene files: a strict JSON description of ambient space, immersions,
//! frame fields and the constructions built from them.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use partube::ambient::{AmbientSpace, SpaceForm};
use partube::exprlang;
use partube::immersion::{Immersion, ProductChart};
use partube::normconn::{build_parallel_isometry, FrameField, IsometryOptions};
use partube::tube::{
    build_curve_tube, build_product, build_quasiwarped_multi, build_tube, build_warped, endpoint_representation,
    ArcLengthCurve, ExprFrames, FactorSpec, PartialTube, PartialTubeSpec, TubeOptions, WarpedPreset,
};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum Signature {
    #[default]
    Euclidean,
    Lorentzian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct AmbientBlock {
    pub dim: usize,
    #[serde(default)]
    pub signature: Signature,
}

impl AmbientBlock {
    pub fn space(&self) -> AmbientSpace {
        match self.signature {
            Signature::Euclidean => AmbientSpace::euclidean(self.dim),
            Signature::Lorentzian => AmbientSpace::lorentzian(self.dim),
        }
    }
}

/// Space form `<x, x> = epsilon R^2` inside the scene ambient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TargetBlock {
    pub epsilon: i8,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ImmersionBlock {
    pub name: String,
    pub variables: Vec<String>,
    /// One `[lo, hi]` interval per variable.
    pub domain: Vec<[f64; 2]>,
    pub coords: Vec<String>,
    /// Grid sample counts per variable.
    pub grid: Vec<usize>,
    /// Defaults to the scene ambient.
    #[serde(default)]
    pub ambient: Option<AmbientBlock>,
    /// Reparametrise a curve by arc length from the start of its domain.
    #[serde(default)]
    pub arc_length: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FrameBlock {
    /// Orthonormal parallel normal fields given by expressions in the base
    /// variables.
    Expr {
        name: String,
        base: String,
        fields: Vec<Vec<String>>,
        #[serde(default)]
        signature: Signature,
    },
    /// Parallel transport of `seed` from `base_point` over the base grid.
    Transport {
        name: String,
        base: String,
        seed: Vec<Vec<f64>>,
        #[serde(default)]
        base_point: Option<Vec<f64>>,
    },
    /// Parallel transport of the whole normal space at `base_point`.
    NormalBundle {
        name: String,
        base: String,
        #[serde(default)]
        base_point: Option<Vec<f64>>,
    },
}

impl FrameBlock {
    pub fn name(&self) -> &str {
        match self {
            FrameBlock::Expr { name, .. } | FrameBlock::Transport { name, .. } | FrameBlock::NormalBundle { name, .. } => {
                name
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Generic,
    Rotation,
    Cone,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FactorBlock {
    Spherical(String),
    Curve { immersion: String, frames: String },
    Flat(String),
}

/// A construction; `in_target` places it in the scene space form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Construction {
    Tube {
        fiber: String,
        frames: String,
        #[serde(default)]
        offset: Option<Vec<f64>>,
        #[serde(default)]
        in_target: bool,
    },
    Warped {
        fiber: String,
        base: String,
        #[serde(default = "generic")]
        preset: PresetName,
        #[serde(default)]
        in_target: bool,
    },
    CurveTube {
        curve: String,
        frames: String,
        fiber: String,
        #[serde(default)]
        in_target: bool,
    },
    QuasiWarped {
        factors: Vec<FactorBlock>,
        #[serde(default)]
        extra_flat: usize,
        fiber: String,
        #[serde(default)]
        in_target: bool,
    },
    Product {
        factors: Vec<String>,
        #[serde(default)]
        in_target: bool,
    },
    Endpoint {
        fiber: String,
        frames: String,
        #[serde(default)]
        offset: Option<Vec<f64>>,
        #[serde(default)]
        in_target: bool,
    },
    /// A scene immersion read on a product chart.
    Immersion { immersion: String, chart: Vec<usize> },
}

fn generic() -> PresetName {
    PresetName::Generic
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ClassName {
    None,
    Polar,
    QuasiWarped,
    Warped,
    Product,
}

impl ClassName {
    pub fn verdict(self) -> partube::decomp::Verdict {
        use partube::decomp::Verdict;
        match self {
            ClassName::None => Verdict::None,
            ClassName::Polar => Verdict::Polar,
            ClassName::QuasiWarped => Verdict::QuasiWarped,
            ClassName::Warped => Verdict::Warped,
            ClassName::Product => Verdict::Product,
        }
    }
}

/// Optional expectations checked by `check`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    #[serde(default)]
    pub class: Option<ClassName>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ConstructionBlock {
    pub name: String,
    #[serde(flatten)]
    pub body: Construction,
    #[serde(default)]
    pub expect: Option<Expectation>,
}

/// Every tolerance used by the commands, with defaults.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub omega_margin: f64,
    pub min_singular: f64,
    pub position: f64,
    pub closure: f64,
    pub cluster: f64,
    pub frame: f64,
    pub identity: f64,
    pub adapted: f64,
    pub polar: f64,
    pub classify: f64,
    pub christoffel_step: f64,
    pub fd_step: f64,
    pub curvature: f64,
    pub rank: f64,
    pub reconstruction: f64,
    pub mesh_singular: f64,
    pub steps_per_unit: f64,
    pub flatness: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            omega_margin: 1e-6,
            min_singular: 1e-8,
            position: 1e-8,
            closure: 1e-9,
            cluster: 1e-6,
            frame: 1e-9,
            identity: 1e-6,
            adapted: 1e-6,
            polar: 1e-4,
            classify: 1e-6,
            christoffel_step: 1e-3,
            fd_step: 1e-4,
            curvature: 1e-5,
            rank: 1e-6,
            reconstruction: 1e-6,
            mesh_singular: 1e-4,
            steps_per_unit: 64.0,
            flatness: 1e-5,
        }
    }
}

impl Tolerances {
    pub fn tube(&self, seed: u64) -> TubeOptions {
        TubeOptions {
            omega_margin: self.omega_margin,
            min_singular: self.min_singular,
            position_tol: self.position,
            closure_tol: self.closure,
            cluster_tol: self.cluster,
            seed,
        }
    }

    pub fn isometry(&self) -> IsometryOptions {
        IsometryOptions {
            steps_per_unit: self.steps_per_unit,
            flatness_tol: self.flatness,
            ..IsometryOptions::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    /// Seed for the random combinations used in joint diagonalisation.
    #[serde(default)]
    pub seed: u64,
    pub ambient: AmbientBlock,
    #[serde(default)]
    pub target: Option<TargetBlock>,
    pub immersions: Vec<ImmersionBlock>,
    #[serde(default)]
    pub frames: Vec<FrameBlock>,
    #[serde(default)]
    pub constructions: Vec<ConstructionBlock>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// A built construction.
pub enum Built {
    Tube { tube: PartialTube, analytic: bool },
    Endpoint { tube: PartialTube, analytic: bool, curvature_defect: f64 },
    Plain { immersion: Immersion, chart: ProductChart },
}

impl Built {
    pub fn immersion(&self) -> &Immersion {
        match self {
            Built::Tube { tube, .. } | Built::Endpoint { tube, .. } => tube.immersion(),
            Built::Plain { immersion, .. } => immersion,
        }
    }

    pub fn chart(&self) -> Result<ProductChart, CliError> {
        match self {
            Built::Tube { tube, .. } | Built::Endpoint { tube, .. } => Ok(tube.chart()?),
            Built::Plain { chart, .. } => Ok(chart.clone()),
        }
    }

    pub fn tube(&self) -> Option<&PartialTube> {
        match self {
            Built::Tube { tube, .. } | Built::Endpoint { tube, .. } => Some(tube),
            Built::Plain { .. } => None,
        }
    }

    /// Whether every map in the construction has closed-form jets.
    pub fn analytic(&self) -> bool {
        match self {
            Built::Tube { analytic, .. } | Built::Endpoint { analytic, .. } => *analytic,
            Built::Plain { .. } => true,
        }
    }
}

struct Frames {
    field: Arc<dyn FrameField>,
    analytic: bool,
}

/// A parsed scene with its immersions and frames resolved.
pub struct Resolved {
    pub scene: Scene,
    immersions: HashMap<String, Immersion>,
    frames: HashMap<String, Frames>,
}

pub fn load(path: &Path) -> Result<Resolved, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::io_error(path, e))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Resolved, CliError> {
    let scene: Scene = serde_json::from_str(text)
        .map_err(|e| CliError::Parse(format!("scene JSON, line {} column {}: {e}", e.line(), e.column())))?;
    resolve(scene)
}

fn vector(xs: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(xs)
}

fn build_immersion(b: &ImmersionBlock, scene_ambient: AmbientSpace) -> Result<Immersion, CliError> {
    let ctx = |m: String| CliError::Parse(format!("immersion '{}': {m}", b.name));
    if b.domain.len() != b.variables.len() || b.grid.len() != b.variables.len() {
        return Err(ctx("domain and grid need one entry per variable".into()));
    }
    if let Some([lo, hi]) = b.domain.iter().find(|[lo, hi]| lo.partial_cmp(hi) != Some(std::cmp::Ordering::Less)) {
        return Err(ctx(format!("empty domain interval [{lo}, {hi}]")));
    }
    for (i, c) in b.coords.iter().enumerate() {
        exprlang::parse(c, &b.variables).map_err(|e| ctx(format!("coordinate {i}: {e}")))?;
    }
    let ambient = b.ambient.map(|a| a.space()).unwrap_or(scene_ambient);
    if b.coords.len() != ambient.dim() {
        return Err(ctx(format!("{} coordinates for a {}-dimensional ambient", b.coords.len(), ambient.dim())));
    }
    let iv: Vec<(f64, f64)> = b.domain.iter().map(|[lo, hi]| (*lo, *hi)).collect();
    let f = Immersion::from_expressions(&b.variables, &b.coords, &iv, &b.grid, ambient)
        .map_err(|e| ctx(e.to_string()))?;
    if !b.arc_length {
        return Ok(f);
    }
    if b.variables.len() != 1 {
        return Err(ctx("arc-length reparametrisation needs a curve".into()));
    }
    let curve = ArcLengthCurve::new(&f).map_err(|e| ctx(e.to_string()))?;
    curve.into_immersion(&b.variables[0], b.grid[0]).map_err(|e| ctx(e.to_string()))
}

fn resolve(scene: Scene) -> Result<Resolved, CliError> {
    let ambient = scene.ambient.space();
    let mut immersions = HashMap::new();
    for b in &scene.immersions {
        let f = build_immersion(b, ambient)?;
        if immersions.insert(b.name.clone(), f).is_some() {
            return Err(CliError::Parse(format!("duplicate immersion name '{}'", b.name)));
        }
    }
    let mut out = Resolved {
        immersions,
        frames: HashMap::new(),
        scene: scene.clone(),
    };
    for fb in &scene.frames {
        let fr = out.build_frames(fb)?;
        if out.frames.insert(fb.name().to_string(), fr).is_some() {
            return Err(CliError::Parse(format!("duplicate frame name '{}'", fb.name())));
        }
    }
    let mut names = std::collections::HashSet::new();
    for c in &scene.constructions {
        if !names.insert(c.name.clone()) {
            return Err(CliError::Parse(format!("duplicate construction name '{}'", c.name)));
        }
        out.check_references(c)?;
    }
    Ok(out)
}

impl Resolved {
    pub fn immersion(&self, name: &str) -> Result<&Immersion, CliError> {
        self.immersions
            .get(name)
            .ok_or_else(|| CliError::Parse(format!("unknown immersion '{name}'")))
    }

    fn frames(&self, name: &str) -> Result<&Frames, CliError> {
        self.frames
            .get(name)
            .ok_or_else(|| CliError::Parse(format!("unknown frames '{name}'")))
    }

    pub fn tolerances(&self) -> Tolerances {
        self.scene.tolerances
    }

    pub fn target(&self) -> Result<Option<SpaceForm>, CliError> {
        match self.scene.target {
            None => Ok(None),
            Some(t) => Ok(Some(
                SpaceForm::new(t.epsilon, t.radius, self.scene.ambient.space())
                    .map_err(|e| CliError::Parse(format!("target: {e}")))?,
            )),
        }
    }

    fn build_frames(&self, fb: &FrameBlock) -> Result<Frames, CliError> {
        let ctx = |m: String| CliError::Parse(format!("frames '{}': {m}", fb.name()));
        let tol = self.scene.tolerances;
        let center = |f: &Immersion| f.grid().node(&f.grid().nearest(&f.domain().center()));
        match fb {
            FrameBlock::Expr {
                base,
                fields,
                signature,
                ..
            } => {
                let b = self.immersion(base)?;
                let vars = b.variables();
                let maps = fields
                    .iter()
                    .map(|c| {
                        partube::immersion::ExprMap::parse(&vars, c)
                            .map(|m| Arc::new(m) as Arc<dyn partube::immersion::SmoothMap>)
                            .map_err(|e| ctx(e.to_string()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let fiber = AmbientBlock {
                    dim: fields.len(),
                    signature: *signature,
                }
                .space();
                let ef = ExprFrames::new(b.clone(), maps, fiber, tol.frame).map_err(|e| ctx(e.to_string()))?;
                Ok(Frames {
                    field: Arc::new(ef),
                    analytic: true,
                })
            }
            FrameBlock::Transport { base, seed, base_point, .. } => {
                let b = self.immersion(base)?;
                let p = base_point.clone().unwrap_or_else(|| center(b));
                let seed: Vec<DVector<f64>> = seed.iter().map(|s| vector(s)).collect();
                let iso = build_parallel_isometry(b, &p, &seed, b.grid(), tol.isometry()).map_err(|e| ctx(e.to_string()))?;
                Ok(Frames {
                    field: Arc::new(iso),
                    analytic: false,
                })
            }
            FrameBlock::NormalBundle { base, base_point, .. } => {
                let b = self.immersion(base)?;
                let p = base_point.clone().unwrap_or_else(|| center(b));
                let seed = b.normal_basis(&p, 1e-9).map_err(|e| ctx(e.to_string()))?;
                let iso = build_parallel_isometry(b, &p, &seed, b.grid(), tol.isometry()).map_err(|e| ctx(e.to_string()))?;
                Ok(Frames {
                    field: Arc::new(iso),
                    analytic: false,
                })
            }
        }
    }

    fn check_references(&self, c: &ConstructionBlock) -> Result<(), CliError> {
        let ctx = |e: CliError| CliError::Parse(format!("construction '{}': {e}", c.name));
        let imm = |n: &str| self.immersion(n).map(|_| ()).map_err(ctx);
        let frm = |n: &str| self.frames(n).map(|_| ()).map_err(ctx);
        match &c.body {
            Construction::Tube { fiber, frames, .. } | Construction::Endpoint { fiber, frames, .. } => {
                imm(fiber)?;
                frm(frames)
            }
            Construction::Warped { fiber, base, .. } => {
                imm(fiber)?;
                imm(base)
            }
            Construction::CurveTube { curve, frames, fiber, .. } => {
                imm(curve)?;
                imm(fiber)?;
                frm(frames)
            }
            Construction::QuasiWarped { factors, fiber, .. } => {
                imm(fiber)?;
                for f in factors {
                    match f {
                        FactorBlock::Spherical(n) | FactorBlock::Flat(n) => imm(n)?,
                        FactorBlock::Curve { immersion, frames } => {
                            imm(immersion)?;
                            frm(frames)?;
                        }
                    }
                }
                Ok(())
            }
            Construction::Product { factors, .. } => factors.iter().try_for_each(|n| imm(n)),
            Construction::Immersion { immersion, .. } => imm(immersion),
        }
    }

    pub fn construction(&self, name: &str) -> Result<&ConstructionBlock, CliError> {
        self.scene
            .constructions
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| CliError::Usage(format!("no construction named '{name}'")))
    }

    fn target_if(&self, wanted: bool) -> Result<Option<SpaceForm>, CliError> {
        if !wanted {
            return Ok(None);
        }
        match self.target()? {
            Some(t) => Ok(Some(t)),
            None => Err(CliError::Parse("construction asks for the target but the scene has none".into())),
        }
    }

    /// Builds one construction. Geometric failures are reported as
    /// [`CliError::Core`].
    pub fn build(&self, c: &ConstructionBlock) -> Result<Built, CliError> {
        let opts = self.scene.tolerances.tube(self.scene.seed);
        match &c.body {
            Construction::Tube {
                fiber,
                frames,
                offset,
                in_target,
            } => {
                let fr = self.frames(frames)?;
                let mut spec = PartialTubeSpec::new(self.immersion(fiber)?.clone(), fr.field.clone());
                if let Some(o) = offset {
                    spec = spec.with_offset(vector(o));
                }
                if let Some(t) = self.target_if(*in_target)? {
                    spec = spec.with_target(t);
                }
                Ok(Built::Tube {
                    tube: build_tube(spec, opts)?,
                    analytic: fr.analytic,
                })
            }
            Construction::Warped {
                fiber,
                base,
                preset,
                in_target,
            } => {
                let preset = match preset {
                    PresetName::Generic => WarpedPreset::Generic,
                    PresetName::Rotation => WarpedPreset::Rotation,
                    PresetName::Cone => WarpedPreset::Cone,
                };
                let tube = build_warped(
                    self.immersion(fiber)?.clone(),
                    self.immersion(base)?.clone(),
                    preset,
                    self.target_if(*in_target)?,
                    opts,
                )?;
                Ok(Built::Tube { tube, analytic: true })
            }
            Construction::CurveTube {
                curve,
                frames,
                fiber,
                in_target,
            } => {
                let fr = self.frames(frames)?;
                let tube = build_curve_tube(
                    self.immersion(curve)?.clone(),
                    fr.field.clone(),
                    self.immersion(fiber)?.clone(),
                    self.target_if(*in_target)?,
                    opts,
                )?;
                Ok(Built::Tube {
                    tube,
                    analytic: fr.analytic,
                })
            }
            Construction::QuasiWarped {
                factors,
                extra_flat,
                fiber,
                in_target,
            } => {
                let mut analytic = true;
                let mut specs = Vec::new();
                for f in factors {
                    specs.push(match f {
                        FactorBlock::Spherical(n) => FactorSpec::Spherical(self.immersion(n)?.clone()),
                        FactorBlock::Flat(n) => FactorSpec::Flat(self.immersion(n)?.clone()),
                        FactorBlock::Curve { immersion, frames } => {
                            let fr = self.frames(frames)?;
                            analytic &= fr.analytic;
                            FactorSpec::Curve {
                                curve: self.immersion(immersion)?.clone(),
                                frames: fr.field.clone(),
                            }
                        }
                    });
                }
                let tube = build_quasiwarped_multi(
                    specs,
                    *extra_flat,
                    self.immersion(fiber)?.clone(),
                    self.target_if(*in_target)?,
                    opts,
                )?;
                Ok(Built::Tube { tube, analytic })
            }
            Construction::Product { factors, in_target } => {
                let fs = factors
                    .iter()
                    .map(|n| self.immersion(n).cloned())
                    .collect::<Result<Vec<_>, _>>()?;
                let dims = fs.iter().map(|f| f.dim()).collect();
                let immersion = build_product(&fs, self.target_if(*in_target)?)?;
                Ok(Built::Plain {
                    immersion,
                    chart: ProductChart::new(dims)?,
                })
            }
            Construction::Endpoint {
                fiber,
                frames,
                offset,
                in_target,
            } => {
                let fr = self.frames(frames)?;
                let rep = endpoint_representation(
                    self.immersion(fiber)?.clone(),
                    fr.field.clone(),
                    self.target_if(*in_target)?,
                    offset.as_deref().map(vector),
                    opts,
                )?;
                Ok(Built::Endpoint {
                    tube: rep.tube,
                    analytic: fr.analytic,
                    curvature_defect: rep.curvature_defect,
                })
            }
            Construction::Immersion { immersion, chart } => {
                let f = self.immersion(immersion)?.clone();
                let chart = ProductChart::new(chart.clone())?;
                chart.check(f.dim())?;
                Ok(Built::Plain { immersion: f, chart })
            }
        }
    }
}
