//! The `decompose` command: extract a partial-tube triple from a built
//! construction.

use partube::decomp::{extract_tube, substantial_reduction, ExtractOptions};
use partube::immersion::ProductChart;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::fragment::Fragment;
use crate::scene::Resolved;
use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CertificateReport {
    pub adaptedness: f64,
    pub fiber_geodesic: f64,
    pub normality: f64,
    pub parallelism: f64,
    pub reconstruction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DecomposeReport {
    pub construction: String,
    pub chart: Vec<usize>,
    pub pass: bool,
    pub error: Option<String>,
    pub rank: Option<usize>,
    /// Rank after shrinking the fiber space to the affine hull of the fiber.
    pub substantial_rank: Option<usize>,
    pub singular_values: Vec<f64>,
    pub fiber_point: Vec<f64>,
    pub base_point: Vec<f64>,
    pub certificates: Option<CertificateReport>,
    /// Mismatch between the sampled fragment and the construction.
    pub fragment_defect: Option<f64>,
    pub tolerance: f64,
}

pub struct Request<'a> {
    pub construction: &'a str,
    pub chart: Option<Vec<usize>>,
    /// Point of the fiber block whose base sheet carries `f1`.
    pub base_point: Option<Vec<f64>>,
}

pub fn run(scene: &Resolved, req: &Request) -> Result<(DecomposeReport, Option<Fragment>), CliError> {
    let c = scene.construction(req.construction)?;
    let built = scene.build(c)?;
    let chart = match &req.chart {
        Some(d) => ProductChart::new(d.clone())?,
        None => built.chart()?,
    };
    let tol = scene.tolerances();
    let mut rep = DecomposeReport {
        construction: c.name.clone(),
        chart: chart.dims().to_vec(),
        pass: false,
        error: None,
        rank: None,
        substantial_rank: None,
        singular_values: Vec::new(),
        fiber_point: Vec::new(),
        base_point: Vec::new(),
        certificates: None,
        fragment_defect: None,
        tolerance: tol.reconstruction,
    };
    if let Some(p) = &req.base_point {
        if p.len() != chart.dims()[0] {
            return Err(CliError::Usage(format!(
                "--base-point needs {} coordinates of the fiber block",
                chart.dims()[0]
            )));
        }
    }
    let opts = ExtractOptions {
        adapted_tol: tol.adapted,
        geodesic_tol: tol.polar,
        christoffel_step: tol.christoffel_step,
        rank_tol: tol.rank,
        isometry: tol.isometry(),
        ..ExtractOptions::default()
    };
    let f = built.immersion();
    let r = match extract_tube(f, &chart, req.base_point.as_deref(), opts) {
        Ok(r) => r,
        Err(e) => {
            rep.error = Some(e.to_string());
            return Ok((rep, None));
        }
    };
    rep.rank = Some(r.rank());
    rep.singular_values = r.singular_values.clone();
    rep.fiber_point = r.fiber_point.clone();
    rep.base_point = r.base_point.clone();
    let c = r.certificates;
    rep.certificates = Some(CertificateReport {
        adaptedness: c.adaptedness,
        fiber_geodesic: c.fiber_geodesic,
        normality: c.normality,
        parallelism: c.parallelism,
        reconstruction: c.reconstruction,
    });
    rep.substantial_rank = substantial_reduction(&r, tol.rank).ok().map(|s| s.rank());
    let fragment = Fragment::from_extraction(&r)?;
    let defect = fragment.rebuild_defect(f)?;
    rep.fragment_defect = Some(defect);
    rep.pass = c.reconstruction <= tol.reconstruction && defect <= tol.reconstruction;
    Ok((rep, Some(fragment)))
}
