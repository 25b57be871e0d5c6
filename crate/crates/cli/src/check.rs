//! The `check` command: build every construction and run the suites that
//! apply to it.

use partube::decomp::{classify_metric, MetricClass, Verdict};
use partube::immersion::adaptedness_defect;
use partube::tube::{DirectJets, IdentityReport};

use crate::report::{ConstructionReport, OmegaSample, Record, Report};
use crate::scene::{Built, ClassName, Construction, ConstructionBlock, Resolved, Tolerances};
use crate::CliError;

pub fn kind_name(c: &Construction) -> &'static str {
    match c {
        Construction::Tube { .. } => "tube",
        Construction::Warped { .. } => "warped",
        Construction::CurveTube { .. } => "curve_tube",
        Construction::QuasiWarped { .. } => "quasi_warped",
        Construction::Product { .. } => "product",
        Construction::Endpoint { .. } => "endpoint",
        Construction::Immersion { .. } => "immersion",
    }
}

pub fn run(scene: &Resolved) -> Report {
    let out = scene
        .scene
        .constructions
        .iter()
        .map(|c| check_construction(scene, c))
        .collect();
    Report::new(scene.scene.seed, out)
}

fn check_construction(scene: &Resolved, c: &ConstructionBlock) -> ConstructionReport {
    let mut rep = ConstructionReport {
        name: c.name.clone(),
        kind: kind_name(&c.body).to_string(),
        pass: false,
        error: None,
        outside_omega: Vec::new(),
        records: Vec::new(),
    };
    let built = match scene.build(c) {
        Ok(b) => b,
        Err(e) => {
            if let CliError::Core(partube::Error::OutsideOmega { samples }) = &e {
                rep.outside_omega = samples
                    .iter()
                    .map(|s| OmegaSample {
                        fiber_param: s.fiber_param.clone(),
                        fiber_value: s.fiber_value.clone(),
                        margin: s.margin,
                        min_singular_value: s.min_singular_value,
                    })
                    .collect();
            }
            rep.error = Some(e.to_string());
            return rep.finish();
        }
    };
    if let Err(e) = measure(scene, c, &built, &mut rep.records) {
        rep.error = Some(e.to_string());
    }
    rep.finish()
}

fn identity_records(r: &IdentityReport, tol: f64, out: &mut Vec<Record>) {
    let n = r.samples;
    let rows: [(&str, &str, Option<f64>); 9] = [
        ("diff_fiber", "differential along the fiber equals phi(d f0)", Some(r.diff_fiber)),
        ("diff_base", "differential along the base equals d f1 composed with P", Some(r.diff_base)),
        ("shape_base", "base-direction shape operators of tube normals", Some(r.shape_base)),
        (
            "shape_complement",
            "fiber-direction shape operators vanish for normals outside E",
            Some(r.shape_complement),
        ),
        (
            "shape_fiber",
            "fiber-direction shape operators of fiber normals match the fiber",
            Some(r.shape_fiber),
        ),
        ("polar_metric", "induced metric equals g0 + P^T g1 P", Some(r.polar_metric)),
        ("factor_split", "base metric splits as a sum over factors", r.factor_split),
        ("warping", "factor metric blocks equal rho_a^2 g_a", r.warping),
        ("umbilical_factor", "per-factor P_a^2 equals rho_a^2 I", r.umbilical_factor),
    ];
    for (name, anchor, v) in rows {
        if let Some(v) = v {
            out.push(Record::new(name, anchor, v, tol, n));
        }
    }
}

fn ladder_index(v: Verdict) -> usize {
    match v {
        Verdict::None => 0,
        Verdict::Polar => 1,
        Verdict::QuasiWarped => 2,
        Verdict::Warped => 3,
        Verdict::Product => 4,
    }
}

/// Two records for an expected class: the rungs it needs are below `tol`,
/// and the rung above it fails by at least ten times `tol`.
pub fn class_records(class: &MetricClass, want: ClassName, samples: usize) -> Vec<Record> {
    let tol = class.tol;
    let i = ladder_index(want.verdict());
    let mut out = Vec::new();
    let (needed, next) = if i == 0 {
        let next = if class.rungs[0] >= tol { class.rungs[0] } else { class.rungs[1] };
        (0.0, Some(next))
    } else {
        let needed = class.rungs[..=i].iter().cloned().fold(0.0, f64::max);
        (needed, class.rungs.get(i + 1).cloned())
    };
    out.push(Record::new(
        "class",
        &format!("metric belongs to the {} class", want.verdict().name()),
        needed,
        tol,
        samples,
    ));
    if let Some(next) = next {
        out.push(Record::new(
            "class_separation",
            "next class up fails by at least ten times the tolerance",
            10.0 * tol / next.max(f64::MIN_POSITIVE),
            1.0,
            samples,
        ));
    }
    out
}

fn measure(scene: &Resolved, c: &ConstructionBlock, built: &Built, out: &mut Vec<Record>) -> Result<(), CliError> {
    let tol: Tolerances = scene.tolerances();
    let f = built.immersion();
    let chart = built.chart()?;
    let n = f.grid().len();
    if chart.factors() >= 2 {
        out.push(Record::new(
            "adaptedness",
            "mixed second fundamental form vanishes across chart factors",
            adaptedness_defect(f, &chart)?,
            tol.adapted,
            n,
        ));
    }
    if let Some(t) = built.tube() {
        let mode = if built.analytic() {
            DirectJets::Analytic
        } else {
            DirectJets::FiniteDifference { step: tol.fd_step }
        };
        identity_records(&t.verify_on_grid(mode)?, tol.identity, out);
        out.push(Record::new(
            "polar",
            "fiber distribution is totally geodesic",
            t.polar_defect(tol.christoffel_step)?,
            tol.polar,
            n,
        ));
        if t.spec().target.is_some_and(|s| !s.is_flat()) {
            out.push(Record::new(
                "closure",
                "samples lie in the target space form",
                t.closure_defect()?,
                tol.closure,
                n,
            ));
        }
    } else if let Some(s) = f.target().filter(|s| !s.is_flat()) {
        let d = f
            .sample_values()?
            .iter()
            .map(|x| s.closure_defect(x))
            .fold(0.0, f64::max);
        out.push(Record::new("closure", "samples lie in the target space form", d, tol.closure, n));
    }
    if let Built::Endpoint { curvature_defect, .. } = built {
        out.push(Record::new(
            "endpoint_curvature",
            "induced metric has the constant curvature of the target",
            *curvature_defect,
            tol.curvature,
            n,
        ));
    }
    if let Some(want) = c.expect.as_ref().and_then(|e| e.class) {
        let class = classify_metric(f, &chart, tol.classify, tol.christoffel_step)?;
        out.extend(class_records(&class, want, n));
    }
    Ok(())
}
