use std::sync::Arc;

use nalgebra::DVector;

use super::*;
use crate::ambient::{AmbientSpace, SpaceForm};
use crate::error::Error;
use crate::immersion::map::ExprMap;
use crate::immersion::{Immersion, ProductChart, SmoothMap};
use crate::normconn::{build_parallel_isometry, FrameField, IsometryOptions};
use crate::tube::{
    build_curve_tube, build_product, build_quasiwarped_multi, build_tube, build_warped, endpoint_representation,
    ArcLengthCurve, ExprFrames, FactorSpec, PartialTube, PartialTubeSpec, TubeOptions, WarpedPreset,
};

fn imm(vars: &[&str], coords: &[&str], iv: &[(f64, f64)], counts: &[usize], amb: AmbientSpace) -> Immersion {
    Immersion::from_expressions(vars, coords, iv, counts, amb).unwrap()
}

fn field(vars: &[&str], coords: &[&str]) -> Arc<dyn SmoothMap> {
    Arc::new(ExprMap::parse(vars, coords).unwrap())
}

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(xs)
}

fn e3() -> AmbientSpace {
    AmbientSpace::euclidean(3)
}

fn core_circle() -> Immersion {
    imm(&["v"], &["2*cos(v)", "2*sin(v)", "0"], &[(0.0, 6.0)], &[9], e3())
}

fn torus_frames() -> Arc<dyn FrameField> {
    Arc::new(
        ExprFrames::new(
            core_circle(),
            vec![field(&["v"], &["cos(v)", "sin(v)", "0"]), field(&["v"], &["0", "0", "1"])],
            AmbientSpace::euclidean(2),
            1e-12,
        )
        .unwrap(),
    )
}

fn torus() -> PartialTube {
    let fiber = imm(&["u"], &["0.5*cos(u)", "0.5*sin(u)"], &[(0.0, 6.0)], &[9], AmbientSpace::euclidean(2));
    build_tube(PartialTubeSpec::new(fiber, torus_frames()), TubeOptions::default()).unwrap()
}

fn helix_core_tube() -> PartialTube {
    let c = 5f64.sqrt();
    let (x, y, z) = (format!("2*cos(t/{c})"), format!("2*sin(t/{c})"), format!("t/{c}"));
    let core = imm(&["t"], &[&x, &y, &z], &[(0.0, 3.0)], &[13], e3());
    let seed = core.local(&[0.0]).unwrap().normal_basis(1e-9).unwrap();
    let iso = build_parallel_isometry(&core, &[0.0], &seed, core.grid(), IsometryOptions::default()).unwrap();
    let fiber = imm(&["u"], &["0.5*cos(u)", "0.5*sin(u)"], &[(0.0, 6.0)], &[9], AmbientSpace::euclidean(2));
    build_curve_tube(core, Arc::new(iso), fiber, None, TubeOptions::default()).unwrap()
}

fn two_factor_tube() -> PartialTube {
    let c1 = imm(&["a"], &["cos(a)", "sin(a)"], &[(0.0, 6.0)], &[5], AmbientSpace::euclidean(2));
    let c2 = imm(&["b"], &["2*cos(b)", "2*sin(b)"], &[(0.0, 6.0)], &[5], AmbientSpace::euclidean(2));
    let fiber = imm(
        &["x", "y"],
        &["1.5 + 0.3*x", "1.2 + 0.2*y + 0.1*x*y"],
        &[(-1.0, 1.0), (-1.0, 1.0)],
        &[3, 3],
        AmbientSpace::euclidean(2),
    );
    build_quasiwarped_multi(
        vec![FactorSpec::Spherical(c1), FactorSpec::Spherical(c2)],
        0,
        fiber,
        None,
        TubeOptions::default(),
    )
    .unwrap()
}

fn sphere_from_equator() -> PartialTube {
    let base = imm(&["v"], &["cos(v)", "sin(v)", "0"], &[(0.0, 6.0)], &[9], e3());
    let frames: Arc<dyn FrameField> = Arc::new(
        ExprFrames::new(
            base,
            vec![field(&["v"], &["cos(v)", "sin(v)", "0"]), field(&["v"], &["0", "0", "1"])],
            AmbientSpace::euclidean(2),
            1e-12,
        )
        .unwrap(),
    );
    let fiber = imm(&["u"], &["cos(u)", "sin(u)"], &[(-1.2, 1.2)], &[9], AmbientSpace::euclidean(2));
    let target = SpaceForm::new(1, 1.0, e3()).unwrap();
    endpoint_representation(fiber, frames, Some(target), Some(v(&[1.0, 0.0])), TubeOptions::default())
        .unwrap()
        .tube
}

fn hyperbolic_warped() -> PartialTube {
    let base = imm(&["t"], &["cosh(t)", "sinh(t)"], &[(-1.0, 1.0)], &[5], AmbientSpace::lorentzian(2));
    let fiber = imm(&["s"], &["cosh(s)", "sinh(s)"], &[(-0.8, 0.8)], &[5], AmbientSpace::lorentzian(2));
    let target = SpaceForm::new(-1, 1.0, AmbientSpace::lorentzian(3)).unwrap();
    build_warped(fiber, base, WarpedPreset::Generic, Some(target), TubeOptions::default()).unwrap()
}

fn max_mismatch(a: &Immersion, b: &Immersion) -> f64 {
    a.grid()
        .points()
        .iter()
        .map(|p| (a.value(p).unwrap() - b.value(p).unwrap()).amax())
        .fold(0.0, f64::max)
}

fn round_trip(t: &PartialTube, rank: usize) -> ExtractionResult {
    let f = t.immersion();
    let chart = t.chart().unwrap();
    let r = extract_tube(f, &chart, None, ExtractOptions::default()).unwrap();
    assert_eq!(r.rank(), rank, "{r:?}");
    let c = r.certificates;
    assert!(c.reconstruction < 1e-6, "{r:?}");
    assert!(c.normality < 1e-9, "{r:?}");
    assert!(c.parallelism < 1e-6, "{r:?}");
    let again = r.rebuild(TubeOptions::default()).unwrap();
    assert!(max_mismatch(f, again.immersion()) < 1e-6);
    r
}

#[test]
fn torus_round_trip() {
    let r = round_trip(&torus(), 2);
    // The extracted fiber is the meridian circle up to an isometry of R^2.
    let ys = r.fiber_samples().unwrap();
    let us: Vec<f64> = r.fiber.grid().points().iter().map(|p| p[0]).collect();
    for i in 0..ys.len() {
        for j in 0..ys.len() {
            let chord = (0.5 * (us[i] - us[j])).sin().abs();
            assert!(((&ys[i] - &ys[j]).norm() - chord).abs() < 1e-6);
        }
    }
}

#[test]
fn helix_core_round_trip() {
    round_trip(&helix_core_tube(), 2);
}

#[test]
fn multi_factor_round_trip() {
    round_trip(&two_factor_tube(), 2);
}

#[test]
fn spherical_target_round_trip() {
    round_trip(&sphere_from_equator(), 2);
}

#[test]
fn hyperbolic_round_trip() {
    round_trip(&hyperbolic_warped(), 2);
}

#[test]
fn circle_product_has_rank_two() {
    let a = imm(&["a"], &["cos(a)", "sin(a)"], &[(0.0, 6.0)], &[7], AmbientSpace::euclidean(2));
    let b = imm(&["b"], &["2*cos(b)", "2*sin(b)"], &[(0.0, 6.0)], &[7], AmbientSpace::euclidean(2));
    let f = build_product(&[a, b], None).unwrap();
    let chart = ProductChart::new(vec![1, 1]).unwrap();
    let r = extract_tube(&f, &chart, None, ExtractOptions::default()).unwrap();
    assert_eq!(r.rank(), 2);
    assert!(r.certificates.reconstruction < 1e-8, "{r:?}");
    // f0 is a unit circle in fiber coordinates, up to an isometry.
    let ys = r.fiber_samples().unwrap();
    for (i, a) in ys.iter().enumerate() {
        for (j, b) in ys.iter().enumerate() {
            let chord = 2.0 * (0.5 * (i as f64 - j as f64)).sin().abs();
            assert!(((a - b).norm() - chord).abs() < 1e-8);
        }
    }
}

#[test]
fn graph_chart_is_not_adapted() {
    let f = imm(&["u", "v"], &["u", "v", "u*v"], &[(-1.0, 1.0), (-1.0, 1.0)], &[5, 5], e3());
    let chart = ProductChart::new(vec![1, 1]).unwrap();
    match extract_tube(&f, &chart, None, ExtractOptions::default()) {
        Err(Error::Hypothesis { defect, .. }) => assert!(defect > 0.1, "{defect}"),
        other => panic!("expected a hypothesis failure, got {other:?}"),
    }
}

#[test]
fn shifted_line_fiber_reduces_to_rank_one() {
    let fiber = imm(&["u"], &["0.3 + 0.2*u", "0.5"], &[(-1.0, 1.0)], &[5], AmbientSpace::euclidean(2));
    let t = build_tube(PartialTubeSpec::new(fiber.clone(), torus_frames()), TubeOptions::default()).unwrap();
    let chart = ProductChart::new(vec![1, 1]).unwrap();
    let r = ExtractionResult::from_triple(t.immersion().clone(), chart, core_circle(), torus_frames(), fiber).unwrap();
    assert!(r.certificates.reconstruction < 1e-12);
    let red = substantial_reduction(&r, 1e-9).unwrap();
    assert_eq!(red.rank(), 1);
    assert!(red.certificates.reconstruction < 1e-8, "{red:?}");
    let same = substantial_reduction(&red, 1e-9).unwrap();
    assert_eq!(same.rank(), 1);
    assert_eq!(same.fiber_samples().unwrap(), red.fiber_samples().unwrap());
}

#[test]
fn point_fiber_is_degenerate() {
    let fiber = imm(&["u"], &["0.3 + 0*u", "0.5"], &[(-1.0, 1.0)], &[5], AmbientSpace::euclidean(2));
    let t = torus();
    let chart = ProductChart::new(vec![1, 1]).unwrap();
    let r = ExtractionResult::from_triple(t.immersion().clone(), chart, core_circle(), torus_frames(), fiber).unwrap();
    assert!(matches!(substantial_reduction(&r, 1e-9), Err(Error::NotImmersion { .. })));
}

fn class_of(f: &Immersion, dims: Vec<usize>) -> MetricClass {
    classify_metric(f, &ProductChart::new(dims).unwrap(), 1e-6, 1e-3).unwrap()
}

#[test]
fn flat_plane_is_a_product() {
    let f = imm(&["u", "v"], &["u", "v", "0"], &[(0.0, 1.0), (0.0, 1.0)], &[4, 4], e3());
    let c = class_of(&f, vec![1, 1]);
    assert_eq!(c.verdict, Some(Verdict::Product), "{c:?}");
}

#[test]
fn polar_coordinates_are_warped() {
    let f = imm(&["r", "t"], &["r*cos(t)", "r*sin(t)"], &[(0.5, 2.0), (0.0, 3.0)], &[5, 5], AmbientSpace::euclidean(2));
    let c = class_of(&f, vec![1, 1]);
    assert_eq!(c.verdict, Some(Verdict::Warped), "{c:?}");
    assert!(c.margin() >= 10.0);
    assert!(c.certifies(Verdict::QuasiWarped) && c.certifies(Verdict::Polar));
    assert!(!c.certifies(Verdict::Product));
}

#[test]
fn torus_and_helix_core_tubes() {
    let c = class_of(torus().immersion(), vec![1, 1]);
    assert_eq!(c.verdict, Some(Verdict::Warped), "{c:?}");
    let c = class_of(helix_core_tube().immersion(), vec![1, 1]);
    assert_eq!(c.verdict, Some(Verdict::QuasiWarped), "{c:?}");
    assert!(c.margin() >= 10.0, "{c:?}");
}

#[test]
fn anisotropic_tube_is_only_polar() {
    // proportional radii give a warped metric, unequal rates only a polar one
    let f = imm(
        &["u", "v", "w"],
        &["(1 + u)*cos(v)", "(1 + u)*sin(v)", "(2 + 2*u)*cos(w)", "(2 + 2*u)*sin(w)"],
        &[(0.0, 0.5), (0.0, 1.0), (0.0, 1.0)],
        &[3, 3, 3],
        AmbientSpace::euclidean(4),
    );
    let c = class_of(&f, vec![1, 2]);
    assert_eq!(c.verdict, Some(Verdict::Warped), "{c:?}");
    let f = imm(
        &["u", "v", "w"],
        &["(1 + u)*cos(v)", "(1 + u)*sin(v)", "(2 + 3*u)*cos(w)", "(2 + 3*u)*sin(w)"],
        &[(0.0, 0.5), (0.0, 1.0), (0.0, 1.0)],
        &[3, 3, 3],
        AmbientSpace::euclidean(4),
    );
    let c = class_of(&f, vec![1, 2]);
    assert_eq!(c.verdict, Some(Verdict::Polar), "{c:?}");
}

#[test]
fn skew_graph_has_no_orthogonal_net() {
    let f = imm(&["u", "v"], &["u", "v", "u*v"], &[(0.2, 1.0), (0.2, 1.0)], &[4, 4], e3());
    assert_eq!(class_of(&f, vec![1, 1]).verdict, Some(Verdict::None));
}

fn spherical_curve(r: f64) -> Immersion {
    // a non-planar curve on the sphere of radius r, at unit speed
    let lat = "0.4*sin(2*t)";
    let coords = [
        format!("{r}*cos({lat})*cos(t)"),
        format!("{r}*cos({lat})*sin(t)"),
        format!("{r}*sin({lat})"),
    ];
    let raw = imm(&["t"], &[&coords[0], &coords[1], &coords[2]], &[(0.0, 2.5)], &[5], e3());
    ArcLengthCurve::new(&raw).unwrap().into_immersion("s", 17).unwrap()
}

fn position_frame(gamma: &Immersion, r: f64) -> Arc<dyn FrameField> {
    let s0 = gamma.grid().point(0);
    let seed = gamma.value(&s0).unwrap() / r;
    Arc::new(build_parallel_isometry(gamma, &s0, &[seed], gamma.grid(), IsometryOptions::default()).unwrap())
}

#[test]
fn circle_recovers_its_center() {
    let gamma = imm(&["t"], &["3*cos(t/3)", "3*sin(t/3)", "0"], &[(0.0, 6.0)], &[9], e3());
    let e = Arc::new(
        ExprFrames::new(gamma.clone(), vec![field(&["t"], &["cos(t/3)", "sin(t/3)", "0"])], AmbientSpace::euclidean(1), 1e-12)
            .unwrap(),
    );
    let s = curve_sphere_recovery(&gamma, e.as_ref(), 1e-8).unwrap();
    assert!((s.radius - 3.0).abs() < 1e-9);
    assert!(s.center.amax() < 1e-9);
    assert!((s.lambda + 1.0 / 3.0).abs() < 1e-12);
    assert!(s.residuals.center_deviation < 1e-9);
}

#[test]
fn spherical_curves_recover_radius() {
    for r in [0.5, 1.0, 3.0] {
        let gamma = spherical_curve(r);
        let e = position_frame(&gamma, r);
        let s = curve_sphere_recovery(&gamma, e.as_ref(), 1e-6).unwrap();
        assert!((s.radius - r).abs() / r < 1e-6, "{r}: {s:?}");
        assert!(s.center.amax() < 1e-6, "{r}: {s:?}");
        assert!(s.complement.is_empty());
    }
}

#[test]
fn latitude_circle_on_a_sphere_with_two_dimensional_e() {
    // gamma in R^4 on S^2(2) x {0}; E = span{gamma, e4}, F = span{e4} constant
    let c = 2.0 * 0.6f64.cos();
    let coords = [
        format!("{c}*cos(t/{c})"),
        format!("{c}*sin(t/{c})"),
        "2*sin(0.6)".to_string(),
        "0".to_string(),
    ];
    let gamma = imm(&["t"], &[&coords[0], &coords[1], &coords[2], &coords[3]], &[(0.0, 3.0)], &[7], AmbientSpace::euclidean(4));
    let s0 = [0.0];
    let seed = [gamma.value(&s0).unwrap() / 2.0, v(&[0., 0., 0., 1.])];
    let e = build_parallel_isometry(&gamma, &s0, &seed, gamma.grid(), IsometryOptions::default()).unwrap();
    let s = curve_sphere_recovery(&gamma, &e, 1e-6).unwrap();
    assert!((s.radius - 2.0).abs() < 1e-6, "{s:?}");
    assert!(s.center.amax() < 1e-6);
    assert_eq!(s.complement.len(), 1);
    assert!(s.residuals.complement_drift < 1e-8);
}

#[test]
fn straight_line_is_rejected() {
    let gamma = imm(&["t"], &["t", "0", "0"], &[(0.0, 2.0)], &[5], e3());
    let e = ExprFrames::new(gamma.clone(), vec![field(&["t"], &["0", "1", "0"])], AmbientSpace::euclidean(1), 1e-12).unwrap();
    assert!(matches!(curve_sphere_recovery(&gamma, &e, 1e-8), Err(Error::Hypothesis { .. })));
}

fn torus_surface() -> Immersion {
    imm(
        &["u", "v"],
        &["(2 + 0.5*cos(u))*cos(v)", "(2 + 0.5*cos(u))*sin(v)", "0.5*sin(u)"],
        &[(0.0, 6.0), (0.0, 3.0)],
        &[9, 7],
        e3(),
    )
}

#[test]
fn torus_is_a_moulding_surface() {
    let f = torus_surface();
    let m = moulding_reconstruct(&f, 0, MouldingOptions::default()).unwrap();
    assert!(m.extraction.certificates.reconstruction < 1e-6, "{m:?}");
    assert_eq!(m.phi().rank(), 2);
    // beta is a parallel of the torus: a circle about the z-axis
    for p in m.beta().grid().points() {
        let x = m.beta().value(&p).unwrap();
        assert!((x[2] - m.extraction.source.value(&[m.extraction.fiber_point[0], p[0]]).unwrap()[2]).abs() < 1e-12);
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let r0 = 2.0 + 0.5 * m.extraction.fiber_point[0].cos();
        assert!((r - r0).abs() < 1e-12);
    }
    // the parallels are not geodesics, so the other profile choice fails
    assert!(matches!(
        moulding_reconstruct(&f, 1, MouldingOptions::default()),
        Err(Error::Hypothesis { .. })
    ));
}

#[test]
fn right_cone_is_a_moulding_surface() {
    let f = imm(&["t", "w"], &["t*cos(w)", "t*sin(w)", "t"], &[(0.5, 2.0), (0.0, 6.0)], &[7, 9], e3());
    let m = moulding_reconstruct(&f, 0, MouldingOptions::default()).unwrap();
    assert!(m.extraction.certificates.reconstruction < 1e-6, "{m:?}");
    assert_eq!(m.phi().rank(), 1);
}

#[test]
fn sphere_is_umbilical() {
    let f = imm(
        &["t", "p"],
        &["cos(t)*cos(p)", "cos(t)*sin(p)", "sin(t)"],
        &[(-1.0, 1.0), (0.0, 3.0)],
        &[5, 5],
        e3(),
    );
    match moulding_reconstruct(&f, 0, MouldingOptions::default()) {
        Err(Error::Hypothesis { what, .. }) => assert!(what.contains("umbilical")),
        other => panic!("expected umbilical rejection, got {other:?}"),
    }
}

#[test]
fn cylinder_net_is_certified_as_product() {
    let f = imm(&["u", "v"], &["cos(u)", "sin(u)", "v"], &[(0.0, 6.0), (0.0, 2.0)], &[7, 5], e3());
    let a = flat_normal_net_analysis(&f, NetOptions::default()).unwrap();
    assert_eq!(a.s, 2);
    assert!(a.sff_reconstruction < 1e-8);
    assert_eq!(a.certified().len(), 2, "{a:?}");
    for fam in &a.families {
        assert!(fam.codazzi_residual.unwrap() < 1e-3, "{fam:?}");
    }
    // splitting off the straight lines gives the circle as fiber
    let line = a.families.iter().position(|x| x.axes == Some(vec![1])).unwrap();
    let split = a.splits.iter().find(|x| x.family == line).unwrap();
    assert_eq!(split.order, vec![0, 1]);
    assert_eq!(split.class.verdict, Some(Verdict::Product), "{:?}", split.class);
    let ex = split.extraction.as_ref().unwrap();
    assert!(ex.certificates.reconstruction < 1e-6);
}

#[test]
fn torus_net_certifies_meridians() {
    let f = torus_surface();
    let a = flat_normal_net_analysis(&f, NetOptions::default()).unwrap();
    assert!(a.sff_reconstruction < 1e-8);
    let certified = a.certified();
    assert_eq!(certified.len(), 1, "{a:?}");
    let fam = &a.families[certified[0]];
    assert_eq!(fam.axes, Some(vec![1]));
    for fam in &a.families {
        assert!(fam.codazzi_residual.unwrap() < 1e-3, "{fam:?}");
    }
    let split = &a.splits[0];
    assert_eq!(split.class.verdict, Some(Verdict::Warped));
    assert!(split.extraction.as_ref().unwrap().certificates.reconstruction < 1e-6);
}

#[test]
fn ellipsoid_net_is_not_certified() {
    let f = imm(
        &["u", "v"],
        &["cos(u)*cos(v)", "1.5*cos(u)*sin(v)", "2*sin(u)"],
        &[(0.2, 0.6), (0.3, 0.9)],
        &[4, 4],
        e3(),
    );
    let a = flat_normal_net_analysis(&f, NetOptions::default()).unwrap();
    assert_eq!(a.s, 2);
    assert!(a.certified().is_empty(), "{a:?}");
    assert!(a.splits.is_empty());
    for fam in &a.families {
        assert!(fam.axes.is_none());
        assert!(fam.parallel_defect > 1e-2, "{fam:?}");
        assert!(fam.codazzi_residual.unwrap() < 1e-3, "{fam:?}");
    }
}
