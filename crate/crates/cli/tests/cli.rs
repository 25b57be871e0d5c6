use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use partube_cli::fragment::Fragment;
use partube_cli::report::Report;
use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scene(name: &str) -> PathBuf {
    root().join("scenes").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_partube"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("partube-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write_scene(name: &str, text: &str) -> PathBuf {
    let p = tmp(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn check(path: &Path) -> (i32, Report) {
    let out = run(&["check", path.to_str().unwrap()]);
    let report = serde_json::from_slice(&out.stdout).expect("well-formed report");
    (out.status.code().unwrap(), report)
}

#[test]
fn torus_scene_passes() {
    let (code, r) = check(&scene("torus.json"));
    assert_eq!(code, 0);
    assert!(r.pass);
    let c = &r.constructions[0];
    for name in ["diff_fiber", "diff_base", "polar_metric", "adaptedness", "polar", "class", "class_separation"] {
        assert!(c.records.iter().any(|x| x.name == name), "missing {name}");
    }
    for x in &c.records {
        assert_eq!(x.pass, x.max_defect <= x.tolerance);
    }
}

#[test]
fn focal_violation_lists_the_samples() {
    let (code, r) = check(&scene("focal_violation.json"));
    assert_eq!(code, 2);
    let c = &r.constructions[0];
    assert!(!c.pass && !c.outside_omega.is_empty());
    // fiber circle of radius 3 about a core of radius 2: the samples beyond
    // y0 = -2 are the ones flagged
    for s in &c.outside_omega {
        assert!(s.fiber_value[0] < -2.0, "{s:?}");
        assert!(s.margin < 0.0);
    }
}

#[test]
fn malformed_expression_reports_the_offset() {
    let text = std::fs::read_to_string(scene("torus.json"))
        .unwrap()
        .replace("0.5*cos(u)", "0.5*cos(u");
    let p = write_scene("malformed.json", &text);
    let out = run(&["check", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("offset 9"), "{err}");
    assert!(err.contains("profile") && err.contains("coordinate 0"), "{err}");
}

#[test]
fn unknown_reference_and_field_are_parse_errors() {
    let text = std::fs::read_to_string(scene("torus.json")).unwrap();
    let base: Value = serde_json::from_str(&text).unwrap();
    type Edit = (&'static str, fn(&mut Value));
    let edits: [Edit; 3] = [
        ("badref.json", |v| v["constructions"][0]["frames"] = "nowhere".into()),
        ("badfield.json", |v| v["immersions"][0]["colour"] = 1.into()),
        ("baddomain.json", |v| v["immersions"][0]["domain"][0] = serde_json::json!([6, 0])),
    ];
    for (name, edit) in edits {
        let mut v = base.clone();
        edit(&mut v);
        assert_ne!(v, base);
        let p = write_scene(name, &v.to_string());
        assert_eq!(run(&["check", p.to_str().unwrap()]).status.code(), Some(1), "{name}");
    }
}

#[test]
fn missing_file_is_a_usage_error() {
    for cmd in ["check", "decompose"] {
        let out = run(&[cmd, "no/such/scene.json", "--construction", "x"][..if cmd == "check" { 2 } else { 4 }]);
        assert_eq!(out.status.code(), Some(1));
    }
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn check_is_deterministic() {
    let a = run(&["check", scene("helix_core.json").to_str().unwrap()]);
    let b = run(&["check", scene("helix_core.json").to_str().unwrap()]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn decompose_fragment_rebuilds_the_torus() {
    let frag = tmp("torus_fragment.json");
    let out = run(&[
        "decompose",
        scene("torus.json").to_str().unwrap(),
        "--construction",
        "torus",
        "--out",
        frag.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["rank"], 2);
    let f: Fragment = serde_json::from_str(&std::fs::read_to_string(&frag).unwrap()).unwrap();
    // closed-form torus chart as the oracle
    let mut worst = 0.0f64;
    for (i, p0) in f.fiber.params.iter().enumerate() {
        for (j, p1) in f.base.params.iter().enumerate() {
            let (u, v) = (p0[0], p1[0]);
            let a = 2.0 + 0.5 * u.cos();
            let want = [a * v.cos(), a * v.sin(), 0.5 * u.sin()];
            let got = f.evaluate(i, j);
            for k in 0..3 {
                worst = worst.max((got[k] - want[k]).abs());
            }
        }
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn decompose_with_base_point_moves_the_base_sheet() {
    let out = run(&[
        "decompose",
        scene("torus.json").to_str().unwrap(),
        "--construction",
        "torus",
        "--base-point",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["fiber_point"][0], 0.0);
    assert!(rep["fragment_defect"].as_f64().unwrap() < 1e-6);
}

#[test]
fn non_adapted_decompose_fails_with_the_defect() {
    let out = run(&["decompose", scene("graph_uv.json").to_str().unwrap(), "--construction", "saddle"]);
    assert_eq!(out.status.code(), Some(2));
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["pass"], false);
    assert!(rep["error"].as_str().unwrap().contains("not adapted"));
}

fn obj_counts(text: &str) -> (usize, usize) {
    assert!(!text.contains('\r'));
    let v = text.lines().filter(|l| l.starts_with("v ")).count();
    let f = text.lines().filter(|l| l.starts_with("f ")).count();
    (v, f)
}

#[test]
fn torus_mesh_counts() {
    let obj = tmp("torus.obj");
    let out = run(&[
        "mesh",
        scene("torus.json").to_str().unwrap(),
        "--construction",
        "torus",
        "--resolution",
        "64",
        "--out",
        obj.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&obj).unwrap();
    assert_eq!(obj_counts(&text), (4096, 8192 - 2 * (64 + 63)));
    assert_eq!(text.lines().next().unwrap(), "v 2.5 0 0");
}

#[test]
fn cone_apex_ring_is_omitted() {
    let obj = tmp("cone.obj");
    let out = run(&[
        "mesh",
        scene("cone_apex.json").to_str().unwrap(),
        "--construction",
        "cone",
        "--resolution",
        "16",
        "--out",
        obj.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let (v, f) = obj_counts(&std::fs::read_to_string(&obj).unwrap());
    assert_eq!(v, 16 * 15);
    assert_eq!(f, 2 * 15 * 14);
}

#[test]
fn four_dimensional_mesh_needs_projection() {
    let obj = tmp("clifford.obj");
    let args = |project: bool| {
        let mut a = vec![
            "mesh".to_string(),
            scene("s3_product.json").to_str().unwrap().to_string(),
            "--construction".into(),
            "clifford".into(),
            "--resolution".into(),
            "8".into(),
            "--out".into(),
            obj.to_str().unwrap().to_string(),
        ];
        if project {
            a.push("--project".into());
        }
        a
    };
    let no: Vec<String> = args(false);
    let out = run(&no.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(1));
    let yes: Vec<String> = args(true);
    let out = run(&yes.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(obj_counts(&std::fs::read_to_string(&obj).unwrap()).0, 64);
}

fn omega_rows(scene_name: &str, construction: &str, range: &str) -> Vec<Vec<f64>> {
    let out = run(&[
        "omega",
        scene(scene_name).to_str().unwrap(),
        "--construction",
        construction,
        "--axes",
        "0,1",
        &format!("--range={range}"),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let mut r = csv::Reader::from_reader(&out.stdout[..]);
    assert_eq!(r.headers().unwrap(), vec!["y0", "y1", "margin", "min_singular_value"]);
    r.records()
        .map(|rec| rec.unwrap().iter().map(|x| x.parse().unwrap()).collect())
        .collect()
}

/// Values of `y0` between which the margin changes sign, along each `y1`.
fn sign_changes(rows: &[Vec<f64>], n1: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for j in 0..n1 {
        let col: Vec<&Vec<f64>> = rows.iter().skip(j).step_by(n1).collect();
        for w in col.windows(2) {
            if (w[0][2] < 0.0) != (w[1][2] < 0.0) {
                out.push((w[0][0], w[1][0]));
            }
        }
    }
    out
}

#[test]
fn circle_base_zero_set() {
    let rows = omega_rows("torus.json", "torus", "-3.05:0.95:41,-1:1:5");
    let ch = sign_changes(&rows, 5);
    assert_eq!(ch.len(), 5);
    for (a, b) in ch {
        assert!(a < -2.0 && -2.0 < b, "{a} {b}");
    }
    for r in &rows {
        assert_eq!(r[2] < 0.0, r[3] < 0.0);
    }
}

#[test]
fn sphere_base_zero_set() {
    let rows = omega_rows("sphere_base.json", "over_sphere", "-1.53:0.47:41,-1:1:3");
    let ch = sign_changes(&rows, 3);
    assert_eq!(ch.len(), 3);
    for (a, b) in ch {
        assert!(a < -1.0 && -1.0 < b, "{a} {b}");
    }
}

#[test]
fn empty_slice_is_header_only() {
    let rows = omega_rows("torus.json", "torus", "-3:1:0,-1:1:5");
    assert!(rows.is_empty());
}

#[test]
fn shipped_scenes_check_as_documented() {
    let failing = ["cone_apex.json", "focal_violation.json", "graph_uv.json"];
    let mut names: Vec<PathBuf> = std::fs::read_dir(root().join("scenes"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    names.sort();
    for p in names {
        let file = p.file_name().unwrap().to_str().unwrap().to_string();
        let (code, r) = check(&p);
        let want = if failing.contains(&file.as_str()) { 2 } else { 0 };
        assert_eq!(code, want, "{file}: {r:?}");
    }
}

#[test]
fn shipped_schemas_are_current() {
    let dir = root().join("schemas");
    for (name, text) in partube_cli::schemas() {
        let path = dir.join(name);
        if std::env::var_os("PARTUBE_UPDATE_SCHEMAS").is_some() {
            std::fs::create_dir_all(&dir).unwrap();
            std::fs::write(&path, &text).unwrap();
        }
        let shipped = std::fs::read_to_string(&path).unwrap_or_default();
        assert_eq!(shipped, text, "{name} is stale; rerun with PARTUBE_UPDATE_SCHEMAS=1");
    }
}
