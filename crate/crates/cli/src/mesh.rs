//! The `mesh` command: triangulated OBJ export of two-parameter
//! constructions.

use std::fmt::Write as _;

use partube::immersion::Grid;

use crate::scene::Built;
use crate::CliError;

#[derive(Clone, Copy, Debug)]
pub struct MeshOptions {
    pub resolution: usize,
    /// Keep the first three coordinates of higher-dimensional ambients.
    pub project: bool,
    /// Vertices whose `P` (the differential, for plain immersions) has a
    /// smaller singular value are omitted.
    pub singular_tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
    /// Grid nodes dropped near singularities of `P`.
    pub omitted: usize,
}

/// `%g`-style rendering with `digits` significant digits.
pub fn format_g(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0".into() } else { format!("{x}") };
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -4 || exp >= digits as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mant), exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{:.*}", decimals, x))
    }
}

pub fn build_mesh(built: &Built, opts: MeshOptions) -> Result<Mesh, CliError> {
    let f = built.immersion();
    if f.dim() != 2 {
        return Err(CliError::Usage(format!(
            "mesh export needs a two-parameter construction, this one has {}",
            f.dim()
        )));
    }
    let n = f.ambient().dim();
    if n > 3 && !opts.project {
        return Err(CliError::Usage(format!(
            "ambient dimension {n} exceeds 3; pass --project to drop trailing coordinates"
        )));
    }
    if opts.resolution < 2 {
        return Err(CliError::Usage("resolution must be at least 2".into()));
    }
    let grid = Grid::new(f.domain().clone(), vec![opts.resolution, opts.resolution])?;
    let r = opts.resolution;
    let mut index = vec![None; r * r];
    let mut vertices = Vec::new();
    let mut omitted = 0;
    for i in 0..r {
        for j in 0..r {
            let p = grid.node(&[i, j]);
            if let Some(t) = built.tube() {
                let (p0, p1) = t.split(&p);
                let s = t.p_operator(p0, p1)?.singular_values().min();
                if s < opts.singular_tol {
                    omitted += 1;
                    continue;
                }
            } else if f.jet(&p, false)?.d1.singular_values().min() < opts.singular_tol {
                omitted += 1;
                continue;
            }
            let x = f.value(&p)?;
            let mut v = [0.0; 3];
            for (k, c) in x.iter().take(3).enumerate() {
                v[k] = *c;
            }
            index[i * r + j] = Some(vertices.len());
            vertices.push(v);
        }
    }
    let mut triangles = Vec::new();
    for i in 0..r - 1 {
        for j in 0..r - 1 {
            let at = |a: usize, b: usize| index[a * r + b];
            let quads = [
                [at(i, j), at(i + 1, j), at(i + 1, j + 1)],
                [at(i, j), at(i + 1, j + 1), at(i, j + 1)],
            ];
            for t in quads {
                if let [Some(a), Some(b), Some(c)] = t {
                    triangles.push([a, b, c]);
                }
            }
        }
    }
    Ok(Mesh {
        vertices,
        triangles,
        omitted,
    })
}

impl Mesh {
    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", format_g(v[0], 9), format_g(v[1], 9), format_g(v[2], 9));
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }
}
