//! Moulding surfaces: surfaces with flat normal bundle, free of umbilical
//! points, sampled in curvature-line coordinates whose lines of one family
//! are geodesics. They are partial tubes over a curve with a curve fiber.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::immersion::metric::distribution_shape_at;
use crate::immersion::{principal_normal_decomposition, Immersion, PrincipalTolerances, ProductChart};
use crate::normconn::FrameField;

use super::extract::{extract_tube, ExtractOptions, ExtractionResult};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MouldingOptions {
    /// Bound on the curvature-line defect; principal normals must be
    /// separated by more than ten times this.
    pub tol: f64,
    /// Bound on the geodesic curvature of the profile lines.
    pub geodesic_tol: f64,
    pub christoffel_step: f64,
    pub principal: PrincipalTolerances,
    pub seed: u64,
    pub extract: ExtractOptions,
}

impl Default for MouldingOptions {
    fn default() -> Self {
        MouldingOptions {
            tol: 1e-6,
            geodesic_tol: 1e-4,
            christoffel_step: 1e-3,
            principal: PrincipalTolerances::default(),
            seed: 0,
            extract: ExtractOptions::default(),
        }
    }
}

/// A moulding surface split into profile `alpha`, base curve `beta` and the
/// parallel normal frame `phi` along `beta`.
#[derive(Clone, Debug)]
pub struct MouldingResult {
    /// Smallest `|eta_1 - eta_2|` on the grid.
    pub separation: f64,
    /// Largest normalised `|g_01|` or `|alpha(d_0, d_1)|`.
    pub diagonal_defect: f64,
    /// Largest geodesic curvature of the profile lines.
    pub geodesic_defect: f64,
    /// The extraction on the chart (profile | base).
    pub extraction: ExtractionResult,
}

impl MouldingResult {
    pub fn alpha(&self) -> &Immersion {
        &self.extraction.fiber
    }

    pub fn beta(&self) -> &Immersion {
        &self.extraction.base
    }

    pub fn phi(&self) -> &Arc<dyn FrameField> {
        &self.extraction.phi
    }
}

/// Reconstructs a moulding surface whose profile lines run along
/// `profile_axis` (0 or 1).
pub fn moulding_reconstruct(f: &Immersion, profile_axis: usize, opts: MouldingOptions) -> Result<MouldingResult> {
    if f.dim() != 2 || profile_axis > 1 {
        return Err(invalid("moulding reconstruction needs a surface and a profile axis 0 or 1"));
    }
    let per: Vec<(f64, f64)> = f
        .grid()
        .points()
        .par_iter()
        .map(|p| -> Result<(f64, f64)> {
            let pn = principal_normal_decomposition(f, p, opts.seed, opts.principal)?;
            let sep = if pn.count() < 2 {
                0.0
            } else {
                (&pn.normals[0] - &pn.normals[1]).norm()
            };
            if sep <= 10.0 * opts.tol {
                return Err(Error::Hypothesis {
                    what: format!("umbilical point at {p:?}"),
                    defect: sep,
                    tol: 10.0 * opts.tol,
                });
            }
            let l = f.local(p)?;
            let scale = (l.g[(0, 0)] * l.g[(1, 1)]).sqrt();
            let diag = l.g[(0, 1)].abs().max(l.sff(0, 1).norm()) / scale;
            Ok((sep, diag))
        })
        .collect::<Result<_>>()?;
    let separation = per.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
    let diagonal_defect = per.iter().map(|x| x.1).fold(0.0, f64::max);
    if diagonal_defect > opts.tol {
        return Err(Error::Hypothesis {
            what: "chart axes are not curvature lines".into(),
            defect: diagonal_defect,
            tol: opts.tol,
        });
    }
    let g = |q: &[f64]| f.first_fundamental_form(q);
    let geo: Vec<f64> = f
        .grid()
        .points()
        .par_iter()
        .map(|p| Ok(distribution_shape_at(&g, p, &[profile_axis], opts.christoffel_step)?.totally_geodesic_defect))
        .collect::<Result<_>>()?;
    let geodesic_defect = geo.into_iter().fold(0.0, f64::max);
    if geodesic_defect > opts.geodesic_tol {
        return Err(Error::Hypothesis {
            what: "profile lines are not geodesics".into(),
            defect: geodesic_defect,
            tol: opts.geodesic_tol,
        });
    }
    let ordered = if profile_axis == 0 { f.clone() } else { f.reorder(&[1, 0])? };
    let chart = ProductChart::new(vec![1, 1])?;
    let extraction = extract_tube(&ordered, &chart, None, opts.extract)?;
    Ok(MouldingResult {
        separation,
        diagonal_defect,
        geodesic_defect,
        extraction,
    })
}
