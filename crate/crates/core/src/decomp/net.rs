//! The principal-normal net of an immersion with flat normal bundle: for
//! each eigendistribution `E_l`, tests whether `E_l^perp` is totally
//! geodesic (integrable, with every other principal normal parallel along
//! `E_l`) and hands certified splits to classification and extraction.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::immersion::{principal_normal_decomposition, Grid, Immersion, PrincipalTolerances, ProductChart};

use super::classify::{classify_metric, MetricClass};
use super::extract::{extract_tube, ExtractOptions, ExtractionResult};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetOptions {
    pub principal: PrincipalTolerances,
    pub seed: u64,
    /// Step of the derivatives of principal normals and fields.
    pub fd_step: f64,
    /// A coordinate axis lies in `E_l` when its relative distance is below this.
    pub align_tol: f64,
    /// Bound on the relative normal derivative of `eta_a` along `E_l`.
    pub parallel_tol: f64,
    /// Smallest accepted `sigma_min / sigma_max` in the independence test.
    pub independence_tol: f64,
    pub class_tol: f64,
    pub christoffel_step: f64,
    pub extract: ExtractOptions,
}

impl Default for NetOptions {
    fn default() -> Self {
        NetOptions {
            principal: PrincipalTolerances::default(),
            seed: 0,
            fd_step: 1e-4,
            align_tol: 1e-8,
            parallel_tol: 1e-5,
            independence_tol: 1e-3,
            class_tol: 1e-6,
            christoffel_step: 1e-3,
            extract: ExtractOptions::default(),
        }
    }
}

/// Findings for one eigendistribution `E_l`.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilyReport {
    pub dim: usize,
    /// Coordinate axes spanning `E_l` everywhere, if any.
    pub axes: Option<Vec<usize>>,
    /// Smallest `sigma_min / sigma_max` of `[eta_a - eta_l, eta_b - eta_l]`
    /// over pairs `a != b` different from `l`; `None` without such pairs.
    pub independence_margin: Option<f64>,
    pub integrable: bool,
    /// Largest relative `|nabla^perp_X eta_a|` for `X` in `E_l`, `a != l`.
    pub parallel_defect: f64,
    /// Largest relative residual of the Codazzi identity
    /// `nabla^perp_{X_l} eta_a = <nabla_{X_a} X_a, X_l> (eta_a - eta_l)`,
    /// measured where `E_a` is a line field.
    pub codazzi_residual: Option<f64>,
    /// `E_l^perp` is totally geodesic.
    pub certified: bool,
}

/// Classification and extraction on the chart `(E_l^perp | E_l)`.
#[derive(Debug)]
pub struct NetSplit {
    pub family: usize,
    /// New axis `i` is old axis `order[i]`.
    pub order: Vec<usize>,
    pub chart: ProductChart,
    pub class: MetricClass,
    pub extraction: Result<ExtractionResult>,
}

#[derive(Debug)]
pub struct NetAnalysis {
    /// Number of principal normals.
    pub s: usize,
    pub families: Vec<FamilyReport>,
    /// Largest `|alpha(X, Y) - sum_a <X^a, Y^a> eta_a|`.
    pub sff_reconstruction: f64,
    /// Largest shape-operator commutator.
    pub commutator_defect: f64,
    pub splits: Vec<NetSplit>,
    pub samples: usize,
}

impl NetAnalysis {
    pub fn certified(&self) -> Vec<usize> {
        (0..self.families.len()).filter(|&l| self.families[l].certified).collect()
    }
}

#[derive(Clone)]
struct Cell {
    etas: Vec<DVector<f64>>,
    subs: Vec<Vec<DVector<f64>>>,
}

fn decompose(f: &Immersion, p: &[f64], opts: &NetOptions) -> Result<(Cell, f64, f64)> {
    let pn = principal_normal_decomposition(f, p, opts.seed, opts.principal)?;
    Ok((
        Cell {
            etas: pn.normals,
            subs: pn.subspaces,
        },
        pn.reconstruction_defect,
        pn.commutator_defect,
    ))
}

fn overlap(a: &[DVector<f64>], b: &[DVector<f64>], g: &DMatrix<f64>) -> f64 {
    a.iter()
        .flat_map(|u| b.iter().map(move |w| (u.transpose() * g * w)[(0, 0)].powi(2)))
        .sum()
}

/// Reorders `cell` so that its label `l` best overlaps label `l` of `reference`.
fn relabel(reference: &Cell, cell: Cell, g: &DMatrix<f64>) -> Cell {
    let s = cell.etas.len();
    let mut used = vec![false; s];
    let mut perm = Vec::with_capacity(s);
    for r in &reference.subs {
        let best = (0..s)
            .filter(|&j| !used[j])
            .max_by(|&i, &j| overlap(r, &cell.subs[i], g).total_cmp(&overlap(r, &cell.subs[j], g)))
            .expect("same count");
        used[best] = true;
        perm.push(best);
    }
    Cell {
        etas: perm.iter().map(|&j| cell.etas[j].clone()).collect(),
        subs: perm.iter().map(|&j| cell.subs[j].clone()).collect(),
    }
}

fn predecessor(grid: &Grid, i: usize) -> usize {
    let mut idx = grid.multi_index(i);
    let axis = (0..idx.len()).rev().find(|&a| idx[a] > 0).expect("not the first node");
    idx[axis] -= 1;
    grid.linear_index(&idx)
}

fn nearest(cell: &Cell, eta: &DVector<f64>) -> usize {
    (0..cell.etas.len())
        .min_by(|&i, &j| (&cell.etas[i] - eta).norm().total_cmp(&(&cell.etas[j] - eta).norm()))
        .expect("nonempty")
}

fn shifted(p: &[f64], dir: &DVector<f64>, h: f64) -> Vec<f64> {
    p.iter().zip(dir.iter()).map(|(x, d)| x + h * d).collect()
}

fn aligned_axes(cell_subs: &[DVector<f64>], g: &DMatrix<f64>, tol: f64) -> Vec<usize> {
    let k = g.nrows();
    (0..k)
        .filter(|&i| {
            let mut r = DVector::zeros(k);
            r[i] = 1.0;
            for u in cell_subs {
                let c = (u.transpose() * g.column(i))[(0, 0)];
                r.axpy(-c, u, 1.0);
            }
            (r.transpose() * g * &r)[(0, 0)].max(0.0).sqrt() / g[(i, i)].sqrt() < tol
        })
        .collect()
}

struct PointFindings {
    parallel: Vec<f64>,
    codazzi: Vec<Option<f64>>,
    independence: Vec<Option<f64>>,
    axes: Vec<Vec<usize>>,
}

fn point_findings(f: &Immersion, p: &[f64], cell: &Cell, opts: &NetOptions) -> Result<PointFindings> {
    let s = cell.etas.len();
    let l = f.local(p)?;
    let amb = f.ambient();
    let h = opts.fd_step;
    let mut out = PointFindings {
        parallel: vec![0.0; s],
        codazzi: vec![None; s],
        independence: vec![None; s],
        axes: cell.subs.iter().map(|sub| aligned_axes(sub, &l.g, opts.align_tol)).collect(),
    };
    // <nabla_{X_a} X_a, .> as an ambient vector, for line fields E_a.
    let mut accel: Vec<Option<DVector<f64>>> = vec![None; s];
    for a in 0..s {
        if cell.subs[a].len() != 1 {
            continue;
        }
        let w = &cell.subs[a][0];
        let v0 = l.differential() * w;
        let mut ends = Vec::with_capacity(2);
        for sign in [1.0, -1.0] {
            let q = shifted(p, w, sign * h);
            let (c, _, _) = decompose(f, &q, opts)?;
            let j = nearest(&c, &cell.etas[a]);
            let d = f.differential(&q)?;
            let mut v = &d * &c.subs[j][0];
            if amb.dot(&v, &v0) < 0.0 {
                v = -v;
            }
            ends.push(v);
        }
        accel[a] = Some((&ends[0] - &ends[1]) / (2.0 * h));
    }
    for ell in 0..s {
        for u in &cell.subs[ell] {
            let xl = l.differential() * u;
            let (cp, _, _) = decompose(f, &shifted(p, u, h), opts)?;
            let (cm, _, _) = decompose(f, &shifted(p, u, -h), opts)?;
            for a in (0..s).filter(|&a| a != ell) {
                let eta = &cell.etas[a];
                let d = (&cp.etas[nearest(&cp, eta)] - &cm.etas[nearest(&cm, eta)]) / (2.0 * h);
                let measured = l.normal_part(&d);
                let scale = eta.norm().max(1.0);
                out.parallel[ell] = out.parallel[ell].max(measured.norm() / scale);
                if let Some(acc) = &accel[a] {
                    let c = amb.dot(acc, &xl);
                    let predicted = (eta - &cell.etas[ell]) * c;
                    let r = (measured - predicted).norm() / scale;
                    out.codazzi[ell] = Some(out.codazzi[ell].unwrap_or(0.0).max(r));
                }
            }
        }
        for a in (0..s).filter(|&a| a != ell) {
            for b in (a + 1..s).filter(|&b| b != ell) {
                let m = DMatrix::from_columns(&[&cell.etas[a] - &cell.etas[ell], &cell.etas[b] - &cell.etas[ell]]);
                let sv = m.singular_values();
                let ratio = sv.min() / sv.max().max(f64::MIN_POSITIVE);
                out.independence[ell] = Some(out.independence[ell].unwrap_or(f64::INFINITY).min(ratio));
            }
        }
    }
    Ok(out)
}

fn merge_opt(a: Option<f64>, b: Option<f64>, pick: fn(f64, f64) -> f64) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(pick(x, y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Runs the net analysis on the grid of `f`.
///
/// Fails when the normal bundle is not flat or the number of principal
/// normals changes across the grid.
pub fn flat_normal_net_analysis(f: &Immersion, opts: NetOptions) -> Result<NetAnalysis> {
    let grid = f.grid();
    let pts = grid.points();
    let raw: Vec<(Cell, f64, f64)> = pts.par_iter().map(|p| decompose(f, p, &opts)).collect::<Result<_>>()?;
    let s = raw[0].0.etas.len();
    if let Some((i, _)) = raw.iter().enumerate().find(|(_, r)| r.0.etas.len() != s) {
        return Err(Error::Hypothesis {
            what: format!(
                "number of principal normals changes from {s} to {} at {:?}",
                raw[i].0.etas.len(),
                pts[i]
            ),
            defect: (raw[i].0.etas.len() as f64 - s as f64).abs(),
            tol: 0.0,
        });
    }
    let sff_reconstruction = raw.iter().map(|r| r.1).fold(0.0, f64::max);
    let commutator_defect = raw.iter().map(|r| r.2).fold(0.0, f64::max);
    let mut cells: Vec<Cell> = Vec::with_capacity(raw.len());
    for (i, (c, _, _)) in raw.into_iter().enumerate() {
        if i == 0 {
            cells.push(c);
            continue;
        }
        let g = f.first_fundamental_form(&pts[i])?;
        let r = relabel(&cells[predecessor(grid, i)], c, &g);
        cells.push(r);
    }
    let dims: Vec<usize> = cells[0].subs.iter().map(|x| x.len()).collect();
    if let Some(i) = cells
        .iter()
        .position(|c| c.subs.iter().map(|x| x.len()).collect::<Vec<_>>() != dims)
    {
        return Err(Error::Hypothesis {
            what: format!("eigenspace dimensions change at {:?}", pts[i]),
            defect: 1.0,
            tol: 0.0,
        });
    }
    let found: Vec<PointFindings> = pts
        .par_iter()
        .zip(&cells)
        .map(|(p, c)| point_findings(f, p, c, &opts))
        .collect::<Result<_>>()?;

    let mut families = Vec::with_capacity(s);
    for ell in 0..s {
        let axes0 = &found[0].axes[ell];
        let axes = (axes0.len() == dims[ell] && found.iter().all(|x| &x.axes[ell] == axes0)).then(|| axes0.clone());
        let independence_margin = found
            .iter()
            .map(|x| x.independence[ell])
            .fold(None, |a, b| merge_opt(a, b, f64::min));
        let parallel_defect = found.iter().map(|x| x.parallel[ell]).fold(0.0, f64::max);
        let codazzi_residual = found
            .iter()
            .map(|x| x.codazzi[ell])
            .fold(None, |a, b| merge_opt(a, b, f64::max));
        families.push(FamilyReport {
            dim: dims[ell],
            axes,
            independence_margin,
            integrable: false,
            parallel_defect,
            codazzi_residual,
            certified: false,
        });
    }
    let k = f.dim();
    for ell in 0..s {
        let others_aligned = (0..s).filter(|&a| a != ell).all(|a| families[a].axes.is_some());
        let integrable = k - dims[ell] <= 1
            || others_aligned
            || families[ell].independence_margin.is_none_or(|m| m > opts.independence_tol);
        let fam = &mut families[ell];
        fam.integrable = integrable;
        fam.certified = integrable && fam.parallel_defect < opts.parallel_tol;
    }

    let mut splits = Vec::new();
    if families.iter().all(|x| x.axes.is_some()) {
        for ell in (0..s).filter(|&l| families[l].certified) {
            let fiber_axes = families[ell].axes.clone().expect("aligned");
            let mut order: Vec<usize> = (0..k).filter(|i| !fiber_axes.contains(i)).collect();
            order.extend(&fiber_axes);
            let g = f.reorder(&order)?;
            let chart = ProductChart::new(vec![k - fiber_axes.len(), fiber_axes.len()])?;
            let class = classify_metric(&g, &chart, opts.class_tol, opts.christoffel_step)?;
            let extraction = extract_tube(&g, &chart, None, opts.extract);
            splits.push(NetSplit {
                family: ell,
                order,
                chart,
                class,
                extraction,
            });
        }
    }
    Ok(NetAnalysis {
        s,
        families,
        sff_reconstruction,
        commutator_defect,
        splits,
        samples: pts.len(),
    })
}
