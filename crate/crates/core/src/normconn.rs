//! Normal connection: parallel transport of normal vectors, holonomy, and
//! parallel orthonormal frames of flat normal subbundles.
//!
//! Transport integrates `d xi / dt = -f_*(A_xi c'(t))` with classical RK4
//! and projects back onto the normal space after every step. For a normal
//! vector that is all the normal connection does: the tangential part of
//! the ambient derivative is exactly the Weingarten term.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::ambient::AmbientSpace;
use crate::error::{invalid, Error, Result};
use crate::immersion::{Grid, Immersion, Local, MapJet};

/// Outcome of transporting a family of normal vectors.
#[derive(Clone, Debug)]
pub struct Transported {
    pub vectors: Vec<DVector<f64>>,
    /// Largest change of the Gram matrix, relative to its initial size.
    pub norm_drift: f64,
    /// Largest relative tangential component removed by re-projection.
    pub normality_drift: f64,
    /// Parameter-space length of the path.
    pub length: f64,
}

/// Weingarten velocity `-f_*(A_xi v)` at a point.
fn weingarten(l: &Local, xi: &DVector<f64>, v: &[f64]) -> DVector<f64> {
    let k = l.k();
    let amb = l.ambient();
    let sv = DVector::from_fn(k, |i, _| {
        (0..k)
            .map(|j| v[j] * amb.dot(l.jet.d2(i, j), xi))
            .sum::<f64>()
    });
    -(l.differential() * (&l.g_inv * sv))
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

fn gram(amb: AmbientSpace, vs: &[DVector<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(vs.len(), vs.len(), |i, j| amb.dot(&vs[i], &vs[j]))
}

/// Transports `xi0` along the straight segment from `a` to `b` in `steps`
/// RK4 steps, without checking the start vectors.
fn transport_segment(
    f: &Immersion,
    a: &[f64],
    b: &[f64],
    xi0: &[DVector<f64>],
    steps: usize,
    start: Option<Local>,
) -> Result<(Vec<DVector<f64>>, f64, f64, Local)> {
    let amb = f.ambient();
    let vel: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let h = 1.0 / steps as f64;
    let g0 = gram(amb, xi0);
    let scale = g0.amax().max(f64::MIN_POSITIVE);
    let mut xs: Vec<DVector<f64>> = xi0.to_vec();
    let mut here = match start {
        Some(l) => l,
        None => f.local(a)?,
    };
    let (mut norm_drift, mut normality) = (0.0f64, 0.0f64);
    for s in 0..steps {
        let t = s as f64 * h;
        let mid = f.local(&lerp(a, b, t + 0.5 * h))?;
        let end = f.local(&lerp(a, b, t + h))?;
        let mut next = Vec::with_capacity(xs.len());
        for x in &xs {
            let k1 = weingarten(&here, x, &vel);
            let k2 = weingarten(&mid, &(x + &k1 * (0.5 * h)), &vel);
            let k3 = weingarten(&mid, &(x + &k2 * (0.5 * h)), &vel);
            let k4 = weingarten(&end, &(x + &k3 * h), &vel);
            let y = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            normality = normality.max(end.normal_residual(&y));
            next.push(end.normal_part(&y));
        }
        norm_drift = norm_drift.max((gram(amb, &next) - &g0).amax() / scale);
        xs = next;
        here = end;
    }
    Ok((xs, norm_drift, normality, here))
}

/// A polyline in parameter space.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pub points: Vec<Vec<f64>>,
}

impl Path {
    pub fn segment(a: &[f64], b: &[f64]) -> Path {
        Path {
            points: vec![a.to_vec(), b.to_vec()],
        }
    }

    pub fn polyline(points: Vec<Vec<f64>>) -> Path {
        Path { points }
    }

    pub fn length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[0].iter().zip(&w[1]).map(|(x, y)| (y - x).powi(2)).sum::<f64>().sqrt())
            .sum()
    }
}

/// Parallel transport along a polyline with `steps` RK4 steps per segment.
pub fn transport(
    f: &Immersion,
    path: &Path,
    xi0: &[DVector<f64>],
    steps: usize,
    normal_tol: f64,
) -> Result<Transported> {
    if steps < 2 {
        return Err(invalid("transport needs at least two steps"));
    }
    if path.points.len() < 2 {
        return Err(invalid("path needs at least two points"));
    }
    let start = f.local(&path.points[0])?;
    for x in xi0 {
        let r = start.normal_residual(x);
        if r > normal_tol {
            return Err(Error::NotNormal { residual: r });
        }
    }
    let mut xs = xi0.to_vec();
    let (mut nd, mut nn) = (0.0f64, 0.0f64);
    let mut here = Some(start);
    let g0 = gram(f.ambient(), xi0);
    for w in path.points.windows(2) {
        let (next, _, n2, end) = transport_segment(f, &w[0], &w[1], &xs, steps, here.take())?;
        xs = next;
        nd = nd.max((gram(f.ambient(), &xs) - &g0).amax() / g0.amax().max(f64::MIN_POSITIVE));
        nn = nn.max(n2);
        here = Some(end);
    }
    Ok(Transported {
        vectors: xs,
        norm_drift: nd,
        normality_drift: nn,
        length: path.length(),
    })
}

/// Coordinate rectangle spanned by two axes from a corner.
#[derive(Clone, Debug, PartialEq)]
pub struct Rect {
    pub corner: Vec<f64>,
    pub axes: (usize, usize),
    pub sides: (f64, f64),
}

impl Rect {
    pub fn loop_path(&self) -> Path {
        let mut p1 = self.corner.clone();
        p1[self.axes.0] += self.sides.0;
        let mut p2 = p1.clone();
        p2[self.axes.1] += self.sides.1;
        let mut p3 = self.corner.clone();
        p3[self.axes.1] += self.sides.1;
        Path::polyline(vec![self.corner.clone(), p1, p2, p3, self.corner.clone()])
    }
}

/// Largest displacement of a normal orthonormal frame after transport
/// around the rectangle.
pub fn holonomy_defect(f: &Immersion, rect: &Rect, steps: usize) -> Result<f64> {
    let frame = f.normal_basis(&rect.corner, 1e-9)?;
    let out = transport(f, &rect.loop_path(), &frame, steps, 1e-8)?;
    Ok(frame
        .iter()
        .zip(&out.vectors)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max))
}

/// A smooth orthonormal frame of a flat normal subbundle, seen as the
/// fiber isometry `R^s (or L^s) -> E`.
pub trait FrameField: Send + Sync {
    fn base(&self) -> &Immersion;
    fn rank(&self) -> usize;
    /// The model fiber: Euclidean, or Lorentzian with the first frame vector
    /// timelike.
    fn fiber(&self) -> AmbientSpace;
    fn frame(&self, p: &[f64]) -> Result<Vec<DVector<f64>>>;
    /// Frame vectors with first and second parameter derivatives
    /// (`d3` unused).
    fn frame_jets(&self, p: &[f64]) -> Result<Vec<MapJet>>;

    fn apply(&self, p: &[f64], y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.rank() {
            return Err(invalid(format!(
                "fiber vector has {} entries, frame rank is {}",
                y.len(),
                self.rank()
            )));
        }
        let fr = self.frame(p)?;
        let mut out = DVector::zeros(self.base().ambient().dim());
        for (c, v) in y.iter().zip(&fr) {
            out.axpy(*c, v, 1.0);
        }
        Ok(out)
    }

    /// Fiber coordinates of an ambient vector of `E(p)`.
    fn coordinates(&self, p: &[f64], v: &DVector<f64>) -> Result<DVector<f64>> {
        let amb = self.base().ambient();
        let fr = self.frame(p)?;
        Ok(DVector::from_fn(fr.len(), |j, _| {
            amb.norm_sq(&fr[j]).signum() * amb.dot(v, &fr[j])
        }))
    }

    /// Largest path-dependence found while building the frame.
    fn flatness_defect(&self) -> f64 {
        0.0
    }
}

/// First derivatives of a parallel normal field from the Weingarten
/// equation, and second derivatives when third derivatives of the base are
/// available.
pub fn parallel_field_jet(l: &Local, base_jet: &MapJet, xi: &DVector<f64>) -> MapJet {
    let k = l.k();
    let amb = l.ambient();
    let n = xi.len();
    let s = l.shape_matrix(xi);
    let a = &l.g_inv * &s;
    let d1 = -(l.differential() * &a);
    let mut out = MapJet::zeros(n, k, false);
    out.value = xi.clone();
    out.d1 = d1.clone();
    let Some(_) = base_jet.d3 else {
        return out;
    };
    let fcol: Vec<DVector<f64>> = (0..k).map(|i| l.tangent(i)).collect();
    for i in 0..k {
        let dxi_i = d1.column(i).into_owned();
        let dg = DMatrix::from_fn(k, k, |p, q| {
            amb.dot(base_jet.d2(i, p), &fcol[q]) + amb.dot(&fcol[p], base_jet.d2(i, q))
        });
        let dginv = -(&l.g_inv * dg * &l.g_inv);
        let ds = DMatrix::from_fn(k, k, |p, q| {
            amb.dot(base_jet.d3(i, p, q).expect("third derivatives"), xi)
                + amb.dot(base_jet.d2(p, q), &dxi_i)
        });
        let da = dginv * &s + &l.g_inv * ds;
        for j in 0..k {
            let mut v = DVector::zeros(n);
            for m in 0..k {
                v.axpy(-da[(m, j)], &fcol[m], 1.0);
                v.axpy(-a[(m, j)], base_jet.d2(i, m), 1.0);
            }
            out.d2[i * k + j] = v;
        }
    }
    for i in 0..k {
        for j in i + 1..k {
            let m = (&out.d2[i * k + j] + &out.d2[j * k + i]) * 0.5;
            out.d2[i * k + j] = m.clone();
            out.d2[j * k + i] = m;
        }
    }
    out
}

/// How frames between lattice nodes are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolation {
    /// Transport from the nearest node along a straight segment.
    Transport,
    /// Multilinear blend of the cell corners, re-orthonormalised.
    Multilinear,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsometryOptions {
    pub steps_per_unit: f64,
    pub flatness_tol: f64,
    pub normal_tol: f64,
    pub interpolation: Interpolation,
}

impl Default for IsometryOptions {
    fn default() -> Self {
        IsometryOptions {
            steps_per_unit: 64.0,
            flatness_tol: 1e-5,
            normal_tol: 1e-8,
            interpolation: Interpolation::Transport,
        }
    }
}

/// Parallel orthonormal frame stored on a lattice over the base domain.
pub struct ParallelIsometry {
    base: Immersion,
    lattice: Grid,
    base_point: Vec<f64>,
    fiber: AmbientSpace,
    frames: Vec<Vec<DVector<f64>>>,
    path_defect: f64,
    opts: IsometryOptions,
    cache: RwLock<HashMap<Vec<u64>, Vec<DVector<f64>>>>,
}

impl std::fmt::Debug for ParallelIsometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParallelIsometry")
            .field("rank", &self.rank())
            .field("lattice", &self.lattice)
            .field("base_point", &self.base_point)
            .field("path_defect", &self.path_defect)
            .finish()
    }
}

fn edge_steps(len: f64, per_unit: f64) -> usize {
    ((per_unit * len).ceil() as usize).max(2)
}

fn fiber_signature(amb: AmbientSpace, seed: &[DVector<f64>], tol: f64) -> Result<AmbientSpace> {
    let g = gram(amb, seed);
    let s = seed.len();
    let timelike: Vec<usize> = (0..s).filter(|&i| g[(i, i)] < 0.0).collect();
    let fiber = match timelike.as_slice() {
        [] => AmbientSpace::euclidean(s),
        [0] => AmbientSpace::lorentzian(s),
        _ => {
            return Err(invalid(
                "seed frame may contain at most one timelike vector, and it must come first",
            ))
        }
    };
    let want = fiber.metric();
    let err = (&g - &want).amax();
    if err > tol {
        return Err(invalid(format!(
            "seed frame is not orthonormal (Gram defect {err:.3e})"
        )));
    }
    Ok(fiber)
}

/// Builds the parallel frame with seed `seed` at `base_point` on the nodes
/// of `lattice`, reaching node `n` along the axis-ordered path that first
/// moves along axis 0, then axis 1, and so on.
pub fn build_parallel_isometry(
    base: &Immersion,
    base_point: &[f64],
    seed: &[DVector<f64>],
    lattice: &Grid,
    opts: IsometryOptions,
) -> Result<ParallelIsometry> {
    let k = base.dim();
    if lattice.dim() != k || base_point.len() != k {
        return Err(invalid("lattice or base point has the wrong dimension"));
    }
    if seed.is_empty() {
        return Err(invalid("seed frame is empty"));
    }
    let amb = base.ambient();
    let fiber = fiber_signature(amb, seed, 1e-8)?;
    let l0 = base.local(base_point)?;
    for x in seed {
        let r = l0.normal_residual(x);
        if r > opts.normal_tol {
            return Err(Error::NotNormal { residual: r });
        }
    }
    let seed: Vec<DVector<f64>> = seed.iter().map(|x| l0.normal_part(x)).collect();
    let spu = opts.steps_per_unit;

    // parameter point and the frame there
    type Node = (Vec<f64>, Vec<DVector<f64>>);
    // Sweep axis by axis; `current` is ordered by the multi-index of the
    // axes already fixed.
    let mut current: Vec<Node> = vec![(base_point.to_vec(), seed)];
    for axis in 0..k {
        let n = lattice.counts()[axis];
        let coords: Vec<f64> = (0..n).map(|i| lattice.coord(axis, i)).collect();
        let next: Vec<Vec<Node>> = current
            .par_iter()
            .map(|(q, fr)| -> Result<Vec<Node>> {
                let mut out: Vec<Option<Node>> = vec![None; n];
                let i0 = coords
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1 - q[axis]).abs().total_cmp(&(b.1 - q[axis]).abs()))
                    .map(|(i, _)| i)
                    .expect("non-empty axis");
                let mut p0 = q.clone();
                p0[axis] = coords[i0];
                let d = (coords[i0] - q[axis]).abs();
                let f0 = if d > 0.0 {
                    transport_segment(base, q, &p0, fr, edge_steps(d, spu), None)?.0
                } else {
                    fr.clone()
                };
                out[i0] = Some((p0.clone(), f0.clone()));
                for dir in [1isize, -1] {
                    let (mut p, mut fcur) = (p0.clone(), f0.clone());
                    let mut i = i0 as isize + dir;
                    while i >= 0 && (i as usize) < n {
                        let mut pn = p.clone();
                        pn[axis] = coords[i as usize];
                        let len = (pn[axis] - p[axis]).abs();
                        fcur = transport_segment(base, &p, &pn, &fcur, edge_steps(len, spu), None)?.0;
                        p = pn;
                        out[i as usize] = Some((p.clone(), fcur.clone()));
                        i += dir;
                    }
                }
                Ok(out.into_iter().map(|x| x.expect("filled")).collect())
            })
            .collect::<Result<_>>()?;
        current = next.into_iter().flatten().collect();
    }
    let frames: Vec<Vec<DVector<f64>>> = current.into_iter().map(|(_, f)| f).collect();

    let mut iso = ParallelIsometry {
        base: base.clone(),
        lattice: lattice.clone(),
        base_point: base_point.to_vec(),
        fiber,
        frames,
        path_defect: 0.0,
        opts,
        cache: RwLock::new(HashMap::new()),
    };
    let (defect, cell) = iso.path_independence()?;
    iso.path_defect = defect;
    if defect > opts.flatness_tol {
        return Err(Error::Flatness {
            cell,
            defect,
            tol: opts.flatness_tol,
        });
    }
    Ok(iso)
}

impl ParallelIsometry {
    pub fn lattice(&self) -> &Grid {
        &self.lattice
    }

    pub fn base_point(&self) -> &[f64] {
        &self.base_point
    }

    pub fn options(&self) -> IsometryOptions {
        self.opts
    }

    pub fn node_frames(&self) -> &[Vec<DVector<f64>>] {
        &self.frames
    }

    pub fn path_independence_defect(&self) -> f64 {
        self.path_defect
    }

    /// Commutator of the two edge orders around every lattice face.
    fn path_independence(&self) -> Result<(f64, Vec<usize>)> {
        let k = self.lattice.dim();
        let spu = self.opts.steps_per_unit;
        let mut faces = Vec::new();
        for lin in 0..self.lattice.len() {
            let idx = self.lattice.multi_index(lin);
            for a in 0..k {
                for b in a + 1..k {
                    if idx[a] + 1 < self.lattice.counts()[a] && idx[b] + 1 < self.lattice.counts()[b] {
                        faces.push((idx.clone(), a, b));
                    }
                }
            }
        }
        let defects: Vec<(f64, Vec<usize>)> = faces
            .par_iter()
            .map(|(idx, a, b)| -> Result<(f64, Vec<usize>)> {
                let p = self.lattice.node(idx);
                let fr = &self.frames[self.lattice.linear_index(idx)];
                let mut pa = p.clone();
                pa[*a] = self.lattice.coord(*a, idx[*a] + 1);
                let mut pb = p.clone();
                pb[*b] = self.lattice.coord(*b, idx[*b] + 1);
                let mut pab = pa.clone();
                pab[*b] = pb[*b];
                let sa = edge_steps(self.lattice.spacing(*a), spu);
                let sb = edge_steps(self.lattice.spacing(*b), spu);
                let x1 = transport_segment(&self.base, &p, &pa, fr, sa, None)?.0;
                let x1 = transport_segment(&self.base, &pa, &pab, &x1, sb, None)?.0;
                let x2 = transport_segment(&self.base, &p, &pb, fr, sb, None)?.0;
                let x2 = transport_segment(&self.base, &pb, &pab, &x2, sa, None)?.0;
                let d = x1
                    .iter()
                    .zip(&x2)
                    .map(|(u, v)| (u - v).norm())
                    .fold(0.0, f64::max);
                Ok((d, idx.clone()))
            })
            .collect::<Result<_>>()?;
        Ok(defects
            .into_iter()
            .fold((0.0, Vec::new()), |acc, x| if x.0 > acc.0 { x } else { acc }))
    }

    fn node_match(&self, p: &[f64]) -> (Vec<usize>, bool) {
        let idx = self.lattice.nearest(p);
        let q = self.lattice.node(&idx);
        let exact = p.iter().zip(&q).all(|(a, b)| (a - b).abs() <= 1e-14 * (1.0 + b.abs()));
        (idx, exact)
    }

    /// Frame at `p` reached from the node `idx` in `steps` steps.
    fn frame_from(&self, idx: &[usize], p: &[f64], steps: usize) -> Result<Vec<DVector<f64>>> {
        let q = self.lattice.node(idx);
        let fr = &self.frames[self.lattice.linear_index(idx)];
        Ok(transport_segment(&self.base, &q, p, fr, steps, None)?.0)
    }

    fn multilinear(&self, p: &[f64]) -> Result<Vec<DVector<f64>>> {
        let k = self.lattice.dim();
        let mut lo = vec![0usize; k];
        let mut w = vec![0.0; k];
        for a in 0..k {
            let n = self.lattice.counts()[a];
            let h = self.lattice.spacing(a);
            if n == 1 || h == 0.0 {
                continue;
            }
            let t = ((p[a] - self.lattice.bbox().lo()[a]) / h).clamp(0.0, (n - 1) as f64);
            let i = (t.floor() as usize).min(n - 2);
            lo[a] = i;
            w[a] = t - i as f64;
        }
        let s = self.rank();
        let mut acc = vec![DVector::zeros(self.base.ambient().dim()); s];
        for corner in 0..(1usize << k) {
            let mut idx = lo.clone();
            let mut weight = 1.0;
            for a in 0..k {
                let up = corner >> a & 1 == 1;
                if up && self.lattice.counts()[a] > 1 {
                    idx[a] += 1;
                }
                weight *= if up { w[a] } else { 1.0 - w[a] };
            }
            if weight == 0.0 {
                continue;
            }
            for (j, v) in self.frames[self.lattice.linear_index(&idx)].iter().enumerate() {
                acc[j].axpy(weight, v, 1.0);
            }
        }
        let l = self.base.local(p)?;
        let projected: Vec<DVector<f64>> = acc.iter().map(|v| l.normal_part(v)).collect();
        Ok(self.base.ambient().orthonormalize(&projected, 1e-12)?)
    }

    fn cached(&self, p: &[f64]) -> Option<Vec<DVector<f64>>> {
        let key: Vec<u64> = p.iter().map(|x| x.to_bits()).collect();
        self.cache.read().ok()?.get(&key).cloned()
    }

    fn remember(&self, p: &[f64], fr: &[DVector<f64>]) {
        let key: Vec<u64> = p.iter().map(|x| x.to_bits()).collect();
        if let Ok(mut c) = self.cache.write() {
            if c.len() > 200_000 {
                c.clear();
            }
            c.insert(key, fr.to_vec());
        }
    }

    fn steps_to(&self, idx: &[usize], p: &[f64]) -> usize {
        let q = self.lattice.node(idx);
        let d = p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        edge_steps(d, self.opts.steps_per_unit)
    }
}

impl FrameField for ParallelIsometry {
    fn base(&self) -> &Immersion {
        &self.base
    }

    fn rank(&self) -> usize {
        self.frames[0].len()
    }

    fn fiber(&self) -> AmbientSpace {
        self.fiber
    }

    fn frame(&self, p: &[f64]) -> Result<Vec<DVector<f64>>> {
        let (idx, exact) = self.node_match(p);
        if exact {
            return Ok(self.frames[self.lattice.linear_index(&idx)].clone());
        }
        if let Some(fr) = self.cached(p) {
            return Ok(fr);
        }
        let fr = match self.opts.interpolation {
            Interpolation::Transport => self.frame_from(&idx, p, self.steps_to(&idx, p))?,
            Interpolation::Multilinear => self.multilinear(p)?,
        };
        self.remember(p, &fr);
        Ok(fr)
    }

    fn frame_jets(&self, p: &[f64]) -> Result<Vec<MapJet>> {
        let third = self.base.map().has_third();
        let bj = self.base.jet(p, third)?;
        let l = Local::new(self.base.ambient(), p, bj.clone())?;
        let fr = self.frame(p)?;
        let mut jets: Vec<MapJet> = fr.iter().map(|x| parallel_field_jet(&l, &bj, x)).collect();
        if third {
            return Ok(jets);
        }
        // Second derivatives by central differences of the Weingarten
        // first derivatives, with frames transported from one node in a
        // fixed number of steps so the differences stay smooth.
        let k = p.len();
        let h = 1e-4;
        let (idx, _) = self.node_match(p);
        let steps = self.steps_to(&idx, p) + 2;
        for i in 0..k {
            let mut side = Vec::new();
            for d in [h, -h] {
                let mut q = p.to_vec();
                q[i] += d;
                let bq = self.base.jet(&q, false)?;
                let lq = Local::new(self.base.ambient(), &q, bq.clone())?;
                let fq = self.frame_from(&idx, &q, steps)?;
                side.push(fq.iter().map(|x| parallel_field_jet(&lq, &bq, x).d1).collect::<Vec<_>>());
            }
            for (jn, jet) in jets.iter_mut().enumerate() {
                let diff = (&side[0][jn] - &side[1][jn]) / (2.0 * h);
                for j in 0..k {
                    jet.d2[i * k + j] = diff.column(j).into_owned();
                }
            }
        }
        for jet in jets.iter_mut() {
            for i in 0..k {
                for j in i + 1..k {
                    let m = (&jet.d2[i * k + j] + &jet.d2[j * k + i]) * 0.5;
                    jet.d2[i * k + j] = m.clone();
                    jet.d2[j * k + i] = m;
                }
            }
        }
        Ok(jets)
    }

    fn flatness_defect(&self) -> f64 {
        self.path_defect
    }
}

/// Frames obtained as fixed linear combinations of another frame field:
/// new frame `j` is `sum_i m[(i, j)] frame_i`.
pub struct CombinedFrames {
    inner: Arc<dyn FrameField>,
    base: Immersion,
    combo: DMatrix<f64>,
    fiber: AmbientSpace,
}

impl CombinedFrames {
    /// `base` may differ from the inner base by a parallel displacement
    /// with the same normal spaces.
    pub fn new(
        inner: Arc<dyn FrameField>,
        base: Immersion,
        combo: DMatrix<f64>,
        fiber: AmbientSpace,
    ) -> Result<CombinedFrames> {
        if combo.nrows() != inner.rank() || combo.ncols() != fiber.dim() {
            return Err(invalid("combination matrix has the wrong shape"));
        }
        // The combination must carry the inner fiber metric to the new one.
        let eta = inner.fiber().metric();
        let g = combo.transpose() * eta * &combo;
        if (&g - fiber.metric()).amax() > 1e-9 {
            return Err(invalid("combination is not an isometry onto its image"));
        }
        Ok(CombinedFrames {
            inner,
            base,
            combo,
            fiber,
        })
    }

    pub fn combination(&self) -> &DMatrix<f64> {
        &self.combo
    }
}

impl FrameField for CombinedFrames {
    fn base(&self) -> &Immersion {
        &self.base
    }

    fn rank(&self) -> usize {
        self.combo.ncols()
    }

    fn fiber(&self) -> AmbientSpace {
        self.fiber
    }

    fn frame(&self, p: &[f64]) -> Result<Vec<DVector<f64>>> {
        let fr = self.inner.frame(p)?;
        Ok((0..self.rank())
            .map(|j| {
                let mut v = DVector::zeros(fr[0].len());
                for (i, f) in fr.iter().enumerate() {
                    v.axpy(self.combo[(i, j)], f, 1.0);
                }
                v
            })
            .collect())
    }

    fn frame_jets(&self, p: &[f64]) -> Result<Vec<MapJet>> {
        let jets = self.inner.frame_jets(p)?;
        let (n, k) = (jets[0].n(), jets[0].k());
        Ok((0..self.rank())
            .map(|j| {
                let mut out = MapJet::zeros(n, k, false);
                for (i, ji) in jets.iter().enumerate() {
                    let c = self.combo[(i, j)];
                    out.value.axpy(c, &ji.value, 1.0);
                    out.d1 += &ji.d1 * c;
                    for (o, s) in out.d2.iter_mut().zip(&ji.d2) {
                        o.axpy(c, s, 1.0);
                    }
                }
                out
            })
            .collect())
    }

    fn flatness_defect(&self) -> f64 {
        self.inner.flatness_defect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::immersion::ParamBox;

    fn circle(r: f64) -> Immersion {
        let x = format!("{r}*cos(v)");
        let y = format!("{r}*sin(v)");
        Immersion::from_expressions(
            &["v"],
            &[x.as_str(), y.as_str(), "0"],
            &[(0.0, 6.0)],
            &[13],
            AmbientSpace::euclidean(3),
        )
        .unwrap()
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn radial_field_along_circle_is_parallel() {
        let f = circle(2.0);
        let t = transport(&f, &Path::segment(&[0.0], &[3.0]), &[v(&[1., 0., 0.]), v(&[0., 0., 1.])], 192, 1e-9)
            .unwrap();
        let want = v(&[3f64.cos(), 3f64.sin(), 0.0]);
        assert!((&t.vectors[0] - want).norm() < 1e-9);
        assert!((&t.vectors[1] - v(&[0., 0., 1.])).norm() < 1e-15);
        assert!(t.norm_drift / t.length < 1e-8);
    }

    #[test]
    fn rejects_short_transport_and_tangent_start() {
        let f = circle(1.0);
        let p = Path::segment(&[0.0], &[1.0]);
        assert!(transport(&f, &p, &[v(&[1., 0., 0.])], 1, 1e-9).is_err());
        assert!(matches!(
            transport(&f, &p, &[v(&[0., 1., 0.])], 8, 1e-9),
            Err(Error::NotNormal { .. })
        ));
    }

    #[test]
    fn lattice_frames_and_off_lattice_transport() {
        let f = circle(2.0);
        let seed = [v(&[1., 0., 0.]), v(&[0., 0., 1.])];
        let iso = build_parallel_isometry(&f, &[0.0], &seed, f.grid(), Default::default()).unwrap();
        assert_eq!(iso.fiber(), AmbientSpace::euclidean(2));
        let fr = iso.frame(&[1.3]).unwrap();
        assert!((&fr[0] - v(&[1.3f64.cos(), 1.3f64.sin(), 0.0])).norm() < 1e-10);
        let fr = iso.frame(&[3.0]).unwrap();
        assert!((&fr[0] - v(&[3f64.cos(), 3f64.sin(), 0.0])).norm() < 1e-10);
        let y = iso.apply(&[3.0], &v(&[0.0, 1.0])).unwrap();
        assert_eq!(y, fr[1]);
    }

    #[test]
    fn frame_jets_match_closed_form_on_circle() {
        let f = circle(2.0);
        let seed = [v(&[1., 0., 0.]), v(&[0., 0., 1.])];
        let iso = build_parallel_isometry(&f, &[0.0], &seed, f.grid(), Default::default()).unwrap();
        let t: f64 = 0.7;
        let j = &iso.frame_jets(&[t]).unwrap()[0];
        assert!((j.d1.column(0) - v(&[-t.sin(), t.cos(), 0.0])).norm() < 1e-9);
        assert!((&j.d2[0] - v(&[-t.cos(), -t.sin(), 0.0])).norm() < 1e-9);
    }

    #[test]
    fn veronese_type_surface_has_holonomy() {
        let f = Immersion::from_expressions(
            &["u", "v"],
            &["u", "v", "u^2/2", "u*v", "v^2/2"],
            &[(-1.0, 1.0), (-1.0, 1.0)],
            &[3, 3],
            AmbientSpace::euclidean(5),
        )
        .unwrap();
        let rect = Rect {
            corner: vec![-0.5, -0.5],
            axes: (0, 1),
            sides: (1.0, 1.0),
        };
        assert!(holonomy_defect(&f, &rect, 64).unwrap() > 1e-2);
    }

    #[test]
    fn flat_surface_in_r4_has_no_holonomy_and_path_independent_frames() {
        // Product of circles: flat normal bundle.
        let f = Immersion::from_expressions(
            &["u", "v"],
            &["cos(u)", "sin(u)", "cos(v)", "sin(v)"],
            &[(0.0, 2.0), (0.0, 2.0)],
            &[5, 5],
            AmbientSpace::euclidean(4),
        )
        .unwrap();
        let rect = Rect {
            corner: vec![0.1, 0.2],
            axes: (0, 1),
            sides: (1.0, 1.5),
        };
        assert!(holonomy_defect(&f, &rect, 64).unwrap() < 1e-7);
        let l0 = f.local(&[0.0, 0.0]).unwrap();
        let seed = l0.normal_basis(1e-9).unwrap();
        let grid = Grid::new(ParamBox::from_intervals(&[(0.0, 2.0), (0.0, 2.0)]).unwrap(), vec![5, 5]).unwrap();
        let iso = build_parallel_isometry(&f, &[0.0, 0.0], &seed, &grid, Default::default()).unwrap();
        assert!(iso.path_independence_defect() < 1e-7);
    }
}
