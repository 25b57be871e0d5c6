//! Intrinsic quantities of a metric given pointwise in coordinates:
//! Christoffel symbols by central differences, second fundamental forms of
//! coordinate distributions, and sectional curvatures.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

/// A Riemannian metric in coordinates.
pub type MetricFn<'a> = dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Sync + 'a;

fn shifted(p: &[f64], axis: usize, d: f64) -> Vec<f64> {
    let mut q = p.to_vec();
    q[axis] += d;
    q
}

/// `d_a g` for every coordinate `a`, by central differences.
pub fn metric_derivatives(g: &MetricFn, p: &[f64], h: f64) -> Result<Vec<DMatrix<f64>>> {
    (0..p.len())
        .map(|a| {
            let plus = g(&shifted(p, a, h))?;
            let minus = g(&shifted(p, a, -h))?;
            Ok((plus - minus) / (2.0 * h))
        })
        .collect()
}

/// `Gamma_{ij,l} = g(nabla_i d_j, d_l)`, index `(i * k + j) * k + l`.
pub fn lowered_christoffel(dg: &[DMatrix<f64>]) -> Vec<f64> {
    let k = dg.len();
    let mut out = vec![0.0; k * k * k];
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                out[(i * k + j) * k + l] =
                    0.5 * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
            }
        }
    }
    out
}

/// `Gamma^m_ij`, index `(m * k + i) * k + j`.
pub fn christoffel_fd(g: &MetricFn, p: &[f64], h: f64) -> Result<Vec<f64>> {
    let k = p.len();
    let g0 = g(p)?;
    let gi = g0
        .try_inverse()
        .ok_or_else(|| invalid("metric is singular"))?;
    let low = lowered_christoffel(&metric_derivatives(g, p, h)?);
    let mut out = vec![0.0; k * k * k];
    for m in 0..k {
        for i in 0..k {
            for j in 0..k {
                out[(m * k + i) * k + j] = (0..k)
                    .map(|l| gi[(m, l)] * low[(i * k + j) * k + l])
                    .sum();
            }
        }
    }
    Ok(out)
}

/// `g`-orthonormal basis (as coordinate vectors) of the span of the given
/// axes, followed by one of its `g`-orthogonal complement.
pub fn split_basis(g: &DMatrix<f64>, axes: &[usize]) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let k = g.nrows();
    let ip = |x: &DVector<f64>, y: &DVector<f64>| (g * y).dot(x);
    let mut onb: Vec<DVector<f64>> = Vec::new();
    let push = |v: DVector<f64>, onb: &mut Vec<DVector<f64>>| {
        let mut w = v;
        for u in onb.iter() {
            let c = ip(&w, u);
            w -= u * c;
        }
        let n = ip(&w, &w).max(0.0).sqrt();
        onb.push(w / n);
    };
    for &a in axes {
        push(DVector::from_fn(k, |i, _| if i == a { 1.0 } else { 0.0 }), &mut onb);
    }
    for a in (0..k).filter(|a| !axes.contains(a)) {
        push(DVector::from_fn(k, |i, _| if i == a { 1.0 } else { 0.0 }), &mut onb);
    }
    let rest = onb.split_off(axes.len());
    (onb, rest)
}

/// Second fundamental form of a coordinate distribution at one point.
#[derive(Clone, Debug)]
pub struct DistributionShape {
    /// `g`-orthonormal basis of the distribution.
    pub basis: Vec<DVector<f64>>,
    /// `g`-orthonormal basis of its orthogonal complement.
    pub complement: Vec<DVector<f64>>,
    /// `b[z][(a, c)] = g(nabla_{e_a} e_c, z)`, symmetrised.
    pub b: Vec<DMatrix<f64>>,
    /// Mean curvature vector in coordinates.
    pub mean: DVector<f64>,
    pub totally_geodesic_defect: f64,
    pub umbilical_defect: f64,
}

pub fn distribution_shape(g: &DMatrix<f64>, lowered: &[f64], axes: &[usize]) -> DistributionShape {
    let k = g.nrows();
    let d = axes.len();
    let (basis, complement) = split_basis(g, axes);
    let mut b = Vec::with_capacity(complement.len());
    let mut mean = DVector::zeros(k);
    let (mut tg, mut umb) = (0.0f64, 0.0f64);
    for z in &complement {
        let mut m = DMatrix::zeros(d, d);
        for a in 0..d {
            for c in 0..d {
                let mut s = 0.0;
                for i in 0..k {
                    for j in 0..k {
                        let coef = basis[a][i] * basis[c][j];
                        if coef == 0.0 {
                            continue;
                        }
                        for l in 0..k {
                            s += coef * lowered[(i * k + j) * k + l] * z[l];
                        }
                    }
                }
                m[(a, c)] = s;
            }
        }
        let m = (&m + m.transpose()) * 0.5;
        let eta = m.trace() / d as f64;
        mean += z * eta;
        tg = tg.max(m.amax());
        umb = umb.max((&m - DMatrix::identity(d, d) * eta).amax());
        b.push(m);
    }
    DistributionShape {
        basis,
        complement,
        b,
        mean,
        totally_geodesic_defect: tg,
        umbilical_defect: umb,
    }
}

/// Shape of the distribution spanned by `axes`, with the metric given as a
/// function and differentiated with step `h`.
pub fn distribution_shape_at(
    g: &MetricFn,
    p: &[f64],
    axes: &[usize],
    h: f64,
) -> Result<DistributionShape> {
    let g0 = g(p)?;
    let low = lowered_christoffel(&metric_derivatives(g, p, h)?);
    Ok(distribution_shape(&g0, &low, axes))
}

/// `max |g(nabla_X eta, Z)|` over unit `X` in the distribution and unit `Z`
/// orthogonal to it, where `eta` is the mean curvature vector.
pub fn spherical_defect(g: &MetricFn, p: &[f64], axes: &[usize], h: f64) -> Result<f64> {
    let k = p.len();
    let g0 = g(p)?;
    let low = lowered_christoffel(&metric_derivatives(g, p, h)?);
    let here = distribution_shape(&g0, &low, axes);
    if here.complement.is_empty() {
        return Ok(0.0);
    }
    let mut deta = Vec::with_capacity(k);
    for i in 0..k {
        let plus = distribution_shape_at(g, &shifted(p, i, h), axes, h)?.mean;
        let minus = distribution_shape_at(g, &shifted(p, i, -h), axes, h)?.mean;
        deta.push((plus - minus) / (2.0 * h));
    }
    let eta = &here.mean;
    let mut worst = 0.0f64;
    for x in &here.basis {
        for z in &here.complement {
            let gz = &g0 * z;
            let mut s = 0.0;
            for i in 0..k {
                if x[i] == 0.0 {
                    continue;
                }
                let mut t = deta[i].dot(&gz);
                for m in 0..k {
                    for l in 0..k {
                        t += eta[m] * low[(i * k + m) * k + l] * z[l];
                    }
                }
                s += x[i] * t;
            }
            worst = worst.max(s.abs());
        }
    }
    Ok(worst)
}

/// Sectional curvatures of all coordinate planes `(i, j)`, `i < j`.
pub fn sectional_curvatures(g: &MetricFn, p: &[f64], h: f64) -> Result<Vec<((usize, usize), f64)>> {
    let k = p.len();
    let gamma = christoffel_fd(g, p, h)?;
    let dgamma: Vec<Vec<f64>> = (0..k)
        .map(|a| {
            let plus = christoffel_fd(g, &shifted(p, a, h), h)?;
            let minus = christoffel_fd(g, &shifted(p, a, -h), h)?;
            Ok(plus
                .iter()
                .zip(&minus)
                .map(|(x, y)| (x - y) / (2.0 * h))
                .collect())
        })
        .collect::<Result<_>>()?;
    let g0 = g(p)?;
    let gm = |m: usize, i: usize, j: usize| gamma[(m * k + i) * k + j];
    let mut out = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            // R(d_i, d_j) d_j = R^m d_m
            let r: Vec<f64> = (0..k)
                .map(|m| {
                    let mut v = dgamma[i][(m * k + j) * k + j] - dgamma[j][(m * k + i) * k + j];
                    for q in 0..k {
                        v += gm(q, j, j) * gm(m, i, q) - gm(q, i, j) * gm(m, j, q);
                    }
                    v
                })
                .collect();
            let num: f64 = (0..k).map(|m| r[m] * g0[(m, i)]).sum();
            let area = g0[(i, i)] * g0[(j, j)] - g0[(i, j)].powi(2);
            out.push(((i, j), num / area));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_sphere(p: &[f64]) -> Result<DMatrix<f64>> {
        let c = p[0].cos();
        Ok(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, c * c]))
    }

    #[test]
    fn curvature_of_round_sphere() {
        let k = sectional_curvatures(&round_sphere, &[0.4, 1.0], 1e-3).unwrap();
        assert!((k[0].1 - 1.0).abs() < 1e-5);
    }

    #[test]
    fn fd_christoffel_matches_closed_form() {
        let t: f64 = 0.4;
        let c = christoffel_fd(&round_sphere, &[t, 1.0], 1e-3).unwrap();
        assert!((c[3] - t.sin() * t.cos()).abs() < 1e-6);
        assert!((c[5] + t.tan()).abs() < 1e-6);
    }

    #[test]
    fn parallels_of_sphere_are_umbilical_and_spherical() {
        // Latitude circles: curvature tan t, constant along the circle.
        let t: f64 = 0.4;
        let s = distribution_shape_at(&round_sphere, &[t, 1.0], &[1], 1e-3).unwrap();
        assert!((s.totally_geodesic_defect - t.tan()).abs() < 1e-6);
        assert!(s.umbilical_defect < 1e-12);
        let sph = spherical_defect(&round_sphere, &[t, 1.0], &[1], 1e-3).unwrap();
        assert!(sph < 1e-6);
        // Meridians are geodesics.
        let m = distribution_shape_at(&round_sphere, &[t, 1.0], &[0], 1e-3).unwrap();
        assert!(m.totally_geodesic_defect < 1e-9);
    }
}
