//! Smooth maps from a parameter box into a flat ambient, with jets.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::exprlang::{parse, Expression};

/// Derivatives of a vector-valued map at one point.
///
/// `d2[i * k + j]` is the second partial derivative along variables `i`,
/// `j`; `d3[(i * k + j) * k + l]` the third.
#[derive(Clone, Debug, PartialEq)]
pub struct MapJet {
    pub value: DVector<f64>,
    pub d1: DMatrix<f64>,
    pub d2: Vec<DVector<f64>>,
    pub d3: Option<Vec<DVector<f64>>>,
}

impl MapJet {
    pub fn zeros(n: usize, k: usize, third: bool) -> MapJet {
        MapJet {
            value: DVector::zeros(n),
            d1: DMatrix::zeros(n, k),
            d2: vec![DVector::zeros(n); k * k],
            d3: third.then(|| vec![DVector::zeros(n); k * k * k]),
        }
    }

    pub fn k(&self) -> usize {
        self.d1.ncols()
    }

    pub fn n(&self) -> usize {
        self.value.len()
    }

    pub fn col(&self, i: usize) -> DVector<f64> {
        self.d1.column(i).into_owned()
    }

    pub fn d2(&self, i: usize, j: usize) -> &DVector<f64> {
        &self.d2[i * self.k() + j]
    }

    pub fn d3(&self, i: usize, j: usize, l: usize) -> Option<&DVector<f64>> {
        let k = self.k();
        self.d3.as_ref().map(|d| &d[(i * k + j) * k + l])
    }
}

/// A map `R^k -> R^N` that can report its jets.
pub trait SmoothMap: Send + Sync {
    fn source_dim(&self) -> usize;
    fn target_dim(&self) -> usize;
    fn variables(&self) -> Vec<String>;
    fn value(&self, p: &[f64]) -> Result<DVector<f64>>;
    /// Value and derivatives up to order two, or three when `third` is set
    /// and [`SmoothMap::has_third`] holds.
    fn jet(&self, p: &[f64], third: bool) -> Result<MapJet>;
    fn has_third(&self) -> bool {
        false
    }
}

impl fmt::Debug for dyn SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "SmoothMap({:?} -> R^{})",
            self.variables(),
            self.target_dim()
        )
    }
}

fn check_len(p: &[f64], k: usize) -> Result<()> {
    if p.len() != k {
        return Err(invalid(format!("expected {k} parameters, got {}", p.len())));
    }
    Ok(())
}

/// Coordinates given by closed-form expressions.
#[derive(Clone, Debug)]
pub struct ExprMap {
    vars: Vec<String>,
    coords: Vec<Expression>,
    /// `derivs[c][i]` is the partial of coordinate `c` along variable `i`.
    derivs: Vec<Vec<Expression>>,
}

impl ExprMap {
    pub fn parse<S: AsRef<str>>(vars: &[S], coords: &[S]) -> Result<ExprMap> {
        let exprs = coords
            .iter()
            .map(|c| parse(c.as_ref(), vars))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(ExprMap::new(
            vars.iter().map(|v| v.as_ref().to_string()).collect(),
            exprs,
        ))
    }

    pub fn new(vars: Vec<String>, coords: Vec<Expression>) -> ExprMap {
        let derivs = coords
            .iter()
            .map(|c| (0..vars.len()).map(|i| c.derivative(i)).collect())
            .collect();
        ExprMap {
            vars,
            coords,
            derivs,
        }
    }

    pub fn coordinates(&self) -> &[Expression] {
        &self.coords
    }
}

impl SmoothMap for ExprMap {
    fn source_dim(&self) -> usize {
        self.vars.len()
    }

    fn target_dim(&self) -> usize {
        self.coords.len()
    }

    fn variables(&self) -> Vec<String> {
        self.vars.clone()
    }

    fn value(&self, p: &[f64]) -> Result<DVector<f64>> {
        check_len(p, self.vars.len())?;
        let vals = self
            .coords
            .iter()
            .map(|c| c.eval(p))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(DVector::from_vec(vals))
    }

    fn jet(&self, p: &[f64], third: bool) -> Result<MapJet> {
        let k = self.vars.len();
        check_len(p, k)?;
        let n = self.coords.len();
        let mut out = MapJet::zeros(n, k, third);
        for (c, expr) in self.coords.iter().enumerate() {
            let j = expr.eval_jet2(p)?;
            out.value[c] = j.value;
            for i in 0..k {
                out.d1[(c, i)] = j.grad[i];
                for l in 0..k {
                    out.d2[i * k + l][c] = j.hess[i * k + l];
                }
            }
            if let Some(d3) = out.d3.as_mut() {
                for i in 0..k {
                    let dj = self.derivs[c][i].eval_jet2(p)?;
                    for a in 0..k {
                        for b in 0..k {
                            d3[(i * k + a) * k + b][c] = dj.hess[a * k + b];
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn has_third(&self) -> bool {
        true
    }
}

/// Cartesian product of maps, with optional trailing zero coordinates.
#[derive(Clone)]
pub struct ProductMap {
    factors: Vec<Arc<dyn SmoothMap>>,
    padding: usize,
}

impl ProductMap {
    pub fn new(factors: Vec<Arc<dyn SmoothMap>>, padding: usize) -> Result<ProductMap> {
        if factors.is_empty() {
            return Err(invalid("product of no factors"));
        }
        Ok(ProductMap { factors, padding })
    }

    pub fn factors(&self) -> &[Arc<dyn SmoothMap>] {
        &self.factors
    }

    /// Parameter offset and target offset of each factor.
    pub fn offsets(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let (mut a, mut b) = (0, 0);
        for f in &self.factors {
            out.push((a, b));
            a += f.source_dim();
            b += f.target_dim();
        }
        out
    }
}

impl SmoothMap for ProductMap {
    fn source_dim(&self) -> usize {
        self.factors.iter().map(|f| f.source_dim()).sum()
    }

    fn target_dim(&self) -> usize {
        self.factors.iter().map(|f| f.target_dim()).sum::<usize>() + self.padding
    }

    fn variables(&self) -> Vec<String> {
        self.factors.iter().flat_map(|f| f.variables()).collect()
    }

    fn value(&self, p: &[f64]) -> Result<DVector<f64>> {
        check_len(p, self.source_dim())?;
        let mut out = DVector::zeros(self.target_dim());
        for (f, (a, b)) in self.factors.iter().zip(self.offsets()) {
            let v = f.value(&p[a..a + f.source_dim()])?;
            out.rows_mut(b, v.len()).copy_from(&v);
        }
        Ok(out)
    }

    fn jet(&self, p: &[f64], third: bool) -> Result<MapJet> {
        let k = self.source_dim();
        check_len(p, k)?;
        let third = third && self.has_third();
        let mut out = MapJet::zeros(self.target_dim(), k, third);
        for (f, (a, b)) in self.factors.iter().zip(self.offsets()) {
            let ka = f.source_dim();
            let j = f.jet(&p[a..a + ka], third)?;
            let n = j.n();
            out.value.rows_mut(b, n).copy_from(&j.value);
            out.d1.view_mut((b, a), (n, ka)).copy_from(&j.d1);
            for i in 0..ka {
                for l in 0..ka {
                    out.d2[(a + i) * k + a + l]
                        .rows_mut(b, n)
                        .copy_from(j.d2(i, l));
                    if let (Some(d3), Some(src)) = (out.d3.as_mut(), j.d3.as_ref()) {
                        for m in 0..ka {
                            d3[((a + i) * k + a + l) * k + a + m]
                                .rows_mut(b, n)
                                .copy_from(&src[(i * ka + l) * ka + m]);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn has_third(&self) -> bool {
        self.factors.iter().all(|f| f.has_third())
    }
}

/// A map with some variables frozen at given values.
#[derive(Clone)]
pub struct Restriction {
    inner: Arc<dyn SmoothMap>,
    fixed: Vec<Option<f64>>,
}

impl Restriction {
    /// `fixed[i]` freezes inner variable `i`; free variables keep their order.
    pub fn new(inner: Arc<dyn SmoothMap>, fixed: Vec<Option<f64>>) -> Result<Restriction> {
        if fixed.len() != inner.source_dim() {
            return Err(invalid("restriction pattern has wrong length"));
        }
        Ok(Restriction { inner, fixed })
    }

    fn free(&self) -> Vec<usize> {
        (0..self.fixed.len())
            .filter(|i| self.fixed[*i].is_none())
            .collect()
    }

    fn full_point(&self, p: &[f64]) -> Result<Vec<f64>> {
        let free = self.free();
        check_len(p, free.len())?;
        let mut it = p.iter();
        Ok(self
            .fixed
            .iter()
            .map(|f| f.unwrap_or_else(|| *it.next().expect("length checked")))
            .collect())
    }
}

impl SmoothMap for Restriction {
    fn source_dim(&self) -> usize {
        self.free().len()
    }

    fn target_dim(&self) -> usize {
        self.inner.target_dim()
    }

    fn variables(&self) -> Vec<String> {
        let names = self.inner.variables();
        self.free().into_iter().map(|i| names[i].clone()).collect()
    }

    fn value(&self, p: &[f64]) -> Result<DVector<f64>> {
        self.inner.value(&self.full_point(p)?)
    }

    fn jet(&self, p: &[f64], third: bool) -> Result<MapJet> {
        let q = self.full_point(p)?;
        let third = third && self.has_third();
        let j = self.inner.jet(&q, third)?;
        let free = self.free();
        let k = free.len();
        let mut out = MapJet::zeros(j.n(), k, third);
        out.value = j.value.clone();
        for (a, &ia) in free.iter().enumerate() {
            out.d1.set_column(a, &j.d1.column(ia));
            for (b, &ib) in free.iter().enumerate() {
                out.d2[a * k + b] = j.d2(ia, ib).clone();
                if let Some(d3) = out.d3.as_mut() {
                    for (c, &ic) in free.iter().enumerate() {
                        d3[(a * k + b) * k + c] = j.d3(ia, ib, ic).expect("requested").clone();
                    }
                }
            }
        }
        Ok(out)
    }

    fn has_third(&self) -> bool {
        self.inner.has_third()
    }
}

/// Variables permuted: new variable `i` is inner variable `order[i]`.
#[derive(Clone)]
pub struct Reordered {
    inner: Arc<dyn SmoothMap>,
    order: Vec<usize>,
}

impl Reordered {
    pub fn new(inner: Arc<dyn SmoothMap>, order: Vec<usize>) -> Result<Reordered> {
        let mut seen = order.clone();
        seen.sort_unstable();
        if seen != (0..inner.source_dim()).collect::<Vec<_>>() {
            return Err(invalid("reordering is not a permutation"));
        }
        Ok(Reordered { inner, order })
    }

    fn inner_point(&self, p: &[f64]) -> Result<Vec<f64>> {
        check_len(p, self.order.len())?;
        let mut q = vec![0.0; p.len()];
        for (i, &o) in self.order.iter().enumerate() {
            q[o] = p[i];
        }
        Ok(q)
    }
}

impl SmoothMap for Reordered {
    fn source_dim(&self) -> usize {
        self.order.len()
    }

    fn target_dim(&self) -> usize {
        self.inner.target_dim()
    }

    fn variables(&self) -> Vec<String> {
        let names = self.inner.variables();
        self.order.iter().map(|&o| names[o].clone()).collect()
    }

    fn value(&self, p: &[f64]) -> Result<DVector<f64>> {
        self.inner.value(&self.inner_point(p)?)
    }

    fn jet(&self, p: &[f64], third: bool) -> Result<MapJet> {
        let third = third && self.has_third();
        let j = self.inner.jet(&self.inner_point(p)?, third)?;
        let k = self.order.len();
        let mut out = MapJet::zeros(j.n(), k, third);
        out.value = j.value.clone();
        for (a, &ia) in self.order.iter().enumerate() {
            out.d1.set_column(a, &j.d1.column(ia));
            for (b, &ib) in self.order.iter().enumerate() {
                out.d2[a * k + b] = j.d2(ia, ib).clone();
                if let Some(d3) = out.d3.as_mut() {
                    for (c, &ic) in self.order.iter().enumerate() {
                        d3[(a * k + b) * k + c] = j.d3(ia, ib, ic).expect("requested").clone();
                    }
                }
            }
        }
        Ok(out)
    }

    fn has_third(&self) -> bool {
        self.inner.has_third()
    }
}

/// `x -> A x + b` applied after an inner map.
#[derive(Clone)]
pub struct AffineImage {
    inner: Arc<dyn SmoothMap>,
    matrix: DMatrix<f64>,
    offset: DVector<f64>,
}

impl AffineImage {
    pub fn new(
        inner: Arc<dyn SmoothMap>,
        matrix: DMatrix<f64>,
        offset: DVector<f64>,
    ) -> Result<AffineImage> {
        if matrix.ncols() != inner.target_dim() || matrix.nrows() != offset.len() {
            return Err(invalid("affine image has inconsistent shapes"));
        }
        Ok(AffineImage {
            inner,
            matrix,
            offset,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }
}

impl SmoothMap for AffineImage {
    fn source_dim(&self) -> usize {
        self.inner.source_dim()
    }

    fn target_dim(&self) -> usize {
        self.offset.len()
    }

    fn variables(&self) -> Vec<String> {
        self.inner.variables()
    }

    fn value(&self, p: &[f64]) -> Result<DVector<f64>> {
        Ok(&self.matrix * self.inner.value(p)? + &self.offset)
    }

    fn jet(&self, p: &[f64], third: bool) -> Result<MapJet> {
        let j = self.inner.jet(p, third && self.has_third())?;
        Ok(MapJet {
            value: &self.matrix * &j.value + &self.offset,
            d1: &self.matrix * &j.d1,
            d2: j.d2.iter().map(|v| &self.matrix * v).collect(),
            d3: j
                .d3
                .as_ref()
                .map(|d| d.iter().map(|v| &self.matrix * v).collect()),
        })
    }

    fn has_third(&self) -> bool {
        self.inner.has_third()
    }
}

/// Finite-difference jets of a value-only map, by central differences.
pub fn fd_jet(
    f: &dyn Fn(&[f64]) -> Result<DVector<f64>>,
    p: &[f64],
    h: f64,
) -> Result<MapJet> {
    let k = p.len();
    let v0 = f(p)?;
    let n = v0.len();
    let mut out = MapJet::zeros(n, k, false);
    let shift = |i: usize, di: f64, j: usize, dj: f64| -> Result<DVector<f64>> {
        let mut q = p.to_vec();
        q[i] += di;
        q[j] += dj;
        f(&q)
    };
    for i in 0..k {
        let plus = shift(i, h, i, 0.0)?;
        let minus = shift(i, -h, i, 0.0)?;
        out.d1.set_column(i, &((&plus - &minus) / (2.0 * h)));
        out.d2[i * k + i] = (&plus - 2.0 * &v0 + &minus) / (h * h);
        for j in i + 1..k {
            let d = (shift(i, h, j, h)? - shift(i, h, j, -h)? - shift(i, -h, j, h)?
                + shift(i, -h, j, -h)?)
                / (4.0 * h * h);
            out.d2[i * k + j] = d.clone();
            out.d2[j * k + i] = d;
        }
    }
    out.value = v0;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_jets_are_block_diagonal() {
        let a: Arc<dyn SmoothMap> = Arc::new(ExprMap::parse(&["u"], &["cos(u)", "sin(u)"]).unwrap());
        let b: Arc<dyn SmoothMap> = Arc::new(ExprMap::parse(&["v"], &["v^3"]).unwrap());
        let pm = ProductMap::new(vec![a, b], 1).unwrap();
        let j = pm.jet(&[0.3, 2.0], true).unwrap();
        assert_eq!(j.n(), 4);
        assert_eq!(j.d1[(2, 1)], 12.0);
        assert_eq!(j.d2(0, 1).norm(), 0.0);
        assert_eq!(j.d3(1, 1, 1).unwrap()[2], 6.0);
        assert!((j.d3(0, 0, 0).unwrap()[0] - 0.3f64.sin()).abs() < 1e-15);
        assert_eq!(j.value[3], 0.0);
    }

    #[test]
    fn restriction_and_reordering() {
        let m: Arc<dyn SmoothMap> =
            Arc::new(ExprMap::parse(&["u", "v", "w"], &["u*v^2*w^3"]).unwrap());
        let r = Restriction::new(m.clone(), vec![None, Some(2.0), None]).unwrap();
        assert_eq!(r.variables(), vec!["u".to_string(), "w".to_string()]);
        let j = r.jet(&[1.0, 1.0], true).unwrap();
        assert_eq!(j.value[0], 4.0);
        assert_eq!(j.d1[(0, 1)], 12.0);
        assert_eq!(j.d3(1, 1, 1).unwrap()[0], 24.0);
        let o = Reordered::new(m, vec![2, 0, 1]).unwrap();
        let j = o.jet(&[3.0, 1.0, 2.0], false).unwrap();
        assert_eq!(j.value[0], 108.0);
        assert_eq!(j.d1[(0, 0)], 108.0);
    }
}
