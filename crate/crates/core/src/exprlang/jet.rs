//! Second-order jets: value, gradient and symmetric hessian over a fixed
//! set of variables.

/// Value, gradient and hessian of a scalar function at one point.
///
/// The hessian is stored row-major as an `n * n` slice and is kept exactly
/// symmetric by every operation.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

impl Jet2 {
    pub fn constant(value: f64, n: usize) -> Self {
        Jet2 {
            value,
            grad: vec![0.0; n],
            hess: vec![0.0; n * n],
        }
    }

    pub fn variable(value: f64, index: usize, n: usize) -> Self {
        let mut j = Jet2::constant(value, n);
        j.grad[index] = 1.0;
        j
    }

    pub fn n(&self) -> usize {
        self.grad.len()
    }

    pub fn hess_at(&self, i: usize, j: usize) -> f64 {
        self.hess[i * self.n() + j]
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad.iter().all(|g| g.is_finite())
            && self.hess.iter().all(|h| h.is_finite())
    }

    /// Composition with a scalar function given its value and first two
    /// derivatives at `self.value`.
    pub fn chain(&self, f0: f64, f1: f64, f2: f64) -> Jet2 {
        let n = self.n();
        let grad = self.grad.iter().map(|g| f1 * g).collect();
        let mut hess = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let h = f1 * self.hess[i * n + j] + f2 * self.grad[i] * self.grad[j];
                hess[i * n + j] = h;
                hess[j * n + i] = h;
            }
        }
        Jet2 {
            value: f0,
            grad,
            hess,
        }
    }

    pub fn neg(&self) -> Jet2 {
        Jet2 {
            value: -self.value,
            grad: self.grad.iter().map(|g| -g).collect(),
            hess: self.hess.iter().map(|h| -h).collect(),
        }
    }

    pub fn add(&self, o: &Jet2) -> Jet2 {
        Jet2 {
            value: self.value + o.value,
            grad: zip_with(&self.grad, &o.grad, |a, b| a + b),
            hess: zip_with(&self.hess, &o.hess, |a, b| a + b),
        }
    }

    pub fn sub(&self, o: &Jet2) -> Jet2 {
        Jet2 {
            value: self.value - o.value,
            grad: zip_with(&self.grad, &o.grad, |a, b| a - b),
            hess: zip_with(&self.hess, &o.hess, |a, b| a - b),
        }
    }

    pub fn mul(&self, o: &Jet2) -> Jet2 {
        let n = self.n();
        let (a, b) = (self.value, o.value);
        let grad = zip_with(&self.grad, &o.grad, |ga, gb| a * gb + b * ga);
        let mut hess = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let k = i * n + j;
                let h = a * o.hess[k]
                    + b * self.hess[k]
                    + self.grad[i] * o.grad[j]
                    + self.grad[j] * o.grad[i];
                hess[k] = h;
                hess[j * n + i] = h;
            }
        }
        Jet2 {
            value: a * b,
            grad,
            hess,
        }
    }

    pub fn recip(&self) -> Jet2 {
        let v = self.value;
        self.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }

    pub fn div(&self, o: &Jet2) -> Jet2 {
        self.mul(&o.recip())
    }
}

fn zip_with(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_on_monomial() {
        // x^2 y at (3, 2): grad (12, 9), hess [[4, 6], [6, 0]]
        let x = Jet2::variable(3.0, 0, 2);
        let y = Jet2::variable(2.0, 1, 2);
        let j = x.mul(&x).mul(&y);
        assert_eq!(j.value, 18.0);
        assert_eq!(j.grad, vec![12.0, 9.0]);
        assert_eq!(j.hess, vec![4.0, 6.0, 6.0, 0.0]);
    }

    #[test]
    fn quotient_matches_closed_form() {
        // x / y at (1, 2): grad (1/2, -1/4), hess [[0, -1/4], [-1/4, 1/4]]
        let x = Jet2::variable(1.0, 0, 2);
        let y = Jet2::variable(2.0, 1, 2);
        let j = x.div(&y);
        assert!((j.value - 0.5).abs() < 1e-15);
        assert!((j.grad[0] - 0.5).abs() < 1e-15);
        assert!((j.grad[1] + 0.25).abs() < 1e-15);
        assert!((j.hess_at(0, 1) + 0.25).abs() < 1e-15);
        assert!((j.hess_at(1, 1) - 0.25).abs() < 1e-15);
        assert_eq!(j.hess_at(0, 0), 0.0);
    }
}
