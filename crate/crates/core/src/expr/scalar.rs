use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Numeric type the expression evaluator and the field code are generic over.
///
/// `f64` gives plain values; [`Dual`] carries a gradient alongside and can be
/// nested (`Dual<Dual<f64>>`) to obtain Hessians and Jacobians of fields that
/// are themselves built from gradients.
pub trait Scalar:
    Clone
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn powi(&self, n: i32) -> Self;
    fn powf(&self, e: f64) -> Self;

    fn scale(&self, k: f64) -> Self {
        self.clone() * Self::constant(k)
    }

    fn zero() -> Self {
        Self::constant(0.0)
    }
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
    fn powf(&self, e: f64) -> Self {
        f64::powf(*self, e)
    }
    fn scale(&self, k: f64) -> Self {
        self * k
    }
}

/// Forward-mode dual number with a vector of partial derivatives.
///
/// An empty `eps` stands for an all-zero derivative, so constants never
/// allocate. Vectors of different lengths are combined as if padded by zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: Vec<T>,
}

impl<T: Scalar> Dual<T> {
    pub fn new(re: T, eps: Vec<T>) -> Self {
        Dual { re, eps }
    }

    pub fn constant_of(re: T) -> Self {
        Dual { re, eps: Vec::new() }
    }

    /// The `index`-th of `len` independent variables, at value `re`.
    pub fn variable(re: T, index: usize, len: usize) -> Self {
        let mut eps = vec![T::zero(); len];
        eps[index] = T::constant(1.0);
        Dual { re, eps }
    }

    /// Partial derivative `index`, zero when not stored.
    pub fn partial(&self, index: usize) -> T {
        self.eps.get(index).cloned().unwrap_or_else(T::zero)
    }

    fn chain(&self, re: T, slope: T) -> Self {
        Dual {
            re,
            eps: self.eps.iter().map(|e| e.clone() * slope.clone()).collect(),
        }
    }
}

fn zip_with<T: Scalar>(a: &[T], b: &[T], f: impl Fn(Option<&T>, Option<&T>) -> T) -> Vec<T> {
    let n = a.len().max(b.len());
    (0..n).map(|i| f(a.get(i), b.get(i))).collect()
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let eps = if rhs.eps.is_empty() {
            self.eps
        } else if self.eps.is_empty() {
            rhs.eps
        } else {
            zip_with(&self.eps, &rhs.eps, |a, b| match (a, b) {
                (Some(a), Some(b)) => a.clone() + b.clone(),
                (Some(a), None) => a.clone(),
                (None, Some(b)) => b.clone(),
                (None, None) => T::zero(),
            })
        };
        Dual { re: self.re + rhs.re, eps }
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let eps = if rhs.eps.is_empty() {
            self.eps
        } else {
            zip_with(&self.eps, &rhs.eps, |a, b| match (a, b) {
                (Some(a), Some(b)) => a.clone() - b.clone(),
                (Some(a), None) => a.clone(),
                (None, Some(b)) => -b.clone(),
                (None, None) => T::zero(),
            })
        };
        Dual { re: self.re - rhs.re, eps }
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let eps = if rhs.eps.is_empty() {
            self.eps.iter().map(|a| a.clone() * rhs.re.clone()).collect()
        } else if self.eps.is_empty() {
            rhs.eps.iter().map(|b| self.re.clone() * b.clone()).collect()
        } else {
            zip_with(&self.eps, &rhs.eps, |a, b| match (a, b) {
                (Some(a), Some(b)) => a.clone() * rhs.re.clone() + self.re.clone() * b.clone(),
                (Some(a), None) => a.clone() * rhs.re.clone(),
                (None, Some(b)) => self.re.clone() * b.clone(),
                (None, None) => T::zero(),
            })
        };
        Dual { re: self.re * rhs.re, eps }
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.re.clone() / rhs.re.clone();
        let eps = if rhs.eps.is_empty() {
            self.eps.iter().map(|a| a.clone() / rhs.re.clone()).collect()
        } else {
            zip_with(&self.eps, &rhs.eps, |a, b| {
                let a = a.cloned().unwrap_or_else(T::zero);
                let b = b.cloned().unwrap_or_else(T::zero);
                (a - q.clone() * b) / rhs.re.clone()
            })
        };
        Dual { re: q, eps }
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual {
            re: -self.re,
            eps: self.eps.into_iter().map(|e| -e).collect(),
        }
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn constant(v: f64) -> Self {
        Dual::constant_of(T::constant(v))
    }
    fn value(&self) -> f64 {
        self.re.value()
    }
    fn sin(&self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(&self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn exp(&self) -> Self {
        let e = self.re.exp();
        self.chain(e.clone(), e)
    }
    fn ln(&self) -> Self {
        self.chain(self.re.ln(), T::constant(1.0) / self.re.clone())
    }
    fn sqrt(&self) -> Self {
        let s = self.re.sqrt();
        self.chain(s.clone(), T::constant(0.5) / s)
    }
    fn powi(&self, n: i32) -> Self {
        let slope = if n == 0 {
            T::zero()
        } else {
            self.re.powi(n - 1).scale(n as f64)
        };
        self.chain(self.re.powi(n), slope)
    }
    fn powf(&self, e: f64) -> Self {
        self.chain(self.re.powf(e), self.re.powf(e - 1.0).scale(e))
    }
    fn scale(&self, k: f64) -> Self {
        Dual {
            re: self.re.scale(k),
            eps: self.eps.iter().map(|e| e.scale(k)).collect(),
        }
    }
}

/// Lift a point into dual numbers with every coordinate an independent variable.
pub fn seed<T: Scalar>(x: &[T]) -> Vec<Dual<T>> {
    let n = x.len();
    x.iter()
        .enumerate()
        .map(|(i, v)| Dual::variable(v.clone(), i, n))
        .collect()
}

/// Lift only the first `active` coordinates; the rest become constants.
pub fn seed_prefix<T: Scalar>(x: &[T], active: usize) -> Vec<Dual<T>> {
    x.iter()
        .enumerate()
        .map(|(i, v)| {
            if i < active {
                Dual::variable(v.clone(), i, active)
            } else {
                Dual::constant_of(v.clone())
            }
        })
        .collect()
}
