//! Exact and certified real-root counts used as oracles for the Khovanskii
//! bound.

use super::LabError;
use num_rational::BigRational;
use num_traits::{Num, Signed, Zero};
use std::ops::{Add, Mul, Neg, Sub};

/// Dense univariate polynomial, coefficients from the constant term up,
/// with no trailing zeros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial<T> {
    coeffs: Vec<T>,
}

impl<T: Clone + Num + Signed> Polynomial<T> {
    pub fn new(mut coeffs: Vec<T>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        Polynomial { coeffs }
    }

    pub fn x() -> Self {
        Polynomial::new(vec![T::zero(), T::one()])
    }

    pub fn constant(c: T) -> Self {
        Polynomial::new(vec![c])
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    fn lead(&self) -> Option<&T> {
        self.coeffs.last()
    }

    pub fn eval(&self, x: &T) -> T {
        self.coeffs.iter().rev().fold(T::zero(), |acc, c| acc * x.clone() + c.clone())
    }

    pub fn derivative(&self) -> Self {
        let mut k = T::zero();
        let coeffs = self
            .coeffs
            .iter()
            .skip(1)
            .map(|c| {
                k = k.clone() + T::one();
                c.clone() * k.clone()
            })
            .collect();
        Polynomial::new(coeffs)
    }

    pub fn scale(&self, c: &T) -> Self {
        Polynomial::new(self.coeffs.iter().map(|a| a.clone() * c.clone()).collect())
    }

    /// Remainder of division by a nonzero `divisor`.
    pub fn rem(&self, divisor: &Self) -> Self {
        let db = divisor.degree().expect("nonzero divisor");
        let lb = divisor.lead().expect("nonzero divisor").clone();
        let mut r = self.coeffs.clone();
        while r.len() > db && !r.is_empty() {
            let shift = r.len() - 1 - db;
            let q = r[r.len() - 1].clone() / lb.clone();
            for (i, c) in divisor.coeffs.iter().enumerate() {
                r[shift + i] = r[shift + i].clone() - q.clone() * c.clone();
            }
            r.pop();
            while r.last().is_some_and(Zero::is_zero) {
                r.pop();
            }
        }
        Polynomial::new(r)
    }

    /// `self(inner(x))`.
    pub fn compose(&self, inner: &Self) -> Self {
        self.coeffs
            .iter()
            .rev()
            .fold(Polynomial::new(Vec::new()), |acc, c| &(&acc * inner) + &Polynomial::constant(c.clone()))
    }

    /// Sturm sequence `p, p', -rem(p, p'), ...`.
    pub fn sturm_sequence(&self) -> Vec<Self> {
        let mut seq = vec![self.clone(), self.derivative()];
        loop {
            let n = seq.len();
            if seq[n - 1].is_zero() {
                seq.pop();
                break;
            }
            let r = seq[n - 2].rem(&seq[n - 1]);
            if r.is_zero() {
                break;
            }
            seq.push(-r);
        }
        seq
    }

    /// Number of distinct real roots.
    pub fn count_real_roots(&self) -> Result<usize, LabError> {
        if self.is_zero() {
            return Err(LabError::ZeroPolynomial);
        }
        let seq = self.sturm_sequence();
        let at_pos: Vec<bool> = seq.iter().map(|p| p.lead().expect("nonzero").is_positive()).collect();
        let at_neg: Vec<bool> = seq
            .iter()
            .map(|p| p.lead().expect("nonzero").is_positive() == (p.degree().expect("nonzero") % 2 == 0))
            .collect();
        let variations = |s: &[bool]| s.windows(2).filter(|w| w[0] != w[1]).count();
        Ok(variations(&at_neg) - variations(&at_pos))
    }
}

impl<T: Clone + Num + Signed> Add for &Polynomial<T> {
    type Output = Polynomial<T>;

    fn add(self, other: Self) -> Polynomial<T> {
        let n = self.coeffs.len().max(other.coeffs.len());
        let get = |p: &Polynomial<T>, i: usize| p.coeffs.get(i).cloned().unwrap_or_else(T::zero);
        Polynomial::new((0..n).map(|i| get(self, i) + get(other, i)).collect())
    }
}

impl<T: Clone + Num + Signed> Sub for &Polynomial<T> {
    type Output = Polynomial<T>;

    fn sub(self, other: Self) -> Polynomial<T> {
        self + &(-other.clone())
    }
}

impl<T: Clone + Num + Signed> Mul for &Polynomial<T> {
    type Output = Polynomial<T>;

    fn mul(self, other: Self) -> Polynomial<T> {
        if self.is_zero() || other.is_zero() {
            return Polynomial::new(Vec::new());
        }
        let mut out = vec![T::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] = out[i + j].clone() + a.clone() * b.clone();
            }
        }
        Polynomial::new(out)
    }
}

impl<T: Clone + Num + Signed> Neg for Polynomial<T> {
    type Output = Polynomial<T>;

    fn neg(self) -> Polynomial<T> {
        Polynomial::new(self.coeffs.into_iter().map(|c| -c).collect())
    }
}

/// Distinct real roots of the polynomial with the given coefficients,
/// constant term first.
pub fn poly_roots_count(coeffs: &[BigRational]) -> Result<usize, LabError> {
    Polynomial::new(coeffs.to_vec()).count_real_roots()
}

/// Real intersections of the parabolas `y = a x^2 + b x + c` and
/// `x = d y^2 + e y + f`, counted as distinct real roots of the quartic in
/// `y` obtained by substitution.
pub fn conic_pair_intersections(coef: [&BigRational; 6]) -> Result<usize, LabError> {
    let [a, b, c, d, e, f] = coef.map(Clone::clone);
    let x_of_y = Polynomial::new(vec![f, e, d]);
    let y_of_x = Polynomial::new(vec![c, b, a]);
    let quartic = &y_of_x.compose(&x_of_y) - &Polynomial::x();
    quartic.count_real_roots()
}

/// Isolates the real zeros of `a + b x + c e^x` in `[lo, hi]`.
///
/// Since the derivative `b + c e^x` is monotone, its sign at the two ends of
/// an interval decides whether `f` is monotone there; other intervals are
/// bisected. Each returned interval holds exactly one zero, degenerate
/// intervals marking zeros hit exactly.
pub fn exp_linear_roots(a: f64, b: f64, c: f64, lo: f64, hi: f64) -> Result<Vec<(f64, f64)>, LabError> {
    let f = |x: f64| a + b * x + c * x.exp();
    let df = |x: f64| b + c * x.exp();
    let mut out = Vec::new();
    let mut stack = vec![(lo, hi, 0u32)];
    while let Some((l, u, depth)) = stack.pop() {
        let (fl, fu) = (f(l), f(u));
        let (dl, du) = (df(l), df(u));
        if dl == 0.0 && du == 0.0 {
            if fl == 0.0 {
                return Err(LabError::ZeroPolynomial);
            }
            continue;
        }
        let monotone = dl * du >= 0.0;
        let tiny = u - l <= 1e-12 * l.abs().max(u.abs()).max(1.0) || depth >= 200;
        if monotone || tiny {
            if fl == 0.0 {
                out.push((l, l));
            }
            if fu == 0.0 {
                out.push((u, u));
            }
            if fl * fu < 0.0 {
                out.push((l, u));
            } else if tiny && !monotone && fl != 0.0 && fu != 0.0 && f(l + (u - l) / 2.0) == 0.0 {
                let m = l + (u - l) / 2.0;
                out.push((m, m));
            }
            continue;
        }
        let m = l + (u - l) / 2.0;
        stack.push((m, u, depth + 1));
        stack.push((l, m, depth + 1));
    }
    out.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    out.dedup();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn q(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    fn poly(c: &[i64]) -> Polynomial<BigRational> {
        Polynomial::new(c.iter().map(|&v| q(v)).collect())
    }

    #[test]
    fn root_counts() {
        assert_eq!(poly(&[-1, 0, 1]).count_real_roots(), Ok(2));
        assert_eq!(poly(&[1, 0, 1]).count_real_roots(), Ok(0));
        assert_eq!(poly(&[0, 0, 1]).count_real_roots(), Ok(1));
        assert_eq!(poly(&[0, -1, 0, 1]).count_real_roots(), Ok(3));
        assert_eq!(poly(&[5]).count_real_roots(), Ok(0));
        assert_eq!(poly(&[0]).count_real_roots(), Err(LabError::ZeroPolynomial));
        // (x-1)^2 (x+2)
        assert_eq!(poly(&[2, -3, 0, 1]).count_real_roots(), Ok(2));
    }

    #[test]
    fn arithmetic() {
        let p = poly(&[1, 2, 3]);
        assert_eq!(p.eval(&q(2)), q(17));
        assert_eq!(p.derivative(), poly(&[2, 6]));
        assert_eq!(poly(&[0, 0, 1]).compose(&poly(&[1, 1])), poly(&[1, 2, 1]));
        assert_eq!(poly(&[-1, 0, 1]).rem(&poly(&[-1, 1])), poly(&[]));
    }

    #[test]
    fn conic_pairs() {
        // y = x^2 - 1 and x = y^2 - 1 meet in four points.
        let one = q(1);
        let (z, m) = (q(0), q(-1));
        assert_eq!(conic_pair_intersections([&one, &z, &m, &one, &z, &m]), Ok(4));
        // y = x^2 + 1 and x = y^2 + 1 do not meet.
        assert_eq!(conic_pair_intersections([&one, &z, &one, &one, &z, &one]), Ok(0));
    }

    #[test]
    fn exp_linear() {
        // e^x - 2 has the single zero ln 2.
        let r = exp_linear_roots(-2.0, 0.0, 1.0, -5.0, 5.0).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r[0].0 <= 2f64.ln() && 2f64.ln() <= r[0].1);
        // e^x - 3x has two zeros.
        assert_eq!(exp_linear_roots(0.0, -3.0, 1.0, -5.0, 5.0).unwrap().len(), 2);
        assert_eq!(exp_linear_roots(1.0, 1.0, 0.0, -3.0, 1.0).unwrap(), vec![(-3.0, 1.0)]);
        // 1 + x - e^x touches zero at 0, found on a bisection midpoint.
        assert_eq!(exp_linear_roots(1.0, 1.0, -1.0, -2.0, 2.0).unwrap(), vec![(0.0, 0.0)]);
        assert!(exp_linear_roots(0.0, 0.0, 0.0, -1.0, 1.0).is_err());
    }
}
