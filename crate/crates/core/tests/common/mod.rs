//! Exact-arithmetic oracles shared by the integration suites.
//!
//! Every f64 is a dyadic rational, so sums of products of inputs are exact
//! as `mantissa · 2^exp` with a big-integer mantissa. Normal equations are
//! then solved in `BigRational`. Nothing here touches the library's
//! summation or QR code.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, ToPrimitive, Zero};

/// Exact dyadic number `mant · 2^exp`.
#[derive(Clone, Debug)]
pub struct Dyadic {
    mant: BigInt,
    exp: i64,
}

impl Dyadic {
    pub fn zero() -> Self {
        Self {
            mant: BigInt::zero(),
            exp: 0,
        }
    }

    pub fn from_f64(v: f64) -> Self {
        assert!(v.is_finite());
        let (m, e, s) = v.integer_decode();
        Self {
            mant: BigInt::from(m) * BigInt::from(s),
            exp: e as i64,
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self {
            mant: &self.mant * &o.mant,
            exp: self.exp + o.exp,
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        if self.mant.is_zero() {
            return o.clone();
        }
        if o.mant.is_zero() {
            return self.clone();
        }
        let exp = self.exp.min(o.exp);
        let a = &self.mant << (self.exp - exp) as usize;
        let b = &o.mant << (o.exp - exp) as usize;
        Self { mant: a + b, exp }
    }

    pub fn neg(&self) -> Self {
        Self {
            mant: -&self.mant,
            exp: self.exp,
        }
    }

    pub fn to_rational(&self) -> BigRational {
        let one = BigInt::from(1);
        if self.exp >= 0 {
            BigRational::from_integer(&self.mant << self.exp as usize)
        } else {
            BigRational::new(self.mant.clone(), one << (-self.exp) as usize)
        }
    }
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("finite rational")
}

/// Exact Σ a_i b_i, rounded once.
pub fn exact_dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let s = a.iter().zip(b).fold(Dyadic::zero(), |acc, (x, y)| {
        acc.add(&Dyadic::from_f64(*x).mul(&Dyadic::from_f64(*y)))
    });
    to_f64(&s.to_rational())
}

/// Exact Σ c_i (changed_i − initial_i), rounded once.
pub fn exact_dot_delta(c: &[f64], initial: &[f64], changed: &[f64]) -> f64 {
    let s = (0..c.len()).fold(Dyadic::zero(), |acc, i| {
        let d = Dyadic::from_f64(changed[i]).add(&Dyadic::from_f64(initial[i]).neg());
        acc.add(&Dyadic::from_f64(c[i]).mul(&d))
    });
    to_f64(&s.to_rational())
}

/// Exact weighted normal-equations solution `(XᵀQX)⁻¹ XᵀQz` for a
/// row-major design `x` (rows include the intercept).
pub fn exact_wls_rational(x: &[Vec<f64>], z: &[f64], q: &[f64]) -> Vec<BigRational> {
    let n = x[0].len();
    let mut a = vec![vec![Dyadic::zero(); n]; n];
    let mut rhs = vec![Dyadic::zero(); n];
    for j in 0..x.len() {
        let qj = Dyadic::from_f64(q[j]);
        let row: Vec<Dyadic> = x[j].iter().map(|v| Dyadic::from_f64(*v)).collect();
        let zj = Dyadic::from_f64(z[j]);
        for i in 0..n {
            let qi = qj.mul(&row[i]);
            rhs[i] = rhs[i].add(&qi.mul(&zj));
            for k in 0..n {
                a[i][k] = a[i][k].add(&qi.mul(&row[k]));
            }
        }
    }
    // Every entry is dyadic: bring all to one power of two, leaving an
    // integer system with the same solution.
    let min_exp = a
        .iter()
        .flatten()
        .chain(&rhs)
        .filter(|d| !d.mant.is_zero())
        .map(|d| d.exp)
        .min()
        .unwrap_or(0);
    let scaled = |d: &Dyadic| -> BigInt {
        if d.mant.is_zero() {
            BigInt::zero()
        } else {
            &d.mant << (d.exp - min_exp) as usize
        }
    };
    let mut m: Vec<Vec<BigInt>> = a
        .iter()
        .zip(&rhs)
        .map(|(row, r)| row.iter().chain(std::iter::once(r)).map(scaled).collect())
        .collect();
    // Fraction-free (Bareiss) elimination keeps every division exact.
    let mut prev = BigInt::from(1);
    for k in 0..n {
        let pivot = (k..n)
            .find(|&r| !m[r][k].is_zero())
            .expect("oracle requires a nonsingular system");
        m.swap(k, pivot);
        for i in k + 1..n {
            for j in k + 1..=n {
                let v = (&m[i][j] * &m[k][k] - &m[i][k] * &m[k][j]) / &prev;
                m[i][j] = v;
            }
            m[i][k] = BigInt::zero();
        }
        prev = m[k][k].clone();
    }
    let mut solution = vec![BigRational::zero(); n];
    for k in (0..n).rev() {
        let mut acc = BigRational::from_integer(m[k][n].clone());
        for j in k + 1..n {
            acc -= &solution[j] * BigRational::from_integer(m[k][j].clone());
        }
        solution[k] = acc / BigRational::from_integer(m[k][k].clone());
    }
    solution
}

pub fn exact_wls(x: &[Vec<f64>], z: &[f64], q: &[f64]) -> Vec<f64> {
    exact_wls_rational(x, z, q).iter().map(to_f64).collect()
}

/// Exact Σ q_j v_j.
pub fn exact_mean(v: &[f64], q: &[f64]) -> f64 {
    exact_dot(v, q)
}

/// Exact weighted column means of a row-major design.
pub fn exact_column_means(x: &[Vec<f64>], q: &[f64]) -> Vec<f64> {
    (0..x[0].len())
        .map(|i| exact_dot(&x.iter().map(|r| r[i]).collect::<Vec<_>>(), q))
        .collect()
}

/// Rows of a design matrix as owned vectors.
pub fn rows_of(x: &deltamean::regression::DesignMatrix) -> Vec<Vec<f64>> {
    (0..x.rows()).map(|j| x.row(j).to_vec()).collect()
}

/// `|a − b| / max(|a|, |b|, 1)`.
pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
