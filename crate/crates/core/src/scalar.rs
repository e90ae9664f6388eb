//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All model arithmetic (posterior estimates, conditionals, log densities,
//! test statistics) is written against [`Real`], so the same code runs in
//! `f64` (the default used by the CLI) or `f32`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar usable throughout the model.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from `f64`; constants and literals go through here.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn from_count(n: u32) -> Self {
        Self::from_u32(n).expect("count representable")
    }

    fn from_len(n: usize) -> Self {
        Self::from_usize(n).expect("length representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

// Lanczos approximation, g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma<F: Real>(x: F) -> F {
    if x < F::lit(0.5) {
        // Reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let pi = F::PI();
        return (pi / (pi * x).sin()).ln() - ln_gamma(F::one() - x);
    }
    let x = x - F::one();
    let mut acc = F::lit(LANCZOS_COEF[0]);
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc = acc + F::lit(c) / (x + F::from_len(i));
    }
    let t = x + F::lit(LANCZOS_G + 0.5);
    F::lit(0.5) * (F::lit(2.0) * F::PI()).ln() + (x + F::lit(0.5)) * t.ln() - t + acc.ln()
}

/// `ln B(a, b) = ln Γ(a) + ln Γ(b) - ln Γ(a + b)`.
pub fn ln_beta<F: Real>(a: F, b: F) -> F {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Log normalizer of a symmetric Dirichlet with `dim` components of
/// concentration `c`: `ln Γ(dim·c) - dim·ln Γ(c)`.
pub fn ln_dirichlet_norm<F: Real>(c: F, dim: usize) -> F {
    let d = F::from_len(dim);
    ln_gamma(d * c) - d * ln_gamma(c)
}

/// Regularized incomplete beta function `I_x(a, b)`.
///
/// Continued fraction evaluated with the modified Lentz method, using the
/// symmetry `I_x(a,b) = 1 - I_{1-x}(b,a)` to stay in the fast-converging
/// region.
pub fn beta_inc<F: Real>(a: F, b: F, x: F) -> F {
    if x <= F::zero() {
        return F::zero();
    }
    if x >= F::one() {
        return F::one();
    }
    let ln_front = a * x.ln() + b * (F::one() - x).ln() - ln_beta(a, b);
    let front = ln_front.exp();
    if x < (a + F::one()) / (a + b + F::lit(2.0)) {
        front * beta_cf(a, b, x) / a
    } else {
        F::one() - front * beta_cf(b, a, F::one() - x) / b
    }
}

fn beta_cf<F: Real>(a: F, b: F, x: F) -> F {
    const MAX_ITER: usize = 500;
    let eps = F::epsilon();
    let tiny = F::min_positive_value() / eps;
    let one = F::one();
    let two = F::lit(2.0);

    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let mf = F::from_len(m);
        let m2 = two * mf;
        let aa = mf * (b - mf) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h = h * d * c;
        let aa = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let del = d * c;
        h = h * del;
        if (del - one).abs() <= eps {
            break;
        }
    }
    h
}

/// Two-sided tail probability `P(|T| ≥ |t|)` of a Student-t variable with
/// `df` degrees of freedom.
pub fn student_t_two_sided<F: Real>(t: F, df: F) -> F {
    if t.is_infinite() {
        return F::zero();
    }
    let x = df / (df + t * t);
    beta_inc(df / F::lit(2.0), F::lit(0.5), x).min(F::one()).max(F::zero())
}

/// `ln Σ exp(x_i)` without overflow.
pub fn log_sum_exp<F: Real>(xs: &[F]) -> F {
    let max = xs.iter().copied().fold(F::neg_infinity(), F::max);
    if max == F::neg_infinity() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<F>().ln()
}
