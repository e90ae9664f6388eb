use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{student_t_two_sided, Real};

/// Result of an unequal-variance two-sample t-test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct TTest<F> {
    pub t: F,
    pub df: F,
    pub p: F,
    pub mean_a: F,
    pub mean_b: F,
    pub n_a: usize,
    pub n_b: usize,
    /// Both samples had zero variance; `t` and `p` are set by convention
    /// (0 and 1 for equal means, ±∞ and 0 otherwise).
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct Correlation<F> {
    pub r: F,
    pub p: F,
    pub n: usize,
}

fn mean_var<F: Real>(xs: &[F]) -> (F, F) {
    let n = F::from_len(xs.len());
    let mean = xs.iter().copied().sum::<F>() / n;
    let ss = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<F>();
    (mean, ss / (n - F::one()))
}

/// Welch's t-test with Welch–Satterthwaite degrees of freedom and a
/// two-sided p value.
pub fn welch_t_test<F: Real>(a: &[F], b: &[F]) -> Result<TTest<F>> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Input(format!(
            "t-test needs at least 2 values per group, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::Input("t-test inputs must be finite".into()));
    }
    let (mean_a, var_a) = mean_var(a);
    let (mean_b, var_b) = mean_var(b);
    let (na, nb) = (F::from_len(a.len()), F::from_len(b.len()));
    let (sa, sb) = (var_a / na, var_b / nb);
    let se2 = sa + sb;
    let base = TTest {
        t: F::zero(),
        df: na + nb - F::lit(2.0),
        p: F::one(),
        mean_a,
        mean_b,
        n_a: a.len(),
        n_b: b.len(),
        degenerate: false,
    };
    if se2 == F::zero() {
        let diff = mean_a - mean_b;
        return Ok(if diff == F::zero() {
            TTest {
                degenerate: true,
                ..base
            }
        } else {
            TTest {
                t: F::infinity() * diff.signum(),
                p: F::zero(),
                degenerate: true,
                ..base
            }
        });
    }
    let t = (mean_a - mean_b) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - F::one()) + sb * sb / (nb - F::one()));
    let p = student_t_two_sided(t, df);
    Ok(TTest { t, df, p, ..base })
}

/// Sample Pearson correlation with the two-sided p value of
/// `t = r·sqrt((n-2)/(1-r²))` on `n-2` degrees of freedom.
pub fn pearson<F: Real>(x: &[F], y: &[F]) -> Result<Correlation<F>> {
    if x.len() != y.len() {
        return Err(Error::Input(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Input(format!("correlation needs at least 3 pairs, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Input("correlation inputs must be finite".into()));
    }
    let nf = F::from_len(n);
    let mx = x.iter().copied().sum::<F>() / nf;
    let my = y.iter().copied().sum::<F>() / nf;
    let (mut sxx, mut syy, mut sxy) = (F::zero(), F::zero(), F::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
        sxy = sxy + dx * dy;
    }
    if sxx == F::zero() || syy == F::zero() {
        return Err(Error::Input("correlation undefined for a constant vector".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).max(-F::one()).min(F::one());
    let p = if r.abs() == F::one() {
        F::zero()
    } else {
        let df = nf - F::lit(2.0);
        let t = r * (df / (F::one() - r * r)).sqrt();
        student_t_two_sided(t, df)
    };
    Ok(Correlation { r, p, n })
}
