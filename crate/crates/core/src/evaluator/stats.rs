//! Student t-tests with two-sided p-values.

use statrs::function::beta::beta_reg;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("{test}: sample variance is zero, the t statistic is undefined")]
    DegenerateVariance { test: &'static str },
    #[error("{test}: need at least {need} observations per sample, got {got}")]
    TooFew {
        test: &'static str,
        need: usize,
        got: usize,
    },
    #[error("paired test: samples have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("{test}: non-finite observation")]
    NonFinite { test: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TTestKind {
    OneSample {
        mu: f64,
    },
    Paired,
    /// Pooled-variance (Student) two-sample test.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Two-sided tail probability of Student's t with `df` degrees of freedom.
pub fn two_sided_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    (mean, ss / (n - 1.0))
}

fn check(test: &'static str, x: &[f64]) -> Result<(), StatsError> {
    if x.len() < 2 {
        return Err(StatsError::TooFew {
            test,
            need: 2,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite { test });
    }
    Ok(())
}

pub fn one_sample(x: &[f64], mu: f64) -> Result<TTest, StatsError> {
    check("one-sample test", x)?;
    let (mean, var) = mean_var(x);
    if var == 0.0 {
        return Err(StatsError::DegenerateVariance {
            test: "one-sample test",
        });
    }
    let df = (x.len() - 1) as f64;
    let t = (mean - mu) / (var / x.len() as f64).sqrt();
    Ok(TTest {
        t,
        df,
        p: two_sided_p(t, df),
    })
}

pub fn paired(x: &[f64], y: &[f64]) -> Result<TTest, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    one_sample(&diff, 0.0).map_err(|e| match e {
        StatsError::DegenerateVariance { .. } => StatsError::DegenerateVariance { test: "paired test" },
        StatsError::TooFew { need, got, .. } => StatsError::TooFew {
            test: "paired test",
            need,
            got,
        },
        other => other,
    })
}

pub fn independent(x: &[f64], y: &[f64]) -> Result<TTest, StatsError> {
    check("independent test", x)?;
    check("independent test", y)?;
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (mx, vx) = mean_var(x);
    let (my, vy) = mean_var(y);
    let df = nx + ny - 2.0;
    let pooled = ((nx - 1.0) * vx + (ny - 1.0) * vy) / df;
    if pooled == 0.0 {
        return Err(StatsError::DegenerateVariance {
            test: "independent test",
        });
    }
    let t = (mx - my) / (pooled * (1.0 / nx + 1.0 / ny)).sqrt();
    Ok(TTest {
        t,
        df,
        p: two_sided_p(t, df),
    })
}

/// `y` is ignored for the one-sample test.
pub fn t_test(kind: TTestKind, x: &[f64], y: &[f64]) -> Result<TTest, StatsError> {
    match kind {
        TTestKind::OneSample { mu } => one_sample(x, mu),
        TTestKind::Paired => paired(x, y),
        TTestKind::Independent => independent(x, y),
    }
}
