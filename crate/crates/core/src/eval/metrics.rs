use crate::error::{Error, Result};

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    if a.is_empty() {
        return Err(Error::InsufficientData("empty series".into()));
    }
    Ok(())
}

pub fn mse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_pair(y_true, y_pred)?;
    let sse: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p) * (y - p)).sum();
    Ok(sse / y_true.len() as f64)
}

pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    Ok(mse(y_true, y_pred)?.sqrt())
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least two observations".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Percentage reduction of RMSE obtained by the RSI-aware model:
/// `100 * (without - with) / without`. `None` when `rmse_without <= 0`.
pub fn improvement_pct(rmse_without: f64, rmse_with: f64) -> Option<f64> {
    (rmse_without > 0.0).then(|| 100.0 * (rmse_without - rmse_with) / rmse_without)
}

/// Result of a two-sided sign test against a zero median.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SignTest {
    pub positives: usize,
    pub negatives: usize,
    pub p_value: f64,
}

impl SignTest {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Exact two-sided sign test; zero differences are dropped.
pub fn sign_test(values: &[f64]) -> SignTest {
    let positives = values.iter().filter(|v| **v > 0.0).count();
    let negatives = values.iter().filter(|v| **v < 0.0).count();
    let n = positives + negatives;
    let k = positives.min(negatives);
    // P(X <= k) for X ~ Binomial(n, 1/2).
    let mut coeff = 1.0f64;
    let mut tail = 0.0;
    for i in 0..=k {
        if i > 0 {
            coeff *= (n - i + 1) as f64 / i as f64;
        }
        tail += coeff;
    }
    let p_value = if n == 0 { 1.0 } else { (2.0 * tail / 2f64.powi(n as i32)).min(1.0) };
    SignTest { positives, negatives, p_value }
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        let m = mse(&[0.0; 3], &[1.0, 2.0, 3.0]).unwrap();
        assert!((m - 14.0 / 3.0).abs() < 1e-12);
        assert!((rmse(&[0.0; 3], &[1.0, 2.0, 3.0]).unwrap() - 2.1602).abs() < 1e-4);
    }

    #[test]
    fn mse_errors() {
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mse(&[], &[]).is_err());
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 5.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 7.0]).unwrap();
        assert!((r - 15.0 / 228f64.sqrt()).abs() < 1e-12);
        assert!((r - 0.9934).abs() < 1e-4);
    }

    #[test]
    fn pearson_undefined() {
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn improvement_examples() {
        assert!((improvement_pct(0.030, 0.0166).unwrap() - 44.67).abs() < 0.01);
        assert!((improvement_pct(0.0433, 0.0393).unwrap() - 9.24).abs() < 0.01);
        assert_eq!(improvement_pct(0.02, 0.02), Some(0.0));
        assert_eq!(improvement_pct(0.0, 0.02), None);
    }

    #[test]
    fn sign_test_values() {
        // 9 of 10 positive: p = 2 * 11 / 1024.
        let mut v = vec![1.0; 9];
        v.push(-1.0);
        let t = sign_test(&v);
        assert!((t.p_value - 22.0 / 1024.0).abs() < 1e-15);
        assert!(t.significant(0.05));
        // 8 of 10: p = 2 * 56 / 1024 > 0.05.
        let mut v = vec![1.0; 8];
        v.extend([-1.0, -1.0]);
        assert!(!sign_test(&v).significant(0.05));
        assert_eq!(sign_test(&[1.0, -1.0]).p_value, 1.0);
        assert_eq!(sign_test(&[0.0, 0.0]).p_value, 1.0);
    }
}
