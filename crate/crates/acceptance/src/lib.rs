//! Small statistics used by the acceptance run.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// Least-squares line through `(x, y)` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub se: f64,
    pub n: usize,
}

impl SlopeFit {
    pub fn t(&self) -> f64 {
        self.slope / self.se
    }

    pub fn df(&self) -> usize {
        self.n - 2
    }
}

/// Ordinary least squares. `None` with fewer than three points or constant x.
pub fn ols(points: &[(f64, f64)]) -> Option<SlopeFit> {
    let n = points.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Some(SlopeFit {
        slope,
        intercept,
        se: (rss / (nf - 2.0) / sxx).sqrt(),
        n,
    })
}

/// Upper 5% point of Student's t with `df` degrees of freedom.
pub fn t_critical_95(df: usize) -> f64 {
    assert!(df > 0, "t distribution needs df >= 1");
    StudentsT::new(0.0, 1.0, df as f64).expect("valid t distribution").inverse_cdf(0.95)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_has_zero_error() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 - 0.5 * i as f64)).collect();
        let fit = ols(&pts).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.intercept - 2.0).abs() < 1e-12);
        assert!(fit.se < 1e-12);
    }

    #[test]
    fn slope_error_matches_hand_computation() {
        // x = 0..4, y = 0, 2, 1, 3: slope 0.8, intercept 0.3, rss 1.8
        let fit = ols(&[(0.0, 0.0), (1.0, 2.0), (2.0, 1.0), (3.0, 3.0)]).unwrap();
        assert!((fit.slope - 0.8).abs() < 1e-12);
        assert!((fit.se - (1.8f64 / 2.0 / 5.0).sqrt()).abs() < 1e-12);
        assert_eq!(fit.df(), 2);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(ols(&[(0.0, 1.0), (1.0, 2.0)]).is_none());
        assert!(ols(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]).is_none());
    }

    #[test]
    fn critical_values_match_tables() {
        assert!((t_critical_95(1) - 6.3138).abs() < 1e-3);
        assert!((t_critical_95(40) - 1.6839).abs() < 1e-3);
        assert!((t_critical_95(60) - 1.6706).abs() < 1e-3);
        assert!((t_critical_95(98) - 1.6606).abs() < 1e-3);
        assert!((t_critical_95(120) - 1.6577).abs() < 1e-3);
        assert!((t_critical_95(100_000) - 1.6449).abs() < 1e-3);
    }
}
