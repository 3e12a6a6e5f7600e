use serde::Serialize;

use super::config::{ExperimentConfig, QueryMetric, ScalingAxis};
use super::report::ReportRow;
use super::run::run_experiment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPoint {
    /// Swept variable: `d` or `1/eps`.
    pub x: f64,
    /// Mean of the chosen query count over seeds.
    pub queries: f64,
    pub success_rate: f64,
    pub runs: usize,
}

/// Least-squares fit of `log y = intercept + exponent * log x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub intercept: f64,
    /// Residuals in log space, one per point.
    pub residuals: Vec<f64>,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub rows: Vec<ReportRow>,
    pub points: Vec<ScalingPoint>,
    pub fit: PowerFit,
}

pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<PowerFit> {
    if xs.len() != ys.len() {
        return Err(Error::Fit("x and y lengths differ".into()));
    }
    if xs.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Fit("log-log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("swept values are all equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let residuals: Vec<f64> = lx.iter().zip(&ly).map(|(a, b)| b - intercept - exponent * a).collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = ly.iter().map(|b| (b - my).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(PowerFit { exponent, intercept, residuals, r_squared })
}

fn metric(row: &ReportRow, m: QueryMetric) -> f64 {
    match m {
        QueryMetric::Zeroth => row.zeroth_queries as f64,
        QueryMetric::First => row.first_queries as f64,
        QueryMetric::Binary => row.binary_queries as f64,
        QueryMetric::Total => (row.zeroth_queries + row.first_queries) as f64 + row.binary_queries as f64,
    }
}

/// Run the grid along one axis and fit the query-count exponent.
pub fn scaling_study(cfg: &ExperimentConfig) -> Result<ScalingReport> {
    let spec = cfg.scaling.unwrap_or_default();
    let swept: Vec<f64> = match spec.axis {
        ScalingAxis::Dimension if cfg.eps.len() == 1 => cfg.dims.iter().map(|&d| d as f64).collect(),
        ScalingAxis::InverseEps if cfg.dims.len() == 1 => cfg.eps.iter().map(|e| 1.0 / e).collect(),
        _ => return Err(Error::Config("a scaling study sweeps one axis; fix the other to a single value".into())),
    };
    if swept.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 grid points, got {}", swept.len())));
    }
    let rows = run_experiment(cfg)?;
    let points: Vec<ScalingPoint> = swept
        .iter()
        .map(|&x| {
            let group: Vec<&ReportRow> = rows
                .iter()
                .filter(|r| match spec.axis {
                    ScalingAxis::Dimension => r.d as f64 == x,
                    ScalingAxis::InverseEps => 1.0 / r.eps == x,
                })
                .collect();
            let n = group.len().max(1) as f64;
            ScalingPoint {
                x,
                queries: group.iter().map(|r| metric(r, spec.metric)).sum::<f64>() / n,
                success_rate: group.iter().filter(|r| r.success).count() as f64 / n,
                runs: group.len(),
            }
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.queries).collect();
    let fit = fit_power_law(&xs, &ys)?;
    Ok(ScalingReport { rows, points, fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_power() {
        let xs = [2.0, 4.0, 8.0, 16.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        let fit = fit_power_law(&xs, &ys).unwrap();
        assert!((fit.exponent - 1.5).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn too_few_points_is_an_error() {
        assert!(matches!(fit_power_law(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::Fit(_))));
        assert!(matches!(fit_power_law(&[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0]), Err(Error::Fit(_))));
    }

    #[test]
    fn quadratic_first_order_is_flat_in_accuracy() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
instance = "bowl"
dims = [4]
eps = [0.1, 0.01, 0.001]
seeds = [1]
parallelism = 1
scaling = { axis = "inverse_eps", metric = "first" }

[algorithm]
id = "first_order_pgd"
overrides = { max_iters = 200, t_escape = 1 }
"#,
        )
        .unwrap();
        let rep = scaling_study(&cfg).unwrap();
        assert!(rep.points.iter().all(|p| p.success_rate == 1.0));
        assert!(rep.fit.exponent.abs() < 0.3, "{}", rep.fit.exponent);
    }
}
