//! Degrees of freedom and Cp/AIC/BIC model selection along a lasso path.
//!
//! The number of nonzero coefficients is an unbiased estimate of the lasso's
//! degrees of freedom at every λ. Plugging it into Cp, AIC or BIC gives a
//! criterion that is piecewise smooth in λ: inside a segment the residual sum
//! of squares strictly increases with λ while the count is constant, so the
//! minimum over all λ ≥ 0 is always attained at a transition point. That is
//! why [`select_optimal`] only scans the transition points.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::Array1;

use crate::dataset::StandardizedDataset;
use crate::error::{Error, Result};
use crate::linalg::CholFactor;
use crate::path::{FitResult, LassoPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    Cp,
    Aic,
    Bic,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Cp, Criterion::Aic, Criterion::Bic];

    pub fn evaluate(self, rss: f64, df: usize, n: usize, sigma2: f64) -> Result<f64> {
        match self {
            Criterion::Cp => cp(rss, df, n, sigma2),
            Criterion::Aic => aic(rss, df, n, sigma2),
            Criterion::Bic => bic(rss, df, n, sigma2),
        }
    }

    /// Per-df penalty weight on the `rss/(nσ²)` scale: 2 for AIC, `ln n` for BIC.
    pub fn weight(self, n: usize) -> f64 {
        match self {
            Criterion::Cp | Criterion::Aic => 2.0,
            Criterion::Bic => (n as f64).ln(),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Cp => "cp",
            Criterion::Aic => "aic",
            Criterion::Bic => "bic",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cp" => Ok(Criterion::Cp),
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            other => Err(Error::InvalidInput(format!("unknown criterion {other:?}"))),
        }
    }
}

pub fn df_hat(fit: &FitResult) -> usize {
    fit.beta.iter().filter(|b| **b != 0.0).count()
}

/// Residual variance of the full least-squares fit, `‖y − Xβ̂_ols‖² / (n − p)`.
///
/// Returns zero (with a warning) when `y` lies in the column space of `X`.
pub fn estimate_sigma2(ds: &StandardizedDataset) -> Result<f64> {
    let (n, p) = (ds.n(), ds.p());
    if n <= p {
        return Err(Error::InvalidInput(format!(
            "sigma^2 needs n > p residual degrees of freedom (n = {n}, p = {p})"
        )));
    }
    let beta = ols(ds)?;
    let resid = &ds.y - &ds.x.dot(&beta);
    let sigma2 = resid.dot(&resid) / (n - p) as f64;
    if sigma2 <= 1e-24 * ds.y.dot(&ds.y).max(f64::MIN_POSITIVE) {
        log::warn!("response lies in the column space of X: sigma^2 = 0, Cp is degenerate");
        return Ok(0.0);
    }
    Ok(sigma2)
}

/// Least-squares coefficients via the normal equations.
pub fn ols(ds: &StandardizedDataset) -> Result<Array1<f64>> {
    let gram = ds.x.t().dot(&ds.x);
    let chol = CholFactor::factor(gram.view())?;
    Ok(chol.solve(ds.x.t().dot(&ds.y).view()))
}

fn check_args(n: usize, sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidInput(format!("sigma^2 must be positive, got {sigma2}")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    Ok(())
}

/// `rss/n + 2·df·σ²/n`.
pub fn cp(rss: f64, df: usize, n: usize, sigma2: f64) -> Result<f64> {
    check_args(n, sigma2)?;
    let n = n as f64;
    Ok(rss / n + 2.0 * df as f64 * sigma2 / n)
}

/// `rss/(nσ²) + 2·df/n`; equals `cp / σ²`.
pub fn aic(rss: f64, df: usize, n: usize, sigma2: f64) -> Result<f64> {
    check_args(n, sigma2)?;
    let n = n as f64;
    Ok(rss / (n * sigma2) + 2.0 * df as f64 / n)
}

/// `rss/(nσ²) + ln(n)·df/n`.
pub fn bic(rss: f64, df: usize, n: usize, sigma2: f64) -> Result<f64> {
    check_args(n, sigma2)?;
    let nf = n as f64;
    Ok(rss / (nf * sigma2) + nf.ln() * df as f64 / nf)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRow {
    pub m: usize,
    pub lambda: f64,
    pub rss: f64,
    pub df_hat: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub criterion: Criterion,
    pub sigma2: f64,
    pub rows: Vec<SelectionRow>,
    pub chosen_m: usize,
    pub chosen_lambda: f64,
    pub chosen_beta: Array1<f64>,
}

impl SelectionReport {
    pub fn chosen_df(&self) -> usize {
        self.rows[self.chosen_m].df_hat
    }
}

/// Evaluates `criterion` at every transition point (λ_K = 0 included) and
/// returns the minimizer, preferring the larger λ on exact ties.
pub fn select_optimal(path: &LassoPath, criterion: Criterion, sigma2: f64) -> Result<SelectionReport> {
    let n = path.design().n();
    check_args(n, sigma2)?;
    if path.n_transitions() == 0 {
        return Err(Error::InvalidInput("empty path".into()));
    }
    let mut rows: Vec<SelectionRow> = Vec::with_capacity(path.n_transitions());
    let mut chosen = 0;
    for m in 0..path.n_transitions() {
        let fit = path.fit_at_transition(m);
        let value = criterion.evaluate(fit.rss, fit.df_hat, n, sigma2)?;
        // Strict comparison keeps the earliest (largest λ) row on ties.
        if m == 0 || value < rows[chosen].value {
            chosen = m;
        }
        rows.push(SelectionRow {
            m,
            lambda: fit.lambda,
            rss: fit.rss,
            df_hat: fit.df_hat,
            value,
        });
    }
    Ok(SelectionReport {
        criterion,
        sigma2,
        chosen_lambda: rows[chosen].lambda,
        chosen_beta: path.knot(chosen).clone(),
        rows,
        chosen_m: chosen,
    })
}

/// Criterion values on an arbitrary λ grid.
pub fn criterion_curve(
    path: &LassoPath,
    criterion: Criterion,
    sigma2: f64,
    lambdas: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let n = path.design().n();
    lambdas
        .iter()
        .map(|&lambda| {
            if !(lambda >= 0.0) {
                return Err(Error::InvalidInput(format!("grid value {lambda} is negative")));
            }
            let fit = path.fit_at(lambda)?;
            Ok((lambda, criterion.evaluate(fit.rss, fit.df_hat, n, sigma2)?))
        })
        .collect()
}

/// Writes `m,lambda,rss,df_hat,cp,aic,bic,cp_min,aic_min,bic_min`, one row per
/// transition point; each `*_min` column holds 1 on that criterion's argmin.
pub fn write_selection_csv<W: Write>(path: &LassoPath, sigma2: f64, out: W) -> Result<()> {
    let reports = Criterion::ALL
        .iter()
        .map(|&c| select_optimal(path, c, sigma2))
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "m", "lambda", "rss", "df_hat", "cp", "aic", "bic", "cp_min", "aic_min", "bic_min",
    ])?;
    for (m, row) in reports[0].rows.iter().enumerate() {
        let mut record = vec![
            m.to_string(),
            row.lambda.to_string(),
            row.rss.to_string(),
            row.df_hat.to_string(),
        ];
        record.extend(reports.iter().map(|r| r.rows[m].value.to_string()));
        record.extend(
            reports
                .iter()
                .map(|r| u8::from(r.chosen_m == m).to_string()),
        );
        w.write_record(&record)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{diabetes, standardize, RawDataset};
    use crate::path::compute_path;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};

    #[test]
    fn criterion_arithmetic() {
        assert_abs_diff_eq!(cp(10.0, 0, 10, 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(cp(80.0, 5, 100, 1.0).unwrap(), 0.9, epsilon = 1e-15);
        let step = cp(80.0, 6, 100, 1.5).unwrap() - cp(80.0, 5, 100, 1.5).unwrap();
        assert_abs_diff_eq!(step, 2.0 * 1.5 / 100.0, epsilon = 1e-15);

        assert_abs_diff_eq!(aic(10.0, 0, 10, 2.0).unwrap(), 0.5);
        let step = aic(3.0, 4, 10, 2.0).unwrap() - aic(3.0, 3, 10, 2.0).unwrap();
        assert_abs_diff_eq!(step, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(
            aic(7.0, 3, 20, 2.5).unwrap(),
            cp(7.0, 3, 20, 2.5).unwrap() / 2.5,
            epsilon = 1e-15
        );

        assert_abs_diff_eq!(bic(10.0, 2, 10, 1.0).unwrap(), 1.0 + 2.0 * 10f64.ln() / 10.0);
        assert_abs_diff_eq!(bic(10.0, 2, 10, 1.0).unwrap(), 1.4605170185988092, epsilon = 1e-12);
        for n in [3, 50, 1000] {
            assert_eq!(bic(4.0, 0, n, 2.0).unwrap(), 4.0 / (n as f64 * 2.0));
        }
        assert!(Criterion::Bic.weight(8) > Criterion::Aic.weight(8));
        assert!(Criterion::Bic.weight(7) < Criterion::Aic.weight(7));
    }

    #[test]
    fn invalid_sigma2() {
        assert!(cp(1.0, 1, 10, 0.0).is_err());
        assert!(aic(1.0, 1, 10, -1.0).is_err());
        assert!(bic(1.0, 1, 10, f64::NAN).is_err());
    }

    #[test]
    fn criterion_parsing() {
        assert_eq!("BIC".parse::<Criterion>().unwrap(), Criterion::Bic);
        assert!("gcv".parse::<Criterion>().is_err());
        assert_eq!(Criterion::Cp.to_string(), "cp");
    }

    #[test]
    fn sigma2_formula_single_column() {
        let raw = RawDataset::new(
            array![[1.0], [0.0], [0.0]],
            array![3.0, 1.0, -1.0],
            vec!["x".into()],
        )
        .unwrap();
        let ds = standardize(&raw).unwrap();
        let beta = ols(&ds).unwrap();
        let resid = &ds.y - &ds.x.dot(&beta);
        let r = resid.dot(&resid);
        assert_abs_diff_eq!(estimate_sigma2(&ds).unwrap(), r / 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn sigma2_zero_residual_and_too_few_rows() {
        let x = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 0.5]];
        let y = x.dot(&array![2.0, -1.0]);
        let ds = standardize(&RawDataset::new(x, y, vec!["a".into(), "b".into()]).unwrap()).unwrap();
        assert_eq!(estimate_sigma2(&ds).unwrap(), 0.0);

        let x = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let ds = standardize(&RawDataset::new(x, array![1.0, 2.0], vec!["a".into(), "b".into()]).unwrap()).unwrap();
        assert!(estimate_sigma2(&ds).is_err());
    }

    #[test]
    fn sigma2_matches_normal_equations() {
        let ds = standardize(&diabetes()).unwrap();
        // Independent route: Gaussian elimination on the normal equations.
        let mut g = ds.x.t().dot(&ds.x);
        let mut b = ds.x.t().dot(&ds.y);
        let p = ds.p();
        for c in 0..p {
            for r in (c + 1)..p {
                let f = g[[r, c]] / g[[c, c]];
                for k in c..p {
                    g[[r, k]] -= f * g[[c, k]];
                }
                b[r] -= f * b[c];
            }
        }
        let mut beta = Array1::zeros(p);
        for r in (0..p).rev() {
            let s: f64 = ((r + 1)..p).map(|k| g[[r, k]] * beta[k]).sum();
            beta[r] = (b[r] - s) / g[[r, r]];
        }
        let resid = &ds.y - &ds.x.dot(&beta);
        let expected = resid.dot(&resid) / (ds.n() - p) as f64;
        let got = estimate_sigma2(&ds).unwrap();
        assert!((got - expected).abs() <= 1e-10 * expected);
    }

    #[test]
    fn diabetes_selects_seven() {
        let ds = standardize(&diabetes()).unwrap();
        let path = compute_path(&ds, 80).unwrap();
        let sigma2 = estimate_sigma2(&ds).unwrap();
        for c in Criterion::ALL {
            let report = select_optimal(&path, c, sigma2).unwrap();
            assert_eq!(report.chosen_df(), 7, "{c}");
            assert!(path.transition_lambdas().contains(&report.chosen_lambda));
        }
    }

    #[test]
    fn transition_grid_matches_report_rows() {
        let ds = standardize(&diabetes()).unwrap();
        let path = compute_path(&ds, 80).unwrap();
        let sigma2 = estimate_sigma2(&ds).unwrap();
        let report = select_optimal(&path, Criterion::Bic, sigma2).unwrap();
        let curve = criterion_curve(&path, Criterion::Bic, sigma2, path.transition_lambdas()).unwrap();
        for (row, (lambda, value)) in report.rows.iter().zip(curve) {
            assert_eq!(row.lambda, lambda);
            assert_eq!(row.value, value);
        }
        assert!(criterion_curve(&path, Criterion::Bic, sigma2, &[-1.0]).is_err());
    }

    #[test]
    fn selection_csv_marks_argmins() {
        let ds = standardize(&diabetes()).unwrap();
        let path = compute_path(&ds, 80).unwrap();
        let sigma2 = estimate_sigma2(&ds).unwrap();
        let mut buf = Vec::new();
        write_selection_csv(&path, sigma2, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "m,lambda,rss,df_hat,cp,aic,bic,cp_min,aic_min,bic_min"
        );
        let marked: Vec<_> = lines.filter(|l| l.ends_with(",1,1,1")).collect();
        assert_eq!(marked.len(), 1);
    }
}
