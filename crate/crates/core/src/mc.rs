//! Monte Carlo checks of the degrees-of-freedom results.
//!
//! Under `y* = Xβ + σz` the degrees of freedom of a fit `μ̂` are
//! `Σᵢ cov(μ̂ᵢ, y*ᵢ)/σ²`. Because `E[y*ᵢ] = (Xβ)ᵢ` is known, each covariance is
//! estimated as the replication mean of `(μ̂ᵢ − aᵢ)(y*ᵢ − (Xβ)ᵢ)` for a fixed
//! constant `aᵢ`; we use `aᵢ = (Xβ)ᵢ`, which has smaller variance than `aᵢ = 0`.
//! Summed over `i` this is `(β̂ − β)ᵀXᵀε / σ²` per replication, so only `Xᵀε`
//! and the coefficient vectors are needed.
//!
//! Replication `b` draws its noise from the ChaCha stream `b` of the master
//! seed, so sequential and parallel runs see identical data.

use std::io::Write;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{standardize, RawDataset, StandardizedDataset};
use crate::error::{Error, Result};
use crate::linalg::CholFactor;
use crate::oracle;
use crate::parallel::{map_indexed, Execution};
use crate::path::{default_max_steps, solve_gram_path, Design, FitResult, LassoPath, PathEvent};
use crate::selection::{estimate_sigma2, ols, Criterion};

/// Largest tolerated share of degenerate replications.
pub const MAX_SKIP_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct SyntheticModel {
    design: Arc<Design>,
    beta_true: Array1<f64>,
    sigma: f64,
    mu_true: Array1<f64>,
}

impl SyntheticModel {
    pub fn new(design: Arc<Design>, beta_true: Array1<f64>, sigma: f64) -> Result<Self> {
        if beta_true.len() != design.p() {
            return Err(Error::InvalidInput(format!(
                "beta has length {} for a design with {} columns",
                beta_true.len(),
                design.p()
            )));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidInput(format!("sigma must be nonnegative, got {sigma}")));
        }
        let mu_true = design.x().dot(&beta_true);
        Ok(SyntheticModel {
            design,
            beta_true,
            sigma,
            mu_true,
        })
    }

    /// `β = β̂_ols` and `σ = scale·σ̂_ols` fitted on `ds`.
    pub fn from_ols(ds: &StandardizedDataset, sigma_scale: f64) -> Result<Self> {
        let beta = ols(ds)?;
        let sigma = estimate_sigma2(ds)?.sqrt() * sigma_scale;
        Self::new(Arc::new(Design::from_dataset(ds)), beta, sigma)
    }

    pub fn design(&self) -> &Arc<Design> {
        &self.design
    }

    pub fn beta_true(&self) -> ArrayView1<'_, f64> {
        self.beta_true.view()
    }

    pub fn mu_true(&self) -> ArrayView1<'_, f64> {
        self.mu_true.view()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `Var(Xβ) / σ²`, with `Var` the population variance over rows.
    pub fn signal_to_noise(&self) -> f64 {
        let n = self.mu_true.len() as f64;
        let mean = self.mu_true.sum() / n;
        let var = self.mu_true.mapv(|m| (m - mean).powi(2)).sum() / n;
        var / (self.sigma * self.sigma)
    }

    /// Noise vector `σz` for replication `index` of `seed`.
    fn noise(&self, seed: u64, index: u64) -> Array1<f64> {
        let mut rng = replication_rng(seed, index);
        Array1::from_shape_simple_fn(self.mu_true.len(), || {
            let z: f64 = StandardNormal.sample(&mut rng);
            self.sigma * z
        })
    }
}

fn replication_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One draw `y* = Xβ + σz`.
pub fn synthesize(model: &SyntheticModel, seed: u64) -> Array1<f64> {
    &model.mu_true + &model.noise(seed, 0)
}

/// Replication count, master seed and scheduling for the Monte Carlo runs.
#[derive(Debug, Clone, Copy)]
pub struct MonteCarloSettings {
    pub replications: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl MonteCarloSettings {
    pub fn new(replications: usize, seed: u64) -> Self {
        MonteCarloSettings {
            replications,
            seed,
            execution: Execution::default(),
        }
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 replications, got {}",
                self.replications
            )));
        }
        Ok(())
    }
}

/// Mean and standard error of the mean, accumulated in slice order.
fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// A path for one replication, or `None` when it hit a tie.
fn replicate_path(model: &SyntheticModel, seed: u64, index: u64) -> Result<Option<(LassoPath, Array1<f64>)>> {
    let noise = model.noise(seed, index);
    let y = &model.mu_true + &noise;
    match LassoPath::compute(model.design.clone(), y, default_max_steps(model.design.p())) {
        Ok(path) => Ok(Some((path, model.design.x().t().dot(&noise)))),
        Err(err @ Error::Degenerate { .. }) => {
            log::warn!("replication {index} (seed {seed}) skipped: {err}");
            Ok(None)
        }
        Err(err) => Err(err),
    }
}

fn check_skips(skipped: usize, total: usize) -> Result<()> {
    if skipped as f64 > MAX_SKIP_FRACTION * total as f64 {
        return Err(Error::TooManySkipped { skipped, total });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct MonteCarloReport {
    pub lambdas: Vec<f64>,
    /// `Σᵢ cov̂ᵢ / σ²` with control variate `aᵢ = (Xβ)ᵢ`.
    pub df_mc: Vec<f64>,
    pub df_mc_se: Vec<f64>,
    /// The same estimate with `aᵢ = 0`.
    pub df_mc_plain: Vec<f64>,
    pub df_mc_plain_se: Vec<f64>,
    /// Mean of `|B_λ|` over replications.
    pub e_active: Vec<f64>,
    /// `e_active − df_mc`.
    pub bias: Vec<f64>,
    /// Standard error of the paired per-replication bias.
    pub se: Vec<f64>,
    pub replications: usize,
    pub skipped: usize,
    pub seed: u64,
}

impl MonteCarloReport {
    /// `lambda,df_mc,e_active,bias,se,ci_lo,ci_hi`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lambda", "df_mc", "e_active", "bias", "se", "ci_lo", "ci_hi"])?;
        for i in 0..self.lambdas.len() {
            let (lo, hi) = confidence_interval(self.bias[i], self.se[i]);
            w.write_record([
                self.lambdas[i].to_string(),
                self.df_mc[i].to_string(),
                self.e_active[i].to_string(),
                self.bias[i].to_string(),
                self.se[i].to_string(),
                lo.to_string(),
                hi.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Pointwise 95% normal interval.
pub fn confidence_interval(estimate: f64, se: f64) -> (f64, f64) {
    (estimate - 1.96 * se, estimate + 1.96 * se)
}

struct LambdaDraw {
    cv: f64,
    plain: f64,
    size: f64,
}

pub fn estimate_df_mc(
    model: &SyntheticModel,
    lambdas: &[f64],
    settings: &MonteCarloSettings,
) -> Result<MonteCarloReport> {
    settings.validate()?;
    if !(model.sigma > 0.0) {
        return Err(Error::InvalidInput("Monte Carlo df needs sigma > 0".into()));
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0)) {
        return Err(Error::InvalidInput(format!("grid value {l} is negative")));
    }
    let sigma2 = model.sigma * model.sigma;
    let draws = map_indexed(settings.replications, settings.execution, |b| -> Result<Option<Vec<LambdaDraw>>> {
        let Some((path, xte)) = replicate_path(model, settings.seed, b as u64)? else {
            return Ok(None);
        };
        lambdas
            .iter()
            .map(|&lambda| {
                let beta = path.coefficients_at(lambda)?;
                let plain = beta.dot(&xte) / sigma2;
                let cv = plain - model.beta_true.dot(&xte) / sigma2;
                let size = beta.iter().filter(|v| **v != 0.0).count() as f64;
                Ok(LambdaDraw { cv, plain, size })
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    });
    let draws: Vec<Vec<LambdaDraw>> = draws.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
    let skipped = settings.replications - draws.len();
    check_skips(skipped, settings.replications)?;

    let g = lambdas.len();
    let mut report = MonteCarloReport {
        lambdas: lambdas.to_vec(),
        df_mc: Vec::with_capacity(g),
        df_mc_se: Vec::with_capacity(g),
        df_mc_plain: Vec::with_capacity(g),
        df_mc_plain_se: Vec::with_capacity(g),
        e_active: Vec::with_capacity(g),
        bias: Vec::with_capacity(g),
        se: Vec::with_capacity(g),
        replications: draws.len(),
        skipped,
        seed: settings.seed,
    };
    for i in 0..g {
        let cv: Vec<f64> = draws.iter().map(|d| d[i].cv).collect();
        let plain: Vec<f64> = draws.iter().map(|d| d[i].plain).collect();
        let size: Vec<f64> = draws.iter().map(|d| d[i].size).collect();
        let paired: Vec<f64> = draws.iter().map(|d| d[i].size - d[i].cv).collect();
        let (df, df_se) = mean_se(&cv);
        let (df_plain, df_plain_se) = mean_se(&plain);
        let (e_active, _) = mean_se(&size);
        let (_, se) = mean_se(&paired);
        report.df_mc.push(df);
        report.df_mc_se.push(df_se);
        report.df_mc_plain.push(df_plain);
        report.df_mc_plain_se.push(df_plain_se);
        report.e_active.push(e_active);
        report.bias.push(e_active - df);
        report.se.push(se);
    }
    Ok(report)
}

/// Grid for unbiasedness runs: the transition points of one pilot draw,
/// thinned evenly to at most `max_points` values (λ₀ and 0 always kept).
pub fn pilot_grid(model: &SyntheticModel, seed: u64, max_points: usize) -> Result<Vec<f64>> {
    let y = &model.mu_true + &model.noise(seed, u64::MAX);
    let path = LassoPath::compute(model.design.clone(), y, default_max_steps(model.design.p()))?;
    let all = path.transition_lambdas();
    let max_points = max_points.max(2);
    if all.len() <= max_points {
        return Ok(all.to_vec());
    }
    let last = all.len() - 1;
    let mut grid: Vec<f64> = (0..max_points)
        .map(|i| all[(i * last + (max_points - 1) / 2) / (max_points - 1)])
        .collect();
    grid.dedup();
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasInterval {
    pub lambda: f64,
    pub bias: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub covers_zero: bool,
}

#[derive(Debug, Clone)]
pub struct UnbiasednessSummary {
    pub rows: Vec<BiasInterval>,
    /// Fraction of grid points whose 95% interval contains zero.
    pub coverage: f64,
}

pub fn unbiasedness_report(report: &MonteCarloReport) -> UnbiasednessSummary {
    let rows: Vec<BiasInterval> = report
        .lambdas
        .iter()
        .zip(report.bias.iter().zip(&report.se))
        .map(|(&lambda, (&bias, &se))| {
            let (ci_lo, ci_hi) = confidence_interval(bias, se);
            BiasInterval {
                lambda,
                bias,
                ci_lo,
                ci_hi,
                covers_zero: ci_lo <= 0.0 && 0.0 <= ci_hi,
            }
        })
        .collect();
    let covered = rows.iter().filter(|r| r.covers_zero).count();
    let coverage = if rows.is_empty() {
        1.0
    } else {
        covered as f64 / rows.len() as f64
    };
    UnbiasednessSummary { rows, coverage }
}

/// Index of the last transition point whose fit has exactly `k` nonzero coefficients.
pub fn last_k_index(path: &LassoPath, k: usize) -> Result<Option<usize>> {
    let p = path.design().p();
    if k > p {
        return Err(Error::InvalidInput(format!("k = {k} exceeds p = {p}")));
    }
    Ok(path.knot_sizes().iter().rposition(|&s| s == k))
}

/// The fit at the last transition point with exactly `k` nonzero coefficients.
pub fn last_k_fit(path: &LassoPath, k: usize) -> Result<Option<FitResult>> {
    Ok(last_k_index(path, k)?.map(|m| path.fit_at_transition(m)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConjectureRow {
    pub k: usize,
    pub df_mc: f64,
    /// `k − df_mc`.
    pub bias: f64,
    pub se: f64,
    pub n_valid: usize,
}

#[derive(Debug, Clone)]
pub struct ConjectureReport {
    pub rows: Vec<ConjectureRow>,
    pub replications: usize,
    pub skipped: usize,
}

impl ConjectureReport {
    pub fn max_abs_bias(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.n_valid > 0)
            .map(|r| r.bias.abs())
            .fold(0.0, f64::max)
    }

    /// `k,df_mc,bias,se,n_valid_replications`; empty fields where no replication visited `k`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "df_mc", "bias", "se", "n_valid_replications"])?;
        for r in &self.rows {
            if r.n_valid == 0 {
                w.write_record([r.k.to_string(), String::new(), String::new(), String::new(), "0".into()])?;
            } else {
                w.write_record([
                    r.k.to_string(),
                    r.df_mc.to_string(),
                    r.bias.to_string(),
                    r.se.to_string(),
                    r.n_valid.to_string(),
                ])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Monte Carlo degrees of freedom of the "fit at the last step with `k`
/// nonzero coefficients" rule, for every `k = 0..=p`.
pub fn conjecture_bias_report(model: &SyntheticModel, settings: &MonteCarloSettings) -> Result<ConjectureReport> {
    settings.validate()?;
    if !(model.sigma > 0.0) {
        return Err(Error::InvalidInput("Monte Carlo df needs sigma > 0".into()));
    }
    let p = model.design.p();
    let sigma2 = model.sigma * model.sigma;
    let draws = map_indexed(settings.replications, settings.execution, |b| -> Result<Option<Vec<Option<f64>>>> {
        let Some((path, xte)) = replicate_path(model, settings.seed, b as u64)? else {
            return Ok(None);
        };
        let offset = model.beta_true.dot(&xte);
        let sizes = path.knot_sizes();
        let per_k = (0..=p)
            .map(|k| {
                sizes
                    .iter()
                    .rposition(|&s| s == k)
                    .map(|m| (path.knot(m).dot(&xte) - offset) / sigma2)
            })
            .collect();
        Ok(Some(per_k))
    });
    let draws: Vec<Vec<Option<f64>>> = draws.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
    let skipped = settings.replications - draws.len();
    check_skips(skipped, settings.replications)?;

    let rows = (0..=p)
        .map(|k| {
            let values: Vec<f64> = draws.iter().filter_map(|d| d[k]).collect();
            let (df_mc, se) = mean_se(&values);
            ConjectureRow {
                k,
                df_mc,
                bias: k as f64 - df_mc,
                se,
                n_valid: values.len(),
            }
        })
        .collect();
    Ok(ConjectureReport {
        rows,
        replications: draws.len(),
        skipped,
    })
}

/// `1e-5·(1 + ‖y‖∞)`.
pub fn default_fd_step(y: ArrayView1<f64>) -> f64 {
    1e-5 * (1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Central-difference divergence `Σᵢ ∂μ̂ᵢ/∂yᵢ` of the lasso fit at `lambda`.
///
/// Fails if `lambda` is within `10·h` of a transition point of `y`, where the
/// fit has a kink.
pub fn divergence_fd(design: &Arc<Design>, lambda: f64, y: ArrayView1<f64>, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("step must be positive, got {h}")));
    }
    let steps = default_max_steps(design.p());
    let base = LassoPath::compute(design.clone(), y.to_owned(), steps)?;
    let gap = base
        .transition_lambdas()
        .iter()
        .map(|l| (l - lambda).abs())
        .fold(f64::INFINITY, f64::min);
    if gap <= 10.0 * h {
        return Err(Error::InvalidInput(format!(
            "lambda = {lambda} is within {gap:.3e} of a transition point"
        )));
    }
    let x = design.x();
    let mut total = 0.0;
    for i in 0..y.len() {
        let mut up = y.to_owned();
        up[i] += h;
        let mut down = y.to_owned();
        down[i] -= h;
        let b_up = LassoPath::compute(design.clone(), up, steps)?.coefficients_at(lambda)?;
        let b_down = LassoPath::compute(design.clone(), down, steps)?.coefficients_at(lambda)?;
        total += x.row(i).dot(&(&b_up - &b_down)) / (2.0 * h);
    }
    Ok(total)
}

/// The linear smoother `S_m` with `μ̂(λ_m) = S_m·y` at an addition event.
///
/// With `B` the nonzero set at `λ_m`, `s` its signs, `i` the entering
/// predictor and `sᵢ` its entry sign:
///
/// ```text
/// S_m = H_B − X_B(X_BᵀX_B)⁻¹s · x_iᵀ(I − H_B) / (sᵢ − x_iᵀX_B(X_BᵀX_B)⁻¹s)
/// ```
pub fn transition_smoother(path: &LassoPath, m: usize) -> Result<Array2<f64>> {
    let entering = match path.events().get(m) {
        Some(PathEvent::Add(i)) => *i,
        _ => {
            return Err(Error::InvalidInput(format!("transition {m} is not an addition")));
        }
    };
    let lambda = path.transition_lambdas()[m];
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput("smoother needs lambda_m > 0".into()));
    }
    let seg = &path.segments()[m];
    let entry_sign = seg.signs[seg.entering.expect("addition segment records its entry")];
    let x = path.design().x();
    let n = x.nrows();
    let beta = path.knot(m);
    let support: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    let xi = x.column(entering);
    if support.is_empty() {
        return Ok(Array2::zeros((n, n)));
    }
    let xb = x.select(Axis(1), &support);
    let chol = CholFactor::factor(xb.t().dot(&xb).view())?;
    let signs: Array1<f64> = support.iter().map(|&j| beta[j].signum()).collect();
    // H = X_B G⁻¹ X_Bᵀ, built column by column.
    let mut hat = Array2::zeros((n, n));
    for r in 0..n {
        let coef = chol.solve(xb.row(r));
        hat.column_mut(r).assign(&xb.dot(&coef));
    }
    let w = xb.dot(&chol.solve(signs.view()));
    let q = &xi - &hat.dot(&xi);
    let denom = entry_sign - xi.dot(&w);
    let wc = w.insert_axis(Axis(1));
    let qr = q.insert_axis(Axis(0));
    Ok(hat - wc.dot(&qr) / denom)
}

/// Model chosen by treating the step count as the tuning parameter: minimize
/// the criterion over the fits at `m_k^last`, `k = 0..=p`.
#[derive(Debug, Clone)]
pub struct StepSelection {
    pub k: usize,
    pub m: usize,
    pub value: f64,
    pub fit: FitResult,
}

pub fn select_by_step(path: &LassoPath, criterion: Criterion, sigma2: f64) -> Result<StepSelection> {
    let n = path.design().n();
    let mut best: Option<StepSelection> = None;
    for k in 0..=path.design().p() {
        let Some(m) = last_k_index(path, k)? else {
            continue;
        };
        let fit = path.fit_at_transition(m);
        let value = criterion.evaluate(fit.rss, k, n, sigma2)?;
        if best.as_ref().is_none_or(|b| value < b.value) {
            best = Some(StepSelection { k, m, value, fit });
        }
    }
    best.ok_or_else(|| Error::InvalidInput("empty path".into()))
}

/// Random designs whose rows are i.i.d. with a known limiting covariance `C`.
pub trait DesignSampler: Sync {
    fn p(&self) -> usize;
    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Array2<f64>;
    fn limit_covariance(&self) -> Array2<f64>;
}

/// Rows drawn from `N(0, diag(variances))`.
#[derive(Debug, Clone)]
pub struct DiagonalGaussianDesign {
    pub variances: Vec<f64>,
}

impl DesignSampler for DiagonalGaussianDesign {
    fn p(&self) -> usize {
        self.variances.len()
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let sd: Vec<f64> = self.variances.iter().map(|v| v.sqrt()).collect();
        Array2::from_shape_fn((n, sd.len()), |(_, j)| {
            let z: f64 = StandardNormal.sample(rng);
            sd[j] * z
        })
    }

    fn limit_covariance(&self) -> Array2<f64> {
        Array2::from_diag(&Array1::from(self.variances.clone()))
    }
}

#[derive(Debug, Clone)]
pub struct ConsistencySetup {
    pub beta_star: Array1<f64>,
    pub sigma: f64,
    pub lambda_star: f64,
    pub n_grid: Vec<usize>,
    pub settings: MonteCarloSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyRow {
    pub n: usize,
    /// Penalty applied to the unit-norm design, `√n·λ*`.
    pub lambda: f64,
    pub mode: usize,
    pub mean: f64,
    pub variance: f64,
    pub variance_se: f64,
    /// Share of replications with `df̂ = |B*|`.
    pub fraction_at_limit: f64,
    pub fraction_se: f64,
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct ConsistencyReport {
    /// Support of the limiting problem's minimizer.
    pub limit_active: Vec<usize>,
    pub limit_transitions: Vec<f64>,
    pub rows: Vec<ConsistencyRow>,
}

impl ConsistencyReport {
    pub fn limit_size(&self) -> usize {
        self.limit_active.len()
    }
}

/// Tracks `df̂` at `λ_n = n·λ*` as the sample size grows.
///
/// Solvers here see unit-norm columns, i.e. `X̃/√n` for the raw design `X̃`
/// with `X̃ᵀX̃/n → C`. Substituting `b = √n·γ` shows the raw-scale penalty
/// `n·λ*` becomes `√n·λ*` on the unit-norm design, with the same support.
/// The limiting problem is `(γ − γ*)ᵀR(γ − γ*) + λ*|γ|₁` with `R` the
/// correlation matrix of `C` and `γ*ⱼ = √Cⱼⱼ·β*ⱼ`.
pub fn consistency_experiment(sampler: &dyn DesignSampler, setup: &ConsistencySetup) -> Result<ConsistencyReport> {
    setup.settings.validate()?;
    let p = sampler.p();
    if setup.beta_star.len() != p {
        return Err(Error::InvalidInput("beta* length must match the sampler".into()));
    }
    if !(setup.lambda_star > 0.0) {
        return Err(Error::InvalidInput("lambda* must be positive".into()));
    }
    let cov = sampler.limit_covariance();
    let scale: Array1<f64> = cov.diag().mapv(f64::sqrt);
    let corr = Array2::from_shape_fn((p, p), |(i, j)| cov[[i, j]] / (scale[i] * scale[j]));
    let gamma = &setup.beta_star * &scale;
    let target = corr.dot(&gamma);

    let limit_path = solve_gram_path(corr.view(), target.view(), gamma.dot(&target), default_max_steps(p))?;
    if let Some(t) = limit_path
        .lambdas
        .iter()
        .find(|&&t| (t - setup.lambda_star).abs() <= 1e-6 * setup.lambda_star)
    {
        return Err(Error::InvalidInput(format!(
            "lambda* = {} is a transition point ({t}) of the limiting problem",
            setup.lambda_star
        )));
    }
    let limit = oracle::solve_gram(corr.view(), target.view(), setup.lambda_star, 1e-12, oracle::DEFAULT_MAX_ITER)?;
    let limit_active: Vec<usize> = (0..p).filter(|&j| limit.beta[j] != 0.0).collect();
    let limit_size = limit_active.len();

    let mut rows = Vec::with_capacity(setup.n_grid.len());
    for (gi, &n) in setup.n_grid.iter().enumerate() {
        if n <= p + 1 {
            return Err(Error::InvalidInput(format!("n = {n} too small for p = {p}")));
        }
        let lambda = (n as f64).sqrt() * setup.lambda_star;
        let sizes = map_indexed(setup.settings.replications, setup.settings.execution, |b| -> Result<Option<usize>> {
            let mut rng = replication_rng(setup.settings.seed, ((gi as u64) << 32) | b as u64);
            let x = sampler.sample(n, &mut rng);
            let noise = Array1::from_shape_simple_fn(n, || {
                let z: f64 = StandardNormal.sample(&mut rng);
                setup.sigma * z
            });
            let y = x.dot(&setup.beta_star) + noise;
            let names = (0..p).map(|j| format!("x{j}")).collect();
            let ds = standardize(&RawDataset::new(x, y, names)?)?;
            match LassoPath::compute(Arc::new(Design::from_dataset(&ds)), ds.y.clone(), default_max_steps(p)) {
                Ok(path) => Ok(Some(path.fit_at(lambda)?.df_hat)),
                Err(Error::Degenerate { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        });
        let sizes: Vec<usize> = sizes.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
        let skipped = setup.settings.replications - sizes.len();
        check_skips(skipped, setup.settings.replications)?;

        let count = sizes.len() as f64;
        let mut histogram = vec![0usize; p + 1];
        for &s in &sizes {
            histogram[s] += 1;
        }
        let mode = (0..=p).max_by_key(|&k| (histogram[k], std::cmp::Reverse(k))).unwrap_or(0);
        let values: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
        let mean = values.iter().sum::<f64>() / count;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
        let fourth = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / count;
        let variance_se = ((fourth - variance * variance * (count - 3.0) / (count - 1.0)) / count)
            .max(0.0)
            .sqrt();
        let fraction = histogram[limit_size] as f64 / count;
        rows.push(ConsistencyRow {
            n,
            lambda,
            mode,
            mean,
            variance,
            variance_se,
            fraction_at_limit: fraction,
            fraction_se: (fraction * (1.0 - fraction) / count).sqrt(),
            skipped,
        });
    }
    Ok(ConsistencyReport {
        limit_active,
        limit_transitions: limit_path.lambdas,
        rows,
    })
}
