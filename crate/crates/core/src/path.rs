//! Exact LARS-lasso regularization path.
//!
//! The objective is `‖y − Xβ‖² + λ·Σ|βⱼ|` with no ½ or 1/n factor, so
//! stationarity reads `2xⱼᵀ(y − Xβ) = λ·sgn(βⱼ)` and every threshold is `λ/2`.
//! Between consecutive transition points the active set `B` and its sign
//! vector `s` are fixed and the active coefficients are affine in λ:
//!
//! ```text
//! β_B(λ) = a − (λ/2)·d,   a = (X_BᵀX_B)⁻¹X_Bᵀy,   d = (X_BᵀX_B)⁻¹s
//! ```
//!
//! The solver walks λ downward from `λ₀ = maxⱼ 2|xⱼᵀy|` to 0. At each step the
//! next transition is the largest λ below the current one at which an
//! inactive predictor reaches the equality `2|xⱼᵀr| = λ` or an active
//! coefficient crosses zero. All arithmetic runs on the Gram matrix `XᵀX` and
//! `Xᵀy`, so refitting many responses on one design costs `O(p·|B|)` per step.

use std::io::Write;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::dataset::StandardizedDataset;
use crate::error::{Error, Result};
use crate::linalg::CholFactor;

/// Two candidate events closer than this (relative to λ) are a tie.
pub const TIE_TOL: f64 = 1e-9;
/// Candidates within this relative distance of the current λ are the current event.
pub const REPEAT_GUARD: f64 = 1e-12;

pub fn default_max_steps(p: usize) -> usize {
    8 * p.max(1)
}

/// A standardized design matrix with its cached Gram matrix.
#[derive(Debug, Clone)]
pub struct Design {
    x: Array2<f64>,
    gram: Array2<f64>,
    names: Vec<String>,
}

impl Design {
    pub fn new(x: Array2<f64>, names: Vec<String>) -> Self {
        assert_eq!(names.len(), x.ncols(), "one name per column");
        let gram = x.t().dot(&x);
        Design { x, gram, names }
    }

    pub fn from_dataset(ds: &StandardizedDataset) -> Self {
        Self::new(ds.x.clone(), ds.names.clone())
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn gram(&self) -> ArrayView2<'_, f64> {
        self.gram.view()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathEvent {
    Add(usize),
    Drop(usize),
}

impl PathEvent {
    pub fn index(&self) -> usize {
        match *self {
            PathEvent::Add(j) | PathEvent::Drop(j) => j,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PathEvent::Add(_) => "add",
            PathEvent::Drop(_) => "drop",
        }
    }
}

/// One linear piece of the path on `[lambda_lo, lambda_hi]`.
#[derive(Debug, Clone)]
pub struct PathSegment {
    pub lambda_hi: f64,
    pub lambda_lo: f64,
    pub active: Vec<usize>,
    pub signs: Vec<f64>,
    pub a: Array1<f64>,
    pub d: Array1<f64>,
    /// Position in `active` of the predictor that entered at `lambda_hi`.
    pub entering: Option<usize>,
    /// Position in `active` of the predictor that leaves at `lambda_lo`.
    pub leaving: Option<usize>,
    p: usize,
}

impl PathSegment {
    /// Active coefficients `a − (λ/2)·d`, in `active` order.
    ///
    /// The entering coefficient is exactly zero at `lambda_hi`, and the leaving
    /// one exactly zero at `lambda_lo`.
    pub fn active_coefficients(&self, lambda: f64) -> Array1<f64> {
        let mut beta = &self.a - &(&self.d * (lambda / 2.0));
        if lambda == self.lambda_hi {
            if let Some(i) = self.entering {
                beta[i] = 0.0;
            }
        }
        if lambda == self.lambda_lo {
            if let Some(i) = self.leaving {
                beta[i] = 0.0;
            }
        }
        beta
    }

    pub fn n_predictors(&self) -> usize {
        self.p
    }

    pub fn contains(&self, lambda: f64) -> bool {
        lambda >= self.lambda_lo && lambda <= self.lambda_hi
    }
}

/// Full coefficient vector of `seg` at `lambda`; inactive entries are exactly zero.
pub fn segment_coefficients(seg: &PathSegment, lambda: f64) -> Result<Array1<f64>> {
    if !seg.contains(lambda) {
        return Err(Error::LambdaOutOfSegment {
            lambda,
            lo: seg.lambda_lo,
            hi: seg.lambda_hi,
        });
    }
    let mut beta = Array1::zeros(seg.p);
    for (&j, b) in seg.active.iter().zip(seg.active_coefficients(lambda)) {
        beta[j] = b;
    }
    Ok(beta)
}

/// The transition structure of a path, independent of any particular `X`.
#[derive(Debug, Clone)]
pub struct PathKnots {
    pub lambdas: Vec<f64>,
    pub segments: Vec<PathSegment>,
    pub events: Vec<PathEvent>,
    /// `β(λ_m)` for every transition point, with event coefficients exactly zero.
    pub knots: Vec<Array1<f64>>,
}

struct Candidate {
    lambda: f64,
    event: PathEvent,
    sign: f64,
}

/// Follows the path for the problem `βᵀGβ − 2βᵀc + λ|β|₁` given `G = XᵀX`
/// and `c = Xᵀy`. `yty` only scales the zero-signal threshold.
pub fn solve_gram_path(
    gram: ArrayView2<f64>,
    xty: ArrayView1<f64>,
    yty: f64,
    max_steps: usize,
) -> Result<PathKnots> {
    let p = xty.len();
    let zeros = Array1::zeros(p);

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| xty[j].abs().total_cmp(&xty[i].abs()));
    let first = order[0];
    let lambda0 = 2.0 * xty[first].abs();
    let diag_max = gram.diag().iter().fold(0.0f64, |m, v| m.max(*v));
    if lambda0 <= 1e-12 * (yty * diag_max).sqrt() || lambda0 == 0.0 {
        return Ok(PathKnots {
            lambdas: vec![0.0],
            segments: Vec::new(),
            events: Vec::new(),
            knots: vec![zeros],
        });
    }
    if p > 1 {
        let second = order[1];
        if 2.0 * xty[second].abs() >= lambda0 * (1.0 - TIE_TOL) {
            return Err(Error::Degenerate {
                lambda: lambda0,
                first,
                second,
            });
        }
    }

    let mut lambdas = vec![lambda0];
    let mut events = vec![PathEvent::Add(first)];
    let mut knots = vec![zeros];
    let mut segments: Vec<PathSegment> = Vec::new();

    let mut chol = CholFactor::empty().add_column(first, ArrayView1::from(&[]), gram[[first, first]])?;
    let mut active = vec![first];
    let mut signs = vec![xty[first].signum()];
    let mut is_active = vec![false; p];
    is_active[first] = true;
    let mut entering = Some(0);
    let mut lambda = lambda0;

    loop {
        let xty_a: Array1<f64> = active.iter().map(|&j| xty[j]).collect();
        let a = chol.solve(xty_a.view());
        let d = chol.solve(ArrayView1::from(&signs[..]));
        let ceiling = lambda * (1.0 - REPEAT_GUARD);

        let mut candidates: Vec<Candidate> = Vec::new();
        for j in (0..p).filter(|&j| !is_active[j]) {
            // Inactive correlation is affine in λ: xⱼᵀr(λ) = u + (λ/2)·v.
            let (mut ga, mut gd) = (0.0, 0.0);
            for (pos, &k) in active.iter().enumerate() {
                ga += gram[[j, k]] * a[pos];
                gd += gram[[j, k]] * d[pos];
            }
            let u = xty[j] - ga;
            for sign in [1.0, -1.0] {
                let denom = sign - gd;
                if denom == 0.0 {
                    continue;
                }
                let at = 2.0 * u / denom;
                if at > 0.0 && at < ceiling {
                    candidates.push(Candidate {
                        lambda: at,
                        event: PathEvent::Add(j),
                        sign,
                    });
                }
            }
        }
        for (pos, &j) in active.iter().enumerate() {
            if d[pos] * signs[pos] >= 0.0 {
                continue;
            }
            let at = 2.0 * a[pos] / d[pos];
            if at > 0.0 && at < ceiling {
                candidates.push(Candidate {
                    lambda: at,
                    event: PathEvent::Drop(j),
                    sign: 0.0,
                });
            }
        }
        candidates.sort_by(|x, y| y.lambda.total_cmp(&x.lambda));

        let next = candidates.first();
        if let (Some(best), Some(runner)) = (candidates.first(), candidates.get(1)) {
            if runner.lambda >= best.lambda * (1.0 - TIE_TOL) {
                return Err(Error::Degenerate {
                    lambda: best.lambda,
                    first: best.event.index(),
                    second: runner.event.index(),
                });
            }
        }
        let lambda_lo = next.map_or(0.0, |c| c.lambda);
        let leaving = match next.map(|c| c.event) {
            Some(PathEvent::Drop(j)) => active.iter().position(|&k| k == j),
            _ => None,
        };
        let segment = PathSegment {
            lambda_hi: lambda,
            lambda_lo,
            active: active.clone(),
            signs: signs.clone(),
            a,
            d,
            entering,
            leaving,
            p,
        };
        knots.push(segment_coefficients(&segment, lambda_lo)?);
        segments.push(segment);
        lambdas.push(lambda_lo);

        let Some(next) = next else {
            break;
        };
        if events.len() >= max_steps {
            return Err(Error::MaxStepsExceeded(max_steps));
        }
        match next.event {
            PathEvent::Add(j) => {
                let cross: Array1<f64> = active.iter().map(|&k| gram[[j, k]]).collect();
                chol = chol.add_column(j, cross.view(), gram[[j, j]])?;
                active.push(j);
                signs.push(next.sign);
                is_active[j] = true;
                entering = Some(active.len() - 1);
            }
            PathEvent::Drop(j) => {
                let pos = leaving.expect("drop event has a position");
                chol = chol.drop_column(pos)?;
                active.remove(pos);
                signs.remove(pos);
                is_active[j] = false;
                entering = None;
            }
        }
        events.push(next.event);
        lambda = next.lambda;
    }

    Ok(PathKnots {
        lambdas,
        segments,
        events,
        knots,
    })
}

/// Lasso fit at one λ.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub lambda: f64,
    pub beta: Array1<f64>,
    pub mu: Array1<f64>,
    pub rss: f64,
    pub df_hat: usize,
}

/// The complete path for one response on one design.
#[derive(Debug, Clone)]
pub struct LassoPath {
    design: Arc<Design>,
    y: Array1<f64>,
    knots: PathKnots,
}

impl LassoPath {
    pub fn compute(design: Arc<Design>, y: Array1<f64>, max_steps: usize) -> Result<Self> {
        if y.len() != design.n() {
            return Err(Error::InvalidInput(format!(
                "response has length {} but design has {} rows",
                y.len(),
                design.n()
            )));
        }
        let xty = design.x().t().dot(&y);
        let knots = solve_gram_path(design.gram(), xty.view(), y.dot(&y), max_steps)?;
        Ok(LassoPath { design, y, knots })
    }

    pub fn design(&self) -> &Arc<Design> {
        &self.design
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    /// `λ₀ > λ₁ > … > λ_K = 0`.
    pub fn transition_lambdas(&self) -> &[f64] {
        &self.knots.lambdas
    }

    pub fn segments(&self) -> &[PathSegment] {
        &self.knots.segments
    }

    /// The event at each transition point except the final `λ_K = 0`.
    pub fn events(&self) -> &[PathEvent] {
        &self.knots.events
    }

    /// Coefficients at transition point `m`.
    pub fn knot(&self, m: usize) -> &Array1<f64> {
        &self.knots.knots[m]
    }

    pub fn lambda_max(&self) -> f64 {
        self.knots.lambdas[0]
    }

    pub fn n_transitions(&self) -> usize {
        self.knots.lambdas.len()
    }

    /// Coefficients at any λ ≥ 0.
    pub fn coefficients_at(&self, lambda: f64) -> Result<Array1<f64>> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidInput(format!("lambda must be nonnegative, got {lambda}")));
        }
        let lambdas = &self.knots.lambdas;
        if lambda >= lambdas[0] {
            return Ok(Array1::zeros(self.design.p()));
        }
        // First index whose transition value is <= lambda; lambdas are decreasing.
        let m = lambdas.partition_point(|&l| l > lambda);
        if lambdas[m] == lambda {
            return Ok(self.knots.knots[m].clone());
        }
        segment_coefficients(&self.knots.segments[m - 1], lambda)
    }

    pub fn fit_at(&self, lambda: f64) -> Result<FitResult> {
        let beta = self.coefficients_at(lambda)?;
        Ok(self.fit_from(lambda, beta))
    }

    pub fn fit_at_transition(&self, m: usize) -> FitResult {
        self.fit_from(self.knots.lambdas[m], self.knots.knots[m].clone())
    }

    fn fit_from(&self, lambda: f64, beta: Array1<f64>) -> FitResult {
        let mu = self.design.x().dot(&beta);
        let resid = &self.y - &mu;
        let rss = resid.dot(&resid);
        let df_hat = beta.iter().filter(|b| **b != 0.0).count();
        FitResult {
            lambda,
            beta,
            mu,
            rss,
            df_hat,
        }
    }

    /// Nonzero-coefficient count at each transition point.
    pub fn knot_sizes(&self) -> Vec<usize> {
        self.knots
            .knots
            .iter()
            .map(|b| b.iter().filter(|v| **v != 0.0).count())
            .collect()
    }

    /// One row per transition: `m,lambda,event,index,active_size`.
    ///
    /// `active_size` is the size of the active set just below `λ_m`; the final
    /// row (λ = 0) has event `end`.
    pub fn write_transitions_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["m", "lambda", "event", "index", "active_size"])?;
        let k = self.knots.lambdas.len();
        for (m, lambda) in self.knots.lambdas.iter().enumerate() {
            let size = if m + 1 < k {
                self.knots.segments[m].active.len()
            } else {
                self.knots.segments.last().map_or(0, |s| s.active.len())
            };
            let (kind, index) = match self.knots.events.get(m) {
                Some(e) => (e.kind(), e.index().to_string()),
                None => ("end", String::new()),
            };
            w.write_record([m.to_string(), lambda.to_string(), kind.into(), index, size.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Wide table `lambda,<name₁>,…,<name_p>` with one row per transition point.
    pub fn write_coefficients_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["lambda".to_string()];
        header.extend(self.design.names().iter().cloned());
        w.write_record(&header)?;
        for (lambda, beta) in self.knots.lambdas.iter().zip(&self.knots.knots) {
            let mut row = vec![lambda.to_string()];
            row.extend(beta.iter().map(|b| b.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Computes the path for a standardized dataset.
pub fn compute_path(ds: &StandardizedDataset, max_steps: usize) -> Result<LassoPath> {
    LassoPath::compute(Arc::new(Design::from_dataset(ds)), ds.y.clone(), max_steps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// `max |2xⱼᵀr − λ·sgn(βⱼ)|` over nonzero coefficients.
    pub active_violation: f64,
    /// `max (2|xⱼᵀr| − λ)₊` over zero coefficients.
    pub inactive_violation: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.active_violation.max(self.inactive_violation)
    }
}

pub fn kkt_check(ds: &StandardizedDataset, beta: &Array1<f64>, lambda: f64) -> KktReport {
    kkt_check_xy(ds.x.view(), ds.y.view(), beta.view(), lambda)
}

pub fn kkt_check_xy(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    beta: ArrayView1<f64>,
    lambda: f64,
) -> KktReport {
    let resid = &y - &x.dot(&beta);
    let corr = x.t().dot(&resid);
    let mut report = KktReport {
        active_violation: 0.0,
        inactive_violation: 0.0,
    };
    for (c, b) in corr.iter().zip(beta.iter()) {
        if *b != 0.0 {
            let v = (2.0 * c - lambda * b.signum()).abs();
            report.active_violation = report.active_violation.max(v);
        } else {
            let v = (2.0 * c.abs() - lambda).max(0.0);
            report.inactive_violation = report.inactive_violation.max(v);
        }
    }
    report
}

/// `‖μ̂(y+Δ) − μ̂(y)‖ / ‖Δ‖` at a fixed λ, both fits computed from scratch.
pub fn lipschitz_probe(
    design: &Arc<Design>,
    y: ArrayView1<f64>,
    delta: ArrayView1<f64>,
    lambda: f64,
) -> Result<f64> {
    let norm = delta.dot(&delta).sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidInput("perturbation must be nonzero".into()));
    }
    let steps = default_max_steps(design.p());
    let base = LassoPath::compute(design.clone(), y.to_owned(), steps)?.fit_at(lambda)?;
    let moved = LassoPath::compute(design.clone(), &y + &delta, steps)?.fit_at(lambda)?;
    let diff = &moved.mu - &base.mu;
    Ok(diff.dot(&diff).sqrt() / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    /// Centered orthonormal columns in R⁴.
    fn orthonormal_design() -> Arc<Design> {
        let x = array![[0.5, 0.5], [0.5, -0.5], [-0.5, 0.5], [-0.5, -0.5]];
        Arc::new(Design::new(x, vec!["x1".into(), "x2".into()]))
    }

    fn orthonormal_path() -> LassoPath {
        let design = orthonormal_design();
        // xᵀy = (3, 1)
        let y = design.x().dot(&array![3.0, 1.0]);
        LassoPath::compute(design, y, 16).unwrap()
    }

    #[test]
    fn orthonormal_transitions() {
        let path = orthonormal_path();
        assert_abs_diff_eq!(path.transition_lambdas()[0], 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(path.transition_lambdas()[1], 2.0, epsilon = 1e-12);
        assert_eq!(path.transition_lambdas()[2], 0.0);
        assert_eq!(path.events(), &[PathEvent::Add(0), PathEvent::Add(1)]);
    }

    #[test]
    fn orthonormal_fit_at_four() {
        let fit = orthonormal_path().fit_at(4.0).unwrap();
        assert_abs_diff_eq!(fit.beta, array![1.0, 0.0], epsilon = 1e-12);
        assert_eq!(fit.df_hat, 1);
    }

    #[test]
    fn null_model_above_lambda_max() {
        let path = orthonormal_path();
        let fit = path.fit_at(10.0).unwrap();
        assert_eq!(fit.df_hat, 0);
        assert_eq!(fit.rss, path.y().dot(&path.y()));
        assert!(fit.mu.iter().all(|m| *m == 0.0));
        assert!(path.fit_at(-1.0).is_err());
    }

    #[test]
    fn transition_fits_have_exact_zeros() {
        let path = orthonormal_path();
        let at_entry = path.fit_at(path.transition_lambdas()[1]).unwrap();
        assert_eq!(at_entry.beta[1], 0.0);
        assert_eq!(at_entry.df_hat, 1);
        let seg = &path.segments()[1];
        assert_eq!(segment_coefficients(seg, seg.lambda_hi).unwrap()[1], 0.0);
        assert!(segment_coefficients(seg, seg.lambda_hi + 1.0).is_err());
    }

    #[test]
    fn scalar_closed_form() {
        let x = array![[0.8], [-0.6], [0.0]];
        let design = Arc::new(Design::new(x, vec!["x".into()]));
        let y = array![-1.0, 2.0, 0.3];
        let z = design.x().column(0).dot(&y);
        let path = LassoPath::compute(design, y, 8).unwrap();
        for lambda in [0.0, 0.5, 1.0, 2.0 * z.abs() - 0.01] {
            let b = path.coefficients_at(lambda).unwrap()[0];
            assert_abs_diff_eq!(b, z.signum() * (z.abs() - lambda / 2.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn orthogonal_response_gives_trivial_path() {
        let design = orthonormal_design();
        let y = array![1.0, 1.0, 1.0, 1.0];
        let path = LassoPath::compute(design, y, 8).unwrap();
        assert_eq!(path.transition_lambdas(), &[0.0]);
        assert!(path.segments().is_empty());
        let fit = path.fit_at(0.0).unwrap();
        assert_eq!(fit.df_hat, 0);
    }

    #[test]
    fn duplicate_column_is_degenerate() {
        let x = array![[0.5, 0.5, 0.5], [0.5, -0.5, -0.5], [-0.5, 0.5, 0.5], [-0.5, -0.5, -0.5]];
        let design = Arc::new(Design::new(x, vec!["a".into(), "b".into(), "c".into()]));
        let y = array![1.0, 2.0, -1.0, 0.0];
        let err = LassoPath::compute(design, y, 16).unwrap_err();
        assert!(matches!(err, Error::Degenerate { .. } | Error::RankDeficient { .. }));
    }

    #[test]
    fn max_steps_guard() {
        let design = orthonormal_design();
        let y = design.x().dot(&array![3.0, 1.0]);
        assert!(matches!(
            LassoPath::compute(design, y, 1),
            Err(Error::MaxStepsExceeded(1))
        ));
    }

    #[test]
    fn kkt_flags_perturbation() {
        let path = orthonormal_path();
        let design = path.design().clone();
        let mut beta = path.coefficients_at(3.0).unwrap();
        let ok = kkt_check_xy(design.x(), path.y(), beta.view(), 3.0);
        assert!(ok.max() <= 1e-12);
        beta[0] += 0.1;
        let bad = kkt_check_xy(design.x(), path.y(), beta.view(), 3.0);
        assert_abs_diff_eq!(bad.active_violation, 0.2, epsilon = 1e-12);
        let null = kkt_check_xy(design.x(), path.y(), Array1::zeros(2).view(), 6.5);
        assert_eq!(null.inactive_violation, 0.0);
    }

    #[test]
    fn lipschitz_extremes() {
        let path = orthonormal_path();
        let design = path.design().clone();
        // Orthogonal to both columns (and to the intercept).
        let orth = array![0.5, -0.5, -0.5, 0.5];
        let r = lipschitz_probe(&design, path.y(), orth.view(), 4.0).unwrap();
        assert!(r.abs() < 1e-12);
        let along = design.x().column(0).to_owned() * 1e-3;
        let r = lipschitz_probe(&design, path.y(), along.view(), 4.0).unwrap();
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-9);
        assert!(lipschitz_probe(&design, path.y(), Array1::zeros(4).view(), 4.0).is_err());
    }

    #[test]
    fn csv_exports() {
        let path = orthonormal_path();
        let mut buf = Vec::new();
        path.write_transitions_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "m,lambda,event,index,active_size");
        assert_eq!(lines[1], "0,6,add,0,1");
        assert_eq!(lines[3], "2,0,end,,2");

        let mut buf = Vec::new();
        path.write_coefficients_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("lambda,x1,x2\n6,0,0\n"));
    }
}
