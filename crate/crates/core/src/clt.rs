//! Sufficient-condition sequences, truncation, and seeded Monte-Carlo
//! normality experiments.

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{marginals, ChainSpec};
use crate::checks::fmt17;
use crate::coefficients::{delta_coefficient, rho1_lambda};
use crate::error::{Error, Result};
use crate::families::{normal_cdf, Family, Observable, Row};
use crate::moments::{b_squared, essential_bound, sigma_squared, RHO_DEGENERACY_TOL};
use crate::rng::Stream;

pub const DEFAULT_KS_THRESHOLD: f64 = 0.02;
pub const DEFAULT_EPS: [f64; 3] = [1.0, 0.1, 0.01];

/// Off-domain conventions for the condition sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionFlag {
    /// `λ = 1`: the row is independent and `|log λ| = 0`.
    DegenerateIndependent,
    /// `δ_1 = 1`: the contraction coefficient carries no information.
    DegenerateContraction,
    /// `C_n = ∞` (Gaussian observable without clipping).
    UnboundedObservable,
}

impl ConditionFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            ConditionFlag::DegenerateIndependent => "degenerate_independent",
            ConditionFlag::DegenerateContraction => "degenerate_contraction",
            ConditionFlag::UnboundedObservable => "unbounded_observable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionValue {
    pub value: f64,
    pub flag: Option<ConditionFlag>,
}

impl ConditionValue {
    fn plain(value: f64) -> Self {
        Self { value, flag: None }
    }

    fn flagged(value: f64, flag: ConditionFlag) -> Self {
        Self { value, flag: Some(flag) }
    }
}

/// Per-row inputs of the condition formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RowInputs {
    pub n: usize,
    /// `C_n = max |X_{n,i}|`
    pub c_n: f64,
    pub lambda: f64,
    pub delta1: f64,
    pub sigma: f64,
    pub b: f64,
}

impl RowInputs {
    pub fn from_spec(spec: &ChainSpec) -> Result<Self> {
        let (_, lambda) = rho1_lambda(spec)?;
        Ok(Self {
            n: spec.n,
            c_n: essential_bound(spec, &marginals(spec)),
            lambda,
            delta1: spec.transitions.iter().map(delta_coefficient).fold(0.0, f64::max),
            sigma: sigma_squared(spec).max(0.0).sqrt(),
            b: b_squared(spec).max(0.0).sqrt(),
        })
    }

    fn independent(&self) -> bool {
        self.lambda >= 1.0 - RHO_DEGENERACY_TOL
    }

    fn check_domain(&self) -> Result<()> {
        if self.lambda <= RHO_DEGENERACY_TOL {
            return Err(Error::DegenerateMixing(format!("λ = {} at n = {}", self.lambda, self.n)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::ZeroVariance(format!("σ = 0 at n = {}", self.n)));
        }
        Ok(())
    }
}

/// `h(λ) = λ / |log λ|`.
pub fn h(lambda: f64) -> f64 {
    lambda / lambda.ln().abs()
}

/// `h'(λ) = λ^{3/2} / |log λ|`.
pub fn h_prime(lambda: f64) -> f64 {
    lambda.powf(1.5) / lambda.ln().abs()
}

/// `C_n |log λ| / (λ σ_n)`; zero (flagged) for independent rows.
pub fn condition_dob_from(r: &RowInputs) -> Result<ConditionValue> {
    r.check_domain()?;
    if r.independent() {
        return Ok(ConditionValue::flagged(0.0, ConditionFlag::DegenerateIndependent));
    }
    let v = r.c_n * r.lambda.ln().abs() / (r.lambda * r.sigma);
    Ok(if r.c_n.is_infinite() {
        ConditionValue::flagged(v, ConditionFlag::UnboundedObservable)
    } else {
        ConditionValue::plain(v)
    })
}

/// `λ³ n / |log λ|²`; `+∞` (flagged) for independent rows.
pub fn condition_log2_from(r: &RowInputs) -> Result<ConditionValue> {
    r.check_domain()?;
    if r.independent() {
        return Ok(ConditionValue::flagged(f64::INFINITY, ConditionFlag::DegenerateIndependent));
    }
    Ok(ConditionValue::plain(
        r.lambda.powi(3) * r.n as f64 / r.lambda.ln().powi(2),
    ))
}

/// `C_n² / (α³ b_n²)` with `α = 1 - δ_1`; `+∞` (flagged) when `δ_1 = 1`.
pub fn condition_dobrushin_cd_from(r: &RowInputs) -> Result<ConditionValue> {
    let alpha = 1.0 - r.delta1;
    if alpha <= RHO_DEGENERACY_TOL {
        return Ok(ConditionValue::flagged(f64::INFINITY, ConditionFlag::DegenerateContraction));
    }
    if !(r.b > 0.0) {
        return Err(Error::ZeroVariance(format!("b = 0 at n = {}", r.n)));
    }
    let v = r.c_n * r.c_n / (alpha.powi(3) * r.b * r.b);
    Ok(if r.c_n.is_infinite() {
        ConditionValue::flagged(v, ConditionFlag::UnboundedObservable)
    } else {
        ConditionValue::plain(v)
    })
}

pub fn condition_dob(spec: &ChainSpec) -> Result<ConditionValue> {
    condition_dob_from(&RowInputs::from_spec(spec)?)
}

pub fn condition_log2(spec: &ChainSpec) -> Result<ConditionValue> {
    condition_log2_from(&RowInputs::from_spec(spec)?)
}

pub fn condition_dobrushin_cd(spec: &ChainSpec) -> Result<ConditionValue> {
    condition_dobrushin_cd_from(&RowInputs::from_spec(spec)?)
}

/// `Σ_i E X_i² 1{|X_i| > τ}` over the exact marginals.
pub fn truncated_second_moment(spec: &ChainSpec, tau: f64) -> f64 {
    let laws = marginals(spec);
    spec.f
        .iter()
        .zip(&laws.pi)
        .flat_map(|(fi, pi)| fi.iter().zip(pi))
        .filter(|(v, _)| v.abs() > tau)
        .map(|(v, p)| p * v * v)
        .sum()
}

/// `E f(Z)² 1{|f(Z)| > τ}` for a standard normal `Z`.
fn gaussian_truncated_moment(obs: Observable, tau: f64) -> f64 {
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let tau = tau.max(0.0);
    // 2 ∫_a^b x² φ = 2[aφ(a) - bφ(b) + Φ(b) - Φ(a)]
    let band = |a: f64, b: f64| 2.0 * (a * pdf(a) - b * pdf(b) + normal_cdf(b) - normal_cdf(a));
    match obs {
        Observable::Identity => 2.0 * (tau * pdf(tau) + 1.0 - normal_cdf(tau)),
        Observable::Clip { level } if tau >= level => 0.0,
        Observable::Clip { level } => band(tau, level) + 2.0 * level * level * (1.0 - normal_cdf(level)),
    }
}

fn lindeberg_value(r: &RowInputs, truncated: impl Fn(f64) -> f64, eps: f64, b_form: bool) -> Result<ConditionValue> {
    if !(eps > 0.0) {
        return Err(Error::Parse(format!("ε must be positive, got {eps}")));
    }
    r.check_domain()?;
    if r.independent() {
        return Ok(ConditionValue::flagged(0.0, ConditionFlag::DegenerateIndependent));
    }
    let v = if b_form {
        if !(r.b > 0.0) {
            return Err(Error::ZeroVariance(format!("b = 0 at n = {}", r.n)));
        }
        truncated(eps * h_prime(r.lambda) * r.b) / (r.lambda * r.lambda * r.b * r.b)
    } else {
        truncated(eps * h(r.lambda) * r.sigma) / (r.lambda * r.sigma * r.sigma)
    };
    Ok(ConditionValue::plain(v))
}

/// `(1/(λσ²)) Σ_i E X_i² 1{|X_i| > ε h(λ) σ}`.
pub fn lindeberg_functional(spec: &ChainSpec, eps: f64) -> Result<ConditionValue> {
    let r = RowInputs::from_spec(spec)?;
    lindeberg_value(&r, |tau| truncated_second_moment(spec, tau), eps, false)
}

/// `(1/(λ²b²)) Σ_i E X_i² 1{|X_i| > ε h'(λ) b}`.
pub fn lindeberg_b_functional(spec: &ChainSpec, eps: f64) -> Result<ConditionValue> {
    let r = RowInputs::from_spec(spec)?;
    lindeberg_value(&r, |tau| truncated_second_moment(spec, tau), eps, true)
}

/// Splits `f` at level `T`: the truncated part is re-centered against the
/// marginals, the tail takes the rest, and both share the transitions.
pub fn truncate(spec: &ChainSpec, t: f64) -> (ChainSpec, ChainSpec) {
    let laws = marginals(spec);
    let mut head = Vec::with_capacity(spec.n);
    let mut tail = Vec::with_capacity(spec.n);
    for (fi, pi) in spec.f.iter().zip(&laws.pi) {
        let cut: Vec<f64> = fi.iter().map(|&v| if v.abs() <= t { v } else { 0.0 }).collect();
        let mean: f64 = cut.iter().zip(pi).map(|(v, p)| v * p).sum();
        let h: Vec<f64> = cut.iter().map(|v| v - mean).collect();
        tail.push(fi.iter().zip(&h).map(|(v, hv)| v - hv).collect());
        head.push(h);
    }
    (spec.with_f(head), spec.with_f(tail))
}

/// `S_n / σ` for replicates `0..replicates`; replicate `r` draws from the
/// stream `(seed, r)`. The result does not depend on the thread count.
pub fn mc_normalized_sums(row: &Row, sigma: f64, replicates: usize, seed: u64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::ZeroVariance(format!("σ = {sigma}")));
    }
    Ok((0..replicates as u64)
        .into_par_iter()
        .map(|r| row.sample_sum(&mut Stream::new(seed, r)) / sigma)
        .collect())
}

/// `sup_x |F_emp(x) - Φ(x)|`, checking both one-sided gaps at every sample
/// point. `Φ` is `erfc(-x/√2)/2`.
pub fn ks_distance(sample: &[f64]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let phi = normal_cdf(x);
        d = d.max((i as f64 + 1.0) / k - phi).max(phi - i as f64 / k);
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleMoments {
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub excess_kurtosis: f64,
}

pub fn sample_moments(sample: &[f64]) -> Result<SampleMoments> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let k = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / k;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in sample {
        let d2 = (x - mean) * (x - mean);
        m2 += d2;
        m4 += d2 * d2;
    }
    let variance = if sample.len() > 1 { m2 / (k - 1.0) } else { 0.0 };
    let pop = m2 / k;
    let excess_kurtosis = if pop > 0.0 { (m4 / k) / (pop * pop) - 3.0 } else { f64::NAN };
    Ok(SampleMoments {
        mean,
        variance,
        excess_kurtosis,
    })
}

/// `5 √(2/R) · √(1 + κ⁺/2)`: five standard errors of the sample variance,
/// widened for positive excess kurtosis `κ`.
pub fn variance_tolerance(replicates: usize, excess_kurtosis: f64) -> f64 {
    let guard = (1.0 + excess_kurtosis.max(0.0) / 2.0).sqrt();
    5.0 * (2.0 / replicates as f64).sqrt() * guard
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Exact,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    ToZero,
    ToInfinity,
    Bounded,
    Inconclusive,
}

impl Trend {
    pub fn as_str(self) -> &'static str {
        match self {
            Trend::ToZero => "to_zero",
            Trend::ToInfinity => "to_infinity",
            Trend::Bounded => "bounded",
            Trend::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub n: usize,
    pub c_n: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub b: f64,
    pub value: f64,
    pub flag: Option<ConditionFlag>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionTrace {
    pub name: String,
    pub records: Vec<TraceRecord>,
    pub verdict: Trend,
    /// Verdicts are trend labels over a finite grid, not limits.
    pub heuristic: bool,
}

/// Log-log slope threshold separating a trend from a bounded sequence.
pub const TREND_SLOPE: f64 = 0.05;

/// Classifies `(n, value)` pairs by the least-squares slope of
/// `log value` against `log n`.
pub fn classify_trend(points: &[(usize, f64)]) -> Trend {
    if points.is_empty() || points.iter().any(|(_, v)| v.is_nan()) {
        return Trend::Inconclusive;
    }
    if points.iter().all(|(_, v)| *v == 0.0) {
        return Trend::ToZero;
    }
    if points.iter().all(|(_, v)| v.is_infinite()) {
        return Trend::ToInfinity;
    }
    if points.len() < 2 || points.iter().any(|(_, v)| !(v.is_finite() && *v > 0.0)) {
        return Trend::Inconclusive;
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, v)| v.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    if slope < -TREND_SLOPE {
        Trend::ToZero
    } else if slope > TREND_SLOPE {
        Trend::ToInfinity
    } else {
        Trend::Bounded
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LindebergValue {
    pub eps: f64,
    pub sigma_form: Option<ConditionValue>,
    pub b_form: Option<ConditionValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub normalization: Normalization,
    pub inputs: Option<RowInputs>,
    pub sigma2: f64,
    pub ks: f64,
    pub moments: Option<SampleMoments>,
    /// Sample variance within [`variance_tolerance`] of 1 (exact σ only).
    pub variance_within_tolerance: Option<bool>,
    pub cond_dob: Option<ConditionValue>,
    pub cond_log2: Option<ConditionValue>,
    pub cond_cd: Option<ConditionValue>,
    pub lindeberg: Vec<LindebergValue>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub family: String,
    pub params: Family,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub eps: Vec<f64>,
    pub ks_threshold: f64,
    pub rows: Vec<ExperimentRow>,
    pub traces: Vec<ConditionTrace>,
    pub ks_trend: Trend,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub eps: Vec<f64>,
    pub ks_threshold: f64,
}

impl ExperimentConfig {
    pub fn new(n_grid: Vec<usize>, replicates: usize, seed: u64) -> Self {
        Self {
            n_grid,
            replicates,
            seed,
            eps: DEFAULT_EPS.to_vec(),
            ks_threshold: DEFAULT_KS_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Parse("replicates must be >= 1".into()));
        }
        if self.n_grid.is_empty() || self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parse(format!(
                "n grid must be non-empty, positive and strictly increasing: {:?}",
                self.n_grid
            )));
        }
        if self.eps.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::Parse("ε values must be positive".into()));
        }
        Ok(())
    }
}

fn row_inputs_for(family: &Family, row: &Row) -> Result<(RowInputs, f64, Normalization)> {
    match row {
        Row::Finite(spec) => {
            let inputs = RowInputs::from_spec(spec)?;
            Ok((inputs, inputs.sigma * inputs.sigma, Normalization::Exact))
        }
        Row::Gaussian(g) => {
            let a = family.analytic(g.n).expect("gaussian rows carry analytic metadata");
            let sigma2 = a.sigma2.expect("gaussian σ² is analytic");
            let inputs = RowInputs {
                n: g.n,
                c_n: g.observable.sup_norm(),
                lambda: a.lambda,
                delta1: a.delta1,
                sigma: sigma2.sqrt(),
                b: a.b2.expect("gaussian b² is analytic").sqrt(),
            };
            Ok((inputs, sigma2, Normalization::Analytic))
        }
    }
}

fn lindeberg_row(row: &Row, inputs: &RowInputs, eps: f64) -> LindebergValue {
    let run = |b_form: bool| match row {
        Row::Finite(spec) => lindeberg_value(inputs, |tau| truncated_second_moment(spec, tau), eps, b_form),
        Row::Gaussian(g) => lindeberg_value(
            inputs,
            |tau| g.n as f64 * gaussian_truncated_moment(g.observable, tau),
            eps,
            b_form,
        ),
    };
    LindebergValue {
        eps,
        sigma_form: run(false).ok(),
        b_form: run(true).ok(),
    }
}

fn experiment_row(family: &Family, n: usize, cfg: &ExperimentConfig) -> ExperimentRow {
    let mut out = ExperimentRow {
        n,
        replicates: cfg.replicates,
        seed: cfg.seed,
        normalization: if family.is_finite() {
            Normalization::Exact
        } else {
            Normalization::Analytic
        },
        inputs: None,
        sigma2: f64::NAN,
        ks: f64::NAN,
        moments: None,
        variance_within_tolerance: None,
        cond_dob: None,
        cond_log2: None,
        cond_cd: None,
        lindeberg: Vec::new(),
        errors: Vec::new(),
    };
    let row = match family.row(n) {
        Ok(r) => r,
        Err(e) => {
            out.errors.push(e.to_string());
            return out;
        }
    };
    let (inputs, sigma2, normalization) = match row_inputs_for(family, &row) {
        Ok(v) => v,
        Err(e) => {
            out.errors.push(e.to_string());
            return out;
        }
    };
    out.inputs = Some(inputs);
    out.sigma2 = sigma2;
    out.normalization = normalization;
    let mut record = |label: &str, res: Result<ConditionValue>| match res {
        Ok(v) => Some(v),
        Err(e) => {
            out.errors.push(format!("{label}: {e}"));
            None
        }
    };
    out.cond_dob = record("cond_dob", condition_dob_from(&inputs));
    out.cond_log2 = record("cond_log2", condition_log2_from(&inputs));
    out.cond_cd = record("cond_cd", condition_dobrushin_cd_from(&inputs));
    out.lindeberg = cfg.eps.iter().map(|&e| lindeberg_row(&row, &inputs, e)).collect();
    match mc_normalized_sums(&row, sigma2.sqrt(), cfg.replicates, cfg.seed)
        .and_then(|s| Ok((ks_distance(&s)?, sample_moments(&s)?)))
    {
        Ok((ks, m)) => {
            out.ks = ks;
            if normalization == Normalization::Exact {
                out.variance_within_tolerance =
                    Some((m.variance - 1.0).abs() <= variance_tolerance(cfg.replicates, m.excess_kurtosis));
            }
            out.moments = Some(m);
        }
        Err(e) => out.errors.push(format!("monte_carlo: {e}")),
    }
    out
}

fn trace(name: &str, rows: &[ExperimentRow], pick: impl Fn(&ExperimentRow) -> Option<ConditionValue>) -> ConditionTrace {
    let records: Vec<TraceRecord> = rows
        .iter()
        .map(|r| {
            let v = pick(r);
            let i = r.inputs;
            TraceRecord {
                n: r.n,
                c_n: i.map_or(f64::NAN, |i| i.c_n),
                lambda: i.map_or(f64::NAN, |i| i.lambda),
                sigma: i.map_or(f64::NAN, |i| i.sigma),
                b: i.map_or(f64::NAN, |i| i.b),
                value: v.map_or(f64::NAN, |v| v.value),
                flag: v.and_then(|v| v.flag),
                error: if v.is_none() {
                    Some(r.errors.join("; "))
                } else {
                    None
                },
            }
        })
        .collect();
    let points: Vec<(usize, f64)> = records.iter().map(|r| (r.n, r.value)).collect();
    ConditionTrace {
        name: name.to_string(),
        verdict: classify_trend(&points),
        records,
        heuristic: true,
    }
}

/// Builds each row, evaluates the conditions, samples, and measures KS.
/// Failures at one `n` are recorded in that row; the run continues.
pub fn run_experiment(family: &Family, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let rows: Vec<ExperimentRow> = cfg.n_grid.iter().map(|&n| experiment_row(family, n, cfg)).collect();
    let traces = vec![
        trace("cond_dob", &rows, |r| r.cond_dob),
        trace("cond_log2", &rows, |r| r.cond_log2),
        trace("cond_cd", &rows, |r| r.cond_cd),
    ];
    let ks_points: Vec<(usize, f64)> = rows.iter().map(|r| (r.n, r.ks)).collect();
    Ok(ExperimentResult {
        family: family.descriptor(),
        params: family.clone(),
        n_grid: cfg.n_grid.clone(),
        replicates: cfg.replicates,
        seed: cfg.seed,
        eps: cfg.eps.clone(),
        ks_threshold: cfg.ks_threshold,
        rows,
        traces,
        ks_trend: classify_trend(&ks_points),
    })
}

fn row_flags(r: &ExperimentRow) -> String {
    let mut flags = Vec::new();
    for (name, v) in [("cond_dob", r.cond_dob), ("cond_log2", r.cond_log2), ("cond_cd", r.cond_cd)] {
        if let Some(f) = v.and_then(|v| v.flag) {
            flags.push(format!("{name}:{}", f.as_str()));
        }
    }
    if !r.errors.is_empty() {
        flags.push("error".to_string());
    }
    flags.join(";")
}

impl ExperimentResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// One line per `n`: `n,lambda,sigma,ks,cond_dob,cond_log2,cond_cd,flags`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,lambda,sigma,ks,cond_dob,cond_log2,cond_cd,flags\n");
        let val = |v: Option<ConditionValue>| fmt17(v.map_or(f64::NAN, |v| v.value));
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.n,
                fmt17(r.inputs.map_or(f64::NAN, |i| i.lambda)),
                fmt17(r.inputs.map_or(f64::NAN, |i| i.sigma)),
                fmt17(r.ks),
                val(r.cond_dob),
                val(r.cond_log2),
                val(r.cond_cd),
                row_flags(r)
            ));
        }
        out
    }

    /// Two-column gnuplot files: `(file name, contents)`.
    pub fn plot_files(&self) -> Vec<(String, String)> {
        let mut files = Vec::new();
        let mut ks = String::from("# n ks\n");
        for r in &self.rows {
            ks.push_str(&format!("{} {}\n", r.n, fmt17(r.ks)));
        }
        files.push(("ks.dat".to_string(), ks));
        for t in &self.traces {
            let mut body = format!("# n {}\n", t.name);
            for rec in &t.records {
                body.push_str(&format!("{} {}\n", rec.n, fmt17(rec.value)));
            }
            files.push((format!("{}.dat", t.name), body));
        }
        files
    }
}
