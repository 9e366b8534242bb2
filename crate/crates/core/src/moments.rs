//! Exact second and higher moments of partial sums via linear recursions,
//! the martingale decomposition `S_n = Σ d_j`, and numerical verification
//! of the variance and moment inequalities.
//!
//! Notation: `g_j(x) = E(S_n - S_j | ξ_j = x)`, so that `A_j = g_j(ξ_j)` and
//! `d_j = X_j + A_j - A_{j-1}` with `A_0 = E S_n = 0`.

use serde::Serialize;

use crate::chain::{joint_from, marginals, path_sum, visit_paths, ChainSpec, MarginalLaws, DEFAULT_ENUMERATION_CAP};
use crate::checks::{CheckOutcome, Tolerances};
use crate::coefficients::{delta_coefficient, rho1_lambda, rho_k_sequence};
use crate::error::{Error, Result};
use crate::linalg::{kahan_sum, CompensatedSum};

/// Computed `ρ_1` values within this distance of 0 or 1 are treated as
/// exactly 0 (independence) or 1 (no mixing). The singular values of an
/// exactly rank-one normalized joint come out at roundoff level, ~1e-16.
pub const RHO_DEGENERACY_TOL: f64 = 1e-12;

/// Enumeration cap for the pathwise checks and the exponential-moment LHS.
pub const PATHWISE_CAP: usize = DEFAULT_ENUMERATION_CAP;

/// Largest `m^n` for which `σ²` is also cross-checked by path enumeration.
pub const ENUMERATED_SIGMA_CAP: usize = 100_000;

/// `g_j` for `j = 1..n`; `g[n-1] ≡ 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailConditional {
    pub g: Vec<Vec<f64>>,
}

/// `b_n² = Σ_i var X_i`.
pub fn b_squared(spec: &ChainSpec) -> f64 {
    b_squared_with(spec, &marginals(spec))
}

fn b_squared_with(spec: &ChainSpec, laws: &MarginalLaws) -> f64 {
    kahan_sum(
        spec.f
            .iter()
            .zip(&laws.pi)
            .flat_map(|(fi, pi)| fi.iter().zip(pi).map(|(v, p)| p * v * v)),
    )
}

/// `Σ_i E|X_i|^p`.
pub fn absolute_moment_sum(spec: &ChainSpec, laws: &MarginalLaws, p: f64) -> f64 {
    kahan_sum(
        spec.f
            .iter()
            .zip(&laws.pi)
            .flat_map(|(fi, pi)| fi.iter().zip(pi).map(move |(v, w)| w * v.abs().powf(p))),
    )
}

/// `var S_n` by the forward recursion on `h_j(x) = E(S_j 1{ξ_j = x})`:
/// `h_{j+1} = h_j Q_j + f_{j+1} π_{j+1}`, with
/// `E S_n² = Σ_j E X_j² + 2 Σ_{j>=2} Σ_y f_j(y) (h_{j-1} Q_{j-1})(y)`.
pub fn sigma_squared(spec: &ChainSpec) -> f64 {
    sigma_squared_with(spec, &marginals(spec))
}

fn sigma_squared_with(spec: &ChainSpec, laws: &MarginalLaws) -> f64 {
    let mut acc = CompensatedSum::new();
    acc.add(b_squared_with(spec, laws));
    let mut h: Vec<f64> = spec.f[0].iter().zip(&laws.pi[0]).map(|(v, p)| v * p).collect();
    for (j, q) in spec.transitions.iter().enumerate() {
        let carried = q.left_apply(&h);
        let fj = &spec.f[j + 1];
        acc.add(2.0 * kahan_sum(fj.iter().zip(&carried).map(|(v, c)| v * c)));
        h = carried
            .iter()
            .zip(fj.iter().zip(&laws.pi[j + 1]))
            .map(|(c, (v, p))| c + v * p)
            .collect();
    }
    acc.value()
}

/// `var S_n = Σ_i Σ_j cov(X_i, X_j)`, each covariance obtained by pushing
/// the signed measure `f_i π_i` forward through `Q_i, …, Q_{j-1}`.
/// `O(n² m²)`; used as an independent cross-check of [`sigma_squared`].
pub fn sigma_squared_covariance_oracle(spec: &ChainSpec) -> f64 {
    let laws = marginals(spec);
    let mut acc = CompensatedSum::new();
    for i in 0..spec.n {
        let mut measure: Vec<f64> = spec.f[i].iter().zip(&laws.pi[i]).map(|(v, p)| v * p).collect();
        acc.add(kahan_sum(measure.iter().zip(&spec.f[i]).map(|(m, v)| m * v)));
        for j in i + 1..spec.n {
            measure = spec.transitions[j - 1].left_apply(&measure);
            acc.add(2.0 * kahan_sum(measure.iter().zip(&spec.f[j]).map(|(m, v)| m * v)));
        }
    }
    acc.value()
}

/// `E S_n²` by path enumeration.
pub fn sigma_squared_enumerated(spec: &ChainSpec, cap: usize) -> Result<f64> {
    crate::chain::enumerate_expectation_with_cap(spec, cap, |p| path_sum(spec, p).powi(2))
}

/// Backward recursion `g_n = 0`, `g_j = Q_j (f_{j+1} + g_{j+1})`.
pub fn tail_conditional(spec: &ChainSpec) -> TailConditional {
    let n = spec.n;
    let mut g = vec![vec![0.0; spec.m]; n];
    for j in (0..n - 1).rev() {
        let ahead: Vec<f64> = spec.f[j + 1].iter().zip(&g[j + 1]).map(|(a, b)| a + b).collect();
        g[j] = spec.transitions[j].right_apply(&ahead);
    }
    TailConditional { g }
}

/// `Σ_j E|A_j|^p`.
pub fn a_moments(spec: &ChainSpec, tc: &TailConditional, p: f64) -> Result<f64> {
    if !(p >= 2.0) {
        return Err(Error::InvalidOrder(p));
    }
    let laws = marginals(spec);
    Ok(a_moments_with(&laws, tc, p))
}

fn a_moments_with(laws: &MarginalLaws, tc: &TailConditional, p: f64) -> f64 {
    kahan_sum(
        tc.g.iter()
            .zip(&laws.pi)
            .flat_map(|(gj, pj)| gj.iter().zip(pj).map(move |(g, w)| w * g.abs().powf(p))),
    )
}

/// `E d_j²` for each `j`, from the law of `ξ_1` (for `j = 1`) and the
/// adjacent joint laws of `(ξ_{j-1}, ξ_j)`.
pub fn martingale_second_moments(spec: &ChainSpec, tc: &TailConditional) -> Vec<f64> {
    let laws = marginals(spec);
    martingale_second_moments_with(spec, &laws, tc)
}

fn martingale_second_moments_with(spec: &ChainSpec, laws: &MarginalLaws, tc: &TailConditional) -> Vec<f64> {
    let mut out = Vec::with_capacity(spec.n);
    out.push(kahan_sum(
        laws.pi[0]
            .iter()
            .zip(spec.f[0].iter().zip(&tc.g[0]))
            .map(|(p, (f, g))| p * (f + g).powi(2)),
    ));
    for j in 1..spec.n {
        let joint = joint_from(&laws.pi[j - 1], &spec.transitions[j - 1]);
        let mut acc = CompensatedSum::new();
        for x in 0..spec.m {
            for y in 0..spec.m {
                let w = joint[(x, y)];
                if w == 0.0 {
                    continue;
                }
                let d = spec.f[j][y] + tc.g[j][y] - tc.g[j - 1][x];
                acc.add(w * d * d);
            }
        }
        out.push(acc.value());
    }
    out
}

/// `max over paths of |Σ_j d_j - S_n|`.
pub fn martingale_pathwise_residual(spec: &ChainSpec, tc: &TailConditional, cap: usize) -> Result<f64> {
    let mut worst = 0.0_f64;
    visit_paths(spec, cap, |path, _| {
        let mut prev = 0.0;
        let mut sum_d = 0.0;
        let mut s = 0.0;
        for (j, &x) in path.iter().enumerate() {
            let a = tc.g[j][x];
            sum_d += spec.f[j][x] + a - prev;
            s += spec.f[j][x];
            prev = a;
        }
        worst = worst.max((sum_d - s).abs());
    })?;
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleResiduals {
    /// `max_paths |Σ d_j - S_n|`; `None` when the row is too large to enumerate.
    pub pathwise: Option<f64>,
    pub sum_ed2: f64,
    pub sigma2: f64,
    /// `|Σ_j E d_j² - σ_n²|`.
    pub moment: f64,
}

pub fn martingale_check(spec: &ChainSpec) -> MartingaleResiduals {
    let tc = tail_conditional(spec);
    let sum_ed2 = kahan_sum(martingale_second_moments(spec, &tc));
    let sigma2 = sigma_squared(spec);
    MartingaleResiduals {
        pathwise: martingale_pathwise_residual(spec, &tc, PATHWISE_CAP).ok(),
        sum_ed2,
        sigma2,
        moment: (sum_ed2 - sigma2).abs(),
    }
}

/// Everything the inequality checks need, computed once per row.
#[derive(Debug, Clone)]
pub struct RowQuantities<'a> {
    pub spec: &'a ChainSpec,
    pub laws: MarginalLaws,
    pub rho_k: Vec<f64>,
    pub rho1: f64,
    pub delta1: f64,
    pub b2: f64,
    pub sigma2: f64,
    pub tail: TailConditional,
    /// `max |f_i(x)|` over states with `π_i(x) > 0`.
    pub c_bound: f64,
}

impl<'a> RowQuantities<'a> {
    pub fn new(spec: &'a ChainSpec) -> Result<Self> {
        let laws = marginals(spec);
        let rho_k = rho_k_sequence(spec)?;
        let (rho1, _) = rho1_lambda(spec)?;
        let delta1 = spec.transitions.iter().map(delta_coefficient).fold(0.0, f64::max);
        Ok(Self {
            b2: b_squared_with(spec, &laws),
            sigma2: sigma_squared_with(spec, &laws),
            tail: tail_conditional(spec),
            c_bound: essential_bound(spec, &laws),
            laws,
            rho_k,
            rho1,
            delta1,
            spec,
        })
    }

    fn rho_is_zero(&self) -> bool {
        self.rho1 <= RHO_DEGENERACY_TOL
    }

    fn rho_is_one(&self) -> bool {
        self.rho1 >= 1.0 - RHO_DEGENERACY_TOL
    }

    pub fn a_moment(&self, p: f64) -> f64 {
        a_moments_with(&self.laws, &self.tail, p)
    }
}

/// `max |f_i(x)|` over states with positive marginal mass.
pub fn essential_bound(spec: &ChainSpec, laws: &MarginalLaws) -> f64 {
    spec.f
        .iter()
        .zip(&laws.pi)
        .flat_map(|(fi, pi)| fi.iter().zip(pi).filter(|(_, &p)| p > 0.0).map(|(v, _)| v.abs()))
        .fold(0.0, f64::max)
}

/// Two-sided variance bounds in terms of `ρ_1`, plus the agreement of the
/// `ρ` and `λ = 1 - ρ` parameterizations.
pub fn variance_bounds_from(q: &RowQuantities<'_>, tol: &Tolerances) -> Vec<CheckOutcome> {
    let rho = if q.rho_is_zero() { 0.0 } else { q.rho1 };
    let lambda = 1.0 - rho;
    let slack = tol.slack(q.b2);
    let lower_factor = (1.0 - rho) / (1.0 + rho);
    let mut out = vec![CheckOutcome::leq("variance_lower", lower_factor * q.b2, q.sigma2, slack)];
    out.push(CheckOutcome::close(
        "variance_lower_lambda_form",
        lower_factor,
        lambda / (2.0 - lambda),
        1e-12,
    ));
    if q.rho_is_one() {
        out.push(CheckOutcome::skipped("variance_upper", "rho1 = 1: upper bound vacuous"));
    } else {
        let upper_factor = (1.0 + rho) / (1.0 - rho);
        out.push(CheckOutcome::leq("variance_upper", q.sigma2, upper_factor * q.b2, slack));
        out.push(CheckOutcome::close(
            "variance_upper_lambda_form",
            upper_factor,
            (2.0 - lambda) / lambda,
            1e-12 * upper_factor.max(1.0),
        ));
    }
    out
}

pub fn variance_bounds_check(spec: &ChainSpec, tol: &Tolerances) -> Result<Vec<CheckOutcome>> {
    Ok(variance_bounds_from(&RowQuantities::new(spec)?, tol))
}

/// Variance bounds in terms of the contraction coefficient `δ_1`.
pub fn delta_variance_bounds_from(q: &RowQuantities<'_>, tol: &Tolerances) -> Vec<CheckOutcome> {
    if q.delta1 >= 1.0 - RHO_DEGENERACY_TOL {
        return vec![
            CheckOutcome::skipped("delta_variance_lower", "delta1 = 1"),
            CheckOutcome::skipped("delta_variance_upper", "delta1 = 1"),
        ];
    }
    let d = q.delta1;
    let factor = (1.0 - d) / (1.0 + d.sqrt()).powi(2);
    let slack = tol.slack(q.b2);
    vec![
        CheckOutcome::leq("delta_variance_lower", factor * q.b2, q.sigma2, slack),
        CheckOutcome::leq("delta_variance_upper", q.sigma2, q.b2 / factor, slack),
    ]
}

pub fn delta_variance_bounds_check(spec: &ChainSpec, tol: &Tolerances) -> Result<Vec<CheckOutcome>> {
    Ok(delta_variance_bounds_from(&RowQuantities::new(spec)?, tol))
}

/// `σ² >= ((1 - ρ_1²) / ρ_1²) Σ E A_i²`.
pub fn est1_from(q: &RowQuantities<'_>, tol: &Tolerances) -> CheckOutcome {
    if q.rho_is_zero() {
        return CheckOutcome::skipped("est1", "rho1 = 0: all A_j vanish");
    }
    if q.rho_is_one() {
        return CheckOutcome::skipped("est1", "rho1 = 1");
    }
    let r2 = q.rho1 * q.rho1;
    let lhs = (1.0 - r2) / r2 * q.a_moment(2.0);
    CheckOutcome::leq("est1", lhs, q.sigma2, tol.slack(q.sigma2))
}

pub fn est1_check(spec: &ChainSpec, tol: &Tolerances) -> Result<CheckOutcome> {
    Ok(est1_from(&RowQuantities::new(spec)?, tol))
}

/// Verifies `ρ_k <= ρ_1^k` for every lag before `ρ_1` is used as a
/// geometric rate.
pub fn verify_domination(rho_k: &[f64], rho1: f64, tol: &Tolerances) -> Result<()> {
    for (i, &r) in rho_k.iter().enumerate() {
        let bound = rho1.powi(i as i32 + 1);
        if r > bound + tol.coef {
            return Err(Error::DominationFailed { k: i + 1, rho_k: r, bound });
        }
    }
    Ok(())
}

/// Moment inequality for `Σ_j E|A_j|^p`, both forms. The inner sum of the
/// first form runs over `k = 1..n-1`.
pub fn lemma_ppower_from(q: &RowQuantities<'_>, p: f64, tol: &Tolerances) -> Result<Vec<CheckOutcome>> {
    if !(p >= 2.0) {
        return Err(Error::InvalidOrder(p));
    }
    let lhs = q.a_moment(p);
    let x_p = absolute_moment_sum(q.spec, &q.laws, p);
    let inner = kahan_sum(q.rho_k.iter().map(|r| r.powf(2.0 / p)));
    let rhs1 = 2f64.powf(p - 2.0) * inner.powf(p) * x_p;
    let mut out = vec![CheckOutcome::leq(format!("ppower_first[p={p}]"), lhs, rhs1, tol.slack(rhs1))];
    let second = format!("ppower_second[p={p}]");
    if q.rho_is_one() {
        out.push(CheckOutcome::skipped(second, "rho1 = 1"));
        return Ok(out);
    }
    verify_domination(&q.rho_k, q.rho1, tol)?;
    let rho = if q.rho_is_zero() { 0.0 } else { q.rho1 };
    let rhs2 = p.powf(p) / (4.0 * (1.0 - rho).powf(p)) * x_p;
    out.push(CheckOutcome::leq(second, lhs, rhs2, tol.slack(rhs2)));
    Ok(out)
}

pub fn lemma_ppower_check(spec: &ChainSpec, p: f64, tol: &Tolerances) -> Result<Vec<CheckOutcome>> {
    lemma_ppower_from(&RowQuantities::new(spec)?, p, tol)
}

/// `(1 - ρ_1) / (6 C)`; infinite when every observation vanishes.
pub fn exp_t_max(q: &RowQuantities<'_>) -> f64 {
    let rho = if q.rho_is_zero() { 0.0 } else { q.rho1 };
    (1.0 - rho) / (6.0 * q.c_bound)
}

/// `E exp(t max_j |A_j|)` by path enumeration.
pub fn exp_moment_of_max_a(spec: &ChainSpec, tc: &TailConditional, t: f64, cap: usize) -> Result<f64> {
    crate::chain::enumerate_expectation_with_cap(spec, cap, |path| {
        let max_a = path
            .iter()
            .enumerate()
            .map(|(j, &x)| tc.g[j][x].abs())
            .fold(0.0, f64::max);
        (t * max_a).exp()
    })
}

/// Exponential inequality `E exp(t max_j |A_j|) <= (1 + 2 t b_n / (1 - ρ))²`
/// for admissible `t`; at `t = (1 - ρ)/(6C)` also the specialized right
/// side `(1 + b_n / (3C))²`.
pub fn lemma_exp_from(q: &RowQuantities<'_>, t: f64, tol: &Tolerances) -> Result<Vec<CheckOutcome>> {
    let name = format!("exp[t={t:.6e}]");
    if q.c_bound == 0.0 {
        return Ok(vec![CheckOutcome::skipped(name, "all observations vanish")]);
    }
    if q.rho_is_one() {
        return Ok(vec![CheckOutcome::skipped(name, "rho1 = 1")]);
    }
    let t_max = exp_t_max(q);
    if t > t_max * (1.0 + 1e-9) {
        return Err(Error::InvalidT { t, max: t_max });
    }
    verify_domination(&q.rho_k, q.rho1, tol)?;
    let rho = if q.rho_is_zero() { 0.0 } else { q.rho1 };
    let lhs = exp_moment_of_max_a(q.spec, &q.tail, t, PATHWISE_CAP)?;
    let b = q.b2.sqrt();
    let rhs = (1.0 + 2.0 * t * b / (1.0 - rho)).powi(2);
    let mut out = vec![CheckOutcome::leq(name, lhs, rhs, tol.slack(rhs))];
    if (t - t_max).abs() <= 1e-9 * t_max {
        let special = (1.0 + b / (3.0 * q.c_bound)).powi(2);
        out.push(CheckOutcome::leq("exp_special", lhs, special, tol.slack(special)));
        out.push(CheckOutcome::close("exp_special_agrees", rhs, special, tol.slack(special)));
    }
    Ok(out)
}

pub fn lemma_exp_check(spec: &ChainSpec, t: f64, tol: &Tolerances) -> Result<Vec<CheckOutcome>> {
    lemma_exp_from(&RowQuantities::new(spec)?, t, tol)
}

/// Default admissible `t` values, as fractions of `(1 - ρ_1)/(6C)`.
pub const EXP_T_FRACTIONS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];
/// Default moment orders for the moment inequality.
pub const P_ORDERS: [f64; 4] = [2.0, 2.5, 3.0, 4.0];

/// Options for [`moment_report`].
#[derive(Debug, Clone)]
pub struct MomentOptions {
    pub p_orders: Vec<f64>,
    pub exp_fractions: Vec<f64>,
    pub tol: Tolerances,
}

impl Default for MomentOptions {
    fn default() -> Self {
        Self {
            p_orders: P_ORDERS.to_vec(),
            exp_fractions: EXP_T_FRACTIONS.to_vec(),
            tol: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AMoment {
    pub p: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub n: usize,
    pub m: usize,
    pub b2: f64,
    pub sigma2: f64,
    /// Covariance-summation oracle.
    pub sigma2_oracle: f64,
    /// Path-enumeration oracle, when `m^n` is small enough.
    pub sigma2_enumerated: Option<f64>,
    pub ea_p: Vec<AMoment>,
    pub mart_residual: f64,
    pub pathwise_residual: Option<f64>,
    pub rho1: f64,
    pub delta1: f64,
    pub bound_checks: Vec<CheckOutcome>,
}

/// Oracle cross-checks for `σ²`: `tol.rel` against the covariance sum and
/// 1e-10 against path enumeration, both relative to `max(1, σ²)`.
pub fn sigma_oracle_checks(
    sigma2: f64,
    oracle: f64,
    enumerated: Option<f64>,
    tol: &Tolerances,
) -> Vec<CheckOutcome> {
    let mut out = vec![CheckOutcome::close("sigma2_vs_covariance_oracle", sigma2, oracle, tol.slack(sigma2.max(1.0)))];
    if let Some(e) = enumerated {
        out.push(CheckOutcome::close("sigma2_vs_enumeration", sigma2, e, 1e-10 * sigma2.abs().max(1.0)));
    }
    out
}

pub fn martingale_checks(res: &MartingaleResiduals, tol: &Tolerances) -> Vec<CheckOutcome> {
    let mut out = Vec::with_capacity(2);
    match res.pathwise {
        Some(r) => out.push(CheckOutcome::leq("martingale_pathwise", r, 0.0, 1e-10)),
        None => out.push(CheckOutcome::skipped("martingale_pathwise", "too many paths to enumerate")),
    }
    out.push(CheckOutcome::close(
        "martingale_orthogonality",
        res.sum_ed2,
        res.sigma2,
        tol.slack(res.sigma2.max(1.0)),
    ));
    out
}

/// Runs every exact moment computation and inequality check on one row.
pub fn moment_report(spec: &ChainSpec, opts: &MomentOptions) -> Result<MomentReport> {
    let q = RowQuantities::new(spec)?;
    let tol = &opts.tol;
    let sigma2_oracle = sigma_squared_covariance_oracle(spec);
    let sigma2_enumerated = if spec.path_count() <= ENUMERATED_SIGMA_CAP as f64 {
        Some(sigma_squared_enumerated(spec, ENUMERATED_SIGMA_CAP)?)
    } else {
        None
    };
    let mart = martingale_check(spec);
    let mut checks = sigma_oracle_checks(q.sigma2, sigma2_oracle, sigma2_enumerated, tol);
    checks.extend(martingale_checks(&mart, tol));
    checks.extend(variance_bounds_from(&q, tol));
    checks.extend(delta_variance_bounds_from(&q, tol));
    checks.push(est1_from(&q, tol));
    for &p in &opts.p_orders {
        checks.extend(lemma_ppower_from(&q, p, tol)?);
    }
    checks.extend(exp_checks(&q, &opts.exp_fractions, tol)?);
    Ok(MomentReport {
        n: spec.n,
        m: spec.m,
        b2: q.b2,
        sigma2: q.sigma2,
        sigma2_oracle,
        sigma2_enumerated,
        ea_p: opts
            .p_orders
            .iter()
            .map(|&p| AMoment { p, value: q.a_moment(p) })
            .collect(),
        mart_residual: mart.moment,
        pathwise_residual: mart.pathwise,
        rho1: q.rho1,
        delta1: q.delta1,
        bound_checks: checks,
    })
}

/// Exponential checks at `fraction * t_max` for each fraction; skipped when
/// the row is too large to enumerate.
pub fn exp_checks(q: &RowQuantities<'_>, fractions: &[f64], tol: &Tolerances) -> Result<Vec<CheckOutcome>> {
    if q.spec.path_count() > PATHWISE_CAP as f64 {
        return Ok(vec![CheckOutcome::skipped("exp", "too many paths to enumerate")]);
    }
    let t_max = exp_t_max(q);
    if !t_max.is_finite() || q.rho_is_one() {
        return lemma_exp_from(q, 0.0, tol);
    }
    let mut out = Vec::new();
    for &frac in fractions {
        let t = if frac == 1.0 { t_max } else { frac * t_max };
        out.extend(lemma_exp_from(q, t, tol)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SquareMatrix;

    fn q(a: f64) -> SquareMatrix {
        SquareMatrix::from_rows(&[vec![1.0 - a, a], vec![a, 1.0 - a]]).unwrap()
    }

    fn two_state(a: f64, n: usize) -> ChainSpec {
        ChainSpec::new(vec![0.5, 0.5], vec![q(a); n - 1], vec![vec![-1.0, 1.0]; n])
    }

    fn product_chain(n: usize) -> ChainSpec {
        let row = vec![0.2, 0.5, 0.3];
        let f = vec![-1.0, 0.4, -0.0];
        let mean: f64 = row.iter().zip(&f).map(|(p, v)| p * v).sum();
        let f: Vec<f64> = f.iter().map(|v| v - mean).collect();
        ChainSpec::new(row.clone(), vec![SquareMatrix::repeated_row(&row); n - 1], vec![f; n])
    }

    fn close(a: f64, b: f64, eps: f64) {
        assert!((a - b).abs() <= eps, "{a} vs {b}");
    }

    #[test]
    fn b_squared_examples() {
        close(b_squared(&two_state(0.25, 3)), 3.0, 1e-15);
        let zero = two_state(0.25, 3).with_f(vec![vec![0.0, 0.0]; 3]);
        assert_eq!(b_squared(&zero), 0.0);
        let spec = ChainSpec::new(
            vec![1.0 / 3.0; 3],
            vec![SquareMatrix::identity(3); 2],
            vec![vec![-1.0, 0.0, 1.0], vec![0.0; 3], vec![0.0; 3]],
        );
        close(b_squared(&spec), 2.0 / 3.0, 1e-15);
    }

    #[test]
    fn sigma_squared_examples() {
        close(sigma_squared(&two_state(0.25, 3)), 5.5, 1e-14);
        close(sigma_squared(&two_state(0.5, 5)), 5.0, 1e-14);
        let p = product_chain(6);
        close(sigma_squared(&p), b_squared(&p), 1e-14);
    }

    #[test]
    fn tail_conditional_examples() {
        let tc = tail_conditional(&two_state(0.25, 3));
        assert_eq!(tc.g[0], vec![-0.75, 0.75]);
        assert_eq!(tc.g[1], vec![-0.5, 0.5]);
        assert_eq!(tc.g[2], vec![0.0, 0.0]);
        let tp = tail_conditional(&product_chain(4));
        assert!(tp.g.iter().flatten().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn a_moment_examples() {
        let spec = two_state(0.25, 3);
        let tc = tail_conditional(&spec);
        close(a_moments(&spec, &tc, 2.0).unwrap(), 0.8125, 1e-15);
        close(a_moments(&spec, &tc, 4.0).unwrap(), 0.37890625, 1e-15);
        let p = product_chain(4);
        assert!(a_moments(&p, &tail_conditional(&p), 2.0).unwrap() < 1e-30);
        assert!(matches!(a_moments(&spec, &tc, 1.5), Err(Error::InvalidOrder(_))));
    }

    #[test]
    fn martingale_examples() {
        let r = martingale_check(&two_state(0.25, 3));
        assert!(r.pathwise.unwrap() <= 1e-10);
        assert!(r.moment <= 1e-10);
        close(r.sum_ed2, 5.5, 1e-12);
        let p = product_chain(5);
        let r = martingale_check(&p);
        close(r.sum_ed2, b_squared(&p), 1e-12);
    }

    #[test]
    fn variance_bound_examples() {
        let tol = Tolerances::default();
        let c = variance_bounds_check(&two_state(0.25, 3), &tol).unwrap();
        assert!(c.iter().all(CheckOutcome::passed), "{c:?}");
        close(c[0].lhs, 1.0, 1e-12);
        close(c[2].rhs, 9.0, 1e-12);
        let c = variance_bounds_check(&product_chain(7), &tol).unwrap();
        assert!(c.iter().all(CheckOutcome::passed));
        assert!(c[0].margin.abs() <= 1e-10 && c[2].margin.abs() <= 1e-10);
    }

    #[test]
    fn delta_bound_examples() {
        let tol = Tolerances::default();
        let c = delta_variance_bounds_check(&two_state(0.25, 3), &tol).unwrap();
        assert!(c.iter().all(CheckOutcome::passed));
        let factor = 0.5 / (1.0 + 0.5f64.sqrt()).powi(2);
        close(factor, 0.171_572_875_253_809_9, 1e-15);
        close(c[0].lhs, 3.0 * factor, 1e-12);
        close(c[1].rhs, 3.0 * 5.828_427_124_746_19, 1e-9);
        let c = delta_variance_bounds_check(&product_chain(4), &tol).unwrap();
        close(c[0].lhs, c[0].rhs, 1e-12);
        let ident = ChainSpec::new(vec![0.5, 0.5], vec![SquareMatrix::identity(2); 2], vec![vec![-1.0, 1.0]; 3]);
        let c = delta_variance_bounds_check(&ident, &tol).unwrap();
        assert!(c.iter().all(|o| o.status == crate::checks::CheckStatus::Skipped));
    }

    #[test]
    fn est1_examples() {
        let tol = Tolerances::default();
        let c = est1_check(&two_state(0.25, 3), &tol).unwrap();
        assert!(c.passed());
        close(c.lhs, 2.4375, 1e-12);
        close(c.rhs, 5.5, 1e-12);
        let c = est1_check(&product_chain(4), &tol).unwrap();
        assert_eq!(c.status, crate::checks::CheckStatus::Skipped);
    }

    #[test]
    fn ppower_examples() {
        let tol = Tolerances::default();
        let c = lemma_ppower_check(&two_state(0.25, 3), 2.0, &tol).unwrap();
        assert!(c.iter().all(CheckOutcome::passed));
        close(c[0].lhs, 0.8125, 1e-12);
        close(c[0].rhs, 1.6875, 1e-12);
        close(c[1].rhs, 12.0, 1e-12);
        let c = lemma_ppower_check(&product_chain(4), 4.0, &tol).unwrap();
        assert!(c.iter().all(CheckOutcome::passed));
        assert!(matches!(
            lemma_ppower_check(&two_state(0.25, 3), 1.0, &tol),
            Err(Error::InvalidOrder(_))
        ));
    }

    #[test]
    fn exp_examples() {
        let tol = Tolerances::default();
        let c = lemma_exp_check(&two_state(0.25, 3), 1.0 / 12.0, &tol).unwrap();
        assert!(c.iter().all(CheckOutcome::passed), "{c:?}");
        close(c[0].lhs, (1.0f64 / 16.0).exp(), 1e-12);
        close(c[0].rhs, (1.0 + 3f64.sqrt() / 3.0).powi(2), 1e-12);
        assert_eq!(c.len(), 3);
        let c = lemma_exp_check(&product_chain(4), 0.01, &tol).unwrap();
        close(c[0].lhs, 1.0, 1e-12);
        assert!(c[0].passed());
        assert!(matches!(
            lemma_exp_check(&two_state(0.25, 3), 1.0, &tol),
            Err(Error::InvalidT { .. })
        ));
    }

    #[test]
    fn full_report_passes() {
        let rep = moment_report(&two_state(0.25, 3), &MomentOptions::default()).unwrap();
        assert!(rep.bound_checks.iter().all(|c| !c.failed()), "{:?}", rep.bound_checks);
        close(rep.sigma2_enumerated.unwrap(), 5.5, 1e-12);
    }
}
