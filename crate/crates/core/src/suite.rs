//! Seeded spec corpora and the grouped verification suite behind `verify`
//! and `selftest`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{validate, ChainSpec};
use crate::checks::{fmt17, CheckOutcome, CheckStatus, Tolerances};
use crate::clt::truncate;
use crate::coefficients::coefficient_report;
use crate::error::{Error, Result};
use crate::families::{builtin_finite_families, Family};
use crate::linalg::SquareMatrix;
use crate::moments::{
    b_squared, delta_variance_bounds_from, est1_from, exp_checks, lemma_ppower_from, martingale_check,
    martingale_checks, sigma_oracle_checks, sigma_squared, sigma_squared_covariance_oracle, sigma_squared_enumerated,
    variance_bounds_from, RowQuantities, ENUMERATED_SIGMA_CAP, EXP_T_FRACTIONS, P_ORDERS,
};
use crate::rng::Stream;

/// Master seed pinned for `selftest`.
pub const SELFTEST_SEED: u64 = 20_240_601;
pub const MAIN_CORPUS_SIZE: usize = 1000;
pub const APPENDIX_CORPUS_SIZE: usize = 500;
pub const FAMILY_GRID: [usize; 6] = [2, 3, 5, 8, 13, 21];
/// Stream-id offset separating the appendix corpus from the main corpus.
const APPENDIX_STREAM_BASE: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckGroup {
    Coefficients,
    Sigma,
    Martingale,
    Variance,
    Delta,
    Est1,
    Ppower,
    Exp,
    Truncation,
}

impl CheckGroup {
    pub const ALL: [CheckGroup; 9] = [
        CheckGroup::Coefficients,
        CheckGroup::Sigma,
        CheckGroup::Martingale,
        CheckGroup::Variance,
        CheckGroup::Delta,
        CheckGroup::Est1,
        CheckGroup::Ppower,
        CheckGroup::Exp,
        CheckGroup::Truncation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckGroup::Coefficients => "coefficients",
            CheckGroup::Sigma => "sigma",
            CheckGroup::Martingale => "martingale",
            CheckGroup::Variance => "variance",
            CheckGroup::Delta => "delta",
            CheckGroup::Est1 => "est1",
            CheckGroup::Ppower => "ppower",
            CheckGroup::Exp => "exp",
            CheckGroup::Truncation => "truncation",
        }
    }

    /// Parses a comma-separated selector; `all` selects every group.
    pub fn parse_list(list: &str) -> Result<Vec<CheckGroup>> {
        let mut out = Vec::new();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if item == "all" {
                return Ok(Self::ALL.to_vec());
            }
            let g: CheckGroup = item.parse()?;
            if !out.contains(&g) {
                out.push(g);
            }
        }
        if out.is_empty() {
            return Err(Error::Parse("empty check selector".into()));
        }
        out.sort();
        Ok(out)
    }
}

impl FromStr for CheckGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|g| g.as_str()).collect();
                Error::Parse(format!("unknown check group `{s}` (expected one of {} or all)", names.join(", ")))
            })
    }
}

impl fmt::Display for CheckGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Checks of one group on one spec.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupOutcome {
    pub group: CheckGroup,
    pub checks: Vec<CheckOutcome>,
}

/// `Var(S_n'') <= (2/λ) Σ E f''²` for the tail part of a truncation at half
/// the sup-norm.
fn truncation_checks(q: &RowQuantities<'_>, tol: &Tolerances) -> Vec<CheckOutcome> {
    if q.rho1 >= 1.0 - 1e-12 {
        return vec![CheckOutcome::skipped("truncation_tail_variance", "ρ₁ = 1")];
    }
    let t = 0.5 * q.c_bound;
    let (head, tail) = truncate(q.spec, t);
    let lambda = 1.0 - q.rho1;
    let tail_var = sigma_squared(&tail);
    let tail_b2 = b_squared(&tail);
    // f' + f'' reproduces f up to the rounding of one subtraction
    let mut worst: f64 = 0.0;
    for ((h, t), f) in head.f.iter().zip(&tail.f).zip(&q.spec.f) {
        for ((a, b), c) in h.iter().zip(t).zip(f) {
            let scale = c.abs().max(a.abs()).max(f64::MIN_POSITIVE);
            worst = worst.max((a + b - c).abs() / scale);
        }
    }
    vec![
        CheckOutcome::leq("truncation_tail_variance", tail_var, 2.0 / lambda * tail_b2, tol.slack(tail_b2 / lambda)),
        CheckOutcome::leq("truncation_sum_exact", worst, 4.0 * f64::EPSILON, 0.0),
    ]
}

/// Runs the selected check groups on one spec with the default moment
/// orders.
pub fn verify(spec: &ChainSpec, groups: &[CheckGroup], tol: &Tolerances) -> Result<Vec<GroupOutcome>> {
    verify_with(spec, groups, &P_ORDERS, tol)
}

pub fn verify_with(
    spec: &ChainSpec,
    groups: &[CheckGroup],
    p_orders: &[f64],
    tol: &Tolerances,
) -> Result<Vec<GroupOutcome>> {
    let q = RowQuantities::new(spec)?;
    let mut out = Vec::with_capacity(groups.len());
    for &group in groups {
        let checks = match group {
            CheckGroup::Coefficients => coefficient_report(spec, tol)?.checks,
            CheckGroup::Sigma => {
                let enumerated = if spec.path_count() <= ENUMERATED_SIGMA_CAP as f64 {
                    Some(sigma_squared_enumerated(spec, ENUMERATED_SIGMA_CAP)?)
                } else {
                    None
                };
                sigma_oracle_checks(q.sigma2, sigma_squared_covariance_oracle(spec), enumerated, tol)
            }
            CheckGroup::Martingale => martingale_checks(&martingale_check(spec), tol),
            CheckGroup::Variance => variance_bounds_from(&q, tol),
            CheckGroup::Delta => delta_variance_bounds_from(&q, tol),
            CheckGroup::Est1 => vec![est1_from(&q, tol)],
            CheckGroup::Ppower => {
                let mut checks = Vec::new();
                for &p in p_orders {
                    match lemma_ppower_from(&q, p, tol) {
                        Ok(c) => checks.extend(c),
                        Err(e @ Error::DominationFailed { .. }) => {
                            checks.push(CheckOutcome::leq(format!("ppower_domination[p={p}]"), 1.0, 0.0, 0.0).with_note(e.to_string()))
                        }
                        Err(e) => return Err(e),
                    }
                }
                checks
            }
            CheckGroup::Exp => exp_checks(&q, &EXP_T_FRACTIONS, tol)?,
            CheckGroup::Truncation => truncation_checks(&q, tol),
        };
        out.push(GroupOutcome { group, checks });
    }
    Ok(out)
}

fn exp_draw(stream: &mut Stream) -> f64 {
    -stream.open_uniform().ln()
}

fn index_below(stream: &mut Stream, k: usize) -> usize {
    ((stream.uniform() * k as f64) as usize).min(k - 1)
}

/// Probability row: Dirichlet(1), or (sparse variant) Dirichlet on a random
/// non-empty support, or a point mass.
fn prob_row(stream: &mut Stream, m: usize, sparse: bool) -> Vec<f64> {
    let mut row: Vec<f64> = (0..m).map(|_| exp_draw(stream)).collect();
    if sparse {
        if stream.uniform() < 0.15 {
            let hot = index_below(stream, m);
            return (0..m).map(|i| if i == hot { 1.0 } else { 0.0 }).collect();
        }
        let keep = index_below(stream, m);
        for (i, v) in row.iter_mut().enumerate() {
            if i != keep && stream.uniform() < 0.4 {
                *v = 0.0;
            }
        }
    }
    let total: f64 = row.iter().sum();
    row.into_iter().map(|v| v / total).collect()
}

/// Corpus member `index` under `seed`: `m ∈ [1, max_m]`, `n ∈ [1, max_n]`,
/// about a third of them sparse (zeros, point masses), observations uniform
/// on `(-s, s)` with `s` spanning three decades, centered.
pub fn random_spec(seed: u64, stream_id: u64, max_m: usize, max_n: usize) -> ChainSpec {
    let mut stream = Stream::new(seed, stream_id);
    let m = 1 + index_below(&mut stream, max_m);
    let n = 1 + index_below(&mut stream, max_n);
    let sparse = stream.uniform() < 1.0 / 3.0;
    let initial = prob_row(&mut stream, m, sparse);
    let transitions = (1..n)
        .map(|_| {
            let rows: Vec<Vec<f64>> = (0..m).map(|_| prob_row(&mut stream, m, sparse)).collect();
            SquareMatrix::from_rows(&rows).expect("square")
        })
        .collect();
    let scale = 10f64.powf(3.0 * stream.uniform() - 1.5);
    let f = (0..n)
        .map(|_| (0..m).map(|_| scale * (2.0 * stream.uniform() - 1.0)).collect())
        .collect();
    validate(&ChainSpec::new(initial, transitions, f), true)
        .expect("corpus specs are valid by construction")
        .with_name(format!("random[{stream_id}]"))
}

/// The 1000-spec corpus (`m ≤ 4`, `n ≤ 12`).
pub fn main_corpus(seed: u64) -> Vec<ChainSpec> {
    (0..MAIN_CORPUS_SIZE as u64).map(|i| random_spec(seed, i, 4, 12)).collect()
}

/// The 500-spec appendix corpus (`m ≤ 3`, `n ≤ 10`).
pub fn appendix_corpus(seed: u64) -> Vec<ChainSpec> {
    (0..APPENDIX_CORPUS_SIZE as u64)
        .map(|i| random_spec(seed, APPENDIX_STREAM_BASE + i, 3, 10))
        .collect()
}

/// Finite built-in families at every `n` of [`FAMILY_GRID`].
pub fn family_corpus() -> Result<Vec<ChainSpec>> {
    let mut out = Vec::new();
    for fam in builtin_finite_families() {
        for n in FAMILY_GRID {
            out.push(fam.spec(n)?);
        }
    }
    Ok(out)
}

pub fn family_corpus_for(families: &[Family]) -> Result<Vec<ChainSpec>> {
    let mut out = Vec::new();
    for fam in families {
        for n in FAMILY_GRID {
            out.push(fam.spec(n)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub group: CheckGroup,
    pub checks: usize,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    /// Smallest `margin` over passing `<=` checks (how close to equality).
    pub min_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureRecord {
    pub corpus: String,
    pub spec: String,
    pub group: CheckGroup,
    pub check: CheckOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub corpus: String,
    pub specs: usize,
    pub groups: Vec<GroupSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestReport {
    pub master_seed: u64,
    pub corpora: Vec<CorpusSummary>,
    pub failures: Vec<FailureRecord>,
    pub errors: Vec<String>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.errors.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// `corpus,group,checks,passed,failed,skipped,min_margin`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("corpus,group,checks,passed,failed,skipped,min_margin\n");
        for c in &self.corpora {
            for g in &c.groups {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    c.corpus,
                    g.group,
                    g.checks,
                    g.passed,
                    g.failed,
                    g.skipped,
                    fmt17(g.min_margin)
                ));
            }
        }
        out
    }

    pub fn group(&self, corpus: &str, group: CheckGroup) -> Option<&GroupSummary> {
        self.corpora
            .iter()
            .find(|c| c.corpus == corpus)?
            .groups
            .iter()
            .find(|g| g.group == group)
    }
}

/// Verifies every spec in parallel; results are folded in corpus order.
pub fn run_corpus(
    name: &str,
    specs: &[ChainSpec],
    groups: &[CheckGroup],
    tol: &Tolerances,
) -> (CorpusSummary, Vec<FailureRecord>, Vec<String>) {
    let results: Vec<Result<Vec<GroupOutcome>>> = specs.par_iter().map(|s| verify(s, groups, tol)).collect();
    let mut summaries: Vec<GroupSummary> = groups
        .iter()
        .map(|&group| GroupSummary {
            group,
            checks: 0,
            passed: 0,
            failed: 0,
            skipped: 0,
            min_margin: f64::INFINITY,
        })
        .collect();
    let mut failures = Vec::new();
    let mut errors = Vec::new();
    for (spec, res) in specs.iter().zip(results) {
        let label = spec.name.clone().unwrap_or_default();
        match res {
            Err(e) => errors.push(format!("{name}/{label}: {e}")),
            Ok(outcomes) => {
                for (summary, outcome) in summaries.iter_mut().zip(outcomes) {
                    for check in outcome.checks {
                        summary.checks += 1;
                        match check.status {
                            CheckStatus::Pass => {
                                summary.passed += 1;
                                if check.margin.is_finite() {
                                    summary.min_margin = summary.min_margin.min(check.margin);
                                }
                            }
                            CheckStatus::Skipped => summary.skipped += 1,
                            CheckStatus::Fail => {
                                summary.failed += 1;
                                failures.push(FailureRecord {
                                    corpus: name.to_string(),
                                    spec: label.clone(),
                                    group: outcome.group,
                                    check,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    (
        CorpusSummary {
            corpus: name.to_string(),
            specs: specs.len(),
            groups: summaries,
        },
        failures,
        errors,
    )
}

/// Exact-arithmetic groups run on the large corpora; the exponential
/// inequality needs path enumeration and runs on the appendix corpus.
pub const MAIN_GROUPS: [CheckGroup; 8] = [
    CheckGroup::Coefficients,
    CheckGroup::Sigma,
    CheckGroup::Martingale,
    CheckGroup::Variance,
    CheckGroup::Delta,
    CheckGroup::Est1,
    CheckGroup::Ppower,
    CheckGroup::Truncation,
];
pub const APPENDIX_GROUPS: [CheckGroup; 2] = [CheckGroup::Ppower, CheckGroup::Exp];

/// The full randomized corpus: main, built-in families, appendix.
pub fn run_selftest(master_seed: u64, tol: &Tolerances) -> Result<SelftestReport> {
    let mut report = SelftestReport {
        master_seed,
        corpora: Vec::new(),
        failures: Vec::new(),
        errors: Vec::new(),
    };
    let corpora = [
        ("main", main_corpus(master_seed), &MAIN_GROUPS[..]),
        ("families", family_corpus()?, &CheckGroup::ALL[..]),
        ("appendix", appendix_corpus(master_seed), &APPENDIX_GROUPS[..]),
    ];
    for (name, specs, groups) in corpora {
        let (summary, failures, errors) = run_corpus(name, &specs, groups, tol);
        report.corpora.push(summary);
        report.failures.extend(failures);
        report.errors.extend(errors);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selector_parsing() {
        assert_eq!(CheckGroup::parse_list("all").unwrap().len(), 9);
        assert_eq!(
            CheckGroup::parse_list("exp, variance,exp").unwrap(),
            vec![CheckGroup::Variance, CheckGroup::Exp]
        );
        assert!(CheckGroup::parse_list("bogus").is_err());
        assert!(CheckGroup::parse_list("").is_err());
    }

    #[test]
    fn corpus_is_deterministic_and_valid() {
        let a: Vec<ChainSpec> = (0..50).map(|i| random_spec(5, i, 4, 12)).collect();
        let b: Vec<ChainSpec> = (0..50).map(|i| random_spec(5, i, 4, 12)).collect();
        assert_eq!(a, b);
        for s in &a {
            assert!(s.m <= 4 && s.n <= 12);
            assert_eq!(&validate(s, false).unwrap(), s);
        }
        // the sparse branch produces exact zeros somewhere
        let corpus = main_corpus(SELFTEST_SEED);
        assert!(corpus
            .iter()
            .any(|s| s.transitions.iter().any(|q| q.rows().any(|r| r.iter().any(|&v| v == 0.0)))));
    }

    #[test]
    fn verify_small_spec() {
        let spec = random_spec(1, 3, 3, 5);
        let out = verify(&spec, &CheckGroup::ALL, &Tolerances::default()).unwrap();
        assert_eq!(out.len(), 9);
        assert!(out.iter().all(|g| g.checks.iter().all(|c| !c.failed())), "{out:#?}");
    }
}
