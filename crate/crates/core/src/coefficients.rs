//! Maximal-correlation and contraction coefficients of a chain row.
//!
//! For a pair of discrete variables `(U, V)` with joint law `J` and
//! marginals `p`, `q`, the maximal correlation
//! `sup |corr(f(U), g(V))|` equals the second singular value of
//! `M(x, y) = J(x, y) / sqrt(p(x) q(y))`.
//!
//! Sketch: writing `a(x) = f(x) sqrt(p(x))` and `b(y) = g(y) sqrt(q(y))`,
//! `E f(U) g(V) = aᵀ M b` while `‖f‖₂ = |a|` and `‖g‖₂ = |b|`. The vectors
//! `sqrt(p)` and `sqrt(q)` are a singular pair of `M` with singular value 1
//! (`M sqrt(q) = sqrt(p)`), and centering `f`, `g` is exactly orthogonality
//! to that pair. The supremum of `aᵀ M b` over unit vectors orthogonal to it
//! is therefore the largest singular value of the deflated matrix
//! `M - sqrt(p) sqrt(q)ᵀ`, i.e. the second singular value of `M`.
//!
//! States of zero mass carry no `L₂` weight and are removed before
//! normalizing. For a Markov row the lag-`k` coefficient between past and
//! future reduces to the single-coordinate pair `(ξ_s, ξ_{s+k})`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::chain::{joint_from, marginals, ChainSpec, JointLaw};
use crate::checks::{fmt17, CheckOutcome, Tolerances};
use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;

const JOINT_MASS_TOL: f64 = 1e-10;

/// Maximal correlation between the two coordinates of `joint`, in `[0, 1]`.
pub fn max_correlation(joint: &JointLaw) -> Result<f64> {
    let j = &joint.matrix;
    let m = j.dim();
    if j.rows().flatten().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidJoint("negative or non-finite entry".into()));
    }
    let total = j.total();
    if (total - 1.0).abs() > JOINT_MASS_TOL {
        return Err(Error::InvalidJoint(format!("total mass {total}")));
    }
    let p = joint.row_marginal();
    let q = joint.column_marginal();
    let rows: Vec<usize> = (0..m).filter(|&x| p[x] > 0.0).collect();
    let cols: Vec<usize> = (0..m).filter(|&y| q[y] > 0.0).collect();
    if rows.len() < 2 || cols.len() < 2 {
        return Ok(0.0);
    }
    let deflated = DMatrix::from_fn(rows.len(), cols.len(), |r, c| {
        let (x, y) = (rows[r], cols[c]);
        let sp = p[x].sqrt();
        let sq = q[y].sqrt();
        j[(x, y)] / (sp * sq) - sp * sq
    });
    let top = deflated
        .singular_values()
        .iter()
        .copied()
        .fold(0.0_f64, f64::max);
    Ok(top.clamp(0.0, 1.0))
}

/// `ρ_k` for `k = 1..n-1`: the maximum over `s` of the maximal correlation
/// of `(ξ_s, ξ_{s+k})`.
pub fn rho_k_sequence(spec: &ChainSpec) -> Result<Vec<f64>> {
    let laws = marginals(spec);
    let n = spec.n;
    let mut rho = vec![0.0_f64; n.saturating_sub(1)];
    for s in 1..n {
        let mut product = SquareMatrix::identity(spec.m);
        for k in 1..=n - s {
            product = product.matmul(&spec.transitions[s + k - 2]);
            let joint = JointLaw {
                s,
                k,
                matrix: joint_from(&laws.pi[s - 1], &product),
            };
            rho[k - 1] = rho[k - 1].max(max_correlation(&joint)?);
        }
    }
    Ok(rho)
}

/// Lag-one maximal correlation of each adjacent pair `(ξ_s, ξ_{s+1})`.
pub fn step_correlations(spec: &ChainSpec) -> Result<Vec<f64>> {
    let laws = marginals(spec);
    spec.transitions
        .iter()
        .enumerate()
        .map(|(i, q)| {
            max_correlation(&JointLaw {
                s: i + 1,
                k: 1,
                matrix: joint_from(&laws.pi[i], q),
            })
        })
        .collect()
}

/// `(ρ_1, λ = 1 - ρ_1)`. A row of length one has no pair, so `ρ_1 = 0`.
pub fn rho1_lambda(spec: &ChainSpec) -> Result<(f64, f64)> {
    let rho1 = step_correlations(spec)?.into_iter().fold(0.0, f64::max);
    Ok((rho1, 1.0 - rho1))
}

/// Dobrushin's coefficient: the largest total-variation distance between
/// two rows of `q`.
pub fn delta_coefficient(q: &SquareMatrix) -> f64 {
    let m = q.dim();
    let mut best = 0.0_f64;
    for a in 0..m {
        for b in a + 1..m {
            let tv: f64 = q
                .row(a)
                .iter()
                .zip(q.row(b))
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>()
                * 0.5;
            best = best.max(tv);
        }
    }
    best.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientReport {
    pub n: usize,
    pub m: usize,
    /// Entry `k - 1` holds `ρ_k`.
    pub rho_k: Vec<f64>,
    pub rho1: f64,
    pub lambda: f64,
    pub delta_steps: Vec<f64>,
    pub delta1: f64,
    /// `α = 1 - δ_1`.
    pub alpha: f64,
    pub checks: Vec<CheckOutcome>,
}

pub fn coefficient_report(spec: &ChainSpec, tol: &Tolerances) -> Result<CoefficientReport> {
    let rho_k = rho_k_sequence(spec)?;
    let (rho1, lambda) = rho1_lambda(spec)?;
    let delta_steps: Vec<f64> = spec.transitions.iter().map(delta_coefficient).collect();
    let delta1 = delta_steps.iter().copied().fold(0.0, f64::max);
    let mut checks = Vec::with_capacity(rho_k.len() + 1);
    for (i, &r) in rho_k.iter().enumerate() {
        let k = i + 1;
        checks.push(CheckOutcome::leq(format!("rho_k_geometric[k={k}]"), r, rho1.powi(k as i32), tol.coef));
    }
    checks.push(CheckOutcome::leq("rho1_le_sqrt_delta1", rho1, delta1.sqrt(), tol.coef));
    Ok(CoefficientReport {
        n: spec.n,
        m: spec.m,
        rho_k,
        rho1,
        lambda,
        delta_steps,
        delta1,
        alpha: 1.0 - delta1,
        checks,
    })
}

impl CoefficientReport {
    /// One row per lag `k`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("k,rho_k,rho1_pow_k,margin,delta_step_k,delta1,sqrt_delta1,delta1_pow_k\n");
        for (i, &r) in self.rho_k.iter().enumerate() {
            let k = i + 1;
            let bound = self.rho1.powi(k as i32);
            out.push_str(&format!(
                "{k},{},{},{},{},{},{},{}\n",
                fmt17(r),
                fmt17(bound),
                fmt17(bound - r),
                fmt17(self.delta_steps[i]),
                fmt17(self.delta1),
                fmt17(self.delta1.sqrt()),
                fmt17(self.delta1.powi(k as i32)),
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: f64) -> SquareMatrix {
        SquareMatrix::from_rows(&[vec![1.0 - a, a], vec![a, 1.0 - a]]).unwrap()
    }

    fn two_state(a: f64, n: usize) -> ChainSpec {
        ChainSpec::new(vec![0.5, 0.5], vec![q(a); n - 1], vec![vec![-1.0, 1.0]; n])
    }

    fn joint(rows: &[Vec<f64>]) -> JointLaw {
        JointLaw::from_matrix(SquareMatrix::from_rows(rows).unwrap())
    }

    #[test]
    fn product_joint_is_uncorrelated() {
        let p = [0.2, 0.8];
        let qv = [0.3, 0.7];
        let rows: Vec<Vec<f64>> = p.iter().map(|a| qv.iter().map(|b| a * b).collect()).collect();
        assert!(max_correlation(&joint(&rows)).unwrap() < 1e-12);
    }

    #[test]
    fn coupled_joint_is_fully_correlated() {
        let r = max_correlation(&joint(&[vec![0.5, 0.0], vec![0.0, 0.5]])).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_state_adjacent_pair() {
        let r = max_correlation(&joint(&[vec![0.375, 0.125], vec![0.125, 0.375]])).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_cell_joint_is_zero() {
        let r = max_correlation(&joint(&[vec![0.0, 0.0], vec![0.0, 1.0]])).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn non_probability_joint_rejected() {
        assert!(matches!(
            max_correlation(&joint(&[vec![0.5, 0.5], vec![0.5, 0.5]])),
            Err(Error::InvalidJoint(_))
        ));
        assert!(matches!(
            max_correlation(&joint(&[vec![1.5, -0.5], vec![0.0, 0.0]])),
            Err(Error::InvalidJoint(_))
        ));
    }

    #[test]
    fn rho_sequence_two_state() {
        let rho = rho_k_sequence(&two_state(0.25, 4)).unwrap();
        for (got, want) in rho.iter().zip([0.5, 0.25, 0.125]) {
            assert!((got - want).abs() < 1e-12, "{rho:?}");
        }
    }

    #[test]
    fn rho_sequence_identity_chain() {
        let spec = ChainSpec::new(vec![0.5, 0.5], vec![SquareMatrix::identity(2); 2], vec![vec![-1.0, 1.0]; 3]);
        let rho = rho_k_sequence(&spec).unwrap();
        assert!(rho.iter().all(|r| (r - 1.0).abs() < 1e-12), "{rho:?}");
    }

    #[test]
    fn rho_sequence_product_chain() {
        let row = [0.1, 0.2, 0.7];
        let spec = ChainSpec::new(
            vec![0.3, 0.3, 0.4],
            vec![SquareMatrix::repeated_row(&row); 4],
            vec![vec![0.0; 3]; 5],
        );
        assert!(rho_k_sequence(&spec).unwrap().iter().all(|&r| r < 1e-12));
    }

    #[test]
    fn rho1_examples() {
        let (r, l) = rho1_lambda(&two_state(0.25, 5)).unwrap();
        assert!((r - 0.5).abs() < 1e-12 && (l - 0.5).abs() < 1e-12);
        let (r, l) = rho1_lambda(&two_state(0.5, 5)).unwrap();
        assert!(r < 1e-12 && (l - 1.0).abs() < 1e-12);
        let spec = ChainSpec::new(vec![0.5, 0.5], vec![q(0.25), q(0.4)], vec![vec![-1.0, 1.0]; 3]);
        let (r, _) = rho1_lambda(&spec).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        let single = ChainSpec::new(vec![0.5, 0.5], vec![], vec![vec![-1.0, 1.0]]);
        assert_eq!(rho1_lambda(&single).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta_coefficient(&SquareMatrix::repeated_row(&[0.2, 0.8])), 0.0);
        assert_eq!(delta_coefficient(&SquareMatrix::identity(2)), 1.0);
        assert_eq!(delta_coefficient(&q(0.25)), 0.5);
    }

    #[test]
    fn report_two_state() {
        let rep = coefficient_report(&two_state(0.25, 4), &Tolerances::default()).unwrap();
        assert!(rep.checks.iter().all(CheckOutcome::passed));
        for c in &rep.checks[..3] {
            assert!(c.margin.abs() < 1e-12);
        }
        let last = rep.checks.last().unwrap();
        assert!((last.margin - (0.5f64.sqrt() - 0.5)).abs() < 1e-12);
        assert_eq!(rep.delta1, 0.5);
        assert_eq!(rep.lambda, 1.0 - rep.rho1);
        let csv = rep.to_csv();
        assert_eq!(csv.lines().count(), 4);
    }
}
