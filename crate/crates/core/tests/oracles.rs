//! Independent oracles for the exact computations.

use mixclt::chain::{enumerate_expectation, marginals, path_sum, sample_path, sample_sum, validate};
use mixclt::clt::ks_distance;
use mixclt::coefficients::{max_correlation, rho1_lambda};
use mixclt::families::{family_two_state, Rate};
use mixclt::linalg::SquareMatrix;
use mixclt::moments::{sigma_squared, sigma_squared_covariance_oracle};
use mixclt::rng::Stream;
use mixclt::suite::random_spec;
use mixclt::{ChainSpec, JointLaw};
use statrs::distribution::{ContinuousCDF, Normal};

/// For a 2x2 joint law every function is affine in the indicator of the
/// second state, so the maximal correlation is `|corr(U, V)|` of binary
/// variables. Evaluated here by a grid search over `g = (1, t)` as well, to
/// stay independent of the closed form.
fn binary_grid_oracle(j: &[[f64; 2]; 2]) -> f64 {
    let p = [j[0][0] + j[0][1], j[1][0] + j[1][1]];
    let q = [j[0][0] + j[1][0], j[0][1] + j[1][1]];
    let corr = |f: [f64; 2], g: [f64; 2]| {
        let (mf, mg) = (p[0] * f[0] + p[1] * f[1], q[0] * g[0] + q[1] * g[1]);
        let (vf, vg) = (
            p[0] * (f[0] - mf).powi(2) + p[1] * (f[1] - mf).powi(2),
            q[0] * (g[0] - mg).powi(2) + q[1] * (g[1] - mg).powi(2),
        );
        let mut cov = 0.0;
        for x in 0..2 {
            for y in 0..2 {
                cov += j[x][y] * (f[x] - mf) * (g[y] - mg);
            }
        }
        (cov / (vf * vg).sqrt()).abs()
    };
    let mut best: f64 = 0.0;
    for i in 0..=2000 {
        let t = -50.0 + 0.05 * i as f64;
        best = best.max(corr([0.0, 1.0], [1.0, t]));
        best = best.max(corr([0.0, 1.0], [t, 1.0]));
    }
    best
}

#[test]
fn two_state_grid_oracle() {
    let mut stream = Stream::new(11, 0);
    for _ in 0..200 {
        let w: Vec<f64> = (0..4).map(|_| stream.open_uniform()).collect();
        let total: f64 = w.iter().sum();
        let j = [[w[0] / total, w[1] / total], [w[2] / total, w[3] / total]];
        let law = JointLaw::from_matrix(SquareMatrix::from_rows(&[j[0].to_vec(), j[1].to_vec()]).unwrap());
        let exact = max_correlation(&law).unwrap();
        let grid = binary_grid_oracle(&j);
        assert!((exact - grid).abs() < 1e-6, "{exact} vs {grid}");
    }
}

/// Alternating conditional expectations: `f ← E[g(V) | U]`, `g ← E[f(U) | V]`,
/// each centered and normalized. Converges to the top non-trivial singular
/// pair, so `‖E[f(U) | V]‖` tends to the maximal correlation.
fn power_iteration_oracle(j: &SquareMatrix, start: &[f64]) -> f64 {
    let m = j.dim();
    let p: Vec<f64> = (0..m).map(|x| (0..m).map(|y| j[(x, y)]).sum()).collect();
    let q: Vec<f64> = (0..m).map(|y| (0..m).map(|x| j[(x, y)]).sum()).collect();
    let normalize = |v: &mut Vec<f64>, w: &[f64]| {
        let mean: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
        v.iter_mut().for_each(|a| *a -= mean);
        let norm = v.iter().zip(w).map(|(a, b)| a * a * b).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|a| *a /= norm);
        }
        norm
    };
    let mut f = start.to_vec();
    normalize(&mut f, &p);
    let mut value = 0.0;
    for _ in 0..20_000 {
        let mut g: Vec<f64> = (0..m)
            .map(|y| if q[y] > 0.0 { (0..m).map(|x| j[(x, y)] * f[x]).sum::<f64>() / q[y] } else { 0.0 })
            .collect();
        value = normalize(&mut g, &q);
        f = (0..m)
            .map(|x| if p[x] > 0.0 { (0..m).map(|y| j[(x, y)] * g[y]).sum::<f64>() / p[x] } else { 0.0 })
            .collect();
        normalize(&mut f, &p);
    }
    value
}

#[test]
fn power_iteration_oracle_agrees_for_larger_state_spaces() {
    let mut stream = Stream::new(12, 0);
    for trial in 0..100 {
        let m = 3 + trial % 3;
        let w: Vec<f64> = (0..m * m).map(|_| stream.open_uniform().powi(3)).collect();
        let total: f64 = w.iter().sum();
        let rows: Vec<Vec<f64>> = w.chunks(m).map(|r| r.iter().map(|v| v / total).collect()).collect();
        let j = SquareMatrix::from_rows(&rows).unwrap();
        let exact = max_correlation(&JointLaw::from_matrix(j.clone())).unwrap();
        let start: Vec<f64> = (0..m).map(|_| stream.uniform() - 0.5).collect();
        let oracle = power_iteration_oracle(&j, &start);
        // the iteration converges from below; a start orthogonal to the top
        // singular vector is measure-zero
        assert!(oracle <= exact + 1e-9, "{oracle} > {exact}");
        assert!(exact - oracle < 1e-6, "trial {trial}: {exact} vs {oracle}");
    }
}

#[test]
fn sigma_squared_matches_oracles_on_random_specs() {
    for i in 0..300 {
        let spec = random_spec(99, i, 3, 8);
        let fwd = sigma_squared(&spec);
        let cov = sigma_squared_covariance_oracle(&spec);
        let enumerated = enumerate_expectation(&spec, |path| path_sum(&spec, path).powi(2)).unwrap();
        assert!((fwd - cov).abs() <= 1e-9 * fwd.max(1.0), "{i}: {fwd} vs {cov}");
        assert!((fwd - enumerated).abs() <= 1e-10 * fwd.max(1.0), "{i}: {fwd} vs {enumerated}");
    }
}

#[test]
fn two_state_closed_form_sigma() {
    for (a, n) in [(0.25, 3), (0.1, 17), (0.45, 40)] {
        let spec = family_two_state(Rate::Constant { c: a }).spec(n).unwrap();
        let r: f64 = 1.0 - 2.0 * a;
        let closed = n as f64 + 2.0 * (1..n).map(|k| (n - k) as f64 * r.powi(k as i32)).sum::<f64>();
        assert!((sigma_squared(&spec) - closed).abs() <= 1e-12 * closed);
        let (rho1, _) = rho1_lambda(&spec).unwrap();
        assert!((rho1 - r).abs() < 1e-12);
    }
}

#[test]
fn monte_carlo_matches_enumeration_within_five_standard_errors() {
    let spec = random_spec(5, 17, 3, 6);
    let spec = if spec.n >= 3 && spec.m >= 2 {
        spec
    } else {
        validate(
            &ChainSpec::new(
                vec![0.2, 0.5, 0.3],
                vec![SquareMatrix::from_rows(&[vec![0.6, 0.3, 0.1], vec![0.2, 0.2, 0.6], vec![0.3, 0.0, 0.7]]).unwrap(); 3],
                vec![vec![1.0, -0.5, 2.0]; 4],
            ),
            true,
        )
        .unwrap()
    };
    let reps = 40_000;
    let exact_s2 = sigma_squared(&spec);
    let exact_s4 = enumerate_expectation(&spec, |p| path_sum(&spec, p).powi(4)).unwrap();
    let draws: Vec<f64> = (0..reps).map(|r| sample_sum(&spec, &mut Stream::new(3, r)).powi(2)).collect();
    let mean = draws.iter().sum::<f64>() / reps as f64;
    let se = ((exact_s4 - exact_s2 * exact_s2) / reps as f64).sqrt();
    assert!((mean - exact_s2).abs() <= 5.0 * se, "{mean} vs {exact_s2} (se {se})");

    // state frequencies at every step against the marginals
    let laws = marginals(&spec);
    let mut counts = vec![vec![0usize; spec.m]; spec.n];
    for r in 0..reps {
        for (i, &x) in sample_path(&spec, &mut Stream::new(4, r)).iter().enumerate() {
            counts[i][x] += 1;
        }
    }
    for (c, pi) in counts.iter().zip(&laws.pi) {
        for (&k, &p) in c.iter().zip(pi) {
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            assert!((k as f64 / reps as f64 - p).abs() <= 5.0 * se + 1e-12);
        }
    }
}

#[test]
fn ks_of_normal_quantiles_is_at_most_half_a_step() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let k = 1000;
    let sample: Vec<f64> = (1..=k).map(|i| normal.inverse_cdf((i as f64 - 0.5) / k as f64)).collect();
    let d = ks_distance(&sample).unwrap();
    assert!(d <= 1.0 / (2.0 * k as f64) + 1e-9, "{d}");
}
