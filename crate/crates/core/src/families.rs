//! Built-in triangular arrays: maps `n ↦` chain row, with closed-form
//! metadata where it is known.

use std::fmt;

use serde::Serialize;

use crate::chain::{validate, ChainSpec};
use crate::coefficients::rho1_lambda;
use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::rng::Stream;

pub const REJECTION_BUDGET: usize = 10_000;

/// Flip-probability schedule `n ↦ a_n` for the two-state family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Rate {
    /// `a_n = c`
    Constant { c: f64 },
    /// `a_n = c / n`
    OverN { c: f64 },
    /// `a_n = c · n^(-g)`
    Power { c: f64, g: f64 },
}

impl Rate {
    pub fn at(&self, n: usize) -> f64 {
        let n = n as f64;
        match *self {
            Rate::Constant { c } => c,
            Rate::OverN { c } => c / n,
            Rate::Power { c, g } => c * n.powf(-g),
        }
    }

    /// Parses `c`, `c/n`, `c*n^(-g)` (also `c/n^g`). Numeric slots may be
    /// decimal literals or the symbol `c`, which resolves to `binding`.
    pub fn parse(expr: &str, binding: Option<f64>) -> Result<Self> {
        let e: String = expr.chars().filter(|ch| !ch.is_whitespace()).collect();
        let number = |s: &str| -> Result<f64> {
            if s == "c" {
                return binding.ok_or_else(|| Error::InvalidRate(format!("`{expr}` uses `c` but no value was bound")));
            }
            let v: f64 = s
                .parse()
                .map_err(|_| Error::InvalidRate(format!("`{s}` is not a number in `{expr}`")))?;
            if !v.is_finite() {
                return Err(Error::InvalidRate(format!("non-finite value in `{expr}`")));
            }
            Ok(v)
        };
        let rate = if let Some((lhs, rest)) = e.split_once("/n") {
            let c = number(lhs)?;
            if rest.is_empty() {
                Rate::OverN { c }
            } else if let Some(g) = rest.strip_prefix('^') {
                Rate::Power {
                    c,
                    g: number(g.trim_start_matches('(').trim_end_matches(')'))?,
                }
            } else {
                return Err(Error::InvalidRate(format!("cannot parse `{expr}`")));
            }
        } else if let Some((lhs, rest)) = e.split_once("*n^") {
            let inner = rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')).unwrap_or(rest);
            let g = inner
                .strip_prefix('-')
                .ok_or_else(|| Error::InvalidRate(format!("exponent in `{expr}` must be negative, as n^(-g)")))?;
            Rate::Power {
                c: number(lhs)?,
                g: number(g)?,
            }
        } else {
            Rate::Constant { c: number(&e)? }
        };
        let (c, g) = match rate {
            Rate::Constant { c } | Rate::OverN { c } => (c, 0.0),
            Rate::Power { c, g } => (c, g),
        };
        if !(c > 0.0) || g < 0.0 {
            return Err(Error::InvalidRate(format!("`{expr}` needs c > 0 and g >= 0")));
        }
        Ok(rate)
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rate::Constant { c } => write!(f, "{c}"),
            Rate::OverN { c } => write!(f, "{c}/n"),
            Rate::Power { c, g } => write!(f, "{c}*n^(-{g})"),
        }
    }
}

/// Observation function for the Gaussian autoregressive family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    Identity,
    /// `sign(x) · min(|x|, level)`
    Clip { level: f64 },
}

impl Observable {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Observable::Identity => x,
            Observable::Clip { level } => x.clamp(-level, level),
        }
    }

    /// Squared coefficients `c_j²` of the expansion of the observable in
    /// normalized Hermite polynomials `He_j / sqrt(j!)`, so that for a
    /// standard bivariate normal pair with correlation `r`,
    /// `cov(f(U), f(V)) = Σ_j c_j² r^j`. Both observables are odd, so their
    /// means under the standard normal vanish and `c_0 = 0`.
    fn hermite_weights(&self) -> Vec<f64> {
        match *self {
            Observable::Identity => vec![0.0, 1.0],
            Observable::Clip { level } => {
                // Gaussian integration by parts: E[f He_j] = E[f' He_{j-1}]
                // with f' = 1{|x| < level}, which integrates in closed form.
                let phi = (-0.5 * level * level).exp() / (2.0 * std::f64::consts::PI).sqrt();
                let variance = self.variance();
                let mut weights = vec![0.0, (2.0 * normal_cdf(level) - 1.0).powi(2)];
                let mut total = weights[1];
                // Normalized Hermite values h_k = He_k(level) / sqrt(k!).
                let (mut h_prev, mut h) = (0.0_f64, 1.0_f64);
                for j in 2..4000usize {
                    let k = j - 2;
                    let w = if j % 2 == 1 {
                        4.0 * phi * phi * h * h / (j as f64 * (j as f64 - 1.0))
                    } else {
                        0.0
                    };
                    weights.push(w);
                    total += w;
                    let h_next = (level * h - (k as f64).sqrt() * h_prev) / ((k + 1) as f64).sqrt();
                    h_prev = h;
                    h = h_next;
                    if j % 2 == 1 && variance - total < 1e-17 {
                        break;
                    }
                }
                weights
            }
        }
    }

    /// `E f(Z)²` for standard normal `Z`.
    pub fn variance(&self) -> f64 {
        match *self {
            Observable::Identity => 1.0,
            Observable::Clip { level } => {
                let phi = (-0.5 * level * level).exp() / (2.0 * std::f64::consts::PI).sqrt();
                let inside = 2.0 * normal_cdf(level) - 1.0;
                inside - 2.0 * level * phi + 2.0 * level * level * (1.0 - normal_cdf(level))
            }
        }
    }

    /// `max |f|`, infinite for the identity.
    pub fn sup_norm(&self) -> f64 {
        match *self {
            Observable::Identity => f64::INFINITY,
            Observable::Clip { level } => level,
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::Identity => write!(f, "identity"),
            Observable::Clip { level } => write!(f, "clip({level})"),
        }
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Closed-form facts about one row of a family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Analytic {
    pub rho1: f64,
    pub lambda: f64,
    pub delta1: f64,
    pub sigma2: Option<f64>,
    pub b2: Option<f64>,
}

/// A row of the stationary Gaussian AR(1) chain observed through `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianRow {
    pub n: usize,
    pub phi: f64,
    pub observable: Observable,
}

impl GaussianRow {
    /// `S_n` for one path: `ξ_1 ~ N(0,1)`, `ξ_{i+1} = φ ξ_i + sqrt(1-φ²) ε_i`.
    pub fn sample_sum(&self, stream: &mut Stream) -> f64 {
        let scale = (1.0 - self.phi * self.phi).sqrt();
        let mut x = stream.standard_normal();
        let mut s = self.observable.apply(x);
        for _ in 1..self.n {
            x = self.phi * x + scale * stream.standard_normal();
            s += self.observable.apply(x);
        }
        s
    }

    /// `cov(f(ξ_i), f(ξ_{i+k}))`. For the clipped observable the expansion
    /// is cut after a few thousand terms; the neglected part is at most
    /// `var · |φ|^(k·J)`.
    pub fn lag_covariance(&self, k: usize) -> f64 {
        if k == 0 {
            return self.observable.variance();
        }
        let r = self.phi.powi(k as i32);
        let weights = self.observable.hermite_weights();
        let mut acc = 0.0;
        let mut rp = 1.0;
        for w in weights {
            acc += w * rp;
            rp *= r;
        }
        acc
    }

    pub fn sigma2(&self) -> f64 {
        let n = self.n;
        let weights = self.observable.hermite_weights();
        let mut acc = n as f64 * self.observable.variance();
        for k in 1..n {
            let r = self.phi.powi(k as i32);
            if r.abs() < 1e-300 {
                break;
            }
            let mut cov = 0.0;
            let mut rp = 1.0;
            for &w in &weights {
                cov += w * rp;
                rp *= r;
            }
            let term = 2.0 * (n - k) as f64 * cov;
            acc += term;
            if term.abs() < 1e-18 * acc.abs() {
                break;
            }
        }
        acc
    }
}

/// Concrete row of a family.
#[derive(Debug, Clone, PartialEq)]
pub enum Row {
    Finite(ChainSpec),
    Gaussian(GaussianRow),
}

impl Row {
    pub fn n(&self) -> usize {
        match self {
            Row::Finite(s) => s.n,
            Row::Gaussian(g) => g.n,
        }
    }

    pub fn sample_sum(&self, stream: &mut Stream) -> f64 {
        match self {
            Row::Finite(s) => crate::chain::sample_sum(s, stream),
            Row::Gaussian(g) => g.sample_sum(stream),
        }
    }
}

/// A triangular array of chains, addressed by name and parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Iid { initial: Vec<f64>, f: Vec<f64> },
    TwoState { rate: Rate },
    Degenerate { c: f64 },
    Random { m: usize, seed: u64, floor: f64 },
    GaussianAr1 { phi: f64, observable: Observable },
}

/// Every transition row equals `pi`.
pub fn family_iid(f: Vec<f64>, pi: Vec<f64>) -> Result<Family> {
    let probe = ChainSpec::new(pi.clone(), vec![], vec![f.clone()]);
    validate(&probe, false)?;
    Ok(Family::Iid { initial: pi, f })
}

/// Symmetric two-state chain, flip probability `a_n`, uniform start,
/// `f = (-1, +1)`.
pub fn family_two_state(rate: Rate) -> Family {
    Family::TwoState { rate }
}

/// Two-state chain with `a_n = min(1/2, c/n)`: O(1) expected flips per row.
pub fn family_degenerate(c: f64) -> Result<Family> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidRate(format!("degenerate family needs c > 0, got {c}")));
    }
    Ok(Family::Degenerate { c })
}

pub fn family_random(m: usize, seed: u64, floor: f64) -> Result<Family> {
    if m < 2 {
        return Err(Error::DimensionMismatch(format!("random family needs m >= 2, got {m}")));
    }
    if !(0.0..1.0).contains(&floor) {
        return Err(Error::InvalidRate(format!("mixing floor {floor} outside [0, 1)")));
    }
    Ok(Family::Random { m, seed, floor })
}

pub fn family_gaussian_ar1(phi: f64, observable: Observable) -> Result<Family> {
    if !(phi.abs() < 1.0) {
        return Err(Error::InvalidPhi(phi));
    }
    if let Observable::Clip { level } = observable {
        if !(level > 0.0) || !level.is_finite() {
            return Err(Error::Parse(format!("clip level must be positive, got {level}")));
        }
    }
    Ok(Family::GaussianAr1 { phi, observable })
}

fn two_state_flip(a: f64) -> SquareMatrix {
    SquareMatrix::from_rows(&[vec![1.0 - a, a], vec![a, 1.0 - a]]).expect("2x2")
}

fn two_state_row(a: f64, n: usize) -> ChainSpec {
    ChainSpec::new(vec![0.5, 0.5], vec![two_state_flip(a); n - 1], vec![vec![-1.0, 1.0]; n])
}

/// `n + 2 Σ_{k<n} (n-k) r^k`, summed directly up to a million terms and in
/// closed form beyond.
pub fn geometric_sigma2(n: usize, r: f64) -> f64 {
    if n > 1_000_000 && r < 1.0 {
        let nf = n as f64;
        let q = 1.0 - r;
        // Σ (n-k) r^k = r (n q - 1 + r^n) / q²
        let inner = if r > 0.0 { (nf * r.ln()).exp_m1() + nf * q } else { nf * q - 1.0 };
        return nf + 2.0 * r * inner / (q * q);
    }
    let mut acc = n as f64;
    let mut rk = 1.0;
    for k in 1..n {
        rk *= r;
        acc += 2.0 * (n - k) as f64 * rk;
    }
    acc
}

/// Positive draw from Exp(1); normalized blocks of these are uniform on the
/// simplex.
fn exp_draw(stream: &mut Stream) -> f64 {
    -stream.open_uniform().ln()
}

fn simplex_draw(stream: &mut Stream, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| exp_draw(stream)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Random row for `(m, seed, n)`: Dirichlet(1) initial law and transition
/// rows, uniform `(-1, 1)` observations centered against the exact
/// marginals. Redrawn until `ρ_1 <= 1 - floor`.
pub fn random_row(m: usize, seed: u64, floor: f64, n: usize) -> Result<ChainSpec> {
    let mut stream = Stream::new(seed, ((m as u64) << 32) | n as u64);
    for _ in 0..REJECTION_BUDGET {
        let initial = simplex_draw(&mut stream, m);
        let transitions = (0..n - 1)
            .map(|_| {
                let rows: Vec<Vec<f64>> = (0..m).map(|_| simplex_draw(&mut stream, m)).collect();
                SquareMatrix::from_rows(&rows).expect("square")
            })
            .collect();
        let f = (0..n)
            .map(|_| (0..m).map(|_| 2.0 * stream.uniform() - 1.0).collect())
            .collect();
        let spec = validate(&ChainSpec::new(initial, transitions, f), true)?;
        let (rho1, _) = rho1_lambda(&spec)?;
        if rho1 <= 1.0 - floor {
            return Ok(spec);
        }
    }
    Err(Error::RejectionBudgetExceeded {
        attempts: REJECTION_BUDGET,
    })
}

impl Family {
    /// Parses `NAME[:k=v,...]`:
    ///
    /// * `iid` / `iid:m=K` — uniform on `K` states (default 2), centered `f(x) = x`
    /// * `two-state:a=RATE` — see [`Rate::parse`]
    /// * `degenerate:c=C`
    /// * `random:m=M,seed=S,floor=F`
    /// * `gaussian-ar1:phi=P,f=identity|clip(L)`
    ///
    /// `binding` supplies the value of the symbol `c` in rate expressions.
    pub fn parse(descriptor: &str, binding: Option<f64>) -> Result<Self> {
        let (name, params) = descriptor.split_once(':').unwrap_or((descriptor, ""));
        let mut kv = Vec::new();
        for part in params.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, found `{part}`")))?;
            kv.push((k.trim().to_string(), v.trim().to_string()));
        }
        let get = |key: &str| kv.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let check_keys = |allowed: &[&str]| -> Result<()> {
            match kv.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
                Some((k, _)) => Err(Error::Parse(format!("unknown parameter `{k}` for family `{name}`"))),
                None => Ok(()),
            }
        };
        let num = |key: &str, default: Option<f64>| -> Result<f64> {
            match get(key) {
                Some("c") => binding.ok_or_else(|| Error::Parse(format!("`{key}=c` needs a bound value for c"))),
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::Parse(format!("`{key}` expects a number, found `{v}`"))),
                None => default.ok_or_else(|| Error::Parse(format!("family `{name}` needs `{key}=`"))),
            }
        };
        match name.trim() {
            "iid" => {
                check_keys(&["m"])?;
                let m = num("m", Some(2.0))?;
                if m < 1.0 || m.fract() != 0.0 {
                    return Err(Error::Parse(format!("iid needs an integer m >= 1, got {m}")));
                }
                let m = m as usize;
                let mid = (m as f64 - 1.0) / 2.0;
                let scale = if mid > 0.0 { mid } else { 1.0 };
                let f = (0..m).map(|x| (x as f64 - mid) / scale).collect();
                family_iid(f, vec![1.0 / m as f64; m])
            }
            "two-state" => {
                check_keys(&["a"])?;
                let expr = get("a").ok_or_else(|| Error::Parse("two-state needs `a=RATE`".into()))?;
                Ok(family_two_state(Rate::parse(expr, binding)?))
            }
            "degenerate" => {
                check_keys(&["c"])?;
                family_degenerate(num("c", binding)?)
            }
            "random" => {
                check_keys(&["m", "seed", "floor"])?;
                let m = num("m", Some(3.0))?;
                let seed = get("seed")
                    .unwrap_or("0")
                    .parse::<u64>()
                    .map_err(|_| Error::Parse("`seed` expects an unsigned integer".into()))?;
                if m < 2.0 || m.fract() != 0.0 {
                    return Err(Error::Parse(format!("random needs an integer m >= 2, got {m}")));
                }
                family_random(m as usize, seed, num("floor", Some(0.0))?)
            }
            "gaussian-ar1" => {
                check_keys(&["phi", "f"])?;
                let phi = num("phi", None)?;
                let observable = match get("f").unwrap_or("identity") {
                    "identity" => Observable::Identity,
                    other => {
                        let level = other
                            .strip_prefix("clip(")
                            .and_then(|r| r.strip_suffix(')'))
                            .ok_or_else(|| Error::Parse(format!("unknown observable `{other}`")))?;
                        Observable::Clip {
                            level: level
                                .parse()
                                .map_err(|_| Error::Parse(format!("bad clip level `{level}`")))?,
                        }
                    }
                };
                family_gaussian_ar1(phi, observable)
            }
            other => Err(Error::Parse(format!("unknown family `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Iid { .. } => "iid",
            Family::TwoState { .. } => "two-state",
            Family::Degenerate { .. } => "degenerate",
            Family::Random { .. } => "random",
            Family::GaussianAr1 { .. } => "gaussian-ar1",
        }
    }

    /// Canonical descriptor, accepted back by [`Family::parse`] (the iid
    /// family prints its laws, which are only re-parseable for the uniform
    /// built-ins).
    pub fn descriptor(&self) -> String {
        match self {
            Family::Iid { initial, .. } => format!("iid:m={}", initial.len()),
            Family::TwoState { rate } => format!("two-state:a={rate}"),
            Family::Degenerate { c } => format!("degenerate:c={c}"),
            Family::Random { m, seed, floor } => format!("random:m={m},seed={seed},floor={floor}"),
            Family::GaussianAr1 { phi, observable } => format!("gaussian-ar1:phi={phi},f={observable}"),
        }
    }

    pub fn is_finite(&self) -> bool {
        !matches!(self, Family::GaussianAr1 { .. })
    }

    /// Flip probability at row `n` for the two-state families.
    pub fn flip_probability(&self, n: usize) -> Option<f64> {
        match self {
            Family::TwoState { rate } => Some(rate.at(n)),
            Family::Degenerate { c } => Some((c / n as f64).min(0.5)),
            _ => None,
        }
    }

    pub fn row(&self, n: usize) -> Result<Row> {
        if n == 0 {
            return Err(Error::DimensionMismatch("row length must be >= 1".into()));
        }
        match self {
            Family::Iid { initial, f } => {
                let spec = ChainSpec::new(
                    initial.clone(),
                    vec![SquareMatrix::repeated_row(initial); n - 1],
                    vec![f.clone(); n],
                );
                Ok(Row::Finite(validate(&spec, false)?))
            }
            Family::TwoState { .. } | Family::Degenerate { .. } => {
                let a = self.flip_probability(n).expect("two-state family");
                if !(a > 0.0 && a <= 0.5) {
                    return Err(Error::InvalidRate(format!("a_{n} = {a} outside (0, 0.5]")));
                }
                Ok(Row::Finite(validate(&two_state_row(a, n), false)?))
            }
            Family::Random { m, seed, floor } => Ok(Row::Finite(random_row(*m, *seed, *floor, n)?)),
            Family::GaussianAr1 { phi, observable } => Ok(Row::Gaussian(GaussianRow {
                n,
                phi: *phi,
                observable: *observable,
            })),
        }
    }

    /// Finite row or an error for sampler-only families.
    pub fn spec(&self, n: usize) -> Result<ChainSpec> {
        match self.row(n)? {
            Row::Finite(s) => Ok(s.with_name(format!("{}@n={n}", self.descriptor()))),
            Row::Gaussian(_) => Err(Error::Parse(format!("family `{}` has no finite state space", self.name()))),
        }
    }

    pub fn analytic(&self, n: usize) -> Option<Analytic> {
        match self {
            Family::Iid { initial, f } => {
                let var: f64 = initial.iter().zip(f).map(|(p, v)| p * v * v).sum();
                Some(Analytic {
                    rho1: 0.0,
                    lambda: 1.0,
                    delta1: 0.0,
                    sigma2: Some(n as f64 * var),
                    b2: Some(n as f64 * var),
                })
            }
            Family::TwoState { .. } | Family::Degenerate { .. } => {
                let a = self.flip_probability(n)?;
                let r = 1.0 - 2.0 * a;
                let (rho1, lambda) = if n >= 2 { (r, 2.0 * a) } else { (0.0, 1.0) };
                Some(Analytic {
                    rho1,
                    lambda,
                    delta1: rho1,
                    sigma2: Some(geometric_sigma2(n, r)),
                    b2: Some(n as f64),
                })
            }
            Family::Random { .. } => None,
            Family::GaussianAr1 { phi, observable } => {
                let row = GaussianRow {
                    n,
                    phi: *phi,
                    observable: *observable,
                };
                let dependent = *phi != 0.0 && n >= 2;
                let rho1 = if n >= 2 { phi.abs() } else { 0.0 };
                Some(Analytic {
                    rho1,
                    lambda: 1.0 - rho1,
                    delta1: if dependent { 1.0 } else { 0.0 },
                    sigma2: Some(row.sigma2()),
                    b2: Some(n as f64 * observable.variance()),
                })
            }
        }
    }
}

/// The finite built-ins used by the property corpus.
pub fn builtin_finite_families() -> Vec<Family> {
    vec![
        Family::parse("iid", None).expect("builtin"),
        family_iid(vec![-0.6, 0.4, 0.9], vec![0.5, 0.3, 0.2]).expect("builtin"),
        family_two_state(Rate::Constant { c: 0.25 }),
        family_two_state(Rate::Constant { c: 0.4 }),
        family_two_state(Rate::Constant { c: 0.5 }),
        family_two_state(Rate::Power { c: 0.5, g: 0.25 }),
        family_degenerate(0.5).expect("builtin"),
        family_random(3, 7, 0.1).expect("builtin"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::rho1_lambda;
    use crate::moments::sigma_squared;

    #[test]
    fn rate_grammar() {
        assert_eq!(Rate::parse("0.3", None).unwrap(), Rate::Constant { c: 0.3 });
        assert_eq!(Rate::parse("c", Some(0.3)).unwrap(), Rate::Constant { c: 0.3 });
        assert_eq!(Rate::parse("0.5/n", None).unwrap(), Rate::OverN { c: 0.5 });
        assert_eq!(Rate::parse("0.5*n^(-0.25)", None).unwrap(), Rate::Power { c: 0.5, g: 0.25 });
        assert_eq!(Rate::parse("0.5/n^0.25", None).unwrap(), Rate::Power { c: 0.5, g: 0.25 });
        assert!(Rate::parse("c", None).is_err());
        assert!(Rate::parse("0.5*n^(0.25)", None).is_err());
        assert!(Rate::parse("abc", None).is_err());
        assert!(Rate::parse("-1", None).is_err());
    }

    #[test]
    fn iid_family() {
        let fam = Family::parse("iid", None).unwrap();
        let spec = fam.spec(10).unwrap();
        assert!(rho1_lambda(&spec).unwrap().0 < 1e-12);
        assert!((sigma_squared(&spec) - 10.0).abs() < 1e-12);
        assert!(family_iid(vec![1.0, 1.0], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn two_state_family() {
        let fam = family_two_state(Rate::Constant { c: 0.25 });
        let spec = fam.spec(3).unwrap();
        assert!((sigma_squared(&spec) - 5.5).abs() < 1e-12);
        assert!((rho1_lambda(&spec).unwrap().0 - 0.5).abs() < 1e-12);
        let half = family_two_state(Rate::Constant { c: 0.5 }).analytic(9).unwrap();
        assert_eq!(half.lambda, 1.0);
        assert!(matches!(
            family_two_state(Rate::Constant { c: 0.7 }).row(5),
            Err(Error::InvalidRate(_))
        ));
    }

    #[test]
    fn slowly_mixing_rate_satisfies_log_condition() {
        let fam = family_two_state(Rate::Power { c: 0.5, g: 0.25 });
        let values: Vec<f64> = [1e4, 1e6, 1e8, 1e10]
            .iter()
            .map(|&n| {
                let lam = fam.analytic(n as usize).unwrap().lambda;
                lam.powi(3) * n / lam.ln().powi(2)
            })
            .collect();
        assert!(values.windows(2).all(|w| w[1] > w[0]), "{values:?}");
        assert!((fam.analytic(10_000).unwrap().lambda - 0.1).abs() < 1e-12);
    }

    #[test]
    fn degenerate_family() {
        let fam = family_degenerate(0.5).unwrap();
        let a = fam.analytic(5000).unwrap();
        assert!((a.lambda - 2e-4).abs() < 1e-15);
        let lam = a.lambda;
        assert!(lam.powi(3) * 5000.0 / lam.ln().powi(2) < 1e-8);
        assert!(family_degenerate(0.0).is_err());
    }

    #[test]
    fn random_family_is_deterministic() {
        let fam = family_random(3, 7, 0.1).unwrap();
        let a = fam.spec(6).unwrap();
        let b = fam.spec(6).unwrap();
        assert_eq!(a, b);
        assert!(rho1_lambda(&a).unwrap().0 <= 0.9);
        assert!(validate(&a, false).is_ok());
        assert!(family_random(1, 0, 0.1).is_err());
        assert!(family_random(3, 0, 1.0).is_err());
    }

    #[test]
    fn random_family_budget() {
        // floor close to one cannot be met by generic positive matrices
        assert!(matches!(
            random_row(4, 3, 0.999_999, 6),
            Err(Error::RejectionBudgetExceeded { .. })
        ));
    }

    #[test]
    fn gaussian_identity_metadata() {
        let fam = family_gaussian_ar1(0.5, Observable::Identity).unwrap();
        let a = fam.analytic(10_000).unwrap();
        assert_eq!(a.delta1, 1.0);
        assert_eq!(a.rho1, 0.5);
        let ratio = a.sigma2.unwrap() / 10_000.0;
        assert!((ratio - 3.0).abs() < 1e-3, "{ratio}");
        assert!((a.sigma2.unwrap() - geometric_sigma2(10_000, 0.5)).abs() < 1e-8);
        assert!(matches!(family_gaussian_ar1(1.0, Observable::Identity), Err(Error::InvalidPhi(_))));
        let iid = family_gaussian_ar1(0.0, Observable::Identity).unwrap().analytic(50).unwrap();
        assert_eq!(iid.sigma2, Some(50.0));
    }

    #[test]
    fn clip_expansion_sums_to_variance() {
        // the coefficients decay polynomially, so the partial sum only
        // approaches the variance from below
        for level in [0.3, 1.0, 1.5, 3.0] {
            let obs = Observable::Clip { level };
            let total: f64 = obs.hermite_weights().iter().sum();
            let gap = obs.variance() - total;
            assert!((-1e-15..1e-5).contains(&gap), "level {level}: gap {gap}");
        }
    }

    #[test]
    fn geometric_sigma2_closed_form_matches_sum() {
        for r in [0.0, 0.3, 0.9, 0.999_999, 1.0 - 1e-7] {
            let n = 1_000_001;
            let mut direct = n as f64;
            let mut rk = 1.0;
            for k in 1..n {
                rk *= r;
                direct += 2.0 * (n - k) as f64 * rk;
            }
            let closed = geometric_sigma2(n, r);
            assert!((closed - direct).abs() <= 1e-9 * direct, "r {r}: {closed} vs {direct}");
        }
    }

    #[test]
    fn clip_covariance_matches_quadrature() {
        // Independent check of E f(U) f(V), corr(U, V) = r. The conditional
        // mean of the clipped V given U is closed-form; the outer integral
        // uses composite Simpson on the three smooth pieces of f(U).
        let level = 1.0;
        let obs = Observable::Clip { level };
        let r: f64 = 0.6;
        let s = (1.0 - r * r).sqrt();
        let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let cond_mean = |u: f64| {
            let mu = r * u;
            let (a, b) = ((-level - mu) / s, (level - mu) / s);
            let middle = mu * (normal_cdf(b) - normal_cdf(a)) + s * (pdf(a) - pdf(b));
            middle + level * (1.0 - normal_cdf(b)) - level * normal_cdf(a)
        };
        let integrand = |u: f64| obs.apply(u) * cond_mean(u) * pdf(u);
        let simpson = |lo: f64, hi: f64| {
            let m = 20_000;
            let h = (hi - lo) / m as f64;
            let mut acc = integrand(lo) + integrand(hi);
            for i in 1..m {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * integrand(lo + i as f64 * h);
            }
            acc * h / 3.0
        };
        let oracle = simpson(-12.0, -level) + simpson(-level, level) + simpson(level, 12.0);
        let row = GaussianRow {
            n: 2,
            phi: r,
            observable: obs,
        };
        assert!((row.lag_covariance(1) - oracle).abs() < 1e-10, "{} vs {oracle}", row.lag_covariance(1));
        assert!((row.lag_covariance(0) - obs.variance()).abs() < 1e-15);
    }

    #[test]
    fn descriptors_parse_back() {
        for d in [
            "two-state:a=0.3",
            "two-state:a=0.5/n",
            "two-state:a=0.5*n^(-0.25)",
            "degenerate:c=0.5",
            "random:m=3,seed=7,floor=0.1",
            "gaussian-ar1:phi=0.5,f=identity",
            "gaussian-ar1:phi=0.5,f=clip(1.5)",
            "iid:m=3",
        ] {
            let fam = Family::parse(d, None).unwrap();
            assert_eq!(fam.descriptor(), d);
            assert_eq!(Family::parse(&fam.descriptor(), None).unwrap(), fam);
        }
        assert!(Family::parse("nope", None).is_err());
        assert!(Family::parse("two-state:b=1", None).is_err());
        assert_eq!(
            Family::parse("two-state:a=c", Some(0.3)).unwrap(),
            family_two_state(Rate::Constant { c: 0.3 })
        );
    }
}
