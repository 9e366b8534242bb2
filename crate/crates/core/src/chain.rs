//! Finite-state non-homogeneous chain rows: validation, marginal and joint
//! laws, path sampling and the exhaustive path-enumeration oracle.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::linalg::{kahan_sum, CompensatedSum, SquareMatrix};
use crate::rng::Stream;

/// Row-sum / initial-mass tolerance for stochasticity.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Tolerance for derived quantities (means, marginal masses).
pub const DERIVED_TOL: f64 = 1e-10;
/// Default cap on `m^n` for [`enumerate_expectation`].
pub const DEFAULT_ENUMERATION_CAP: usize = 2_000_000;

/// One row of a triangular array: `ξ_1, …, ξ_n` on states `0..m` with
/// `X_i = f_i(ξ_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub m: usize,
    pub n: usize,
    pub initial: Vec<f64>,
    /// `transitions[i](x, y) = P(ξ_{i+2} = y | ξ_{i+1} = x)` (0-based `i`).
    pub transitions: Vec<SquareMatrix>,
    pub f: Vec<Vec<f64>>,
}

/// Laws of `ξ_1, …, ξ_n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalLaws {
    pub pi: Vec<Vec<f64>>,
}

/// `matrix(x, y) = P(ξ_s = x, ξ_{s+k} = y)` with 1-based `s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointLaw {
    pub s: usize,
    pub k: usize,
    pub matrix: SquareMatrix,
}

impl JointLaw {
    /// Wraps an arbitrary joint probability matrix (used for standalone
    /// coefficient computations and tests).
    pub fn from_matrix(matrix: SquareMatrix) -> Self {
        Self { s: 1, k: 1, matrix }
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        self.matrix.rows().map(|r| kahan_sum(r.iter().copied())).collect()
    }

    pub fn column_marginal(&self) -> Vec<f64> {
        let m = self.matrix.dim();
        (0..m)
            .map(|y| kahan_sum((0..m).map(|x| self.matrix[(x, y)])))
            .collect()
    }

    pub fn transpose(&self) -> Self {
        Self {
            s: self.s,
            k: self.k,
            matrix: self.matrix.transpose(),
        }
    }
}

impl ChainSpec {
    pub fn new(initial: Vec<f64>, transitions: Vec<SquareMatrix>, f: Vec<Vec<f64>>) -> Self {
        Self {
            name: None,
            m: initial.len(),
            n: f.len(),
            initial,
            transitions,
            f,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    /// Same chain, observation functions replaced.
    pub fn with_f(&self, f: Vec<Vec<f64>>) -> Self {
        Self {
            f,
            ..self.clone()
        }
    }

    pub fn path_count(&self) -> f64 {
        (self.m as f64).powi(self.n as i32)
    }

    /// Parses a chain-spec JSON document and validates it, centering the
    /// observation functions against the exact marginals. `origin` names
    /// the source in error messages.
    pub fn from_json_str(text: &str, origin: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::SpecFile {
            path: origin.to_string(),
            field: "<document>".into(),
            reason: e.to_string(),
        })?;
        let spec = parse_spec_value(&value, origin)?;
        validate(&spec, true).map_err(|e| match e {
            Error::NotStochastic { what, detail } => spec_err(origin, what, format!("not stochastic: {detail}")),
            other => spec_err(origin, "<spec>", other.to_string()),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::SpecFile {
            path: path.display().to_string(),
            field: "<file>".into(),
            reason: e.to_string(),
        })?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn spec_err(origin: &str, field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::SpecFile {
        path: origin.to_string(),
        field: field.into(),
        reason: reason.into(),
    }
}

fn parse_number(v: &Value, origin: &str, field: &str) -> Result<f64> {
    let x = v
        .as_f64()
        .ok_or_else(|| spec_err(origin, field, format!("expected a number, found {v}")))?;
    if !x.is_finite() {
        return Err(spec_err(origin, field, "number is not finite"));
    }
    Ok(x)
}

fn parse_vector(v: &Value, origin: &str, field: &str) -> Result<Vec<f64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| spec_err(origin, field, "expected an array of numbers"))?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| parse_number(x, origin, &format!("{field}[{i}]")))
        .collect()
}

fn parse_count(v: Option<&Value>, origin: &str, field: &str) -> Result<usize> {
    let v = v.ok_or_else(|| spec_err(origin, field, "missing"))?;
    let x = v
        .as_u64()
        .ok_or_else(|| spec_err(origin, field, format!("expected a positive integer, found {v}")))?;
    if x == 0 {
        return Err(spec_err(origin, field, "must be at least 1"));
    }
    usize::try_from(x).map_err(|_| spec_err(origin, field, "too large"))
}

fn parse_spec_value(value: &Value, origin: &str) -> Result<ChainSpec> {
    let obj = value
        .as_object()
        .ok_or_else(|| spec_err(origin, "<document>", "expected a JSON object"))?;
    let m = parse_count(obj.get("m"), origin, "m")?;
    let n = parse_count(obj.get("n"), origin, "n")?;
    let name = match obj.get("name") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(spec_err(origin, "name", "expected a string")),
    };
    let initial = parse_vector(
        obj.get("initial").ok_or_else(|| spec_err(origin, "initial", "missing"))?,
        origin,
        "initial",
    )?;
    if initial.len() != m {
        return Err(spec_err(origin, "initial", format!("expected {m} entries, found {}", initial.len())));
    }
    let trans_v = obj
        .get("transitions")
        .ok_or_else(|| spec_err(origin, "transitions", "missing"))?
        .as_array()
        .ok_or_else(|| spec_err(origin, "transitions", "expected an array of matrices"))?;
    if trans_v.len() != n - 1 {
        return Err(spec_err(
            origin,
            "transitions",
            format!("expected n-1 = {} matrices, found {}", n - 1, trans_v.len()),
        ));
    }
    let mut transitions = Vec::with_capacity(n - 1);
    for (i, mv) in trans_v.iter().enumerate() {
        let field = format!("transitions[{i}]");
        let rows_v = mv
            .as_array()
            .ok_or_else(|| spec_err(origin, &field, "expected an array of rows"))?;
        if rows_v.len() != m {
            return Err(spec_err(origin, &field, format!("expected {m} rows, found {}", rows_v.len())));
        }
        let rows = rows_v
            .iter()
            .enumerate()
            .map(|(r, rv)| {
                let rf = format!("{field}[{r}]");
                let row = parse_vector(rv, origin, &rf)?;
                if row.len() != m {
                    return Err(spec_err(origin, &rf, format!("expected {m} entries, found {}", row.len())));
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        transitions.push(SquareMatrix::from_rows(&rows).expect("shape checked"));
    }
    let f_v = obj
        .get("f")
        .ok_or_else(|| spec_err(origin, "f", "missing"))?
        .as_array()
        .ok_or_else(|| spec_err(origin, "f", "expected an array of vectors"))?;
    if f_v.len() != n {
        return Err(spec_err(origin, "f", format!("expected n = {n} vectors, found {}", f_v.len())));
    }
    let f = f_v
        .iter()
        .enumerate()
        .map(|(i, fv)| {
            let field = format!("f[{i}]");
            let v = parse_vector(fv, origin, &field)?;
            if v.len() != m {
                return Err(spec_err(origin, &field, format!("expected {m} entries, found {}", v.len())));
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ChainSpec {
        name,
        m,
        n,
        initial,
        transitions,
        f,
    })
}

fn check_dimensions(spec: &ChainSpec) -> Result<()> {
    let mismatch = |msg: String| Err(Error::DimensionMismatch(msg));
    if spec.m == 0 || spec.n == 0 {
        return mismatch(format!("m = {} and n = {} must both be >= 1", spec.m, spec.n));
    }
    if spec.initial.len() != spec.m {
        return mismatch(format!("initial has {} entries, m = {}", spec.initial.len(), spec.m));
    }
    if spec.transitions.len() != spec.n - 1 {
        return mismatch(format!(
            "{} transition matrices for n = {} (need n - 1)",
            spec.transitions.len(),
            spec.n
        ));
    }
    if let Some((i, q)) = spec.transitions.iter().enumerate().find(|(_, q)| q.dim() != spec.m) {
        return mismatch(format!("transitions[{i}] is {0}x{0}, m = {1}", q.dim(), spec.m));
    }
    if spec.f.len() != spec.n {
        return mismatch(format!("{} observation functions for n = {}", spec.f.len(), spec.n));
    }
    if let Some((i, fi)) = spec.f.iter().enumerate().find(|(_, fi)| fi.len() != spec.m) {
        return mismatch(format!("f[{i}] has {} entries, m = {}", fi.len(), spec.m));
    }
    if let Some(i) = spec.f.iter().position(|fi| fi.iter().any(|x| !x.is_finite())) {
        return mismatch(format!("f[{i}] contains a non-finite value"));
    }
    Ok(())
}

fn check_distribution(p: &[f64], what: impl Fn() -> String) -> Result<()> {
    if let Some(x) = p.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::NotStochastic {
            what: what(),
            detail: format!("entry {x} = {} is negative or not finite", p[x]),
        });
    }
    let total = kahan_sum(p.iter().copied());
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::NotStochastic {
            what: what(),
            detail: format!("sums to {total}"),
        });
    }
    Ok(())
}

fn mean_under(pi: &[f64], f: &[f64]) -> f64 {
    kahan_sum(pi.iter().zip(f).map(|(p, v)| p * v))
}

/// Checks shapes and stochasticity; with `center` set, subtracts each
/// step's mean under the exact marginal, otherwise rejects uncentered
/// functions.
///
/// Functions whose mean is already within [`DERIVED_TOL`] of zero are left
/// untouched, which makes the operation idempotent bit for bit.
pub fn validate(spec: &ChainSpec, center: bool) -> Result<ChainSpec> {
    check_dimensions(spec)?;
    check_distribution(&spec.initial, || "initial".to_string())?;
    for (i, q) in spec.transitions.iter().enumerate() {
        for (x, row) in q.rows().enumerate() {
            check_distribution(row, || format!("transitions[{i}] row {x}"))?;
        }
    }
    let laws = marginals(spec);
    let mut out = spec.clone();
    for (i, (fi, pi)) in out.f.iter_mut().zip(&laws.pi).enumerate() {
        let mean = mean_under(pi, fi);
        if mean.abs() <= DERIVED_TOL {
            continue;
        }
        if !center {
            return Err(Error::NotCentered { step: i + 1, mean });
        }
        for v in fi.iter_mut() {
            *v -= mean;
        }
    }
    Ok(out)
}

/// `π_1 = initial`, `π_{i+1} = π_i Q_i`.
pub fn marginals(spec: &ChainSpec) -> MarginalLaws {
    let mut pi = Vec::with_capacity(spec.n);
    pi.push(spec.initial.clone());
    for q in &spec.transitions {
        let next = q.left_apply(pi.last().expect("non-empty"));
        pi.push(next);
    }
    MarginalLaws { pi }
}

/// `Q_s Q_{s+1} ⋯ Q_{s+k-1}` with 1-based `s`.
pub fn transition_product(spec: &ChainSpec, s: usize, k: usize) -> SquareMatrix {
    let mut p = SquareMatrix::identity(spec.m);
    for q in &spec.transitions[s - 1..s - 1 + k] {
        p = p.matmul(q);
    }
    p
}

pub(crate) fn joint_from(pi_s: &[f64], product: &SquareMatrix) -> SquareMatrix {
    let m = product.dim();
    let mut j = SquareMatrix::zeros(m);
    for x in 0..m {
        for y in 0..m {
            j[(x, y)] = pi_s[x] * product[(x, y)];
        }
    }
    j
}

/// Joint law of `(ξ_s, ξ_{s+k})`, 1-based `s`, `k >= 1`, `s + k <= n`.
pub fn joint_law(spec: &ChainSpec, s: usize, k: usize) -> Result<JointLaw> {
    if s == 0 || k == 0 || s + k > spec.n {
        return Err(Error::IndexOutOfRange(format!(
            "joint law (s = {s}, k = {k}) needs 1 <= s, k >= 1, s + k <= n = {}",
            spec.n
        )));
    }
    let laws = marginals(spec);
    let product = transition_product(spec, s, k);
    Ok(JointLaw {
        s,
        k,
        matrix: joint_from(&laws.pi[s - 1], &product),
    })
}

/// Inverse-CDF draw from `probs` using one uniform `u`.
fn draw_index(probs: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (y, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = y;
            cum += p;
            if u < cum {
                return y;
            }
        }
    }
    last_positive
}

/// Samples one path. Consumes exactly one uniform per time step: the first
/// picks `ξ_1` from `initial`, each later one inverts the CDF of the current
/// transition row.
pub fn sample_path(spec: &ChainSpec, stream: &mut Stream) -> Vec<usize> {
    let mut path = Vec::with_capacity(spec.n);
    let mut x = draw_index(&spec.initial, stream.uniform());
    path.push(x);
    for q in &spec.transitions {
        x = draw_index(q.row(x), stream.uniform());
        path.push(x);
    }
    path
}

/// `S_n` along a freshly sampled path; draws are identical to
/// [`sample_path`].
pub fn sample_sum(spec: &ChainSpec, stream: &mut Stream) -> f64 {
    let mut x = draw_index(&spec.initial, stream.uniform());
    let mut s = spec.f[0][x];
    for (q, fi) in spec.transitions.iter().zip(&spec.f[1..]) {
        x = draw_index(q.row(x), stream.uniform());
        s += fi[x];
    }
    s
}

pub fn path_probability(spec: &ChainSpec, path: &[usize]) -> f64 {
    let mut p = spec.initial[path[0]];
    for (q, w) in spec.transitions.iter().zip(path.windows(2)) {
        p *= q[(w[0], w[1])];
    }
    p
}

pub fn path_sum(spec: &ChainSpec, path: &[usize]) -> f64 {
    spec.f.iter().zip(path).map(|(fi, &x)| fi[x]).sum()
}

/// `E[functional(path)]` by summing over every path in lexicographic order.
/// Zero-probability prefixes are pruned.
pub fn enumerate_expectation<F>(spec: &ChainSpec, functional: F) -> Result<f64>
where
    F: FnMut(&[usize]) -> f64,
{
    enumerate_expectation_with_cap(spec, DEFAULT_ENUMERATION_CAP, functional)
}

pub fn enumerate_expectation_with_cap<F>(spec: &ChainSpec, cap: usize, mut functional: F) -> Result<f64>
where
    F: FnMut(&[usize]) -> f64,
{
    let mut acc = CompensatedSum::new();
    visit_paths(spec, cap, |path, prob| acc.add(prob * functional(path)))?;
    Ok(acc.value())
}

/// Calls `visit(path, probability)` for every path of positive probability,
/// in lexicographic order, carrying the running product of step
/// probabilities.
pub fn visit_paths<V>(spec: &ChainSpec, cap: usize, mut visit: V) -> Result<()>
where
    V: FnMut(&[usize], f64),
{
    let paths = spec.path_count();
    if paths > cap as f64 {
        return Err(Error::StateSpaceTooLarge { paths, cap });
    }
    fn walk<V: FnMut(&[usize], f64)>(spec: &ChainSpec, depth: usize, prob: f64, path: &mut [usize], visit: &mut V) {
        if depth == spec.n {
            visit(path, prob);
            return;
        }
        for x in 0..spec.m {
            let step = if depth == 0 {
                spec.initial[x]
            } else {
                spec.transitions[depth - 1][(path[depth - 1], x)]
            };
            if step == 0.0 {
                continue;
            }
            path[depth] = x;
            walk(spec, depth + 1, prob * step, path, visit);
        }
    }
    let mut path = vec![0usize; spec.n];
    walk(spec, 0, 1.0, &mut path, &mut visit);
    Ok(())
}
