//! Generating functions on the simplex and the portfolios they generate.
//!
//! A positive `C²` function `S` on the open simplex generates the weights
//!
//! ```text
//! π_i = (D_i log S(μ) + 1 − Σ_j μ_j D_j log S(μ)) · μ_i
//! ```
//!
//! and the drift process `dΘ = −1/(2 S(μ)) Σ_ij D_ij S(μ) d⟨μ_i, μ_j⟩`.
//! Generators therefore expose the gradient of `log S` and the Hessian of
//! `S` itself.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::market::WeightPath;
use crate::paths::CumulativePath;

/// Smallest market weight at which generators are evaluated.
pub const INTERIOR_FLOOR: f64 = 1e-12;

pub trait GeneratingFunction: Send + Sync {
    fn name(&self) -> String;
    /// `S(x)`, positive on the open simplex.
    fn value(&self, x: &[f64]) -> f64;
    /// `D_i log S(x)`.
    fn log_gradient(&self, x: &[f64]) -> Vec<f64>;
    /// `D_ij S(x)`.
    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;
    /// Number of stocks the function is tied to, if it is tied to one.
    fn dimension(&self) -> Option<usize> {
        None
    }
}

/// The built-in generating functions.
#[derive(Debug, Clone, PartialEq)]
pub enum Builtin {
    /// `S ≡ 1`; generates the market portfolio.
    Market,
    /// `S = (Π x_i)^{1/n}`; generates equal weights.
    GeometricMean,
    /// `S = −Σ x_i log x_i`.
    Entropy,
    /// `S = (Σ x_i^p)^{1/p}`, `0 < p < 1`.
    Diversity { p: f64 },
    /// `S = Π x_i^{w_i}`; generates the constant weights `w`.
    ConstantWeighted { weights: Vec<f64> },
}

impl Builtin {
    pub fn diversity(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Validation(format!("diversity parameter must lie in (0, 1), got {p}")));
        }
        Ok(Builtin::Diversity { p })
    }

    pub fn constant_weighted(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 || weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Validation(
                "constant weights need at least 2 strictly positive entries".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > crate::market::WEIGHT_SUM_TOL {
            return Err(Error::Validation(format!("constant weights sum to {sum}, not 1")));
        }
        Ok(Builtin::ConstantWeighted { weights })
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Builtin::Market => write!(f, "market"),
            Builtin::GeometricMean => write!(f, "geom"),
            Builtin::Entropy => write!(f, "entropy"),
            Builtin::Diversity { p } => write!(f, "diversity:p={p}"),
            Builtin::ConstantWeighted { weights } => {
                let w: Vec<String> = weights.iter().map(f64::to_string).collect();
                write!(f, "constweight:w={}", w.join(","))
            }
        }
    }
}

impl FromStr for Builtin {
    type Err = Error;

    /// Accepts `market`, `geom`, `entropy`, `diversity:p=0.76`,
    /// `constweight:w=0.2,0.3,0.5`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, params) = match s.split_once(':') {
            Some((k, p)) => (k.trim(), Some(p.trim())),
            None => (s, None),
        };
        let param = |key: &str| -> Result<&str> {
            let p = params.ok_or_else(|| Error::Config(format!("`{kind}` needs `{key}=...`")))?;
            p.strip_prefix(key)
                .and_then(|rest| rest.trim_start().strip_prefix('='))
                .map(str::trim)
                .ok_or_else(|| Error::Config(format!("expected `{kind}:{key}=...`, got `{s}`")))
        };
        let number = |v: &str| -> Result<f64> {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("not a number: `{v}`")))
        };
        let plain = |b: Builtin| {
            if params.is_some() {
                Err(Error::Config(format!("`{kind}` takes no parameters")))
            } else {
                Ok(b)
            }
        };
        match kind {
            "market" => plain(Builtin::Market),
            "geom" => plain(Builtin::GeometricMean),
            "entropy" => plain(Builtin::Entropy),
            "diversity" => Builtin::diversity(number(param("p")?)?),
            "constweight" => {
                let weights = param("w")?
                    .split(',')
                    .map(number)
                    .collect::<Result<Vec<_>>>()?;
                Builtin::constant_weighted(weights)
            }
            other => Err(Error::Config(format!("unknown generator `{other}`"))),
        }
    }
}

impl GeneratingFunction for Builtin {
    fn name(&self) -> String {
        self.to_string()
    }

    fn dimension(&self) -> Option<usize> {
        match self {
            Builtin::ConstantWeighted { weights } => Some(weights.len()),
            _ => None,
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Builtin::Market => 1.0,
            Builtin::GeometricMean => {
                let n = x.len() as f64;
                (x.iter().map(|v| v.ln()).sum::<f64>() / n).exp()
            }
            Builtin::Entropy => -x.iter().map(|v| v * v.ln()).sum::<f64>(),
            Builtin::Diversity { p } => x.iter().map(|v| v.powf(*p)).sum::<f64>().powf(1.0 / p),
            Builtin::ConstantWeighted { weights } => weights
                .iter()
                .zip(x)
                .map(|(w, v)| w * v.ln())
                .sum::<f64>()
                .exp(),
        }
    }

    fn log_gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Builtin::Market => vec![0.0; x.len()],
            Builtin::GeometricMean => {
                let n = x.len() as f64;
                x.iter().map(|v| 1.0 / (n * v)).collect()
            }
            Builtin::Entropy => {
                let s = self.value(x);
                x.iter().map(|v| -(v.ln() + 1.0) / s).collect()
            }
            Builtin::Diversity { p } => {
                let total: f64 = x.iter().map(|v| v.powf(*p)).sum();
                x.iter().map(|v| v.powf(p - 1.0) / total).collect()
            }
            Builtin::ConstantWeighted { weights } => {
                weights.iter().zip(x).map(|(w, v)| w / v).collect()
            }
        }
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        match self {
            Builtin::Market => DMatrix::zeros(n, n),
            Builtin::GeometricMean => {
                let s = self.value(x);
                let nf = n as f64;
                DMatrix::from_fn(n, n, |i, j| {
                    let cross = s / (nf * nf * x[i] * x[j]);
                    if i == j {
                        cross - s / (nf * x[i] * x[i])
                    } else {
                        cross
                    }
                })
            }
            Builtin::Entropy => DMatrix::from_fn(n, n, |i, j| if i == j { -1.0 / x[i] } else { 0.0 }),
            Builtin::Diversity { p } => {
                let s = self.value(x);
                let total: f64 = x.iter().map(|v| v.powf(*p)).sum();
                let g: Vec<f64> = x.iter().map(|v| v.powf(p - 1.0) / total).collect();
                DMatrix::from_fn(n, n, |i, j| {
                    let mut h = (1.0 - p) * g[i] * g[j];
                    if i == j {
                        h += (p - 1.0) * x[i].powf(p - 2.0) / total;
                    }
                    s * h
                })
            }
            Builtin::ConstantWeighted { weights } => {
                let s = self.value(x);
                DMatrix::from_fn(n, n, |i, j| {
                    let mut h = weights[i] * weights[j] / (x[i] * x[j]);
                    if i == j {
                        h -= weights[i] / (x[i] * x[i]);
                    }
                    s * h
                })
            }
        }
    }
}

fn check_interior(x: &[f64], k: usize) -> Result<()> {
    match x.iter().position(|v| !(*v >= INTERIOR_FLOOR)) {
        Some(i) => Err(Error::Domain(format!(
            "market weight {i} is {} at time index {k}, below the interior floor {INTERIOR_FLOOR:e}",
            x[i]
        ))),
        None => Ok(()),
    }
}

fn check_dimension(g: &dyn GeneratingFunction, x: &[f64]) -> Result<()> {
    match g.dimension() {
        Some(d) if d != x.len() => Err(Error::Validation(format!(
            "generator `{}` is defined for {d} stocks, market has {}",
            g.name(),
            x.len()
        ))),
        _ => Ok(()),
    }
}

/// Portfolio weights generated by `g` along the market-weight path.
pub fn generated_weights(g: &dyn GeneratingFunction, mu: &WeightPath) -> Result<WeightPath> {
    let n = mu.n();
    let mut weights = Vec::with_capacity(n * mu.grid().len());
    for k in 0..mu.grid().len() {
        let x = mu.at(k);
        check_interior(x, k)?;
        check_dimension(g, x)?;
        let grad = g.log_gradient(x);
        let level = 1.0 - x.iter().zip(&grad).map(|(m, d)| m * d).sum::<f64>();
        weights.extend(grad.iter().zip(x).map(|(d, m)| (d + level) * m));
    }
    WeightPath::new(mu.grid().clone(), n, weights)
}

/// Drift process `Θ`, with `S` and `D_ij S` taken at the left endpoint of
/// each interval and `d⟨μ_i, μ_j⟩` realized as `Δμ_i Δμ_j`.
pub fn drift_process(g: &dyn GeneratingFunction, mu: &WeightPath) -> Result<CumulativePath> {
    let n = mu.n();
    let mut increments = Vec::with_capacity(mu.grid().steps());
    let mut dmu = vec![0.0; n];
    for k in 0..mu.grid().steps() {
        let (x, next) = (mu.at(k), mu.at(k + 1));
        check_interior(x, k)?;
        check_dimension(g, x)?;
        for i in 0..n {
            dmu[i] = next[i] - x[i];
        }
        let h = g.hessian(x);
        let mut form = 0.0;
        for i in 0..n {
            for j in 0..n {
                form += h[(i, j)] * dmu[i] * dmu[j];
            }
        }
        increments.push(-form / (2.0 * g.value(x)));
    }
    check_interior(mu.at(mu.grid().steps()), mu.grid().steps())?;
    CumulativePath::from_increments(mu.grid().clone(), &increments)
}

/// `log S(μ(t)) − log S(μ(t_0))`.
pub fn log_generator_change(g: &dyn GeneratingFunction, mu: &WeightPath) -> Result<CumulativePath> {
    let mut logs = Vec::with_capacity(mu.grid().len());
    for k in 0..mu.grid().len() {
        let x = mu.at(k);
        check_interior(x, k)?;
        let s = g.value(x);
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Domain(format!(
                "generator `{}` is {s} at time index {k}; must be positive",
                g.name()
            )));
        }
        logs.push(s.ln());
    }
    let first = logs[0];
    CumulativePath::new(mu.grid().clone(), logs.into_iter().map(|l| l - first).collect())
}

/// Largest `|x_i D_i log S(x)|` over `samples` random interior points of
/// the `n`-simplex; errors if it is not finite or `S` is not positive.
pub fn generation_bound(
    g: &dyn GeneratingFunction,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bound: f64 = 0.0;
    let mut x = vec![0.0; n];
    for _ in 0..samples {
        // uniform on the simplex: normalized exponentials
        for xi in x.iter_mut() {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            *xi = -u.ln();
        }
        let total: f64 = x.iter().sum();
        x.iter_mut().for_each(|xi| *xi = (*xi / total).max(INTERIOR_FLOOR));
        let s = g.value(&x);
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Domain(format!("generator `{}` not positive at {x:?}", g.name())));
        }
        let grad = g.log_gradient(&x);
        for (xi, d) in x.iter().zip(&grad) {
            let term = (xi * d).abs();
            if !term.is_finite() {
                return Err(Error::Domain(format!("x_i D_i log S not finite at {x:?}")));
            }
            bound = bound.max(term);
        }
    }
    Ok(bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::TimeGrid;

    fn all_builtins() -> Vec<Builtin> {
        vec![
            Builtin::Market,
            Builtin::GeometricMean,
            Builtin::Entropy,
            Builtin::Diversity { p: 0.76 },
            Builtin::ConstantWeighted { weights: vec![0.2, 0.3, 0.5] },
        ]
    }

    fn path(slices: &[Vec<f64>]) -> WeightPath {
        let grid = TimeGrid::uniform(1.0, slices.len() - 1).unwrap();
        WeightPath::from_slices(grid, slices).unwrap()
    }

    #[test]
    fn parse_and_display() {
        for g in all_builtins() {
            assert_eq!(g.to_string().parse::<Builtin>().unwrap(), g);
        }
        assert_eq!("diversity:p=0.76".parse::<Builtin>().unwrap(), Builtin::Diversity { p: 0.76 });
        assert_eq!(
            "constweight:w=0.2,0.3,0.5".parse::<Builtin>().unwrap(),
            Builtin::ConstantWeighted { weights: vec![0.2, 0.3, 0.5] }
        );
        for bad in [
            "diversity:p=1.5",
            "diversity:p=0",
            "diversity",
            "constweight:w=0.5,0.6",
            "constweight:w=1.2,-0.2",
            "entropy:p=1",
            "rank",
            "diversity:q=0.5",
        ] {
            assert!(bad.parse::<Builtin>().is_err(), "accepted {bad}");
        }
    }

    #[test]
    fn entropy_value_at_center() {
        assert!((Builtin::Entropy.value(&[0.5, 0.5]) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn market_generator_is_flat() {
        let x = [0.1, 0.2, 0.7];
        assert!(Builtin::Market.log_gradient(&x).iter().all(|&d| d == 0.0));
        assert!(Builtin::Market.hessian(&x).iter().all(|&h| h == 0.0));
    }

    #[test]
    fn hessians_are_symmetric() {
        let x = [0.1, 0.2, 0.7];
        for g in all_builtins() {
            let h = g.hessian(&x);
            assert!((&h - h.transpose()).amax() < 1e-12 * (1.0 + h.amax()), "{g}");
        }
    }

    #[test]
    fn generated_weight_examples() {
        let mu = path(&[vec![0.8, 0.2], vec![0.5, 0.5], vec![0.1, 0.9]]);
        let geom = generated_weights(&Builtin::GeometricMean, &mu).unwrap();
        for k in 0..3 {
            for &w in geom.at(k) {
                assert!((w - 0.5).abs() < 1e-15);
            }
        }
        let ent = generated_weights(&Builtin::Entropy, &mu).unwrap();
        let s = -(0.8f64 * 0.8f64.ln() + 0.2 * 0.2f64.ln());
        let closed = [-0.8 * 0.8f64.ln() / s, -0.2 * 0.2f64.ln() / s];
        assert!((ent.weight(0, 0) - closed[0]).abs() < 1e-14);
        assert!((ent.weight(1, 0) - closed[1]).abs() < 1e-14);
        assert!((ent.weight(0, 0) - 0.35674).abs() < 1e-5);
        assert!((ent.weight(1, 0) - 0.64326).abs() < 1e-5);
        assert!((ent.weight(0, 1) - 0.5).abs() < 1e-15);
        let market = generated_weights(&Builtin::Market, &mu).unwrap();
        assert!(market.max_abs_diff(&mu).unwrap() < 1e-15);
    }

    #[test]
    fn constant_weighted_generates_its_weights() {
        let w = vec![0.2, 0.3, 0.5];
        let mu = path(&[vec![0.6, 0.3, 0.1], vec![0.2, 0.2, 0.6]]);
        let pi = generated_weights(&Builtin::ConstantWeighted { weights: w.clone() }, &mu).unwrap();
        for k in 0..2 {
            for (i, wi) in w.iter().enumerate() {
                assert!((pi.weight(i, k) - wi).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn boundary_weights_rejected() {
        let mu = path(&[vec![1.0, 0.0], vec![0.5, 0.5]]);
        assert!(matches!(generated_weights(&Builtin::Entropy, &mu), Err(Error::Domain(_))));
        assert!(matches!(drift_process(&Builtin::Entropy, &mu), Err(Error::Domain(_))));
        assert!(matches!(log_generator_change(&Builtin::Entropy, &mu), Err(Error::Domain(_))));
    }

    #[test]
    fn constant_weighted_dimension_checked() {
        let mu = path(&[vec![0.5, 0.5], vec![0.4, 0.6]]);
        let g = Builtin::ConstantWeighted { weights: vec![0.2, 0.3, 0.5] };
        assert!(matches!(generated_weights(&g, &mu), Err(Error::Validation(_))));
    }

    #[test]
    fn drift_examples() {
        let mu = path(&[vec![0.6, 0.4], vec![0.3, 0.7], vec![0.5, 0.5]]);
        assert!(drift_process(&Builtin::Market, &mu).unwrap().values().iter().all(|&v| v == 0.0));
        let flat = path(&[vec![0.6, 0.4], vec![0.6, 0.4], vec![0.6, 0.4]]);
        assert!(drift_process(&Builtin::Entropy, &flat).unwrap().values().iter().all(|&v| v == 0.0));
        // -1/(2 log 2) · Σ_ij D_ij S Δμ_i Δμ_j with D_ij S = -δ_ij/x_i at (½, ½)
        let one = path(&[vec![0.5, 0.5], vec![0.6, 0.4]]);
        let theta = drift_process(&Builtin::Entropy, &one).unwrap();
        let form = -(0.1f64 * 0.1 / 0.5) - (0.1 * 0.1 / 0.5);
        let expected = -form / (2.0 * 2f64.ln());
        assert!((theta.last() - expected).abs() < 1e-15);
        assert!((theta.last() - 0.028854).abs() < 1e-6);
    }

    #[test]
    fn generation_condition_holds_on_lattice() {
        for g in all_builtins() {
            let n = g.dimension().unwrap_or(4);
            let bound = generation_bound(&g, n, 10_000, 17).unwrap();
            assert!(bound.is_finite(), "{g}");
        }
        // geometric mean and constant weights: x_i D_i log S is exactly 1/n, w_i
        assert!((generation_bound(&Builtin::GeometricMean, 4, 100, 1).unwrap() - 0.25).abs() < 1e-12);
    }
}
