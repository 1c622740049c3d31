//! Structural and trading processes, and the refinement checks that go
//! with them.
//!
//! For any weight path `w` and market weights `μ`,
//!
//! ```text
//! log(Z_w / Z_μ) = structural + trading
//! structural     = Σ_i ∫ w_i ∘ d log μ_i      (midpoint sum)
//! ```
//!
//! and the trading process is defined as the remainder, so the split holds
//! to rounding on every grid. When `w` is generated by `S`, the structural
//! process approximates `log S(μ(t)) − log S(μ(0))` and the trading process
//! approximates the drift process `Θ`; both residuals vanish as the grid is
//! refined.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::warn;

use crate::error::{Error, Result};
use crate::generators::{
    drift_process, generated_weights, log_generator_change, Builtin, GeneratingFunction,
    INTERIOR_FLOOR,
};
use crate::market::{market_weights, MarketPath, WeightPath};
use crate::paths::CumulativePath;
use crate::portfolio::{excess_growth_rate, market_value, relative_log_return, value_process};

/// Weight mismatch above which a supplied generator is reported as not
/// generating the supplied weights.
pub const GENERATOR_MISMATCH_TOL: f64 = 1e-9;

/// `Σ_i ½(w_i(t_k) + w_i(t_{k+1})) (log μ_i(t_{k+1}) − log μ_i(t_k))`, accumulated.
pub fn structural_process(w: &WeightPath, mu: &WeightPath) -> Result<CumulativePath> {
    w.grid().ensure_same(mu.grid(), "structural_process")?;
    if w.n() != mu.n() {
        return Err(Error::GridMismatch(format!(
            "structural_process: {} portfolio weights vs {} market weights",
            w.n(),
            mu.n()
        )));
    }
    let min = mu.min_weight();
    if !(min >= INTERIOR_FLOOR) {
        return Err(Error::Domain(format!(
            "market weight {min:e} is below the interior floor {INTERIOR_FLOOR:e}"
        )));
    }
    let n = w.n();
    let increments: Vec<f64> = (0..w.grid().steps())
        .map(|k| {
            let (w0, w1) = (w.at(k), w.at(k + 1));
            let (m0, m1) = (mu.at(k), mu.at(k + 1));
            (0..n)
                .map(|i| 0.5 * (w0[i] + w1[i]) * (m1[i].ln() - m0[i].ln()))
                .sum::<f64>()
        })
        .collect();
    CumulativePath::from_increments(w.grid().clone(), &increments)
}

/// `relative − structural`, pointwise.
pub fn trading_process(relative: &CumulativePath, structural: &CumulativePath) -> Result<CumulativePath> {
    relative.sub(structural)
}

/// `Σ_k |p(t_{k+1}) − p(t_k)|`.
pub fn total_variation(p: &CumulativePath) -> f64 {
    p.values().windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

#[derive(Debug, Clone)]
pub struct DecompositionReport {
    pub relative_log_return: CumulativePath,
    pub structural_log: CumulativePath,
    pub trading: CumulativePath,
    pub drift: Option<CumulativePath>,
    pub generator_log_change: Option<CumulativePath>,
    /// Cumulative realized excess growth of the portfolio.
    pub excess_growth: CumulativePath,
    pub diagnostics: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl DecompositionReport {
    /// Named paths in output column order.
    pub fn named_paths(&self) -> Vec<(&'static str, &CumulativePath)> {
        let mut out = vec![
            ("rel", &self.relative_log_return),
            ("structural", &self.structural_log),
            ("trading", &self.trading),
        ];
        if let Some(d) = &self.drift {
            out.push(("drift", d));
        }
        if let Some(g) = &self.generator_log_change {
            out.push(("generator_log_change", g));
        }
        out
    }

    pub fn diagnostic(&self, name: &str) -> Option<f64> {
        self.diagnostics.get(name).copied()
    }
}

/// Full decomposition of `w` against the market `m`.
///
/// With a generator, also computes `Θ` and `log S(μ)` and the residuals
/// `structural_vs_generator = sup|structural − Δlog S(μ)|` and
/// `trading_vs_drift = sup|trading − Θ|`.
pub fn decompose(
    m: &MarketPath,
    w: &WeightPath,
    g: Option<&dyn GeneratingFunction>,
) -> Result<DecompositionReport> {
    w.ensure_matches(m, "decompose")?;
    let mu = market_weights(m);
    let relative = relative_log_return(&value_process(m, w)?, &market_value(m))?;
    let structural = structural_process(w, &mu)?;
    let trading = trading_process(&relative, &structural)?;
    let excess_growth = excess_growth_rate(m, w)?.cumulative();

    let mut diagnostics = BTreeMap::new();
    let mut warnings = Vec::new();
    let identity = relative.sub(&structural.add(&trading)?)?.sup_norm();
    diagnostics.insert("identity_residual".to_string(), identity);
    diagnostics.insert("tv_relative".to_string(), total_variation(&relative));
    diagnostics.insert("tv_structural".to_string(), total_variation(&structural));
    diagnostics.insert("tv_trading".to_string(), total_variation(&trading));
    diagnostics.insert("sup_trading".to_string(), trading.sup_norm());
    diagnostics.insert(
        "trading_vs_excess_growth".to_string(),
        trading.sub(&excess_growth)?.sup_norm(),
    );

    let (drift, generator_log_change) = match g {
        Some(g) => {
            let expected = generated_weights(g, &mu)?;
            let mismatch = expected.max_abs_diff(w)?;
            diagnostics.insert("generator_weight_mismatch".to_string(), mismatch);
            if mismatch > GENERATOR_MISMATCH_TOL {
                let msg = format!(
                    "weights differ from those generated by `{}` by up to {mismatch:e}",
                    g.name()
                );
                warn!("{msg}");
                warnings.push(msg);
            }
            let theta = drift_process(g, &mu)?;
            let log_s = log_generator_change(g, &mu)?;
            diagnostics.insert(
                "structural_vs_generator".to_string(),
                structural.sub(&log_s)?.sup_norm(),
            );
            diagnostics.insert("trading_vs_drift".to_string(), trading.sub(&theta)?.sup_norm());
            (Some(theta), Some(log_s))
        }
        None => (None, None),
    };

    Ok(DecompositionReport {
        relative_log_return: relative,
        structural_log: structural,
        trading,
        drift,
        generator_log_change,
        excess_growth,
        diagnostics,
        warnings,
    })
}

/// A weight rule that can be re-evaluated on any refinement of a market.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightRule {
    /// Weights generated by a built-in generating function.
    Generated(Builtin),
    /// Fixed share counts `h`: `w_i = h_i X_i / Σ_j h_j X_j`.
    BuyAndHold { shares: Vec<f64> },
}

impl WeightRule {
    pub fn weights(&self, m: &MarketPath) -> Result<WeightPath> {
        match self {
            WeightRule::Generated(g) => generated_weights(g, &market_weights(m)),
            WeightRule::BuyAndHold { shares } => {
                if shares.len() != m.n() {
                    return Err(Error::Validation(format!(
                        "{} share counts for {} stocks",
                        shares.len(),
                        m.n()
                    )));
                }
                let mut weights = Vec::with_capacity(m.n() * m.grid().len());
                for k in 0..m.grid().len() {
                    let held: Vec<f64> = shares.iter().zip(m.caps_at(k)).map(|(h, x)| h * x).collect();
                    let total: f64 = held.iter().sum();
                    weights.extend(held.iter().map(|v| v / total));
                }
                WeightPath::new(m.grid().clone(), m.n(), weights)
            }
        }
    }

    pub fn generator(&self) -> Option<&Builtin> {
        match self {
            WeightRule::Generated(g) => Some(g),
            WeightRule::BuyAndHold { .. } => None,
        }
    }

    pub fn decompose(&self, m: &MarketPath) -> Result<DecompositionReport> {
        let w = self.weights(m)?;
        decompose(m, &w, self.generator().map(|g| g as &dyn GeneratingFunction))
    }
}

impl fmt::Display for WeightRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightRule::Generated(g) => g.fmt(f),
            WeightRule::BuyAndHold { shares } => {
                let h: Vec<String> = shares.iter().map(f64::to_string).collect();
                write!(f, "buyhold:h={}", h.join(","))
            }
        }
    }
}

impl FromStr for WeightRule {
    type Err = Error;

    /// Any generator string, or `buyhold:h=1,2,3` (positive share counts).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("buyhold") {
            let list = rest
                .trim_start()
                .strip_prefix(':')
                .and_then(|r| r.trim_start().strip_prefix('h'))
                .and_then(|r| r.trim_start().strip_prefix('='))
                .ok_or_else(|| Error::Config(format!("expected `buyhold:h=...`, got `{s}`")))?;
            let shares = list
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("not a number: `{v}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            if shares.len() < 2 || shares.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
                return Err(Error::Validation("buy-and-hold needs at least 2 positive share counts".into()));
            }
            return Ok(WeightRule::BuyAndHold { shares });
        }
        s.parse().map(WeightRule::Generated)
    }
}

/// Market observed at each requested step count, all sampled from the same
/// finest path so that every level shares one Brownian driver.
pub fn refinement_levels(finest: &MarketPath, steps: &[usize]) -> Result<Vec<MarketPath>> {
    let total = finest.grid().steps();
    steps
        .iter()
        .map(|&s| {
            if s == 0 || !total.is_multiple_of(s) {
                return Err(Error::Validation(format!(
                    "refinement {s} does not divide the finest grid of {total} steps"
                )));
            }
            finest.subsample(total / s)
        })
        .collect()
}

/// Median of finite values; `NaN` when there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    }
}

/// Ratios `values[i+1] / values[i]`.
pub fn successive_ratios(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| w[1] / w[0]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationLevel {
    pub steps: usize,
    pub tv_relative: f64,
    pub tv_trading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Report {
    pub levels: Vec<VariationLevel>,
    pub relative_ratios: Vec<f64>,
    pub trading_ratios: Vec<f64>,
}

/// Total variation of the relative log-return and the trading process at
/// each refinement level. A bounded-variation trading process shows ratios
/// near 1 while the relative return, driven by Brownian noise, grows by
/// about `√2` per halving of the mesh.
pub fn verify_prop1(levels: &[MarketPath], rule: &WeightRule) -> Result<Prop1Report> {
    let levels = levels
        .iter()
        .map(|m| {
            let report = rule.decompose(m)?;
            Ok(VariationLevel {
                steps: m.grid().steps(),
                tv_relative: total_variation(&report.relative_log_return),
                tv_trading: total_variation(&report.trading),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rel: Vec<f64> = levels.iter().map(|l| l.tv_relative).collect();
    let trade: Vec<f64> = levels.iter().map(|l| l.tv_trading).collect();
    Ok(Prop1Report {
        relative_ratios: successive_ratios(&rel),
        trading_ratios: successive_ratios(&trade),
        levels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorLevel {
    pub steps: usize,
    /// `sup|structural − Δlog S(μ)|`.
    pub r1: f64,
    /// `sup|trading − Θ|`.
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop2Report {
    pub levels: Vec<GeneratorLevel>,
    pub r1_ratios: Vec<f64>,
    pub r2_ratios: Vec<f64>,
}

/// Residuals between the structural/trading processes of the portfolio
/// generated by `g` and `log S(μ)` / `Θ`, at each refinement level.
pub fn verify_prop2(levels: &[MarketPath], g: &dyn GeneratingFunction) -> Result<Prop2Report> {
    let levels = levels
        .iter()
        .map(|m| {
            let w = generated_weights(g, &market_weights(m))?;
            let report = decompose(m, &w, Some(g))?;
            Ok(GeneratorLevel {
                steps: m.grid().steps(),
                r1: report.diagnostic("structural_vs_generator").unwrap_or(f64::NAN),
                r2: report.diagnostic("trading_vs_drift").unwrap_or(f64::NAN),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let r1: Vec<f64> = levels.iter().map(|l| l.r1).collect();
    let r2: Vec<f64> = levels.iter().map(|l| l.r2).collect();
    Ok(Prop2Report {
        r1_ratios: successive_ratios(&r1),
        r2_ratios: successive_ratios(&r2),
        levels,
    })
}
