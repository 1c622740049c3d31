//! Self-financing value processes, relative log-return, excess growth.

use crate::error::{Error, Result};
use crate::market::{market_weights, MarketPath, WeightPath};
use crate::paths::{CumulativePath, TimeGrid};

/// Portfolio wealth normalized to `Z(t_0) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuePath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl ValuePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidPath(format!(
                "{} values for {} grid points",
                values.len(),
                grid.len()
            )));
        }
        if values[0] != 1.0 {
            return Err(Error::InvalidPath(format!("value path must start at 1, got {}", values[0])));
        }
        if let Some(step) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::NonPositiveValue { step, value: values[step] });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Per-interval increments (one fewer than grid points).
#[derive(Debug, Clone, PartialEq)]
pub struct RatePath {
    grid: TimeGrid,
    increments: Vec<f64>,
}

impl RatePath {
    pub fn new(grid: TimeGrid, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != grid.steps() {
            return Err(Error::InvalidPath(format!(
                "{} increments for {} intervals",
                increments.len(),
                grid.steps()
            )));
        }
        if let Some(k) = increments.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidPath(format!("non-finite increment at interval {k}")));
        }
        Ok(Self { grid, increments })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn cumulative(&self) -> CumulativePath {
        CumulativePath::from_increments(self.grid.clone(), &self.increments)
            .expect("finite increments on matching grid")
    }
}

/// Rebalances to `w(·, t_k)` at each left endpoint:
/// `Z(t_{k+1}) = Z(t_k) Σ_i w(i,k) X_i(t_{k+1}) / X_i(t_k)`.
pub fn value_process(m: &MarketPath, w: &WeightPath) -> Result<ValuePath> {
    w.ensure_matches(m, "value_process")?;
    let mut values = Vec::with_capacity(m.grid().len());
    let mut z = 1.0;
    values.push(z);
    for k in 0..m.grid().steps() {
        let (now, next) = (m.caps_at(k), m.caps_at(k + 1));
        let gross: f64 = w
            .at(k)
            .iter()
            .zip(now.iter().zip(next))
            .map(|(wi, (x0, x1))| wi * (x1 / x0))
            .sum();
        z *= gross;
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::NonPositiveValue { step: k + 1, value: z });
        }
        values.push(z);
    }
    ValuePath::new(m.grid().clone(), values)
}

/// `Z_μ`, the market portfolio held through [`value_process`].
pub fn market_value(m: &MarketPath) -> ValuePath {
    value_process(m, &market_weights(m)).expect("long-only market weights keep value positive")
}

/// `log(Z_π(t) / Z_μ(t))`.
pub fn relative_log_return(portfolio: &ValuePath, market: &ValuePath) -> Result<CumulativePath> {
    portfolio.grid.ensure_same(&market.grid, "relative_log_return")?;
    let values = portfolio
        .values
        .iter()
        .zip(&market.values)
        .map(|(zp, zm)| zp.ln() - zm.ln())
        .collect();
    CumulativePath::new(portfolio.grid.clone(), values)
}

/// Realized excess growth, left-endpoint weights:
/// `½ (Σ_i w_i dq_ii − Σ_ij w_i w_j dq_ij)` with `dq_ij = Δlog X_i · Δlog X_j`.
pub fn excess_growth_rate(m: &MarketPath, w: &WeightPath) -> Result<RatePath> {
    w.ensure_matches(m, "excess_growth_rate")?;
    let n = m.n();
    let mut dlog = vec![0.0; n];
    let increments = (0..m.grid().steps())
        .map(|k| {
            let (now, next) = (m.caps_at(k), m.caps_at(k + 1));
            for i in 0..n {
                dlog[i] = (next[i] / now[i]).ln();
            }
            let wk = w.at(k);
            let own: f64 = wk.iter().zip(&dlog).map(|(wi, d)| wi * d * d).sum();
            let port: f64 = wk.iter().zip(&dlog).map(|(wi, d)| wi * d).sum();
            // Σ_ij w_i w_j d_i d_j factors as (Σ_i w_i d_i)²
            0.5 * (own - port * port)
        })
        .collect();
    RatePath::new(m.grid().clone(), increments)
}
