//! Index-membership swap scenario.
//!
//! A top-`m` cap-weighted index holds the `m` largest stocks at weights
//! proportional to their caps. Over one grid interval the stocks ranked
//! `r` and `r + 1` exchange capitalizations while nothing else moves, then
//! the market stays still for one more interval. The index sells the
//! faller and buys the riser, so it loses exactly the faller's drop. The
//! structural process, which holds both stocks at their average weights
//! across the interval, sees no loss, and the trading process carries all
//! of it.

use crate::decomposition::{decompose, DecompositionReport};
use crate::error::{Error, Result};
use crate::market::{MarketPath, WeightPath};
use crate::paths::TimeGrid;

use super::config::LeapfrogSection;

#[derive(Debug, Clone)]
pub struct LeapfrogOutcome {
    pub market: MarketPath,
    pub weights: WeightPath,
    pub report: DecompositionReport,
    /// Indices of the two stocks that trade places, if any.
    pub swapped: Option<(usize, usize)>,
    /// Relative log-return at the end of the path.
    pub relative_return: f64,
    pub structural: f64,
    pub trading: f64,
}

impl LeapfrogOutcome {
    /// Share of the relative return carried by the trading process
    /// (`None` when the relative return is zero).
    pub fn trading_share(&self) -> Option<f64> {
        (self.relative_return != 0.0).then(|| self.trading / self.relative_return)
    }

    pub fn structural_share(&self) -> Option<f64> {
        (self.relative_return != 0.0).then(|| self.structural / self.relative_return)
    }
}

/// Stock indices ordered by cap, largest first; ties keep index order.
fn ranking(caps: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..caps.len()).collect();
    order.sort_by(|&a, &b| caps[b].total_cmp(&caps[a]).then(a.cmp(&b)));
    order
}

/// Weights of the top-`m` index: members by cap, renormalized over members.
pub fn top_m_weights(m: &MarketPath, size: usize) -> Result<WeightPath> {
    if size == 0 || size > m.n() {
        return Err(Error::Validation(format!(
            "index size must be in 1..={}, got {size}",
            m.n()
        )));
    }
    let mut weights = Vec::with_capacity(m.n() * m.grid().len());
    for k in 0..m.grid().len() {
        let caps = m.caps_at(k);
        let members = &ranking(caps)[..size];
        let held: f64 = members.iter().map(|&i| caps[i]).sum();
        let mut slice = vec![0.0; m.n()];
        for &i in members {
            slice[i] = caps[i] / held;
        }
        weights.extend(slice);
    }
    WeightPath::new(m.grid().clone(), m.n(), weights)
}

pub fn run_leapfrog(spec: &LeapfrogSection) -> Result<LeapfrogOutcome> {
    let n = spec.caps.len();
    if n < 2 {
        return Err(Error::Validation(format!("need at least 2 stocks, got {n}")));
    }
    if spec.m == 0 || spec.m > n {
        return Err(Error::Validation(format!(
            "index size m must be in 1..={n}, got {}",
            spec.m
        )));
    }
    if !(spec.dt > 0.0 && spec.dt.is_finite()) {
        return Err(Error::Validation(format!("dt must be positive, got {}", spec.dt)));
    }
    let rank = spec.swap_rank.unwrap_or(spec.m.min(n - 1));
    if rank == 0 || rank >= n {
        return Err(Error::Validation(format!(
            "swap rank must be in 1..{n} so that rank + 1 exists, got {rank}"
        )));
    }

    let before = spec.caps.clone();
    let mut after = before.clone();
    let swapped = if spec.swap {
        let order = ranking(&before);
        let (a, b) = (order[rank - 1], order[rank]);
        after.swap(a, b);
        Some((a, b))
    } else {
        None
    };

    let grid = TimeGrid::new(vec![0.0, spec.dt, 2.0 * spec.dt])?;
    let market = MarketPath::from_slices(grid, &[before, after.clone(), after])?;
    let weights = top_m_weights(&market, spec.m)?;
    let report = decompose(&market, &weights, None)?;
    Ok(LeapfrogOutcome {
        relative_return: report.relative_log_return.last(),
        structural: report.structural_log.last(),
        trading: report.trading.last(),
        market,
        weights,
        report,
        swapped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(m: usize, swap: bool) -> LeapfrogSection {
        LeapfrogSection {
            caps: vec![500.0, 400.0, 300.0, 200.0, 100.0],
            m,
            swap_rank: None,
            swap,
            dt: 1.0 / 252.0,
        }
    }

    #[test]
    fn swap_loss_is_all_trading() {
        let out = run_leapfrog(&spec(3, true)).unwrap();
        assert_eq!(out.swapped, Some((2, 3)));
        // the index loses the faller's drop: (300 → 200) at weight 300/1200
        let expected = (1.0f64 - 100.0 / 1200.0).ln();
        assert!((out.relative_return - expected).abs() < 1e-15);
        assert!(out.structural.abs() < 1e-15);
        assert!(out.trading_share().unwrap() > 0.999_999);
    }

    #[test]
    fn static_caps_give_zero_everything() {
        let out = run_leapfrog(&spec(3, false)).unwrap();
        for (_, p) in out.report.named_paths() {
            assert!(p.values().iter().all(|&v| v == 0.0));
        }
        assert!(out.trading_share().is_none());
    }

    #[test]
    fn whole_market_index_has_no_trading() {
        let out = run_leapfrog(&spec(5, true)).unwrap();
        assert_eq!(out.swapped, Some((3, 4)));
        assert!(out.report.trading.sup_norm() < 1e-15);
        assert_eq!(out.relative_return, 0.0);
    }

    #[test]
    fn index_size_validated() {
        assert!(matches!(run_leapfrog(&spec(6, true)), Err(Error::Validation(_))));
        assert!(matches!(run_leapfrog(&spec(0, true)), Err(Error::Validation(_))));
        let mut s = spec(3, true);
        s.swap_rank = Some(5);
        assert!(matches!(run_leapfrog(&s), Err(Error::Validation(_))));
    }

    #[test]
    fn top_m_ties_keep_index_order() {
        let grid = TimeGrid::uniform(1.0, 1).unwrap();
        let m = MarketPath::from_slices(grid, &[vec![1.0, 2.0, 2.0], vec![1.0, 2.0, 2.0]]).unwrap();
        let w = top_m_weights(&m, 1).unwrap();
        assert_eq!(w.at(0), &[0.0, 1.0, 0.0]);
    }
}
