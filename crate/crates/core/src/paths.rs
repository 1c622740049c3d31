//! Sampled paths on a time partition and the discrete integration kernel.
//!
//! Every integral here is a finite sum over the grid intervals. The Itô sum
//! evaluates the integrand at the left endpoint of each interval, the
//! Fisk–Stratonovich sum at the average of both endpoints, and the
//! cross-variation sums products of increments. On any grid the three obey
//!
//! ```text
//! fs_integral(Y, X) - ito_integral(Y, X) == 0.5 * cross_variation(X, Y)
//! ```
//!
//! exactly (up to rounding), since `½(Y_k + Y_{k+1}) - Y_k = ½ ΔY_k`.

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Strictly increasing, finite time points (in years).
#[derive(Debug, Clone)]
pub struct TimeGrid {
    times: Arc<[f64]>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                times.len()
            )));
        }
        if let Some(k) = times.iter().position(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite time at index {k}")));
        }
        if let Some(k) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "times not strictly increasing at index {}",
                k + 1
            )));
        }
        Ok(Self {
            times: times.into(),
        })
    }

    /// `steps + 1` equally spaced points on `[0, horizon]`.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::InvalidGrid("steps must be at least 1".into()));
        }
        let dt = horizon / steps as f64;
        let mut times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
        times[steps] = horizon;
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Largest spacing between consecutive points.
    pub fn mesh(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Every `stride`-th point. The last point must land on the grid end.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 || !self.steps().is_multiple_of(stride) {
            return Err(Error::InvalidGrid(format!(
                "stride {stride} does not divide {} steps",
                self.steps()
            )));
        }
        Self::new(self.times.iter().copied().step_by(stride).collect())
    }

    /// Sub-grid over the point indices in `range` (at least two points).
    pub fn window(&self, range: Range<usize>) -> Result<Self> {
        if range.end > self.len() {
            return Err(Error::InvalidGrid(format!(
                "window {range:?} exceeds {} points",
                self.len()
            )));
        }
        Self::new(self.times[range].to_vec())
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        Arc::ptr_eq(&self.times, &other.times) || self.times == other.times
    }

    pub(crate) fn ensure_same(&self, other: &TimeGrid, what: &str) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: grids differ ({} vs {} points)",
                self.len(),
                other.len()
            )))
        }
    }
}

impl PartialEq for TimeGrid {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}

fn check_values(grid: &TimeGrid, values: &[f64], what: &str) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::InvalidPath(format!(
            "{what}: {} values for {} grid points",
            values.len(),
            grid.len()
        )));
    }
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidPath(format!("{what}: non-finite value at index {k}")));
    }
    Ok(())
}

/// Samples of a real process at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarPath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl ScalarPath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        check_values(&grid, &values, "scalar path")?;
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Result<Self> {
        let values = vec![value; grid.len()];
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Applies `f` pointwise; fails if any image is non-finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "function not finite at x = {} (index {k})",
                self.values[k]
            )));
        }
        Ok(Self {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn window(&self, range: Range<usize>) -> Result<Self> {
        let grid = self.grid.window(range.clone())?;
        Self::new(grid, self.values[range].to_vec())
    }
}

/// A process that starts at zero: integrals, variations, log-changes.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativePath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl CumulativePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        check_values(&grid, &values, "cumulative path")?;
        if values[0] != 0.0 {
            return Err(Error::InvalidPath(format!(
                "cumulative path must start at 0, got {}",
                values[0]
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    /// Running sum of per-interval increments (`steps` entries).
    pub fn from_increments(grid: TimeGrid, increments: &[f64]) -> Result<Self> {
        if increments.len() != grid.steps() {
            return Err(Error::InvalidPath(format!(
                "{} increments for {} intervals",
                increments.len(),
                grid.steps()
            )));
        }
        let mut values = Vec::with_capacity(grid.len());
        let mut acc = 0.0;
        values.push(acc);
        for inc in increments {
            acc += inc;
            values.push(acc);
        }
        Self::new(grid, values)
    }

    /// `x(t_k) - x(t_0)`.
    pub fn change_of(path: &ScalarPath) -> Self {
        let x0 = path.values[0];
        Self {
            grid: path.grid.clone(),
            values: path.values.iter().map(|v| v - x0).collect(),
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn add(&self, other: &CumulativePath) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &CumulativePath) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    fn zip_with(&self, other: &CumulativePath, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.ensure_same(&other.grid, "cumulative path arithmetic")?;
        Ok(Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

fn accumulate(
    y: &ScalarPath,
    x: &ScalarPath,
    what: &str,
    term: impl Fn(f64, f64, f64, f64) -> f64,
) -> Result<CumulativePath> {
    y.grid.ensure_same(&x.grid, what)?;
    let (yv, xv) = (&y.values, &x.values);
    let mut values = Vec::with_capacity(xv.len());
    let mut acc = 0.0_f64;
    values.push(acc);
    for k in 0..xv.len() - 1 {
        acc += term(yv[k], yv[k + 1], xv[k], xv[k + 1]);
        values.push(acc);
    }
    CumulativePath::new(x.grid.clone(), values)
}

/// Left-endpoint sum `Σ Y(t_i) (X(t_{i+1}) - X(t_i))`.
pub fn ito_integral(y: &ScalarPath, x: &ScalarPath) -> Result<CumulativePath> {
    accumulate(y, x, "ito_integral", |y0, _y1, x0, x1| y0 * (x1 - x0))
}

/// Midpoint-averaged sum `Σ ½(Y(t_i) + Y(t_{i+1})) (X(t_{i+1}) - X(t_i))`.
pub fn fs_integral(y: &ScalarPath, x: &ScalarPath) -> Result<CumulativePath> {
    accumulate(y, x, "fs_integral", |y0, y1, x0, x1| {
        0.5 * (y0 + y1) * (x1 - x0)
    })
}

/// Realized `⟨X, Y⟩`: sum of products of increments.
pub fn cross_variation(x: &ScalarPath, y: &ScalarPath) -> Result<CumulativePath> {
    accumulate(y, x, "cross_variation", |y0, y1, x0, x1| {
        (x1 - x0) * (y1 - y0)
    })
}

pub fn quadratic_variation(x: &ScalarPath) -> Result<CumulativePath> {
    cross_variation(x, x)
}

/// `F(X(t_k)) - F(X(t_0)) - ∫ F'(X) ∘ dX` on the grid.
///
/// Zero for polynomials of degree ≤ 2; for smoother `F` it is the trapezoid
/// error of the midpoint sum and shrinks as the grid is refined.
pub fn fs_chain_rule_residual(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    x: &ScalarPath,
) -> Result<CumulativePath> {
    let fx = x.map(f)?;
    let dfx = x.map(df)?;
    let integral = fs_integral(&dfx, x)?;
    CumulativePath::change_of(&fx).sub(&integral)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::uniform(1.0, n - 1).unwrap()
    }

    fn path(values: &[f64]) -> ScalarPath {
        ScalarPath::new(grid(values.len()), values.to_vec()).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0, 0.5]).is_err());
        assert!(TimeGrid::new(vec![0.0, f64::NAN]).is_err());
        let g = TimeGrid::new(vec![0.0, 0.1, 0.5, 0.6]).unwrap();
        assert!((g.mesh() - 0.4).abs() < 1e-15);
        assert_eq!(g.steps(), 3);
    }

    #[test]
    fn uniform_grid_ends_on_horizon() {
        let g = TimeGrid::uniform(1.0, 252).unwrap();
        assert_eq!(g.len(), 253);
        assert_eq!(g.end(), 1.0);
        assert_eq!(g.subsample(4).unwrap().len(), 64);
        assert!(g.subsample(5).is_err());
    }

    #[test]
    fn cumulative_must_start_at_zero() {
        assert!(CumulativePath::new(grid(2), vec![1.0, 2.0]).is_err());
        assert!(CumulativePath::new(grid(2), vec![0.0, 2.0]).is_ok());
    }

    #[test]
    fn ito_examples() {
        let x = path(&[1.0, 1.5, 1.2]);
        let two = ScalarPath::constant(x.grid().clone(), 2.0).unwrap();
        assert!((ito_integral(&two, &x).unwrap().last() - 0.4).abs() < 1e-15);
        assert!((ito_integral(&x, &x).unwrap().last() - 0.05).abs() < 1e-15);
        let flat = path(&[3.0, 3.0, 3.0]);
        let y = path(&[0.3, -1.0, 7.0]);
        assert!(ito_integral(&y, &flat)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn fs_examples() {
        let x = path(&[1.0, 1.5, 1.2]);
        assert!((fs_integral(&x, &x).unwrap().last() - 0.22).abs() < 1e-15);
        let c = ScalarPath::constant(x.grid().clone(), -0.7).unwrap();
        assert_eq!(fs_integral(&c, &x).unwrap(), ito_integral(&c, &x).unwrap());
        let y = path(&[0.0, 2.0, 2.0]);
        let x = path(&[0.0, 1.0, 3.0]);
        assert_eq!(fs_integral(&y, &x).unwrap().last(), 5.0);
    }

    #[test]
    fn cross_variation_examples() {
        let x = path(&[0.0, 1.0, 3.0]);
        let y = path(&[0.0, 2.0, 2.0]);
        assert_eq!(cross_variation(&x, &y).unwrap().last(), 2.0);
        assert_eq!(cross_variation(&x, &y).unwrap(), cross_variation(&y, &x).unwrap());
        let flat = path(&[4.0, 4.0, 4.0]);
        assert!(cross_variation(&flat, &y)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn misaligned_paths_rejected() {
        let a = path(&[0.0, 1.0, 3.0]);
        let b = ScalarPath::new(
            TimeGrid::new(vec![0.0, 0.3, 1.0]).unwrap(),
            vec![0.0, 1.0, 2.0],
        )
        .unwrap();
        assert!(matches!(ito_integral(&a, &b), Err(Error::GridMismatch(_))));
        assert!(matches!(fs_integral(&a, &b), Err(Error::GridMismatch(_))));
        assert!(matches!(cross_variation(&a, &b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn chain_rule_exact_cases() {
        let x = path(&[1.0, 1.5, 1.2, 0.4, 2.0]);
        let quad = fs_chain_rule_residual(|v| 0.5 * v * v, |v| v, &x).unwrap();
        assert!(quad.sup_norm() < 1e-15);
        let ident = fs_chain_rule_residual(|v| v, |_| 1.0, &x).unwrap();
        assert!(ident.sup_norm() < 1e-15);
    }

    #[test]
    fn chain_rule_domain_error() {
        let x = path(&[1.0, -0.5, 2.0]);
        let r = fs_chain_rule_residual(f64::ln, |v| 1.0 / v, &x);
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    fn random_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(-10.0..10.0f64, n),
                prop::collection::vec(-10.0..10.0f64, n),
            )
        })
    }

    proptest! {
        #[test]
        fn fs_minus_ito_is_half_cross_variation((y, x) in random_pair()) {
            let (y, x) = (path(&y), path(&x));
            let fs = fs_integral(&y, &x).unwrap();
            let ito = ito_integral(&y, &x).unwrap();
            let qv = cross_variation(&x, &y).unwrap();
            for k in 0..x.len() {
                let lhs = fs.values()[k] - ito.values()[k];
                let rhs = 0.5 * qv.values()[k];
                let scale = fs.values()[k].abs().max(ito.values()[k].abs()).max(1.0);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn integrals_linear_in_integrand((y, x) in random_pair(), a in -3.0..3.0f64) {
            let (y, x) = (path(&y), path(&x));
            let ay = y.map(|v| a * v + 1.0).unwrap();
            let one = ScalarPath::constant(x.grid().clone(), 1.0).unwrap();
            type Integral = fn(&ScalarPath, &ScalarPath) -> Result<CumulativePath>;
            let integrals: [Integral; 3] = [ito_integral, fs_integral, |y, x| cross_variation(x, y)];
            for integral in integrals {
                let lhs = integral(&ay, &x).unwrap();
                let rhs = integral(&y, &x).unwrap().scale(a).add(&integral(&one, &x).unwrap()).unwrap();
                let tol = 1e-10 * (1.0 + lhs.sup_norm());
                prop_assert!(lhs.sub(&rhs).unwrap().sup_norm() <= tol);
            }
        }

        #[test]
        fn integrals_additive_over_concatenation((y, x) in random_pair(), cut in 0.0..1.0f64) {
            let (y, x) = (path(&y), path(&x));
            let j = ((x.len() - 1) as f64 * cut) as usize;
            let j = j.clamp(1, x.len() - 1);
            for integral in [ito_integral, fs_integral, cross_variation] {
                let whole = integral(&y, &x).unwrap().last();
                let left = integral(&y.window(0..j + 1).unwrap(), &x.window(0..j + 1).unwrap()).unwrap().last();
                let right = if j + 1 < x.len() {
                    integral(&y.window(j..x.len()).unwrap(), &x.window(j..x.len()).unwrap()).unwrap().last()
                } else {
                    0.0
                };
                prop_assert!((whole - left - right).abs() <= 1e-10 * (1.0 + whole.abs()));
            }
        }

        #[test]
        fn quadratic_variation_non_decreasing(x in prop::collection::vec(-5.0..5.0f64, 2..50)) {
            let qv = quadratic_variation(&path(&x)).unwrap();
            prop_assert!(qv.values().windows(2).all(|w| w[1] >= w[0]));
        }
    }
}
