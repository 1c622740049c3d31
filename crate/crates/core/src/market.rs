//! Capitalization paths: simulation, CSV ingestion/export, market weights.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use chrono::NaiveDate;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{ScalarPath, TimeGrid};

/// Days per year for converting calendar dates to year fractions.
pub const DAYS_PER_YEAR: f64 = 365.25;

/// Tolerance on the per-time sum of a weight vector.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Stock capitalizations `X_i(t_k)`, stored time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPath {
    grid: TimeGrid,
    n: usize,
    caps: Vec<f64>,
}

impl MarketPath {
    /// `caps` holds one slice of `n` capitalizations per grid point.
    pub fn new(grid: TimeGrid, n: usize, caps: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Validation(format!("market needs at least 2 stocks, got {n}")));
        }
        if caps.len() != n * grid.len() {
            return Err(Error::Validation(format!(
                "expected {} caps ({n} stocks x {} times), got {}",
                n * grid.len(),
                grid.len(),
                caps.len()
            )));
        }
        if let Some(idx) = caps.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::Validation(format!(
                "cap of stock {} at time index {} is {}; caps must be positive and finite",
                idx % n,
                idx / n,
                caps[idx]
            )));
        }
        Ok(Self { grid, n, caps })
    }

    pub fn from_slices(grid: TimeGrid, slices: &[Vec<f64>]) -> Result<Self> {
        let n = slices.first().map_or(0, Vec::len);
        if slices.iter().any(|s| s.len() != n) {
            return Err(Error::Validation("ragged capitalization slices".into()));
        }
        Self::new(grid, n, slices.concat())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn caps_at(&self, k: usize) -> &[f64] {
        &self.caps[k * self.n..(k + 1) * self.n]
    }

    pub fn cap(&self, i: usize, k: usize) -> f64 {
        self.caps[k * self.n + i]
    }

    /// Total capitalization `X(t_k)`.
    pub fn total(&self, k: usize) -> f64 {
        self.caps_at(k).iter().sum()
    }

    pub fn log_cap(&self, i: usize) -> ScalarPath {
        let values = (0..self.grid.len()).map(|k| self.cap(i, k).ln()).collect();
        ScalarPath::new(self.grid.clone(), values).expect("positive caps have finite logs")
    }

    /// Coarser market on every `stride`-th grid point (shared driver).
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        let grid = self.grid.subsample(stride)?;
        let caps = (0..self.grid.len())
            .step_by(stride)
            .flat_map(|k| self.caps_at(k).iter().copied())
            .collect();
        Self::new(grid, self.n, caps)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.grid.clone(),
            self.n,
            self.caps.iter().map(|c| c * factor).collect(),
        )
    }
}

/// Weight vectors `w(·, t_k)` summing to one at each time, stored time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPath {
    grid: TimeGrid,
    n: usize,
    weights: Vec<f64>,
}

impl WeightPath {
    pub fn new(grid: TimeGrid, n: usize, weights: Vec<f64>) -> Result<Self> {
        if n == 0 || weights.len() != n * grid.len() {
            return Err(Error::Validation(format!(
                "expected {} weights ({n} x {} times), got {}",
                n * grid.len(),
                grid.len(),
                weights.len()
            )));
        }
        if let Some(idx) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite weight for stock {} at time index {}",
                idx % n,
                idx / n
            )));
        }
        for (k, slice) in weights.chunks(n).enumerate() {
            let sum: f64 = slice.iter().sum();
            if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(Error::Validation(format!(
                    "weights at time index {k} sum to {sum}, not 1"
                )));
            }
        }
        Ok(Self { grid, n, weights })
    }

    pub fn from_slices(grid: TimeGrid, slices: &[Vec<f64>]) -> Result<Self> {
        let n = slices.first().map_or(0, Vec::len);
        if slices.iter().any(|s| s.len() != n) {
            return Err(Error::Validation("ragged weight slices".into()));
        }
        Self::new(grid, n, slices.concat())
    }

    /// The same weight vector at every grid point.
    pub fn constant(grid: TimeGrid, weights: &[f64]) -> Result<Self> {
        let data = weights.repeat(grid.len());
        Self::new(grid, weights.len(), data)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.weights[k * self.n..(k + 1) * self.n]
    }

    pub fn weight(&self, i: usize, k: usize) -> f64 {
        self.weights[k * self.n + i]
    }

    pub fn component(&self, i: usize) -> ScalarPath {
        let values = (0..self.grid.len()).map(|k| self.weight(i, k)).collect();
        ScalarPath::new(self.grid.clone(), values).expect("weights are finite")
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &WeightPath) -> Result<f64> {
        self.grid.ensure_same(&other.grid, "weight comparison")?;
        if self.n != other.n {
            return Err(Error::GridMismatch(format!(
                "weight paths have {} and {} stocks",
                self.n, other.n
            )));
        }
        Ok(self
            .weights
            .iter()
            .zip(&other.weights)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub(crate) fn ensure_matches(&self, m: &MarketPath, what: &str) -> Result<()> {
        self.grid.ensure_same(m.grid(), what)?;
        if self.n != m.n() {
            return Err(Error::GridMismatch(format!(
                "{what}: {} weights per slice for {} stocks",
                self.n,
                m.n()
            )));
        }
        Ok(())
    }
}

/// `μ_i(t) = X_i(t) / X(t)`.
pub fn market_weights(m: &MarketPath) -> WeightPath {
    let mut weights = Vec::with_capacity(m.caps.len());
    for k in 0..m.grid.len() {
        let caps = m.caps_at(k);
        let total: f64 = caps.iter().sum();
        weights.extend(caps.iter().map(|c| c / total));
    }
    WeightPath::new(m.grid.clone(), m.n, weights).expect("normalized positive caps")
}

/// Correlated geometric Brownian motion for the capitalizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmSpec {
    /// Per-stock log-drift (1/year).
    pub drift: Vec<f64>,
    /// Covariance of log-capitalizations (1/year).
    pub covariance: Vec<Vec<f64>>,
    pub initial_caps: Vec<f64>,
    /// Years.
    pub horizon: f64,
    pub steps: usize,
    pub seed: u64,
}

impl GbmSpec {
    /// Independent stocks with common variance and zero drift.
    pub fn diagonal(initial_caps: Vec<f64>, variance: f64, horizon: f64, steps: usize, seed: u64) -> Self {
        let n = initial_caps.len();
        let covariance = (0..n)
            .map(|i| (0..n).map(|j| if i == j { variance } else { 0.0 }).collect())
            .collect();
        Self {
            drift: vec![0.0; n],
            covariance,
            initial_caps,
            horizon,
            steps,
            seed,
        }
    }

    pub fn n(&self) -> usize {
        self.initial_caps.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n < 2 {
            return Err(Error::Validation(format!("market needs at least 2 stocks, got {n}")));
        }
        if self.drift.len() != n {
            return Err(Error::Validation(format!("drift has {} entries for {n} stocks", self.drift.len())));
        }
        if self.drift.iter().any(|d| !d.is_finite()) {
            return Err(Error::Validation("drift must be finite".into()));
        }
        if self.initial_caps.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::Validation("initial caps must be positive and finite".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Validation(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.steps == 0 {
            return Err(Error::Validation("steps must be at least 1".into()));
        }
        if self.covariance.len() != n || self.covariance.iter().any(|row| row.len() != n) {
            return Err(Error::Validation(format!("covariance must be {n}x{n}")));
        }
        self.covariance_factor().map(|_| ())
    }

    /// `L` with `L Lᵀ = covariance`, via the symmetric eigendecomposition so
    /// that singular (semidefinite) matrices are accepted.
    fn covariance_factor(&self) -> Result<DMatrix<f64>> {
        let n = self.n();
        let cov = DMatrix::from_fn(n, n, |i, j| self.covariance[i][j]);
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("covariance must be finite".into()));
        }
        let scale = cov.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Validation(format!("covariance not symmetric at ({i}, {j})")));
                }
            }
        }
        let eigen = SymmetricEigen::new(cov);
        let min_eig = eigen.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 * scale {
            return Err(Error::Validation(format!(
                "covariance is not positive semidefinite (eigenvalue {min_eig:e})"
            )));
        }
        let roots = eigen.eigenvalues.map(|l| l.max(0.0).sqrt());
        Ok(&eigen.eigenvectors * DMatrix::from_diagonal(&roots))
    }
}

/// Exact log-space stepping:
/// `log X(t+Δ) = log X(t) + (drift − ½ diag Σ) Δ + L z √Δ`, `z ~ N(0, I)`.
pub fn simulate_gbm(spec: &GbmSpec) -> Result<MarketPath> {
    spec.validate()?;
    let n = spec.n();
    let factor = spec.covariance_factor()?;
    let grid = TimeGrid::uniform(spec.horizon, spec.steps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mean: Vec<f64> = (0..n)
        .map(|i| spec.drift[i] - 0.5 * spec.covariance[i][i])
        .collect();

    let mut caps = Vec::with_capacity(n * grid.len());
    caps.extend_from_slice(&spec.initial_caps);
    let mut log_change = vec![0.0_f64; n];
    let mut z = vec![0.0_f64; n];
    for k in 0..spec.steps {
        let dt = grid.dt(k);
        let sqrt_dt = dt.sqrt();
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        for i in 0..n {
            let shock: f64 = (0..n).map(|j| factor[(i, j)] * z[j]).sum();
            log_change[i] += mean[i] * dt + shock * sqrt_dt;
            caps.push(spec.initial_caps[i] * log_change[i].exp());
        }
    }
    MarketPath::new(grid, n, caps)
}

/// Reads long-format `date,ticker,cap` rows into a market path.
///
/// Tickers keep their order of first appearance; times are year fractions
/// (actual/365.25) from the first date.
pub fn ingest_caps_csv(source: impl Read) -> Result<MarketPath> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| Error::Ingest { row: 1, message: e.to_string() })?
        .clone();
    let expected = ["date", "ticker", "cap"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::Ingest {
            row: 1,
            message: format!("header must be `date,ticker,cap`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut tickers: Vec<String> = Vec::new();
    let mut ticker_index: HashMap<String, usize> = HashMap::new();
    // date -> (first row, ticker index -> cap)
    let mut by_date: BTreeMap<NaiveDate, (usize, HashMap<usize, f64>)> = BTreeMap::new();

    for record in reader.records() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize);
            Error::Ingest { row, message: e.to_string() }
        })?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let fail = |message: String| Error::Ingest { row, message };
        let (date, ticker, cap) = (&record[0], &record[1], &record[2]);
        if date.is_empty() || ticker.is_empty() || cap.is_empty() {
            return Err(fail("missing cell".into()));
        }
        let date = NaiveDate::parse_from_str(date, "%Y-%m-%d")
            .map_err(|e| fail(format!("unparseable date `{date}`: {e}")))?;
        let value: f64 = cap
            .parse()
            .map_err(|_| fail(format!("unparseable cap `{cap}`")))?;
        if !(value.is_finite() && value > 0.0) {
            return Err(fail(format!("cap must be positive, got {cap}")));
        }
        let idx = *ticker_index.entry(ticker.to_string()).or_insert_with(|| {
            tickers.push(ticker.to_string());
            tickers.len() - 1
        });
        let (_, slot) = by_date.entry(date).or_insert_with(|| (row, HashMap::new()));
        if slot.insert(idx, value).is_some() {
            return Err(fail(format!("duplicate entry for ({date}, {ticker})")));
        }
    }

    if by_date.len() < 2 {
        return Err(Error::Ingest { row: 0, message: format!("need at least 2 dates, got {}", by_date.len()) });
    }
    if tickers.len() < 2 {
        return Err(Error::Ingest { row: 0, message: format!("need at least 2 tickers, got {}", tickers.len()) });
    }

    let first = *by_date.keys().next().expect("non-empty");
    let n = tickers.len();
    let mut times = Vec::with_capacity(by_date.len());
    let mut caps = Vec::with_capacity(n * by_date.len());
    for (date, (row, slot)) in &by_date {
        if let Some(missing) = (0..n).find(|i| !slot.contains_key(i)) {
            return Err(Error::Ingest {
                row: *row,
                message: format!("ticker {} has no cap on {date}", tickers[missing]),
            });
        }
        times.push((*date - first).num_days() as f64 / DAYS_PER_YEAR);
        caps.extend((0..n).map(|i| slot[&i]));
    }
    MarketPath::new(TimeGrid::new(times)?, n, caps)
}

/// Writes `date,ticker,cap` rows; times map to `start + round(t·365.25)` days.
///
/// Tickers are named by `tickers`, or `S1..Sn` when `None`.
pub fn write_caps_csv(
    m: &MarketPath,
    start: NaiveDate,
    tickers: Option<&[String]>,
    sink: impl Write,
) -> Result<()> {
    let names: Vec<String> = match tickers {
        Some(t) if t.len() == m.n() => t.to_vec(),
        Some(t) => {
            return Err(Error::Validation(format!("{} ticker names for {} stocks", t.len(), m.n())))
        }
        None => (1..=m.n()).map(|i| format!("S{i}")).collect(),
    };
    let mut dates = Vec::with_capacity(m.grid().len());
    for &t in m.grid().times() {
        let days = (t * DAYS_PER_YEAR).round() as i64;
        let date = start
            .checked_add_signed(chrono::Duration::days(days))
            .ok_or_else(|| Error::Validation(format!("time {t} out of calendar range")))?;
        if dates.last() == Some(&date) {
            return Err(Error::Validation(format!(
                "grid is finer than one day near t = {t}; cannot export as dates"
            )));
        }
        dates.push(date);
    }
    let mut out = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| Error::Validation(format!("csv write failed: {e}"));
    out.write_record(["date", "ticker", "cap"]).map_err(csv_err)?;
    for (k, date) in dates.iter().enumerate() {
        let date = date.format("%Y-%m-%d").to_string();
        for (i, name) in names.iter().enumerate() {
            out.write_record([date.as_str(), name.as_str(), &m.cap(i, k).to_string()])
                .map_err(csv_err)?;
        }
    }
    out.flush().map_err(|e| Error::Validation(format!("csv flush failed: {e}")))?;
    Ok(())
}
