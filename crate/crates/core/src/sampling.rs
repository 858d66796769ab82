//! Row-subset samplers.
//!
//! [`reg_vol_sample`] and [`fast_reg_vol_sample`] draw from λ-regularized
//! size-`s` volume sampling by reverse iterative removal: start from all
//! `n` rows and repeatedly drop row `i` with probability proportional to
//! `hᵢ = 1 - xᵢᵀ(X_SᵀX_S + λI)⁻¹xᵢ`. At `λ = 0` this is ordinary volume
//! sampling, `P(S) ∝ det(X_SᵀX_S)`.
//!
//! RNG stream order, per removal step:
//! * `RegVol`: one `f64` used for cumulative-sum inversion over the active
//!   rows in ascending index order.
//! * `FastRegVol`: per proposal, one uniform index draw followed by one `f64`
//!   for the Bernoulli(`hᵢ`) acceptance; once `|S| ≤ max(s, 2d)` the
//!   remaining removals follow the `RegVol` order.
//! * `LeverageIid`: one weighted-index draw per selected row.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dot, gram_rows, quad_form, Matrix, SpdMatrix};

/// Weights below this are treated as exact zeros and never selected.
pub const WEIGHT_FLOOR: f64 = 1e-10;

/// A frontier whose total removal weight is at most this has zero volume.
pub const ZERO_FRONTIER_TOL: f64 = 1e-12;

/// Minimum number of consecutive downdates between from-scratch refreshes.
pub const MIN_REFRESH_PERIOD: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[serde(rename = "regvol")]
    RegVol,
    #[serde(rename = "fastregvol")]
    FastRegVol,
    #[serde(rename = "leverage")]
    LeverageIid,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::RegVol => "regvol",
            Algorithm::FastRegVol => "fastregvol",
            Algorithm::LeverageIid => "leverage",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub size: usize,
    pub lambda: f64,
    pub seed: u64,
    pub algorithm: Algorithm,
}

impl SamplerConfig {
    pub fn new(algorithm: Algorithm, size: usize, lambda: f64, seed: u64) -> Self {
        Self {
            size,
            lambda,
            seed,
            algorithm,
        }
    }

    /// Checks the size and λ constraints against `x`. Rank is checked when
    /// the sampler factors the Gram matrix.
    pub fn validate(&self, x: &Matrix) -> Result<()> {
        let (n, d) = (x.rows(), x.cols());
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "lambda must be a finite non-negative number, got {}",
                self.lambda
            )));
        }
        if self.algorithm == Algorithm::LeverageIid {
            return Ok(());
        }
        if self.size > n {
            return Err(Error::InvalidConfig(format!(
                "sample size {} exceeds row count {n}",
                self.size
            )));
        }
        if self.lambda == 0.0 && self.size < d {
            return Err(Error::InvalidConfig(format!(
                "sample size {} is below dimension {d}; unregularized volume sampling needs s >= d",
                self.size
            )));
        }
        if self.lambda > 0.0 && self.size == 0 {
            return Err(Error::InvalidConfig("sample size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Generator for a single run.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator for replicate `replicate` of a run seeded with
/// `seed`: same key, distinct ChaCha stream.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// A sampled index set with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetSample {
    /// Sorted selected rows. Contains repeats only when `multiset` is set.
    pub indices: Vec<usize>,
    pub size: usize,
    pub lambda: f64,
    pub algorithm: Algorithm,
    pub seed: u64,
    /// Total proposals made by the rejection loop, accepted ones included.
    pub rejection_trials: u64,
    /// Rows in the order they were removed (reverse iterative samplers).
    pub removal_order: Option<Vec<usize>>,
    pub multiset: bool,
    /// Per-entry importance weights `1/√(s·P(i))`, aligned with `indices`.
    pub importance_weights: Option<Vec<f64>>,
}

impl SubsetSample {
    /// A plain set sample, as produced by an exact sampler or supplied by a caller.
    pub fn from_indices(mut indices: Vec<usize>, lambda: f64) -> Self {
        indices.sort_unstable();
        Self {
            size: indices.len(),
            indices,
            lambda,
            algorithm: Algorithm::RegVol,
            seed: 0,
            rejection_trials: 0,
            removal_order: None,
            multiset: false,
            importance_weights: None,
        }
    }
}

/// Live state of reverse iterative sampling.
///
/// Holds the active rows `S`, `Z = (X_SᵀX_S + λI)⁻¹`, and, when weight
/// tracking is on, `hᵢ = 1 - xᵢᵀZxᵢ` for every active row.
#[derive(Clone, Debug)]
pub struct DowndateState<'a> {
    x: &'a Matrix,
    lambda: f64,
    active: Vec<usize>,
    /// `X_SᵀX_S + λI`, downdated alongside `Z` and rebuilt from the rows
    /// whenever `|S|` halves.
    gram: Matrix,
    gram_rebuilt_at: usize,
    z: Matrix,
    /// Indexed by row id; entries of removed rows are stale.
    h: Option<Vec<f64>>,
    downdates_since_refresh: usize,
    refresh_period: usize,
    zero_volume: bool,
}

impl<'a> DowndateState<'a> {
    /// Starts from the given active rows (kept in the given order).
    pub fn new(x: &'a Matrix, lambda: f64, active: Vec<usize>, track_weights: bool) -> Result<Self> {
        let g = gram_rows(x, active.iter().copied(), lambda);
        let z = g.inverse()?;
        let mut state = Self {
            x,
            lambda,
            gram_rebuilt_at: active.len(),
            active,
            gram: g.into_matrix(),
            z,
            h: None,
            downdates_since_refresh: 0,
            refresh_period: x.cols().max(MIN_REFRESH_PERIOD),
            zero_volume: false,
        };
        if track_weights {
            state.recompute_weights();
        }
        Ok(state)
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Current `(X_SᵀX_S + λI)⁻¹`.
    pub fn inverse(&self) -> &Matrix {
        &self.z
    }

    pub fn downdates_since_refresh(&self) -> usize {
        self.downdates_since_refresh
    }

    /// True once the walk has entered a zero-volume node (λ = 0 only).
    pub fn is_zero_volume(&self) -> bool {
        self.zero_volume
    }

    /// Maintained weight of row `i`, if weights are tracked.
    pub fn weight(&self, i: usize) -> Option<f64> {
        self.h.as_ref().map(|h| h[i])
    }

    /// Maintained weights over the active rows, in active order.
    pub fn maintained_weights(&self) -> Option<Vec<f64>> {
        self.h
            .as_ref()
            .map(|h| self.active.iter().map(|&i| h[i]).collect())
    }

    /// `1 - xᵢᵀZxᵢ` from the current `Z`.
    pub fn fresh_weight(&self, i: usize) -> f64 {
        1.0 - quad_form(&self.z, self.x.row(i))
    }

    /// `|S| - d + λ·tr(Z)`, the sum of all removal weights.
    pub fn normalization(&self) -> f64 {
        self.active.len() as f64 - self.x.cols() as f64 + self.lambda * self.z.trace()
    }

    fn recompute_weights(&mut self) {
        let mut h = self.h.take().unwrap_or_else(|| vec![0.0; self.x.rows()]);
        for &i in &self.active {
            h[i] = self.fresh_weight(i);
        }
        self.h = Some(h);
    }

    fn refresh(&mut self) {
        if 2 * self.active.len() <= self.gram_rebuilt_at {
            self.gram = gram_rows(self.x, self.active.iter().copied(), self.lambda).into_matrix();
            self.gram_rebuilt_at = self.active.len();
        }
        // Keep the downdated inverse if the factorization is numerically
        // singular.
        let fresh = SpdMatrix::new(self.gram.clone()).and_then(|g| g.inverse());
        if let Ok(z) = fresh {
            self.z = z;
            if self.h.is_some() {
                self.recompute_weights();
            }
        }
        self.downdates_since_refresh = 0;
    }

    /// Removes the active row at position `pos`, whose weight is `h_i`.
    ///
    /// Updates `Z` by Sherman-Morrison and, when tracked, every remaining
    /// weight by `h_j ← h_j - (x_jᵀZx_i)²/h_i`. After `max(d, 64)`
    /// consecutive downdates, `Z` is re-inverted from the maintained Gram
    /// matrix and the weights are recomputed from it.
    pub fn remove_at(&mut self, pos: usize, h_i: f64) -> Result<usize> {
        let i = self.active.remove(pos);
        self.downdate(i, h_i)?;
        Ok(i)
    }

    /// As [`remove_at`](Self::remove_at), but moves the last active row into
    /// position `pos` instead of preserving the order.
    pub fn swap_remove_at(&mut self, pos: usize, h_i: f64) -> Result<usize> {
        let i = self.active.swap_remove(pos);
        self.downdate(i, h_i)?;
        Ok(i)
    }

    fn downdate(&mut self, i: usize, h_i: f64) -> Result<()> {
        let row = self.x.row(i);
        let d = row.len();
        for a in 0..d {
            for b in 0..d {
                let v = self.gram.get(a, b) - row[a] * row[b];
                self.gram.set(a, b, v);
            }
        }
        if self.zero_volume {
            return Ok(());
        }
        let zx = self.z.matvec(self.x.row(i));
        if !(h_i > linalg::DOWNDATE_TOL) {
            return Err(Error::SingularDowndate { h: h_i });
        }
        if let Some(h) = self.h.as_mut() {
            let inv_h = 1.0 / h_i;
            for &j in &self.active {
                let c = dot(self.x.row(j), &zx);
                h[j] -= c * c * inv_h;
            }
        }
        linalg::downdate_in_place(&mut self.z, &zx, h_i)?;
        self.downdates_since_refresh += 1;
        if self.downdates_since_refresh >= self.refresh_period {
            self.refresh();
        }
        Ok(())
    }

    fn mark_zero_volume(&mut self) {
        self.zero_volume = true;
    }
}

/// Removal weights `hᵢ = 1 - xᵢᵀZxᵢ` over the active rows, recomputed from
/// `Z` and clamped to `[0, 1]`. Normalizing them gives `P(S - i | S)`.
///
/// Fails with [`Error::AllWeightsZero`] on a zero-volume frontier, where
/// callers fall back to uniform removal.
pub fn removal_weights(state: &DowndateState<'_>) -> Result<Vec<f64>> {
    let w: Vec<f64> = state
        .active()
        .iter()
        .map(|&i| state.fresh_weight(i).clamp(0.0, 1.0))
        .collect();
    let sum: f64 = w.iter().sum();
    if sum <= ZERO_FRONTIER_TOL {
        return Err(Error::AllWeightsZero { sum });
    }
    Ok(w)
}

#[inline]
fn snap_weight(h: f64) -> f64 {
    if h < WEIGHT_FLOOR {
        0.0
    } else {
        h.min(1.0)
    }
}

/// Position `k` with `cum(k-1) ≤ u·total < cum(k)`, skipping zero weights.
fn invert_cumsum(weights: &[f64], total: f64, u: f64) -> usize {
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last_positive = k;
        if target < acc {
            return k;
        }
    }
    // rounding put the target past the final partial sum
    last_positive
}

/// Runs weight-tracking removals until `|S| = target`, appending removed
/// rows to `order`.
fn reg_vol_removals<R: Rng + ?Sized>(
    state: &mut DowndateState<'_>,
    target: usize,
    rng: &mut R,
    order: &mut Vec<usize>,
) -> Result<()> {
    let mut weights = Vec::with_capacity(state.len());
    while state.len() > target {
        let u: f64 = rng.random();
        let pos = if state.is_zero_volume() {
            ((u * state.len() as f64) as usize).min(state.len() - 1)
        } else {
            weights.clear();
            let h = state.h.as_ref().expect("RegVol tracks weights");
            weights.extend(state.active.iter().map(|&i| snap_weight(h[i])));
            let total: f64 = weights.iter().sum();
            if total <= ZERO_FRONTIER_TOL {
                // zero-volume frontier: uniform removal from here on
                state.mark_zero_volume();
                ((u * state.len() as f64) as usize).min(state.len() - 1)
            } else {
                invert_cumsum(&weights, total, u)
            }
        };
        let h_i = state.h.as_ref().map_or(0.0, |h| h[state.active[pos]]);
        order.push(state.remove_at(pos, h_i)?);
    }
    Ok(())
}

/// Reverse iterative (regularized) volume sampling with all weights
/// maintained by rank-one downdates. `O((n - s + d)·n·d)` time.
pub fn reg_vol_sample<R: Rng + ?Sized>(x: &Matrix, cfg: &SamplerConfig, rng: &mut R) -> Result<SubsetSample> {
    cfg.validate(x)?;
    let n = x.rows();
    let mut state = DowndateState::new(x, cfg.lambda, (0..n).collect(), true)?;
    let mut order = Vec::with_capacity(n - cfg.size);
    reg_vol_removals(&mut state, cfg.size, rng, &mut order)?;
    Ok(finish(state.active, order, cfg, Algorithm::RegVol, 0))
}

/// Rejection-sampling variant: while `|S| > max(s, 2d)`, propose a row
/// uniformly and accept it with probability `hᵢ` computed on demand; then
/// hand the remaining rows to the weight-tracking sampler. Same law as
/// [`reg_vol_sample`], `O(n d²)` expected time.
pub fn fast_reg_vol_sample<R: Rng + ?Sized>(
    x: &Matrix,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<SubsetSample> {
    cfg.validate(x)?;
    let (n, d) = (x.rows(), x.cols());
    let switch = cfg.size.max(2 * d);
    let mut order = Vec::with_capacity(n - cfg.size);
    let mut trials = 0u64;

    let mut active: Vec<usize> = (0..n).collect();
    if n > switch {
        let mut state = DowndateState::new(x, cfg.lambda, active, false)?;
        while state.len() > switch {
            let (pos, h) = loop {
                let pos = rng.random_range(0..state.len());
                trials += 1;
                let h = snap_weight(state.fresh_weight(state.active[pos]));
                let accept: f64 = rng.random();
                if accept < h {
                    break (pos, h);
                }
            };
            order.push(state.swap_remove_at(pos, h)?);
        }
        active = state.active;
        active.sort_unstable();
    }
    if active.len() > cfg.size {
        let mut state = DowndateState::new(x, cfg.lambda, active, true)?;
        reg_vol_removals(&mut state, cfg.size, rng, &mut order)?;
        active = state.active;
    }
    Ok(finish(active, order, cfg, Algorithm::FastRegVol, trials))
}

fn finish(
    mut active: Vec<usize>,
    order: Vec<usize>,
    cfg: &SamplerConfig,
    algorithm: Algorithm,
    trials: u64,
) -> SubsetSample {
    active.sort_unstable();
    SubsetSample {
        size: active.len(),
        indices: active,
        lambda: cfg.lambda,
        algorithm,
        seed: cfg.seed,
        rejection_trials: trials,
        removal_order: Some(order),
        multiset: false,
        importance_weights: None,
    }
}

/// Leverage-score sampling distribution `P(i) = lᵢ / Σ l`, with ridge
/// scores when `λ > 0`.
pub fn leverage_distribution(x: &Matrix, lambda: f64) -> Result<Vec<f64>> {
    let scores = linalg::leverage_scores(x, lambda)?;
    let total: f64 = scores.iter().sum();
    Ok(scores.iter().map(|l| l / total).collect())
}

/// `s` i.i.d. draws from the leverage-score distribution, with replacement.
/// The returned multiset carries importance weights `1/√(s·P(i))`.
pub fn leverage_iid_sample<R: Rng + ?Sized>(
    x: &Matrix,
    size: usize,
    lambda: f64,
    seed: u64,
    rng: &mut R,
) -> Result<SubsetSample> {
    let probs = leverage_distribution(x, lambda)?;
    let mut indices = Vec::with_capacity(size);
    if size > 0 {
        let dist = WeightedIndex::new(&probs)
            .map_err(|e| Error::InvalidConfig(format!("leverage distribution: {e}")))?;
        indices.extend((0..size).map(|_| dist.sample(rng)));
    }
    indices.sort_unstable();
    let weights = indices
        .iter()
        .map(|&i| 1.0 / (size as f64 * probs[i]).sqrt())
        .collect();
    Ok(SubsetSample {
        size,
        indices,
        lambda,
        algorithm: Algorithm::LeverageIid,
        seed,
        rejection_trials: 0,
        removal_order: None,
        multiset: true,
        importance_weights: Some(weights),
    })
}

/// Dispatches on `cfg.algorithm` with an explicit generator.
pub fn sample_with<R: Rng + ?Sized>(x: &Matrix, cfg: &SamplerConfig, rng: &mut R) -> Result<SubsetSample> {
    match cfg.algorithm {
        Algorithm::RegVol => reg_vol_sample(x, cfg, rng),
        Algorithm::FastRegVol => fast_reg_vol_sample(x, cfg, rng),
        Algorithm::LeverageIid => {
            cfg.validate(x)?;
            leverage_iid_sample(x, cfg.size, cfg.lambda, cfg.seed, rng)
        }
    }
}

/// Dispatches on `cfg.algorithm`, seeding the generator from `cfg.seed`.
pub fn sample(x: &Matrix, cfg: &SamplerConfig) -> Result<SubsetSample> {
    sample_with(x, cfg, &mut rng_from_seed(cfg.seed))
}

/// `P(i ∈ S)` under size-`s` volume sampling:
/// `(s - d)/(n - d) + (n - s)/(n - d) · lᵢ`, and 1 when `s = n`.
pub fn marginal_probability(x: &Matrix, size: usize, i: usize) -> Result<f64> {
    Ok(marginal_probabilities(x, size)?[i])
}

pub fn marginal_probabilities(x: &Matrix, size: usize) -> Result<Vec<f64>> {
    let (n, d) = (x.rows(), x.cols());
    if size < d || size > n {
        return Err(Error::InvalidConfig(format!(
            "marginals need d <= s <= n, got s = {size}, d = {d}, n = {n}"
        )));
    }
    let lev = linalg::leverage_scores(x, 0.0)?;
    if size == n {
        return Ok(vec![1.0; n]);
    }
    let (a, b) = ((size - d) as f64 / (n - d) as f64, (n - size) as f64 / (n - d) as f64);
    Ok(lev.iter().map(|l| a + b * l).collect())
}
