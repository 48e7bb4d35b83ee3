//! Seeded Monte Carlo evaluation of stopping policies.
//!
//! Paths are generated in fixed-size chunks. Chunk `c` draws from its own
//! ChaCha8 stream seeded by a hash of `(seed, c)`, and chunk results are
//! combined in chunk order, so output never depends on the worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::SymmetricDistribution;
use crate::relranks::{PermutationTable, PqMethod, PqParams};
use crate::walk::{exact_sum_sign, order_keys, StoppingPolicy};
use crate::{Error, Result};

/// Retries allowed for a single path whose positions tie.
const MAX_TIE_RETRIES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: u64,
    pub horizon: usize,
    pub seed: u64,
    pub chunk_size: u64,
    /// Worker threads; 0 uses the global rayon pool.
    pub workers: usize,
}

impl SimConfig {
    pub fn new(n_paths: u64, horizon: usize, seed: u64) -> Self {
        Self { n_paths, horizon, seed, chunk_size: 16_384, workers: 0 }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_chunk_size(mut self, chunk_size: u64) -> Self {
        self.chunk_size = chunk_size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidConfig("n_paths must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.chunk_size == 0 {
            return Err(Error::InvalidConfig("chunk_size must be at least 1".into()));
        }
        Ok(())
    }

    fn chunks(&self) -> u64 {
        self.n_paths.div_ceil(self.chunk_size)
    }

    fn chunk_len(&self, c: u64) -> u64 {
        (self.n_paths - c * self.chunk_size).min(self.chunk_size)
    }
}

/// `splitmix64` finalizer applied to the seed offset by the chunk index.
pub fn chunk_seed(seed: u64, chunk: u64) -> u64 {
    let mut z = seed.wrapping_add(chunk.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws one tie-free path into `steps` and its order keys into `keys`,
/// returning how many tied draws were discarded.
fn draw_path(
    dist: &SymmetricDistribution,
    rng: &mut ChaCha8Rng,
    steps: &mut [f64],
    keys: &mut [f64],
) -> Result<u64> {
    for retry in 0..MAX_TIE_RETRIES {
        for x in steps.iter_mut() {
            *x = dist.sample(rng);
        }
        if order_keys(steps, keys).is_ok() {
            return Ok(retry as u64);
        }
    }
    Err(Error::InvalidConfig(format!(
        "{MAX_TIE_RETRIES} consecutive tied paths; the step law is not continuous"
    )))
}

/// Maps every path through `visit(acc, steps, keys)` and combines chunk
/// accumulators in chunk order with `merge`. `keys[k]` counts the positions
/// strictly below `S_k` in exact arithmetic, so comparing keys compares the
/// positions. Returns the result and the number of resampled ties.
pub fn fold_paths<A, I, V, M>(
    dist: &SymmetricDistribution,
    cfg: &SimConfig,
    identity: I,
    visit: V,
    merge: M,
) -> Result<(A, u64)>
where
    A: Send,
    I: Fn() -> A + Sync,
    V: Fn(&mut A, &[f64], &[f64]) -> Result<()> + Sync,
    M: Fn(A, A) -> A,
{
    cfg.validate()?;
    let run_chunk = |c: u64| -> Result<(A, u64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(chunk_seed(cfg.seed, c));
        let mut steps = vec![0.0; cfg.horizon];
        let mut keys = vec![0.0; cfg.horizon + 1];
        let mut acc = identity();
        let mut ties = 0;
        for _ in 0..cfg.chunk_len(c) {
            ties += draw_path(dist, &mut rng, &mut steps, &mut keys)?;
            visit(&mut acc, &steps, &keys)?;
        }
        Ok((acc, ties))
    };
    let run_all = || (0..cfg.chunks()).into_par_iter().map(run_chunk).collect::<Vec<_>>();
    let parts = if cfg.workers == 0 {
        run_all()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(run_all)
    };
    let mut out: Option<A> = None;
    let mut ties = 0;
    for part in parts {
        let (acc, t) = part?;
        ties += t;
        out = Some(match out {
            None => acc,
            Some(prev) => merge(prev, acc),
        });
    }
    Ok((out.expect("at least one chunk"), ties))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub mean_rank: f64,
    pub std_error: f64,
    pub n_paths: u64,
    /// Paths stopped at each time `0..=n`.
    pub stop_time_histogram: Vec<u64>,
    pub ties_resampled: u64,
}

impl SimResult {
    pub fn z_score(&self, analytic: f64) -> f64 {
        (self.mean_rank - analytic) / self.std_error
    }

    pub fn within(&self, analytic: f64, sigmas: f64) -> bool {
        (self.mean_rank - analytic).abs() <= sigmas * self.std_error
    }

    /// Fraction of paths stopped at time `k` and its standard error.
    pub fn stop_fraction(&self, k: usize) -> (f64, f64) {
        let n = self.n_paths as f64;
        let f = self.stop_time_histogram.get(k).copied().unwrap_or(0) as f64 / n;
        (f, (f * (1.0 - f) / n).sqrt())
    }
}

/// Integer totals of one chunk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPartial {
    pub paths: u64,
    pub rank_sum: u64,
    pub rank_sq_sum: u64,
    pub histogram: Vec<u64>,
}

impl ChunkPartial {
    fn empty(horizon: usize) -> Self {
        Self { paths: 0, rank_sum: 0, rank_sq_sum: 0, histogram: vec![0; horizon + 1] }
    }
}

/// Sample mean of `R_tau` with its standard error.
pub fn estimate_expected_rank(
    dist: &SymmetricDistribution,
    policy: &StoppingPolicy,
    cfg: &SimConfig,
) -> Result<SimResult> {
    Ok(estimate_expected_rank_detailed(dist, policy, cfg)?.0)
}

/// [`estimate_expected_rank`] plus the per-chunk partials, for audits.
pub fn estimate_expected_rank_detailed(
    dist: &SymmetricDistribution,
    policy: &StoppingPolicy,
    cfg: &SimConfig,
) -> Result<(SimResult, Vec<ChunkPartial>)> {
    if let Some(h) = policy.horizon() {
        if h != cfg.horizon {
            return Err(Error::InvalidConfig(format!(
                "policy is defined for horizon {h}, simulation uses {}",
                cfg.horizon
            )));
        }
    }
    let (chunks, ties) = fold_paths(
        dist,
        cfg,
        || vec![ChunkPartial::empty(cfg.horizon)],
        |acc, steps, keys| {
            let mut scratch = Vec::with_capacity(steps.len() + 1);
            let (tau, rank) = policy.stop_on(steps, keys, &mut scratch)?;
            let part = &mut acc[0];
            part.paths += 1;
            part.rank_sum += rank as u64;
            part.rank_sq_sum += (rank * rank) as u64;
            part.histogram[tau] += 1;
            Ok(())
        },
        |mut a, b| {
            a.extend(b);
            a
        },
    )?;
    let mut total = ChunkPartial::empty(cfg.horizon);
    for c in &chunks {
        total.paths += c.paths;
        total.rank_sum += c.rank_sum;
        total.rank_sq_sum += c.rank_sq_sum;
        for (t, h) in total.histogram.iter_mut().zip(&c.histogram) {
            *t += h;
        }
    }
    let n = total.paths as f64;
    let mean = total.rank_sum as f64 / n;
    let var = if total.paths > 1 {
        ((total.rank_sq_sum as f64 - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let result = SimResult {
        mean_rank: mean,
        std_error: (var / n).sqrt(),
        n_paths: total.paths,
        stop_time_histogram: total.histogram,
        ties_resampled: ties,
    };
    Ok((result, chunks))
}

/// CSV of per-chunk partials.
pub fn chunk_partials_csv(chunks: &[ChunkPartial]) -> String {
    let mut out = String::from("chunk,paths,rank_sum,rank_sq_sum,histogram\n");
    for (i, c) in chunks.iter().enumerate() {
        let h: Vec<String> = c.histogram.iter().map(u64::to_string).collect();
        out.push_str(&format!("{i},{},{},{},{}\n", c.paths, c.rank_sum, c.rank_sq_sum, h.join(";")));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingComparison {
    pub ordering: String,
    pub count: u64,
    pub frequency: f64,
    pub expected: f64,
    pub z_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingFrequencies {
    pub n_paths: u64,
    pub ties_resampled: u64,
    /// In the order of [`PermutationTable::entries`].
    pub orderings: Vec<OrderingComparison>,
}

impl OrderingFrequencies {
    pub fn max_abs_z(&self) -> f64 {
        self.orderings.iter().map(|o| o.z_score.abs()).fold(0.0, f64::max)
    }

    /// Largest standardized difference between an ordering and its reflection.
    pub fn max_reflection_z(&self, table: &PermutationTable) -> f64 {
        let n = self.n_paths as f64;
        let mut worst: f64 = 0.0;
        for (i, e) in table.entries().iter().enumerate() {
            let mut rev = e.ordering;
            rev.reverse();
            let j = table.index_of(&rev).expect("reflection present");
            let (a, b) = (self.orderings[i].count as f64, self.orderings[j].count as f64);
            if a + b > 0.0 {
                // the difference of two multinomial cells has variance n(pa + pb) - n(pa-pb)^2
                let var = (a + b) - (a - b) * (a - b) / n;
                worst = worst.max((a - b).abs() / var.max(1.0).sqrt());
            }
        }
        worst
    }
}

/// Empirical frequencies of the 24 orderings of `S_0..S_3`, compared with
/// `table`.
pub fn empirical_permutation_frequencies(
    dist: &SymmetricDistribution,
    table: &PermutationTable,
    cfg: &SimConfig,
) -> Result<OrderingFrequencies> {
    if cfg.horizon != 3 {
        return Err(Error::InvalidConfig("ordering frequencies need horizon 3".into()));
    }
    let entries = table.entries();
    let (counts, ties) = fold_paths(
        dist,
        cfg,
        || vec![0u64; 24],
        |acc, _steps, keys| {
            let mut order = [0usize, 1, 2, 3];
            order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]));
            let i = entries.iter().position(|e| e.ordering == order).expect("all 24 listed");
            acc[i] += 1;
            Ok(())
        },
        |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
            a
        },
    )?;
    let n = cfg.n_paths as f64;
    let orderings = entries
        .iter()
        .zip(&counts)
        .map(|(e, &count)| {
            let expected = table.probability(e);
            let sd = (n * expected * (1.0 - expected)).sqrt();
            let z = if sd > 0.0 {
                (count as f64 - n * expected) / sd
            } else if count == 0 {
                0.0
            } else {
                f64::INFINITY
            };
            OrderingComparison {
                ordering: e.label(),
                count,
                frequency: count as f64 / n,
                expected,
                z_score: z,
            }
        })
        .collect();
    Ok(OrderingFrequencies { n_paths: cfg.n_paths, ties_resampled: ties, orderings })
}

/// Monte Carlo estimate of `p = P(0 < X_1 < X_2 < X_3 < X_1 + X_2)`, with a
/// four-standard-error bound.
pub fn estimate_pq_monte_carlo(dist: &SymmetricDistribution, cfg: &SimConfig) -> Result<PqParams> {
    let cfg = SimConfig { horizon: 3, ..*cfg };
    let (hits, _) = fold_paths(
        dist,
        &cfg,
        || 0u64,
        |acc, x, _| {
            let triangle = exact_sum_sign(&[x[0], x[1], -x[2]]) == std::cmp::Ordering::Greater;
            if 0.0 < x[0] && x[0] < x[1] && x[1] < x[2] && triangle {
                *acc += 1;
            }
            Ok(())
        },
        |a, b| a + b,
    )?;
    let n = cfg.n_paths as f64;
    let p = hits as f64 / n;
    let se = (p * (1.0 - p) / n).sqrt();
    PqParams::new(p, crate::relranks::PQ_TOTAL - p, PqMethod::MonteCarlo, 4.0 * se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::{StopAt, TwoStepRule};

    #[test]
    fn chunk_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|c| chunk_seed(42, c)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(chunk_seed(1, 0), chunk_seed(2, 0));
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(0, 3, 1).validate().is_err());
        assert!(SimConfig::new(10, 0, 1).validate().is_err());
        assert!(SimConfig::new(10, 3, 1).with_chunk_size(0).validate().is_err());
    }

    #[test]
    fn histogram_and_ranges() {
        let d = SymmetricDistribution::uniform(1.0).unwrap();
        let cfg = SimConfig::new(20_000, 2, 5).with_chunk_size(3000);
        let r = estimate_expected_rank(&d, &StoppingPolicy::ranks(TwoStepRule), &cfg).unwrap();
        assert_eq!(r.stop_time_histogram.iter().sum::<u64>(), 20_000);
        assert_eq!(r.stop_time_histogram[0], 0);
        assert!(r.mean_rank >= 1.0 && r.mean_rank <= 3.0);
        assert!(r.within(1.875, 4.0));
    }

    #[test]
    fn horizon_mismatch_is_rejected() {
        let d = SymmetricDistribution::uniform(1.0).unwrap();
        let cfg = SimConfig::new(10, 3, 5);
        assert!(estimate_expected_rank(&d, &StoppingPolicy::ranks(TwoStepRule), &cfg).is_err());
    }

    #[test]
    fn reproducible() {
        let d = SymmetricDistribution::laplace(1.0).unwrap();
        let cfg = SimConfig::new(10_000, 3, 9).with_chunk_size(777);
        let p = StoppingPolicy::ranks(StopAt(3));
        let a = estimate_expected_rank_detailed(&d, &p, &cfg).unwrap();
        let b = estimate_expected_rank_detailed(&d, &p, &cfg.with_workers(3)).unwrap();
        assert_eq!(a, b);
        assert!(chunk_partials_csv(&a.1).lines().count() == a.1.len() + 1);
    }

    #[test]
    fn pq_monte_carlo_laplace() {
        let d = SymmetricDistribution::laplace(1.0).unwrap();
        let est = estimate_pq_monte_carlo(&d, &SimConfig::new(400_000, 3, 3)).unwrap();
        assert!((est.p - 1.0 / 192.0).abs() <= est.error_bound);
    }
}
