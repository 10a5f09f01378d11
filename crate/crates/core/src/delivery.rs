//! Structured clique cover delivery: per-demand simulation, decodability
//! checking, and empirical rate estimation.
//!
//! For a demand vector d the server walks every nonempty cache subset S and
//! broadcasts one coded message combining, for each k in S, the subfile of
//! d_k stored exactly at S minus k. The message is zero-padded to its largest
//! component, so its cost is the maximum of those subfile sizes. Message
//! payloads are never materialized here; lengths and coverage accounting are
//! the whole simulation, and decodability is checked structurally: cache k
//! recovers its request when delivered subfiles plus its local cache mass
//! total one file.
//!
//! Two estimators validate the analytic rate formula: an exhaustive sweep
//! over all N^K demand vectors and a seeded Monte Carlo sampler for scales
//! where enumeration is infeasible.

use crate::error::{Error, Result};
use crate::demand::PopularityDistribution;
use crate::placement::{expand_subfiles, PlacementMatrix, SubfilePlacement};
use crate::scalar::{pairwise_sum, real, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Exhaustive demand enumeration cap.
const MAX_DEMAND_SWEEP: u64 = 1_000_000;

/// Trials per RNG stream. Every block draws from its own counter stream, so
/// the estimate depends only on the seed and trial count, not on how blocks
/// might be scheduled across workers.
const TRIAL_BLOCK: u64 = 4096;

/// One demand vector: entry k is the file requested by cache k+1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DemandVector {
    d: Vec<usize>,
}

impl DemandVector {
    /// Validates entries against the library size.
    pub fn new(d: Vec<usize>, n_files: usize) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::invalid("demand vector must cover at least one cache"));
        }
        for (i, &f) in d.iter().enumerate() {
            if f == 0 || f > n_files {
                return Err(Error::invalid(format!(
                    "cache {} requests file {f}, library holds 1..={n_files}",
                    i + 1
                )));
            }
        }
        Ok(Self { d })
    }

    pub fn k(&self) -> usize {
        self.d.len()
    }

    /// Requested files, 1-based, indexed by cache position.
    pub fn files(&self) -> &[usize] {
        &self.d
    }
}

/// One broadcast message: the cache subset it serves (bitmask, bit k-1 for
/// cache k) and its length in file units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Message<T> {
    pub subset: u32,
    pub length: T,
}

/// Full record of one delivery: every message, the total broadcast rate, and
/// how much of its request each cache can reconstruct.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Serialize"))]
pub struct DeliveryTrace<T> {
    pub messages: Vec<Message<T>>,
    pub total_rate: T,
    /// Entry k-1: fraction of cache k's requested file available to it.
    pub per_cache_recovered: Vec<T>,
}

impl<T: Real> DeliveryTrace<T> {
    /// Rebuilds the accounting for an arbitrary message list.
    ///
    /// Recovery is credited strictly from the messages given plus local cache
    /// contents, so removing a message from a genuine trace shows up as a
    /// decoding gap. This is the only constructor; the simulator itself goes
    /// through it.
    pub fn from_messages(
        d: &DemandVector,
        sub: &SubfilePlacement<T>,
        messages: Vec<Message<T>>,
    ) -> Result<Self> {
        let k = check_demand(d, sub)?;
        let lengths: Vec<T> = messages.iter().map(|m| m.length).collect();
        let total_rate = pairwise_sum(&lengths);
        let mut per_cache_recovered = Vec::with_capacity(k);
        let mut parts: Vec<T> = Vec::new();
        for cache in 0..k {
            let bit = 1u32 << cache;
            let file = d.files()[cache];
            parts.clear();
            // Local cache: every subset containing this cache stores its
            // piece of the requested file locally.
            for mask in 0u32..(1u32 << k) {
                if mask & bit != 0 {
                    parts.push(sub.fraction(file, mask));
                }
            }
            // Broadcasts: a message for S containing the cache carries the
            // subfile stored at S minus the cache itself.
            for msg in &messages {
                if msg.subset & bit != 0 {
                    parts.push(sub.fraction(file, msg.subset & !bit));
                }
            }
            per_cache_recovered.push(pairwise_sum(&parts));
        }
        Ok(Self { messages, total_rate, per_cache_recovered })
    }
}

fn check_demand<T: Real>(d: &DemandVector, sub: &SubfilePlacement<T>) -> Result<usize> {
    let k = sub.k();
    if d.k() != k {
        return Err(Error::invalid(format!(
            "demand covers {} caches, placement has {k}",
            d.k()
        )));
    }
    if let Some(&f) = d.files().iter().find(|&&f| f > sub.n_files()) {
        return Err(Error::invalid(format!(
            "demand requests file {f}, placement has {} files",
            sub.n_files()
        )));
    }
    Ok(k)
}

/// Runs structured clique cover delivery for one demand vector.
///
/// Every nonempty cache subset gets exactly one message whose length is the
/// largest subfile it must carry; zero-length messages are recorded too, so
/// the trace always holds 2^K - 1 entries in mask order.
pub fn scc_deliver<T: Real>(
    d: &DemandVector,
    sub: &SubfilePlacement<T>,
) -> Result<DeliveryTrace<T>> {
    let k = check_demand(d, sub)?;
    let mut messages = Vec::with_capacity((1usize << k) - 1);
    for subset in 1u32..(1u32 << k) {
        let mut length = T::zero();
        let mut bits = subset;
        while bits != 0 {
            let cache = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let piece = sub.fraction(d.files()[cache], subset & !(1u32 << cache));
            if piece > length {
                length = piece;
            }
        }
        messages.push(Message { subset, length });
    }
    DeliveryTrace::from_messages(d, sub, messages)
}

/// True when every cache can reconstruct its whole request.
pub fn verify_decodability<T: Real>(trace: &DeliveryTrace<T>) -> bool {
    let tol = T::tol(1e-12);
    trace
        .per_cache_recovered
        .iter()
        .all(|&rec| (rec - T::one()).abs() <= tol)
}

/// Delivery rate for one demand without materializing the trace. Equals
/// `scc_deliver(d, sub).total_rate` by construction of the message lengths.
fn demand_rate<T: Real>(sub: &SubfilePlacement<T>, files: &[usize]) -> T {
    let k = files.len();
    let mut total = T::zero();
    for subset in 1u32..(1u32 << k) {
        let level = subset.count_ones() as usize - 1;
        let mut length = T::zero();
        let mut bits = subset;
        while bits != 0 {
            let cache = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let piece = sub.level_fraction(files[cache], level);
            if piece > length {
                length = piece;
            }
        }
        total = total + length;
    }
    total
}

/// Expected rate by exhaustive enumeration of all N^K demand vectors,
/// weighted by their probability. Independent of the group-probability
/// machinery; the two must agree, and tests hold them to that.
pub fn exhaustive_expected_rate<T: Real>(
    y: &PlacementMatrix<T>,
    dist: &PopularityDistribution<T>,
) -> Result<T> {
    let n = y.n_files();
    if dist.n_files() != n {
        return Err(Error::invalid(format!(
            "distribution has {} files, placement has {n}",
            dist.n_files()
        )));
    }
    let k = y.k();
    let sweep = (n as u64)
        .checked_pow(k as u32)
        .filter(|&c| c <= MAX_DEMAND_SWEEP)
        .ok_or_else(|| {
            Error::resource(format!(
                "exhaustive sweep needs {n}^{k} demand vectors, cap is {MAX_DEMAND_SWEEP}"
            ))
        })?;
    let _ = sweep;
    let sub = expand_subfiles(y)?;

    // Kahan accumulation: the sweep can run to a million ordered additions.
    let mut acc = T::zero();
    let mut comp = T::zero();
    let mut files = vec![1usize; k];
    loop {
        let mut weight = T::one();
        for &f in &files {
            weight = weight * dist.prob(f);
        }
        let term = weight * demand_rate(&sub, &files) - comp;
        let next = acc + term;
        comp = (next - acc) - term;
        acc = next;

        // Odometer step over 1..=N per position.
        let mut pos = 0;
        while pos < k {
            files[pos] += 1;
            if files[pos] <= n {
                break;
            }
            files[pos] = 1;
            pos += 1;
        }
        if pos == k {
            break;
        }
    }
    Ok(acc)
}

/// Seeded Monte Carlo estimate of the expected delivery rate.
///
/// Returns the sample mean and its standard error. Demands are drawn by
/// inverse CDF from dedicated counter-based RNG streams, one per fixed-size
/// trial block, so results are reproducible for a given seed regardless of
/// how the blocks are executed. A single trial has no variance estimate; its
/// standard error is reported as zero.
pub fn monte_carlo_rate<T: Real>(
    y: &PlacementMatrix<T>,
    dist: &PopularityDistribution<T>,
    trials: u64,
    seed: u64,
) -> Result<(T, T)> {
    if trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    if dist.n_files() != y.n_files() {
        return Err(Error::invalid(format!(
            "distribution has {} files, placement has {}",
            dist.n_files(),
            y.n_files()
        )));
    }
    let sub = expand_subfiles(y)?;
    let k = y.k();

    // Sampling and accumulation run in f64 regardless of the working scalar;
    // the estimate converts at the end.
    let levels: Vec<Vec<f64>> = (1..=y.n_files())
        .map(|n| {
            (0..=k)
                .map(|s| sub.level_fraction(n, s).to_f64().expect("finite fraction"))
                .collect()
        })
        .collect();
    let mut cdf: Vec<f64> = Vec::with_capacity(dist.n_files());
    let mut run = 0.0f64;
    for &p in dist.probs() {
        run += p.to_f64().expect("finite probability");
        cdf.push(run);
    }
    *cdf.last_mut().expect("nonempty") = 1.0;

    let blocks = trials.div_ceil(TRIAL_BLOCK);
    let mut block_sums = Vec::with_capacity(blocks as usize);
    let mut block_sqsums = Vec::with_capacity(blocks as usize);
    let mut files = vec![1usize; k];
    for block in 0..blocks {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(block);
        let in_block = TRIAL_BLOCK.min(trials - block * TRIAL_BLOCK);
        let mut sum = 0.0f64;
        let mut sqsum = 0.0f64;
        for _ in 0..in_block {
            for slot in files.iter_mut() {
                let u: f64 = rng.random();
                *slot = cdf.partition_point(|&c| c <= u) + 1;
            }
            let mut rate = 0.0f64;
            for subset in 1u32..(1u32 << k) {
                let level = subset.count_ones() as usize - 1;
                let mut length = 0.0f64;
                let mut bits = subset;
                while bits != 0 {
                    let cache = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    length = length.max(levels[files[cache] - 1][level]);
                }
                rate += length;
            }
            sum += rate;
            sqsum += rate * rate;
        }
        block_sums.push(sum);
        block_sqsums.push(sqsum);
    }

    let total = pairwise_sum(&block_sums);
    let total_sq = pairwise_sum(&block_sqsums);
    let n = trials as f64;
    let mean = total / n;
    let stderr = if trials == 1 {
        0.0
    } else {
        let var = ((total_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    };
    Ok((real(mean), real(stderr)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::make_zipf;
    use crate::placement::{canonical_to_matrix, expected_rate_exact, CanonicalPlacement};

    fn subfiles(c: CanonicalPlacement, k: usize, n: usize) -> SubfilePlacement<f64> {
        expand_subfiles(&canonical_to_matrix::<f64>(c, k, n).unwrap()).unwrap()
    }

    #[test]
    fn single_coded_message_serves_a_shared_file() {
        let sub = subfiles(CanonicalPlacement::new(1, 1), 2, 1);
        let d = DemandVector::new(vec![1, 1], 1).unwrap();
        let trace = scc_deliver(&d, &sub).unwrap();
        assert_eq!(trace.messages.len(), 3);
        let positive: Vec<_> = trace.messages.iter().filter(|m| m.length > 0.0).collect();
        assert_eq!(positive.len(), 1);
        assert_eq!(positive[0].subset, 0b11);
        assert_eq!(positive[0].length, 0.5);
        assert_eq!(trace.total_rate, 0.5);
        assert!(verify_decodability(&trace));
    }

    #[test]
    fn full_caching_needs_no_broadcast() {
        let sub = subfiles(CanonicalPlacement::new(3, 1), 3, 2);
        let d = DemandVector::new(vec![2, 1, 2], 2).unwrap();
        let trace = scc_deliver(&d, &sub).unwrap();
        assert_eq!(trace.total_rate, 0.0);
        assert!(trace.messages.iter().all(|m| m.length == 0.0));
        assert!(verify_decodability(&trace));
    }

    #[test]
    fn empty_cache_devolves_to_unicast() {
        let sub = subfiles(CanonicalPlacement::uncached(2), 3, 2);
        let d = DemandVector::new(vec![1, 2, 2], 2).unwrap();
        let trace = scc_deliver(&d, &sub).unwrap();
        assert_eq!(trace.total_rate, 3.0);
        for m in &trace.messages {
            let expect = if m.subset.count_ones() == 1 { 1.0 } else { 0.0 };
            assert_eq!(m.length, expect, "mask {:#b}", m.subset);
        }
        assert!(verify_decodability(&trace));
    }

    #[test]
    fn dropping_a_message_breaks_decodability() {
        let sub = subfiles(CanonicalPlacement::new(1, 1), 3, 2);
        let d = DemandVector::new(vec![1, 2, 1], 2).unwrap();
        let full = scc_deliver(&d, &sub).unwrap();
        assert!(verify_decodability(&full));
        let mut msgs = full.messages.clone();
        let victim = msgs
            .iter()
            .position(|m| m.length > 0.0)
            .expect("some message is nonempty");
        msgs.remove(victim);
        let broken = DeliveryTrace::from_messages(&d, &sub, msgs).unwrap();
        assert!(!verify_decodability(&broken));
    }

    #[test]
    fn demand_validation() {
        assert!(DemandVector::new(vec![], 3).is_err());
        assert!(DemandVector::new(vec![0], 3).is_err());
        assert!(DemandVector::new(vec![4], 3).is_err());
        let sub = subfiles(CanonicalPlacement::new(1, 1), 2, 3);
        let d = DemandVector::new(vec![1, 2, 3], 3).unwrap();
        assert!(scc_deliver(&d, &sub).is_err());
    }

    #[test]
    fn shared_level_one_pair_rate_is_half() {
        // Both files fully cached at level 1 over two caches: every demand
        // is served by one half-file coded message.
        let d = make_zipf::<f64>(2, 0.0).unwrap();
        let y = canonical_to_matrix::<f64>(CanonicalPlacement::new(1, 1), 2, 2).unwrap();
        let exhaustive = exhaustive_expected_rate(&y, &d).unwrap();
        let analytic = expected_rate_exact(&y, &d).unwrap();
        assert!((exhaustive - 0.5).abs() < 1e-15, "{exhaustive}");
        assert!((exhaustive - analytic).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_matches_analytic_on_small_cases() {
        let d = make_zipf::<f64>(3, 1.1).unwrap();
        for c in [
            CanonicalPlacement::new(1, 2),
            CanonicalPlacement::new(2, 1),
            CanonicalPlacement::new(3, 3),
            CanonicalPlacement::uncached(3),
        ] {
            let y = canonical_to_matrix::<f64>(c, 3, 3).unwrap();
            let ex = exhaustive_expected_rate(&y, &d).unwrap();
            let an = expected_rate_exact(&y, &d).unwrap();
            assert!((ex - an).abs() < 1e-12, "{c:?}: {ex} vs {an}");
        }
    }

    #[test]
    fn exhaustive_guard_rejects_large_sweeps() {
        let d = make_zipf::<f64>(10, 0.0).unwrap();
        let y = canonical_to_matrix::<f64>(CanonicalPlacement::new(1, 1), 7, 10).unwrap();
        assert!(matches!(
            exhaustive_expected_rate(&y, &d),
            Err(Error::ResourceLimit(_))
        ));
    }

    #[test]
    fn monte_carlo_is_reproducible_and_seed_sensitive() {
        let d = make_zipf::<f64>(4, 1.0).unwrap();
        let y = canonical_to_matrix::<f64>(CanonicalPlacement::new(2, 2), 4, 4).unwrap();
        let a = monte_carlo_rate(&y, &d, 10_000, 7).unwrap();
        let b = monte_carlo_rate(&y, &d, 10_000, 7).unwrap();
        let c = monte_carlo_rate(&y, &d, 10_000, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn monte_carlo_covers_the_exact_rate() {
        let d = make_zipf::<f64>(4, 1.0).unwrap();
        let y = canonical_to_matrix::<f64>(CanonicalPlacement::new(2, 2), 4, 4).unwrap();
        let exact = expected_rate_exact(&y, &d).unwrap();
        let (est, se) = monte_carlo_rate(&y, &d, 40_000, 1).unwrap();
        assert!(se > 0.0);
        assert!((est - exact).abs() <= 5.0 * se, "{est} vs {exact}, se {se}");
    }

    #[test]
    fn monte_carlo_degenerate_cases() {
        let d = make_zipf::<f64>(1, 0.0).unwrap();
        let y = canonical_to_matrix::<f64>(CanonicalPlacement::new(1, 1), 2, 1).unwrap();
        let (est, se) = monte_carlo_rate(&y, &d, 500, 3).unwrap();
        assert_eq!(est, 0.5);
        assert_eq!(se, 0.0);

        let (one, se_one) = monte_carlo_rate(&y, &d, 1, 3).unwrap();
        assert_eq!(one, 0.5);
        assert_eq!(se_one, 0.0);

        assert!(monte_carlo_rate(&y, &d, 0, 3).is_err());
    }

    #[test]
    fn trace_serializes_with_bitmask_subsets() {
        let sub = subfiles(CanonicalPlacement::new(1, 1), 2, 1);
        let d = DemandVector::new(vec![1, 1], 1).unwrap();
        let trace = scc_deliver(&d, &sub).unwrap();
        let js = serde_json::to_value(&trace).unwrap();
        assert_eq!(js["messages"][2]["subset"], 3);
        assert_eq!(js["messages"][2]["length"], 0.5);
        assert_eq!(js["total_rate"], 0.5);
    }
}
