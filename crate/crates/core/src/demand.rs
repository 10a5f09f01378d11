//! File popularity model and demand-group probabilities.
//!
//! A library of N files is requested by K caches, each request drawn i.i.d.
//! from a common popularity distribution. Rate formulas never need the full
//! demand vector, only the set g of distinct files requested by a subset of
//! caches, together with the probability pi_s^g that s requests realize
//! exactly that set. This module owns both ingredients.
//!
//! Files are indexed 1..=N and kept sorted by ascending request probability.
//! All threshold structure downstream (canonical placements cache a suffix of
//! the file list) relies on that ordering, so constructors enforce it and
//! report the permutation they applied.

use crate::combin::for_each_combination;
use crate::error::{Error, Result};
use crate::scalar::{pairwise_sum, real, real_usize, Real};
use serde::{Deserialize, Serialize};

/// How far an input probability vector may deviate from total mass 1 and
/// still be accepted (then renormalized). Gross errors are rejected.
const INPUT_MASS_TOL: f64 = 1e-6;

/// Request probabilities of N files, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityDistribution<T> {
    probs: Vec<T>,
}

impl<T: Real> PopularityDistribution<T> {
    /// Builds a distribution from raw probabilities.
    ///
    /// The input is validated (nonnegative, finite, total mass within 1e-6 of
    /// one), renormalized to exact unit mass, and sorted ascending.
    pub fn new(probs: Vec<T>) -> Result<Self> {
        Self::with_permutation(probs).map(|(dist, _)| dist)
    }

    /// Like [`Self::new`], additionally reporting the applied sort.
    ///
    /// `perm[i]` is the position in the caller's input of the file now at
    /// sorted index i. Callers that label files externally need the mapping;
    /// everything inside this crate speaks sorted indices only.
    pub fn with_permutation(probs: Vec<T>) -> Result<(Self, Vec<usize>)> {
        if probs.is_empty() {
            return Err(Error::invalid("popularity distribution needs at least one file"));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !(p >= T::zero()) || !p.is_finite() {
                return Err(Error::invalid(format!(
                    "probability {i} is {p}, expected a finite nonnegative value"
                )));
            }
        }
        let mass = pairwise_sum(&probs);
        let dev = (mass - T::one()).abs();
        if dev > T::tol(INPUT_MASS_TOL) {
            return Err(Error::invalid(format!(
                "probabilities sum to {mass}, more than {INPUT_MASS_TOL} away from 1"
            )));
        }
        let mut order: Vec<usize> = (0..probs.len()).collect();
        order.sort_by(|&a, &b| probs[a].partial_cmp(&probs[b]).expect("finite probabilities"));
        let sorted: Vec<T> = order.iter().map(|&i| probs[i] / mass).collect();
        Ok((Self { probs: sorted }, order))
    }

    /// Normalizes arbitrary nonnegative weights into a distribution.
    ///
    /// Internal constructor for synthetically generated weights; skips the
    /// unit-mass gate but keeps the remaining validation.
    fn from_weights(weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("popularity distribution needs at least one file"));
        }
        let mass = pairwise_sum(&weights);
        if !(mass > T::zero()) || !mass.is_finite() {
            return Err(Error::invalid(format!("weights sum to {mass}, expected positive finite")));
        }
        let mut probs: Vec<T> = weights.into_iter().map(|w| w / mass).collect();
        probs.sort_by(|a, b| a.partial_cmp(b).expect("finite weights"));
        Ok(Self { probs })
    }

    /// Number of files N.
    pub fn n_files(&self) -> usize {
        self.probs.len()
    }

    /// Sorted probabilities, ascending; entry i is file i+1.
    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    /// Probability of file `n` (1-based).
    pub fn prob(&self, n: usize) -> T {
        self.probs[n - 1]
    }

    /// Total probability of files `lo..=N` (1-based); the mass a canonical
    /// placement with threshold `lo` keeps cached. `lo = N+1` yields 0.
    pub fn suffix_mass(&self, lo: usize) -> T {
        pairwise_sum(&self.probs[lo - 1..])
    }

    /// Total probability of files `1..lo` (1-based), the uncached complement.
    pub fn prefix_mass(&self, lo: usize) -> T {
        pairwise_sum(&self.probs[..lo - 1])
    }
}

/// Builds the Zipf(alpha) popularity model over `n` files: the rank-r file
/// has probability proportional to r^(-alpha). alpha = 0 is uniform.
pub fn make_zipf<T: Real>(n: usize, alpha: f64) -> Result<PopularityDistribution<T>> {
    if n == 0 {
        return Err(Error::invalid("zipf distribution needs at least one file"));
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::invalid(format!(
            "zipf exponent {alpha} must be finite and nonnegative"
        )));
    }
    let a = real::<T>(alpha);
    let weights: Vec<T> = (1..=n).map(|r| real_usize::<T>(r).powf(-a)).collect();
    PopularityDistribution::from_weights(weights)
}

/// A nonempty set of distinct file indices in 1..=N, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FileGroup {
    members: Vec<usize>,
}

impl FileGroup {
    /// Builds a group from distinct 1-based file indices.
    pub fn new(members: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut members: Vec<usize> = members.into_iter().collect();
        if members.is_empty() {
            return Err(Error::invalid("file group must be nonempty"));
        }
        members.sort_unstable();
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("file group members must be distinct"));
        }
        if members[0] == 0 {
            return Err(Error::invalid("file indices are 1-based"));
        }
        Ok(Self { members })
    }

    /// Sorted 1-based member indices.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn check_against<T: Real>(&self, dist: &PopularityDistribution<T>) -> Result<()> {
        let n = dist.n_files();
        if *self.members.last().expect("nonempty") > n {
            return Err(Error::invalid(format!(
                "file group references file {} but the distribution has {n} files",
                self.members.last().expect("nonempty")
            )));
        }
        Ok(())
    }
}

/// Total probability mass of a file set: P(A).
pub fn subset_mass<T: Real>(dist: &PopularityDistribution<T>, group: &FileGroup) -> Result<T> {
    group.check_against(dist)?;
    let masses: Vec<T> = group.members.iter().map(|&n| dist.prob(n)).collect();
    Ok(pairwise_sum(&masses))
}

/// Probability pi_s^g that `s` i.i.d. requests realize exactly the distinct
/// file set `g`.
///
/// Computed by inclusion-exclusion over subsets of g:
///   pi_s^g = sum over h subset of g of (-1)^(|g|-|h|) P(h)^s,
/// the standard coverage formula for "every member of g drawn, nothing else".
pub fn group_probability<T: Real>(
    dist: &PopularityDistribution<T>,
    s: usize,
    group: &FileGroup,
) -> Result<T> {
    group.check_against(dist)?;
    if s == 0 || group.len() > s {
        return Err(Error::invalid(format!(
            "group of {} distinct files cannot arise from {s} requests",
            group.len()
        )));
    }
    let probs: Vec<T> = group.members.iter().map(|&n| dist.prob(n)).collect();
    Ok(inclusion_exclusion(&probs, s as u32))
}

/// Inclusion-exclusion core shared with the rate evaluators: given the
/// individual probabilities of the members of g, returns pi_s^g.
pub(crate) fn inclusion_exclusion<T: Real>(member_probs: &[T], s: u32) -> T {
    let j = member_probs.len();
    debug_assert!(j <= 63, "guarded callers keep groups small");
    let mut acc = T::zero();
    // Nonempty submasks only: the empty set contributes 0^s = 0 for s >= 1.
    for mask in 1u64..(1u64 << j) {
        let mut p = T::zero();
        for (i, &q) in member_probs.iter().enumerate() {
            if mask >> i & 1 == 1 {
                p = p + q;
            }
        }
        let term = p.powi(s as i32);
        if (j as u32 - mask.count_ones()) % 2 == 0 {
            acc = acc + term;
        } else {
            acc = acc - term;
        }
    }
    acc
}

/// Declarative distribution description used by config files and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionSpec {
    /// Zipf popularity: {"zipf": {"n": N, "alpha": a}}.
    Zipf { n: usize, alpha: f64 },
    /// Explicit probabilities: {"probs": [..]} (any order; sorted on load).
    Probs(Vec<f64>),
}

impl DistributionSpec {
    /// Materializes the description into a distribution.
    pub fn build<T: Real>(&self) -> Result<PopularityDistribution<T>> {
        match self {
            DistributionSpec::Zipf { n, alpha } => make_zipf(*n, *alpha),
            DistributionSpec::Probs(ps) => {
                PopularityDistribution::new(ps.iter().map(|&p| real(p)).collect())
            }
        }
    }

    /// Number of files the description declares.
    pub fn n_files(&self) -> usize {
        match self {
            DistributionSpec::Zipf { n, .. } => *n,
            DistributionSpec::Probs(ps) => ps.len(),
        }
    }
}

/// Visits every demand group with 1..=j_max distinct files, passing the
/// sorted 1-based member indices. Enumeration order: by size, then
/// lexicographic. Callers guard the total count.
pub(crate) fn for_each_group(n: usize, j_max: usize, mut f: impl FnMut(&[usize])) {
    let mut scratch: Vec<usize> = Vec::with_capacity(j_max.min(n));
    for j in 1..=j_max.min(n) {
        for_each_combination(n, j, |zero_based| {
            scratch.clear();
            scratch.extend(zero_based.iter().map(|&i| i + 1));
            f(&scratch);
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(ps: &[f64]) -> PopularityDistribution<f64> {
        PopularityDistribution::new(ps.to_vec()).unwrap()
    }

    #[test]
    fn zipf_of_four_files_matches_hand_normalization() {
        let d = make_zipf::<f64>(4, 1.0).unwrap();
        let expect = [0.12, 0.16, 0.24, 0.48];
        for (p, e) in d.probs().iter().zip(expect) {
            assert!((p - e).abs() < 1e-12, "{p} vs {e}");
        }
    }

    #[test]
    fn zipf_zero_exponent_is_uniform() {
        let d = make_zipf::<f64>(3, 0.0).unwrap();
        for &p in d.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zipf_single_file_is_degenerate() {
        let d = make_zipf::<f64>(1, 2.0).unwrap();
        assert_eq!(d.probs(), &[1.0]);
    }

    #[test]
    fn zipf_rejects_bad_arguments() {
        assert!(make_zipf::<f64>(0, 1.0).is_err());
        assert!(make_zipf::<f64>(3, -0.5).is_err());
        assert!(make_zipf::<f64>(3, f64::NAN).is_err());
    }

    #[test]
    fn construction_sorts_and_reports_permutation() {
        let (d, perm) = PopularityDistribution::with_permutation(vec![0.5, 0.2, 0.3]).unwrap();
        assert_eq!(d.probs(), &[0.2, 0.3, 0.5]);
        assert_eq!(perm, vec![1, 2, 0]);
    }

    #[test]
    fn construction_renormalizes_small_deviations_only() {
        let d = PopularityDistribution::new(vec![0.5, 0.5000001]).unwrap();
        let total: f64 = d.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!(PopularityDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(PopularityDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(PopularityDistribution::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn subset_mass_sums_members() {
        let d = dist(&[0.12, 0.16, 0.24, 0.48]);
        let g = FileGroup::new([3, 4]).unwrap();
        assert!((subset_mass(&d, &g).unwrap() - 0.72).abs() < 1e-15);
        let all = FileGroup::new(1..=4).unwrap();
        assert!((subset_mass(&d, &all).unwrap() - 1.0).abs() < 1e-15);
        let u = dist(&[0.25; 4]);
        let one = FileGroup::new([1]).unwrap();
        assert_eq!(subset_mass(&u, &one).unwrap(), 0.25);
        let bad = FileGroup::new([5]).unwrap();
        assert!(subset_mass(&d, &bad).is_err());
    }

    #[test]
    fn group_probability_matches_hand_cases() {
        let d = dist(&[0.3, 0.7]);
        let both = FileGroup::new([1, 2]).unwrap();
        let only1 = FileGroup::new([1]).unwrap();
        assert!((group_probability(&d, 2, &both).unwrap() - 0.42).abs() < 1e-15);
        assert!((group_probability(&d, 2, &only1).unwrap() - 0.09).abs() < 1e-15);
        assert!(group_probability(&d, 1, &both).is_err());
    }

    #[test]
    fn group_probabilities_total_one() {
        let d = dist(&[0.1, 0.2, 0.3, 0.4]);
        for s in 1..=4usize {
            let mut total = 0.0;
            for_each_group(4, s, |g| {
                let grp = FileGroup::new(g.iter().copied()).unwrap();
                total += group_probability(&d, s, &grp).unwrap();
            });
            assert!((total - 1.0).abs() < 1e-9, "s={s} total={total}");
        }
    }

    #[test]
    fn group_probability_matches_exhaustive_enumeration() {
        // Independent oracle: walk all N^s demand vectors, bucket by the
        // realized distinct set, compare bucket mass with the formula.
        for (n, probs) in [(3usize, vec![0.2, 0.3, 0.5]), (4, vec![0.1, 0.2, 0.3, 0.4])] {
            let d = dist(&probs);
            for s in 1..=4usize {
                use std::collections::HashMap;
                let mut buckets: HashMap<Vec<usize>, f64> = HashMap::new();
                let mut demand = vec![1usize; s];
                loop {
                    let weight: f64 = demand.iter().map(|&f| d.prob(f)).product();
                    let mut set = demand.clone();
                    set.sort_unstable();
                    set.dedup();
                    *buckets.entry(set).or_insert(0.0) += weight;
                    let mut pos = 0;
                    loop {
                        if pos == s {
                            break;
                        }
                        demand[pos] += 1;
                        if demand[pos] <= n {
                            break;
                        }
                        demand[pos] = 1;
                        pos += 1;
                    }
                    if pos == s {
                        break;
                    }
                }
                for (set, mass) in buckets {
                    let grp = FileGroup::new(set).unwrap();
                    let pi = group_probability(&d, s, &grp).unwrap();
                    assert!((pi - mass).abs() < 1e-12, "n={n} s={s} {pi} vs {mass}");
                }
            }
        }
    }

    #[test]
    fn aggregate_identity_over_groups_touching_a_set() {
        // For any file set A: the probability that s+1 requests touch A is
        // 1 - (1 - P(A))^(s+1); summing pi over groups meeting A must agree.
        let d = dist(&[0.12, 0.16, 0.24, 0.48]);
        let a = FileGroup::new([2, 4]).unwrap();
        let pa = subset_mass(&d, &a).unwrap();
        for s1 in 1..=5usize {
            let mut total = 0.0;
            for_each_group(4, s1, |g| {
                if g.iter().any(|m| a.members().contains(m)) {
                    let grp = FileGroup::new(g.iter().copied()).unwrap();
                    total += group_probability(&d, s1, &grp).unwrap();
                }
            });
            let closed = 1.0 - (1.0 - pa).powi(s1 as i32);
            assert!((total - closed).abs() < 1e-9, "s={s1}: {total} vs {closed}");
        }
    }

    #[test]
    fn file_group_validation() {
        assert!(FileGroup::new([]).is_err());
        assert!(FileGroup::new([2, 2]).is_err());
        assert!(FileGroup::new([0]).is_err());
        let g = FileGroup::new([4, 1, 2]).unwrap();
        assert_eq!(g.members(), &[1, 2, 4]);
    }

    #[test]
    fn spec_round_trips_through_json() {
        let zipf = DistributionSpec::Zipf { n: 5, alpha: 1.0 };
        let js = serde_json::to_string(&zipf).unwrap();
        assert_eq!(js, r#"{"zipf":{"n":5,"alpha":1.0}}"#);
        let back: DistributionSpec = serde_json::from_str(&js).unwrap();
        assert_eq!(back, zipf);

        let probs = DistributionSpec::Probs(vec![0.5, 0.5]);
        let js = serde_json::to_string(&probs).unwrap();
        assert_eq!(js, r#"{"probs":[0.5,0.5]}"#);
        let back: DistributionSpec = serde_json::from_str(&js).unwrap();
        assert_eq!(back, probs);
    }
}
