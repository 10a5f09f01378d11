//! Base-case derivation: candidate enumeration, lower convex hull filtering,
//! and the storage-price staircase.
//!
//! For any popularity distribution there is a finite set of storage budgets,
//! the base cases, at which a single threshold placement is optimal; every
//! other budget is served by memory sharing between its two bracketing base
//! cases. The candidates are the KN+1 threshold placements (every level and
//! threshold combination plus the empty placement), and the base cases are
//! exactly the lower convex hull of their (storage, rate) cloud.
//!
//! The hull also encodes the dual picture: the price staircase maps each
//! storage budget to the marginal rate saved per unit of storage, which is
//! the slope of the hull segment the budget falls on.

use crate::demand::PopularityDistribution;
use crate::error::{Error, Result};
use crate::placement::{expected_rate_closed, CanonicalPlacement};
use crate::scalar::{real_usize, Real};
use serde::{Deserialize, Serialize};

/// One base case: a threshold placement with its storage and expected rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: Deserialize<'de>"
))]
pub struct BaseCase<T> {
    #[serde(flatten)]
    pub placement: CanonicalPlacement,
    /// Storage per cache, in files.
    pub m: T,
    /// Expected delivery rate, in files.
    pub r: T,
}

/// The base-case set: hull points sorted by storage, strictly decreasing in
/// rate, anchored at (0, K) and (N, 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBaseCaseSet<T>")]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: Deserialize<'de> + Real"
))]
pub struct BaseCaseSet<T> {
    k: usize,
    n: usize,
    cases: Vec<BaseCase<T>>,
}

#[derive(Deserialize)]
struct RawBaseCaseSet<T> {
    k: usize,
    n: usize,
    cases: Vec<BaseCase<T>>,
}

impl<T: Real> TryFrom<RawBaseCaseSet<T>> for BaseCaseSet<T> {
    type Error = Error;

    fn try_from(raw: RawBaseCaseSet<T>) -> Result<Self> {
        validate_base_set(raw.k, raw.n, &raw.cases)?;
        Ok(BaseCaseSet { k: raw.k, n: raw.n, cases: raw.cases })
    }
}

impl<T: Real> BaseCaseSet<T> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_files(&self) -> usize {
        self.n
    }

    pub fn cases(&self) -> &[BaseCase<T>] {
        &self.cases
    }
}

/// Structural validation shared by construction and deserialization.
///
/// Rates cannot be re-derived here (the set does not carry its distribution),
/// so this checks ordering, endpoints, strict convexity, and that each
/// storage value matches its placement.
fn validate_base_set<T: Real>(k: usize, n: usize, cases: &[BaseCase<T>]) -> Result<()> {
    if k == 0 || n == 0 {
        return Err(Error::invalid("base-case set needs K >= 1 and N >= 1"));
    }
    if cases.len() < 2 {
        return Err(Error::invalid("base-case set needs at least the two anchors"));
    }
    let tol = T::tol(1e-9);
    let first = &cases[0];
    if first.m.abs() > tol || (first.r - real_usize::<T>(k)).abs() > tol {
        return Err(Error::invalid("base-case set must start at (0, K)"));
    }
    let last = &cases[cases.len() - 1];
    if (last.m - real_usize::<T>(n)).abs() > tol || last.r.abs() > tol {
        return Err(Error::invalid("base-case set must end at (N, 0)"));
    }
    for (i, c) in cases.iter().enumerate() {
        c.placement.validate(k, n)?;
        let expect = c.placement.storage::<T>(k, n);
        if (c.m - expect).abs() > tol {
            return Err(Error::invalid(format!(
                "case {i} stores {} but its placement occupies {expect}",
                c.m
            )));
        }
        if !c.r.is_finite() || c.r < -tol {
            return Err(Error::invalid(format!("case {i} has rate {}", c.r)));
        }
    }
    for w in cases.windows(2) {
        if !(w[0].m < w[1].m) {
            return Err(Error::invalid("storages must be strictly increasing"));
        }
        if !(w[0].r > w[1].r) {
            return Err(Error::invalid("rates must be strictly decreasing"));
        }
    }
    for w in cases.windows(3) {
        if !strictly_below_chord(&w[1], &w[0], &w[2]) {
            return Err(Error::invalid(
                "interior case does not improve on memory sharing of its neighbors",
            ));
        }
    }
    Ok(())
}

/// True when `b` lies strictly below the chord from `a` to `c` at m = b.m.
/// Cross-product form; no divisions, so the hull filter and its validators
/// agree bit for bit.
fn strictly_below_chord<T: Real>(b: &BaseCase<T>, a: &BaseCase<T>, c: &BaseCase<T>) -> bool {
    b.r * (c.m - a.m) < a.r * (c.m - b.m) + c.r * (b.m - a.m)
}

/// Enumerates all KN+1 candidate threshold placements with their storage and
/// closed-form rate: the empty placement plus one candidate per (level,
/// threshold) pair.
pub fn enumerate_candidates<T: Real>(
    k: usize,
    dist: &PopularityDistribution<T>,
) -> Result<Vec<BaseCase<T>>> {
    if k == 0 {
        return Err(Error::invalid("cache count must be at least 1"));
    }
    let n = dist.n_files();
    let mut out = Vec::with_capacity(k * n + 1);
    let empty = CanonicalPlacement::uncached(n);
    out.push(BaseCase {
        placement: empty,
        m: T::zero(),
        r: expected_rate_closed(k, dist, empty, None, T::one())?,
    });
    for s in 1..=k {
        for n_star in 1..=n {
            let c = CanonicalPlacement::new(s, n_star);
            out.push(BaseCase {
                placement: c,
                m: c.storage(k, n),
                r: expected_rate_closed(k, dist, c, None, T::one())?,
            });
        }
    }
    Ok(out)
}

/// Filters a candidate cloud down to its lower convex hull.
///
/// Candidates sharing a storage value are first deduplicated keeping the
/// lowest rate, then a monotone chain keeps exactly the strictly convex
/// subsequence: a candidate survives only if it beats memory sharing between
/// every pair of its surviving neighbors.
pub fn build_base_set<T: Real>(
    k: usize,
    n_files: usize,
    candidates: &[BaseCase<T>],
) -> Result<BaseCaseSet<T>> {
    if candidates.is_empty() {
        return Err(Error::invalid("candidate list is empty"));
    }
    for (i, c) in candidates.iter().enumerate() {
        c.placement.validate(k, n_files)?;
        if !c.m.is_finite() || !c.r.is_finite() {
            return Err(Error::invalid(format!("candidate {i} has nonfinite coordinates")));
        }
    }
    if !candidates.iter().any(|c| c.m == T::zero()) {
        return Err(Error::invalid("candidate list must include the zero-storage anchor"));
    }

    let mut sorted: Vec<BaseCase<T>> = candidates.to_vec();
    sorted.sort_by(|a, b| {
        (a.m, a.r)
            .partial_cmp(&(b.m, b.r))
            .expect("finite coordinates")
    });
    // Within equal storage the sort put the lowest rate first; dedup keeps it.
    sorted.dedup_by(|next, kept| next.m == kept.m);

    let mut hull: Vec<BaseCase<T>> = Vec::with_capacity(sorted.len());
    for c in sorted {
        while hull.len() >= 2 {
            let a = &hull[hull.len() - 2];
            let b = &hull[hull.len() - 1];
            if strictly_below_chord(b, a, &c) {
                break;
            }
            hull.pop();
        }
        hull.push(c);
    }

    validate_base_set(k, n_files, &hull)?;
    Ok(BaseCaseSet { k, n: n_files, cases: hull })
}

/// One constant-price segment of the staircase, valid on the open storage
/// interval (m_lo, m_hi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct Segment<T> {
    pub m_lo: T,
    pub m_hi: T,
    pub gamma: T,
}

/// Price interval at a base-case storage value. The optimal price is any
/// value in [gamma_lo, gamma_hi]; `gamma_hi = None` means unbounded above,
/// which happens only at zero storage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct Breakpoint<T> {
    pub m: T,
    pub gamma_lo: T,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gamma_hi: Option<T>,
}

/// The optimal storage price gamma*(M) as a function of the budget:
/// piecewise constant between base cases, an interval exactly at them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: Deserialize<'de>"
))]
pub struct PriceStaircase<T> {
    pub breakpoints: Vec<Breakpoint<T>>,
    pub segments: Vec<Segment<T>>,
}

/// Derives the staircase from a base-case set: each segment's price is the
/// magnitude of the hull slope over that interval, (R_{i-1} - R_i) /
/// (M_i - M_{i-1}), and each breakpoint carries the closed interval between
/// its neighboring segment prices.
pub fn price_staircase<T: Real>(base: &BaseCaseSet<T>) -> PriceStaircase<T> {
    let cases = base.cases();
    let l = cases.len() - 1;
    let gammas: Vec<T> = (1..=l)
        .map(|i| (cases[i - 1].r - cases[i].r) / (cases[i].m - cases[i - 1].m))
        .collect();
    let segments: Vec<Segment<T>> = (1..=l)
        .map(|i| Segment {
            m_lo: cases[i - 1].m,
            m_hi: cases[i].m,
            gamma: gammas[i - 1],
        })
        .collect();
    let mut breakpoints = Vec::with_capacity(l + 1);
    breakpoints.push(Breakpoint { m: cases[0].m, gamma_lo: gammas[0], gamma_hi: None });
    for i in 1..l {
        breakpoints.push(Breakpoint {
            m: cases[i].m,
            gamma_lo: gammas[i],
            gamma_hi: Some(gammas[i - 1]),
        });
    }
    breakpoints.push(Breakpoint {
        m: cases[l].m,
        gamma_lo: T::zero(),
        gamma_hi: Some(gammas[l - 1]),
    });
    PriceStaircase { breakpoints, segments }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::make_zipf;
    use crate::placement::{canonical_to_matrix, expected_rate_exact};

    fn uniform_set(k: usize, n: usize) -> BaseCaseSet<f64> {
        let d = make_zipf::<f64>(n, 0.0).unwrap();
        let cands = enumerate_candidates(k, &d).unwrap();
        build_base_set(k, n, &cands).unwrap()
    }

    #[test]
    fn candidate_count_is_kn_plus_one() {
        let d = make_zipf::<f64>(5, 1.0).unwrap();
        let cands = enumerate_candidates(4, &d).unwrap();
        assert_eq!(cands.len(), 21);
    }

    #[test]
    fn full_replication_candidate_hits_the_corner() {
        let d = make_zipf::<f64>(5, 1.0).unwrap();
        let cands = enumerate_candidates(4, &d).unwrap();
        let full = cands
            .iter()
            .find(|c| c.placement == CanonicalPlacement::new(4, 1))
            .unwrap();
        assert_eq!(full.m, 5.0);
        assert_eq!(full.r, 0.0);
    }

    #[test]
    fn skewed_candidate_matches_hand_value() {
        let d = make_zipf::<f64>(4, 1.0).unwrap();
        let cands = enumerate_candidates(4, &d).unwrap();
        let c = cands
            .iter()
            .find(|c| c.placement == CanonicalPlacement::new(2, 3))
            .unwrap();
        assert_eq!(c.m, 1.0);
        assert!((c.r - 1.772032).abs() < 1e-9);
    }

    #[test]
    fn candidate_rates_match_exact_evaluator() {
        let d = make_zipf::<f64>(6, 1.4).unwrap();
        for c in enumerate_candidates(4, &d).unwrap() {
            let y = canonical_to_matrix::<f64>(c.placement, 4, 6).unwrap();
            let exact = expected_rate_exact(&y, &d).unwrap();
            assert!((c.r - exact).abs() < 1e-9, "{:?}", c.placement);
            assert!((c.m - y.storage()).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_hull_recovers_the_classic_tradeoff() {
        let set = uniform_set(4, 4);
        let ms: Vec<f64> = set.cases().iter().map(|c| c.m).collect();
        let rs: Vec<f64> = set.cases().iter().map(|c| c.r).collect();
        assert_eq!(ms, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let expect = [4.0, 1.5, 2.0 / 3.0, 0.25, 0.0];
        for (r, e) in rs.iter().zip(expect) {
            assert!((r - e).abs() < 1e-12);
        }
        // Positive-storage hull members cache the whole library.
        for c in &set.cases()[1..] {
            assert_eq!(c.placement.n_star, 1);
        }
    }

    #[test]
    fn single_file_hull_is_the_full_level_curve() {
        let d = make_zipf::<f64>(1, 2.0).unwrap();
        let k = 5;
        let cands = enumerate_candidates(k, &d).unwrap();
        assert_eq!(cands.len(), 6);
        let set = build_base_set(k, 1, &cands).unwrap();
        // (K - s)/(s + 1) over m = s/K is strictly convex, so every level
        // survives.
        assert_eq!(set.cases().len(), 6);
        for (s, c) in set.cases().iter().enumerate() {
            assert!((c.m - s as f64 / 5.0).abs() < 1e-15);
            assert!((c.r - (5.0 - s as f64) / (s as f64 + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn hull_is_invariant_under_duplicates_and_permutation() {
        let d = make_zipf::<f64>(6, 1.1).unwrap();
        let cands = enumerate_candidates(4, &d).unwrap();
        let baseline = build_base_set(4, 6, &cands).unwrap();

        let mut doubled = cands.clone();
        doubled.extend(cands.iter().copied());
        assert_eq!(build_base_set(4, 6, &doubled).unwrap(), baseline);

        let mut reversed = cands.clone();
        reversed.reverse();
        assert_eq!(build_base_set(4, 6, &reversed).unwrap(), baseline);
    }

    #[test]
    fn build_rejects_missing_anchor() {
        let d = make_zipf::<f64>(4, 1.0).unwrap();
        let cands: Vec<BaseCase<f64>> = enumerate_candidates(4, &d)
            .unwrap()
            .into_iter()
            .filter(|c| c.m > 0.0)
            .collect();
        assert!(build_base_set(4, 4, &cands).is_err());
    }

    #[test]
    fn staircase_matches_uniform_slopes() {
        let set = uniform_set(4, 4);
        let st = price_staircase(&set);
        let expect = [2.5, 5.0 / 6.0, 5.0 / 12.0, 0.25];
        assert_eq!(st.segments.len(), 4);
        for (seg, e) in st.segments.iter().zip(expect) {
            assert!((seg.gamma - e).abs() < 1e-12, "{} vs {e}", seg.gamma);
        }
        assert_eq!(st.breakpoints.first().unwrap().gamma_hi, None);
        assert!((st.breakpoints.first().unwrap().gamma_lo - 2.5).abs() < 1e-12);
        let last = st.breakpoints.last().unwrap();
        assert_eq!(last.gamma_lo, 0.0);
        assert!((last.gamma_hi.unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn staircase_prices_strictly_decrease() {
        for alpha in [0.0, 0.7, 1.3, 2.1] {
            let d = make_zipf::<f64>(7, alpha).unwrap();
            let cands = enumerate_candidates(5, &d).unwrap();
            let set = build_base_set(5, 7, &cands).unwrap();
            let st = price_staircase(&set);
            for w in st.segments.windows(2) {
                assert!(w[0].gamma > w[1].gamma, "alpha={alpha}");
            }
            // Interior breakpoint intervals are [next slope, previous slope].
            for (i, bp) in st.breakpoints.iter().enumerate().skip(1).take(st.segments.len() - 1) {
                assert_eq!(bp.gamma_lo, st.segments[i].gamma);
                assert_eq!(bp.gamma_hi, Some(st.segments[i - 1].gamma));
            }
        }
    }

    #[test]
    fn base_set_serde_round_trip_and_validation() {
        let set = uniform_set(4, 4);
        let js = serde_json::to_string(&set).unwrap();
        let back: BaseCaseSet<f64> = serde_json::from_str(&js).unwrap();
        assert_eq!(back, set);

        let case_js = serde_json::to_value(&set.cases()[1]).unwrap();
        assert_eq!(
            case_js,
            serde_json::json!({"s_star": 1, "n_star": 1, "m": 1.0, "r": 1.5})
        );

        // Tampered storage value fails validation on load.
        let mut doc: serde_json::Value = serde_json::from_str(&js).unwrap();
        doc["cases"][1]["m"] = serde_json::json!(0.75);
        assert!(serde_json::from_value::<BaseCaseSet<f64>>(doc).is_err());
    }
}
