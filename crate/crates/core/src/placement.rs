//! Placement matrices and rate evaluators.
//!
//! A symmetric uncoded placement is described by an N x (K+1) matrix y whose
//! entry y[n][s] is the fraction of file n cached, in aggregate, across all
//! cache subsets of size s. Column 0 is the uncached fraction. Every row
//! sums to one: each bit of a file is either uncached or cached at exactly
//! one level.
//!
//! Two evaluators live here. `expected_rate_exact` computes the expected
//! structured clique cover delivery rate by enumerating demand groups, for
//! any feasible matrix. `expected_rate_closed` evaluates threshold
//! ("canonical") placements and their two-point mixtures through a closed
//! form, which the optimizer uses heavily. Agreement of the two paths is a
//! test invariant, not an assumption.

use crate::combin::{binomial, group_count};
use crate::demand::PopularityDistribution;
use crate::error::{Error, Result};
use crate::scalar::{pairwise_sum, real_usize, Real};
use serde::ser::{SerializeMap, SerializeSeq, SerializeStruct};
use serde::{Deserialize, Serialize, Serializer};

/// Hard cap on demand groups per level in the exact rate evaluator.
const MAX_GROUPS: u64 = 10_000_000;

/// Hard cap on inclusion-exclusion terms across one evaluation. The group
/// cap alone admits instances whose 2^|g| subset tables would still be
/// astronomical (N and K both around 23); this guard rejects them loudly.
const MAX_IE_TERMS: u64 = 200_000_000;

/// Cache-subset expansion is limited to 2^16 subsets.
const MAX_EXPAND_K: usize = 16;

/// Symmetric placement: y[n][s] fractions for N files over K caches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPlacementMatrix<T>")]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: Deserialize<'de> + Real"
))]
pub struct PlacementMatrix<T> {
    k: usize,
    n: usize,
    rows: Vec<Vec<T>>,
}

#[derive(Deserialize)]
struct RawPlacementMatrix<T> {
    k: usize,
    n: usize,
    rows: Vec<Vec<T>>,
}

impl<T: Real> TryFrom<RawPlacementMatrix<T>> for PlacementMatrix<T> {
    type Error = Error;

    fn try_from(raw: RawPlacementMatrix<T>) -> Result<Self> {
        PlacementMatrix::new(raw.k, raw.n, raw.rows)
    }
}

impl<T: Real> PlacementMatrix<T> {
    /// Validates and normalizes a placement matrix.
    ///
    /// Entries must lie in [0, 1] up to a 1e-9 tolerance and every row sum
    /// must be within 1e-9 of one; rows are then divided by their sum so the
    /// stored matrix satisfies the row-sum invariant to near machine
    /// precision. Larger deviations are rejected, not repaired.
    pub fn new(k: usize, n: usize, rows: Vec<Vec<T>>) -> Result<Self> {
        if k == 0 || n == 0 {
            return Err(Error::invalid("placement needs at least one cache and one file"));
        }
        if rows.len() != n {
            return Err(Error::invalid(format!(
                "expected {n} rows, got {}",
                rows.len()
            )));
        }
        let tol = T::tol(1e-9);
        let mut rows = rows;
        for (i, row) in rows.iter_mut().enumerate() {
            if row.len() != k + 1 {
                return Err(Error::invalid(format!(
                    "row {i} has {} entries, expected K+1 = {}",
                    row.len(),
                    k + 1
                )));
            }
            for e in row.iter_mut() {
                if !e.is_finite() || *e < -tol || *e > T::one() + tol {
                    return Err(Error::invalid(format!(
                        "row {i} has entry {e} outside [0, 1]"
                    )));
                }
                *e = e.max(T::zero()).min(T::one());
            }
            let sum = pairwise_sum(row);
            if (sum - T::one()).abs() > tol {
                return Err(Error::invalid(format!(
                    "row {i} sums to {sum}, outside the repairable band around 1"
                )));
            }
            // After clamping, every entry is at most the row sum, so the
            // normalized row stays inside [0, 1].
            for e in row.iter_mut() {
                *e = *e / sum;
            }
        }
        Ok(Self { k, n, rows })
    }

    /// Convex combination theta * a + (1 - theta) * b of two placements.
    pub fn blend(a: &Self, b: &Self, theta: T) -> Result<Self> {
        if a.k != b.k || a.n != b.n {
            return Err(Error::invalid("blend requires matching dimensions"));
        }
        if !theta.is_finite() || theta < T::zero() || theta > T::one() {
            return Err(Error::invalid(format!("mixing weight {theta} outside [0, 1]")));
        }
        let co = T::one() - theta;
        let rows = a
            .rows
            .iter()
            .zip(&b.rows)
            .map(|(ra, rb)| {
                ra.iter()
                    .zip(rb)
                    .map(|(&x, &y)| theta * x + co * y)
                    .collect()
            })
            .collect();
        Self::new(a.k, a.n, rows)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_files(&self) -> usize {
        self.n
    }

    /// Row of file at 0-based position `i` (file i+1); length K+1.
    pub fn row(&self, i: usize) -> &[T] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }

    /// Per-cache storage occupied by the placement: sum of (s/K) y[n][s].
    pub fn storage(&self) -> T {
        let k = real_usize::<T>(self.k);
        let mut total = T::zero();
        for s in 1..=self.k {
            let col: Vec<T> = self.rows.iter().map(|r| r[s]).collect();
            total = total + real_usize::<T>(s) / k * pairwise_sum(&col);
        }
        total
    }

    /// Storage mass per level: Q_s = sum of (s/K) y[n][s], for s = 0..=K.
    /// Q_0 is always zero; the vector has K+1 entries for direct indexing.
    pub fn level_masses(&self) -> Vec<T> {
        let k = real_usize::<T>(self.k);
        (0..=self.k)
            .map(|s| {
                let col: Vec<T> = self.rows.iter().map(|r| r[s]).collect();
                real_usize::<T>(s) / k * pairwise_sum(&col)
            })
            .collect()
    }
}

/// Threshold placement: files below `n_star` are uncached, files at or above
/// it are fully cached at level `s_star`.
///
/// `n_star` ranges over 1..=N+1; `n_star = N+1` means nothing is cached, in
/// which case `s_star` is conventionally 0. `s_star = 0` with a threshold
/// inside the file range is contradictory and rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CanonicalPlacement {
    pub s_star: usize,
    pub n_star: usize,
}

impl CanonicalPlacement {
    pub fn new(s_star: usize, n_star: usize) -> Self {
        Self { s_star, n_star }
    }

    /// The all-uncached placement in its normalized encoding.
    pub fn uncached(n_files: usize) -> Self {
        Self { s_star: 0, n_star: n_files + 1 }
    }

    /// Validates the encoding against concrete dimensions.
    pub fn validate(&self, k: usize, n_files: usize) -> Result<()> {
        if self.n_star == 0 || self.n_star > n_files + 1 {
            return Err(Error::invalid(format!(
                "threshold {} outside 1..={}",
                self.n_star,
                n_files + 1
            )));
        }
        if self.s_star > k {
            return Err(Error::invalid(format!(
                "level {} exceeds cache count {k}",
                self.s_star
            )));
        }
        if self.s_star == 0 && self.n_star <= n_files {
            return Err(Error::invalid(
                "level 0 cannot cache files; threshold must be N+1",
            ));
        }
        Ok(())
    }

    /// Count of cached files, N - n_star + 1.
    pub fn cached_files(&self, n_files: usize) -> usize {
        n_files + 1 - self.n_star
    }

    /// Storage the placement occupies: (N - n_star + 1) * s_star / K.
    pub fn storage<T: Real>(&self, k: usize, n_files: usize) -> T {
        real_usize::<T>(self.cached_files(n_files)) * real_usize::<T>(self.s_star)
            / real_usize::<T>(k)
    }
}

/// Expands a canonical placement into its full matrix form: rows below the
/// threshold carry a one in column 0, the rest in column `s_star`.
pub fn canonical_to_matrix<T: Real>(
    c: CanonicalPlacement,
    k: usize,
    n_files: usize,
) -> Result<PlacementMatrix<T>> {
    c.validate(k, n_files)?;
    let rows = (1..=n_files)
        .map(|n| {
            let mut row = vec![T::zero(); k + 1];
            if n < c.n_star {
                row[0] = T::one();
            } else {
                row[c.s_star] = T::one();
            }
            row
        })
        .collect();
    PlacementMatrix::new(k, n_files, rows)
}

/// Checks the enumeration guards shared by the exact evaluator and the
/// numeric oracle, returning the per-level group budget that passed.
pub(crate) fn check_enumeration_guards(n_files: usize, k: usize) -> Result<()> {
    let j_max = k.min(n_files);
    let groups = group_count(n_files, j_max);
    if groups > MAX_GROUPS {
        return Err(Error::resource(format!(
            "rate evaluation needs {groups} demand groups per level, cap is {MAX_GROUPS}"
        )));
    }
    let mut terms: u64 = 0;
    for j in 1..=j_max {
        let c = binomial(n_files, j);
        terms = terms.saturating_add(c.saturating_mul(1u64 << j.min(63)));
    }
    if terms > MAX_IE_TERMS {
        return Err(Error::resource(format!(
            "rate evaluation needs {terms} inclusion-exclusion terms, cap is {MAX_IE_TERMS}"
        )));
    }
    Ok(())
}

/// Exact expected delivery rate of the structured clique cover scheme:
///
///   r(y) = sum over s of (K-s)/(s+1) * sum over groups g of
///          pi_{s+1}^g * max over n in g of y[n][s]
///
/// Demand groups are enumerated once; each group's subset-mass table is
/// shared across every level it contributes to.
pub fn expected_rate_exact<T: Real>(
    y: &PlacementMatrix<T>,
    dist: &PopularityDistribution<T>,
) -> Result<T> {
    if dist.n_files() != y.n_files() {
        return Err(Error::invalid(format!(
            "distribution has {} files, placement has {}",
            dist.n_files(),
            y.n_files()
        )));
    }
    let k = y.k();
    let n = y.n_files();
    check_enumeration_guards(n, k)?;

    let mut level_sum = vec![T::zero(); k];
    // Subset-mass table for the current group, indexed by submask.
    let mut masses: Vec<T> = Vec::new();
    crate::demand::for_each_group(n, k, |g| {
        let j = g.len();
        // Level s admits groups of at most s+1 distinct files.
        let s_lo = j.saturating_sub(1);
        let mut max_y = vec![T::zero(); k];
        let mut any = false;
        for s in s_lo..k {
            let mut m = T::zero();
            for &file in g {
                let v = y.rows[file - 1][s];
                if v > m {
                    m = v;
                }
            }
            if m > T::zero() {
                max_y[s] = m;
                any = true;
            }
        }
        if !any {
            return;
        }
        masses.clear();
        masses.resize(1usize << j, T::zero());
        for mask in 1usize..(1 << j) {
            let low = mask.trailing_zeros() as usize;
            masses[mask] = masses[mask & (mask - 1)] + dist.prob(g[low]);
        }
        for (s, &m) in max_y.iter().enumerate().skip(s_lo) {
            if m <= T::zero() {
                continue;
            }
            let mut pi = T::zero();
            for (mask, &pm) in masses.iter().enumerate().skip(1) {
                let term = pm.powi((s + 1) as i32);
                if (j as u32 - (mask as u64).count_ones()) % 2 == 0 {
                    pi = pi + term;
                } else {
                    pi = pi - term;
                }
            }
            level_sum[s] = level_sum[s] + pi * m;
        }
    });

    let k_t = real_usize::<T>(k);
    let weighted: Vec<T> = level_sum
        .iter()
        .enumerate()
        .map(|(s, &v)| (k_t - real_usize::<T>(s)) / real_usize::<T>(s + 1) * v)
        .collect();
    Ok(pairwise_sum(&weighted))
}

/// Rate contribution of one active level of a threshold placement:
/// (K-s)/(s+1) * (1 - (1 - P)^(s+1)) where P is the cached suffix mass.
/// Level K stores everything locally and contributes no delivery rate.
fn level_term<T: Real>(k: usize, s: usize, cached_mass: T) -> T {
    if s == 0 || s >= k {
        return T::zero();
    }
    let k_t = real_usize::<T>(k);
    let s_t = real_usize::<T>(s);
    let miss = T::one() - cached_mass;
    (k_t - s_t) / (s_t + T::one()) * (T::one() - miss.powi((s + 1) as i32))
}

/// Closed-form rate of a single canonical placement.
fn closed_rate_single<T: Real>(
    k: usize,
    dist: &PopularityDistribution<T>,
    c: CanonicalPlacement,
) -> T {
    let uncached = dist.prefix_mass(c.n_star);
    let cached = dist.suffix_mass(c.n_star);
    real_usize::<T>(k) * uncached + level_term(k, c.s_star, cached)
}

/// Closed-form expected rate of a canonical placement or a two-point mixture
/// theta * c1 + (1 - theta) * c2.
///
/// Mixtures stay closed-form because threshold supports are nested suffixes
/// of the file list. Within one shared level s the blended column is a
/// two-step staircase and the group maximum decomposes as
/// theta * [g meets suffix 1] + (1 - theta) * [g meets suffix 2]; across two
/// distinct levels the columns contribute independently. Either way the
/// mixture rate is the convex combination of the endpoint rates, which is
/// exactly what memory sharing promises.
pub fn expected_rate_closed<T: Real>(
    k: usize,
    dist: &PopularityDistribution<T>,
    c1: CanonicalPlacement,
    c2: Option<CanonicalPlacement>,
    theta: T,
) -> Result<T> {
    let n = dist.n_files();
    c1.validate(k, n)?;
    if !theta.is_finite() || theta < T::zero() || theta > T::one() {
        return Err(Error::invalid(format!("mixing weight {theta} outside [0, 1]")));
    }
    let Some(c2) = c2 else {
        return Ok(closed_rate_single(k, dist, c1));
    };
    c2.validate(k, n)?;
    let co = T::one() - theta;
    // Uncached column: linear in the mixture.
    let base = real_usize::<T>(k)
        * (theta * dist.prefix_mass(c1.n_star) + co * dist.prefix_mass(c2.n_star));
    // Active levels: nested staircases (same s) and independent columns
    // (distinct s) both reduce to weighted level terms.
    let t1 = level_term(k, c1.s_star, dist.suffix_mass(c1.n_star));
    let t2 = level_term(k, c2.s_star, dist.suffix_mass(c2.n_star));
    Ok(base + theta * t1 + co * t2)
}

/// Per-subset subfile fractions x[n][S] for every cache subset S.
///
/// Symmetric placements give every subset of equal size the same fraction,
/// so the expansion stores one value per (file, level) and resolves subsets
/// through their popcount. Subsets are addressed as bitmasks with bit k-1
/// set when cache k belongs to S.
#[derive(Debug, Clone, PartialEq)]
pub struct SubfilePlacement<T> {
    k: usize,
    n: usize,
    /// x_levels[file][s] = y[file][s] / C(K, s).
    x_levels: Vec<Vec<T>>,
}

impl<T: Real> SubfilePlacement<T> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_files(&self) -> usize {
        self.n
    }

    /// Fraction of file `n` (1-based) stored exactly at the caches of
    /// `subset` (bitmask; the empty mask addresses the uncached fraction).
    pub fn fraction(&self, n: usize, subset: u32) -> T {
        debug_assert!((subset.count_ones() as usize) <= self.k);
        self.x_levels[n - 1][subset.count_ones() as usize]
    }

    /// Fraction per subset at the given level, y[n][s] / C(K, s).
    pub fn level_fraction(&self, n: usize, s: usize) -> T {
        self.x_levels[n - 1][s]
    }
}

/// Splits aggregate level fractions into per-subset fractions.
pub fn expand_subfiles<T: Real>(y: &PlacementMatrix<T>) -> Result<SubfilePlacement<T>> {
    let k = y.k();
    if k > MAX_EXPAND_K {
        return Err(Error::resource(format!(
            "subset expansion enumerates 2^{k} subsets, cap is 2^{MAX_EXPAND_K}"
        )));
    }
    let x_levels = y
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(s, &v)| v / T::from_u64(binomial(k, s)).expect("small binomial"))
                .collect()
        })
        .collect();
    Ok(SubfilePlacement { k, n: y.n_files(), x_levels })
}

impl<T: Real + Serialize> Serialize for SubfilePlacement<T> {
    /// Serializes as {"k", "n", "files": [{"<mask>": fraction, ..}, ..]}
    /// listing only nonzero subsets, one map per file.
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        struct FileSubsets<'a, T> {
            k: usize,
            levels: &'a [T],
        }
        impl<T: Real + Serialize> Serialize for FileSubsets<'_, T> {
            fn serialize<S: Serializer>(
                &self,
                serializer: S,
            ) -> std::result::Result<S::Ok, S::Error> {
                let mut map = serializer.serialize_map(None)?;
                for mask in 0u32..(1u32 << self.k) {
                    let v = self.levels[mask.count_ones() as usize];
                    if v > T::zero() {
                        map.serialize_entry(&mask.to_string(), &v)?;
                    }
                }
                map.end()
            }
        }
        struct Files<'a, T> {
            k: usize,
            x_levels: &'a [Vec<T>],
        }
        impl<T: Real + Serialize> Serialize for Files<'_, T> {
            fn serialize<S: Serializer>(
                &self,
                serializer: S,
            ) -> std::result::Result<S::Ok, S::Error> {
                let mut seq = serializer.serialize_seq(Some(self.x_levels.len()))?;
                for levels in self.x_levels {
                    seq.serialize_element(&FileSubsets { k: self.k, levels })?;
                }
                seq.end()
            }
        }
        let mut st = serializer.serialize_struct("SubfilePlacement", 3)?;
        st.serialize_field("k", &self.k)?;
        st.serialize_field("n", &self.n)?;
        st.serialize_field("files", &Files { k: self.k, x_levels: &self.x_levels })?;
        st.end()
    }
}
