//! Small combinatorics toolkit: binomial coefficients, k-subset enumeration
//! over arbitrary ground sets, and bitmask subset iteration for cache sets.

/// Binomial coefficient C(n, k) as `u64`.
///
/// Computed multiplicatively with `u128` intermediates; exact for every value
/// that fits in `u64`. Panics on overflow, which no guarded caller can reach.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    u64::try_from(acc).expect("binomial coefficient exceeds u64")
}

/// Sum of C(n, j) for j in 1..=j_max, saturating at `u64::MAX`.
///
/// This is the number of nonempty demand groups with at most `j_max` distinct
/// files, the quantity the rate evaluators guard on.
pub fn group_count(n: usize, j_max: usize) -> u64 {
    let mut total: u64 = 0;
    for j in 1..=j_max.min(n) {
        let mut c: u128 = 1;
        for i in 0..j.min(n - j) {
            c = c * (n - i) as u128 / (i + 1) as u128;
            if c > u64::MAX as u128 {
                return u64::MAX;
            }
        }
        // j.min(n - j) switched the symmetric side; c is C(n, j) either way.
        total = total.saturating_add(c as u64);
    }
    total
}

/// Calls `f` on every k-subset of {0, .., n-1} in lexicographic order.
///
/// The slice passed to `f` is a scratch buffer reused between calls, so the
/// enumeration allocates once regardless of C(n, k).
pub fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k == 0 || k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        // Advance the rightmost index that still has room, then reset the
        // suffix to the tightest ascending run.
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Iterator over the nonempty subsets of {1, .., k} encoded as bitmasks
/// (bit i-1 set means element i belongs to the subset).
pub fn nonempty_masks(k: usize) -> impl Iterator<Item = u32> {
    debug_assert!(k <= 16);
    1..(1u32 << k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_matches_pascal() {
        for n in 0..20usize {
            for k in 0..=n {
                let pascal = if k == 0 || k == n {
                    1
                } else {
                    binomial(n - 1, k - 1) + binomial(n - 1, k)
                };
                assert_eq!(binomial(n, k), pascal);
            }
        }
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(52, 5), 2_598_960);
    }

    #[test]
    fn group_count_sums_binomials() {
        assert_eq!(group_count(4, 2), 4 + 6);
        assert_eq!(group_count(4, 9), 15); // 2^4 - 1, j_max clipped to n
        assert_eq!(group_count(200, 30), u64::MAX); // saturates
    }

    #[test]
    fn combinations_visit_each_subset_once() {
        let mut seen = Vec::new();
        for_each_combination(5, 3, |c| seen.push(c.to_vec()));
        assert_eq!(seen.len(), 10);
        let mut sorted = seen.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 10, "duplicates found");
        assert_eq!(seen.first().unwrap(), &vec![0, 1, 2]);
        assert_eq!(seen.last().unwrap(), &vec![2, 3, 4]);
        for c in &seen {
            assert!(c.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn combinations_handle_degenerate_sizes() {
        let mut count = 0;
        for_each_combination(4, 0, |_| count += 1);
        assert_eq!(count, 0);
        for_each_combination(3, 4, |_| count += 1);
        assert_eq!(count, 0);
        for_each_combination(3, 3, |c| {
            count += 1;
            assert_eq!(c, &[0, 1, 2]);
        });
        assert_eq!(count, 1);
    }

    #[test]
    fn masks_cover_the_power_set() {
        let all: Vec<u32> = nonempty_masks(3).collect();
        assert_eq!(all, vec![1, 2, 3, 4, 5, 6, 7]);
    }
}
