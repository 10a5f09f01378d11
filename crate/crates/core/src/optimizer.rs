//! Analytic solvers for the two placement programs.
//!
//! Rate minimization under a storage cap (RMSC) is solved by memory sharing:
//! locate the two base cases bracketing the budget and blend them so the
//! budget is used exactly. Joint rate and storage minimization (JRSM) prices
//! storage at gamma and picks the base case minimizing rate + gamma * storage.
//! Both reduce to lookups on the base-case set; neither touches the full
//! continuous program, which is the oracle module's job.

use crate::basecases::{BaseCase, BaseCaseSet};
use crate::error::{Error, Result};
use crate::placement::{canonical_to_matrix, PlacementMatrix};
use crate::scalar::{real_usize, Real};
use serde::Serialize;

/// Memory-sharing solution for a storage budget M.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Serialize"))]
pub struct RmscSolution<T> {
    /// Weight of the lower base case; 1 when the budget hits a base case.
    pub theta: T,
    /// Storage the blended placement actually occupies; equals the budget.
    pub m_used: T,
    /// Expected delivery rate of the blend.
    pub rate: T,
    pub lower: BaseCase<T>,
    pub upper: BaseCase<T>,
    pub y: PlacementMatrix<T>,
}

/// Priced solution for a storage price gamma.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Serialize"))]
pub struct JrsmSolution<T> {
    /// rate + gamma * storage at the chosen base case.
    pub objective: T,
    pub gamma: T,
    /// The minimizing base case; the solution placement is always one of
    /// the base cases.
    pub case: BaseCase<T>,
    pub y: PlacementMatrix<T>,
}

/// Solves RMSC at budget `m` by memory sharing over the base-case set.
///
/// The returned blend uses the budget exactly. This is asserted against the
/// expanded matrix rather than trusted from construction.
pub fn solve_rmsc<T: Real>(m: T, base: &BaseCaseSet<T>) -> Result<RmscSolution<T>> {
    let k = base.k();
    let n = base.n_files();
    let n_t = real_usize::<T>(n);
    if !m.is_finite() || m < T::zero() || m > n_t {
        return Err(Error::invalid(format!(
            "storage budget {m} outside [0, {n}]"
        )));
    }
    let cases = base.cases();
    let (lower, upper, theta) = if let Some(c) = cases.iter().find(|c| c.m == m) {
        (*c, *c, T::one())
    } else {
        // Storages are strictly increasing, so "m_i < m" flips exactly once
        // and partition_point finds the bracketing pair.
        let idx = cases.partition_point(|c| c.m < m);
        debug_assert!(idx > 0 && idx < cases.len(), "budget range was validated");
        let lo = cases[idx - 1];
        let up = cases[idx];
        (lo, up, (up.m - m) / (up.m - lo.m))
    };

    let y_lower = canonical_to_matrix::<T>(lower.placement, k, n)?;
    let y = if theta == T::one() {
        y_lower
    } else {
        let y_upper = canonical_to_matrix::<T>(upper.placement, k, n)?;
        PlacementMatrix::blend(&y_lower, &y_upper, theta)?
    };
    let rate = theta * lower.r + (T::one() - theta) * upper.r;
    let m_used = y.storage();

    // The budget must be used in full; leftover storage would contradict
    // optimality of the blend.
    let budget_tol = T::tol(1e-12) * (T::one() + n_t);
    assert!(
        (m_used - m).abs() <= budget_tol,
        "memory sharing left storage unused: |{m_used} - {m}| > {budget_tol}"
    );

    Ok(RmscSolution { theta, m_used, rate, lower, upper, y })
}

/// Solves JRSM at price `gamma`: the base case minimizing r + gamma * m.
/// Ties go to the smaller storage, matching the left limit of the staircase
/// correspondence and keeping the output deterministic.
pub fn solve_jrsm<T: Real>(gamma: T, base: &BaseCaseSet<T>) -> Result<JrsmSolution<T>> {
    if !gamma.is_finite() || gamma < T::zero() {
        return Err(Error::invalid(format!(
            "storage price {gamma} must be finite and nonnegative"
        )));
    }
    let mut best: Option<(T, BaseCase<T>)> = None;
    for c in base.cases() {
        let obj = c.r + gamma * c.m;
        match &best {
            Some((cur, _)) if obj >= *cur => {}
            _ => best = Some((obj, *c)),
        }
    }
    let (objective, case) = best.expect("base sets are nonempty");
    let y = canonical_to_matrix::<T>(case.placement, base.k(), base.n_files())?;
    Ok(JrsmSolution { objective, gamma, case, y })
}

/// Evaluates the optimal rate at each budget of a grid. The result is the
/// piecewise-linear lower envelope through the base cases: convex and
/// nonincreasing.
pub fn optimal_rate_curve<T: Real>(
    base: &BaseCaseSet<T>,
    grid: &[T],
) -> Result<Vec<(T, T)>> {
    grid.iter()
        .map(|&m| solve_rmsc(m, base).map(|sol| (m, sol.rate)))
        .collect()
}
