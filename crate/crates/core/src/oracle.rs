//! Numeric cross-check for the combinatorial optimizer.
//!
//! The storage-constrained placement problem is a linear program once each
//! per-group max is lifted into an epigraph variable:
//!
//!   minimize    sum over levels s and groups g of
//!               (K-s)/(s+1) * pi_{s+1}^g * t_{g,s}
//!   subject to  t_{g,s} >= y[n][s]          for every n in g,
//!               each placement row sums to 1,
//!               total storage at most M,    y >= 0.
//!
//! Solving that LP with an interior point method shares nothing with the
//! candidate enumeration and hull construction in the optimizer, so
//! agreement between the two is evidence, not tautology. Singleton groups
//! need no lifting and fold into the linear objective directly.
//!
//! Everything here runs in f64 regardless of the caller's scalar type; the
//! certificate below is about solver duality, not accumulation order.

use crate::demand::{for_each_group, inclusion_exclusion, PopularityDistribution};
use crate::error::{Error, Result};
use crate::placement::{check_enumeration_guards, PlacementMatrix};
use crate::scalar::{real, Real};
use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::Serialize;

/// Iteration cap for the interior point solve. The LPs here are small and
/// well conditioned; hundreds of iterations means something is wrong.
const MAX_ITER: u32 = 200;

/// Optimal rate as certified by the LP solver.
#[derive(Debug, Clone, Serialize)]
#[serde(bound(serialize = "T: Serialize"))]
pub struct OracleResult<T> {
    /// Optimal expected rate (primal objective).
    pub rate: T,
    /// Absolute primal-dual objective gap at the returned point. Weak
    /// duality makes this a hard bound on the distance to the true optimum.
    pub gap_certificate: T,
    /// Interior point iterations spent.
    pub iterations: u32,
    /// Optimal placement recovered from the primal variables.
    pub y: PlacementMatrix<T>,
}

/// One lifted max: epigraph variable index, its level, member files, weight.
struct Lift {
    level: usize,
    files: Vec<usize>,
    weight: f64,
}

/// Minimizes the expected delivery rate subject to the storage budget by
/// direct linear programming.
///
/// `tol` bounds the accepted duality gap relative to max(1, |rate|); a solve
/// that cannot certify that gap is reported as a convergence failure with
/// the best dual bound attached rather than returned as an answer.
pub fn numeric_rmsc<T: Real>(
    m: T,
    dist: &PopularityDistribution<T>,
    k: usize,
    tol: T,
) -> Result<OracleResult<T>> {
    let n = dist.n_files();
    if k == 0 {
        return Err(Error::invalid("cache count must be at least 1"));
    }
    let m_f = m.to_f64().filter(|v| v.is_finite()).ok_or_else(|| {
        Error::invalid("storage budget must be finite")
    })?;
    if !(0.0..=n as f64).contains(&m_f) {
        return Err(Error::invalid(format!(
            "storage budget {m_f} outside [0, {n}]"
        )));
    }
    let tol_f = tol.to_f64().filter(|v| v.is_finite() && *v > 0.0).ok_or_else(|| {
        Error::invalid("tolerance must be positive and finite")
    })?;
    check_enumeration_guards(n, k)?;

    let probs: Vec<f64> = (1..=n)
        .map(|f| dist.prob(f).to_f64().expect("finite probability"))
        .collect();
    let n_y = n * (k + 1);
    let idx_y = |file0: usize, s: usize| file0 * (k + 1) + s;

    // Objective. Level s of the rate sums over groups of at most s+1 files,
    // so each group contributes from level |g|-1 upward. Inclusion-exclusion
    // leaves harmless negative dust on near-zero group probabilities; those
    // weights clamp to zero and the lift is dropped (its variable would be
    // free and worthless).
    let mut lin = vec![0.0f64; n_y];
    let mut lifts: Vec<Lift> = Vec::new();
    let mut member = Vec::with_capacity(k.min(n));
    for_each_group(n, k, |g| {
        member.clear();
        member.extend(g.iter().map(|&f| probs[f - 1]));
        for s in (g.len() - 1)..k {
            let coeff = (k - s) as f64 / (s + 1) as f64;
            let pi = inclusion_exclusion::<f64>(&member, (s + 1) as u32);
            if g.len() == 1 {
                lin[idx_y(g[0] - 1, s)] += coeff * pi;
            } else {
                let weight = (coeff * pi).max(0.0);
                if weight > 0.0 {
                    lifts.push(Lift { level: s, files: g.to_vec(), weight });
                }
            }
        }
    });

    let n_vars = n_y + lifts.len();
    let mut q = lin;
    q.resize(n_vars, 0.0);
    for (j, lift) in lifts.iter().enumerate() {
        q[n_y + j] = lift.weight;
    }

    // Constraints, in A x + s = b with s cone-constrained. Row order:
    //   [0, n)          row sums        = 1   (zero cone)
    //   n               storage        <= M   (nonnegative cone from here)
    //   then per lift, per member      y - t <= 0
    //   then y >= 0 as                 -y <= 0
    let lift_rows: usize = lifts.iter().map(|l| l.files.len()).sum();
    let n_rows = n + 1 + lift_rows + n_y;
    let mut triplets: Vec<(usize, usize, f64)> =
        Vec::with_capacity(n_y * 2 + n_y - n + lift_rows * 2);
    let mut b = vec![0.0f64; n_rows];

    for file0 in 0..n {
        for s in 0..=k {
            triplets.push((file0, idx_y(file0, s), 1.0));
        }
        b[file0] = 1.0;
    }
    for file0 in 0..n {
        for s in 1..=k {
            triplets.push((n, idx_y(file0, s), s as f64 / k as f64));
        }
    }
    b[n] = m_f;
    let mut row = n + 1;
    for (j, lift) in lifts.iter().enumerate() {
        for &file in &lift.files {
            triplets.push((row, idx_y(file - 1, lift.level), 1.0));
            triplets.push((row, n_y + j, -1.0));
            row += 1;
        }
    }
    for v in 0..n_y {
        triplets.push((row + v, v, -1.0));
    }

    triplets.sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
    let mut colptr = vec![0usize; n_vars + 1];
    for &(_, c, _) in &triplets {
        colptr[c + 1] += 1;
    }
    for c in 0..n_vars {
        colptr[c + 1] += colptr[c];
    }
    let rowval: Vec<usize> = triplets.iter().map(|t| t.0).collect();
    let nzval: Vec<f64> = triplets.iter().map(|t| t.2).collect();
    let a = CscMatrix::new(n_rows, n_vars, colptr, rowval, nzval);
    let p = CscMatrix::zeros((n_vars, n_vars));
    let cones = [
        SupportedConeT::ZeroConeT(n),
        SupportedConeT::NonnegativeConeT(1 + lift_rows + n_y),
    ];

    // Aim well below the requested certificate so the gap check has slack.
    let solve_tol = (tol_f / 8.0).clamp(1e-12, 1e-9);
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(MAX_ITER)
        .tol_gap_abs(solve_tol)
        .tol_gap_rel(solve_tol)
        .tol_feas(solve_tol)
        .build()
        .map_err(|e| Error::invalid(format!("solver settings rejected: {e}")))?;

    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
        .map_err(|e| Error::invalid(format!("solver rejected problem data: {e}")))?;
    solver.solve();
    let sol = &solver.solution;
    let gap = (sol.obj_val - sol.obj_val_dual).abs();
    let ok_status = matches!(
        sol.status,
        SolverStatus::Solved | SolverStatus::AlmostSolved
    );
    if !ok_status || gap > tol_f * sol.obj_val.abs().max(1.0) {
        return Err(Error::Convergence {
            reason: format!(
                "solver status {:?} after {} iterations, duality gap {:.3e}",
                sol.status, sol.iterations, gap
            ),
            best_bound: Some(sol.obj_val_dual),
        });
    }

    // Interior point answers carry feasibility-level noise: tiny negative
    // entries and row sums off by the solver tolerance. Repair before the
    // strict matrix validation.
    let mut rows = Vec::with_capacity(n);
    for file0 in 0..n {
        let mut r: Vec<T> = (0..=k)
            .map(|s| real(sol.x[idx_y(file0, s)].max(0.0)))
            .collect();
        let total: T = r.iter().copied().sum();
        if total > T::zero() {
            for v in r.iter_mut() {
                *v = *v / total;
            }
        }
        rows.push(r);
    }
    Ok(OracleResult {
        rate: real(sol.obj_val),
        gap_certificate: real(gap),
        iterations: sol.iterations,
        y: PlacementMatrix::new(k, n, rows)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::make_zipf;
    use crate::placement::expected_rate_exact;

    #[test]
    fn zero_budget_forces_unicast_rate() {
        // With nothing cached every cache gets a unicast of its full
        // request; the clique cover does not merge identical requests, so
        // the rate is exactly K.
        let d = make_zipf::<f64>(3, 0.0).unwrap();
        let r = numeric_rmsc(0.0, &d, 3, 1e-6).unwrap();
        assert!((r.rate - 3.0).abs() < 1e-6, "{}", r.rate);
        assert!(r.gap_certificate <= 1e-6);
        for s in 1..=3 {
            for f in 1..=3 {
                assert!(r.y.row(f - 1)[s] < 1e-7);
            }
        }
    }

    #[test]
    fn full_budget_reaches_zero_rate() {
        let d = make_zipf::<f64>(3, 1.0).unwrap();
        let r = numeric_rmsc(3.0, &d, 3, 1e-6).unwrap();
        assert!(r.rate.abs() < 1e-7, "{}", r.rate);
    }

    #[test]
    fn uniform_unit_budget_matches_known_optimum() {
        let d = make_zipf::<f64>(3, 0.0).unwrap();
        let r = numeric_rmsc(1.0, &d, 3, 1e-6).unwrap();
        assert!((r.rate - 1.0).abs() < 1e-5, "{}", r.rate);
    }

    #[test]
    fn oracle_placement_achieves_oracle_rate() {
        let d = make_zipf::<f64>(4, 1.0).unwrap();
        let r = numeric_rmsc(1.5, &d, 4, 1e-8).unwrap();
        let achieved = expected_rate_exact(&r.y, &d).unwrap();
        // The repaired matrix is feasible, so its exact rate can only sit
        // above the LP optimum, and by no more than the certificate noise.
        assert!(achieved >= r.rate - 1e-7);
        assert!((achieved - r.rate).abs() < 1e-5, "{achieved} vs {}", r.rate);
    }

    #[test]
    fn rejects_bad_arguments() {
        let d = make_zipf::<f64>(3, 1.0).unwrap();
        assert!(numeric_rmsc(-0.5, &d, 3, 1e-6).is_err());
        assert!(numeric_rmsc(3.5, &d, 3, 1e-6).is_err());
        assert!(numeric_rmsc(1.0, &d, 0, 1e-6).is_err());
        assert!(numeric_rmsc(1.0, &d, 3, 0.0).is_err());
        assert!(numeric_rmsc(1.0, &d, 3, f64::NAN).is_err());
    }

    #[test]
    fn unreachable_tolerance_reports_best_bound() {
        let d = make_zipf::<f64>(3, 1.0).unwrap();
        let err = numeric_rmsc(1.0, &d, 3, 1e-300).unwrap_err();
        match err {
            Error::Convergence { best_bound, .. } => {
                let b = best_bound.expect("dual bound present");
                assert!(b.is_finite());
            }
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }
}
