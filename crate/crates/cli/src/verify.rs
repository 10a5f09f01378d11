//! Cross-validation battery behind the `verify` subcommand.
//!
//! Each check pits an independent derivation against the analytic solver:
//! gift wrapping against the monotone-chain hull, the delivery simulator
//! against the rate formula, the LP oracle against memory sharing. A report
//! lists one pass/fail line per invariant; the command exits nonzero if any
//! line fails.

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scc_cache::{
    canonical_to_matrix, enumerate_candidates, exhaustive_expected_rate, expand_subfiles,
    expected_rate_exact, monte_carlo_rate, numeric_rmsc, price_staircase, scc_deliver, solve_jrsm,
    solve_rmsc, verify_decodability, BaseCase, BaseSet, DemandVector, Distribution, Placement,
    PlacementMatrix, Staircase,
};
use serde::Serialize;

/// Demand-vector budget for the exhaustive checks; larger instances fall
/// back to sampling.
const EXHAUSTIVE_CAP: u64 = 1_000_000;
const SAMPLED_DEMANDS: usize = 10_000;

pub struct Params {
    pub trials: u64,
    pub seed: u64,
    pub tol: f64,
    pub inject_hull_bug: bool,
}

#[derive(Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Serialize)]
pub struct Report {
    pub passed: usize,
    pub failed: usize,
    pub checks: Vec<Check>,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

pub fn run(k: usize, dist: &Distribution, params: &Params) -> Result<Report> {
    let n = dist.n_files();
    let candidates = enumerate_candidates(k, dist)?;
    let set = scc_cache::build_base_set(k, n, &candidates)?;
    let stair = price_staircase(&set);

    let checks = vec![
        hull_check(&candidates, &set, params.inject_hull_bug),
        staircase_check(&stair),
        jrsm_structure_check(&set, &stair)?,
        gamma_sweep_check(&set, &stair)?,
        linearity_check(k, dist, &set)?,
        budget_check(&set)?,
        exhaustive_check(dist, &set)?,
        decodability_check(dist, &set, params.seed)?,
        simulation_check(dist, &set, params.trials, params.seed)?,
        oracle_check(k, dist, &set, params.tol)?,
    ];

    let failed = checks.iter().filter(|c| !c.pass).count();
    Ok(Report { passed: checks.len() - failed, failed, checks })
}

/// True when point `b` lies strictly below the line through `a` and `c`.
/// Written in exactly the library's cross-product form so borderline
/// decisions match it bit for bit.
fn below_chord(b: (f64, f64), a: (f64, f64), c: (f64, f64)) -> bool {
    b.1 * (c.0 - a.0) < a.1 * (c.0 - b.0) + c.1 * (b.0 - a.0)
}

/// Sorted candidate points with one survivor per storage value.
fn point_cloud(candidates: &[BaseCase<f64>]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = candidates.iter().map(|c| (c.m, c.r)).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    pts.dedup_by(|next, kept| next.0 == kept.0);
    pts
}

/// Strict lower hull by gift wrapping: from each hull point, walk to the
/// lowest-slope successor. Shares no traversal logic with the library's
/// monotone chain.
fn gift_wrap(candidates: &[BaseCase<f64>]) -> Vec<(f64, f64)> {
    let pts = point_cloud(candidates);
    let mut hull = vec![pts[0]];
    loop {
        let cur = *hull.last().expect("nonempty");
        let mut best: Option<(f64, f64)> = None;
        for &p in pts.iter().filter(|p| p.0 > cur.0) {
            best = Some(match best {
                None => p,
                // Strictly lower slope wins; a slope tie means collinear
                // points, where the farther one wins so interior collinear
                // candidates are skipped.
                Some(b) if below_chord(p, cur, b) => p,
                Some(b) if !below_chord(b, cur, p) && p.0 > b.0 => p,
                Some(b) => b,
            });
        }
        match best {
            Some(p) => hull.push(p),
            None => return hull,
        }
    }
}

/// The hull filter with the interpolation rule as the broken pseudocode
/// literally reads: the second coefficient is (M_i - M_j)/(M_j - M_c), so
/// the two weights sum to zero instead of one. Reachable only through
/// --inject-hull-bug; exists to prove the battery detects a wrong hull.
fn literal_filter(candidates: &[BaseCase<f64>]) -> Vec<(f64, f64)> {
    let mut pts = point_cloud(candidates);
    loop {
        let mut dropped = false;
        for i in 1..pts.len() - 1 {
            let (c, mid, j) = (pts[i - 1], pts[i], pts[i + 1]);
            let r_msh =
                (j.0 - mid.0) / (j.0 - c.0) * c.1 + (mid.0 - j.0) / (j.0 - c.0) * j.1;
            if mid.1 >= r_msh {
                pts.remove(i);
                dropped = true;
                break;
            }
        }
        if !dropped {
            return pts;
        }
    }
}

fn hull_check(candidates: &[BaseCase<f64>], set: &BaseSet, inject: bool) -> Check {
    let brute = gift_wrap(candidates);
    let claimed: Vec<(f64, f64)> = if inject {
        literal_filter(candidates)
    } else {
        set.cases().iter().map(|c| (c.m, c.r)).collect()
    };
    let pass = claimed == brute;
    let detail = if pass {
        format!("{} hull cases match gift wrapping exactly", brute.len())
    } else {
        format!(
            "filter kept {} cases, gift wrapping found {}",
            claimed.len(),
            brute.len()
        )
    };
    check("hull_matches_brute_force", pass, detail)
}

fn staircase_check(stair: &Staircase) -> Check {
    let ok = stair
        .segments
        .windows(2)
        .all(|w| w[0].gamma > w[1].gamma)
        && stair.segments.iter().all(|s| s.gamma > 0.0);
    let detail = format!(
        "{} segment prices, {} to {}",
        stair.segments.len(),
        stair.segments.first().map(|s| s.gamma).unwrap_or(0.0),
        stair.segments.last().map(|s| s.gamma).unwrap_or(0.0),
    );
    check("staircase_strictly_decreasing", ok, detail)
}

/// Binary matrix, one 1 per row, a single shared cached level, and the
/// uncached rows forming a prefix of the (ascending popularity) file order.
fn is_threshold_shape(y: &Placement) -> bool {
    let mut cached_level: Option<usize> = None;
    let mut seen_cached = false;
    for i in 0..y.n_files() {
        let row = y.row(i);
        let ones: Vec<usize> = row
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(s, _)| s)
            .collect();
        if ones.len() != 1 || row[ones[0]] != 1.0 {
            return false;
        }
        if ones[0] == 0 {
            if seen_cached {
                return false;
            }
        } else {
            seen_cached = true;
            match cached_level {
                None => cached_level = Some(ones[0]),
                Some(s) if s == ones[0] => {}
                Some(_) => return false,
            }
        }
    }
    true
}

fn jrsm_structure_check(set: &BaseSet, stair: &Staircase) -> Result<Check> {
    let g_max = stair.segments.first().map(|s| s.gamma).unwrap_or(1.0);
    let mut bad = 0usize;
    let points = 25;
    for i in 0..points {
        let gamma = 1.2 * g_max * i as f64 / (points - 1) as f64;
        let sol = solve_jrsm(gamma, set)?;
        if !is_threshold_shape(&sol.y) {
            bad += 1;
        }
    }
    let detail = if bad == 0 {
        format!("{points} priced solutions all have the threshold shape")
    } else {
        format!("{bad} of {points} priced solutions violate the threshold shape")
    };
    Ok(check("jrsm_threshold_structure", bad == 0, detail))
}

/// Sweeping the price over segment values, interior values, and the
/// extremes must select every hull case exactly once each, with breakpoint
/// ties resolved toward smaller storage.
fn gamma_sweep_check(set: &BaseSet, stair: &Staircase) -> Result<Check> {
    let cases = set.cases();
    let segs = &stair.segments;
    let mut hit = vec![false; cases.len()];
    let mut mismatches = Vec::new();

    let mut probe = |gamma: f64, expect_idx: usize, label: &str| -> Result<()> {
        let sol = solve_jrsm(gamma, set)?;
        match cases.iter().position(|c| c.m == sol.case.m) {
            Some(idx) => {
                hit[idx] = true;
                if idx != expect_idx {
                    mismatches.push(format!(
                        "{label} gamma={gamma}: picked m={}, expected m={}",
                        sol.case.m, cases[expect_idx].m
                    ));
                }
            }
            None => mismatches.push(format!("{label} gamma={gamma}: not a hull case")),
        }
        Ok(())
    };

    probe(1.5 * segs[0].gamma, 0, "above top")?;
    for i in 0..segs.len() {
        // The segment price itself ties its two endpoints; smaller storage
        // must win. Strictly between two segment prices the upper endpoint
        // of the steeper segment is the unique minimizer.
        probe(segs[i].gamma, i, "breakpoint")?;
        let below = if i + 1 < segs.len() { segs[i + 1].gamma } else { 0.0 };
        probe((segs[i].gamma + below) / 2.0, i + 1, "interior")?;
    }
    probe(0.0, cases.len() - 1, "free storage")?;

    let all_hit = hit.iter().all(|&h| h);
    let pass = all_hit && mismatches.is_empty();
    let detail = if pass {
        format!("price sweep selected all {} hull cases as predicted", cases.len())
    } else if !mismatches.is_empty() {
        mismatches.join("; ")
    } else {
        "price sweep missed some hull cases".to_string()
    };
    Ok(check("gamma_sweep_recovers_hull", pass, detail))
}

fn linearity_check(k: usize, dist: &Distribution, set: &BaseSet) -> Result<Check> {
    let n = dist.n_files();
    let mut worst = 0.0f64;
    for w in set.cases().windows(2) {
        let y1 = canonical_to_matrix::<f64>(w[0].placement, k, n)?;
        let y2 = canonical_to_matrix::<f64>(w[1].placement, k, n)?;
        for theta in [0.25, 0.5, 0.75] {
            let blend = PlacementMatrix::blend(&y1, &y2, theta)?;
            let exact = expected_rate_exact(&blend, dist)?;
            let linear = theta * w[0].r + (1.0 - theta) * w[1].r;
            worst = worst.max((exact - linear).abs());
        }
    }
    Ok(check(
        "memory_sharing_linear",
        worst <= 1e-9,
        format!("max |r(blend) - linear| = {worst:.3e}"),
    ))
}

fn budget_check(set: &BaseSet) -> Result<Check> {
    let n = set.n_files() as f64;
    let tol = 1e-12 * (1.0 + n);
    let mut worst = 0.0f64;
    for i in 0..=16 {
        let m = n * i as f64 / 16.0;
        let sol = solve_rmsc(m, set)?;
        worst = worst.max((sol.m_used - m).abs());
    }
    Ok(check(
        "budget_fully_used",
        worst <= tol,
        format!("max |m_used - M| = {worst:.3e}"),
    ))
}

fn exhaustive_check(dist: &Distribution, set: &BaseSet) -> Result<Check> {
    let n = dist.n_files();
    let k = set.k();
    let sweep = (n as u64).checked_pow(k as u32);
    if !sweep.is_some_and(|c| c <= EXHAUSTIVE_CAP) {
        return Ok(check(
            "rate_formula_vs_exhaustive",
            true,
            format!("skipped: {n}^{k} demand vectors exceed the exhaustive budget"),
        ));
    }
    let y = solve_rmsc(0.37 * n as f64, set)?.y;
    let exhaustive = exhaustive_expected_rate(&y, dist)?;
    let analytic = expected_rate_exact(&y, dist)?;
    let diff = (exhaustive - analytic).abs();
    Ok(check(
        "rate_formula_vs_exhaustive",
        diff <= 1e-11,
        format!("|simulated - analytic| = {diff:.3e} over {} demands", sweep.unwrap_or(0)),
    ))
}

fn decodability_check(dist: &Distribution, set: &BaseSet, seed: u64) -> Result<Check> {
    let n = dist.n_files();
    let k = set.k();
    let y = solve_rmsc(0.61 * n as f64, set)?.y;
    let sub = expand_subfiles(&y)?;

    let mut total = 0u64;
    let mut bad = 0u64;
    let sweep = (n as u64).checked_pow(k as u32);
    if sweep.is_some_and(|c| c <= EXHAUSTIVE_CAP) {
        let mut files = vec![1usize; k];
        loop {
            let d = DemandVector::new(files.clone(), n)?;
            total += 1;
            if !verify_decodability(&scc_deliver(&d, &sub)?) {
                bad += 1;
            }
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
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..SAMPLED_DEMANDS {
            let files: Vec<usize> = (0..k).map(|_| rng.random_range(1..=n)).collect();
            let d = DemandVector::new(files, n)?;
            total += 1;
            if !verify_decodability(&scc_deliver(&d, &sub)?) {
                bad += 1;
            }
        }
    }
    Ok(check(
        "delivery_decodable",
        bad == 0,
        format!("{bad} of {total} demand vectors failed to decode"),
    ))
}

fn simulation_check(
    dist: &Distribution,
    set: &BaseSet,
    trials: u64,
    seed: u64,
) -> Result<Check> {
    // Midway through the first hull segment part of the library is uncached,
    // so the per-demand rate actually varies and the z test has teeth.
    let cases = set.cases();
    let m = 0.5 * (cases[0].m + cases[1].m);
    let y = solve_rmsc(m, set)?.y;
    let exact = expected_rate_exact(&y, dist)?;
    let (estimate, stderr) = monte_carlo_rate(&y, dist, trials, seed)?;
    let (pass, detail) = if stderr > 0.0 {
        let z = (estimate - exact) / stderr;
        (z.abs() <= 4.0, format!("z = {z:.3} over {trials} trials"))
    } else {
        // Degenerate instances (every demand costs the same) have no
        // variance; the estimate must still match up to accumulation dust.
        (
            (estimate - exact).abs() <= 1e-9 * exact.abs().max(1.0),
            format!("zero variance, estimate {estimate} vs exact {exact}"),
        )
    };
    Ok(check("simulation_consistent", pass, detail))
}

fn oracle_check(k: usize, dist: &Distribution, set: &BaseSet, tol: f64) -> Result<Check> {
    let n = dist.n_files() as f64;
    let bound = 1e-3f64.max(2.0 * tol);
    let mut worst = 0.0f64;
    let mut beat = false;
    for frac in [0.15, 0.35, 0.55, 0.75, 0.95] {
        let m = frac * n;
        let analytic = solve_rmsc(m, set)?.rate;
        let oracle = numeric_rmsc(m, dist, k, tol)?;
        let scale = analytic.abs().max(1.0);
        worst = worst.max((oracle.rate - analytic).abs() / scale);
        if oracle.rate < analytic - tol * scale {
            beat = true;
        }
    }
    let pass = worst <= bound && !beat;
    let detail = if beat {
        "oracle undercut the hull optimum beyond tolerance".to_string()
    } else {
        format!("max relative disagreement {worst:.3e} over 5 budgets")
    };
    Ok(check("oracle_agrees", pass, detail))
}
