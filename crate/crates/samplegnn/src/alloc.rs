//! Splits a global FLOP budget across the sparse products of a multi-layer
//! network by deciding how many top pairs each layer keeps.
//!
//! The objective is the captured norm mass: for each layer, the sum of the
//! kept pair products divided by that layer's Frobenius normalizer. The
//! constraint charges each kept pair its column's stored entries times the
//! layer's dense width, and caps the total at `C` times the full cost.
//!
//! [`greedy_allocate`] starts from full selections and repeatedly removes one
//! step quantum of tail pairs from the layer that loses the least normalized
//! mass, until the budget holds. [`exhaustive_allocate`] solves small
//! instances exactly over the same step grid and is the test oracle for the
//! greedy path. [`auc_match_score`] measures how well an old selection ranks
//! against fresh pair products, which is what makes selection caching safe to
//! monitor.

use crate::approx::TopKSelection;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AllocError {
    #[error("profiles must be non-empty and share one pair count")]
    MismatchedProfiles,
    #[error("exhaustive search space has {points} points, over the {limit} cap")]
    SearchTooLarge { points: u128, limit: u128 },
    #[error("overlap score undefined for k = {k} of {n} pairs")]
    DegenerateAuc { k: usize, n: usize },
}

/// Per-layer inputs to the allocator.
#[derive(Debug, Clone)]
pub struct LayerProfile {
    pub layer_id: usize,
    /// Column-row norm product per pair, in pair order.
    pub products: Vec<f64>,
    /// Stored entries per operator column; the cost of keeping a pair.
    pub nnz_per_col: Vec<usize>,
    /// Dense operand width of this layer's product.
    pub d: usize,
    /// Frobenius normalizer (operator norm times gradient norm) for the
    /// objective; non-positive values fall back to 1.
    pub frob_denominator: f64,
}

impl LayerProfile {
    fn denom(&self) -> f64 {
        if self.frob_denominator > 0.0 {
            self.frob_denominator
        } else {
            1.0
        }
    }
}

/// The allocator's decision.
#[derive(Debug, Clone)]
pub struct AllocationPlan {
    /// Pairs kept per layer, aligned with the profile slice.
    pub k_per_layer: Vec<usize>,
    /// The kept pair indices per layer, ascending.
    pub selections: Vec<TopKSelection>,
    pub budget_c: f64,
    /// Step quantum actually used: `max(1, round(alpha * n_pairs))`.
    pub step: usize,
    /// Multiply-add cost of executing the plan's selections.
    pub achieved_flops: u64,
    /// `floor(C * full cost)`; what the constraint compares against.
    pub budget_flops: u64,
    /// False when the floors were reached with the budget still exceeded.
    pub feasible: bool,
}

/// Multiply-add cost of running each layer's product over its selection.
pub fn flops_of_plan(profiles: &[LayerProfile], selections: &[TopKSelection]) -> u64 {
    assert_eq!(profiles.len(), selections.len(), "plan shape mismatch");
    profiles
        .iter()
        .zip(selections)
        .map(|(p, sel)| {
            sel.indices
                .iter()
                .map(|&i| p.nnz_per_col[i] as u64)
                .sum::<u64>()
                * p.d as u64
        })
        .sum()
}

/// Captured normalized mass of the selections under the profiles.
pub fn objective_value(profiles: &[LayerProfile], selections: &[TopKSelection]) -> f64 {
    assert_eq!(profiles.len(), selections.len(), "plan shape mismatch");
    profiles
        .iter()
        .zip(selections)
        .map(|(p, sel)| {
            sel.indices.iter().map(|&i| p.products[i]).sum::<f64>() / p.denom()
        })
        .sum()
}

/// Per-layer ranking with prefix sums over the ranked order.
struct Ranked {
    /// Pair indices sorted by product descending, index ascending on ties.
    order: Vec<usize>,
    /// `mass[r]` = sum of the first `r` ranked products.
    mass: Vec<f64>,
    /// `nnz[r]` = stored entries of the first `r` ranked columns.
    nnz: Vec<u64>,
}

fn rank(profile: &LayerProfile) -> Ranked {
    let n = profile.products.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&i, &j| {
        profile.products[j]
            .total_cmp(&profile.products[i])
            .then(i.cmp(&j))
    });
    let mut mass = Vec::with_capacity(n + 1);
    let mut nnz = Vec::with_capacity(n + 1);
    mass.push(0.0);
    nnz.push(0u64);
    for &i in &order {
        mass.push(mass.last().unwrap() + profile.products[i]);
        nnz.push(nnz.last().unwrap() + profile.nnz_per_col[i] as u64);
    }
    Ranked { order, mass, nnz }
}

fn selection_from_rank(ranked: &Ranked, k: usize) -> TopKSelection {
    let mut indices = ranked.order[..k].to_vec();
    indices.sort_unstable();
    TopKSelection { indices }
}

fn validate(profiles: &[LayerProfile]) -> Result<usize, AllocError> {
    let Some(first) = profiles.first() else {
        return Err(AllocError::MismatchedProfiles);
    };
    let n = first.products.len();
    if n == 0 {
        return Err(AllocError::MismatchedProfiles);
    }
    for p in profiles {
        if p.products.len() != n || p.nnz_per_col.len() != n {
            return Err(AllocError::MismatchedProfiles);
        }
    }
    Ok(n)
}

fn full_cost(profiles: &[LayerProfile]) -> u64 {
    profiles
        .iter()
        .map(|p| p.nnz_per_col.iter().map(|&z| z as u64).sum::<u64>() * p.d as u64)
        .sum()
}

fn step_quantum(alpha: f64, n: usize) -> usize {
    ((alpha * n as f64).round() as usize).max(1)
}

/// Greedy budget allocation.
///
/// All layers start with every pair kept. While the running cost exceeds
/// `c` times the full cost, the layer whose next step quantum of tail pairs
/// carries the least normalized mass gives that quantum up (ties go to the
/// lowest layer id); a layer never drops below one quantum. If every layer
/// reaches its floor with the budget still exceeded, the floor plan comes
/// back flagged infeasible.
///
/// `c = 1` means the budget equals the full cost, so the loop never runs and
/// every pair stays selected.
pub fn greedy_allocate(
    profiles: &[LayerProfile],
    c: f64,
    alpha: f64,
) -> Result<AllocationPlan, AllocError> {
    assert!(c > 0.0 && c <= 1.0, "budget fraction must be in (0, 1]");
    assert!(alpha > 0.0 && alpha <= 1.0, "step fraction must be in (0, 1]");
    let n = validate(profiles)?;
    let step = step_quantum(alpha, n);
    let ranked: Vec<Ranked> = profiles.iter().map(rank).collect();

    let total = full_cost(profiles);
    let budget_real = c * total as f64;
    let mut k: Vec<usize> = vec![n; profiles.len()];
    let mut cost = total;

    // Profiles arrive in ascending layer order, so first-wins on equal mass
    // realizes the lowest-layer-id tie rule.
    while (cost as f64) > budget_real {
        let mut best: Option<(f64, usize)> = None;
        for (l, p) in profiles.iter().enumerate() {
            if k[l] < 2 * step {
                continue;
            }
            let lost_mass = (ranked[l].mass[k[l]] - ranked[l].mass[k[l] - step]) / p.denom();
            if best.is_none_or(|(m, _)| lost_mass < m) {
                best = Some((lost_mass, l));
            }
        }
        let Some((_, l)) = best else {
            break; // every layer is at its floor
        };
        let freed = (ranked[l].nnz[k[l]] - ranked[l].nnz[k[l] - step]) * profiles[l].d as u64;
        cost -= freed;
        k[l] -= step;
    }

    let selections: Vec<TopKSelection> = ranked
        .iter()
        .zip(&k)
        .map(|(r, &kl)| selection_from_rank(r, kl))
        .collect();
    let achieved = flops_of_plan(profiles, &selections);
    debug_assert_eq!(achieved, cost);
    Ok(AllocationPlan {
        k_per_layer: k,
        selections,
        budget_c: c,
        step,
        achieved_flops: achieved,
        budget_flops: budget_real.floor() as u64,
        feasible: (achieved as f64) <= budget_real,
    })
}

/// Uniform baseline: every layer keeps `round(c * n)` pairs (at least one
/// step quantum). If that overshoots the budget, all layers shed one quantum
/// at a time together until the plan fits or floors out.
pub fn uniform_allocate(
    profiles: &[LayerProfile],
    c: f64,
    alpha: f64,
) -> Result<AllocationPlan, AllocError> {
    assert!(c > 0.0 && c <= 1.0, "budget fraction must be in (0, 1]");
    assert!(alpha > 0.0 && alpha <= 1.0, "step fraction must be in (0, 1]");
    let n = validate(profiles)?;
    let step = step_quantum(alpha, n);
    let ranked: Vec<Ranked> = profiles.iter().map(rank).collect();
    let total = full_cost(profiles);
    let budget_real = c * total as f64;

    let k0 = ((c * n as f64).round() as usize).clamp(step.min(n), n);
    let mut k: Vec<usize> = vec![k0; profiles.len()];
    let cost_of = |k: &[usize]| -> u64 {
        ranked
            .iter()
            .zip(profiles)
            .zip(k)
            .map(|((r, p), &kl)| r.nnz[kl] * p.d as u64)
            .sum()
    };
    let mut cost = cost_of(&k);
    while (cost as f64) > budget_real {
        let mut moved = false;
        for kl in &mut k {
            if *kl >= 2 * step {
                *kl -= step;
                moved = true;
            }
        }
        if !moved {
            break;
        }
        cost = cost_of(&k);
    }

    let selections: Vec<TopKSelection> = ranked
        .iter()
        .zip(&k)
        .map(|(r, &kl)| selection_from_rank(r, kl))
        .collect();
    let achieved = flops_of_plan(profiles, &selections);
    Ok(AllocationPlan {
        k_per_layer: k,
        selections,
        budget_c: c,
        step,
        achieved_flops: achieved,
        budget_flops: budget_real.floor() as u64,
        feasible: (achieved as f64) <= budget_real,
    })
}

/// Exact optimum over the same step grid the greedy search walks, by full
/// enumeration. Errors out above `max_points` grid points. Ties in the
/// objective keep the lexicographically largest keep counts.
pub fn exhaustive_allocate(
    profiles: &[LayerProfile],
    c: f64,
    alpha: f64,
    max_points: u128,
) -> Result<AllocationPlan, AllocError> {
    assert!(c > 0.0 && c <= 1.0, "budget fraction must be in (0, 1]");
    assert!(alpha > 0.0 && alpha <= 1.0, "step fraction must be in (0, 1]");
    let n = validate(profiles)?;
    let step = step_quantum(alpha, n);
    let ranked: Vec<Ranked> = profiles.iter().map(rank).collect();
    let total = full_cost(profiles);
    let budget_real = c * total as f64;

    // Grid per layer: n, n - step, ..., down to the floor (>= step).
    let grid: Vec<usize> = {
        let mut g = Vec::new();
        let mut v = n;
        loop {
            g.push(v);
            if v < 2 * step {
                break;
            }
            v -= step;
        }
        g
    };
    let points = (grid.len() as u128).pow(profiles.len() as u32);
    if points > max_points {
        return Err(AllocError::SearchTooLarge {
            points,
            limit: max_points,
        });
    }

    let floor_k = *grid.last().unwrap();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut point = vec![0usize; profiles.len()];
    'outer: loop {
        let ks: Vec<usize> = point.iter().map(|&g| grid[g]).collect();
        let cost: u64 = ranked
            .iter()
            .zip(profiles)
            .zip(&ks)
            .map(|((r, p), &kl)| r.nnz[kl] * p.d as u64)
            .sum();
        if (cost as f64) <= budget_real {
            let obj: f64 = ranked
                .iter()
                .zip(profiles)
                .zip(&ks)
                .map(|((r, p), &kl)| r.mass[kl] / p.denom())
                .sum();
            let take = match &best {
                None => true,
                Some((bo, bk)) => obj > *bo || (obj == *bo && ks > *bk),
            };
            if take {
                best = Some((obj, ks));
            }
        }
        // Mixed-radix increment over the grid.
        for slot in (0..point.len()).rev() {
            point[slot] += 1;
            if point[slot] < grid.len() {
                continue 'outer;
            }
            point[slot] = 0;
        }
        break;
    }

    let (k, feasible) = match best {
        Some((_, ks)) => (ks, true),
        None => (vec![floor_k; profiles.len()], false),
    };
    let selections: Vec<TopKSelection> = ranked
        .iter()
        .zip(&k)
        .map(|(r, &kl)| selection_from_rank(r, kl))
        .collect();
    let achieved = flops_of_plan(profiles, &selections);
    Ok(AllocationPlan {
        k_per_layer: k,
        selections,
        budget_c: c,
        step,
        achieved_flops: achieved,
        budget_flops: budget_real.floor() as u64,
        feasible,
    })
}

/// Ranking quality of an old selection against fresh products: treats the old
/// membership as binary labels, the fresh products as scores, and returns the
/// area under the ROC curve with tied scores contributing half.
///
/// Undefined (errors) when the old selection is empty or covers every pair.
pub fn auc_match_score(previous: &TopKSelection, products: &[f64]) -> Result<f64, AllocError> {
    let n = products.len();
    let k = previous.k();
    if k == 0 || k >= n {
        return Err(AllocError::DegenerateAuc { k, n });
    }
    let mut is_member = vec![false; n];
    for &i in &previous.indices {
        assert!(i < n, "selection index out of range");
        is_member[i] = true;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&i, &j| products[i].total_cmp(&products[j]));
    // Average ranks over tied scores make ties contribute exactly one half.
    let mut rank_sum_members = 0.0f64;
    let mut lo = 0;
    while lo < n {
        let mut hi = lo + 1;
        while hi < n && products[order[hi]] == products[order[lo]] {
            hi += 1;
        }
        let avg_rank = (lo + 1 + hi) as f64 / 2.0; // ranks are 1-based
        for &idx in &order[lo..hi] {
            if is_member[idx] {
                rank_sum_members += avg_rank;
            }
        }
        lo = hi;
    }
    let k_f = k as f64;
    let auc = (rank_sum_members - k_f * (k_f + 1.0) / 2.0) / (k_f * (n - k) as f64);
    Ok(auc)
}
