//! Exact and greedy box-cover solvers used by the content estimators.
//!
//! Covers use half-open boxes `[x1, x1+r) x [x2, x2+r)` with integer corners
//! and integer sides `r >= 1`. Whether a real point lies in such a box
//! depends only on its floored coordinates, so both solvers work on unit
//! pixels.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoverError {
    #[error("exact cover budget exceeded: {count} pixels > {budget}")]
    BudgetExceeded { count: usize, budget: usize },
}

/// Default point budget for the exact solver.
pub const EXACT_SMALL_BUDGET: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverBox {
    pub corner: [i64; 2],
    pub side: i64,
}

impl CoverBox {
    pub fn contains(&self, p: [i64; 2]) -> bool {
        p[0] >= self.corner[0]
            && p[0] < self.corner[0] + self.side
            && p[1] >= self.corner[1]
            && p[1] < self.corner[1] + self.side
    }
}

fn box_cost(side: i64, n: u32, rho: f64) -> f64 {
    (side as f64 / (n as f64).exp()).powf(rho)
}

/// True restricted infimum of `sum (side_i / e^n)^rho` over integer-corner,
/// integer-side covers, by branch and bound over candidate boxes.
///
/// Candidates are boxes anchored at pixel coordinate pairs with sides taken
/// from pairwise extents: any optimal cover can be normalized to that form
/// by sliding each box down/left until it touches its pixels.
pub fn exact_small_cover(
    pixels: &[[i64; 2]],
    n: u32,
    rho: f64,
    budget: usize,
) -> Result<(f64, Vec<CoverBox>), CoverError> {
    let mut pts: Vec<[i64; 2]> = pixels.to_vec();
    pts.sort_unstable();
    pts.dedup();
    let k = pts.len();
    if k == 0 {
        return Ok((0.0, Vec::new()));
    }
    if k > budget {
        return Err(CoverError::BudgetExceeded { count: k, budget });
    }
    assert!(k <= 64, "mask width");

    let mut t_vals: Vec<i64> = pts.iter().map(|p| p[0]).collect();
    t_vals.sort_unstable();
    t_vals.dedup();
    let mut x_vals: Vec<i64> = pts.iter().map(|p| p[1]).collect();
    x_vals.sort_unstable();
    x_vals.dedup();
    let mut sides: Vec<i64> = Vec::new();
    for vals in [&t_vals, &x_vals] {
        for i in 0..vals.len() {
            for j in i..vals.len() {
                sides.push(vals[j] - vals[i] + 1);
            }
        }
    }
    sides.sort_unstable();
    sides.dedup();

    // Enumerate candidates, keeping the cheapest box per coverage mask.
    let full: u64 = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
    let mut best_by_mask: HashMap<u64, (f64, CoverBox)> = HashMap::new();
    for &ct in &t_vals {
        for &cx in &x_vals {
            for &s in &sides {
                let b = CoverBox {
                    corner: [ct, cx],
                    side: s,
                };
                let mut mask = 0u64;
                for (i, &p) in pts.iter().enumerate() {
                    if b.contains(p) {
                        mask |= 1 << i;
                    }
                }
                if mask == 0 {
                    continue;
                }
                let cost = box_cost(s, n, rho);
                match best_by_mask.get(&mask) {
                    Some((c, _)) if *c <= cost => {}
                    _ => {
                        best_by_mask.insert(mask, (cost, b));
                    }
                }
            }
        }
    }
    let mut candidates: Vec<(u64, f64, CoverBox)> = best_by_mask
        .into_iter()
        .map(|(m, (c, b))| (m, c, b))
        .collect();
    candidates.sort_by(|a, b| a.1.total_cmp(&b.1));
    // Drop candidates dominated by a cheaper-or-equal superset mask.
    let mut kept: Vec<(u64, f64, CoverBox)> = Vec::with_capacity(candidates.len());
    'outer: for c in candidates {
        for k2 in &kept {
            if c.0 & k2.0 == c.0 && k2.1 <= c.1 {
                continue 'outer;
            }
        }
        kept.push(c);
    }

    // Per-pixel candidate lists, cheapest first.
    let mut covers: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (idx, (mask, _, _)) in kept.iter().enumerate() {
        for (i, item) in covers.iter_mut().enumerate() {
            if mask & (1 << i) != 0 {
                item.push(idx);
            }
        }
    }

    // Greedy seed for the initial upper bound.
    let (seed_cost, seed_cover) = greedy_over_candidates(&kept, full);

    struct Search<'a> {
        kept: &'a [(u64, f64, CoverBox)],
        covers: &'a [Vec<usize>],
        best_cost: f64,
        best_cover: Vec<usize>,
        seen: HashMap<u64, f64>,
        stack: Vec<usize>,
        full: u64,
    }
    impl Search<'_> {
        fn dfs(&mut self, covered: u64, cost: f64) {
            if cost >= self.best_cost {
                return;
            }
            if covered == self.full {
                self.best_cost = cost;
                self.best_cover = self.stack.clone();
                return;
            }
            if let Some(&c) = self.seen.get(&covered) {
                if c <= cost {
                    return;
                }
            }
            self.seen.insert(covered, cost);
            let p = (!covered).trailing_zeros() as usize;
            for &ci in &self.covers[p] {
                let (mask, w, _) = self.kept[ci];
                // Candidates are cost-sorted; nothing later can improve.
                if cost + w >= self.best_cost {
                    break;
                }
                self.stack.push(ci);
                self.dfs(covered | mask, cost + w);
                self.stack.pop();
            }
        }
    }
    let mut search = Search {
        kept: &kept,
        covers: &covers,
        best_cost: seed_cost,
        best_cover: seed_cover,
        seen: HashMap::new(),
        stack: Vec::new(),
        full,
    };
    search.dfs(0, 0.0);
    let boxes = search.best_cover.iter().map(|&i| kept[i].2).collect();
    Ok((search.best_cost, boxes))
}

fn greedy_over_candidates(candidates: &[(u64, f64, CoverBox)], full: u64) -> (f64, Vec<usize>) {
    let mut covered = 0u64;
    let mut cost = 0.0;
    let mut picked = Vec::new();
    while covered != full {
        let mut best: Option<(f64, usize, u64)> = None;
        for (i, (mask, w, _)) in candidates.iter().enumerate() {
            let new = (mask | covered) ^ covered;
            let gain = new.count_ones();
            if gain == 0 {
                continue;
            }
            let ratio = w / gain as f64;
            match best {
                Some((r, _, _)) if r <= ratio => {}
                _ => best = Some((ratio, i, new)),
            }
        }
        let (_, i, new) = best.expect("some candidate covers an uncovered pixel");
        covered |= new | candidates[i].0;
        cost += candidates[i].1;
        picked.push(i);
    }
    (cost, picked)
}

/// Greedy weighted cover over the dyadic aligned box hierarchy; the
/// single-scale tilings are part of the comparison pool, so the result never
/// exceeds the single-scale cost.
pub fn greedy_multiscale_cover(pixels: &[[i64; 2]], n: u32, rho: f64) -> f64 {
    let mut pts: Vec<[i64; 2]> = pixels.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.is_empty() {
        return 0.0;
    }
    let scales = dyadic_scales(n);
    // Candidate boxes per scale: aligned boxes holding at least one pixel.
    let mut masks: Vec<(f64, Vec<u32>)> = Vec::new(); // (cost, member pixel ids)
    let mut single_scale_best = f64::INFINITY;
    for &r in &scales {
        let w = box_cost(r, n, rho);
        let mut groups: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in pts.iter().enumerate() {
            groups
                .entry((p[0].div_euclid(r), p[1].div_euclid(r)))
                .or_default()
                .push(i as u32);
        }
        single_scale_best = single_scale_best.min(groups.len() as f64 * w);
        for (_, members) in groups {
            masks.push((w, members));
        }
    }
    // Lazy greedy: priorities only improve stalely, so re-check on pop.
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    #[derive(PartialEq)]
    struct P(f64, usize);
    impl Eq for P {}
    impl PartialOrd for P {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for P {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
        }
    }
    let mut covered = vec![false; pts.len()];
    let mut remaining = pts.len();
    let mut heap: BinaryHeap<Reverse<P>> = masks
        .iter()
        .enumerate()
        .map(|(i, (w, members))| Reverse(P(w / members.len() as f64, i)))
        .collect();
    let mut total = 0.0;
    while remaining > 0 {
        let Reverse(P(ratio, i)) = heap.pop().expect("heap nonempty while uncovered");
        let (w, members) = &masks[i];
        let gain = members.iter().filter(|&&m| !covered[m as usize]).count();
        if gain == 0 {
            continue;
        }
        let fresh = w / gain as f64;
        if fresh > ratio * (1.0 + 1e-12) {
            heap.push(Reverse(P(fresh, i)));
            continue;
        }
        total += w;
        for &m in members {
            if !covered[m as usize] {
                covered[m as usize] = true;
                remaining -= 1;
            }
        }
    }
    total.min(single_scale_best)
}

/// Dyadic side lengths `1, 2, 4, ..., 2^ceil(n log2 e)`.
pub fn dyadic_scales(n: u32) -> Vec<i64> {
    let k_max = (n as f64 * std::f64::consts::E.log2()).ceil() as u32;
    (0..=k_max).map(|k| 1i64 << k).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn empty_set_costs_nothing() {
        let (cost, boxes) = exact_small_cover(&[], 1, 1.0, 24).unwrap();
        assert_eq!(cost, 0.0);
        assert!(boxes.is_empty());
        assert_eq!(greedy_multiscale_cover(&[], 1, 1.0), 0.0);
    }

    #[test]
    fn single_point_unit_box() {
        // One point: one unit box is optimal, cost e^{-n rho}.
        for n in [1u32, 2, 3] {
            for rho in [0.5, 1.0, 1.7] {
                let expect = (-(n as f64) * rho).exp();
                let (cost, boxes) = exact_small_cover(&[[3, 1]], n, rho, 24).unwrap();
                assert_relative_eq!(cost, expect, epsilon = 1e-12);
                assert_eq!(boxes[0].side, 1);
                assert_relative_eq!(
                    greedy_multiscale_cover(&[[3, 1]], n, rho),
                    expect,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn two_far_points_prefer_two_unit_boxes() {
        // Distance 10 apart at rho = 1: two unit boxes cost 2/e^n, one big
        // box costs 11/e^n.
        let pts = [[0, 0], [10, 0]];
        let (cost, boxes) = exact_small_cover(&pts, 2, 1.0, 24).unwrap();
        assert_relative_eq!(cost, 2.0 * (-2f64).exp(), epsilon = 1e-12);
        assert_eq!(boxes.len(), 2);
    }

    #[test]
    fn cluster_prefers_one_box_at_small_rho() {
        // rho = 0.2: cost grows slowly with side, merging wins.
        let pts = [[0, 0], [2, 1], [1, 2]];
        let (cost, boxes) = exact_small_cover(&pts, 1, 0.2, 24).unwrap();
        assert_eq!(boxes.len(), 1);
        assert_eq!(boxes[0].side, 3);
        assert_relative_eq!(cost, (3.0 / 1f64.exp()).powf(0.2), epsilon = 1e-12);
    }

    /// Exhaustive subset-DP oracle, algorithmically independent of the
    /// branch-and-bound: dp[mask] = min cost to cover `mask`.
    fn subset_dp_oracle(pts: &[[i64; 2]], n: u32, rho: f64) -> f64 {
        let k = pts.len();
        assert!(k <= 16);
        // Box catalogue: corners at pixel coordinate pairs, pairwise sides.
        let mut sides = Vec::new();
        for a in pts {
            for b in pts {
                sides.push((a[0] - b[0]).abs() + 1);
                sides.push((a[1] - b[1]).abs() + 1);
            }
        }
        sides.sort_unstable();
        sides.dedup();
        let mut boxes: Vec<(u32, f64)> = Vec::new();
        for a in pts {
            for b in pts {
                for &s in &sides {
                    let bx = CoverBox {
                        corner: [a[0], b[1]],
                        side: s,
                    };
                    let mut mask = 0u32;
                    for (i, &p) in pts.iter().enumerate() {
                        if bx.contains(p) {
                            mask |= 1 << i;
                        }
                    }
                    if mask != 0 {
                        boxes.push((mask, box_cost(s, n, rho)));
                    }
                }
            }
        }
        let full = (1usize << k) - 1;
        let mut dp = vec![f64::INFINITY; full + 1];
        dp[0] = 0.0;
        for mask in 0..=full {
            if dp[mask].is_infinite() {
                continue;
            }
            for &(bm, w) in &boxes {
                let next = mask | bm as usize;
                if dp[next] > dp[mask] + w {
                    dp[next] = dp[mask] + w;
                }
            }
        }
        dp[full]
    }

    #[test]
    fn branch_and_bound_matches_subset_dp() {
        // Deterministic pseudo-random instances via the noise stream.
        let stream = crate::noise::NoiseStream::new(2024, 0);
        for case in 0..60u64 {
            let k = 3 + (stream.uniform(case, 1000) * 8.0) as usize;
            let mut pts = Vec::with_capacity(k);
            for i in 0..k {
                let t = (stream.uniform(case, 2 * i as u64) * 20.0) as i64;
                let x = (stream.uniform(case, 2 * i as u64 + 1) * 40.0) as i64 - 20;
                pts.push([t, x]);
            }
            pts.sort_unstable();
            pts.dedup();
            for rho in [0.4, 1.0, 1.6] {
                let (bb, _) = exact_small_cover(&pts, 3, rho, 24).unwrap();
                let oracle = subset_dp_oracle(&pts, 3, rho);
                assert!(
                    (bb - oracle).abs() <= 1e-9 * oracle.max(1e-12),
                    "case {case} rho {rho}: bb {bb} oracle {oracle} pts {pts:?}"
                );
            }
        }
    }

    #[test]
    fn strategy_ordering_on_random_instances() {
        let stream = crate::noise::NoiseStream::new(7, 1);
        for case in 0..40u64 {
            let k = 2 + (stream.uniform(case, 500) * 10.0) as usize;
            let mut pts = Vec::with_capacity(k);
            for i in 0..k {
                let t = (stream.uniform(case, 2 * i as u64) * 15.0) as i64;
                let x = (stream.uniform(case, 2 * i as u64 + 1) * 30.0) as i64 - 15;
                pts.push([t, x]);
            }
            for rho in [0.5, 1.0, 1.5] {
                let (exact, _) = exact_small_cover(&pts, 2, rho, 24).unwrap();
                let greedy = greedy_multiscale_cover(&pts, 2, rho);
                assert!(exact <= greedy + 1e-12, "exact {exact} > greedy {greedy}");
            }
        }
    }

    #[test]
    fn budget_enforced() {
        let pts: Vec<[i64; 2]> = (0..30).map(|i| [i, 0]).collect();
        assert!(matches!(
            exact_small_cover(&pts, 1, 1.0, 24),
            Err(CoverError::BudgetExceeded { .. })
        ));
    }
}
