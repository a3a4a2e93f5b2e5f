//! Structure-agnostic reference computations used by `--verify` runs and the
//! test suites. None of these reuse the production solvers.

use crate::balancing::GridExchange;

/// Result of the grid search over the common final exchange `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSearchOptimum {
    pub r: f64,
    pub p_b: [f64; 3],
    pub objective: f64,
}

fn feasible(p_b: &[f64; 3]) -> bool {
    p_b[0] * p_b[1] >= 0.0 && p_b[1] * p_b[2] >= 0.0 && p_b[0] * p_b[2] >= 0.0
}

fn candidate(gx: &GridExchange, r: f64) -> Option<GridSearchOptimum> {
    let p_b = gx.p_g.map(|p| r - p);
    feasible(&p_b).then(|| GridSearchOptimum {
        r,
        p_b,
        objective: p_b.iter().map(|p| p.abs()).sum(),
    })
}

/// Scans `r` over `[min(p_g) - 1, max(p_g) + 1]` in steps of `1e-3`, checking
/// the sign constraints numerically at every point, then refines around each
/// local minimum of the scan with ten-times finer grids down to a `1e-10`
/// step and keeps the best.
///
/// Ties keep the lower `r`.
pub fn brute_force_min_battery_power(gx: &GridExchange) -> GridSearchOptimum {
    let lo = gx.p_g.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = gx.p_g.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let step = 1e-3;
    let count = ((hi - lo) / step).ceil() as usize;
    let coarse: Vec<Option<GridSearchOptimum>> = (0..=count).map(|k| candidate(gx, lo + k as f64 * step)).collect();
    let objective = |k: usize| coarse[k].map(|c| c.objective);

    let mut best: Option<GridSearchOptimum> = None;
    for (k, c) in coarse.iter().enumerate() {
        let Some(c) = c else { continue };
        let left_higher = k == 0 || objective(k - 1).is_none_or(|o| o > c.objective);
        let right_no_lower = k == count || objective(k + 1).is_none_or(|o| o >= c.objective);
        if left_higher && right_no_lower {
            let refined = refine(gx, *c, step);
            if best.is_none_or(|b| better(&refined, &b)) {
                best = Some(refined);
            }
        }
    }
    best.expect("r = lo is always feasible")
}

fn better(a: &GridSearchOptimum, b: &GridSearchOptimum) -> bool {
    a.objective < b.objective || (a.objective == b.objective && a.r < b.r)
}

fn refine(gx: &GridExchange, start: GridSearchOptimum, mut step: f64) -> GridSearchOptimum {
    let mut best = start;
    while step > 1e-10 {
        let fine = step / 10.0;
        let centre = best.r;
        if let Some(c) = scan(gx, (-10..=10).map(|k| centre + k as f64 * fine)) {
            if better(&c, &best) {
                best = c;
            }
        }
        step = fine;
    }
    best
}

fn scan(gx: &GridExchange, rs: impl Iterator<Item = f64>) -> Option<GridSearchOptimum> {
    let mut best: Option<GridSearchOptimum> = None;
    for r in rs {
        if let Some(c) = candidate(gx, r) {
            if best.is_none_or(|b| c.objective < b.objective) {
                best = Some(c);
            }
        }
    }
    best
}

/// Centralised per-cluster means of `values` under `labels`; `None` for
/// clusters with no members.
pub fn cluster_means(values: &[f64], labels: &[usize], m: usize) -> Vec<Option<f64>> {
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for (&v, &k) in values.iter().zip(labels) {
        sums[k] += v;
        counts[k] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect()
}

/// Centralised per-cluster sums.
pub fn cluster_sums(values: &[f64], labels: &[usize], m: usize) -> Vec<f64> {
    let mut sums = vec![0.0; m];
    for (&v, &k) in values.iter().zip(labels) {
        sums[k] += v;
    }
    sums
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn near_tied_rays_pick_the_cheaper_one() {
        // Charge-only costs 3.0005, discharge-only 2.9995.
        let o = brute_force_min_battery_power(&GridExchange::new([-1.0, 0.0005, 1.0]));
        assert!((o.objective - 2.9995).abs() < 1e-8, "{}", o.objective);
        assert!((o.r - 1.0).abs() < 1e-8);
    }

    #[test]
    fn grid_search_examples() {
        let o = brute_force_min_battery_power(&GridExchange::new([2.0, -1.0, 3.0]));
        assert!((o.objective - 5.0).abs() < 1e-8);
        assert!((o.r - 3.0).abs() < 1e-8);
        let o = brute_force_min_battery_power(&GridExchange::new([-2.0, 1.0, -3.0]));
        assert!((o.objective - 5.0).abs() < 1e-8);
        assert!((o.r + 3.0).abs() < 1e-8);
        // Both rays reach 3 here.
        let o = brute_force_min_battery_power(&GridExchange::new([-1.0, 0.0, 1.0]));
        assert!((o.objective - 3.0).abs() < 1e-8);
        let up = candidate(&GridExchange::new([-1.0, 0.0, 1.0]), 1.0).unwrap();
        assert!((up.objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn grouped_statistics() {
        let means = cluster_means(&[1.0, 2.0, 3.0, 10.0], &[0, 0, 0, 2], 3);
        assert_eq!(means, vec![Some(2.0), None, Some(10.0)]);
        assert_eq!(cluster_sums(&[1.0, 2.0, 3.0, 10.0], &[0, 0, 0, 2], 3), vec![6.0, 0.0, 10.0]);
    }
}
