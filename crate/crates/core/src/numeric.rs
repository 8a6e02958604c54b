//! Small numerical helpers shared by the games and solvers.
//!
//! Everything here works on plain `f64` slices. Callers are responsible for
//! the conventions around `+inf` losses; the helpers only promise to compare
//! infinities consistently.

/// Number of grid cells used for one-dimensional decision searches.
pub const GRID_CELLS: usize = 1024;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// `ln sum exp(x_i)`, ignoring `-inf` terms. Returns `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + s.ln()
}

/// Golden-section search for a minimum of a unimodal `f` on `[a, b]`.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Minimizes `f` on `[0, 1]`: a uniform grid of [`GRID_CELLS`] cells, then a
/// golden-section refinement around the best grid point. Endpoints are kept
/// when they win.
pub fn minimize_unit_interval<F: FnMut(f64) -> f64>(mut f: F) -> (f64, f64) {
    let n = GRID_CELLS;
    let mut best_i = 0;
    let mut best = f64::INFINITY;
    let mut values = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let x = i as f64 / n as f64;
        let v = f(x);
        values.push(v);
        if v < best || (best.is_nan() && !v.is_nan()) {
            best = v;
            best_i = i;
        }
    }
    let lo = if best_i == 0 { 0.0 } else { (best_i - 1) as f64 / n as f64 };
    let hi = if best_i == n { 1.0 } else { (best_i + 1) as f64 / n as f64 };
    let (x, v) = golden_min(&mut f, lo, hi, 1e-15);
    if v < best {
        (x, v)
    } else {
        (best_i as f64 / n as f64, best)
    }
}

/// Finds the boundary of a monotone predicate on `[lo, hi]`.
///
/// `pred(lo)` is assumed false and `pred(hi)` true; returns a point within
/// `width` of the switch, biased to the side where the predicate holds.
pub fn bisect_predicate<F: FnMut(f64) -> bool>(mut pred: F, mut lo: f64, mut hi: f64, width: f64) -> f64 {
    for _ in 0..200 {
        if (hi - lo).abs() <= width {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Root of a function that is positive at `lo` and negative at `hi`.
pub fn bisect_sign_change<F: FnMut(f64) -> f64>(mut h: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            return mid;
        }
        let v = h(mid);
        if v.abs() <= tol && (hi - lo) <= 1e-13 {
            return mid;
        }
        if v > 0.0 {
            lo = mid;
        } else if v < 0.0 {
            hi = mid;
        } else {
            return mid;
        }
    }
    0.5 * (lo + hi)
}

/// All points of the barycentric lattice `{k / res : k in N^m, sum k = res}`
/// in lexicographic order of `k`.
pub fn simplex_lattice(m: usize, res: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut counts = vec![0usize; m];
    fn rec(i: usize, left: usize, counts: &mut Vec<usize>, res: usize, out: &mut Vec<Vec<f64>>) {
        let m = counts.len();
        if i == m - 1 {
            counts[i] = left;
            out.push(counts.iter().map(|&k| k as f64 / res as f64).collect());
            return;
        }
        for k in 0..=left {
            counts[i] = k;
            rec(i + 1, left - k, counts, res, out);
        }
    }
    if m == 0 {
        return out;
    }
    rec(0, res, &mut counts, res, &mut out);
    out
}

/// Number of lattice points `C(res + m - 1, m - 1)`.
pub fn lattice_size(m: usize, res: usize) -> usize {
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    for i in 1..m {
        num *= (res + i) as u128;
        den *= i as u128;
    }
    (num / den) as usize
}

/// Largest lattice resolution whose point count stays within `budget`.
pub fn lattice_resolution(m: usize, budget: usize) -> usize {
    let mut r = 1;
    while lattice_size(m, r + 1) <= budget && r < 1 << 20 {
        r += 1;
    }
    r.max(2)
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut css = 0.0;
    let mut tau = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Search directions inside the simplex tangent space: pairwise exchanges
/// `e_i - e_j` plus moves toward and away from each vertex.
fn simplex_directions(m: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for i in 0..m {
        for j in 0..m {
            if i != j {
                let mut d = vec![0.0; m];
                d[i] = 1.0;
                d[j] = -1.0;
                dirs.push(d);
            }
        }
    }
    if m > 2 {
        let share = 1.0 / (m - 1) as f64;
        for i in 0..m {
            let mut d = vec![-share; m];
            d[i] = 1.0;
            dirs.push(d.clone());
            dirs.push(d.iter().map(|x| -x).collect());
        }
    }
    dirs
}

/// Options for [`minimize_on_simplex`].
#[derive(Debug, Clone, Copy)]
pub struct SimplexSearch {
    /// Number of lattice points evaluated at each grid level.
    pub lattice_budget: usize,
    /// Descent stops once the step falls below this.
    pub min_step: f64,
    /// Hard cap on objective evaluations during descent.
    pub max_evals: usize,
}

impl Default for SimplexSearch {
    fn default() -> Self {
        SimplexSearch { lattice_budget: 400, min_step: 1e-14, max_evals: 200_000 }
    }
}

/// Minimizes `f` over the probability simplex in `m` dimensions.
///
/// Three grid levels (the full lattice, then two shrunken copies of it
/// centred on the incumbent) followed by exchange descent with step halving.
pub fn minimize_on_simplex<F: FnMut(&[f64]) -> f64>(mut f: F, m: usize, opts: SimplexSearch) -> (Vec<f64>, f64) {
    if m == 1 {
        let x = vec![1.0];
        let v = f(&x);
        return (x, v);
    }
    let res = lattice_resolution(m, opts.lattice_budget);
    let lattice = simplex_lattice(m, res);
    let mut best: Vec<f64> = vec![1.0 / m as f64; m];
    let mut best_v = f(&best);
    let mut scale = 1.0;
    for _level in 0..3 {
        let centre = best.clone();
        for node in &lattice {
            let x: Vec<f64> = centre.iter().zip(node).map(|(c, n)| c + scale * (n - c)).collect();
            let v = f(&x);
            if v < best_v {
                best_v = v;
                best = x;
            }
        }
        scale *= 2.0 / res as f64;
    }
    let dirs = simplex_directions(m);
    let mut step = scale.max(1.0 / res as f64);
    let mut evals = 0usize;
    while step > opts.min_step && evals < opts.max_evals {
        let mut improved = false;
        for d in &dirs {
            let mut tmax = f64::INFINITY;
            for (x, di) in best.iter().zip(d) {
                if *di < 0.0 {
                    tmax = tmax.min(x / -di);
                }
            }
            let t = step.min(tmax);
            if t <= 0.0 {
                continue;
            }
            let mut cand: Vec<f64> = best.iter().zip(d).map(|(x, di)| (x + t * di).max(0.0)).collect();
            renormalize(&mut cand);
            let v = f(&cand);
            evals += 1;
            if v < best_v {
                best_v = v;
                best = cand;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best, best_v)
}

/// Rescales non-negative weights to sum to one.
pub fn renormalize(x: &mut [f64]) {
    let s: f64 = x.iter().sum();
    if s > 0.0 {
        for v in x.iter_mut() {
            *v /= s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let xs = [0.1, -2.0, 3.5];
        let direct: f64 = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - direct).abs() < 1e-14);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[f64::NEG_INFINITY, 0.0]) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn golden_section_finds_parabola_vertex() {
        let (x, v) = minimize_unit_interval(|x| (x - 0.3).powi(2));
        assert!((x - 0.3).abs() < 1e-7);
        assert!(v < 1e-14);
    }

    #[test]
    fn interval_minimum_at_endpoint() {
        let (x, _) = minimize_unit_interval(|x| x);
        assert_eq!(x, 0.0);
        let (x, _) = minimize_unit_interval(|x| -x);
        assert_eq!(x, 1.0);
    }

    #[test]
    fn lattice_counts() {
        assert_eq!(simplex_lattice(3, 4).len(), lattice_size(3, 4));
        assert_eq!(lattice_size(3, 4), 15);
        assert_eq!(simplex_lattice(2, 10).len(), 11);
        for p in simplex_lattice(4, 3) {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_onto_simplex() {
        let p = project_to_simplex(&[0.5, 0.5, 0.5]);
        for x in &p {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
        let p = project_to_simplex(&[2.0, 0.0]);
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn simplex_minimizer_reaches_interior_target() {
        let target = [0.2, 0.5, 0.3];
        let (x, v) = minimize_on_simplex(
            |p| p.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum(),
            3,
            SimplexSearch::default(),
        );
        assert!(v < 1e-20, "{v}");
        for (a, b) in x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn bisection_locates_switch() {
        let x = bisect_predicate(|x| x >= 0.37, 0.0, 1.0, 1e-14);
        assert!((x - 0.37).abs() < 1e-13);
        let r = bisect_sign_change(|x| 0.25 - x * x, 0.0, 1.0, 0.0);
        assert!((r - 0.5).abs() < 1e-14);
    }
}
