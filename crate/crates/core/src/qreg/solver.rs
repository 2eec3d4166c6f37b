//! Exact check-loss minimization.
//!
//! The problem `min sum rho_tau(y_i - x_i'b)` is the linear program
//! `min tau*1'u + (1-tau)*1'v  s.t.  Xb + u - v = y,  u, v >= 0,  b free`,
//! solved here by a primal simplex on a compact tableau: the `v_i` columns
//! are the negatives of the `u_i` columns, so only `p + T` columns are stored.
//!
//! The simplex vertex is then polished by re-solving the `p` zero-residual
//! equations exactly, and a final edge walk moves along optimal flat edges
//! while the designated column's coefficient decreases. For a pure
//! intercept this returns the lower order statistic `y_(ceil(tau*T))`.

use nalgebra::{DMatrix, DVector};

use super::{check_loss, QregError};

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub coef: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

pub fn objective(x: &DMatrix<f64>, y: &[f64], tau: f64, coef: &[f64]) -> f64 {
    let b = DVector::from_column_slice(coef);
    let fitted = x * b;
    y.iter().zip(fitted.iter()).map(|(yi, fi)| check_loss_unchecked(yi - fi, tau)).sum()
}

#[inline]
fn check_loss_unchecked(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// Minimizes the summed check loss. `tiebreak` names a column whose
/// coefficient is pushed to the low end of the optimal set (usually the
/// intercept).
pub fn solve(x: &DMatrix<f64>, y: &[f64], tau: f64, tiebreak: Option<usize>) -> Result<LpSolution, QregError> {
    check_loss(0.0, tau)?;
    let (t, p) = x.shape();
    if y.len() != t {
        return Err(QregError::ShapeMismatch { rows: t, target: y.len() });
    }
    let (coef, pivots) = simplex(x, y, tau)?;
    let mut best = coef;
    let mut best_obj = objective(x, y, tau, &best);
    let ymax = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if p > 0 {
        if let Some((polished, basis)) = polish(x, y, &best) {
            let obj = objective(x, y, tau, &polished);
            if obj <= best_obj + 1e-9 * (1.0 + best_obj) {
                best = polished;
                best_obj = obj;
                let (walked, walked_obj) = edge_walk(x, y, tau, best.clone(), basis, tiebreak, ymax);
                if walked_obj <= best_obj + 1e-9 * (1.0 + best_obj) {
                    best = walked;
                    best_obj = walked_obj;
                }
            }
        }
    }
    Ok(LpSolution {
        coef: best,
        objective: best_obj,
        pivots,
    })
}

fn simplex(x: &DMatrix<f64>, y: &[f64], tau: f64) -> Result<(Vec<f64>, usize), QregError> {
    let (t, p) = x.shape();
    let w = p + t;
    // variables: 0..p coefficients (free), p..p+t u_i, p+t..p+2t v_i
    let mut tab = vec![0.0; t * w];
    let mut rhs = vec![0.0; t];
    let mut basis = vec![0usize; t];
    let mut is_basic = vec![false; p + 2 * t];
    // a coefficient that entered decreasing is basic as its negation
    let mut basic_sign = vec![1.0; t];
    for i in 0..t {
        let sgn = if y[i] >= 0.0 { 1.0 } else { -1.0 };
        for j in 0..p {
            tab[i * w + j] = sgn * x[(i, j)];
        }
        tab[i * w + p + i] = sgn;
        rhs[i] = sgn * y[i];
        basis[i] = if sgn > 0.0 { p + i } else { p + t + i };
        is_basic[basis[i]] = true;
    }
    let cost = |v: usize| -> f64 {
        if v < p {
            0.0
        } else if v < p + t {
            tau
        } else {
            1.0 - tau
        }
    };
    let mut d = vec![0.0; w];
    for (s, ds) in d.iter_mut().enumerate() {
        let z: f64 = (0..t).map(|i| cost(basis[i]) * tab[i * w + s]).sum();
        *ds = cost(s) - z;
    }

    let max_pivots = 50 * (t + p) + 100;
    let y_scale = 1.0 + y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let zero_tol = 1e-12 * y_scale;
    let loss_tol = 1e-12 * (1.0 + y.iter().map(|v| v.abs()).sum::<f64>());
    let mut bland = false;
    let mut degenerate_run = 0usize;
    let mut col = vec![0.0; t];
    for pivots in 0..max_pivots {
        bland = bland || degenerate_run > 30;
        // the loss is never negative, so a zero loss is optimal whatever
        // the reduced costs say
        let loss: f64 = (0..t).filter(|&i| basis[i] >= p).map(|i| cost(basis[i]) * rhs[i]).sum();
        // entering variable: (actual variable, stored column, sign, reduced cost)
        let mut enter: Option<(usize, usize, f64, f64)> = None;
        let optimal = loss <= loss_tol;
        let mut consider = |var: usize, s: usize, sign: f64, rc: f64| {
            if !optimal && rc < -1e-10 {
                let better = match enter {
                    None => true,
                    Some((_, _, _, best)) => !bland && rc < best,
                };
                if better {
                    enter = Some((var, s, sign, rc));
                }
            }
        };
        for j in 0..p {
            if !is_basic[j] {
                consider(j, j, 1.0, d[j]);
                consider(j, j, -1.0, -d[j]);
            }
        }
        for i in 0..t {
            let s = p + i;
            if !is_basic[s] {
                consider(s, s, 1.0, d[s]);
            }
            if !is_basic[p + t + i] {
                consider(p + t + i, s, -1.0, 1.0 - d[s]);
            }
        }
        let Some((var, s, sign, rc)) = enter else {
            let mut coef = vec![0.0; p];
            for i in 0..t {
                if basis[i] < p {
                    coef[basis[i]] = basic_sign[i] * rhs[i];
                }
            }
            return Ok((coef, pivots));
        };

        for i in 0..t {
            col[i] = sign * tab[i * w + s];
        }
        let col_scale = col.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..t {
            if basis[i] < p || col[i] <= 1e-11 * col_scale.max(1.0) {
                continue;
            }
            let ratio = rhs[i].max(0.0) / col[i];
            leave = match leave {
                None => Some((i, ratio)),
                Some((r, best)) => {
                    if ratio < best - 1e-14 || (ratio <= best + 1e-14 && basis[i] < basis[r]) {
                        Some((i, ratio))
                    } else {
                        Some((r, best))
                    }
                }
            };
        }
        let Some((r, ratio)) = leave else {
            // objective is bounded below by zero, so this signals breakdown
            return Err(QregError::NonConvergence { pivots });
        };
        degenerate_run = if ratio <= zero_tol { degenerate_run + 1 } else { 0 };

        let piv = col[r];
        let row_r: Vec<f64> = tab[r * w..(r + 1) * w].iter().map(|v| v / piv).collect();
        let rhs_r = rhs[r] / piv;
        for i in 0..t {
            if i == r || col[i] == 0.0 {
                continue;
            }
            let f = col[i];
            let row = &mut tab[i * w..(i + 1) * w];
            for (a, b) in row.iter_mut().zip(&row_r) {
                *a -= f * b;
            }
            rhs[i] -= f * rhs_r;
            if rhs[i].abs() < zero_tol {
                rhs[i] = 0.0;
            }
        }
        tab[r * w..(r + 1) * w].copy_from_slice(&row_r);
        rhs[r] = rhs_r;
        for (ds, b) in d.iter_mut().zip(&row_r) {
            *ds -= rc * b;
        }
        is_basic[basis[r]] = false;
        basis[r] = var;
        basic_sign[r] = sign;
        is_basic[var] = true;
    }
    Err(QregError::NonConvergence { pivots: max_pivots })
}

/// Picks `p` linearly independent rows with the smallest residuals and
/// solves them exactly.
fn polish(x: &DMatrix<f64>, y: &[f64], coef: &[f64]) -> Option<(Vec<f64>, Vec<usize>)> {
    let (t, p) = x.shape();
    let fitted = x * DVector::from_column_slice(coef);
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| (y[a] - fitted[a]).abs().total_cmp(&(y[b] - fitted[b]).abs()).then(a.cmp(&b)));
    let mut q: Vec<DVector<f64>> = Vec::with_capacity(p);
    let mut rows = Vec::with_capacity(p);
    for &i in &order {
        let xi = x.row(i).transpose();
        let norm = xi.norm();
        if norm == 0.0 {
            continue;
        }
        let mut v = xi.clone();
        for qk in &q {
            let c = qk.dot(&v);
            v -= qk * c;
        }
        let vn = v.norm();
        if vn > 1e-8 * norm {
            q.push(v / vn);
            rows.push(i);
            if rows.len() == p {
                break;
            }
        }
    }
    if rows.len() < p {
        return None;
    }
    let sol = solve_rows(x, y, &rows)?;
    Some((sol, rows))
}

fn solve_rows(x: &DMatrix<f64>, y: &[f64], rows: &[usize]) -> Option<Vec<f64>> {
    let p = x.ncols();
    let xh = DMatrix::from_fn(p, p, |r, c| x[(rows[r], c)]);
    let yh = DVector::from_iterator(p, rows.iter().map(|&i| y[i]));
    xh.lu().solve(&yh).map(|b| b.iter().copied().collect())
}

/// Moves between adjacent vertices along edges that either decrease the
/// objective or keep it flat while lowering `coef[tiebreak]`.
fn edge_walk(
    x: &DMatrix<f64>,
    y: &[f64],
    tau: f64,
    mut coef: Vec<f64>,
    mut basis: Vec<usize>,
    tiebreak: Option<usize>,
    ymax: f64,
) -> (Vec<f64>, f64) {
    let (t, p) = x.shape();
    let rtol = 1e-9 * (1.0 + ymax);
    let max_steps = 4 * t + 20;
    for _ in 0..max_steps {
        let xh = DMatrix::from_fn(p, p, |r, c| x[(basis[r], c)]);
        let Some(inv) = xh.try_inverse() else { break };
        let fitted = x * DVector::from_column_slice(&coef);
        let resid: Vec<f64> = (0..t).map(|i| y[i] - fitted[i]).collect();
        let in_basis = |i: usize| basis.contains(&i);

        // (basis slot, direction, slope, x_i'd)
        let mut descent: Option<(usize, DVector<f64>, f64, Vec<f64>)> = None;
        let mut flat: Option<(usize, DVector<f64>, f64, Vec<f64>)> = None;
        for j in 0..p {
            for s in [1.0, -1.0] {
                let dir: DVector<f64> = inv.column(j) * s;
                let z: Vec<f64> = (x * &dir).iter().copied().collect();
                let mut g = check_loss_unchecked(-s, tau);
                let mut scale = 1.0;
                for i in 0..t {
                    if in_basis(i) {
                        continue;
                    }
                    scale += z[i].abs();
                    g += if resid[i] > rtol {
                        -z[i] * tau
                    } else if resid[i] < -rtol {
                        -z[i] * (tau - 1.0)
                    } else {
                        check_loss_unchecked(-z[i], tau)
                    };
                }
                let tol = 1e-10 * scale;
                if g < -tol {
                    if descent.as_ref().is_none_or(|d| g < d.2) {
                        descent = Some((j, dir, g, z));
                    }
                } else if g <= tol && flat.is_none() {
                    if let Some(c) = tiebreak {
                        if dir[c] < -1e-12 * (1.0 + dir.amax()) {
                            flat = Some((j, dir, g, z));
                        }
                    }
                }
            }
        }
        let Some((j, _, g, z)) = descent.or(flat) else { break };

        let mut breaks: Vec<(f64, usize)> = (0..t)
            .filter(|&i| !in_basis(i) && resid[i].abs() > rtol && z[i] != 0.0)
            .map(|i| (resid[i] / z[i], i))
            .filter(|(step, _)| *step > 0.0)
            .collect();
        breaks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let scale = 1.0 + z.iter().map(|v| v.abs()).sum::<f64>();
        let mut slope = g;
        let mut target = None;
        for &(step, i) in &breaks {
            target = Some((step, i));
            slope += z[i].abs();
            if slope > 1e-10 * scale {
                break;
            }
        }
        let Some((_, enter)) = target else { break };
        let mut next_basis = basis.clone();
        next_basis[j] = enter;
        let Some(next) = solve_rows(x, y, &next_basis) else { break };
        let before = objective(x, y, tau, &coef);
        let after = objective(x, y, tau, &next);
        if after > before + 1e-9 * (1.0 + before) {
            break;
        }
        coef = next;
        basis = next_basis;
    }
    let obj = objective(x, y, tau, &coef);
    (coef, obj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::empirical_quantile;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ones(t: usize) -> DMatrix<f64> {
        DMatrix::from_element(t, 1, 1.0)
    }

    #[test]
    fn intercept_only_lower_order_statistic() {
        let y: Vec<f64> = (1..=10).map(f64::from).collect();
        let sol = solve(&ones(10), &y, 0.5, Some(0)).unwrap();
        assert_eq!(sol.coef, vec![5.0]);
        assert_eq!(sol.objective, 12.5);
        assert_eq!(solve(&ones(10), &y, 0.08, Some(0)).unwrap().coef, vec![1.0]);
        // reversed input order gives the same answer
        let rev: Vec<f64> = y.iter().rev().copied().collect();
        assert_eq!(solve(&ones(10), &rev, 0.5, Some(0)).unwrap().coef, vec![5.0]);
    }

    #[test]
    fn intercept_matches_order_statistic_on_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..60 {
            let t = rng.random_range(10..200);
            let y: Vec<f64> = (0..t).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
            for tau in [0.08, 0.5, 0.92] {
                let sol = solve(&ones(t), &y, tau, Some(0)).unwrap();
                assert!((sol.coef[0] - empirical_quantile(&y, tau)).abs() < 1e-8, "t={t} tau={tau}");
            }
        }
    }

    #[test]
    fn exact_fit() {
        let x = DMatrix::from_fn(12, 2, |i, j| if j == 0 { 1.0 } else { i as f64 - 3.0 });
        let y: Vec<f64> = (0..12).map(|i| 2.0 * (i as f64 - 3.0)).collect();
        for tau in [0.1, 0.5, 0.9] {
            let sol = solve(&x, &y, tau, Some(0)).unwrap();
            assert!(sol.coef[0].abs() < 1e-12 && (sol.coef[1] - 2.0).abs() < 1e-12);
            assert!(sol.objective < 1e-12);
        }
    }

    /// Brute force over all elemental subsets: some optimum is always a vertex.
    fn elemental_optimum(x: &DMatrix<f64>, y: &[f64], tau: f64) -> f64 {
        let (t, p) = x.shape();
        let mut best = f64::INFINITY;
        let mut idx: Vec<usize> = (0..p).collect();
        loop {
            if let Some(c) = solve_rows(x, y, &idx) {
                if c.iter().all(|v| v.is_finite()) {
                    best = best.min(objective(x, y, tau, &c));
                }
            }
            // next combination
            let mut k = p;
            while k > 0 && idx[k - 1] == t - p + k - 1 {
                k -= 1;
            }
            if k == 0 {
                return best;
            }
            idx[k - 1] += 1;
            for m in k..p {
                idx[m] = idx[m - 1] + 1;
            }
        }
    }

    #[test]
    fn matches_elemental_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..20 {
            let t = 14;
            let p = 3;
            let x = DMatrix::from_fn(t, p, |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() * 2.0 - 1.0 });
            let y: Vec<f64> = (0..t).map(|i| x[(i, 1)] - 0.5 * x[(i, 2)] + rng.random::<f64>() - 0.5).collect();
            for tau in [0.2, 0.5, 0.8] {
                let sol = solve(&x, &y, tau, Some(0)).unwrap();
                let oracle = elemental_optimum(&x, &y, tau);
                assert!((sol.objective - oracle).abs() < 1e-9, "trial {trial} tau {tau}: {} vs {oracle}", sol.objective);
            }
        }
    }

    #[test]
    fn handles_ties_and_degenerate_rows() {
        let x = DMatrix::from_fn(20, 2, |i, j| if j == 0 { 1.0 } else { (i % 4) as f64 });
        let y: Vec<f64> = (0..20).map(|i| ((i % 4) as f64) + if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
        let sol = solve(&x, &y, 0.5, Some(0)).unwrap();
        let oracle = elemental_optimum(&x, &y, 0.5);
        assert!((sol.objective - oracle).abs() < 1e-9);
    }

    #[test]
    fn near_exact_fit_with_rounding_noise() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = 119;
        let z: Vec<f64> = (0..=t).map(|_| StandardNormal.sample(&mut rng)).collect();
        let infl: Vec<f64> = (0..=t).map(|i| if i > 28 { 0.03 } else { 0.01 } + 0.008 * z[i]).collect();
        // levels round trip, as when inflation is recovered from a price index
        let mut cpi = vec![100.0];
        let mut px = vec![1000.0];
        for i in 1..=t {
            cpi.push(cpi[i - 1] * (1.0 + infl[i]));
            px.push(px[i - 1] * (1.0 + infl[i] + 0.005));
        }
        let pi: Vec<f64> = (1..=t).map(|i| cpi[i] / cpi[i - 1] - 1.0).collect();
        let r: Vec<f64> = (1..=t).map(|i| px[i] / px[i - 1] - 1.0).collect();
        let rows = t - 1;
        let (m0, m1) = (crate::stats::mean(&pi[1..]), crate::stats::mean(&pi[..rows]));
        let x = DMatrix::from_fn(rows, 4, |i, j| match j {
            0 => 1.0,
            1 => (pi[i + 1] - m0) / 0.008,
            2 => (pi[i] - m1) / 0.008,
            _ => if i == 28 { 1.0 } else { 0.0 },
        });
        let y = &r[1..];
        for tau in [1.0 / 15.0, 0.5, 14.0 / 15.0] {
            let sol = solve(&x, y, tau, Some(0)).unwrap();
            assert!(sol.objective < 1e-12, "tau {tau}: {}", sol.objective);
        }
    }
}
