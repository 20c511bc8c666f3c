//! Tridiagonal solves for the symmetric M-matrices of the kernel scheme.

/// Solves `T x = rhs` in place, where `T_ii = s_i + g_i + g_{i+1}` and
/// `T_{i,i+1} = −g_{i+1}`. `s ≥ 0` are the row sums and `g ≥ 0` the `n + 1`
/// couplings; `g_0` and `g_n` tie the end unknowns to zero boundary values.
///
/// Pivots are written as `g_{i+1} + e_i` with the excess
/// `e_i = s_i + g_i e_{i−1}/(e_{i−1} + g_i)` built from positive terms only,
/// so the solve keeps full relative accuracy when the couplings exceed the
/// row sums by more than `1/ε`. Plain Thomas elimination loses the row sums
/// entirely in that regime.
pub(crate) fn solve_row_sum(s: &[f64], g: &[f64], rhs: &mut [f64], pivots: &mut [f64]) {
    let n = s.len();
    if n == 0 {
        return;
    }
    debug_assert_eq!(g.len(), n + 1);
    let mut excess = s[0] + g[0];
    pivots[0] = excess + g[1];
    for i in 1..n {
        let prev = pivots[i - 1];
        rhs[i] += g[i] * rhs[i - 1] / prev;
        excess = s[i] + g[i] * (excess / prev);
        pivots[i] = excess + g[i + 1];
    }
    rhs[n - 1] /= pivots[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] + g[i + 1] * rhs[i + 1]) / pivots[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_known_system() {
        let s = [2.0, 1.0, 0.5, 3.0];
        let g = [1.0, 1.0, 2.0, 1.0, 0.5];
        let x = [1.0, -2.0, 0.5, 3.0];
        let mut rhs: Vec<f64> = (0..4)
            .map(|i| {
                let mut v = (s[i] + g[i] + g[i + 1]) * x[i];
                if i > 0 {
                    v -= g[i] * x[i - 1];
                }
                if i < 3 {
                    v -= g[i + 1] * x[i + 1];
                }
                v
            })
            .collect();
        let mut pivots = [0.0; 4];
        solve_row_sum(&s, &g, &mut rhs, &mut pivots);
        for i in 0..4 {
            assert!((rhs[i] - x[i]).abs() < 1e-14, "{rhs:?}");
        }
    }

    #[test]
    fn stays_accurate_when_couplings_dwarf_the_row_sums() {
        // Without boundary couplings T·1 = s, whatever the couplings are.
        let n = 200;
        let s: Vec<f64> = (0..n).map(|i| 10f64.powi((i % 7) as i32 - 3)).collect();
        let mut g: Vec<f64> = (0..=n).map(|i| 10f64.powi(((i * 37) % 61) as i32 - 30)).collect();
        g[0] = 0.0;
        g[n] = 0.0;
        let mut rhs = s.clone();
        let mut pivots = vec![0.0; n];
        solve_row_sum(&s, &g, &mut rhs, &mut pivots);
        for v in &rhs {
            assert!((v - 1.0).abs() < 1e-12, "{v}");
        }
    }
}
