//! Gauss-Legendre quadrature on the unit interval.

/// Nodes and weights of the n-point Gauss-Legendre rule on [0, 1].
///
/// Exact for polynomials of degree 2n-1. Nodes are found by Newton
/// iteration on the Legendre polynomial, then mapped from [-1, 1].
pub fn gauss_01(n: usize) -> Vec<(f64, f64)> {
    assert!((1..=32).contains(&n), "unsupported quadrature order {n}");
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        // Tricomi initial guess, accurate enough for Newton to converge.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1]
        rule.push((0.5 * (1.0 - x), 0.5 * w));
    }
    rule.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    rule
}

/// Value and derivative of the Legendre polynomial P_n at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one() {
        for n in 1..=10 {
            let s: f64 = gauss_01(n).iter().map(|(_, w)| w).sum();
            assert!((s - 1.0).abs() < 1e-14, "n={n} sum={s}");
        }
    }

    #[test]
    fn integrates_monomials_exactly() {
        for n in 1..=8usize {
            for k in 0..=(2 * n - 1) {
                let q: f64 = gauss_01(n)
                    .iter()
                    .map(|&(x, w)| w * x.powi(k as i32))
                    .sum();
                let exact = 1.0 / (k as f64 + 1.0);
                assert!((q - exact).abs() < 1e-14, "n={n} k={k} q={q}");
            }
        }
    }

    #[test]
    fn two_point_rule_matches_closed_form() {
        let r = gauss_01(2);
        let d = 0.5 / 3.0_f64.sqrt();
        assert!((r[0].0 - (0.5 - d)).abs() < 1e-15);
        assert!((r[1].0 - (0.5 + d)).abs() < 1e-15);
        assert!((r[0].1 - 0.5).abs() < 1e-15);
    }
}
