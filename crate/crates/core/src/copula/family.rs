//! One-parameter Archimedean families: log-densities, conditional
//! distributions, Kendall's-tau inversion, and conditional-inverse samplers.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Ordered by the tie-break used in model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CopulaFamily {
    Clayton,
    Gumbel,
    Frank,
}

impl CopulaFamily {
    pub const ALL: [CopulaFamily; 3] = [CopulaFamily::Clayton, CopulaFamily::Gumbel, CopulaFamily::Frank];

    /// Admissible parameter interval used by the optimizer.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            CopulaFamily::Clayton => (1e-6, 50.0),
            CopulaFamily::Gumbel => (1.0 + 1e-6, 50.0),
            CopulaFamily::Frank => (-50.0, 50.0),
        }
    }

    pub fn is_valid(self, theta: f64) -> bool {
        match self {
            CopulaFamily::Clayton => theta > 0.0 && theta.is_finite(),
            CopulaFamily::Gumbel => theta >= 1.0 && theta.is_finite(),
            CopulaFamily::Frank => theta != 0.0 && theta.is_finite(),
        }
    }

    /// `ln c(u, v; theta)`.
    pub fn log_density(self, u: f64, v: f64, theta: f64) -> f64 {
        match self {
            CopulaFamily::Clayton => {
                let (lu, lv) = (u.ln(), v.ln());
                // ln(u^-t + v^-t - 1) without cancellation at small theta
                let s = ((-theta * lu).exp_m1() + (-theta * lv).exp_m1()).ln_1p();
                (1.0 + theta).ln() - (1.0 + theta) * (lu + lv) - (2.0 + 1.0 / theta) * s
            }
            CopulaFamily::Gumbel => {
                let (x, y) = (-u.ln(), -v.ln());
                let (lx, ly) = (x.ln(), y.ln());
                let ln_a = log_add_exp(theta * lx, theta * ly);
                let a_root = (ln_a / theta).exp();
                -a_root + x + y + (theta - 1.0) * (lx + ly) + (2.0 / theta - 2.0) * ln_a
                    + ((theta - 1.0) / a_root).ln_1p()
            }
            CopulaFamily::Frank => {
                if theta.abs() < 1e-10 {
                    return 0.0;
                }
                // c(u, v; -t) = c(u, 1 - v; t), so only t > 0 is evaluated
                let (v, theta) = if theta < 0.0 { (1.0 - v, -theta) } else { (v, theta) };
                // the denominator as a sum of two positive terms
                let ln_d = log_add_exp(
                    -theta * u + (-(-theta * v).exp_m1()).ln(),
                    -theta * v + (-(-theta * (1.0 - v)).exp_m1()).ln(),
                );
                theta.ln() + (-(-theta).exp_m1()).ln() - theta * (u + v) - 2.0 * ln_d
            }
        }
    }

    /// `C(u, v)`.
    pub fn cdf(self, u: f64, v: f64, theta: f64) -> f64 {
        match self {
            CopulaFamily::Clayton => (u.powf(-theta) + v.powf(-theta) - 1.0).powf(-1.0 / theta),
            CopulaFamily::Gumbel => {
                let a = (-u.ln()).powf(theta) + (-v.ln()).powf(theta);
                (-a.powf(1.0 / theta)).exp()
            }
            CopulaFamily::Frank => {
                let num = (-theta * u).exp_m1() * (-theta * v).exp_m1();
                -(1.0 + num / (-theta).exp_m1()).ln() / theta
            }
        }
    }

    /// Conditional distribution `P(V <= v | U = u) = dC/du`.
    pub fn conditional_cdf(self, v: f64, u: f64, theta: f64) -> f64 {
        match self {
            CopulaFamily::Clayton => {
                let s = u.powf(-theta) + v.powf(-theta) - 1.0;
                u.powf(-theta - 1.0) * s.powf(-1.0 / theta - 1.0)
            }
            CopulaFamily::Gumbel => {
                let x = -u.ln();
                let a = x.powf(theta) + (-v.ln()).powf(theta);
                let c = (-a.powf(1.0 / theta)).exp();
                c / u * x.powf(theta - 1.0) * a.powf(1.0 / theta - 1.0)
            }
            CopulaFamily::Frank => {
                let a = (-theta * u).exp();
                let eb = (-theta * v).exp_m1();
                a * eb / ((-theta).exp_m1() + (a - 1.0) * eb)
            }
        }
    }

    /// Solves `conditional_cdf(v | u) = w` for `v`.
    pub fn conditional_inverse(self, w: f64, u: f64, theta: f64) -> f64 {
        match self {
            CopulaFamily::Clayton => {
                ((w.powf(-theta / (1.0 + theta)) - 1.0) * u.powf(-theta) + 1.0).powf(-1.0 / theta)
            }
            CopulaFamily::Frank => {
                let a = (-theta * u).exp();
                -(w * (-theta).exp_m1() / (w + (1.0 - w) * a)).ln_1p() / theta
            }
            CopulaFamily::Gumbel => {
                // monotone in v; bisection to machine precision
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.conditional_cdf(mid, u, theta) < w {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    /// Kendall's tau implied by `theta`.
    pub fn kendall_tau(self, theta: f64) -> f64 {
        match self {
            CopulaFamily::Clayton => theta / (theta + 2.0),
            CopulaFamily::Gumbel => 1.0 - 1.0 / theta,
            CopulaFamily::Frank => {
                if theta.abs() < 1e-8 {
                    return theta / 9.0;
                }
                1.0 - 4.0 / theta * (1.0 - debye1(theta))
            }
        }
    }

    /// Moment-style starting value from an empirical Kendall's tau, clamped
    /// into the admissible interval.
    pub fn theta_from_tau(self, tau: f64) -> f64 {
        let (lo, hi) = self.bounds();
        let theta = match self {
            CopulaFamily::Clayton => 2.0 * tau / (1.0 - tau),
            CopulaFamily::Gumbel => 1.0 / (1.0 - tau),
            CopulaFamily::Frank => {
                let (mut a, mut b) = (lo, hi);
                if tau <= self.kendall_tau(a) {
                    a
                } else if tau >= self.kendall_tau(b) {
                    b
                } else {
                    for _ in 0..200 {
                        let mid = 0.5 * (a + b);
                        if self.kendall_tau(mid) < tau {
                            a = mid;
                        } else {
                            b = mid;
                        }
                    }
                    0.5 * (a + b)
                }
            }
        };
        if theta.is_nan() {
            return hi;
        }
        theta.clamp(lo, hi)
    }

    /// Analytic lower-tail dependence `lim_{t->0} C(t, t) / t`.
    pub fn lower_tail_dependence(self, theta: f64) -> f64 {
        match self {
            CopulaFamily::Clayton => 2f64.powf(-1.0 / theta),
            CopulaFamily::Gumbel | CopulaFamily::Frank => 0.0,
        }
    }

    /// Draws `n` pairs by conditional inversion: `u ~ U(0,1)`,
    /// `v = C^-1(w | u)` with `w ~ U(0,1)`.
    pub fn sample<R: Rng + ?Sized>(self, theta: f64, n: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let mut u = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            let ui: f64 = open_unit(rng);
            let wi: f64 = open_unit(rng);
            u.push(ui);
            v.push(self.conditional_inverse(wi, ui, theta).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON));
        }
        (u, v)
    }
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let x: f64 = rng.random();
        if x > 0.0 {
            return x;
        }
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Debye function `D_1(x) = (1/x) * int_0^x t / (e^t - 1) dt`, composite
/// Simpson with 400 panels (integrand is smooth and bounded).
pub fn debye1(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let f = |t: f64| if t == 0.0 { 1.0 } else { t / t.exp_m1() };
    let n = 400;
    let h = x / n as f64;
    let mut s = f(0.0) + f(x);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(i as f64 * h);
    }
    s * h / 3.0 / x
}

impl fmt::Display for CopulaFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CopulaFamily::Clayton => "clayton",
            CopulaFamily::Gumbel => "gumbel",
            CopulaFamily::Frank => "frank",
        })
    }
}

impl FromStr for CopulaFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "clayton" => Ok(CopulaFamily::Clayton),
            "gumbel" => Ok(CopulaFamily::Gumbel),
            "frank" => Ok(CopulaFamily::Frank),
            other => Err(format!("unknown copula family `{other}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    const THETAS: [(CopulaFamily, f64); 6] = [
        (CopulaFamily::Clayton, 0.5),
        (CopulaFamily::Clayton, 3.0),
        (CopulaFamily::Gumbel, 1.5),
        (CopulaFamily::Gumbel, 4.0),
        (CopulaFamily::Frank, -4.0),
        (CopulaFamily::Frank, 6.0),
    ];

    /// Mixed partial of the CDF by central finite differences.
    fn fd_density(f: CopulaFamily, u: f64, v: f64, theta: f64) -> f64 {
        let h = 1e-4;
        (f.cdf(u + h, v + h, theta) - f.cdf(u + h, v - h, theta) - f.cdf(u - h, v + h, theta)
            + f.cdf(u - h, v - h, theta))
            / (4.0 * h * h)
    }

    #[test]
    fn log_density_matches_cdf_mixed_partial() {
        for (fam, theta) in THETAS {
            for &(u, v) in &[(0.3, 0.6), (0.15, 0.2), (0.8, 0.7), (0.5, 0.05)] {
                let analytic = fam.log_density(u, v, theta).exp();
                let numeric = fd_density(fam, u, v, theta);
                assert!(
                    (analytic - numeric).abs() < 1e-4 * analytic.max(1.0),
                    "{fam} theta={theta} ({u},{v}): {analytic} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn conditional_cdf_matches_partial_derivative() {
        for (fam, theta) in THETAS {
            let (u, v) = (0.35, 0.55);
            let h = 1e-6;
            let numeric = (fam.cdf(u + h, v, theta) - fam.cdf(u - h, v, theta)) / (2.0 * h);
            assert!((fam.conditional_cdf(v, u, theta) - numeric).abs() < 1e-6, "{fam}");
        }
    }

    #[test]
    fn conditional_inverse_round_trips() {
        for (fam, theta) in THETAS {
            for &(w, u) in &[(0.1, 0.2), (0.5, 0.5), (0.9, 0.7), (0.01, 0.99)] {
                let v = fam.conditional_inverse(w, u, theta);
                assert!((fam.conditional_cdf(v, u, theta) - w).abs() < 1e-9, "{fam} w={w} u={u}");
            }
        }
    }

    #[test]
    fn densities_stay_finite_at_bounds() {
        for fam in CopulaFamily::ALL {
            let (lo, hi) = fam.bounds();
            for theta in [lo, hi] {
                for &(u, v) in &[(1.0 / 2001.0, 2000.0 / 2001.0), (1.0 / 2001.0, 1.0 / 2001.0), (0.5, 0.5)] {
                    assert!(fam.log_density(u, v, theta).is_finite(), "{fam} {theta} ({u},{v})");
                }
            }
        }
        // Frank crosses zero continuously
        assert_eq!(CopulaFamily::Frank.log_density(0.3, 0.7, 0.0), 0.0);
        assert!(CopulaFamily::Frank.log_density(0.3, 0.7, 1e-9).abs() < 1e-8);
    }

    #[test]
    fn frank_density_at_strong_dependence() {
        // direct formula in extended precision terms, fine at moderate theta
        let direct = |u: f64, v: f64, t: f64| {
            let d = (1.0 - (-t).exp()) - (1.0 - (-t * u).exp()) * (1.0 - (-t * v).exp());
            (t * (1.0 - (-t).exp()) * (-t * (u + v)).exp() / (d * d)).ln()
        };
        for &(u, v, t) in &[(0.2, 0.7, 3.0), (0.9, 0.85, 12.0), (0.1, 0.95, -8.0), (0.5, 0.5, 20.0)] {
            let got = CopulaFamily::Frank.log_density(u, v, t);
            assert!((got - direct(u, v, t)).abs() < 1e-9, "{u} {v} {t}: {got} vs {}", direct(u, v, t));
        }
        for &(u, v) in &[(0.99, 0.99), (0.999, 0.998), (0.01, 0.01)] {
            assert!(CopulaFamily::Frank.log_density(u, v, 47.5).is_finite());
            assert!(CopulaFamily::Frank.log_density(u, 1.0 - v, -47.5).is_finite());
        }
    }

    #[test]
    fn frank_tau_inversion() {
        for theta in [-10.0, -1.0, 0.5, 3.0, 20.0] {
            let tau = CopulaFamily::Frank.kendall_tau(theta);
            assert!((CopulaFamily::Frank.theta_from_tau(tau) - theta).abs() < 1e-6);
        }
        // known value: theta = 5.736 gives tau ~ 0.5
        assert!((CopulaFamily::Frank.kendall_tau(5.736) - 0.5).abs() < 1e-3);
        assert!((debye1(1.0) - 0.777_504_634).abs() < 1e-8);
    }

    #[test]
    fn sampled_kendall_tau_matches_theory() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for (fam, theta) in THETAS {
            let (u, v) = fam.sample(theta, 3000, &mut rng);
            let tau = crate::stats::kendall_tau(&u, &v);
            assert!((tau - fam.kendall_tau(theta)).abs() < 0.04, "{fam} {theta}: {tau}");
        }
    }

    #[test]
    fn clayton_lambda_increases_with_theta() {
        let grid: Vec<f64> = (1..=200).map(|i| i as f64 * 0.25).collect();
        for w in grid.windows(2) {
            let a = CopulaFamily::Clayton.lower_tail_dependence(w[0]);
            let b = CopulaFamily::Clayton.lower_tail_dependence(w[1]);
            assert!(b > a);
        }
    }
}
