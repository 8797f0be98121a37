//! Small special-function toolbox (Gamma comes from `statrs`).

pub use statrs::function::gamma::{gamma, ln_gamma};

/// n!! with the conventions (−1)!! = 0!! = 1.
pub fn double_factorial(n: i64) -> f64 {
    assert!(n >= -1, "double factorial of {n}");
    let mut acc = 1.0;
    let mut k = n;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Probabilists' Hermite polynomial He_k(x).
pub fn hermite_he(k: usize, x: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, x);
    match k {
        0 => h0,
        _ => {
            for j in 1..k {
                let h2 = x * h1 - j as f64 * h0;
                h0 = h1;
                h1 = h2;
            }
            h1
        }
    }
}

/// ∫_ℝ |u|^p e^{−u²/2} du = 2^{(p+1)/2} Γ((p+1)/2), for p > −1.
pub fn gaussian_abs_moment(p: f64) -> f64 {
    ((p + 1.0) / 2.0 * std::f64::consts::LN_2 + ln_gamma((p + 1.0) / 2.0)).exp()
}

/// Rising factorial (x)_k.
pub fn pochhammer(x: f64, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (x + j as f64))
}

/// Whether `x` is an integer to within a few ulps.
pub fn is_integer(x: f64) -> bool {
    (x - x.round()).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_factorials() {
        assert_eq!(double_factorial(-1), 1.0);
        assert_eq!(double_factorial(0), 1.0);
        assert_eq!(double_factorial(5), 15.0);
        assert_eq!(double_factorial(6), 48.0);
    }

    #[test]
    fn hermite_low_orders() {
        let x = 0.7;
        assert!((hermite_he(2, x) - (x * x - 1.0)).abs() < 1e-15);
        assert!((hermite_he(3, x) - (x * x * x - 3.0 * x)).abs() < 1e-15);
        assert!((hermite_he(4, x) - (x.powi(4) - 6.0 * x * x + 3.0)).abs() < 1e-14);
    }

    #[test]
    fn gaussian_moments() {
        let s = (2.0 * std::f64::consts::PI).sqrt();
        assert!((gaussian_abs_moment(0.0) - s).abs() < 1e-14);
        assert!((gaussian_abs_moment(2.0) - s).abs() < 1e-14);
        assert!((gaussian_abs_moment(1.0) - 2.0).abs() < 1e-14);
        assert!((gaussian_abs_moment(4.0) - 3.0 * s).abs() < 1e-13);
    }
}
