//! Quadrature primitives: Gauss–Legendre and Gauss–Hermite rules, graded
//! panel layouts for endpoint singularities, and tanh-sinh.
//!
//! All rules are generic over [`Scalar`] so the same code integrates real and
//! complex integrands.

use std::collections::HashMap;
use std::ops::{Add, Mul};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

/// Values a quadrature rule can accumulate.
pub trait Scalar: Copy + Default + Add<Output = Self> + Mul<f64, Output = Self> + Send + Sync {
    fn magnitude(&self) -> f64;
}

impl Scalar for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

/// Nodes and weights of a rule on its reference domain.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn cached(table: &'static OnceLock<Mutex<HashMap<usize, Arc<Rule>>>>, n: usize, build: fn(usize) -> Rule) -> Arc<Rule> {
    let map = table.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = map.lock().expect("rule cache poisoned");
    guard.entry(n).or_insert_with(|| Arc::new(build(n))).clone()
}

/// n-point Gauss–Legendre rule on [−1, 1].
pub fn gauss_legendre(n: usize) -> Arc<Rule> {
    static TABLE: OnceLock<Mutex<HashMap<usize, Arc<Rule>>>> = OnceLock::new();
    cached(&TABLE, n, build_legendre)
}

fn build_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

/// n-point Gauss–Hermite rule for the weight e^{−x²/2} (weights sum to √(2π)).
pub fn gauss_hermite(n: usize) -> Arc<Rule> {
    static TABLE: OnceLock<Mutex<HashMap<usize, Arc<Rule>>>> = OnceLock::new();
    cached(&TABLE, n, build_hermite)
}

fn build_hermite(n: usize) -> Rule {
    assert!(n >= 1);
    // Newton iteration on orthonormal physicists' Hermite functions (weight
    // e^{−x²}), then rescale to the probabilists' weight.
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * xs[0],
            3 => 1.91 * z - 0.91 * xs[1],
            _ => 2.0 * z - xs[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        xs[i] = z;
        xs[n - 1 - i] = -z;
        ws[i] = 2.0 / (pp * pp);
        ws[n - 1 - i] = ws[i];
    }
    let s2 = std::f64::consts::SQRT_2;
    let mut rule = Rule {
        nodes: xs.iter().map(|x| x * s2).collect(),
        weights: ws.iter().map(|w| w * s2).collect(),
    };
    rule.nodes.reverse();
    rule.weights.reverse();
    rule
}

/// ∫_a^b f with an n-point Gauss–Legendre rule.
pub fn gl<T: Scalar>(mut f: impl FnMut(f64) -> T, a: f64, b: f64, n: usize) -> T {
    let rule = gauss_legendre(n);
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut acc = T::default();
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        acc = acc + f(c + h * x) * (w * h);
    }
    acc
}

/// Sum of Gauss–Legendre integrals over consecutive panels `edges[k]..edges[k+1]`.
pub fn gl_panels<T: Scalar>(mut f: impl FnMut(f64) -> T, edges: &[f64], n: usize) -> T {
    let mut acc = T::default();
    for w in edges.windows(2) {
        acc = acc + gl(&mut f, w[0], w[1], n);
    }
    acc
}

/// Panel edges on [a, b] shrinking geometrically (factor `ratio` < 1) toward
/// `a`, down to a first panel of width ≤ `min_width`. Returned ascending.
pub fn graded_toward_left(a: f64, b: f64, ratio: f64, min_width: f64) -> Vec<f64> {
    assert!(b > a && ratio > 0.0 && ratio < 1.0 && min_width > 0.0);
    let mut widths = vec![b - a];
    let mut w = b - a;
    while w > min_width {
        w *= ratio;
        widths.push(w);
    }
    let mut edges: Vec<f64> = widths.iter().rev().map(|w| a + w).collect();
    edges.insert(0, a);
    // the last edge is exactly b
    *edges.last_mut().expect("non-empty") = b;
    edges
}

/// Mirror image of [`graded_toward_left`]: panels shrink toward `b`.
pub fn graded_toward_right(a: f64, b: f64, ratio: f64, min_width: f64) -> Vec<f64> {
    let left = graded_toward_left(a, b, ratio, min_width);
    let mut edges: Vec<f64> = left.iter().map(|x| a + b - x).collect();
    edges.reverse();
    edges[0] = a;
    *edges.last_mut().expect("non-empty") = b;
    edges
}

/// Result of an adaptive rule: value and an error estimate.
#[derive(Debug, Clone, Copy)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
}

/// Tanh-sinh (double-exponential) quadrature on [a, b].
///
/// The integrand receives `(x, x − a, b − x)`; the two offsets are computed
/// without cancellation so that algebraic endpoint behaviour can be evaluated
/// accurately. Step size is halved until two successive levels agree to
/// `rel_tol` (relative to the value) or `max_level` is reached.
pub fn tanh_sinh<T: Scalar>(
    mut f: impl FnMut(f64, f64, f64) -> T,
    a: f64,
    b: f64,
    rel_tol: f64,
    max_level: u32,
) -> Estimate<T> {
    let half = 0.5 * (b - a);
    if half <= 0.0 {
        return Estimate { value: T::default(), error: 0.0 };
    }
    const T_MAX: f64 = 6.2;
    let pi2 = std::f64::consts::FRAC_PI_2;
    let mut eval = |t: f64| -> T {
        let g = pi2 * t.sinh();
        let from_a = 2.0 * half / (1.0 + (-2.0 * g).exp());
        let from_b = 2.0 * half / (1.0 + (2.0 * g).exp());
        if from_a <= 0.0 || from_b <= 0.0 {
            return T::default();
        }
        let ch = g.cosh();
        let w = half * pi2 * t.cosh() / (ch * ch);
        let x = if from_a <= from_b { a + from_a } else { b - from_b };
        f(x, from_a, from_b) * w
    };
    // level 0 also fixes how far out the abscissae matter: stop once both
    // tails are negligible against the largest contribution seen
    let mut h = 0.5;
    let mut sum = eval(0.0);
    let mut peak = sum.magnitude();
    let mut t_end = T_MAX;
    let mut k = 1;
    while k as f64 * h <= T_MAX {
        let t = k as f64 * h;
        let (l, r) = (eval(-t), eval(t));
        sum = sum + l + r;
        let m = l.magnitude().max(r.magnitude());
        peak = peak.max(m);
        if t >= 2.0 && m <= 1e-20 * peak {
            t_end = t;
            break;
        }
        k += 1;
    }
    let mut value = sum * h;
    let mut error = f64::INFINITY;
    for _ in 1..=max_level {
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= t_end {
            let t = k as f64 * h;
            sum = sum + eval(t) + eval(-t);
            k += 2;
        }
        let next = sum * h;
        error = (next + value * -1.0).magnitude();
        value = next;
        if error <= rel_tol * value.magnitude() {
            break;
        }
    }
    Estimate { value, error }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 10, 16, 40] {
            let deg = 2 * n - 1;
            let v = gl(|x: f64| x.powi(deg as i32 - 1) * (deg as f64), 0.0, 1.0, n);
            assert!((v - 1.0).abs() < 1e-13, "n={n} v={v}");
        }
    }

    #[test]
    fn hermite_moments() {
        let s = (2.0 * std::f64::consts::PI).sqrt();
        for n in [1, 4, 11, 30, 80] {
            let r = gauss_hermite(n);
            let m0: f64 = r.weights.iter().sum();
            assert!((m0 / s - 1.0).abs() < 1e-13, "n={n}");
            if n >= 3 {
                let m4: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(4)).sum();
                assert!((m4 / (3.0 * s) - 1.0).abs() < 1e-12, "n={n}");
            }
        }
    }

    #[test]
    fn graded_edges_are_monotone() {
        let e = graded_toward_left(0.0, 1.0, 0.5, 1e-6);
        assert_eq!(e[0], 0.0);
        assert_eq!(*e.last().unwrap(), 1.0);
        assert!(e.windows(2).all(|w| w[1] > w[0]));
        assert!(e[1] <= 1e-6);
        let r = graded_toward_right(2.0, 3.0, 0.25, 1e-8);
        assert!(r.windows(2).all(|w| w[1] > w[0]));
        assert!(3.0 - r[r.len() - 2] <= 1e-8);
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2
        let e = tanh_sinh(|_, xa, _| xa.powf(-0.5), 0.0, 1.0, 1e-14, 10);
        assert!((e.value - 2.0).abs() < 1e-12, "{}", e.value);
        // ∫_0^1 ln(1-x) dx = -1, singular at the right end
        let e = tanh_sinh(|_, _, xb: f64| xb.ln(), 0.0, 1.0, 1e-14, 10);
        assert!((e.value + 1.0).abs() < 1e-12);
    }
}
