//! Special functions used by the oracles.
//!
//! `bessel_i0` deliberately does not use the power series: it evaluates the
//! integral representation `I0(x) = pi^{-1} int_0^pi exp(x cos th) dth` with
//! the trapezoid rule, which converges geometrically for this periodic,
//! entire integrand. The series route lives in `theory`, so the two can be
//! checked against each other.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

fn trapezoid_nodes(x: f64) -> usize {
    64 + 32 * x.abs().sqrt().ceil() as usize
}

/// Modified Bessel function of the first kind, order zero.
pub fn bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    if x == 0.0 {
        return 1.0;
    }
    let n = trapezoid_nodes(x);
    let h = PI / n as f64;
    // scale by e^x so the sum stays O(1)
    let mut sum = 0.5 * (1.0 + (-2.0 * x).exp());
    for k in 1..n {
        sum += (x * ((k as f64 * h).cos() - 1.0)).exp();
    }
    let scaled = sum / n as f64;
    if x > 700.0 {
        let log = x + scaled.ln();
        return if log > f64::MAX.ln() { f64::INFINITY } else { log.exp() };
    }
    scaled * x.exp()
}

/// `I0(x) - 1` without cancellation for small `x`.
pub fn bessel_i0_minus_one(x: f64) -> f64 {
    let x = x.abs();
    if x > 2.0 {
        return bessel_i0(x) - 1.0;
    }
    if x == 0.0 {
        return 0.0;
    }
    // pi^{-1} int_0^pi (e^y - 1 - y) dth with y = x cos th; the linear term
    // integrates to zero and the trapezoid sum of cos th vanishes too.
    let n = trapezoid_nodes(x);
    let h = PI / n as f64;
    let g = |y: f64| -> f64 {
        if y.abs() < 0.1 {
            // y^2/2! + ... + y^12/12!
            let mut term = y * y / 2.0;
            let mut acc = term;
            for k in 3..=12 {
                term *= y / k as f64;
                acc += term;
            }
            acc
        } else {
            y.exp_m1() - y
        }
    };
    let mut sum = 0.5 * (g(x) + g(-x));
    for k in 1..n {
        sum += g(x * (k as f64 * h).cos());
    }
    sum / n as f64
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_n and its derivative
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}
