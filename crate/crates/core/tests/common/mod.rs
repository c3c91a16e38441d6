//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use resonant_auth::nn::{mse_loss, Mode, Network};

/// O(n²) DFT of a real sequence, bins 0..=n/2, with an exact twiddle table.
pub fn naive_dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    let table: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let a = -2.0 * PI * j as f64 / n as f64;
            (a.cos(), a.sin())
        })
        .collect();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, &v) in x.iter().enumerate() {
                let (c, s) = table[(j * k) % n];
                re += v * c;
                im += v * s;
            }
            (re, im)
        })
        .collect()
}

/// Eigenvalues of a symmetric 3×3 matrix from the characteristic cubic
/// (trigonometric solution), descending.
pub fn sym3_eigenvalues(a: &[f64; 9]) -> [f64; 3] {
    let (a11, a12, a13, a22, a23, a33) = (a[0], a[1], a[2], a[4], a[5], a[8]);
    let p1 = a12 * a12 + a13 * a13 + a23 * a23;
    let q = (a11 + a22 + a33) / 3.0;
    if p1 == 0.0 {
        let mut d = [a11, a22, a33];
        d.sort_by(|x, y| y.total_cmp(x));
        return d;
    }
    let p2 = (a11 - q).powi(2) + (a22 - q).powi(2) + (a33 - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b = |i: usize| {
        let v = a[i];
        if i.is_multiple_of(4) {
            (v - q) / p
        } else {
            v / p
        }
    };
    let det_b = b(0) * (b(4) * b(8) - b(5) * b(7)) - b(1) * (b(3) * b(8) - b(5) * b(6))
        + b(2) * (b(3) * b(7) - b(4) * b(6));
    let r = (det_b / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    [e1, 3.0 * q - e1 - e3, e3]
}

/// MSE loss of `net` on one sample in eval mode.
pub fn loss_of(net: &Network, x: &[f64], target: &[f64]) -> f64 {
    let out = net.forward(x, Mode::Eval).unwrap().output;
    mse_loss(target, &out).unwrap().0
}

/// Max relative error between analytic and central-difference gradients
/// over every weight and bias.
pub fn gradient_check(net: &Network, x: &[f64], target: &[f64], h: f64) -> f64 {
    let cache = net.forward(x, Mode::Eval).unwrap();
    let (_, dout) = mse_loss(target, &cache.output).unwrap();
    let grads = net.backward(&cache, &dout).unwrap();
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    let mut check = |analytic: f64, fd: f64| {
        let scale = analytic.abs().max(fd.abs());
        if scale > 1e-7 {
            worst = worst.max((analytic - fd).abs() / scale);
        }
    };
    for l in 0..net.layers.len() {
        for i in 0..net.layers[l].weights.len() {
            let w = net.layers[l].weights[i];
            probe.layers[l].weights[i] = w + h;
            let up = loss_of(&probe, x, target);
            probe.layers[l].weights[i] = w - h;
            let down = loss_of(&probe, x, target);
            probe.layers[l].weights[i] = w;
            check(grads.weights[l][i], (up - down) / (2.0 * h));
        }
        for i in 0..net.layers[l].biases.len() {
            let b = net.layers[l].biases[i];
            probe.layers[l].biases[i] = b + h;
            let up = loss_of(&probe, x, target);
            probe.layers[l].biases[i] = b - h;
            let down = loss_of(&probe, x, target);
            probe.layers[l].biases[i] = b;
            check(grads.biases[l][i], (up - down) / (2.0 * h));
        }
    }
    worst
}
