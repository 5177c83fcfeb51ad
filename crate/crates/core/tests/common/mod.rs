//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use spekit::kinetics::ThreeLevelRates;

/// Dormand-Prince 5(4) with adaptive steps, integrating `dy/dt = f(y)`.
pub fn dopri45<const N: usize>(
    f: impl Fn(&[f64; N]) -> [f64; N],
    y0: [f64; N],
    t_end: f64,
    rtol: f64,
    atol: f64,
) -> [f64; N] {
    const C: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const E: [f64; 7] =
        [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];
    let mut y = y0;
    let mut t = 0.0;
    let mut h = (t_end * 1e-6).max(1e-6);
    while t < t_end {
        h = h.min(t_end - t);
        let mut k = [[0.0; N]; 7];
        k[0] = f(&y);
        for s in 0..6 {
            let mut ys = y;
            for i in 0..N {
                ys[i] += h * (0..=s).map(|j| C[s][j] * k[j][i]).sum::<f64>();
            }
            k[s + 1] = f(&ys);
        }
        let mut y_new = y;
        for i in 0..N {
            y_new[i] += h * (0..6).map(|j| C[5][j] * k[j][i]).sum::<f64>();
        }
        let mut err: f64 = 0.0;
        for i in 0..N {
            let e = h * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
            let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }
        if err <= 1.0 {
            t += h;
            y = y_new;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    y
}

/// Right-hand side of the rate equations, written out term by term.
pub fn rate_rhs(r: &ThreeLevelRates) -> impl Fn(&[f64; 3]) -> [f64; 3] + '_ {
    move |p: &[f64; 3]| {
        let (g, e, m) = (p[0], p[1], p[2]);
        [
            -r.gamma_ge * g + r.gamma_eg * e + r.gamma_mg * m,
            r.gamma_ge * g - (r.gamma_eg + r.gamma_em) * e,
            r.gamma_em * e - r.gamma_mg * m,
        ]
    }
}

/// Populations at `t` starting in the ground state.
pub fn ode_populations(r: &ThreeLevelRates, t: f64) -> [f64; 3] {
    if t == 0.0 {
        return [1.0, 0.0, 0.0];
    }
    dopri45(rate_rhs(r), [1.0, 0.0, 0.0], t, 1e-13, 1e-16)
}

/// `p_e(τ)/p_e(∞)` with `p_e(∞)` from integrating to 10⁵ ns.
pub fn ode_g2(r: &ThreeLevelRates, taus: &[f64]) -> Vec<f64> {
    let pe_inf = ode_populations(r, 1e5)[1];
    taus.iter().map(|&t| ode_populations(r, t)[1] / pe_inf).collect()
}

/// Roots of the characteristic polynomial `det(λI − M)` of a 3×3 matrix,
/// from its invariants, sorted by magnitude. Real roots only (checked).
pub fn char_poly_roots(m: [[f64; 3]; 3]) -> [f64; 3] {
    let tr = m[0][0] + m[1][1] + m[2][2];
    let minors = m[0][0] * m[1][1] - m[0][1] * m[1][0] + m[0][0] * m[2][2] - m[0][2] * m[2][0] + m[1][1] * m[2][2]
        - m[1][2] * m[2][1];
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    // λ³ − tr·λ² + minors·λ − det
    let p = |l: f64| ((l - tr) * l + minors) * l - det;
    // All eigenvalues lie in [tr − ..., 0]: bracket with the Gershgorin bound.
    let bound = (0..3).map(|i| (0..3).map(|j| m[i][j].abs()).sum::<f64>()).fold(0.0, f64::max) * 1.01 + 1e-300;
    let n = 200_000;
    let mut roots = Vec::new();
    let mut prev = (-bound, p(-bound));
    for i in 1..=n {
        let x = -bound + 2.0 * bound * i as f64 / n as f64;
        let v = p(x);
        if v == 0.0 {
            roots.push(x);
        } else if prev.1 != 0.0 && v.signum() != prev.1.signum() {
            let (mut lo, mut hi) = (prev.0, x);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if p(mid).signum() == p(lo).signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev = (x, v);
    }
    assert_eq!(roots.len(), 3, "expected three separated real roots, got {roots:?}");
    roots.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    [roots[0], roots[1], roots[2]]
}

/// All-pairs coincidence histogram over `[−W, W)` with `W` the window
/// rounded up to whole bins.
pub fn brute_force_histogram(ch0: &[u64], ch1: &[u64], bin_width: u64, window: u64) -> Vec<u64> {
    let nside = window.div_ceil(bin_width) as i64;
    let bw = bin_width as i64;
    let mut counts = vec![0u64; 2 * nside as usize];
    for &a in ch0 {
        for &b in ch1 {
            let tau = b as i64 - a as i64;
            if tau >= -nside * bw && tau < nside * bw {
                counts[(tau.div_euclid(bw) + nside) as usize] += 1;
            }
        }
    }
    counts
}

pub fn rms(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (s / n as f64).sqrt()
}
