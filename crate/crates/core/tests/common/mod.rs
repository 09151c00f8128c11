//! Oracles shared by the integration tests. Nothing here calls into the
//! NGM or simulator code paths under test.
#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::DMatrix;
use ngmpn::expr::Bindings;
use ngmpn::modelzoo::ZooEntry;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw of every ranged parameter of `e`.
pub fn draw(e: &ZooEntry, rng: &mut ChaCha8Rng) -> Bindings {
    let mut b = Bindings::new();
    for (name, &(lo, hi)) in &e.param_ranges {
        b.set(name.clone(), rng.random_range(lo..=hi));
    }
    b
}

fn g(p: &Bindings, name: &str) -> f64 {
    p.get(name).unwrap_or_else(|| panic!("parameter {name} missing"))
}

/// Right-hand side of the source ODE system, place order as in the model
/// file.
pub fn ode_rhs(id: &str, p: &Bindings, x: &[f64]) -> Vec<f64> {
    let n: f64 = x.iter().sum();
    match id {
        "sirs" => {
            let (s, i, r) = (x[0], x[1], x[2]);
            let (beta, gamma, delta) = (g(p, "beta"), g(p, "gamma"), g(p, "delta"));
            vec![
                -beta * s * i / n + delta * r,
                beta * s * i / n - gamma * i,
                gamma * i - delta * r,
            ]
        }
        "seir" => {
            let (s, e, i, r) = (x[0], x[1], x[2], x[3]);
            let (beta, pi, mu, eta, alpha) = (g(p, "beta"), g(p, "Pi"), g(p, "mu"), g(p, "eta"), g(p, "alpha"));
            vec![
                pi - beta * s * i - mu * s,
                beta * s * i - (eta + mu) * e,
                eta * e - (alpha + mu) * i,
                alpha * i - mu * r,
            ]
        }
        "seeir" => {
            let (s, e1, e2, i, r) = (x[0], x[1], x[2], x[3], x[4]);
            let (mu, beta, q, nu1, nu2, gamma) =
                (g(p, "mu"), g(p, "beta"), g(p, "p"), g(p, "nu1"), g(p, "nu2"), g(p, "gamma"));
            let force = beta * s * i / n;
            vec![
                mu * n - force - mu * s,
                q * force - (nu1 + mu) * e1,
                (1.0 - q) * force - (nu2 + mu) * e2,
                nu1 * e1 + nu2 * e2 - (gamma + mu) * i,
                gamma * i - mu * r,
            ]
        }
        "covid" => {
            let (s, e, ia, is, ih) = (x[0], x[1], x[2], x[3], x[4]);
            let lambda = (g(p, "beta_a") * ia + g(p, "beta_s") * is + g(p, "beta_h") * ih) / n;
            let (sigma, frac) = (g(p, "sigma"), g(p, "r"));
            let (ga, gs, gh) = (g(p, "gamma_a"), g(p, "gamma_s"), g(p, "gamma_h"));
            let (phi, ds, dh) = (g(p, "phi_s"), g(p, "delta_s"), g(p, "delta_h"));
            vec![
                -lambda * s,
                lambda * s - sigma * e,
                frac * sigma * e - ga * ia,
                (1.0 - frac) * sigma * e - (gs + phi + ds) * is,
                phi * is - (gh + dh) * ih,
                ga * ia + gs * is + gh * ih,
            ]
        }
        "nonlinear" => {
            let (s, e, i, r) = (x[0], x[1], x[2], x[3]);
            let (mu, beta, alpha, sigma, gamma) =
                (g(p, "mu"), g(p, "beta"), g(p, "alpha"), g(p, "sigma"), g(p, "gamma"));
            let inc = beta * s * i / (1.0 + alpha * i * i);
            vec![
                mu - inc - mu * s,
                inc - (sigma + mu) * e,
                sigma * e - (gamma + mu) * i,
                gamma * i - mu * r,
            ]
        }
        "vector_borne" => {
            let (sh, ih, rh, sv, iv) = (x[0], x[1], x[2], x[3], x[4]);
            let (pi, muh, lam, muv) = (g(p, "Pi"), g(p, "mu_h"), g(p, "Lambda"), g(p, "mu_v"));
            let (bhv, bvh) = (g(p, "beta_hv"), g(p, "beta_vh"));
            let (alpha, sigma, delta) = (g(p, "alpha"), g(p, "sigma"), g(p, "delta"));
            vec![
                pi - bhv * sh * iv - muh * sh,
                bhv * sh * iv - (alpha + muh + sigma - delta) * ih,
                sigma * ih - muh * rh,
                lam - bvh * sv * ih - muv * sv,
                bvh * sv * ih - muv * iv,
            ]
        }
        "patch2" => patch2_rhs(p, x),
        other => panic!("no ODE oracle for {other}"),
    }
}

fn patch2_rhs(p: &Bindings, x: &[f64]) -> Vec<f64> {
    // Places: S1 S2 E1 E2 I1 I2 R1 R2.
    let s = [x[0], x[1]];
    let e = [x[2], x[3]];
    let i = [x[4], x[5]];
    let r = [x[6], x[7]];
    let idx = |name: &str, a: usize, b: usize| g(p, &format!("{name}{}{}", a + 1, b + 1));
    let beta = [g(p, "beta1"), g(p, "beta2")];
    // Force of infection in patch j: individuals of group k spend fraction
    // x_kj of their time there.
    let mut inflow = [0.0; 2];
    for j in 0..2 {
        let mut present = 0.0;
        let mut infectious = 0.0;
        for k in 0..2 {
            present += idx("m", k, j) * s[k] + idx("n", k, j) * e[k] + idx("p", k, j) * i[k] + idx("q", k, j) * r[k];
            infectious += idx("p", k, j) * i[k];
        }
        for k in 0..2 {
            inflow[k] += beta[j] * idx("m", k, j) * s[k] * infectious / present;
        }
    }
    let mut ds = [0.0; 2];
    let mut de = [0.0; 2];
    let mut di = [0.0; 2];
    let mut dr = [0.0; 2];
    for k in 0..2 {
        let c = |name: &str| g(p, &format!("{name}{}", k + 1));
        let (pi, mu, nu, gamma, delta, eta) = (c("Pi"), c("mu"), c("nu"), c("gamma"), c("delta"), c("eta"));
        ds[k] = pi - inflow[k] + eta * r[k] - mu * s[k];
        de[k] = inflow[k] - (nu + mu) * e[k];
        di[k] = nu * e[k] - (gamma + delta + mu) * i[k];
        dr[k] = gamma * i[k] - (eta + mu) * r[k];
    }
    vec![ds[0], ds[1], de[0], de[1], di[0], di[1], dr[0], dr[1]]
}

/// Forward Euler from `x0`; returns `steps + 1` states.
pub fn euler(id: &str, p: &Bindings, x0: &[f64], dt: f64, steps: usize) -> Vec<Vec<f64>> {
    let mut out = vec![x0.to_vec()];
    let mut x = x0.to_vec();
    for _ in 0..steps {
        let f = ode_rhs(id, p, &x);
        for (xi, fi) in x.iter_mut().zip(&f) {
            *xi += dt * fi;
        }
        out.push(x.clone());
    }
    out
}

/// Positive root of `z = 1 - exp(-r0 z)`, located by scanning then bisecting.
pub fn final_size_fraction(r0: f64) -> f64 {
    let h = |z: f64| z - 1.0 + (-r0 * z).exp();
    let steps = 100_000;
    let mut lo = f64::NAN;
    for k in 1..=steps {
        let (a, b) = ((k - 1) as f64 / steps as f64, k as f64 / steps as f64);
        if k > 1 && h(a) < 0.0 && h(b) >= 0.0 {
            lo = a;
            break;
        }
    }
    let mut hi = lo + 1.0 / steps as f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn dmatrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

/// Eigenvalues as (re, im) pairs.
pub fn eigen(a: &DMatrix<f64>) -> Vec<(f64, f64)> {
    a.complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect()
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    eigen(a).into_iter().map(|(re, im)| re.hypot(im)).fold(0.0, f64::max)
}
