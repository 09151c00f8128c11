mod common;

use common::{dmatrix, draw, rng, spectral_radius};
use ngmpn::estimate::{estimate_from_series, final_size, rrmse};
use ngmpn::modelzoo::{all, builtin, oracle_r0, patch2_f_vinv, patch2_v};
use ngmpn::ngm::{ngm_r0, ngm_r0_with, NgmOptions};
use ngmpn::petri::{classify_transitions, NetKind};
use ngmpn::sim::{run_spn, run_vapn, SpnOptions};
use proptest::prelude::*;

fn close(u: f64, v: f64, rel: f64) -> bool {
    (u - v).abs() <= rel * u.abs().max(v.abs()).max(1.0)
}

fn entry_seed() -> impl Strategy<Value = (usize, u64)> {
    (0usize..9, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rrmse_is_scale_invariant(rows in prop::collection::vec((0.1f64..10.0, 0.1f64..10.0), 1..30), c in 0.01f64..100.0) {
        let scaled: Vec<(f64, f64)> = rows.iter().map(|&(a, h)| (c * a, c * h)).collect();
        let (u, v) = (rrmse(&rows).unwrap(), rrmse(&scaled).unwrap());
        prop_assert!(close(u, v, 1e-12), "{u} vs {v}");
    }

    #[test]
    fn final_size_inverts_estimator(r0 in 1.05f64..8.0, s0 in 0.5f64..1.0, immune_frac in 0.0f64..0.3) {
        let immune = immune_frac * (1.0 - s0);
        let s_inf = final_size(r0, s0, immune);
        prop_assume!(s_inf < s0 * (1.0 - 1e-6));
        let est = estimate_from_series(&[s0, s_inf], 1.0, immune).unwrap();
        prop_assert!(close(est.r0_hat, r0, 1e-9), "{} vs {r0}", est.r0_hat);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn ngm_agrees_with_reference((k, seed) in entry_seed()) {
        let e = &all().unwrap()[k];
        let b = draw(e, &mut rng(seed));
        let r = ngm_r0_with(&e.model, &b, &NgmOptions { pins: e.pins.clone() }).unwrap();
        let want = oracle_r0(e, &b).unwrap();
        prop_assert!((r.r0 - want).abs() <= 1e-9 * (1.0 + want), "{}: {} vs {want}", e.id, r.r0);
        prop_assert!(r.diagnostics.jacobian_fd_max_rel_diff <= 1e-5, "{}", e.id);
    }

    #[test]
    fn covid_r0_ignores_sigma(seed in any::<u64>(), s1 in 0.05f64..2.0, s2 in 0.05f64..2.0) {
        let e = builtin("covid").unwrap();
        let b = draw(&e, &mut rng(seed));
        let opts = NgmOptions { pins: e.pins.clone() };
        let r1 = ngm_r0_with(&e.model, &b.clone().with("sigma", s1), &opts).unwrap().r0;
        let r2 = ngm_r0_with(&e.model, &b.with("sigma", s2), &opts).unwrap().r0;
        prop_assert!(close(r1, r2, 1e-12), "{r1} vs {r2}");
    }

    #[test]
    fn patch_matrices_entrywise(seed in any::<u64>()) {
        let e = builtin("patch2").unwrap();
        let b = draw(&e, &mut rng(seed));
        let r = ngm_r0(&e.model, &b).unwrap();
        let full = e.model.params.merged(&b);
        let (f, _) = patch2_f_vinv(&full).unwrap();
        let v = patch2_v(&full).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!(close(r.f[i][j], f[i][j], 1e-12), "F[{i}][{j}]: {} vs {}", r.f[i][j], f[i][j]);
                prop_assert!(close(r.v[i][j], v[i][j], 1e-12), "V[{i}][{j}]: {} vs {}", r.v[i][j], v[i][j]);
            }
        }
        let fm = dmatrix(&f.iter().map(|row| row.to_vec()).collect::<Vec<_>>());
        let vm = dmatrix(&v.iter().map(|row| row.to_vec()).collect::<Vec<_>>());
        let k = fm * vm.try_inverse().unwrap();
        let rho = spectral_radius(&k);
        prop_assert!(close(r.r0, rho, 1e-9), "{} vs {rho}", r.r0);
    }

    #[test]
    fn closed_nets_conserve_tokens(seed in any::<u64>(), s in 0.0f64..1e4, i in 0.0f64..1e4, r in 0.0f64..1e4) {
        prop_assume!(s + i + r > 0.0);
        for id in ["sirs", "sirs_spn"] {
            let e = builtin(id).unwrap();
            let mut b = e.model.params.merged(&draw(&e, &mut rng(seed)));
            b.bind_marking(&e.model.place_names(), &[s, i, r]);
            let total: f64 = (0..e.model.places.len()).map(|p| e.model.net_flow(p).eval(&b).unwrap()).sum();
            prop_assert!(total.abs() <= 1e-9 * (s + i + r), "{id}: {total}");
        }
    }

    #[test]
    fn flow_table_partitions_transitions((k, seed) in entry_seed()) {
        let e = &all().unwrap()[k];
        let table = classify_transitions(&e.model);
        prop_assert_eq!(table.classes.len(), e.model.transitions.len());
        let mut b = e.model.params.merged(&draw(e, &mut rng(seed)));
        let mut r = rng(seed ^ 1);
        let marking: Vec<f64> = e.model.places.iter().map(|_| rand::Rng::random_range(&mut r, 1.0..100.0)).collect();
        b.bind_marking(&e.model.place_names(), &marking);
        for (slot, &p) in table.infected.iter().enumerate() {
            let mut seen = std::collections::BTreeSet::new();
            for entry in &table.entries[slot] {
                prop_assert!(seen.insert(entry.transition), "{}: transition listed twice", e.id);
            }
            let net = e.model.net_flow(p).eval(&b).unwrap();
            let parts = table.total(slot).eval(&b).unwrap();
            prop_assert!(close(net, parts, 1e-10), "{}: {net} vs {parts}", e.id);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn vapn_markings_stay_nonnegative((k, seed) in entry_seed(), dt in 0.1f64..20.0) {
        let e = &all().unwrap()[k];
        prop_assume!(e.kind == NetKind::Vapn);
        let mut m = e.model.clone();
        m.set_params(&draw(e, &mut rng(seed))).unwrap();
        let traj = run_vapn(&m, 40.0 * dt, dt).unwrap();
        for x in &traj.markings {
            prop_assert!(x.iter().all(|&v| v >= 0.0 && v.is_finite()), "{}: {x:?}", e.id);
        }
    }

    #[test]
    fn vapn_sirs_conserves_total(seed in any::<u64>(), dt in 0.01f64..5.0) {
        let e = builtin("sirs").unwrap();
        let mut m = e.model.clone();
        m.set_params(&draw(&e, &mut rng(seed))).unwrap();
        let n0: f64 = m.initial_marking().iter().sum();
        let traj = run_vapn(&m, 50.0, dt).unwrap();
        for x in &traj.markings {
            let n: f64 = x.iter().sum();
            prop_assert!((n - n0).abs() <= 1e-9 * n0, "{n} vs {n0}");
        }
    }

    #[test]
    fn spn_markings_are_integral_and_conserved(seed in any::<u64>(), stream in 0u64..8) {
        let mut m = builtin("sirs_spn").unwrap().model;
        m.set_init("S", 190.0).unwrap();
        m.set_init("I", 10.0).unwrap();
        let mut opts = SpnOptions::new(30.0, seed);
        opts.stream = stream;
        opts.sample_dt = 0.5;
        let traj = run_spn(&m, &opts).unwrap();
        for x in &traj.markings {
            prop_assert!(x.iter().all(|&v| v >= 0.0 && v.fract() == 0.0), "{x:?}");
            prop_assert_eq!(x.iter().sum::<f64>(), 200.0);
        }
    }
}
