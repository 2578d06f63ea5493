mod common;

use cvar_mdp::chain::{
    check_ergodicity, potentials, stationary_distribution, total_variation, transient_distribution, PolicyChain,
};
use cvar_mdp::document::ModelDocument;
use cvar_mdp::mdp::{induced_cost, induced_matrix, mix_policies, Policy};
use cvar_mdp::risk::{evaluate, long_run_cvar, pseudo_cost_table, pseudo_cvar, RiskParams};
use proptest::prelude::*;

use common::*;

fn instance() -> impl Strategy<Value = (u64, f64)> {
    (any::<u64>(), 0.05f64..0.95)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn stationary_law_is_invariant((seed, _) in instance()) {
        let mut r = rng(seed);
        let m = random_instance(&mut r, 6, 3);
        let d = Policy::Deterministic(random_actions(&mut r, &m));
        let p = induced_matrix(&m, &d).unwrap();
        prop_assert!(check_ergodicity(&p).is_ergodic());
        let pi = stationary_distribution(&p).unwrap();
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let moved = p.matrix().left_mul(&pi);
        prop_assert!(total_variation(&moved, &pi) < 1e-12);
        prop_assert!(total_variation(&pi, &power_stationary(&m, &d)) < 1e-10);
        let far = transient_distribution(&m, &d, &vec![1.0 / m.n_states() as f64; m.n_states()], 500).unwrap();
        prop_assert!(total_variation(&far, &pi) < 1e-9);
    }

    #[test]
    fn potentials_solve_the_poisson_equation((seed, alpha) in instance()) {
        let mut r = rng(seed);
        let m = random_instance(&mut r, 6, 3);
        let d = Policy::Deterministic(random_actions(&mut r, &m));
        let params = RiskParams::cvar(alpha).unwrap();
        let cost = pseudo_cost_table(&m, 3.0, &params);
        let g = potentials(&m, &d, &cost).unwrap();
        let p = induced_matrix(&m, &d).unwrap();
        let c = induced_cost(&m, &d, &cost).unwrap();
        prop_assert!(g.poisson_residual(&p, c.as_slice()) < 1e-9);
        let pi = stationary_distribution(&p).unwrap();
        prop_assert!(pi.iter().zip(&g.g).map(|(a, b)| a * b).sum::<f64>().abs() < 1e-9);
        prop_assert!((g.average - pseudo_cvar(&m, &d, 3.0, &params).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn cvar_orderings((seed, alpha) in instance()) {
        let mut r = rng(seed);
        let m = random_instance(&mut r, 5, 3);
        let d = Policy::Deterministic(random_actions(&mut r, &m));
        let params = RiskParams::cvar(alpha).unwrap();
        let e = evaluate(&m, &d, &params).unwrap();
        prop_assert!(e.cvar >= e.var - 1e-12);
        prop_assert!(e.cvar >= e.mean_cost - 1e-12);
        prop_assert!((e.cvar - e.pseudo_cvar_at_var).abs() < 1e-12);
        prop_assert!((e.cvar - oracle_cvar(&m, &d, alpha)).abs() < 1e-9);
        prop_assert!((e.mean_cost - oracle_mean(&m, &d)).abs() < 1e-9);
        for y in [-1.0, 0.0, 2.5, 7.0, 9.0] {
            prop_assert!(pseudo_cvar(&m, &d, y, &params).unwrap() >= e.cvar - 1e-12);
        }
    }

    #[test]
    fn cvar_is_nondecreasing_in_alpha(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = random_instance(&mut r, 5, 3);
        let d = Policy::Deterministic(random_actions(&mut r, &m));
        let values: Vec<f64> = [0.1, 0.3, 0.5, 0.7, 0.9]
            .iter()
            .map(|&a| long_run_cvar(&m, &d, &RiskParams::cvar(a).unwrap()).unwrap().cvar)
            .collect();
        prop_assert!(values.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn mixture_endpoints((seed, alpha) in instance()) {
        let mut r = rng(seed);
        let m = random_instance(&mut r, 5, 3);
        let d = Policy::Deterministic(random_actions(&mut r, &m));
        let d2 = Policy::Deterministic(random_actions(&mut r, &m));
        let params = RiskParams::cvar(alpha).unwrap();
        let c = |p: &Policy<f64>| long_run_cvar(&m, p, &params).unwrap().cvar;
        prop_assert!((c(&mix_policies(&d, &d2, 0.0).unwrap()) - c(&d)).abs() < 1e-12);
        prop_assert!((c(&mix_policies(&d, &d2, 1.0).unwrap()) - c(&d2)).abs() < 1e-12);
        let half = mix_policies(&d, &d2, 0.5).unwrap();
        prop_assert!((c(&half) - oracle_cvar(&m, &half, alpha)).abs() < 1e-9);
    }

    #[test]
    fn transient_law_approaches_the_stationary_one(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = random_instance(&mut r, 6, 3);
        let d = Policy::Deterministic(random_actions(&mut r, &m));
        let pi = stationary_distribution(&induced_matrix(&m, &d).unwrap()).unwrap();
        let mut nu = vec![0.0; m.n_states()];
        nu[0] = 1.0;
        let tv: Vec<f64> = [10, 100, 500]
            .iter()
            .map(|&t| total_variation(&transient_distribution(&m, &d, &nu, t).unwrap(), &pi))
            .collect();
        prop_assert!(tv[1] <= tv[0] + 1e-15 && tv[2] <= tv[1] + 1e-15);
        prop_assert!(tv[2] < 1e-10);
    }

    #[test]
    fn occupation_measure_balances((seed, _) in instance()) {
        let mut r = rng(seed);
        let m = random_instance(&mut r, 6, 3);
        let d = Policy::Deterministic(random_actions(&mut r, &m));
        let x = PolicyChain::new(&m, &d).unwrap().stationary.pi_state_action;
        for i in 0..m.n_states() {
            let out: f64 = x.row(i).iter().sum();
            let inflow: f64 = (0..m.n_states())
                .flat_map(|j| (0..m.n_actions()).map(move |a| (j, a)))
                .map(|(j, a)| x.get(j, a) * m.p(j, a, i))
                .sum();
            prop_assert!((out - inflow).abs() < 1e-8);
        }
    }

    #[test]
    fn potentials_shift_invariance((seed, shift) in (any::<u64>(), -50.0f64..50.0)) {
        let mut r = rng(seed);
        let m = random_instance(&mut r, 5, 2);
        let d = Policy::Deterministic(random_actions(&mut r, &m));
        let cost = m.expected_costs();
        let g = potentials(&m, &d, &cost).unwrap();
        let p = induced_matrix(&m, &d).unwrap();
        let c = induced_cost(&m, &d, &cost).unwrap();
        let moved = cvar_mdp::chain::Potentials { g: g.g.iter().map(|v| v + shift).collect(), average: g.average };
        prop_assert!(moved.poisson_residual(&p, c.as_slice()) < 1e-8);
    }

    #[test]
    fn model_documents_round_trip(seed in any::<u64>()) {
        let m = random_instance(&mut rng(seed), 4, 3);
        let text = serde_json::to_string(&ModelDocument::from_model(&m)).unwrap();
        let back: ModelDocument<f64> = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.to_model().unwrap(), m);
    }
}

#[test]
fn single_precision_instances_agree_with_double() {
    let mut r = rng(99);
    for _ in 0..20 {
        let m = random_instance(&mut r, 4, 3);
        let d = random_actions(&mut r, &m);
        let m32 = ModelDocument::<f32> {
            n_states: m.n_states(),
            n_actions: m.n_actions(),
            transition: ModelDocument::from_model(&m)
                .transition
                .iter()
                .map(|row| row.iter().map(|&p| p as f32).collect())
                .collect(),
            cost: Some(
                m.expected_costs().to_rows().iter().map(|row| row.iter().map(|&c| c as f32).collect()).collect(),
            ),
            transition_cost: None,
        }
        .to_model()
        .unwrap();
        let m64 = cvar_mdp::mdp::MdpModel::from_rows(
            &ModelDocument::from_model(&m).transition,
            &m.expected_costs().to_rows(),
        )
        .unwrap();
        let c64 = long_run_cvar(&m64, &Policy::Deterministic(d.clone()), &RiskParams::cvar(0.7).unwrap()).unwrap();
        let c32 = long_run_cvar(&m32, &Policy::Deterministic(d), &RiskParams::cvar(0.7f32).unwrap()).unwrap();
        approx::assert_relative_eq!(c32.cvar as f64, c64.cvar, epsilon = 1e-4, max_relative = 1e-4);
    }
}
