use ndarray::Array2;
use pilnm_core::normalize::Normalizer;
use pilnm_core::numerics::tape::tanh;
use pilnm_core::numerics::{adam_update, ode_solve, uniform_grid, AdamState, NumericsError};
use pilnm_core::physics::dataset::{draw_events, read_trajectory_csv, write_trajectory_csv};
use pilnm_core::physics::network::power_mismatch;
use pilnm_core::physics::{
    gfm_derivatives, network_closed_form, perturb_params, solve_network, steady_state, GfmParams, NetworkConfig,
    NetworkConstants, Trajectory,
};
use pilnm_core::pilnm::gaussian_kl;
use pilnm_core::pipeline::smooth;
use proptest::prelude::*;

fn params_strategy() -> impl Strategy<Value = GfmParams> {
    (0.0..0.3f64, any::<u64>()).prop_map(|(f, seed)| perturb_params(&GfmParams::default(), f, seed).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_network_agrees_with_newton(e in 0.9..1.15f64, theta in -0.3..0.6f64, load in 0.5..5.0f64) {
        let net = NetworkConfig::default().with_load(load);
        let sol = solve_network(e, theta, &net, 0.1).unwrap();
        let [a, b] = power_mismatch(e, theta, sol.voltage, &net, 0.1);
        prop_assert!(a.hypot(b) < 1e-10);
        let [v, p, q] = network_closed_form(e, theta, load, &NetworkConstants::new(&net, 0.1));
        prop_assert!((v - sol.poi.v_t).abs() < 1e-9);
        prop_assert!((p - sol.poi.p).abs() < 1e-9);
        prop_assert!((q - sol.poi.q).abs() < 1e-9);
    }

    #[test]
    fn steady_state_is_stationary(params in params_strategy(), load in 0.5..5.0f64) {
        let net = NetworkConfig::default().with_load(load);
        let (x, poi) = steady_state(&params, &net).unwrap();
        let d = gfm_derivatives(&x, &poi, &params).unwrap();
        prop_assert!(d.to_array().iter().all(|v| v.abs() < 1e-9), "{:?}", d);
        prop_assert_eq!(x.omega, 1.0);
    }

    #[test]
    fn perturbation_stays_in_band(fraction in 0.0..0.99f64, seed in any::<u64>()) {
        let base = GfmParams::default();
        let p = perturb_params(&base, fraction, seed).unwrap();
        for (a, b) in [(p.m_p, base.m_p), (p.m_q, base.m_q), (p.k_pv, base.k_pv), (p.k_iv, base.k_iv)] {
            prop_assert!(a >= b * (1.0 - fraction) - 1e-15 && a <= b * (1.0 + fraction) + 1e-15);
        }
        prop_assert_eq!(GfmParams { m_p: base.m_p, m_q: base.m_q, k_pv: base.k_pv, k_iv: base.k_iv, ..p }, base);
    }

    #[test]
    fn kl_is_non_negative(mu in -5.0..5.0f64, sigma in 1e-3..10.0f64) {
        let kl = gaussian_kl(&[mu], &[sigma]);
        prop_assert!(kl >= 0.0);
        prop_assert!(kl > 0.0 || (mu == 0.0 && sigma == 1.0));
    }

    #[test]
    fn rk4_tracks_linear_decay(rate in 0.1..3.0f64, steps in 10usize..200) {
        let h = 1.0 / steps as f64;
        let times = uniform_grid(0.0, h, steps);
        let mut rhs = |s: &Vec<f64>, _t: f64| -> Result<Vec<f64>, NumericsError> { Ok(vec![-rate * s[0]]) };
        let out = ode_solve(&mut rhs, vec![1.0], &times, 1).unwrap();
        // local error bound of classical RK4 on a linear decay
        let bound = (rate * h).powi(4) * rate / 50.0 + 1e-14;
        prop_assert!((out[steps][0] - (-rate).exp()).abs() < bound);
    }

    #[test]
    fn normalization_round_trips(values in prop::collection::vec(-10.0..10.0f64, 12)) {
        let trajectories = vec![Trajectory {
            times: vec![0.0, 1.0],
            observations: Array2::from_shape_vec((2, 6), values.clone()).unwrap(),
            load: 1.0,
            seed: 0,
        }];
        let n = Normalizer::fit(&trajectories);
        let x = &trajectories[0].observations;
        let back = n.denormalize(&n.normalize(x));
        for (a, b) in back.iter().zip(x.iter()) {
            prop_assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
        prop_assert!(n.std.iter().all(|s| *s > 0.0));
    }

    #[test]
    fn trajectory_csv_is_bit_exact(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 18)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let t = Trajectory {
            times: vec![0.0, 0.01, 0.02],
            observations: Array2::from_shape_vec((3, 6), values).unwrap(),
            load: 1.0,
            seed: 0,
        };
        write_trajectory_csv(&path, &t).unwrap();
        let (times, obs) = read_trajectory_csv(&path).unwrap();
        prop_assert_eq!(times, t.times);
        let bits = |a: &Array2<f64>| a.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&obs), bits(&t.observations));
    }

    #[test]
    fn fast_tanh_matches_libm(x in -40.0..40.0f64) {
        prop_assert!((tanh(x) - x.tanh()).abs() < 4e-16);
    }

    #[test]
    fn event_draws_are_reproducible_and_in_range(k in 1usize..50, lo in 0.0..3.0f64, width in 0.0..3.0f64, seed in any::<u64>()) {
        let a = draw_events(k, (lo, lo + width), seed);
        prop_assert_eq!(&a, &draw_events(k, (lo, lo + width), seed));
        prop_assert!(a.iter().all(|(l, _)| *l >= lo && *l <= lo + width));
    }

    #[test]
    fn first_adam_step_is_bounded_by_lr(g in prop::collection::vec(-1e3..1e3f64, 6), lr in 1e-4..0.1f64) {
        let mut params = vec![Array2::<f64>::zeros((2, 3))];
        let grads = vec![Array2::from_shape_vec((2, 3), g).unwrap()];
        let mut state = AdamState::new(&params, lr);
        adam_update(&mut params, &grads, &mut state).unwrap();
        for (p, g) in params[0].iter().zip(grads[0].iter()) {
            prop_assert!(p.abs() <= lr * (1.0 + 1e-12));
            prop_assert!(*g == 0.0 || p.signum() == -g.signum());
        }
    }

    #[test]
    fn smoothing_preserves_constants(c in -5.0..5.0f64, n in 1usize..40, w in 1usize..15) {
        prop_assert!(smooth(&vec![c; n], w).iter().all(|v| (v - c).abs() < 1e-12));
    }
}
