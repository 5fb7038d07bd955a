use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::numerics::gradcheck::max_param_gradient_error;
use crate::numerics::{uniform_grid, Tape};
use crate::physics::{generate_dataset, network_closed_form, steady_state, GenerationConfig, GfmState, Poi};

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn small_config() -> PiLnmConfig {
    PiLnmConfig {
        neural_dim: 2,
        encoder_hidden: 3,
        field_hidden: 4,
        coupling_hidden: 3,
        decoder_hidden: 3,
        condition_steps: 3,
        ..Default::default()
    }
}

fn dataset(horizon: f64, k: usize) -> crate::physics::Dataset {
    let cfg = GenerationConfig {
        horizon,
        ..Default::default()
    };
    generate_dataset(k, (0.5, 5.0), &cfg, 5).unwrap()
}

fn model_for(config: PiLnmConfig, ds: &crate::physics::Dataset, seed: u64) -> PiLnmModel {
    PiLnmModel::new(
        config,
        ds.config.truth.params,
        ds.config.network,
        Normalizer::fit(&ds.trajectories),
        ds.config.dt,
        seed,
    )
}

fn zero_all(m: &mut PiLnmModel) {
    for t in m.params.tensors_mut() {
        t.fill(0.0);
    }
}

/// Random, non-zero weights everywhere (including the zero-initialized
/// output layers), scaled by `scale`.
fn randomize(m: &mut PiLnmModel, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in m.params.tensors_mut() {
        t.mapv_inplace(|_| scale * rng.gen_range(-1.0..1.0));
    }
}

#[test]
fn zero_encoder_gives_head_bias() {
    let mut m = PiLnmModel::new(
        PiLnmConfig::default(),
        GfmParams::default(),
        NetworkConfig::default(),
        Normalizer::identity(),
        0.01,
        0,
    );
    zero_all(&mut m);
    let d = m.latent_dim();
    let bias: Vec<f64> = (0..2 * d).map(|i| 0.05 * i as f64 - 0.6).collect();
    m.params
        .get_mut("enc.head.b")
        .unwrap()
        .assign(&Array2::from_shape_vec((1, 2 * d), bias.clone()).unwrap());
    let post = m.encode(&Array2::zeros((5, 6))).unwrap();
    for i in 0..d {
        assert!((post.mu[i] - bias[i]).abs() < 1e-15);
        assert!((post.sigma[i] - softplus(bias[d + i])).abs() < 1e-15);
        assert!(post.sigma[i] > 0.0);
    }
}

#[test]
fn fresh_encoder_anchors_physics_at_first_sample() {
    let ds = dataset(0.3, 2);
    let m = model_for(PiLnmConfig::default(), &ds, 1);
    let obs = ds.trajectories[0].observations.slice(ndarray::s![0..20, ..]).to_owned();
    let post = m.encode(&obs).unwrap();
    for c in 0..PHYSICS_DIM {
        assert_eq!(post.mu[c], obs[[0, c]]);
        assert!(post.sigma[c] < 0.01 * m.normalizer.std[c]);
    }
}

#[test]
fn encoder_is_deterministic_and_order_sensitive() {
    let ds = dataset(0.3, 1);
    let mut m = model_for(PiLnmConfig::default(), &ds, 3);
    randomize(&mut m, 4, 0.3);
    let obs = ds.trajectories[0].observations.slice(ndarray::s![0..10, ..]).to_owned();
    let a = m.encode(&obs).unwrap();
    assert_eq!(a, m.encode(&obs).unwrap());
    let mut swapped = obs.clone();
    for c in 0..6 {
        swapped.swap([3, c], [6, c]);
    }
    let b = m.encode(&swapped).unwrap();
    assert_ne!(a.mu, b.mu);
}

#[test]
fn encoder_rejects_short_input() {
    let m = model_for(small_config(), &dataset(0.1, 1), 0);
    assert!(matches!(m.encode(&Array2::zeros((1, 6))), Err(Error::Contract(_))));
}

#[test]
fn sampling() {
    let post = Posterior {
        mu: vec![0.5, -1.0, 2.0, 0.0, 3.0],
        sigma: vec![0.1, 2.0, 1e-300, 1.0, 0.5],
    };
    let z = sample_z0(&post, &[0.0; 5]).unwrap();
    assert_eq!(z.to_vec(), post.mu);
    // vanishing σ ignores the noise
    let z = sample_z0(&post, &[0.0, 0.0, 1e6, 0.0, 0.0]).unwrap();
    assert_eq!(z.to_vec()[2], 2.0);
    assert!(sample_z0(&post, &[0.0; 4]).is_err());
}

#[test]
fn sample_mean_converges() {
    let post = Posterior {
        mu: vec![0.3, -1.2, 4.0, 0.0],
        sigma: vec![0.5, 1.5, 0.01, 2.0],
    };
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut sum = [0.0; 4];
    for _ in 0..n {
        let noise: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
        let z = sample_z0(&post, &noise).unwrap().to_vec();
        for i in 0..4 {
            sum[i] += z[i];
        }
    }
    for i in 0..4 {
        let mean = sum[i] / n as f64;
        assert!((mean - post.mu[i]).abs() < 3.0 * post.sigma[i] / (n as f64).sqrt());
    }
}

#[test]
fn reparameterization_gradients() {
    let tape = Tape::new();
    let mu = tape.var(ndarray::arr2(&[[0.1, -0.4, 2.0]]));
    let sigma = tape.var(ndarray::arr2(&[[0.5, 1.0, 0.2]]));
    let noise = ndarray::arr2(&[[1.5, -0.3, 0.7]]);
    for j in 0..3 {
        let z = mu + sigma * tape.constant(noise.clone());
        let g = tape.backward(z.col(j).sum()).unwrap();
        let gm = g.get_or_zeros(mu);
        let gs = g.get_or_zeros(sigma);
        for k in 0..3 {
            assert_eq!(gm[[0, k]], if k == j { 1.0 } else { 0.0 });
            assert_eq!(gs[[0, k]], if k == j { noise[[0, j]] } else { 0.0 });
        }
    }
}

#[test]
fn degenerate_weights_give_bias_dynamics() {
    let ds = dataset(0.1, 1);
    let mut m = model_for(small_config(), &ds, 0);
    zero_all(&mut m);
    let field_bias = ndarray::arr2(&[[0.3, -0.7]]);
    m.params.get_mut("field.out.b").unwrap().assign(&field_bias);
    let corr = ndarray::arr2(&[[0.2, -0.1, 0.4]]);
    m.params.get_mut("coupling.out.b").unwrap().assign(&corr);

    let state = LatentState {
        z_r: [0.1, 1.002, 0.099, 1.01],
        z: vec![0.5, -0.5],
    };
    let load = 2.0;
    let d = m.hybrid_dynamics(&state, 0.0, load).unwrap();
    assert_eq!(d.z, vec![0.3, -0.7]);

    let n = m.normalizer;
    let net = network_closed_form(state.z_r[3], state.z_r[0], load, &m.network_constants());
    let poi = Poi {
        v_t: net[0] + 0.2 * n.std[3],
        p: net[1] - 0.1 * n.std[4],
        q: net[2] + 0.4 * n.std[5],
    };
    let expect = crate::physics::gfm_derivatives(&GfmState::from_array(state.z_r), &poi, &m.approx).unwrap();
    for (a, b) in d.z_r.iter().zip(expect.to_array()) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn physics_equilibrium_is_a_fixed_point() {
    let ds = dataset(0.1, 1);
    let m = model_for(small_config(), &ds, 0);
    // fresh model: zero field output and zero coupling correction
    let net = ds.config.network.with_load(ds.config.truth.params.p_set);
    let (eq, _) = steady_state(&m.approx, &net).unwrap();
    let state = LatentState {
        z_r: eq.to_array(),
        z: vec![0.3, -0.2],
    };
    let d = m.hybrid_dynamics(&state, 0.0, net.p_load).unwrap();
    assert!(d.z_r.iter().all(|v| v.abs() < 1e-8), "{:?}", d.z_r);
    assert!(d.z.iter().all(|v| *v == 0.0));
}

#[test]
fn dynamics_gradient_matches_finite_differences() {
    let ds = dataset(0.1, 1);
    let mut m = model_for(small_config(), &ds, 2);
    randomize(&mut m, 9, 0.4);
    let state = ndarray::arr2(&[[-0.05, 1.001, 0.1, 1.005, 0.2, -0.3]]);
    let loss = |ps: &crate::numerics::ParamSet| -> (f64, Vec<crate::numerics::Tensor>) {
        let tape = Tape::new();
        let bp = ps.bind(&tape);
        let g = ElboGraph::new(&m, &bp, &tape);
        let load = tape.constant(ndarray::arr2(&[[1.5]]));
        let d = g.dynamics(tape.constant(state.clone()), 0.0, load).unwrap();
        let out = d.square().sum();
        let grads = tape.backward(out).unwrap();
        (out.item(), bp.gradients(&grads))
    };
    let (_, analytic) = loss(&m.params);
    let (err, name, i) = max_param_gradient_error(&m.params, &analytic, |p| loss(p).0, 1e-5, 1e-6);
    assert!(err < 1e-4, "{name}[{i}] rel err {err}");
}

#[test]
fn decode_reads_physics_latents() {
    let ds = dataset(0.1, 1);
    let mut m = model_for(small_config(), &ds, 0);
    let s = LatentState {
        z_r: [0.1, 1.0, 0.2, 1.01],
        z: vec![0.7, -0.1],
    };
    let x = m.decode(&s);
    assert_eq!(&x[..4], &[0.1, 1.0, 0.2, 1.01]);

    zero_all(&mut m);
    m.params
        .get_mut("decoder.out.b")
        .unwrap()
        .assign(&ndarray::arr2(&[[0.25, -0.5]]));
    let x = m.decode(&s);
    let n = m.normalizer;
    assert!((x[4] - (n.mean[4] + 0.25 * n.std[4])).abs() < 1e-15);
    assert!((x[5] - (n.mean[5] - 0.5 * n.std[5])).abs() < 1e-15);
}

#[test]
fn rollout_single_point_and_constant_trajectory() {
    let ds = dataset(0.1, 1);
    let m = model_for(small_config(), &ds, 0);
    let z0 = LatentState {
        z_r: [0.0, 1.0, 0.1, 1.0],
        z: vec![0.1, 0.2],
    };
    let out = m.rollout(&z0, &[0.0], 1.0).unwrap();
    assert_eq!(out, vec![z0.clone()]);

    let net = ds.config.network.with_load(1.0);
    let (eq, _) = steady_state(&m.approx, &net).unwrap();
    let z0 = LatentState {
        z_r: eq.to_array(),
        z: vec![0.1, 0.2],
    };
    let out = m.rollout(&z0, &uniform_grid(0.0, 0.01, 100), 1.0).unwrap();
    let last = out.last().unwrap();
    for (a, b) in last.to_vec().iter().zip(z0.to_vec()) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn substep_refinement_converges() {
    let ds = dataset(0.1, 1);
    let mut m = model_for(small_config(), &ds, 0);
    randomize(&mut m, 21, 0.05);
    let z0 = LatentState {
        z_r: [-0.05, 1.0, 0.1, 1.0],
        z: vec![0.1, -0.2],
    };
    let times = uniform_grid(0.0, 0.01, 100);
    m.config.substeps = 1;
    let a = m.rollout(&z0, &times, 2.0).unwrap();
    m.config.substeps = 2;
    let b = m.rollout(&z0, &times, 2.0).unwrap();
    let (ea, eb) = (a.last().unwrap().to_vec(), b.last().unwrap().to_vec());
    let diff = ea.iter().zip(&eb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-6, "{diff}");
}

#[test]
fn kl_closed_form() {
    assert_eq!(gaussian_kl(&[0.0; 5], &[1.0; 5]), 0.0);
    assert!((gaussian_kl(&[1.0], &[1.0]) - 0.5).abs() < 1e-15);
    let kl = gaussian_kl(&[0.3, -2.0], &[0.2, 3.0]);
    let manual = 0.5 * (0.04 + 0.09 - 1.0 - 0.04f64.ln()) + 0.5 * (9.0 + 4.0 - 1.0 - 9.0f64.ln());
    assert!((kl - manual).abs() < 1e-14);
}

#[test]
fn perfect_reconstruction_leaves_normalization_constant() {
    let sigma = 0.01;
    let x = [0.1, -0.3, 2.0, 0.5];
    let ll = gaussian_log_likelihood(&x, &x, sigma);
    let expect = -4.0 * (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
    assert!((ll - expect).abs() < 1e-12);
}

#[test]
fn elbo_log_likelihood_at_perfect_fit() {
    // a window at the pre-event equilibrium with matching load is reproduced
    // exactly once P/Q are pinned by the decoder bias
    let ds = dataset(0.05, 1);
    let mut m = model_for(small_config(), &ds, 0);
    let net = ds.config.network.with_load(ds.config.truth.params.p_set);
    let (eq, poi) = steady_state(&ds.config.truth.params, &net).unwrap();
    m.approx = ds.config.truth.params;
    zero_all(&mut m);
    let n = m.normalizer;
    m.params.get_mut("decoder.out.b").unwrap().assign(&ndarray::arr2(&[[
        (poi.p - n.mean[4]) / n.std[4],
        (poi.q - n.mean[5]) / n.std[5],
    ]]));
    // σ → tiny for every latent, μ on the physics anchor and 0 elsewhere
    let d = m.latent_dim();
    let mut head = Array2::zeros((1, 2 * d));
    head.slice_mut(ndarray::s![.., d..]).fill(-40.0);
    m.params.get_mut("enc.head.b").unwrap().assign(&head);

    let row = [eq.theta, eq.omega, eq.v_err, eq.v_int, poi.p, poi.q];
    let traj = crate::physics::Trajectory {
        times: uniform_grid(0.0, 0.01, 4),
        observations: Array2::from_shape_fn((5, 6), |(_, c)| row[c]),
        load: net.p_load,
        seed: 0,
    };
    let batch = Batch::whole(&traj).unwrap();
    let metrics = m.loss(&batch, &Array2::zeros((1, d))).unwrap();
    let norm_const: f64 = m
        .config
        .sigma_obs
        .iter()
        .map(|s| -5.0 * (s * (2.0 * std::f64::consts::PI).sqrt()).ln())
        .sum();
    assert!(metrics.reconstruction_mse < 1e-20, "{metrics:?}");
    assert!((metrics.log_likelihood - norm_const).abs() < 1e-6 * norm_const.abs());
}

#[test]
fn miniature_elbo_gradient_matches_finite_differences() {
    let ds = dataset(1.0, 6);
    let mut m = model_for(small_config(), &ds, 7);
    randomize(&mut m, 8, 0.3);
    let traj = &ds.trajectories[2];
    let batch = Batch::from_windows(&[traj], 0, 5).unwrap();
    let noise = ndarray::arr2(&[[0.3, -0.8, 1.1, 0.2, -0.5, 0.9]]);
    let (_, analytic) = m.loss_and_gradients(&batch, &noise).unwrap();
    let mut probe = m.clone();
    let (err, name, i) = max_param_gradient_error(
        &m.params,
        &analytic,
        |ps| {
            probe.params = ps.clone();
            probe.loss(&batch, &noise).unwrap().loss
        },
        1e-5,
        1e-3,
    );
    assert!(err < 1e-3, "{name}[{i}] rel err {err}");
}

#[test]
fn kl_is_non_negative_for_random_encoders() {
    let ds = dataset(0.3, 3);
    for seed in 0..5 {
        let mut m = model_for(small_config(), &ds, seed);
        randomize(&mut m, seed + 100, 1.0);
        let post = m.encode(&ds.trajectories[0].observations).unwrap();
        assert!(gaussian_kl(&post.mu, &post.sigma) >= -1e-12);
    }
}

#[test]
fn elbo_shape_errors() {
    let ds = dataset(0.1, 2);
    let m = model_for(small_config(), &ds, 0);
    let refs: Vec<_> = ds.trajectories.iter().collect();
    let batch = Batch::from_windows(&refs, 0, 5).unwrap();
    assert!(matches!(m.loss(&batch, &Array2::zeros((1, 6))), Err(Error::Contract(_))));
}

#[test]
fn prior_is_frozen_by_training_steps() {
    let ds = dataset(0.3, 4);
    let mut m = model_for(small_config(), &ds, 1);
    let before = m.approx;
    let refs: Vec<_> = ds.trajectories.iter().collect();
    let batch = Batch::from_windows(&refs, 0, 10).unwrap();
    let mut opt = crate::numerics::AdamState::new(m.params.tensors(), 0.02);
    for _ in 0..3 {
        let (_, g) = m.loss_and_gradients(&batch, &Array2::zeros((4, 6))).unwrap();
        crate::numerics::adam_update(m.params.tensors_mut(), &g, &mut opt).unwrap();
    }
    assert_eq!(m.approx, before);
}
