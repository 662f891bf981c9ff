mod common;

use common::{fd_grad, rel_err, simpson};
use myogail::explore_obj::*;
use myogail::policy_dist::{ActionBox, HeadSpec, PolicyFamily};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_box(d: usize, rng: &mut ChaCha8Rng) -> ActionBox {
    let low: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..0.5)).collect();
    let high = low.iter().map(|l| l + rng.random_range(0.3..2.0)).collect();
    ActionBox::new(low, high).unwrap()
}

fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.6..0.6));
    &a * a.transpose() + DMatrix::from_diagonal(&DVector::from_fn(d, |_, _| rng.random_range(0.1..0.8)))
}

// E_U[log u − log φ(x)] estimated from uniform draws, with its standard error.
fn mc_kl(mean: &[f64], cov: &DMatrix<f64>, b: &ActionBox, n: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let d = mean.len();
    let inv = cov.clone().try_inverse().unwrap();
    let log_det = cov.determinant().ln();
    let log_u = -b.log_volume();
    let mut sum = 0.0;
    let mut sq = 0.0;
    for _ in 0..n {
        let x = DVector::from_fn(d, |i, _| rng.random_range(b.low[i]..b.high[i]) - mean[i]);
        let log_phi = -0.5 * (x.dot(&(&inv * &x)) + log_det + d as f64 * (2.0 * std::f64::consts::PI).ln());
        let v = log_u - log_phi;
        sum += v;
        sq += v * v;
    }
    let m = sum / n as f64;
    (m, ((sq / n as f64 - m * m) / n as f64).sqrt())
}

#[test]
fn kl_agrees_with_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for k in 0..20 {
        let d = 1 + k % 5;
        let b = random_box(d, &mut rng);
        let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.5)).collect();
        let cov = if k % 2 == 0 {
            DMatrix::from_diagonal(&DVector::from_fn(d, |_, _| rng.random_range(0.05..1.5)))
        } else {
            random_spd(d, &mut rng)
        };
        let kl = kl_uniform_to_gaussian(&mean, &cov, &b).unwrap();
        let (m, se) = mc_kl(&mean, &cov, &b, 100_000, &mut rng);
        assert!((kl - m).abs() < 3.0 * se, "instance {k}: {kl} vs {m} ± {se}");
    }
}

#[test]
fn one_dimensional_quadrature_oracle() {
    let b = ActionBox::new(vec![-1.0], vec![1.0]).unwrap();
    let kl = kl_uniform_to_gaussian(&[0.0], &DMatrix::identity(1, 1), &b).unwrap();
    let mut f = |x: f64| 0.5 * (0.5f64.ln() + 0.5 * x * x + 0.5 * (2.0 * std::f64::consts::PI).ln());
    let quad = simpson(&mut f, -1.0, 1.0, 1000);
    assert!((kl - quad).abs() < 1e-12);
    assert!((kl - 0.3925).abs() < 1e-4);
}

#[test]
fn kl_has_interior_minimum_in_scale() {
    let b = ActionBox::new(vec![0.0], vec![1.0]).unwrap();
    let scan: Vec<f64> = (1..400)
        .map(|k| {
            let s = 1e-3 * 1.03f64.powi(k);
            kl_uniform_to_gaussian(&[0.5], &DMatrix::from_element(1, 1, s), &b).unwrap()
        })
        .collect();
    let (imin, _) = scan.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    assert!(imin > 0 && imin < scan.len() - 1);
    assert!(scan[..imin].windows(2).all(|w| w[1] <= w[0]));
    assert!(scan[imin..].windows(2).all(|w| w[1] >= w[0]));
    // the minimizer is the uniform variance w²/12
    let s_star = 1e-3 * 1.03f64.powi(imin as i32 + 1);
    assert!((s_star / (1.0 / 12.0) - 1.0).abs() < 0.04);
}

#[test]
fn closed_form_and_gradient_form_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for k in 0..50 {
        let d = 1 + k % 5;
        let b = random_box(d, &mut rng);
        let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let cov = random_spd(d, &mut rng);
        let kl = kl_uniform_to_gaussian(&mean, &cov, &b).unwrap();
        let (v, _, _) = kl_uniform_to_gaussian_grad(&mean, &cov, &b).unwrap();
        assert!((kl - v).abs() < 1e-9 * kl.abs().max(1.0), "{kl} vs {v}");
    }
}

#[test]
fn kl_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in 0..100 {
        let d = 1 + k % 4;
        let b = random_box(d, &mut rng);
        let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let cov = random_spd(d, &mut rng);
        let (_, dm, dc) = kl_uniform_to_gaussian_grad(&mean, &cov, &b).unwrap();
        let mut f = |m: &[f64]| kl_uniform_to_gaussian(m, &cov, &b).unwrap();
        assert!(rel_err(dm.as_slice(), &fd_grad(&mut f, &mean)) < 1e-6);
        // symmetric perturbations of the covariance
        let flat: Vec<f64> = cov.iter().copied().collect();
        let mut g = |c: &[f64]| {
            let m = DMatrix::from_column_slice(d, d, c);
            kl_uniform_to_gaussian(&mean, &(0.5 * (&m + m.transpose())), &b).unwrap()
        };
        let fd = fd_grad(&mut g, &flat);
        assert!(rel_err(dc.as_slice(), &fd) < 1e-6);
    }
}

fn head_points(family: PolicyFamily, rng: &mut ChaCha8Rng) -> (HeadSpec, Vec<Vec<f64>>, Vec<f64>, Option<DMatrix<f64>>) {
    let d = 3;
    let spec = HeadSpec::new(family, ActionBox::unit(d), 2).unwrap();
    let raws: Vec<Vec<f64>> = (0..5).map(|_| (0..d).map(|_| rng.random_range(-2.0..3.0)).collect()).collect();
    let free: Vec<f64> = (0..spec.free_dim()).map(|_| rng.random_range(-1.5..0.5)).collect();
    let w = (family == PolicyFamily::LatentGaussian).then(|| DMatrix::from_fn(d, 2, |_, _| rng.random_range(-1.0..1.0)));
    (spec, raws, free, w)
}

#[test]
fn flipped_kl_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for family in [PolicyFamily::Gaussian, PolicyFamily::LatentGaussian] {
        for _ in 0..100 {
            let (spec, raws, free, w) = head_points(family, &mut rng);
            let b = spec.bounds.clone();
            let loss = flipped_kl_loss(&spec.prepare(&free, w.as_ref()).unwrap(), &raws, &b, 0.01).unwrap();
            let n = raws.len();
            let d = spec.action_dim;
            let mut x0: Vec<f64> = raws.iter().flatten().copied().collect();
            x0.extend(&free);
            let mut f = |x: &[f64]| {
                let rs: Vec<Vec<f64>> = (0..n).map(|k| x[k * d..(k + 1) * d].to_vec()).collect();
                let h = spec.prepare(&x[n * d..], w.as_ref()).unwrap();
                flipped_kl_loss(&h, &rs, &b, 0.01).unwrap().value
            };
            let fd = fd_grad(&mut f, &x0);
            let mut an: Vec<f64> = loss.raw.iter().flatten().copied().collect();
            an.extend(&loss.free);
            assert!(rel_err(&an, &fd) < 1e-5, "{}: {}", family.name(), rel_err(&an, &fd));
        }
    }
}

#[test]
fn flipped_kl_pulls_mean_into_box() {
    let spec = HeadSpec::new(PolicyFamily::Gaussian, ActionBox::unit(2), 0).unwrap();
    let head = spec.prepare(&spec.init_free(0.5, 1.0), None).unwrap();
    let loss = flipped_kl_loss(&head, &[vec![3.0, -2.0]], &spec.bounds, 0.01).unwrap();
    // descent direction −grad points back towards [0, 1]
    assert!(loss.raw[0][0] > 0.0 && loss.raw[0][1] < 0.0);
    let centred = flipped_kl_loss(&head, &[vec![0.5, 0.5]], &spec.bounds, 0.01).unwrap();
    assert!(centred.raw[0].iter().all(|g| g.abs() < 1e-15));
}

#[test]
fn flipped_kl_refuses_bounded_heads() {
    let spec = HeadSpec::new(PolicyFamily::BetaAlphaBeta, ActionBox::unit(1), 0).unwrap();
    let head = spec.prepare(&[], None).unwrap();
    assert!(flipped_kl_loss(&head, &[vec![0.0, 0.0]], &spec.bounds, 0.01).is_err());
}

proptest! {
    #[test]
    fn cross_term_vanishes_for_diagonal_covariance(
        d in 1usize..6,
        seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_box(d, &mut rng);
        let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let cov = DMatrix::from_diagonal(&DVector::from_fn(d, |_, _| rng.random_range(0.05..2.0)));
        prop_assert!(kl_cross_term(&mean, &cov, &b).unwrap() == 0.0);
    }

    #[test]
    fn translation_invariance(shift in -3.0f64..3.0, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 1 + (seed % 4) as usize;
        let b = random_box(d, &mut rng);
        let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cov = random_spd(d, &mut rng);
        let moved = ActionBox::new(b.low.iter().map(|v| v + shift).collect(), b.high.iter().map(|v| v + shift).collect()).unwrap();
        let mm: Vec<f64> = mean.iter().map(|v| v + shift).collect();
        let a = kl_uniform_to_gaussian(&mean, &cov, &b).unwrap();
        let c = kl_uniform_to_gaussian(&mm, &cov, &moved).unwrap();
        prop_assert!((a - c).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn mean_gradient_is_odd_under_reflection(m in -3.0f64..4.0, s in 0.05f64..2.0, lo in -1.0f64..0.5, w in 0.2f64..2.0) {
        let b = ActionBox::new(vec![lo], vec![lo + w]).unwrap();
        let c = lo + 0.5 * w;
        let cov = DMatrix::from_element(1, 1, s);
        let (_, g1, _) = kl_uniform_to_gaussian_grad(&[m], &cov, &b).unwrap();
        let (_, g2, _) = kl_uniform_to_gaussian_grad(&[2.0 * c - m], &cov, &b).unwrap();
        prop_assert!((g1[0] + g2[0]).abs() < 1e-9 * g1[0].abs().max(1.0));
    }

    #[test]
    fn oob_penalty_is_nonpositive_and_smooth(a in -3.0f64..4.0, beta in 0.0f64..5.0) {
        let b = ActionBox::unit(1);
        prop_assert!(oob_penalty(&[a], &b, beta) <= 0.0);
        let h = 1e-7;
        for edge in [0.0, 1.0] {
            // value and one-sided slopes vanish at the bounds
            prop_assert!(oob_penalty(&[edge], &b, beta) == 0.0);
            let slope_out = (oob_penalty(&[edge + if edge == 0.0 { -h } else { h }], &b, beta)) / h;
            prop_assert!(slope_out.abs() < 1e-6 * beta.max(1.0));
        }
    }

    #[test]
    fn target_entropy_gradient_vanishes_only_at_target(h in -5.0f64..5.0, t in -5.0f64..5.0) {
        let mut c = ObjectiveConfig::with_mode(ObjectiveMode::TargetEntropy);
        c.h_target = t;
        let g = target_entropy_loss_grad(h, &c);
        prop_assert!((g == 0.0) == (h == t));
    }
}
