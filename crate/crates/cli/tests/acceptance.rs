//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion; exits nonzero when a criterion outside
//! `KNOWN_FAILURES` fails.
//!
//! The training criteria (7, 8, 9) share one batch of full-length runs driven
//! through the harness, configured by the files in `configs/`.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use myogail::explore_obj::{flipped_kl_loss, kl_uniform_to_gaussian, kl_uniform_to_gaussian_grad, ObjectiveConfig, ObjectiveMode};
use myogail::learn::{
    conjugate_gradient, discriminator_loss_grad, fisher_vector_product, random_baseline_run, FixedNorm, Mlp, MlpCache, Policy, PolicyConfig,
    TrpoConfig, METRICS_COLUMNS,
};
use myogail::mtu_sim::{activation_step, filter_substeps, rollout_expert, ExpertConfig, LimbConfig, MtuParams};
use myogail::policy_dist::special::{sigmoid, softplus, softplus_inv};
use myogail::policy_dist::*;
use myogail::synergy::{action_matrix, fit_ica, fit_synergies, IcaOptions};
use myogail_cli::{read_metrics, seed_dir, RunConfig, RunManifest};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn fd_grad(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-8)
}

fn simpson(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
    }
    s * h / 3.0
}

fn cat(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Random head parameters for a family, kept away from the Beta projection switch.
fn random_head(family: PolicyFamily, dim: usize, rng: &mut ChaCha8Rng) -> (HeadSpec, Vec<f64>, Vec<f64>, Option<DMatrix<f64>>) {
    let k = 4;
    let spec = HeadSpec::new(family, ActionBox::unit(dim), k).unwrap();
    loop {
        let u = |rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64| -> Vec<f64> { (0..n).map(|_| rng.random_range(lo..hi)).collect() };
        let (raw, free, w) = match family {
            PolicyFamily::Gaussian => (u(rng, dim, -1.5, 1.5), u(rng, dim, -1.5, 0.5), None),
            PolicyFamily::SquashedGaussian => (u(rng, dim, -2.0, 2.0), u(rng, dim, -1.5, 0.5), None),
            PolicyFamily::BetaAlphaBeta => (u(rng, 2 * dim, -3.0, 3.0), vec![], None),
            PolicyFamily::BetaMeanStd => {
                let raw = u(rng, dim, -3.0, 3.0);
                let free = (0..dim).map(|_| softplus_inv(rng.random_range(0.02..0.3))).collect();
                (raw, free, None)
            }
            PolicyFamily::LatentGaussian => {
                let w = DMatrix::from_fn(dim, k, |_, _| rng.random_range(-1.0..1.0));
                (u(rng, dim, -1.0, 1.0), u(rng, dim + k, -1.5, 0.0), Some(w))
            }
        };
        if family == PolicyFamily::BetaMeanStd {
            let near = raw.iter().zip(&free).any(|(r, s): (&f64, &f64)| {
                let b = variance_bound(sigmoid(*r), true);
                (softplus(*s).powi(2) - b).abs() < 0.05 * b
            });
            if near {
                continue;
            }
        }
        return (spec, raw, free, w);
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: Vec<(String, f64)> = vec![];
    for family in PolicyFamily::ALL {
        let mut w: f64 = 0.0;
        for n in 0..100 {
            let (spec, raw, free, wx) = random_head(family, 3, &mut rng);
            let head = spec.prepare(&free, wx.as_ref()).unwrap();
            let action = head.dist(&raw).unwrap().sample(&mut rng);
            let nr = raw.len();
            let x0 = cat(&raw, &free);
            let g = head.log_prob_grad(&raw, &action).unwrap();
            let mut f = |x: &[f64]| spec.prepare(&x[nr..], wx.as_ref()).unwrap().dist(&x[..nr]).unwrap().log_density(&action).unwrap();
            w = w.max(rel_err(&cat(&g.raw, &g.free), &fd_grad(&mut f, &x0)));
            let seed = 5000 + n;
            let g = head.entropy_grad(&raw, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let mut f = |x: &[f64]| {
                spec.prepare(&x[nr..], wx.as_ref()).unwrap().entropy_grad(&x[..nr], &mut ChaCha8Rng::seed_from_u64(seed)).unwrap().value
            };
            w = w.max(rel_err(&cat(&g.raw, &g.free), &fd_grad(&mut f, &x0)));
        }
        worst.push((family.name().to_string(), w));
    }
    // flipped-KL term: the closed form in (μ, Σ) and the loss through each head
    let mut w: f64 = 0.0;
    for k in 0..100 {
        let d = 1 + k % 4;
        let low: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..0.5)).collect();
        let high: Vec<f64> = low.iter().map(|l| l + rng.random_range(0.3..2.0)).collect();
        let b = ActionBox::new(low, high).unwrap();
        let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.6..0.6));
        let cov = &a * a.transpose() + DMatrix::from_diagonal(&DVector::from_fn(d, |_, _| rng.random_range(0.1..0.8)));
        let (_, dm, dc) = kl_uniform_to_gaussian_grad(&mean, &cov, &b).unwrap();
        let mut f = |m: &[f64]| kl_uniform_to_gaussian(m, &cov, &b).unwrap();
        w = w.max(rel_err(dm.as_slice(), &fd_grad(&mut f, &mean)));
        let flat: Vec<f64> = cov.iter().copied().collect();
        let mut g = |c: &[f64]| {
            let m = DMatrix::from_column_slice(d, d, c);
            kl_uniform_to_gaussian(&mean, &(0.5 * (&m + m.transpose())), &b).unwrap()
        };
        w = w.max(rel_err(dc.as_slice(), &fd_grad(&mut g, &flat)));
        let family = if k % 2 == 0 { PolicyFamily::Gaussian } else { PolicyFamily::LatentGaussian };
        let (spec, _, free, wx) = random_head(family, 3, &mut rng);
        let raws: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| rng.random_range(-2.0..3.0)).collect()).collect();
        let loss = flipped_kl_loss(&spec.prepare(&free, wx.as_ref()).unwrap(), &raws, &spec.bounds, 0.01).unwrap();
        let mut x0: Vec<f64> = raws.iter().flatten().copied().collect();
        x0.extend(&free);
        let mut f = |x: &[f64]| {
            let rs: Vec<Vec<f64>> = (0..4).map(|j| x[3 * j..3 * j + 3].to_vec()).collect();
            flipped_kl_loss(&spec.prepare(&x[12..], wx.as_ref()).unwrap(), &rs, &spec.bounds, 0.01).unwrap().value
        };
        let mut an: Vec<f64> = loss.raw.iter().flatten().copied().collect();
        an.extend(&loss.free);
        w = w.max(rel_err(&an, &fd_grad(&mut f, &x0)));
    }
    worst.push(("flipped_kl".into(), w));
    let (mut wd, mut wm): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let net = Mlp::init(&[4, 8, 1], 1.0, &mut rng).unwrap();
        let v = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..4).map(|_| rng.random_range(-2.0..2.0)).collect() };
        let e: Vec<Vec<f64>> = (0..4).map(|_| v(&mut rng)).collect();
        let p: Vec<Vec<f64>> = (0..5).map(|_| v(&mut rng)).collect();
        let (_, g) = discriminator_loss_grad(&net, &e, &p).unwrap();
        let mut f = |x: &[f64]| discriminator_loss_grad(&Mlp::from_params(net.sizes(), x.to_vec()).unwrap(), &e, &p).unwrap().0;
        wd = wd.max(rel_err(&g, &fd_grad(&mut f, &net.params)));

        let net = Mlp::init(&[4, 6, 5, 3], 1.0, &mut rng).unwrap();
        let x = v(&mut rng);
        let wout: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cache = net.forward_cache(&x).unwrap();
        let mut g = vec![0.0; net.num_params()];
        let gx = net.backward(&cache, &wout, &mut g);
        let dot = |y: Vec<f64>| y.iter().zip(&wout).map(|(a, b)| a * b).sum::<f64>();
        let mut f = |p: &[f64]| dot(Mlp::from_params(net.sizes(), p.to_vec()).unwrap().forward(&x).unwrap());
        wm = wm.max(rel_err(&g, &fd_grad(&mut f, &net.params)));
        let mut f = |xi: &[f64]| dot(net.forward(xi).unwrap());
        wm = wm.max(rel_err(&gx, &fd_grad(&mut f, &x)));
    }
    worst.push(("discriminator".into(), wd));
    worst.push(("mlp".into(), wm));
    let secs = start.elapsed().as_secs_f64();
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let detail = worst.iter().map(|(n, w)| format!("{n} {w:.1e}")).collect::<Vec<_>>().join(", ");
    outcome(max < 1e-5 && secs < 60.0, format!("worst rel. err {max:.1e} (< 1e-5) in {secs:.1} s (< 60 s): {detail}"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst: f64 = 0.0;
    for family in PolicyFamily::ALL {
        for _ in 0..50 {
            let (spec, raw, free, w) = random_head(family, 1, &mut rng);
            let dist = spec.prepare(&free, w.as_ref()).unwrap().dist(&raw).unwrap();
            let mut f = |a: f64| dist.log_density(&[a]).unwrap().exp();
            let total = match &dist {
                ActionDistribution::Gaussian(g) => simpson(&mut f, g.mean[0] - 12.0 * g.std[0], g.mean[0] + 12.0 * g.std[0], 20_000),
                ActionDistribution::Latent(l) => {
                    let s = l.cov.cov[(0, 0)].sqrt();
                    simpson(&mut f, l.mean[0] - 12.0 * s, l.mean[0] + 12.0 * s, 20_000)
                }
                _ => simpson(&mut f, 0.0, 1.0, 200_000),
            };
            worst = worst.max((total - 1.0).abs());
        }
    }
    outcome(worst < 1e-3, format!("max |∫p − 1| = {worst:.1e} (< 1e-3) over 5 families × 50 draws"))
}

fn criterion_3() -> Outcome {
    let (mut err, mut min_ab): (f64, f64) = (0.0, f64::INFINITY);
    for i in 1..=100 {
        let mu = i as f64 / 101.0;
        let bound = variance_bound(mu, true);
        for j in 1..=100 {
            let sigma = (bound * j as f64 / 101.0).sqrt();
            let (a, b) = beta_from_mean_std(mu, sigma, true).unwrap();
            min_ab = min_ab.min(a).min(b);
            let mean = a / (a + b);
            let var = a * b / ((a + b).powi(2) * (a + b + 1.0));
            err = err.max((mean - mu).abs()).max((var - sigma * sigma).abs());
        }
    }
    outcome(err < 1e-12 && min_ab > 1.0, format!("max moment error {err:.1e} (< 1e-12), min(α, β) = {min_ab:.4} (> 1)"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let n = 1_000_000;
    let mut worst_z: f64 = 0.0;
    for k in 0..50 {
        let d = 1 + k % 5;
        let low: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..0.5)).collect();
        let high: Vec<f64> = low.iter().map(|l| l + rng.random_range(0.3..2.0)).collect();
        let b = ActionBox::new(low, high).unwrap();
        let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.5)).collect();
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.6..0.6));
        let cov = &a * a.transpose() + DMatrix::from_diagonal(&DVector::from_fn(d, |_, _| rng.random_range(0.05..1.0)));
        let kl = kl_uniform_to_gaussian(&mean, &cov, &b).unwrap();
        let inv = cov.clone().try_inverse().unwrap();
        let log_norm = 0.5 * (cov.determinant().ln() + d as f64 * (2.0 * std::f64::consts::PI).ln());
        let log_u = -b.log_volume();
        let (mut s, mut sq) = (0.0, 0.0);
        let mut x = DVector::zeros(d);
        for _ in 0..n {
            for i in 0..d {
                x[i] = rng.random_range(b.low[i]..b.high[i]) - mean[i];
            }
            let v = log_u + 0.5 * x.dot(&(&inv * &x)) + log_norm;
            s += v;
            sq += v * v;
        }
        let m = s / n as f64;
        let se = ((sq / n as f64 - m * m) / n as f64).sqrt();
        worst_z = worst_z.max((kl - m).abs() / se);
    }
    let b = ActionBox::new(vec![-1.0], vec![1.0]).unwrap();
    let one = kl_uniform_to_gaussian(&[0.0], &DMatrix::identity(1, 1), &b).unwrap();
    let pass = worst_z < 3.0 && (one - 0.3925).abs() < 1e-4;
    outcome(pass, format!("worst |KL − MC|/SE = {worst_z:.2} (< 3) on 50 instances; 1-D [−1,1] vs N(0,1) = {one:.6} (0.3925 ± 1e-4)"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let n = 1_000_000;
    let mut worst: f64 = 0.0;
    for c in 0..10 {
        let d = 2 + c % 4;
        let k = 1 + c % 3;
        let w = DMatrix::from_fn(d, k, |_, _| rng.random_range(-1.0..1.0));
        let sx = DVector::from_fn(k, |_, _| rng.random_range(0.3..1.0));
        let sa = DVector::from_fn(d, |_, _| rng.random_range(0.1..0.5));
        let cov = Arc::new(LatentCovariance::new(w.clone(), sx.clone(), sa.clone()).unwrap());
        let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dist = LatentGaussian::new(mean.clone(), cov).unwrap();
        // single-Gaussian form assembled independently of the library
        let want = &w * DMatrix::from_diagonal(&sx.map(|s| s * s)) * w.transpose() + DMatrix::from_diagonal(&sa.map(|s| s * s));
        let mut sum = DVector::zeros(d);
        let mut outer = DMatrix::zeros(d, d);
        for _ in 0..n {
            let a = DVector::from_vec(dist.sample_two_stage(&mut rng));
            sum += &a;
            outer.ger(1.0, &a, &a, 1.0);
        }
        let m = sum / n as f64;
        let emp = outer / n as f64 - &m * m.transpose();
        for i in 0..d {
            worst = worst.max((m[i] - mean[i]).abs() / want[(i, i)].sqrt());
            for j in 0..d {
                worst = worst.max((emp[(i, j)] - want[(i, j)]).abs() / (want[(i, i)] * want[(j, j)]).sqrt());
            }
        }
    }
    outcome(worst < 0.01, format!("max relative deviation of mean/covariance {worst:.2e} (< 1%) over 10 configs at 1e6 samples"))
}

fn criterion_6() -> Outcome {
    let p = MtuParams::new("m", 500.0, vec![0.05, 0.0]);
    let dt = 0.01;
    let mut bounded = true;
    let mut monotone = true;
    let mut converged = true;
    for i in 0..=20 {
        for j in 0..=20 {
            let z0 = i as f64 / 20.0;
            let a = -0.5 + 2.0 * j as f64 / 20.0;
            let target = a.clamp(0.0, 1.0);
            let mut z = z0;
            let mut gap = (target - z).abs();
            for _ in 0..300 {
                let next = activation_step(z, a, dt, &p).unwrap();
                bounded &= (0.0..=1.0).contains(&next);
                let g = (target - next).abs();
                monotone &= g <= gap + 1e-15 && (target - next) * (target - z0) >= -1e-15;
                gap = g;
                z = next;
            }
            converged &= gap < 1e-6;
        }
    }
    // Heun reference at 1000× the integrator's substeps
    let n = filter_substeps(dt, &p);
    let mut worst: f64 = 0.0;
    for i in 0..=20 {
        for j in 0..=20 {
            let (z0, a) = (i as f64 / 20.0, j as f64 / 20.0);
            let rate = |z: f64| {
                let tau = if a - z > 0.0 { p.tau_act * (0.5 + 1.5 * z) } else { p.tau_deact / (0.5 + 1.5 * z) };
                (a - z) / tau
            };
            let steps = 1000 * n;
            let h = dt / steps as f64;
            let mut z = z0;
            for _ in 0..steps {
                let k1 = rate(z);
                let k2 = rate(z + h * k1);
                z += 0.5 * h * (k1 + k2);
            }
            worst = worst.max((activation_step(z0, a, dt, &p).unwrap() - z).abs());
        }
    }
    outcome(
        bounded && monotone && converged && worst < 1e-4,
        format!("bounded {bounded}, monotone {monotone}, converged {converged} on 21×21; max deviation from reference {worst:.1e} (< 1e-4)"),
    )
}

fn cg_vs_direct() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let cfg = PolicyConfig { hidden: vec![5, 4], output_scale: 1.0, ..Default::default() };
    let policy = Policy::new(&cfg, FixedNorm::identity(3), ActionBox::unit(2), &mut rng).unwrap();
    let obs: Vec<Vec<f64>> = (0..30).map(|_| (0..3).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
    let head = policy.head().unwrap();
    let caches: Vec<MlpCache> = obs.iter().map(|o| policy.forward_cache(o).unwrap()).collect();
    let n = policy.num_params();
    let mut f = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        f.set_column(j, &DVector::from_vec(fisher_vector_product(&policy, &head, &caches, &e, 0.1).unwrap()));
    }
    let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let direct = f.clone().cholesky().unwrap().solve(&DVector::from_column_slice(&b));
    let x = conjugate_gradient(|v| (&f * DVector::from_column_slice(v)).as_slice().to_vec(), &b, 10 * n, 1e-30);
    (DVector::from_vec(x) - &direct).norm() / direct.norm()
}

/// Metrics of every seed of a finished run, columns as in the metrics CSV.
fn load_run(dir: &Path, m: &RunManifest) -> Vec<Vec<Vec<f64>>> {
    m.seeds.iter().filter(|s| s.status == "ok").map(|s| read_metrics(&seed_dir(dir, s.seed).join("metrics.csv")).unwrap()).collect()
}

fn col(name: &str) -> usize {
    METRICS_COLUMNS.iter().position(|c| *c == name).unwrap()
}

fn tail_mean(rows: &[Vec<f64>], c: usize, k: usize) -> f64 {
    let t = &rows[rows.len().saturating_sub(k)..];
    t.iter().map(|r| r[c]).sum::<f64>() / t.len() as f64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct Runs {
    smoke: (RunConfig, Vec<Vec<Vec<f64>>>, Vec<f64>),
    fig4: Vec<(ObjectiveMode, Vec<Vec<Vec<f64>>>)>,
    box_diameter: f64,
}

fn train_runs(work: &Path) -> Runs {
    let smoke_cfg = RunConfig::load(&root().join("configs/gail_smoke.toml")).unwrap();
    let dir = work.join("smoke");
    let m = myogail_cli::train(&smoke_cfg, &dir).unwrap();
    let walls = m.seeds.iter().map(|s| s.wall_seconds).collect();
    let smoke = (smoke_cfg, load_run(&dir, &m), walls);
    let base = RunConfig::load(&root().join("configs/fig4.toml")).unwrap();
    let mut fig4 = vec![];
    for mode in [ObjectiveMode::Entropy, ObjectiveMode::OobPenaltyEntropy, ObjectiveMode::FlippedKl] {
        let cfg = RunConfig { objective: ObjectiveConfig { mode, ..base.objective.clone() }, ..base.clone() };
        let dir = work.join(mode.name().replace('+', "_"));
        let m = myogail_cli::train(&cfg, &dir).unwrap();
        fig4.push((mode, load_run(&dir, &m)));
    }
    Runs { smoke, fig4, box_diameter: (base.env.num_muscles() as f64).sqrt() }
}

fn criterion_7(runs: &Runs) -> Outcome {
    let delta = TrpoConfig::default().max_kl;
    let (kl, acc) = (col("kl"), col("accepted"));
    let mut rows = 0;
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    let all = runs.smoke.1.iter().chain(runs.fig4.iter().flat_map(|(_, r)| r.iter()));
    for run in all {
        for r in run.iter().filter(|r| r[acc] == 1.0) {
            rows += 1;
            worst = worst.max(r[kl]);
            violations += (r[kl] > 1.5 * delta) as usize;
        }
    }
    let cg = cg_vs_direct();
    outcome(
        violations == 0 && rows > 0 && cg < 1e-8,
        format!("{violations} of {rows} accepted updates exceed 1.5·δ (max KL {worst:.5}, δ = {delta}); CG vs direct solve {cg:.1e} (< 1e-8)"),
    )
}

fn criterion_8(runs: &Runs) -> Outcome {
    let (cfg, policy_runs, walls) = &runs.smoke;
    let expert = myogail_cli::load_expert(cfg).unwrap();
    let (len, gail) = (col("episode_length"), col("gail_reward"));
    let mut wins = 0;
    let mut lines = vec![];
    for (k, &seed) in cfg.seeds.iter().enumerate() {
        let train = myogail::learn::TrainConfig { seed, ..cfg.train.clone() };
        let base = random_baseline_run(&cfg.env, &expert, &train).unwrap();
        let base: Vec<Vec<f64>> = base.iter().map(|r| r.values()).collect();
        let p = &policy_runs[k];
        let (pl, bl) = (tail_mean(p, len, 10), tail_mean(&base, len, 10));
        let (pg, bg) = (tail_mean(p, gail, 10), tail_mean(&base, gail, 10));
        let ok = pl >= 3.0 * bl && pg >= 2.0 * bg;
        wins += ok as usize;
        lines.push(format!("seed {seed}: len {pl:.0}/{bl:.1}, gail {pg:.3}/{bg:.3}"));
    }
    let slowest = walls.iter().copied().fold(0.0, f64::max);
    outcome(
        wins >= 4 && slowest <= 1800.0,
        format!("{wins}/5 seeds beat the random baseline (≥ 3× length, ≥ 2× gail_reward); slowest seed {slowest:.0} s (≤ 1800 s); {}", lines.join("; ")),
    )
}

fn criterion_9(runs: &Runs) -> Outcome {
    let c = col("action_mean_abs");
    let mut pass = true;
    let mut parts = vec![];
    for (mode, seeds) in &runs.fig4 {
        let n = seeds.iter().map(Vec::len).min().unwrap();
        let curve: Vec<f64> = (0..n).map(|i| median(seeds.iter().map(|r| r[i][c]).collect())).collect();
        let (first, last) = (curve[0], curve[n - 1]);
        // least-squares slope of the median curve over iterations
        let xm = (n - 1) as f64 / 2.0;
        let ym = curve.iter().sum::<f64>() / n as f64;
        let slope = curve.iter().enumerate().map(|(i, y)| (i as f64 - xm) * (y - ym)).sum::<f64>()
            / (0..n).map(|i| (i as f64 - xm).powi(2)).sum::<f64>();
        match mode {
            ObjectiveMode::Entropy => {
                let ok = last >= 1.5 * first && slope >= 0.0;
                pass &= ok;
                parts.push(format!("entropy: |μ| {first:.3} → {last:.3} ({:.2}×, need ≥ 1.5×), slope {slope:.1e} (≥ 0)", last / first));
            }
            _ => {
                let ok = last <= runs.box_diameter;
                pass &= ok;
                parts.push(format!("{}: final |μ| {last:.3} (≤ {:.2})", mode.name(), runs.box_diameter));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = rollout_expert(&LimbConfig::default(), &ExpertConfig::default(), 3000, &mut rng).unwrap();
    let m = action_matrix(&r.controls[300..]).unwrap();
    let map = fit_synergies(&m, 4, &IcaOptions::default()).unwrap();
    let ev = map.explained_variance();

    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let t = 100_000;
    let s = DMatrix::from_fn(t, 2, |_, _| rng.random_range(-3f64.sqrt()..3f64.sqrt()));
    let a = DMatrix::from_fn(2, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = &s * a.transpose();
    let fit = fit_ica(&x, &IcaOptions::default()).unwrap();
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        row -= fit.mean.transpose();
    }
    let y = xc * fit.unmixing.transpose();
    let (c0, c1) = (y.column(0), y.column(1));
    let (m0, m1) = (c0.mean(), c1.mean());
    let cov = c0.iter().zip(c1.iter()).map(|(a, b)| (a - m0) * (b - m1)).sum::<f64>() / t as f64;
    let sd = |c: nalgebra::DVectorView<f64>, m: f64| (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / t as f64).sqrt();
    let corr = cov / (sd(c0.as_view(), m0) * sd(c1.as_view(), m1));
    outcome(
        ev >= 0.85 && corr.abs() < 0.05,
        format!("N_syn = 4 explains {:.1}% (≥ 85%); FastICA output cross-correlation {:.1e} (< 0.05)", 100.0 * ev, corr.abs()),
    )
}

fn criterion_11(work: &Path) -> Outcome {
    let bin = env!("CARGO_BIN_EXE_myogail");
    let cfg = root().join("configs/gail_smoke.toml");
    let mut csvs = vec![];
    for k in 0..2 {
        let out = work.join(format!("determinism_{k}"));
        let status = Command::new(bin)
            .args(["train", "--config"])
            .arg(&cfg)
            .args(["--seed", "7", "--steps", "20480", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        if !status.status.success() {
            return outcome(false, format!("train exited with {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr)));
        }
        csvs.push(std::fs::read(seed_dir(&out, 7).join("metrics.csv")).unwrap());
    }
    let rows = csvs[0].iter().filter(|b| **b == b'\n').count();
    let same = csvs[0] == csvs[1];
    let verdict = if same { "byte-identical" } else { "DIFFERENT" };
    outcome(same, format!("two CLI runs (seed 7, 20480 steps) wrote {verdict} metrics CSVs ({} bytes, {rows} lines)", csvs[0].len()))
}

/// Criteria that fail with the shipped defaults; see the README. They still
/// print FAIL, but only an unexpected failure makes the target exit nonzero.
const KNOWN_FAILURES: [usize; 1] = [9];

fn main() {
    let work = tempfile::tempdir().unwrap();
    let mut results: Vec<(usize, &str, Outcome)> = vec![];
    let mut report = |k: usize, name: &'static str, o: Outcome| {
        println!("[{}] criterion {k:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((k, name, o));
    };
    report(1, "gradient suite", criterion_1());
    report(2, "density normalization", criterion_2());
    report(3, "beta parameterization", criterion_3());
    report(4, "flipped KL oracle", criterion_4());
    report(5, "latent exploration equivalence", criterion_5());
    report(6, "activation filter", criterion_6());
    let t = Instant::now();
    let runs = train_runs(work.path());
    println!("       (training runs for criteria 7-9 took {:.0} s)", t.elapsed().as_secs_f64());
    report(7, "trpo contract", criterion_7(&runs));
    report(8, "gail smoke test", criterion_8(&runs));
    report(9, "exploration objectives", criterion_9(&runs));
    report(10, "synergy pipeline", criterion_10());
    report(11, "determinism", criterion_11(work.path()));
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("acceptance: {}/{} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failing criteria: {failed:?} (known: {KNOWN_FAILURES:?})");
    }
    for k in KNOWN_FAILURES.iter().filter(|k| !failed.contains(k)) {
        println!("criterion {k} is listed as a known failure but now passes");
    }
    if failed.iter().any(|k| !KNOWN_FAILURES.contains(k)) {
        std::process::exit(1);
    }
}
