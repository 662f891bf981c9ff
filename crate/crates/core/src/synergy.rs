//! Synergistic action representation: PCA followed by FastICA on play-phase
//! actions, with a sign normalization that orients every synergy along
//! increasing muscle activation.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explore_obj::ObjectiveConfig;
use crate::learn::{PolicyConfig, TrainConfig, Trainer};
use crate::mtu_sim::{ExpertTrajectory, LimbConfig};
use crate::policy_dist::{ActionBox, PolicyFamily};

/// Play-phase actions, one column per timestep (`|A| × t`).
pub type ActionMatrix = DMatrix<f64>;

/// Minimum samples per action dimension before a fit is attempted.
pub const MIN_SAMPLES_PER_DIM: usize = 10;

/// Relative singular-value threshold below which a direction counts as absent.
pub const RANK_TOLERANCE: f64 = 1e-9;

pub fn check_action_matrix(m: &ActionMatrix) -> Result<()> {
    let (a, t) = m.shape();
    if a == 0 {
        return Err(Error::Shape("action matrix has no rows".into()));
    }
    if t < MIN_SAMPLES_PER_DIM * a {
        return Err(Error::Config(format!(
            "synergy fit needs at least {MIN_SAMPLES_PER_DIM}·|A| = {} samples, got {t}",
            MIN_SAMPLES_PER_DIM * a
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("action matrix has non-finite entries".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaFit {
    pub mean: DVector<f64>,
    /// Orthonormal principal directions as columns (`|A| × n`).
    pub components: DMatrix<f64>,
    /// Variance of the scores along each kept direction.
    pub variances: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    /// Number of singular values above [`RANK_TOLERANCE`].
    pub rank: usize,
}

impl PcaFit {
    /// Scores `Cᵀ(m − μ)` as a `t × n` matrix.
    pub fn scores(&self, m: &ActionMatrix) -> DMatrix<f64> {
        let mut centred = m.clone();
        for mut col in centred.column_iter_mut() {
            col -= &self.mean;
        }
        centred.transpose() * &self.components
    }

    pub fn reconstruct(&self, scores: &DMatrix<f64>) -> ActionMatrix {
        let mut out = &self.components * scores.transpose();
        for mut col in out.column_iter_mut() {
            col += &self.mean;
        }
        out
    }
}

/// Top principal directions of the centred data. Components are returned
/// with their largest-magnitude entry positive. Asking for more directions
/// than the numerical rank logs a warning and keeps only the rank.
pub fn fit_pca(m: &ActionMatrix, n_syn: usize) -> Result<PcaFit> {
    check_action_matrix(m)?;
    let (a, t) = m.shape();
    if n_syn == 0 || n_syn > a {
        return Err(Error::Config(format!("N_syn must lie in 1..={a}, got {n_syn}")));
    }
    let mean = m.column_mean();
    let mut centred = m.clone();
    for mut col in centred.column_iter_mut() {
        col -= &mean;
    }
    let svd = centred.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]).then(i.cmp(&j)));
    let top = svd.singular_values[order[0]];
    let rank = order.iter().filter(|&&i| svd.singular_values[i] > RANK_TOLERANCE * top.max(f64::MIN_POSITIVE)).count();
    let keep = n_syn.min(rank.max(1));
    if keep < n_syn {
        log::warn!("requested {n_syn} synergies but the data has numerical rank {rank}; keeping {keep}");
    }
    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    let mut components = DMatrix::zeros(a, keep);
    let mut variances = Vec::with_capacity(keep);
    let mut ratios = Vec::with_capacity(keep);
    for (k, &i) in order.iter().take(keep).enumerate() {
        let mut col = u.column(i).clone_owned();
        let lead = col.iter().enumerate().max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()).then(y.0.cmp(&x.0))).unwrap().0;
        if col[lead] < 0.0 {
            col = -col;
        }
        components.set_column(k, &col);
        let s2 = svd.singular_values[i].powi(2);
        variances.push(s2 / (t - 1) as f64);
        ratios.push(if total > 0.0 { s2 / total } else { 0.0 });
    }
    Ok(PcaFit { mean, components, variances, explained_variance_ratio: ratios, rank })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcaFit {
    /// Unmixing matrix acting on centred scores (`n × n`).
    pub unmixing: DMatrix<f64>,
    pub mean: DVector<f64>,
    /// Orthogonal rotation found in the whitened space.
    pub rotation: DMatrix<f64>,
    pub whitening: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcaOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for IcaOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 500, seed: 0 }
    }
}

/// Mean-centring and whitening matrix `K` with `K Cov Kᵀ = I`.
pub fn whiten(scores: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (t, n) = scores.shape();
    if t < 2 || n == 0 {
        return Err(Error::Shape(format!("cannot whiten a {t}×{n} score matrix")));
    }
    let mean = scores.row_mean().transpose();
    let mut x = scores.clone();
    for mut row in x.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = x.transpose() * &x / (t - 1) as f64;
    let eig = cov.symmetric_eigen();
    if eig.eigenvalues.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Numeric("score covariance is singular; reduce N_syn".into()));
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok((mean, &inv_sqrt * eig.eigenvectors.transpose()))
}

/// Symmetric decorrelation `(W Wᵀ)^{-1/2} W`.
fn sym_decorrelate(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = (w * w.transpose()).symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.max(1e-300).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose() * w
}

/// FastICA with symmetric orthogonalization and the log-cosh contrast.
/// `scores` is `t × n`; the input is centred and whitened first. When the
/// iteration budget runs out the last iterate is returned with
/// `converged = false`.
pub fn fit_ica(scores: &DMatrix<f64>, opts: &IcaOptions) -> Result<IcaFit> {
    let (t, n) = scores.shape();
    let (mean, k) = whiten(scores)?;
    let mut z = scores.clone();
    for mut row in z.row_iter_mut() {
        row -= mean.transpose();
    }
    // whitened data, one column per sample
    let z = &k * z.transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut w = sym_decorrelate(&DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal)));
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let y = &w * &z;
        let g = y.map(|v| v.tanh());
        let gp_mean: Vec<f64> = g.row_iter().map(|r| r.iter().map(|v| 1.0 - v * v).sum::<f64>() / t as f64).collect();
        let mut next = &g * z.transpose() / t as f64;
        for i in 0..n {
            let wi = w.row(i).clone_owned() * gp_mean[i];
            let mut r = next.row_mut(i);
            r -= wi;
        }
        let next = sym_decorrelate(&next);
        let change = (0..n).map(|i| (next.row(i).dot(&w.row(i)).abs() - 1.0).abs()).fold(0.0, f64::max);
        w = next;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("FastICA did not converge in {} iterations", opts.max_iter);
    }
    Ok(IcaFit { unmixing: &w * &k, mean, rotation: w, whitening: k, converged, iterations })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynergyMap {
    pub pca: PcaFit,
    pub ica: IcaFit,
    /// Inverse of the (sign-fixed) unmixing matrix.
    pub mixing: DMatrix<f64>,
    /// Per-synergy range of the play-phase activations; the training-phase
    /// policy acts inside this box.
    pub action_box: ActionBox,
}

/// Fits the full transform. Each synergy is oriented so that the largest
/// entry of its muscle-space loading is positive, and synergies are ordered
/// by the variance they reconstruct.
pub fn fit_synergies(m: &ActionMatrix, n_syn: usize, opts: &IcaOptions) -> Result<SynergyMap> {
    let pca = fit_pca(m, n_syn)?;
    let scores = pca.scores(m);
    let mut ica = fit_ica(&scores, opts)?;
    let n = pca.components.ncols();
    let mixing = ica
        .unmixing
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("ICA unmixing matrix is singular".into()))?;
    // loading of synergy j on the muscles, scaled by its unit activation
    let loadings = &pca.components * &mixing;
    let mut order: Vec<usize> = (0..n).collect();
    let norm = |j: usize| loadings.column(j).norm_squared();
    order.sort_by(|&i, &j| norm(j).total_cmp(&norm(i)).then(i.cmp(&j)));
    let mut unmixing = DMatrix::zeros(n, n);
    let mut rotation = DMatrix::zeros(n, n);
    for (row, &j) in order.iter().enumerate() {
        let col = loadings.column(j);
        let lead = col.iter().enumerate().max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()).then(y.0.cmp(&x.0))).unwrap().0;
        let s = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        unmixing.set_row(row, &(ica.unmixing.row(j) * s));
        rotation.set_row(row, &(ica.rotation.row(j) * s));
    }
    ica.unmixing = unmixing;
    ica.rotation = rotation;
    let mixing = ica.unmixing.clone().try_inverse().ok_or_else(|| Error::Numeric("ICA unmixing matrix is singular".into()))?;
    let mut map = SynergyMap { pca, ica, mixing, action_box: ActionBox::unit(n) };
    let syn = map.to_synergy_space_batch(m);
    let low: Vec<f64> = (0..n).map(|j| syn.row(j).min()).collect();
    let high: Vec<f64> = (0..n).map(|j| syn.row(j).max()).collect();
    map.action_box = ActionBox::new(low, high)?;
    Ok(map)
}

impl SynergyMap {
    pub fn n_syn(&self) -> usize {
        self.pca.components.ncols()
    }

    pub fn num_muscles(&self) -> usize {
        self.pca.components.nrows()
    }

    pub fn explained_variance(&self) -> f64 {
        self.pca.explained_variance_ratio.iter().sum()
    }

    /// Synergy activations of a batch of muscle actions (`|A| × t` → `n × t`).
    pub fn to_synergy_space_batch(&self, m: &ActionMatrix) -> DMatrix<f64> {
        let scores = self.pca.scores(m);
        let mut centred = scores;
        for mut row in centred.row_iter_mut() {
            row -= self.ica.mean.transpose();
        }
        &self.ica.unmixing * centred.transpose()
    }

    pub fn to_synergy_space(&self, action: &[f64]) -> Result<Vec<f64>> {
        if action.len() != self.num_muscles() {
            return Err(Error::Shape(format!("expected {} muscle controls, got {}", self.num_muscles(), action.len())));
        }
        let m = DMatrix::from_column_slice(action.len(), 1, action);
        Ok(self.to_synergy_space_batch(&m).column(0).iter().copied().collect())
    }

    /// Affine muscle-space image of a synergy action, before clamping.
    pub fn to_muscle_space_unclamped(&self, syn: &[f64]) -> Result<Vec<f64>> {
        if syn.len() != self.n_syn() {
            return Err(Error::Shape(format!("expected {} synergy activations, got {}", self.n_syn(), syn.len())));
        }
        let scores = &self.mixing * DVector::from_column_slice(syn) + &self.ica.mean;
        let m = &self.pca.components * scores + &self.pca.mean;
        Ok(m.iter().copied().collect())
    }

    /// Muscle controls for a synergy action, clamped to `[0, 1]`.
    pub fn to_muscle_space(&self, syn: &[f64]) -> Result<Vec<f64>> {
        Ok(self.to_muscle_space_unclamped(syn)?.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    pub fn to_file(&self) -> SynergyFile {
        let rows = |m: &DMatrix<f64>| m.row_iter().map(|r| r.iter().copied().collect()).collect();
        SynergyFile {
            n_syn: self.n_syn(),
            num_muscles: self.num_muscles(),
            rank: self.pca.rank,
            explained_variance_ratio: self.pca.explained_variance_ratio.clone(),
            pca_variances: self.pca.variances.clone(),
            pca_mean: self.pca.mean.iter().copied().collect(),
            pca_components: rows(&self.pca.components),
            ica_mean: self.ica.mean.iter().copied().collect(),
            ica_unmixing: rows(&self.ica.unmixing),
            ica_rotation: rows(&self.ica.rotation),
            ica_whitening: rows(&self.ica.whitening),
            ica_converged: self.ica.converged,
            ica_iterations: self.ica.iterations,
            action_low: self.action_box.low.clone(),
            action_high: self.action_box.high.clone(),
        }
    }

    pub fn from_file(f: SynergyFile) -> Result<Self> {
        let (a, n) = (f.num_muscles, f.n_syn);
        let mat = |rows: &[Vec<f64>], r: usize, c: usize, name: &str| -> Result<DMatrix<f64>> {
            if rows.len() != r || rows.iter().any(|row| row.len() != c) {
                return Err(Error::Parse(format!("synergy section '{name}' must be {r}×{c}")));
            }
            Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
        };
        let vec = |v: &[f64], len: usize, name: &str| -> Result<DVector<f64>> {
            if v.len() != len {
                return Err(Error::Parse(format!("synergy section '{name}' must have {len} entries")));
            }
            Ok(DVector::from_column_slice(v))
        };
        let pca = PcaFit {
            mean: vec(&f.pca_mean, a, "pca_mean")?,
            components: mat(&f.pca_components, a, n, "pca_components")?,
            variances: f.pca_variances,
            explained_variance_ratio: f.explained_variance_ratio,
            rank: f.rank,
        };
        let ica = IcaFit {
            unmixing: mat(&f.ica_unmixing, n, n, "ica_unmixing")?,
            mean: vec(&f.ica_mean, n, "ica_mean")?,
            rotation: mat(&f.ica_rotation, n, n, "ica_rotation")?,
            whitening: mat(&f.ica_whitening, n, n, "ica_whitening")?,
            converged: f.ica_converged,
            iterations: f.ica_iterations,
        };
        let mixing = ica.unmixing.clone().try_inverse().ok_or_else(|| Error::Parse("synergy unmixing matrix is singular".into()))?;
        let action_box = ActionBox::new(f.action_low, f.action_high)?;
        if action_box.dim() != n {
            return Err(Error::Parse("synergy action box dimension differs from N_syn".into()));
        }
        Ok(Self { pca, ica, mixing, action_box })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_file())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_file(serde_json::from_str(&text)?)
    }

    /// Explained-variance table, one row per component in descending order.
    pub fn variance_report(&self) -> String {
        let mut out = String::from("component,explained_variance_ratio,cumulative\n");
        let mut cum = 0.0;
        for (k, r) in self.pca.explained_variance_ratio.iter().enumerate() {
            cum += r;
            out.push_str(&format!("{},{:.6},{:.6}\n", k + 1, r, cum));
        }
        out
    }
}

/// On-disk layout of a [`SynergyMap`]; matrices are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynergyFile {
    pub n_syn: usize,
    pub num_muscles: usize,
    pub rank: usize,
    pub explained_variance_ratio: Vec<f64>,
    pub pca_variances: Vec<f64>,
    pub pca_mean: Vec<f64>,
    pub pca_components: Vec<Vec<f64>>,
    pub ica_mean: Vec<f64>,
    pub ica_unmixing: Vec<Vec<f64>>,
    pub ica_rotation: Vec<Vec<f64>>,
    pub ica_whitening: Vec<Vec<f64>>,
    pub ica_converged: bool,
    pub ica_iterations: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
}

/// Builds an action matrix from executed control vectors.
pub fn action_matrix(controls: &[Vec<f64>]) -> Result<ActionMatrix> {
    let a = controls.first().map(Vec::len).unwrap_or(0);
    if controls.iter().any(|c| c.len() != a) {
        return Err(Error::Shape("control vectors have differing lengths".into()));
    }
    Ok(DMatrix::from_fn(a, controls.len(), |i, j| controls[j][i]))
}


/// Trains a throwaway muscle-space policy for `steps` environment steps and
/// records every executed control as a column of the returned matrix. The
/// policy must be an unbounded Gaussian and the objective must include the
/// out-of-bounds penalty.
pub fn play_phase(
    env_cfg: &LimbConfig,
    expert: &ExpertTrajectory,
    policy_cfg: &PolicyConfig,
    objective: &ObjectiveConfig,
    cfg: &TrainConfig,
    steps: usize,
) -> Result<ActionMatrix> {
    let a = env_cfg.num_muscles();
    if steps < MIN_SAMPLES_PER_DIM * a {
        return Err(Error::Config(format!("play phase needs at least {MIN_SAMPLES_PER_DIM}·|A| = {} steps, got {steps}", MIN_SAMPLES_PER_DIM * a)));
    }
    if policy_cfg.family != PolicyFamily::Gaussian {
        return Err(Error::Config(format!("play phase uses a gaussian policy, not '{}'", policy_cfg.family.name())));
    }
    if !objective.mode.uses_oob_penalty() {
        return Err(Error::Config(format!("play phase needs the out-of-bounds penalty, objective is '{}'", objective.mode.name())));
    }
    let cfg = TrainConfig { total_steps: steps, ..cfg.clone() };
    let mut trainer = Trainer::new(env_cfg, expert, policy_cfg, objective, None, &cfg)?;
    let mut m = ActionMatrix::zeros(a, steps);
    let mut col = 0;
    while !trainer.done() {
        let (_, batch) = trainer.iterate()?;
        for c in &batch.executed {
            m.set_column(col, &DVector::from_column_slice(c));
            col += 1;
        }
    }
    debug_assert_eq!(col, steps);
    Ok(m)
}
