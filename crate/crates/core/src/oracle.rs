//! Monte Carlo and finite-difference references for degrees of freedom and risk.

use crate::error::{Error, Result};
use crate::exec::{Exec, CHUNK};
use crate::penalty::PenaltySpec;
use crate::rng::{normal_matrix, stream, Domain};
use crate::spectral::{apply_spectral, svd, truncate_rank, Mat, Prox};

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McResult {
    pub estimate: f64,
    pub std_error: f64,
    pub reps: usize,
    pub seed: u64,
}

impl McResult {
    pub const CSV_HEADER: &'static str = "estimate,std_error,reps,seed";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.estimate, self.std_error, self.reps, self.seed)
    }

    /// Mean and standard error of the mean of `xs`.
    pub fn from_samples(xs: &[f64], seed: u64) -> McResult {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        McResult { estimate: mean, std_error: (var / n).sqrt(), reps: xs.len(), seed }
    }

    /// Whether `other` lies within `k` combined standard errors.
    pub fn agrees_with(&self, other: f64, other_se: f64, k: f64) -> bool {
        (self.estimate - other).abs() <= k * (self.std_error + other_se)
    }
}

/// Replication settings for Monte Carlo runs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McConfig {
    pub reps: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl McConfig {
    pub fn new(reps: usize, seed: u64) -> McConfig {
        McConfig { reps, seed, exec: Exec::default() }
    }

    pub fn with_exec(mut self, exec: Exec) -> McConfig {
        self.exec = exec;
        self
    }
}

/// A matrix estimator `Y -> fit(Y)`.
pub trait Estimator: Sync {
    fn fit(&self, y: &Mat) -> Result<Mat>;
}

impl<F> Estimator for F
where
    F: Fn(&Mat) -> Result<Mat> + Sync,
{
    fn fit(&self, y: &Mat) -> Result<Mat> {
        self(y)
    }
}

/// Spectral thresholding with a penalty's proximal map.
#[derive(Clone, Copy, Debug)]
pub struct SpectralEstimator(pub PenaltySpec);

impl Estimator for SpectralEstimator {
    fn fit(&self, y: &Mat) -> Result<Mat> {
        apply_spectral(&svd(y)?, &Prox(self.0))
    }
}

/// Best rank-`k` approximation.
#[derive(Clone, Copy, Debug)]
pub struct TruncationEstimator(pub usize);

impl Estimator for TruncationEstimator {
    fn fit(&self, y: &Mat) -> Result<Mat> {
        truncate_rank(&svd(y)?, self.0)
    }
}

/// Gaussian noise around a mean, optionally observed through `P'` for a matrix `P`
/// with orthonormal columns: working noise is `P' Z` with `Z` of size `full`.
pub(crate) struct NoiseModel<'a> {
    pub mean: &'a Mat,
    pub tau: f64,
    pub full: (usize, usize),
    pub projector: Option<&'a Mat>,
}

impl NoiseModel<'_> {
    pub fn additive(mean: &Mat, tau: f64) -> NoiseModel<'_> {
        NoiseModel { mean, tau, full: mean.shape(), projector: None }
    }

    /// Standard (unit variance) working noise of replicate `b`, and the squared norm
    /// of the full noise.
    pub fn draw(&self, seed: u64, domain: Domain, b: usize) -> (Mat, f64) {
        let z = normal_matrix(&mut stream(seed, domain, b as u64), self.full.0, self.full.1);
        let full_sq = z.norm_squared();
        match self.projector {
            Some(p) => (p.tr_mul(&z), full_sq),
            None => (z, full_sq),
        }
    }

    pub fn observe(&self, g: &Mat) -> Mat {
        self.mean + g * self.tau
    }
}

pub(crate) struct CovarianceOutput {
    pub df: Vec<McResult>,
    pub mse: Vec<McResult>,
    pub extras: Vec<Vec<f64>>,
}

struct ChunkOut {
    sums: Vec<Mat>,
    a: Vec<Vec<f64>>,
    mse: Vec<Vec<f64>>,
    extras: Vec<Vec<f64>>,
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    Ok(())
}

/// Two-pass covariance estimate of `df_k = sum_ij Cov(fit_k(Y)_ij, Y_ij) / tau^2` for
/// a family of estimators observed on shared replicates, plus their mean squared
/// error about the working mean.
///
/// The first pass accumulates the mean fit; the second regenerates each noise draw and
/// forms `d_b = (fit_b - mean fit) . eps_b / tau^2`. The estimate is `sum d_b / (B - 1)`.
pub(crate) fn covariance_mc<F>(
    noise: &NoiseModel,
    members: usize,
    cfg: &McConfig,
    domain: Domain,
    observe: F,
) -> Result<CovarianceOutput>
where
    F: Fn(&Mat) -> Result<(Vec<Mat>, Vec<f64>)> + Sync + Send,
{
    check_tau(noise.tau)?;
    let reps = cfg.reps;
    if reps < 2 {
        return Err(Error::TooFewReps { min: 2, got: reps });
    }
    let shape = noise.mean.shape();
    let mut fbar: Vec<Mat> = vec![Mat::zeros(shape.0, shape.1); members];
    let mut a_all: Vec<Vec<f64>> = Vec::with_capacity(reps);
    let mut mse_all: Vec<Vec<f64>> = Vec::with_capacity(reps);
    let mut extras: Vec<Vec<f64>> = Vec::with_capacity(reps);
    let mut failure: Option<Error> = None;
    let work = |range: std::ops::Range<usize>| -> Result<ChunkOut> {
        let mut out = ChunkOut {
            sums: vec![Mat::zeros(shape.0, shape.1); members],
            a: Vec::new(),
            mse: Vec::new(),
            extras: Vec::new(),
        };
        for b in range {
            let (g, _) = noise.draw(cfg.seed, domain, b);
            let y = noise.observe(&g);
            let (fits, extra) = observe(&y)?;
            if fits.len() != members {
                return Err(Error::ShapeMismatch(format!("{} fits for {members} members", fits.len())));
            }
            let mut a = Vec::with_capacity(members);
            let mut mse = Vec::with_capacity(members);
            for (k, fit) in fits.iter().enumerate() {
                if fit.shape() != shape {
                    return Err(Error::ShapeMismatch(format!(
                        "fit is {:?}, expected {:?}",
                        fit.shape(),
                        shape
                    )));
                }
                a.push(fit.dot(&g));
                mse.push((fit - noise.mean).norm_squared());
                out.sums[k] += fit;
            }
            out.a.push(a);
            out.mse.push(mse);
            out.extras.push(extra);
        }
        Ok(out)
    };
    cfg.exec.fold_chunks(reps, CHUNK, work, |res| match res {
        Ok(c) if failure.is_none() => {
            for (acc, s) in fbar.iter_mut().zip(&c.sums) {
                *acc += s;
            }
            a_all.extend(c.a);
            mse_all.extend(c.mse);
            extras.extend(c.extras);
        }
        Ok(_) => {}
        Err(e) => {
            failure.get_or_insert(e);
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    for f in &mut fbar {
        *f /= reps as f64;
    }
    let centered: Vec<Vec<f64>> = cfg.exec.map(reps, |b| {
        let (g, _) = noise.draw(cfg.seed, domain, b);
        fbar.iter().enumerate().map(|(k, f)| (a_all[b][k] - f.dot(&g)) / noise.tau).collect()
    });
    let bf = reps as f64;
    let mut df = Vec::with_capacity(members);
    let mut mse = Vec::with_capacity(members);
    for k in 0..members {
        let d: Vec<f64> = centered.iter().map(|row| row[k]).collect();
        let sum: f64 = d.iter().sum();
        let sd = McResult::from_samples(&d, cfg.seed).std_error;
        df.push(McResult { estimate: sum / (bf - 1.0), std_error: sd, reps, seed: cfg.seed });
        let e: Vec<f64> = mse_all.iter().map(|row| row[k]).collect();
        mse.push(McResult::from_samples(&e, cfg.seed));
    }
    Ok(CovarianceOutput { df, mse, extras })
}

fn check_reps(reps: usize) -> Result<()> {
    if reps < 100 {
        return Err(Error::TooFewReps { min: 100, got: reps });
    }
    Ok(())
}

/// Monte Carlo degrees of freedom and mean squared error of `est` under
/// `Y = mstar + tau Z`.
pub fn true_risk_mc<E: Estimator + ?Sized>(
    est: &E,
    mstar: &Mat,
    tau: f64,
    cfg: &McConfig,
) -> Result<(McResult, McResult)> {
    check_reps(cfg.reps)?;
    let noise = NoiseModel::additive(mstar, tau);
    let out = covariance_mc(&noise, 1, cfg, Domain::TruthNoise, |y| Ok((vec![est.fit(y)?], vec![])))?;
    Ok((out.df[0], out.mse[0]))
}

/// Monte Carlo degrees of freedom `sum_ij Cov(fit_ij, Y_ij) / tau^2`.
pub fn true_df_mc<E: Estimator + ?Sized>(est: &E, mstar: &Mat, tau: f64, cfg: &McConfig) -> Result<McResult> {
    true_risk_mc(est, mstar, tau, cfg).map(|r| r.0)
}

/// Monte Carlo mean squared error `E ||fit - mstar||_F^2`.
pub fn true_mse_mc<E: Estimator + ?Sized>(est: &E, mstar: &Mat, tau: f64, cfg: &McConfig) -> Result<McResult> {
    true_risk_mc(est, mstar, tau, cfg).map(|r| r.1)
}

/// Monte Carlo mean of a statistic of `Y = mstar + tau Z`, on the same replicate
/// streams as [`true_df_mc`].
pub fn mean_statistic_mc<S>(stat: S, mstar: &Mat, tau: f64, cfg: &McConfig) -> Result<McResult>
where
    S: Fn(&Mat) -> Result<f64> + Sync + Send,
{
    check_tau(tau)?;
    if cfg.reps < 2 {
        return Err(Error::TooFewReps { min: 2, got: cfg.reps });
    }
    let noise = NoiseModel::additive(mstar, tau);
    let xs: Vec<Result<f64>> = cfg.exec.map(cfg.reps, |b| {
        let (g, _) = noise.draw(cfg.seed, Domain::TruthNoise, b);
        stat(&noise.observe(&g))
    });
    let xs: Vec<f64> = xs.into_iter().collect::<Result<_>>()?;
    Ok(McResult::from_samples(&xs, cfg.seed))
}

/// `step * max(1, |y|)` rounded to a power of two, so `y +- h` is exact in most cases.
fn fd_step(step: f64, y: f64) -> f64 {
    (step * y.abs().max(1.0)).log2().round().exp2()
}

/// Central finite-difference divergence `sum_ij (fit(Y + h e_ij) - fit(Y - h e_ij))_ij / 2h`
/// with `h = step * max(1, |Y_ij|)` rounded to a power of two.
pub fn fd_divergence<E: Estimator + ?Sized>(est: &E, y: &Mat, step: f64) -> Result<f64> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let mut total = 0.0;
    let mut yp = y.clone();
    for j in 0..y.ncols() {
        for i in 0..y.nrows() {
            let h = fd_step(step, y[(i, j)]);
            yp[(i, j)] = y[(i, j)] + h;
            let up = est.fit(&yp)?[(i, j)];
            yp[(i, j)] = y[(i, j)] - h;
            let down = est.fit(&yp)?[(i, j)];
            yp[(i, j)] = y[(i, j)];
            total += (up - down) / (2.0 * h);
        }
    }
    Ok(total)
}

/// Forward-difference divergence `sum_ij (fit(Y + h e_ij) - fit(Y))_ij / h`, the
/// one-sided partials along `+e_ij`.
pub fn forward_fd_divergence<E: Estimator + ?Sized>(est: &E, y: &Mat, step: f64) -> Result<f64> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let base = est.fit(y)?;
    let mut total = 0.0;
    let mut yp = y.clone();
    for j in 0..y.ncols() {
        for i in 0..y.nrows() {
            let h = fd_step(step, y[(i, j)]);
            yp[(i, j)] = y[(i, j)] + h;
            total += (est.fit(&yp)?[(i, j)] - base[(i, j)]) / h;
            yp[(i, j)] = y[(i, j)];
        }
    }
    Ok(total)
}

/// Gaussian smoothing `g_h(Y) = E_Z C_k(Y + h Z)` averaged over `draws` draws.
/// Draw `d` uses the same stream for every `h`, giving common random numbers.
pub fn smooth_truncate(y: &Mat, k: usize, h: f64, draws: usize, seed: u64) -> Result<Mat> {
    if draws == 0 || !(h.is_finite() && h >= 0.0) {
        return Err(Error::InvalidArgument("need draws > 0 and h >= 0".into()));
    }
    let (m, n) = y.shape();
    let mut acc = Mat::zeros(m, n);
    for d in 0..draws {
        let z = normal_matrix(&mut stream(seed, Domain::Smoothing, d as u64), m, n);
        acc += truncate_rank(&svd(&(y + z * h))?, k)?;
    }
    Ok(acc / draws as f64)
}

/// Monte Carlo degrees of freedom of the smoothed truncation `g_h`, using
/// `E_Z[(C_k(Y + hZ) - C_k(Y)) . Z] / h` as an unbiased estimate of its divergence.
pub fn df_smoothed_truncate_mc(
    mstar: &Mat,
    tau: f64,
    k: usize,
    h: f64,
    draws: usize,
    cfg: &McConfig,
) -> Result<McResult> {
    check_tau(tau)?;
    if draws == 0 || !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument("need draws > 0 and h > 0".into()));
    }
    if cfg.reps < 2 {
        return Err(Error::TooFewReps { min: 2, got: cfg.reps });
    }
    let noise = NoiseModel::additive(mstar, tau);
    let (m, n) = mstar.shape();
    let xs: Vec<Result<f64>> = cfg.exec.map(cfg.reps, |b| {
        let (g, _) = noise.draw(cfg.seed, Domain::TruthNoise, b);
        let y = noise.observe(&g);
        let base = truncate_rank(&svd(&y)?, k)?;
        let mut total = 0.0;
        for d in 0..draws {
            let idx = (b * draws + d) as u64;
            let z = normal_matrix(&mut stream(cfg.seed, Domain::SmoothingDf, idx), m, n);
            let moved = truncate_rank(&svd(&(&y + &z * h))?, k)?;
            total += (moved - &base).dot(&z) / h;
        }
        Ok(total / draws as f64)
    });
    let xs: Vec<f64> = xs.into_iter().collect::<Result<_>>()?;
    Ok(McResult::from_samples(&xs, cfg.seed))
}
