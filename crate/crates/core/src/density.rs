//! Marginal densities of singular values: Wishart eigenvalue density, Gaussian KDE and
//! parametric bootstrap samples.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng::{normal_matrix, stream, Domain};
use crate::spectral::{spectrum, Mat};

/// Unnormalized log density of the ordered eigenvalues of `W(tau, m, n)`.
///
/// Returns `-inf` when two eigenvalues coincide.
pub fn wishart_eigen_logdensity(lambda: &[f64], m: usize, n: usize, tau: f64) -> Result<f64> {
    if lambda.len() != n || m < n || n == 0 {
        return Err(Error::ShapeMismatch(format!(
            "expected {n} eigenvalues with m >= n, got {} (m={m})",
            lambda.len()
        )));
    }
    if lambda.iter().any(|l| !l.is_finite()) || !tau.is_finite() || tau <= 0.0 {
        return Err(Error::InvalidArgument("eigenvalues and tau must be finite, tau > 0".into()));
    }
    if lambda.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::UnorderedInput);
    }
    if lambda.iter().any(|&l| l <= 0.0) {
        return Err(Error::NonpositiveEntry);
    }
    let mut out = 0.0;
    let c = (m as f64 - n as f64 - 1.0) / 2.0;
    for &l in lambda {
        out += -l / (2.0 * tau) + c * l.ln();
    }
    for a in 0..n {
        for b in (a + 1)..n {
            let d = lambda[a] - lambda[b];
            if d <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            out += d.ln();
        }
    }
    Ok(out)
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule `0.9 min(sd, IQR / 1.34) n^{-1/5}`; falls back to `sd` when the
/// IQR vanishes.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::DegenerateSample(format!("{n} samples")));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0) {
        return Err(Error::DegenerateSample("zero spread".into()));
    }
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

/// Gaussian kernel density estimate at `x`.
pub fn kde_eval(samples: &[f64], bandwidth: f64, x: f64) -> Result<f64> {
    Ok(Kde::new(samples.to_vec(), bandwidth)?.eval(x))
}

/// Gaussian KDE over a fixed sample.
#[derive(Clone, Debug)]
pub struct Kde {
    sorted: Vec<f64>,
    bandwidth: f64,
}

/// Kernel terms beyond this many bandwidths are below `1e-21` and skipped.
const KDE_CUTOFF: f64 = 10.0;

impl Kde {
    pub fn new(mut samples: Vec<f64>, bandwidth: f64) -> Result<Kde> {
        if samples.is_empty() {
            return Err(Error::EmptySample);
        }
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        samples.sort_by(f64::total_cmp);
        Ok(Kde { sorted: samples, bandwidth })
    }

    /// KDE with Silverman's bandwidth.
    pub fn silverman(samples: Vec<f64>) -> Result<Kde> {
        let h = silverman_bandwidth(&samples)?;
        Kde::new(samples, h)
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn eval(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let lo = self.sorted.partition_point(|&s| s < x - KDE_CUTOFF * h);
        let hi = self.sorted.partition_point(|&s| s <= x + KDE_CUTOFF * h);
        let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * h * self.sorted.len() as f64);
        self.sorted[lo..hi].iter().map(|&s| (-0.5 * ((x - s) / h).powi(2)).exp()).sum::<f64>() * norm
    }
}

/// Source of marginal densities `f_i` of the ordered singular values.
pub trait MarginalDensity: Sync {
    /// Number of singular values covered.
    fn len(&self) -> usize;
    /// Density of the `i`-th largest singular value at `x`.
    fn density(&self, index: usize, x: f64) -> Result<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    KdeFromReplicates,
    UserSupplied,
}

type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Evaluator {
    Kde(Kde),
    Custom(DensityFn),
}

/// One density evaluator per singular value index.
#[derive(Clone)]
pub struct DensityProvider {
    evaluators: Vec<Evaluator>,
    pub provenance: Provenance,
}

impl std::fmt::Debug for DensityProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DensityProvider")
            .field("len", &self.evaluators.len())
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl DensityProvider {
    /// Per-index densities supplied as closures.
    pub fn from_fns(fns: Vec<DensityFn>) -> DensityProvider {
        DensityProvider {
            evaluators: fns.into_iter().map(Evaluator::Custom).collect(),
            provenance: Provenance::UserSupplied,
        }
    }

    /// The same density for all `n` indices.
    pub fn uniform_fn(n: usize, f: DensityFn) -> DensityProvider {
        Self::from_fns(vec![f; n])
    }

    /// One Silverman KDE per column of the sample matrix.
    pub fn from_samples(samples: &SingularValueSamples) -> Result<DensityProvider> {
        let evaluators = (0..samples.n())
            .map(|i| {
                let col: Vec<f64> = samples.data.column(i).iter().copied().collect();
                Kde::silverman(col)
                    .map(Evaluator::Kde)
                    .map_err(|e| Error::DegenerateSample(format!("column {i}: {e}")))
            })
            .collect::<Result<_>>()?;
        Ok(DensityProvider { evaluators, provenance: Provenance::KdeFromReplicates })
    }
}

impl MarginalDensity for DensityProvider {
    fn len(&self) -> usize {
        self.evaluators.len()
    }

    fn density(&self, index: usize, x: f64) -> Result<f64> {
        let ev = self.evaluators.get(index).ok_or_else(|| {
            Error::ShapeMismatch(format!("no density for index {index} of {}", self.evaluators.len()))
        })?;
        let v = match ev {
            Evaluator::Kde(k) => k.eval(x),
            Evaluator::Custom(f) => f(x),
        };
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidArgument(format!("density {v} at {x} is not a valid density")));
        }
        Ok(v)
    }
}

/// Densities tabulated at one evaluation point, e.g. a fixed threshold.
#[derive(Clone, Debug)]
pub struct TabulatedDensity {
    pub at: f64,
    pub values: Vec<f64>,
}

impl TabulatedDensity {
    pub fn from_provider<D: MarginalDensity + ?Sized>(d: &D, at: f64) -> Result<TabulatedDensity> {
        let values = (0..d.len()).map(|i| d.density(i, at)).collect::<Result<_>>()?;
        Ok(TabulatedDensity { at, values })
    }
}

impl MarginalDensity for TabulatedDensity {
    fn len(&self) -> usize {
        self.values.len()
    }

    fn density(&self, index: usize, x: f64) -> Result<f64> {
        if x != self.at {
            return Err(Error::InvalidArgument(format!(
                "density tabulated at {} queried at {x}",
                self.at
            )));
        }
        self.values
            .get(index)
            .copied()
            .ok_or_else(|| Error::ShapeMismatch(format!("no density for index {index}")))
    }
}

/// Replicated singular values: row `b` holds the nonincreasing spectrum of replicate `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularValueSamples {
    pub data: DMatrix<f64>,
}

impl SingularValueSamples {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<SingularValueSamples> {
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch("ragged singular value rows".into()));
        }
        Ok(SingularValueSamples {
            data: DMatrix::from_fn(rows.len(), n, |b, i| rows[b][i]),
        })
    }

    pub fn reps(&self) -> usize {
        self.data.nrows()
    }
    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        crate::io::write_matrix_csv(path, &self.data)
    }

    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<SingularValueSamples> {
        Ok(SingularValueSamples { data: crate::io::read_matrix_csv(path)? })
    }
}

/// Spectra of `signal + tau Z_b` for `b < reps`, each replicate on its own stream.
pub fn bootstrap_singular_values(
    signal: &Mat,
    tau: f64,
    reps: usize,
    seed: u64,
    exec: Exec,
) -> Result<SingularValueSamples> {
    if reps < 2 {
        return Err(Error::TooFewReps { min: 2, got: reps });
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be nonnegative, got {tau}")));
    }
    let (m, n) = signal.shape();
    let rows: Vec<Result<Vec<f64>>> = exec.map(reps, |b| {
        let z = normal_matrix(&mut stream(seed, Domain::Bootstrap, b as u64), m, n);
        Ok(spectrum(&(signal + z * tau))?.sigma)
    });
    let rows: Vec<Vec<f64>> = rows.into_iter().collect::<Result<_>>()?;
    SingularValueSamples::from_rows(&rows)
}

/// Parametric bootstrap density provider around `signal`.
pub fn bootstrap_density(
    signal: &Mat,
    tau: f64,
    reps: usize,
    seed: u64,
    exec: Exec,
) -> Result<DensityProvider> {
    DensityProvider::from_samples(&bootstrap_singular_values(signal, tau, reps, seed, exec)?)
}
