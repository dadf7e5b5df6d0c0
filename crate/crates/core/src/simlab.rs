//! Seeded simulation experiments: degrees of freedom and risk curves over a grid of
//! regularization levels, for the additive and the regression model.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Cholesky, DMatrix};

use crate::density::{DensityProvider, SingularValueSamples, TabulatedDensity};
use crate::df::{df_for_penalty, sure_from_residual};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::oracle::{covariance_mc, McConfig, McResult, NoiseModel};
use crate::penalty::{Penalty, PenaltySpec};
use crate::regression::DesignFactorization;
use crate::rng::{normal_matrix, stream, Domain};
use crate::spectral::{spectrum, svd, Mat};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Model {
    Additive,
    Regression { p: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum SignalRecipe {
    /// `c 11'`
    Constant(f64),
    /// `sum_k w_k u_k u_k'` with iid Gaussian `u_k` of variance `n^{-1/2}`.
    LowRank(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: Model,
    pub m: usize,
    pub n: usize,
    pub tau: f64,
    pub signal: SignalRecipe,
    /// Families swept over `theta_grid`; the regression design is always Toeplitz.
    pub penalties: Vec<Penalty>,
    pub theta_grid: Vec<f64>,
    pub reps_truth: usize,
    pub reps_estimate: usize,
    pub seed: u64,
}

/// `count` equispaced points on `[start, end]`.
pub fn linspace(start: f64, end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![start],
        _ => (0..count)
            .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Default seed of the presets.
pub const PRESET_SEED: u64 = 1;

fn additive_penalties() -> Vec<Penalty> {
    vec![
        Penalty::Scad { a: 3.7 },
        Penalty::McPlus { gamma: 2.0 },
        Penalty::Log { gamma: 0.01 },
        Penalty::Bridge { q: 0.1 },
        Penalty::Bridge { q: 0.5 },
        Penalty::Bridge { q: 0.9 },
    ]
}

impl ExperimentConfig {
    /// 50 x 50, `M = 5 11'`, `tau = 1`, rank penalty and bridge `q = 0.1`.
    pub fn figure1() -> ExperimentConfig {
        ExperimentConfig {
            name: "figure1".into(),
            model: Model::Additive,
            m: 50,
            n: 50,
            tau: 1.0,
            signal: SignalRecipe::Constant(5.0),
            penalties: vec![Penalty::Rank, Penalty::Bridge { q: 0.1 }],
            theta_grid: linspace(0.0, 100.0, 21),
            reps_truth: 10_000,
            reps_estimate: 10_000,
            seed: PRESET_SEED,
        }
    }

    /// 100 x 100, rank-5 signal, `tau = 0.1`, six nonconvex penalties.
    pub fn figure2() -> ExperimentConfig {
        ExperimentConfig {
            name: "figure2".into(),
            model: Model::Additive,
            m: 100,
            n: 100,
            tau: 0.1,
            signal: SignalRecipe::LowRank(vec![1.0, 2.0, 3.0, 4.0, 5.0]),
            penalties: additive_penalties(),
            theta_grid: linspace(0.0, 20.0, 41),
            reps_truth: 2000,
            reps_estimate: 100,
            seed: PRESET_SEED,
        }
    }

    /// Regression with `m = 300`, `n = p = 100` and a Toeplitz design.
    pub fn figure4() -> ExperimentConfig {
        ExperimentConfig {
            name: "figure4".into(),
            model: Model::Regression { p: 100 },
            m: 300,
            ..ExperimentConfig::figure2()
        }
    }

    /// Looks up a preset; `figure3` and `figure5` share the runs of `figure2` and
    /// `figure4` (their risk columns).
    pub fn preset(name: &str) -> Option<ExperimentConfig> {
        match name {
            "figure1" => Some(Self::figure1()),
            "figure2" | "figure3" => Some(Self::figure2()),
            "figure4" | "figure5" => Some(Self::figure4()),
            _ => None,
        }
    }

    pub fn preset_names() -> &'static [&'static str] {
        &["figure1", "figure2", "figure3", "figure4", "figure5"]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(Error::InvalidArgument(s.to_string()));
        if self.m == 0 || self.n == 0 {
            return bad("dimensions must be positive");
        }
        if let Model::Regression { p } = self.model {
            if p == 0 {
                return bad("p must be positive");
            }
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad("tau must be positive");
        }
        if self.penalties.is_empty() || self.theta_grid.is_empty() {
            return bad("penalty and theta grids must be nonempty");
        }
        if self.reps_truth < 100 {
            return Err(Error::TooFewReps { min: 100, got: self.reps_truth });
        }
        if self.reps_estimate < 2 {
            return Err(Error::TooFewReps { min: 2, got: self.reps_estimate });
        }
        if let SignalRecipe::LowRank(w) = &self.signal {
            let rows = match self.model {
                Model::Additive => self.m,
                Model::Regression { p } => p,
            };
            if w.is_empty() || rows != self.n {
                return bad("low-rank signal needs nonempty weights and a square signal");
            }
        }
        for &pen in &self.penalties {
            for &t in &self.theta_grid {
                PenaltySpec::new(pen, t).map_err(|e| Error::AtTheta { theta: t, source: Box::new(e) })?;
            }
        }
        Ok(())
    }

    /// Flat `key = value` text; `penalty` lines repeat.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", self.name);
        match self.model {
            Model::Additive => {
                let _ = writeln!(s, "model = additive");
            }
            Model::Regression { p } => {
                let _ = writeln!(s, "model = regression\np = {p}\ndesign = toeplitz");
            }
        }
        let _ = writeln!(s, "m = {}\nn = {}\ntau = {}", self.m, self.n, self.tau);
        match &self.signal {
            SignalRecipe::Constant(c) => {
                let _ = writeln!(s, "signal = constant {c}");
            }
            SignalRecipe::LowRank(w) => {
                let w: Vec<String> = w.iter().map(f64::to_string).collect();
                let _ = writeln!(s, "signal = lowrank {}", w.join(","));
            }
        }
        for p in &self.penalties {
            let _ = writeln!(s, "penalty = {p}");
        }
        let g: Vec<String> = self.theta_grid.iter().map(f64::to_string).collect();
        let _ = writeln!(s, "theta_grid = {}", g.join(","));
        let _ = writeln!(
            s,
            "reps_truth = {}\nreps_estimate = {}\nseed = {}",
            self.reps_truth, self.reps_estimate, self.seed
        );
        s
    }

    /// Parses the text produced by [`ExperimentConfig::to_config_string`]. `theta_grid`
    /// also accepts `linspace start end count`. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let perr = |line: usize, msg: String| Error::Parse(format!("line {line}: {msg}"));
        let mut name = "experiment".to_string();
        let mut model = None;
        let (mut m, mut n, mut p) = (None, None, None);
        let mut tau = None;
        let mut signal = None;
        let mut penalties = Vec::new();
        let mut grid = None;
        let (mut rt, mut re, mut seed) = (None, None, PRESET_SEED);
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| perr(ln, format!("expected key = value, got `{line}`")))?;
            let num = |v: &str| v.parse::<f64>().map_err(|_| perr(ln, format!("bad number `{v}`")));
            let int = |v: &str| v.parse::<u64>().map_err(|_| perr(ln, format!("bad integer `{v}`")));
            match k {
                "name" => name = v.to_string(),
                "model" => model = Some(v.to_ascii_lowercase()),
                "m" => m = Some(int(v)? as usize),
                "n" => n = Some(int(v)? as usize),
                "p" => p = Some(int(v)? as usize),
                "tau" => tau = Some(num(v)?),
                "design" if v.eq_ignore_ascii_case("toeplitz") => {}
                "design" => return Err(perr(ln, format!("unknown design `{v}`"))),
                "signal" => {
                    let (kind, rest) = v.split_once(char::is_whitespace).unwrap_or((v, ""));
                    signal = Some(match kind {
                        "constant" => SignalRecipe::Constant(num(rest.trim())?),
                        "lowrank" => SignalRecipe::LowRank(
                            rest.split(',').map(|w| num(w.trim())).collect::<Result<_>>()?,
                        ),
                        _ => return Err(perr(ln, format!("unknown signal `{kind}`"))),
                    });
                }
                "penalty" => penalties.push(v.parse::<Penalty>().map_err(|e| perr(ln, e.to_string()))?),
                "theta_grid" => {
                    let parts: Vec<&str> = v.split_whitespace().collect();
                    grid = Some(if parts.first() == Some(&"linspace") && parts.len() == 4 {
                        linspace(num(parts[1])?, num(parts[2])?, int(parts[3])? as usize)
                    } else {
                        v.split(',').map(|t| num(t.trim())).collect::<Result<_>>()?
                    });
                }
                "reps_truth" => rt = Some(int(v)? as usize),
                "reps_estimate" => re = Some(int(v)? as usize),
                "seed" => seed = int(v)?,
                _ => return Err(perr(ln, format!("unknown key `{k}`"))),
            }
        }
        let missing = |k: &str| Error::Parse(format!("missing key `{k}`"));
        let model = match model.as_deref() {
            Some("additive") | None => Model::Additive,
            Some("regression") => Model::Regression { p: p.ok_or_else(|| missing("p"))? },
            Some(other) => return Err(Error::Parse(format!("unknown model `{other}`"))),
        };
        let cfg = ExperimentConfig {
            name,
            model,
            m: m.ok_or_else(|| missing("m"))?,
            n: n.ok_or_else(|| missing("n"))?,
            tau: tau.ok_or_else(|| missing("tau"))?,
            signal: signal.ok_or_else(|| missing("signal"))?,
            penalties,
            theta_grid: grid.ok_or_else(|| missing("theta_grid"))?,
            reps_truth: rt.ok_or_else(|| missing("reps_truth"))?,
            reps_estimate: re.ok_or_else(|| missing("reps_estimate"))?,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `sum_k w_k u_k u_k'` with `u_k` entries iid normal of variance `n^{-1/2}`.
pub fn gen_lowrank_signal(n: usize, weights: &[f64], seed: u64) -> Mat {
    let sd = (n as f64).powf(-0.25);
    let u = normal_matrix(&mut stream(seed, Domain::Signal, 0), n, weights.len()) * sd;
    let mut scaled = u.clone();
    for (k, &w) in weights.iter().enumerate() {
        scaled.column_mut(k).scale_mut(w);
    }
    scaled * u.transpose()
}

/// Toeplitz covariance `Sigma_ij = 1 / (2^{|i-j|} m)` of size `p x p`.
pub fn toeplitz_covariance(m: usize, p: usize) -> Mat {
    DMatrix::from_fn(p, p, |i, j| 0.5f64.powi(i.abs_diff(j) as i32) / m as f64)
}

/// Design with iid `N(0, Sigma)` rows for the Toeplitz `Sigma`.
pub fn gen_toeplitz_design(m: usize, p: usize, seed: u64) -> Result<Mat> {
    if m == 0 || p == 0 {
        return Err(Error::InvalidArgument("design dimensions must be positive".into()));
    }
    let chol = Cholesky::new(toeplitz_covariance(m, p))
        .ok_or_else(|| Error::InvalidArgument("Cholesky factorization failed".into()))?;
    let g = normal_matrix(&mut stream(seed, Domain::Design, 0), m, p);
    Ok(g * chol.l().transpose())
}

/// One row of a degrees-of-freedom / risk curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExperimentRow {
    pub theta: f64,
    pub df_true: f64,
    pub df_true_se: f64,
    pub df_est_mean: f64,
    pub df_est_se: f64,
    pub mse_true: f64,
    pub mse_true_se: f64,
    pub sure_mean: f64,
    pub sure_se: f64,
    /// Estimate with the density correction dropped.
    pub df_naive_mean: f64,
    pub df_naive_se: f64,
}

impl ExperimentRow {
    pub const CSV_HEADER: &'static str = "theta,df_true,df_true_se,df_est_mean,df_est_se,mse_true,mse_true_se,sure_mean,sure_se,df_naive_mean,df_naive_se";

    pub fn csv_line(&self) -> String {
        let v = [
            self.theta,
            self.df_true,
            self.df_true_se,
            self.df_est_mean,
            self.df_est_se,
            self.mse_true,
            self.mse_true_se,
            self.sure_mean,
            self.sure_se,
            self.df_naive_mean,
            self.df_naive_se,
        ];
        v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
    }

    /// `|df_est - df_true| <= k (se_true + se_est)`.
    pub fn df_agrees(&self, k: f64) -> bool {
        (self.df_est_mean - self.df_true).abs() <= k * (self.df_true_se + self.df_est_se)
    }

    /// `|sure - mse_true| <= k (se_true + se_sure)`.
    pub fn sure_agrees(&self, k: f64) -> bool {
        (self.sure_mean - self.mse_true).abs() <= k * (self.mse_true_se + self.sure_se)
    }
}

/// The curve of one penalty family.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub experiment: String,
    pub penalty: Penalty,
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentResult {
    pub fn file_name(&self) -> String {
        format!("{}_{}.csv", self.experiment, self.penalty.label())
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from(ExperimentRow::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv_line());
            s.push('\n');
        }
        s
    }

    pub fn write_csv<P: AsRef<Path>>(&self, dir: P) -> Result<PathBuf> {
        let path = dir.as_ref().join(self.file_name());
        std::fs::write(&path, self.to_csv_string())?;
        Ok(path)
    }
}

struct Setup {
    working_mean: Mat,
    projector: Option<Mat>,
    full: (usize, usize),
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let rows = match cfg.model {
        Model::Additive => cfg.m,
        Model::Regression { p } => p,
    };
    let mstar = match &cfg.signal {
        SignalRecipe::Constant(c) => Mat::from_element(rows, cfg.n, *c),
        SignalRecipe::LowRank(w) => gen_lowrank_signal(cfg.n, w, cfg.seed),
    };
    Ok(match cfg.model {
        Model::Additive => Setup { working_mean: mstar, projector: None, full: (cfg.m, cfg.n) },
        Model::Regression { p } => {
            let x = gen_toeplitz_design(cfg.m, p, cfg.seed)?;
            let fact = DesignFactorization::new(&x)?;
            let xm = &x * &mstar;
            Setup { working_mean: fact.u.tr_mul(&xm), projector: Some(fact.u), full: (cfg.m, cfg.n) }
        }
    })
}

/// Runs the truth and estimate Monte Carlo for every penalty and grid point.
///
/// Truth uses `reps_truth` replicates shared by all grid points; estimates use
/// `reps_estimate` fresh replicates. Regression runs are carried out on `U'Y`, which
/// leaves every reported quantity unchanged. Discontinuous families take their
/// singular value densities from a KDE of the truth replicates.
pub fn run_df_curve(cfg: &ExperimentConfig, exec: Exec) -> Result<Vec<ExperimentResult>> {
    cfg.validate()?;
    let st = setup(cfg)?;
    let noise = NoiseModel {
        mean: &st.working_mean,
        tau: cfg.tau,
        full: st.full,
        projector: st.projector.as_ref(),
    };
    let specs: Vec<PenaltySpec> = cfg
        .penalties
        .iter()
        .flat_map(|&p| cfg.theta_grid.iter().map(move |&t| PenaltySpec { penalty: p, theta: t }))
        .collect();
    let with_theta = |t: f64| move |e: Error| Error::AtTheta { theta: t, source: Box::new(e) };

    let truth_cfg = McConfig { reps: cfg.reps_truth, seed: cfg.seed, exec };
    let truth = covariance_mc(&noise, specs.len(), &truth_cfg, Domain::TruthNoise, |y| {
        let d = svd(y)?;
        let mut fits = Vec::with_capacity(specs.len());
        for spec in &specs {
            let vals: Vec<f64> =
                d.sigma().iter().map(|&s| spec.prox(s)).collect::<Result<_>>().map_err(with_theta(spec.theta))?;
            fits.push(d.compose(&vals));
        }
        Ok((fits, d.sigma().to_vec()))
    })?;

    let needs_density = specs.iter().any(|s| s.discontinuity().is_some_and(|d| d.jump > 0.0));
    let provider = if needs_density {
        Some(DensityProvider::from_samples(&SingularValueSamples::from_rows(&truth.extras)?)?)
    } else {
        None
    };
    // A zero-height jump (theta = 0) never queries its density.
    let tables: Vec<Option<TabulatedDensity>> = specs
        .iter()
        .map(|s| match (s.discontinuity(), &provider) {
            (Some(d), Some(p)) if d.jump > 0.0 => TabulatedDensity::from_provider(p, d.location).map(Some),
            (Some(d), _) => Ok(Some(TabulatedDensity { at: d.location, values: vec![0.0; cfg.n.min(st.working_mean.nrows())] })),
            (None, _) => Ok(None),
        })
        .collect::<Result<_>>()?;

    let mn_full = st.full.0 * st.full.1;
    let t2 = cfg.tau * cfg.tau;
    let regression = st.projector.is_some();
    let est: Vec<Result<Vec<[f64; 3]>>> = exec.map(cfg.reps_estimate, |b| {
        let (g, full_sq) = noise.draw(cfg.seed, Domain::EstimateNoise, b);
        let y = noise.observe(&g);
        let outside = if regression { t2 * (full_sq - g.norm_squared()) } else { 0.0 };
        let sp = spectrum(&y)?;
        specs
            .iter()
            .zip(&tables)
            .map(|(spec, tab)| {
                let run = || -> Result<[f64; 3]> {
                    let mut rss = outside;
                    for &s in &sp.sigma {
                        rss += (spec.prox(s)? - s).powi(2);
                    }
                    let df = df_for_penalty(&sp, spec, tab.as_ref())?;
                    let sure = sure_from_residual(rss, mn_full, df.value, cfg.tau);
                    Ok([df.value, df.without_density().value, sure])
                };
                run().map_err(with_theta(spec.theta))
            })
            .collect()
    });
    let est: Vec<Vec<[f64; 3]>> = est.into_iter().collect::<Result<_>>()?;

    let stat = |k: usize, c: usize| -> McResult {
        let xs: Vec<f64> = est.iter().map(|r| r[k][c]).collect();
        McResult::from_samples(&xs, cfg.seed)
    };
    let mut out = Vec::new();
    for (pi, &pen) in cfg.penalties.iter().enumerate() {
        let mut rows = Vec::with_capacity(cfg.theta_grid.len());
        for (ti, &theta) in cfg.theta_grid.iter().enumerate() {
            let k = pi * cfg.theta_grid.len() + ti;
            let (dfe, naive, sure) = (stat(k, 0), stat(k, 1), stat(k, 2));
            rows.push(ExperimentRow {
                theta,
                df_true: truth.df[k].estimate,
                df_true_se: truth.df[k].std_error,
                df_est_mean: dfe.estimate,
                df_est_se: dfe.std_error,
                mse_true: truth.mse[k].estimate,
                mse_true_se: truth.mse[k].std_error,
                sure_mean: sure.estimate,
                sure_se: sure.std_error,
                df_naive_mean: naive.estimate,
                df_naive_se: naive.std_error,
            });
        }
        out.push(ExperimentResult { experiment: cfg.name.clone(), penalty: pen, rows });
    }
    Ok(out)
}
