use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::Parser;
use lowrank_df::density::bootstrap_density;
use lowrank_df::df::{df_for_penalty, df_reduced_rank, sure_risk, DfEstimate};
use lowrank_df::io::{read_matrix_csv, write_matrix_csv};
use lowrank_df::penalty::{Penalty, PenaltySpec};
use lowrank_df::simlab::{linspace, run_df_curve, ExperimentConfig};
use lowrank_df::spectral::{apply_spectral, svd, truncate_rank, Mat, Prox, SvdDecomposition};
use lowrank_df::{Error, Exec};

use crate::manifest::RunManifest;
use crate::{Cli, Command, DensityArgs, ExperimentArgs, FitArgs, PenaltyArgs, ReplayArgs, SurePathArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
    Validation(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_input_error() => 2,
            CliError::Core(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(s) => write!(f, "{s}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Validation(n) => write!(f, "{n} validation suite(s) failed"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

type CliResult<T> = Result<T, CliError>;

pub fn run(cli: Cli, argv: &[String]) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // Fails only if a pool already exists, in which case it is reused.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let exec = Exec::default();
    match cli.command {
        Command::Fit(a) => cmd_fit(&a, argv, exec),
        Command::SurePath(a) => cmd_sure_path(&a, argv, exec),
        Command::Experiment(a) => cmd_experiment(&a, argv, exec),
        Command::Validate(a) => {
            let failed = crate::validate::run(a.scale, exec);
            if failed > 0 {
                Err(CliError::Validation(failed))
            } else {
                Ok(())
            }
        }
        Command::Replay(a) => cmd_replay(&a, cli.threads),
    }
}

/// `--key value` pairs and positionals of a command line, for the manifest.
fn argument_map(argv: &[String]) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut i = 1;
    while i < argv.len() {
        let tok = &argv[i];
        if let Some(key) = tok.strip_prefix("--") {
            if let Some((k, v)) = key.split_once('=') {
                out.insert(k.to_string(), v.to_string());
            } else if i + 1 < argv.len() && !argv[i + 1].starts_with("--") {
                out.insert(key.to_string(), argv[i + 1].clone());
                i += 1;
            } else {
                out.insert(key.to_string(), "true".into());
            }
        } else {
            out.insert("source".into(), tok.clone());
        }
        i += 1;
    }
    out
}

fn write_manifest(argv: &[String], seed: u64, output: &Path) -> CliResult<()> {
    let command = argv.first().cloned().unwrap_or_default();
    RunManifest::new(&command, argument_map(argv), argv, seed, output).write_next_to(output)?;
    Ok(())
}

fn check_tau(tau: f64) -> CliResult<()> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(CliError::Usage(format!("--tau must be positive, got {tau}")));
    }
    Ok(())
}

fn build_spec(p: &PenaltyArgs, theta: f64) -> CliResult<PenaltySpec> {
    let name = p.penalty.as_deref().ok_or_else(|| CliError::Usage("--penalty is required".into()))?;
    let mut params = BTreeMap::new();
    for (k, v) in [("a", p.a), ("gamma", p.gamma), ("q", p.q)] {
        if let Some(v) = v {
            params.insert(k.to_string(), v);
        }
    }
    Ok(PenaltySpec::new(Penalty::from_parts(name, &params)?, theta)?)
}

/// Spectral fit of `y` and its df; bridge and rank penalties use a parametric
/// bootstrap density centered at the fit.
fn penalized_fit(
    d: &SvdDecomposition,
    spec: &PenaltySpec,
    tau: f64,
    dens: &DensityArgs,
    exec: Exec,
) -> lowrank_df::Result<(Mat, DfEstimate)> {
    let fit = apply_spectral(d, &Prox(*spec))?;
    let density = match spec.discontinuity() {
        Some(_) => Some(bootstrap_density(&fit, tau, dens.density_reps, dens.seed, exec)?),
        None => None,
    };
    let df = df_for_penalty(d, spec, density.as_ref())?;
    Ok((fit, df))
}

fn summary_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}.summary.csv"))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn cmd_fit(a: &FitArgs, argv: &[String], exec: Exec) -> CliResult<()> {
    check_tau(a.tau)?;
    let (spec, k) = match (&a.penalty.penalty, a.rank) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --penalty or --rank, not both".into())),
        (None, None) => return Err(CliError::Usage("one of --penalty or --rank is required".into())),
        (Some(_), None) => {
            let theta = a.theta.ok_or_else(|| CliError::Usage("--theta is required with --penalty".into()))?;
            (Some(build_spec(&a.penalty, theta)?), None)
        }
        (None, Some(k)) => (None, Some(k)),
    };
    let y = read_matrix_csv(&a.input)?;
    let d = svd(&y)?;
    let (label, fit, df) = match (spec, k) {
        (Some(spec), _) => {
            let (fit, df) = penalized_fit(&d, &spec, a.tau, &a.density, exec)?;
            (spec.to_string(), fit, df)
        }
        (None, Some(k)) => (format!("rank k={k}"), truncate_rank(&d, k)?, df_reduced_rank(&d, k)?),
        (None, None) => unreachable!(),
    };
    let sure = sure_risk(&y, &fit, df.value, a.tau)?;
    let rss = (&fit - &y).norm_squared();
    write_matrix_csv(&a.output, &fit)?;
    write_manifest(argv, a.density.seed, &a.output)?;
    let header = "estimator,theta,rank,df,sure,rss,applicable";
    let row = format!(
        "\"{label}\",{},{},{},{},{},{}",
        fmt_opt(spec.map(|s| s.theta)),
        k.map(|k| k.to_string()).unwrap_or_default(),
        df.value,
        sure,
        rss,
        df.applicable
    );
    let sp = summary_path(&a.output);
    std::fs::write(&sp, format!("{header}\n{row}\n"))?;
    write_manifest(argv, a.density.seed, &sp)?;
    println!("{header}\n{row}");
    if let Some(reason) = &df.reason {
        eprintln!("note: {reason}");
    }
    Ok(())
}

fn theta_grid(a: &SurePathArgs) -> CliResult<Vec<f64>> {
    let grid = match (a.theta_from, a.theta_to, a.theta_count) {
        (Some(lo), Some(hi), Some(n)) => linspace(lo, hi, n),
        _ => a.theta.clone(),
    };
    if grid.is_empty() {
        return Err(CliError::Usage("theta grid is empty".into()));
    }
    if grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(CliError::Usage("theta values must be finite and nonnegative".into()));
    }
    Ok(grid)
}

fn cmd_sure_path(a: &SurePathArgs, argv: &[String], exec: Exec) -> CliResult<()> {
    check_tau(a.tau)?;
    let grid = theta_grid(a)?;
    let specs: Vec<PenaltySpec> = grid.iter().map(|&t| build_spec(&a.penalty, t)).collect::<CliResult<_>>()?;
    let y = read_matrix_csv(&a.input)?;
    let d = svd(&y)?;
    let mut text = String::from("theta,df,sure\n");
    for spec in &specs {
        let at = |e: Error| Error::AtTheta { theta: spec.theta, source: Box::new(e) };
        let (fit, df) = penalized_fit(&d, spec, a.tau, &a.density, exec).map_err(at)?;
        let sure = sure_risk(&y, &fit, df.value, a.tau)?;
        text.push_str(&format!("{},{},{}\n", spec.theta, df.value, sure));
    }
    std::fs::write(&a.output, &text)?;
    write_manifest(argv, a.density.seed, &a.output)?;
    print!("{text}");
    Ok(())
}

fn load_config(source: &str) -> CliResult<ExperimentConfig> {
    let path = Path::new(source);
    if path.is_file() {
        return Ok(ExperimentConfig::parse(&std::fs::read_to_string(path)?)?);
    }
    ExperimentConfig::preset(source).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown preset `{source}` (known: {}) and no such config file",
            ExperimentConfig::preset_names().join(", ")
        ))
    })
}

fn cmd_experiment(a: &ExperimentArgs, argv: &[String], exec: Exec) -> CliResult<()> {
    let mut cfg = load_config(&a.source)?;
    if let Some(r) = a.reps {
        cfg.reps_truth = r;
    }
    if let Some(r) = a.estimate_reps {
        cfg.reps_estimate = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&a.output)?;
    for res in run_df_curve(&cfg, exec)? {
        let path = res.write_csv(&a.output)?;
        write_manifest(argv, cfg.seed, &path)?;
        println!("{}", path.display());
    }
    Ok(())
}

/// Replaces the value of `--output` in a recorded command line.
fn override_output(argv: &mut Vec<String>, output: &Path) {
    let new = output.to_string_lossy().into_owned();
    if let Some(i) = argv.iter().position(|t| t == "--output") {
        if i + 1 < argv.len() {
            argv[i + 1] = new;
            return;
        }
    }
    if let Some(i) = argv.iter().position(|t| t.starts_with("--output=")) {
        argv[i] = format!("--output={new}");
        return;
    }
    argv.push("--output".into());
    argv.push(new);
}

fn cmd_replay(a: &ReplayArgs, threads: Option<usize>) -> CliResult<()> {
    let m = RunManifest::read(&a.manifest)?;
    let mut argv = m.argv.clone();
    if argv.first().map(String::as_str) == Some("replay") {
        return Err(CliError::Usage("manifest records a replay; replay the original manifest".into()));
    }
    if let Some(out) = &a.output {
        override_output(&mut argv, out);
    }
    let mut full = vec!["lowrank-df".to_string()];
    full.extend(argv.iter().cloned());
    let cli = Cli::try_parse_from(&full).map_err(|e| CliError::Usage(format!("manifest command line: {e}")))?;
    let cli = Cli { threads: threads.or(cli.threads), ..cli };
    run(cli, &argv)
}
