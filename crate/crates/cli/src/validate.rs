//! Self-validation suites run by `lowrank-df validate`.

use std::time::Instant;

use lowrank_df::df::{df_reduced_rank, df_spectral};
use lowrank_df::oracle::{fd_divergence, true_df_mc, McConfig, SpectralEstimator, TruncationEstimator};
use lowrank_df::penalty::{Penalty, PenaltySpec};
use lowrank_df::regression::{spectral_regression, DesignFactorization};
use lowrank_df::rng::{normal_matrix, stream, Domain};
use lowrank_df::simlab::{run_df_curve, ExperimentConfig};
use lowrank_df::spectral::{
    divergence, matrix_function, shapiro_directional_derivative, spectrum, svd, symmetrize, Mat,
    OddExtension, Prox, GROUP_TOL,
};
use lowrank_df::Exec;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::Scale;

const SEED: u64 = 77;

struct Sizes {
    draws: usize,
    matrices: u64,
    fig1_reps: usize,
}

fn sizes(scale: Scale) -> Sizes {
    match scale {
        Scale::Quick => Sizes { draws: 100, matrices: 20, fig1_reps: 1000 },
        Scale::Default => Sizes { draws: 500, matrices: 100, fig1_reps: 4000 },
        Scale::Full => Sizes { draws: 1000, matrices: 200, fig1_reps: 10_000 },
    }
}

fn rng(suite: u64, i: u64) -> ChaCha8Rng {
    stream(SEED, Domain::Test, suite * 1_000_000 + i)
}

type Suite = (&'static str, fn(&Sizes, Exec) -> (bool, String));

/// Runs every suite, prints one line each and returns the number of failures.
pub fn run(scale: Scale, exec: Exec) -> usize {
    let s = sizes(scale);
    let suites: [Suite; 8] = [
        ("prox-grid", prox_grid),
        ("divergence-fd", divergence_fd),
        ("matrix-derivative-fd", matrix_derivative_fd),
        ("symmetrization", symmetrization),
        ("reduced-rank-fd", reduced_rank_fd),
        ("regression-reduction", regression_reduction),
        ("exec-determinism", exec_determinism),
        ("figure1-consistency", figure1_consistency),
    ];
    let mut failed = 0;
    for (name, f) in suites {
        let start = Instant::now();
        let (ok, detail) = f(&s, exec);
        println!(
            "[{}] {name}: {detail} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        if !ok {
            failed += 1;
        }
    }
    failed
}

fn random_spec(r: &mut ChaCha8Rng, family: usize) -> PenaltySpec {
    let theta = r.random_range(0.0..3.0);
    let pen = match family {
        0 => Penalty::Nuclear,
        1 => Penalty::Scad { a: r.random_range(2.1..5.0) },
        2 => Penalty::McPlus { gamma: r.random_range(1.1..4.0) },
        3 => Penalty::Log { gamma: r.random_range(0.01..2.0) },
        4 => Penalty::Firm { gamma: theta + r.random_range(0.1..3.0) },
        5 => Penalty::Bridge { q: r.random_range(0.0..0.95) },
        _ => Penalty::Rank,
    };
    PenaltySpec::new(pen, theta).expect("valid random spec")
}

/// Minimizer of `(x - sigma)^2 / 2 + P(x)` on a `1e-5` grid, refined around the best
/// local minima of a `1e-3` grid.
fn grid_prox(spec: &PenaltySpec, sigma: f64) -> f64 {
    let obj = |x: f64| 0.5 * (x - sigma).powi(2) + spec.value(x).unwrap_or(f64::INFINITY);
    let nc = (sigma / 1e-3).ceil() as usize;
    let pts: Vec<f64> = (0..=nc).map(|i| (i as f64 * 1e-3).min(sigma)).collect();
    let vals: Vec<f64> = pts.iter().map(|&x| obj(x)).collect();
    let mut cands: Vec<usize> = (0..pts.len())
        .filter(|&i| (i == 0 || vals[i] <= vals[i - 1]) && (i + 1 == pts.len() || vals[i] <= vals[i + 1]))
        .collect();
    cands.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    cands.truncate(3);
    let mut best = (f64::INFINITY, 0.0);
    for c in cands {
        let lo = (pts[c] - 2e-3).max(0.0);
        let hi = (pts[c] + 2e-3).min(sigma);
        for i in 0..=((hi - lo) / 1e-5).ceil() as usize {
            let x = (lo + i as f64 * 1e-5).min(hi);
            let v = obj(x);
            if v < best.0 {
                best = (v, x);
            }
        }
    }
    best.1
}

fn prox_grid(s: &Sizes, _: Exec) -> (bool, String) {
    let mut worst: f64 = 0.0;
    for family in 0..7 {
        let mut r = rng(1, family as u64);
        for _ in 0..s.draws {
            let spec = random_spec(&mut r, family);
            let sigma = r.random_range(0.0..10.0);
            let p = spec.prox(sigma).unwrap_or(f64::NAN);
            worst = worse(worst, (p - grid_prox(&spec, sigma)).abs());
        }
    }
    (worst <= 1e-4, format!("{} draws, max |prox - grid| {worst:.2e} (tol 1e-4)", 7 * s.draws))
}

fn divergence_fd(s: &Sizes, _: Exec) -> (bool, String) {
    let mut worst: f64 = 0.0;
    for t in 0..s.matrices {
        let mut r = rng(2, t);
        let m = r.random_range(4..=8usize);
        let n = r.random_range(3..=m.min(5));
        let y = normal_matrix(&mut r, m, n);
        let d = svd(&y).expect("svd");
        let theta = r.random_range(0.2..2.0);
        let specs = [
            PenaltySpec::nuclear(theta).unwrap(),
            PenaltySpec::scad(theta * 0.5, 3.7).unwrap(),
            PenaltySpec::mcplus(theta * 0.7, 2.0).unwrap(),
            PenaltySpec::log(theta, 0.3).unwrap(),
        ];
        for spec in specs {
            let near = d.sigma().iter().any(|&x| spec.kinks().iter().any(|&k| (x - k).abs() < 1e-3));
            if near {
                continue;
            }
            let div = divergence(&d, &Prox(spec), GROUP_TOL).unwrap_or(f64::NAN);
            let fd = fd_divergence(&SpectralEstimator(spec), &y, 1e-6).unwrap_or(f64::NAN);
            worst = worse(worst, (div - fd).abs() / div.abs().max(1.0));
        }
    }
    (worst <= 1e-4, format!("max relative gap {worst:.2e} (tol 1e-4)"))
}

fn matrix_derivative_fd(s: &Sizes, _: Exec) -> (bool, String) {
    let mut worst: f64 = 0.0;
    let t = 1e-7;
    for k in 0..s.matrices {
        let mut r = rng(3, k);
        let d = r.random_range(4..=6usize);
        let a = normal_matrix(&mut r, d, d);
        let x = (&a + a.transpose()) * 0.5;
        let b = normal_matrix(&mut r, d, d);
        let h = (&b + b.transpose()) * 0.5;
        let mut ev: Vec<f64> = x.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let theta = 0.7;
        if ev.windows(2).any(|w| w[1] - w[0] < 1e-3) || ev.iter().any(|l| (l.abs() - theta).abs() < 1e-3) {
            continue;
        }
        let f = OddExtension(Prox(PenaltySpec::nuclear(theta).unwrap()));
        let formula = shapiro_directional_derivative(&x, &f, &h, GROUP_TOL).expect("derivative");
        let fd = (matrix_function(&(&x + &h * t), &f).unwrap() - matrix_function(&x, &f).unwrap()) / t;
        worst = worse(worst, (&formula - fd).amax() / formula.amax().max(1.0));
    }
    (worst <= 1e-4, format!("max relative gap {worst:.2e} (tol 1e-4)"))
}

fn symmetrization(s: &Sizes, _: Exec) -> (bool, String) {
    let (mut res, mut orth): (f64, f64) = (0.0, 0.0);
    for k in 0..s.matrices {
        let mut r = rng(4, k);
        let m = r.random_range(2..=9usize);
        let n = r.random_range(1..=m);
        let y = normal_matrix(&mut r, m, n);
        let sy = symmetrize(&svd(&y).expect("svd")).expect("symmetrize");
        res = res.max((&sy.p * Mat::from_diagonal(&sy.sigma_star) * sy.p.transpose() - &sy.ystar).amax());
        orth = orth.max((sy.p.transpose() * &sy.p - Mat::identity(m + n, m + n)).amax());
    }
    (
        res <= 1e-8 && orth <= 1e-10,
        format!("residual {res:.2e} (tol 1e-8), orthogonality {orth:.2e} (tol 1e-10)"),
    )
}

fn reduced_rank_fd(s: &Sizes, _: Exec) -> (bool, String) {
    let mut worst: f64 = 0.0;
    let mut exact = true;
    for k in 0..s.matrices {
        let mut r = rng(5, k);
        let m = r.random_range(3..=8usize);
        let n = r.random_range(2..=m.min(6));
        let y = normal_matrix(&mut r, m, n);
        let d = svd(&y).expect("svd");
        let kk = r.random_range(1..n);
        exact &= df_reduced_rank(&d, n).map(|e| e.value == (m * n) as f64).unwrap_or(false);
        if d.sigma()[kk - 1] - d.sigma()[kk] < 1e-2 {
            continue;
        }
        let est = df_reduced_rank(&d, kk).expect("df").value;
        let fd = fd_divergence(&TruncationEstimator(kk), &y, 1e-6).expect("fd");
        worst = worse(worst, (est - fd).abs() / est.max(1.0));
    }
    (worst <= 1e-4 && exact, format!("max relative gap {worst:.2e} (tol 1e-4), K = n gives mn: {exact}"))
}

fn regression_reduction(s: &Sizes, _: Exec) -> (bool, String) {
    let mut worst: f64 = 0.0;
    for k in 0..s.matrices.min(50) {
        let mut r = rng(6, k);
        let m = r.random_range(8..=14usize);
        let p = r.random_range(2..=7usize);
        let n = r.random_range(2..=7usize);
        let x = normal_matrix(&mut r, m, p);
        let y = normal_matrix(&mut r, m, n) * 2.0;
        let fact = DesignFactorization::new(&x).expect("design");
        let spec = PenaltySpec::scad(r.random_range(0.1..2.0), 3.7).unwrap();
        let via = spectral_regression::<lowrank_df::DensityProvider>(&fact, &y, &spec, None).expect("fit");
        // Same estimator on the r x n projected response, computed independently of
        // the regression path.
        let q = fact.u.transpose() * &y;
        let direct = df_spectral(&spectrum(&q).expect("spectrum"), &spec).expect("df");
        worst = worse(worst, (via.df.value - direct.value).abs() / direct.value.abs().max(1.0));
    }
    (worst <= 1e-10, format!("max relative gap {worst:.2e} (tol 1e-10)"))
}

fn exec_determinism(_: &Sizes, _: Exec) -> (bool, String) {
    let mstar = Mat::from_fn(12, 8, |i, j| if i == j { 3.0 } else { 0.0 });
    let spec = PenaltySpec::mcplus(1.0, 2.0).unwrap();
    let run = |exec| true_df_mc(&SpectralEstimator(spec), &mstar, 1.0, &McConfig::new(300, 5).with_exec(exec));
    match (run(Exec::Sequential), run(Exec::Parallel)) {
        (Ok(a), Ok(b)) => {
            let same = a.estimate.to_bits() == b.estimate.to_bits() && a.std_error.to_bits() == b.std_error.to_bits();
            (same, format!("sequential {} vs parallel {} (bitwise equal: {same})", a.estimate, b.estimate))
        }
        (a, b) => (false, format!("errors: {:?} / {:?}", a.err(), b.err())),
    }
}

fn figure1_consistency(s: &Sizes, exec: Exec) -> (bool, String) {
    let cfg = ExperimentConfig { reps_truth: s.fig1_reps, reps_estimate: s.fig1_reps, ..ExperimentConfig::figure1() };
    let res = match run_df_curve(&cfg, exec) {
        Ok(r) => r,
        Err(e) => return (false, format!("run failed: {e}")),
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for panel in &res {
        let n = panel.rows.len();
        let hits = panel.rows.iter().filter(|r| r.df_agrees(3.0)).count();
        ok &= hits * 21 >= 19 * n;
        parts.push(format!("{} {hits}/{n}", panel.penalty));
    }
    (ok, format!("{} reps, within 3 SE: {} (need 19/21)", s.fig1_reps, parts.join(", ")))
}

/// Running maximum in which a NaN gap counts as a failure.
fn worse(acc: f64, gap: f64) -> f64 {
    if gap.is_nan() {
        f64::INFINITY
    } else {
        acc.max(gap)
    }
}
