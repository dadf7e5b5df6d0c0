//! Spectral penalties and their scalar proximal maps.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Relative tolerance used to decide that a singular value sits on a kink.
pub const KINK_TOL: f64 = 1e-10;

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 200;

/// Penalty family with its shape parameters. The regularization level lives in
/// [`PenaltySpec::theta`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Penalty {
    Nuclear,
    Scad { a: f64 },
    McPlus { gamma: f64 },
    Log { gamma: f64 },
    Firm { gamma: f64 },
    Bridge { q: f64 },
    Rank,
}

impl Penalty {
    pub fn name(&self) -> &'static str {
        match self {
            Penalty::Nuclear => "nuclear",
            Penalty::Scad { .. } => "scad",
            Penalty::McPlus { .. } => "mcplus",
            Penalty::Log { .. } => "log",
            Penalty::Firm { .. } => "firm",
            Penalty::Bridge { .. } => "bridge",
            Penalty::Rank => "rank",
        }
    }

    /// Shape parameters as `(name, value)` pairs.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Penalty::Nuclear | Penalty::Rank => vec![],
            Penalty::Scad { a } => vec![("a", a)],
            Penalty::McPlus { gamma } | Penalty::Log { gamma } | Penalty::Firm { gamma } => {
                vec![("gamma", gamma)]
            }
            Penalty::Bridge { q } => vec![("q", q)],
        }
    }

    /// Short label such as `scad_a3.7` used for file names.
    pub fn label(&self) -> String {
        let mut s = self.name().to_string();
        for (k, v) in self.params() {
            s.push_str(&format!("_{k}{v}"));
        }
        s
    }

    /// Builds a family from its name and a parameter map. Missing parameters are an error.
    pub fn from_parts(name: &str, params: &BTreeMap<String, f64>) -> Result<Penalty> {
        let get = |k: &str| {
            params
                .get(k)
                .copied()
                .ok_or_else(|| Error::InvalidSpec(format!("{name} requires parameter `{k}`")))
        };
        let allowed: &[&str] = match name {
            "nuclear" | "rank" => &[],
            "scad" => &["a"],
            "mcplus" | "mc+" | "log" | "firm" => &["gamma"],
            "bridge" => &["q"],
            _ => return Err(Error::InvalidSpec(format!("unknown penalty family `{name}`"))),
        };
        if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::InvalidSpec(format!("{name} does not take parameter `{k}`")));
        }
        Ok(match name {
            "nuclear" => Penalty::Nuclear,
            "rank" => Penalty::Rank,
            "scad" => Penalty::Scad { a: get("a")? },
            "mcplus" | "mc+" => Penalty::McPlus { gamma: get("gamma")? },
            "log" => Penalty::Log { gamma: get("gamma")? },
            "firm" => Penalty::Firm { gamma: get("gamma")? },
            _ => Penalty::Bridge { q: get("q")? },
        })
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())?;
        for (k, v) in self.params() {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

impl FromStr for Penalty {
    type Err = Error;

    /// Parses `family key=value ...`, e.g. `scad a=3.7`.
    fn from_str(s: &str) -> Result<Penalty> {
        let (name, params) = parse_flat(s)?;
        if params.contains_key("theta") {
            return Err(Error::InvalidSpec("family string must not carry theta".into()));
        }
        Penalty::from_parts(&name, &params)
    }
}

fn parse_flat(s: &str) -> Result<(String, BTreeMap<String, f64>)> {
    let mut name = None;
    let mut params = BTreeMap::new();
    for tok in s.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
        match tok.split_once('=') {
            Some(("family", v)) => name = Some(v.trim().to_ascii_lowercase()),
            Some((k, v)) => {
                let x: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidSpec(format!("bad number `{v}` for `{k}`")))?;
                params.insert(k.trim().to_string(), x);
            }
            None if name.is_none() => name = Some(tok.to_ascii_lowercase()),
            None => return Err(Error::InvalidSpec(format!("unexpected token `{tok}`"))),
        }
    }
    let name = name.ok_or_else(|| Error::InvalidSpec("missing family name".into()))?;
    Ok((name, params))
}

/// Location and height of the jump of a discontinuous proximal map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Discontinuity {
    pub location: f64,
    pub jump: f64,
}

/// Which one-sided derivative to take at a breakpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A penalty family together with its level `theta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltySpec {
    pub penalty: Penalty,
    pub theta: f64,
}

impl PenaltySpec {
    /// Creates and validates a spec.
    pub fn new(penalty: Penalty, theta: f64) -> Result<PenaltySpec> {
        let s = PenaltySpec { penalty, theta };
        s.validate()?;
        Ok(s)
    }

    pub fn nuclear(theta: f64) -> Result<PenaltySpec> {
        Self::new(Penalty::Nuclear, theta)
    }
    pub fn scad(theta: f64, a: f64) -> Result<PenaltySpec> {
        Self::new(Penalty::Scad { a }, theta)
    }
    pub fn mcplus(theta: f64, gamma: f64) -> Result<PenaltySpec> {
        Self::new(Penalty::McPlus { gamma }, theta)
    }
    pub fn log(theta: f64, gamma: f64) -> Result<PenaltySpec> {
        Self::new(Penalty::Log { gamma }, theta)
    }
    pub fn firm(theta: f64, gamma: f64) -> Result<PenaltySpec> {
        Self::new(Penalty::Firm { gamma }, theta)
    }
    pub fn bridge(theta: f64, q: f64) -> Result<PenaltySpec> {
        Self::new(Penalty::Bridge { q }, theta)
    }
    pub fn rank(theta: f64) -> Result<PenaltySpec> {
        Self::new(Penalty::Rank, theta)
    }

    /// Checks parameter ranges.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        let t = self.theta;
        if !t.is_finite() || t < 0.0 {
            return bad(format!("theta must be finite and nonnegative, got {t}"));
        }
        match self.penalty {
            Penalty::Nuclear | Penalty::Rank => Ok(()),
            Penalty::Scad { a } if !(a.is_finite() && a > 2.0) => {
                bad(format!("SCAD requires a > 2, got {a}"))
            }
            Penalty::McPlus { gamma } if !(gamma.is_finite() && gamma > 1.0) => {
                bad(format!("MC+ requires gamma > 1, got {gamma}"))
            }
            Penalty::Log { gamma } if !(gamma.is_finite() && gamma > 0.0) => {
                bad(format!("log penalty requires gamma > 0, got {gamma}"))
            }
            Penalty::Firm { gamma } if !(gamma.is_finite() && gamma > t) => {
                bad(format!("firm penalty requires gamma > theta, got gamma={gamma}, theta={t}"))
            }
            Penalty::Bridge { q } if !(0.0..1.0).contains(&q) => {
                bad(format!("bridge requires 0 <= q < 1, got {q}"))
            }
            _ => Ok(()),
        }
    }

    /// Flat key-value form, family first.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("family".to_string(), self.penalty.name().to_string()),
            ("theta".to_string(), self.theta.to_string()),
        ];
        for (k, v) in self.penalty.params() {
            kv.push((k.to_string(), v.to_string()));
        }
        kv
    }

    /// Inverse of [`PenaltySpec::to_key_values`].
    pub fn from_key_values<I, K, V>(kv: I) -> Result<PenaltySpec>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let s: Vec<String> =
            kv.into_iter().map(|(k, v)| format!("{}={}", k.as_ref(), v.as_ref())).collect();
        s.join(" ").parse()
    }

    /// Penalty value `P_theta(sigma)`.
    pub fn value(&self, sigma: f64) -> Result<f64> {
        check_input(sigma)?;
        let t = self.theta;
        let x = sigma;
        Ok(match self.penalty {
            Penalty::Nuclear => t * x,
            Penalty::Scad { a } => {
                if x <= t {
                    t * x
                } else if x <= a * t {
                    (-x * x + 2.0 * a * t * x - t * t) / (2.0 * (a - 1.0))
                } else {
                    (a + 1.0) * t * t / 2.0
                }
            }
            Penalty::McPlus { gamma } => {
                if x <= gamma * t {
                    t * x - x * x / (2.0 * gamma)
                } else {
                    gamma * t * t / 2.0
                }
            }
            Penalty::Log { gamma } => t * (gamma * x).ln_1p() / gamma.ln_1p(),
            Penalty::Firm { gamma } => {
                if x <= gamma {
                    t * (x - x * x / (2.0 * gamma))
                } else {
                    gamma * t / 2.0
                }
            }
            Penalty::Bridge { q } => {
                if x == 0.0 {
                    0.0
                } else {
                    t * x.powf(q)
                }
            }
            Penalty::Rank => {
                if x > 0.0 {
                    t
                } else {
                    0.0
                }
            }
        })
    }

    /// Proximal map `argmin_x (x - sigma)^2 / 2 + P_theta(x)` over `x >= 0`.
    pub fn prox(&self, sigma: f64) -> Result<f64> {
        check_input(sigma)?;
        let t = self.theta;
        let x = sigma;
        let v = match self.penalty {
            Penalty::Nuclear => (x - t).max(0.0),
            Penalty::Scad { a } => {
                if x <= 2.0 * t {
                    (x - t).max(0.0)
                } else if x <= a * t {
                    ((a - 1.0) * x - a * t) / (a - 2.0)
                } else {
                    x
                }
            }
            Penalty::McPlus { gamma } => {
                if x <= t {
                    0.0
                } else if x <= gamma * t {
                    gamma * (x - t) / (gamma - 1.0)
                } else {
                    x
                }
            }
            Penalty::Firm { gamma } => {
                if x <= t {
                    0.0
                } else if x <= gamma {
                    gamma * (x - t) / (gamma - t)
                } else {
                    x
                }
            }
            Penalty::Log { gamma } => log_prox(x, t, gamma),
            Penalty::Bridge { q } => bridge_prox(x, t, q)?,
            Penalty::Rank => bridge_prox(x, t, 0.0)?,
        };
        // Interpolating pieces can overshoot by an ulp where they meet the identity.
        Ok(v.clamp(0.0, x))
    }

    /// Points where the proximal map is not differentiable.
    pub fn kinks(&self) -> Vec<f64> {
        let t = self.theta;
        match self.penalty {
            Penalty::Nuclear => vec![t],
            Penalty::Scad { a } => vec![t, 2.0 * t, a * t],
            Penalty::McPlus { gamma } => vec![t, gamma * t],
            Penalty::Firm { gamma } => vec![t, gamma],
            Penalty::Log { gamma } => vec![t * gamma / gamma.ln_1p()],
            Penalty::Bridge { q } => vec![bridge_threshold(t, q)],
            Penalty::Rank => vec![bridge_threshold(t, 0.0)],
        }
    }

    /// The kink within tolerance of `sigma`, if any.
    pub fn kink_near(&self, sigma: f64) -> Option<f64> {
        self.kinks().into_iter().find(|&k| (sigma - k).abs() <= KINK_TOL * k.max(1.0))
    }

    /// Derivative of the proximal map; errors at kinks.
    pub fn prox_derivative(&self, sigma: f64) -> Result<f64> {
        check_input(sigma)?;
        if let Some(kink) = self.kink_near(sigma) {
            // Kinks collapsed onto zero (theta = 0) leave an identity map.
            if !(self.theta == 0.0 && kink == 0.0 && sigma > 0.0) {
                return Err(Error::AtKink { sigma, kink });
            }
        }
        self.slope(sigma, Side::Right)
    }

    /// One-sided derivative of the proximal map. At a breakpoint this is the slope of
    /// the adjacent piece; discontinuous maps error at their jump.
    pub fn prox_one_sided_derivative(&self, sigma: f64, side: Side) -> Result<f64> {
        check_input(sigma)?;
        if let Some(d) = self.discontinuity() {
            if d.jump > 0.0 && (sigma - d.location).abs() <= KINK_TOL * d.location.max(1.0) {
                return Err(Error::NotDirectionallyDifferentiable(sigma));
            }
        }
        self.slope(sigma, side)
    }

    fn slope(&self, x: f64, side: Side) -> Result<f64> {
        // `below(b)` selects the piece to the left of breakpoint `b`.
        let below = |b: f64| match side {
            Side::Left => x <= b,
            Side::Right => x < b,
        };
        let t = self.theta;
        Ok(match self.penalty {
            Penalty::Nuclear => {
                if below(t) {
                    0.0
                } else {
                    1.0
                }
            }
            Penalty::Scad { a } => {
                if below(t) {
                    0.0
                } else if below(2.0 * t) {
                    1.0
                } else if below(a * t) {
                    (a - 1.0) / (a - 2.0)
                } else {
                    1.0
                }
            }
            Penalty::McPlus { gamma } => {
                if below(t) {
                    0.0
                } else if below(gamma * t) {
                    gamma / (gamma - 1.0)
                } else {
                    1.0
                }
            }
            Penalty::Firm { gamma } => {
                if below(t) {
                    0.0
                } else if below(gamma) {
                    gamma / (gamma - t)
                } else {
                    1.0
                }
            }
            Penalty::Log { gamma } => {
                let c = t * gamma / gamma.ln_1p();
                let eta = log_prox(x, t, gamma);
                if eta == 0.0 && below(c) {
                    0.0
                } else {
                    let curv = -t * gamma * gamma / (gamma.ln_1p() * (1.0 + gamma * eta).powi(2));
                    1.0 / (1.0 + curv)
                }
            }
            Penalty::Bridge { q } => bridge_prox_derivative(x, t, q)?,
            Penalty::Rank => bridge_prox_derivative(x, t, 0.0)?,
        })
    }

    /// Lower bound on the second derivative of the penalty; `-inf` for bridge and rank.
    pub fn concavity_bound(&self) -> f64 {
        let t = self.theta;
        match self.penalty {
            Penalty::Nuclear => 0.0,
            Penalty::Scad { a } => -1.0 / (a - 1.0),
            Penalty::McPlus { gamma } => -1.0 / gamma,
            Penalty::Firm { gamma } => -t / gamma,
            Penalty::Log { gamma } => -t * gamma * gamma / gamma.ln_1p(),
            Penalty::Bridge { .. } | Penalty::Rank => f64::NEG_INFINITY,
        }
    }

    /// True when the proximal map is Lipschitz, so Stein's lemma applies directly.
    pub fn stein_applicable(&self) -> bool {
        self.concavity_bound() + 1.0 > 0.0
    }

    /// Jump of the proximal map for bridge and rank penalties.
    pub fn discontinuity(&self) -> Option<Discontinuity> {
        match self.penalty {
            Penalty::Bridge { q } => Some(bridge_discontinuity(self.theta, q)),
            Penalty::Rank => Some(bridge_discontinuity(self.theta, 0.0)),
            _ => None,
        }
    }
}

impl fmt::Display for PenaltySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kv: Vec<String> =
            self.to_key_values().into_iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{}", kv.join(" "))
    }
}

impl FromStr for PenaltySpec {
    type Err = Error;

    /// Parses `family=scad theta=1 a=3.7` or `scad theta=1 a=3.7`.
    fn from_str(s: &str) -> Result<PenaltySpec> {
        let (name, mut params) = parse_flat(s)?;
        let theta = params
            .remove("theta")
            .ok_or_else(|| Error::InvalidSpec("missing `theta`".into()))?;
        PenaltySpec::new(Penalty::from_parts(&name, &params)?, theta)
    }
}

fn check_input(sigma: f64) -> Result<()> {
    if !sigma.is_finite() {
        return Err(Error::NonFinite);
    }
    if sigma < 0.0 {
        return Err(Error::NegativeInput(sigma));
    }
    Ok(())
}

fn log_prox(sigma: f64, theta: f64, gamma: f64) -> f64 {
    let l = gamma.ln_1p();
    let c = theta * gamma / l;
    let obj = |x: f64| 0.5 * (x - sigma).powi(2) + theta * (gamma * x).ln_1p() / l;
    // Stationarity: gamma x^2 + (1 - gamma sigma) x + (c - sigma) = 0.
    let a = gamma;
    let b = 1.0 - gamma * sigma;
    let cc = c - sigma;
    let disc = b * b - 4.0 * a * cc;
    let mut best = 0.0;
    let mut best_val = obj(0.0);
    if disc >= 0.0 {
        let sq = disc.sqrt();
        let qq = -0.5 * (b + b.signum() * sq);
        let mut roots = [f64::NAN; 2];
        if qq != 0.0 {
            roots = [qq / a, cc / qq];
        } else {
            roots[0] = -b / (2.0 * a);
        }
        for r in roots {
            if r.is_finite() && r > 0.0 && r <= sigma {
                let v = obj(r);
                if v <= best_val {
                    best = r;
                    best_val = v;
                }
            }
        }
    }
    best
}

/// `c_q` with `[2(1-q)]^{1/(2-q)} + q [2(1-q)]^{(q-1)/(2-q)}`; valid for `q` in `[0, 1]`.
pub fn bridge_constant(q: f64) -> f64 {
    if q >= 1.0 {
        return 1.0;
    }
    let b = 2.0 * (1.0 - q);
    b.powf(1.0 / (2.0 - q)) + q * b.powf((q - 1.0) / (2.0 - q))
}

/// Threshold below which the bridge proximal map is zero.
pub fn bridge_threshold(theta: f64, q: f64) -> f64 {
    if q >= 1.0 {
        return theta;
    }
    bridge_constant(q) * theta.powf(1.0 / (2.0 - q))
}

/// Height of the jump at the bridge threshold; zero at `q = 1`.
pub fn bridge_jump(theta: f64, q: f64) -> f64 {
    if q >= 1.0 {
        return 0.0;
    }
    (2.0 * (1.0 - q) * theta).powf(1.0 / (2.0 - q))
}

pub fn bridge_discontinuity(theta: f64, q: f64) -> Discontinuity {
    Discontinuity { location: bridge_threshold(theta, q), jump: bridge_jump(theta, q) }
}

/// Bridge proximal map for `q` in `[0, 1]`; `q = 0` is hard and `q = 1` soft thresholding.
pub fn bridge_prox(sigma: f64, theta: f64, q: f64) -> Result<f64> {
    check_input(sigma)?;
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidSpec(format!("bridge requires 0 <= q <= 1, got {q}")));
    }
    if theta == 0.0 {
        return Ok(sigma);
    }
    if q == 1.0 {
        return Ok((sigma - theta).max(0.0));
    }
    if q == 0.0 {
        return Ok(if 0.5 * sigma * sigma >= theta { sigma } else { 0.0 });
    }
    // Zero and the interior root tie exactly at the threshold; the nonzero branch wins.
    if sigma < bridge_threshold(theta, q) {
        return Ok(0.0);
    }
    let tq = theta * q;
    // g(x) = x - sigma + q theta x^{q-1} is convex on x > 0 with minimum at x_min, and
    // the root of interest lies to the right of x_min.
    let x_min = (tq * (1.0 - q)).powf(1.0 / (2.0 - q));
    let g = |x: f64| x - sigma + tq * x.powf(q - 1.0);
    let mut x = sigma;
    for _ in 0..NEWTON_MAX_ITER {
        let gp = 1.0 + tq * (q - 1.0) * x.powf(q - 2.0);
        let next = (x - g(x) / gp).max(x_min);
        let done = (next - x).abs() <= NEWTON_TOL * x;
        x = next;
        if done {
            return Ok(x.min(sigma));
        }
    }
    Err(Error::Nonconvergence(format!("bridge prox Newton at sigma={sigma}, theta={theta}, q={q}")))
}

/// Derivative of the bridge proximal map away from the threshold.
pub fn bridge_prox_derivative(sigma: f64, theta: f64, q: f64) -> Result<f64> {
    let eta = bridge_prox(sigma, theta, q)?;
    if eta == 0.0 {
        return Ok(0.0);
    }
    if q == 0.0 || theta == 0.0 {
        return Ok(1.0);
    }
    if q == 1.0 {
        return Ok(1.0);
    }
    Ok(1.0 / (1.0 + theta * q * (q - 1.0) * eta.powf(q - 2.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn examples() {
        assert_eq!(PenaltySpec::nuclear(1.0).unwrap().prox(3.0).unwrap(), 2.0);
        assert_eq!(PenaltySpec::nuclear(1.0).unwrap().prox(0.5).unwrap(), 0.0);
        let scad = PenaltySpec::scad(1.0, 3.7).unwrap();
        assert_eq!(scad.prox(1.5).unwrap(), 0.5);
        assert!(close(scad.prox(2.5).unwrap(), 3.05 / 1.7, 1e-14));
        assert_eq!(scad.prox(5.0).unwrap(), 5.0);
        assert!(close(scad.value(10.0).unwrap(), 2.35, 1e-15));
        assert_eq!(PenaltySpec::nuclear(2.0).unwrap().value(3.0).unwrap(), 6.0);
        assert_eq!(PenaltySpec::bridge(1.0, 0.5).unwrap().value(4.0).unwrap(), 2.0);
        assert_eq!(PenaltySpec::mcplus(1.0, 2.0).unwrap().concavity_bound(), -0.5);
        let mcp = PenaltySpec::mcplus(1.0, 2.0).unwrap();
        assert_eq!(mcp.prox(1.5).unwrap(), 1.0);
        assert_eq!(mcp.prox(0.9).unwrap(), 0.0);
        let rank = PenaltySpec::rank(2.0).unwrap();
        assert_eq!(rank.prox(1.9).unwrap(), 0.0);
        assert_eq!(rank.prox(2.1).unwrap(), 2.1);
        let br = PenaltySpec::bridge(1.0, 0.5).unwrap();
        let d = br.discontinuity().unwrap();
        assert!(close(d.location, 1.5, 1e-12));
        assert!(close(d.jump, 1.0, 1e-12));
        assert!(close(br.prox(1.5).unwrap(), 1.0, 1e-9));
        assert!(br.prox(1.4999).unwrap() == 0.0);
    }

    #[test]
    fn bridge_constant_values() {
        assert!(close(bridge_constant(0.0), 2f64.sqrt(), 1e-15));
        assert!(close(bridge_constant(0.5), 1.5, 1e-15));
        assert_eq!(bridge_constant(1.0), 1.0);
        assert_eq!(bridge_jump(3.0, 1.0), 0.0);
        assert_eq!(bridge_threshold(3.0, 1.0), 3.0);
    }

    #[test]
    fn bridge_limits() {
        for &s in &[0.3, 1.0, 2.7, 9.0] {
            assert_eq!(bridge_prox(s, 1.0, 1.0).unwrap(), (s - 1.0f64).max(0.0));
            let hard = if s >= 2f64.sqrt() { s } else { 0.0 };
            assert_eq!(bridge_prox(s, 1.0, 0.0).unwrap(), hard);
        }
    }

    #[test]
    fn validation() {
        assert!(PenaltySpec::scad(1.0, 2.0).is_err());
        assert!(PenaltySpec::mcplus(1.0, 1.0).is_err());
        assert!(PenaltySpec::firm(2.0, 1.5).is_err());
        assert!(PenaltySpec::bridge(1.0, 1.0).is_err());
        assert!(PenaltySpec::nuclear(-1.0).is_err());
        assert!(PenaltySpec::log(1.0, 0.0).is_err());
        assert!(matches!(
            PenaltySpec::nuclear(1.0).unwrap().prox(-0.1),
            Err(Error::NegativeInput(_))
        ));
    }

    #[test]
    fn stein_table() {
        assert!(PenaltySpec::nuclear(1.0).unwrap().stein_applicable());
        assert!(PenaltySpec::scad(5.0, 3.7).unwrap().stein_applicable());
        assert!(PenaltySpec::mcplus(5.0, 2.0).unwrap().stein_applicable());
        assert!(PenaltySpec::firm(1.0, 3.0).unwrap().stein_applicable());
        assert!(!PenaltySpec::bridge(1.0, 0.5).unwrap().stein_applicable());
        assert!(!PenaltySpec::rank(1.0).unwrap().stein_applicable());
        assert_eq!(PenaltySpec::rank(1.0).unwrap().concavity_bound(), f64::NEG_INFINITY);
        assert!(PenaltySpec::log(20.0, 0.01).unwrap().stein_applicable());
        assert!(PenaltySpec::log(99.0, 0.01).unwrap().stein_applicable());
        assert!(!PenaltySpec::log(100.0, 0.01).unwrap().stein_applicable());
        // log(1 + gamma) > theta gamma^2 at gamma = 1 needs theta < ln 2.
        assert!(PenaltySpec::log(0.69, 1.0).unwrap().stein_applicable());
        assert!(!PenaltySpec::log(0.7, 1.0).unwrap().stein_applicable());
    }

    #[test]
    fn kink_errors_and_one_sided() {
        let scad = PenaltySpec::scad(1.0, 3.7).unwrap();
        assert!(matches!(scad.prox_derivative(2.0), Err(Error::AtKink { .. })));
        assert_eq!(scad.prox_one_sided_derivative(2.0, Side::Left).unwrap(), 1.0);
        assert!(close(scad.prox_one_sided_derivative(2.0, Side::Right).unwrap(), 2.7 / 1.7, 1e-14));
        let br = PenaltySpec::bridge(1.0, 0.5).unwrap();
        assert!(matches!(
            br.prox_one_sided_derivative(1.5, Side::Right),
            Err(Error::NotDirectionallyDifferentiable(_))
        ));
        let id = PenaltySpec::scad(0.0, 3.7).unwrap();
        assert_eq!(id.prox_derivative(0.5).unwrap(), 1.0);
    }

    #[test]
    fn key_value_roundtrip() {
        let specs = [
            PenaltySpec::nuclear(1.5).unwrap(),
            PenaltySpec::scad(2.0, 3.7).unwrap(),
            PenaltySpec::mcplus(0.5, 2.0).unwrap(),
            PenaltySpec::log(3.0, 0.01).unwrap(),
            PenaltySpec::firm(1.0, 4.0).unwrap(),
            PenaltySpec::bridge(0.25, 0.1).unwrap(),
            PenaltySpec::rank(8.0).unwrap(),
        ];
        for s in specs {
            let back = PenaltySpec::from_key_values(s.to_key_values()).unwrap();
            assert_eq!(back, s);
            assert_eq!(s.to_string().parse::<PenaltySpec>().unwrap(), s);
        }
        assert!("scad theta=1".parse::<PenaltySpec>().is_err());
        assert!("nuclear theta=1 a=2".parse::<PenaltySpec>().is_err());
        assert_eq!("mcplus gamma=2".parse::<Penalty>().unwrap(), Penalty::McPlus { gamma: 2.0 });
    }
}
