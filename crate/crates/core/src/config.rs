//! Flat `key = value` run configuration with dotted section names.
//!
//! ```text
//! # comment
//! grid.dim = 2
//! grid.cells = 16, 16
//! scheme.tau = auto        # half of the tau0 guard
//! eta0.profile = cosine
//! ```
//!
//! Every key is optional; [`RunConfig::default`] documents the defaults.
//!
//! Random profiles use a 64-bit linear congruential generator so other
//! implementations can reproduce them bit for bit:
//! `state ← 6364136223846793005 · state + 1442695040888963407 (mod 2⁶⁴)`,
//! seeded with `seed + stream` (stream 1 for `eta0`, 2 for `theta0`), and each
//! cell (row-major) takes `offset + amplitude · (2·(state >> 11)/2⁵³ - 1)`
//! after advancing the state once.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{KwcError, Result};
use crate::grid::{Grid, ScalarField};
use crate::model::{choose_truncation_level, default_model, ModelFns, ModelSpec, SchemeParams};
use crate::stepper::tau_guards;
use crate::verification::{ForcingFn, Problem};

pub const LCG_MULTIPLIER: u64 = 6_364_136_223_846_793_005;
pub const LCG_INCREMENT: u64 = 1_442_695_040_888_963_407;

/// The documented 64-bit LCG used for random initial profiles.
#[derive(Debug, Clone)]
pub struct Lcg64 {
    state: u64,
}

impl Lcg64 {
    pub fn new(seed: u64) -> Self {
        Lcg64 { state: seed }
    }

    /// Uniform sample in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.state = self
            .state
            .wrapping_mul(LCG_MULTIPLIER)
            .wrapping_add(LCG_INCREMENT);
        (self.state >> 11) as f64 / (1u64 << 53) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Auto<T> {
    Auto,
    Value(T),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `offset + amplitude · Π_k cos(modes · π x_k / L_k)`
    Cosine {
        offset: f64,
        amplitude: f64,
        modes: f64,
    },
    Random {
        offset: f64,
        amplitude: f64,
    },
}

impl Profile {
    pub fn sample(&self, grid: &Grid, seed: u64, stream: u64) -> ScalarField {
        match *self {
            Profile::Constant { value } => ScalarField::constant(grid, value),
            Profile::Cosine {
                offset,
                amplitude,
                modes,
            } => {
                let lengths = grid.lengths().to_vec();
                ScalarField::from_fn(grid, |x| {
                    let prod: f64 = lengths
                        .iter()
                        .enumerate()
                        .map(|(k, l)| (modes * PI * x[k] / l).cos())
                        .product();
                    offset + amplitude * prod
                })
            }
            Profile::Random { offset, amplitude } => {
                let mut rng = Lcg64::new(seed.wrapping_add(stream));
                let vals = (0..grid.num_cells())
                    .map(|_| offset + amplitude * (2.0 * rng.next_f64() - 1.0))
                    .collect();
                ScalarField::from_values(grid, vals).expect("sized from grid")
            }
        }
    }
}

/// Spatially uniform forcing with a named time profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForcingProfile {
    Zero,
    Constant {
        value: f64,
    },
    /// `value · sin(2π t / period)`
    Sine {
        value: f64,
        period: f64,
    },
}

impl ForcingProfile {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            ForcingProfile::Zero => 0.0,
            ForcingProfile::Constant { value } => value,
            ForcingProfile::Sine { value, period } => value * (2.0 * PI * t / period).sin(),
        }
    }

    /// `sup_t |f(t)|`
    pub fn sup(&self) -> f64 {
        match *self {
            ForcingProfile::Zero => 0.0,
            ForcingProfile::Constant { value } | ForcingProfile::Sine { value, .. } => value.abs(),
        }
    }

    fn into_fn(self, grid: Grid) -> ForcingFn {
        Arc::new(move |t| ScalarField::constant(&grid, self.at(t)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// write a snapshot every `cadence` steps (0 disables snapshots)
    pub cadence: usize,
    pub ledger: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub cells: Vec<usize>,
    pub lengths: Vec<f64>,
    /// `default` or `polynomial`
    pub model_name: String,
    pub model: ModelSpec,
    pub truncation: Auto<f64>,
    pub params: SchemeParams,
    pub tau: Auto<f64>,
    pub eta0: Profile,
    pub theta0: Profile,
    pub forcing_u: ForcingProfile,
    pub forcing_v: ForcingProfile,
    pub output: OutputSpec,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dim: 1,
            cells: vec![64],
            lengths: vec![1.0],
            model_name: "default".into(),
            model: default_model(),
            truncation: Auto::Auto,
            params: SchemeParams {
                mu: 0.1,
                nu: 0.1,
                eps: 0.05,
                tau: 0.05,
                horizon: 1.0,
                tol_newton: 1e-9,
                tol_fixed_point: 1e-10,
                max_newton_iters: 100,
                max_fp_iters: 500,
            },
            tau: Auto::Auto,
            eta0: Profile::Cosine {
                offset: 0.5,
                amplitude: 0.4,
                modes: 1.0,
            },
            theta0: Profile::Cosine {
                offset: 0.0,
                amplitude: 0.5,
                modes: 1.0,
            },
            forcing_u: ForcingProfile::Zero,
            forcing_v: ForcingProfile::Zero,
            output: OutputSpec {
                dir: PathBuf::from("out"),
                cadence: 10,
                ledger: true,
            },
            seed: 42,
        }
    }
}

/// Configuration resolved into a runnable problem.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub grid: Grid,
    pub problem: Problem,
    pub tau0: f64,
    pub tau1: f64,
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_auto(v: &Auto<f64>) -> String {
    match v {
        Auto::Auto => "auto".into(),
        Auto::Value(x) => fmt_f64(*x),
    }
}

fn profile_pairs(prefix: &str, p: &Profile, out: &mut Vec<(String, String)>) {
    let mut put = |k: &str, v: String| out.push((format!("{prefix}.{k}"), v));
    match *p {
        Profile::Constant { value } => {
            put("profile", "constant".into());
            put("value", fmt_f64(value));
        }
        Profile::Cosine {
            offset,
            amplitude,
            modes,
        } => {
            put("profile", "cosine".into());
            put("offset", fmt_f64(offset));
            put("amplitude", fmt_f64(amplitude));
            put("modes", fmt_f64(modes));
        }
        Profile::Random { offset, amplitude } => {
            put("profile", "random".into());
            put("offset", fmt_f64(offset));
            put("amplitude", fmt_f64(amplitude));
        }
    }
}

fn forcing_pairs(prefix: &str, f: &ForcingProfile, out: &mut Vec<(String, String)>) {
    let mut put = |k: &str, v: String| out.push((format!("{prefix}.{k}"), v));
    match *f {
        ForcingProfile::Zero => put("profile", "zero".into()),
        ForcingProfile::Constant { value } => {
            put("profile", "constant".into());
            put("value", fmt_f64(value));
        }
        ForcingProfile::Sine { value, period } => {
            put("profile", "sine".into());
            put("value", fmt_f64(value));
            put("period", fmt_f64(period));
        }
    }
}

impl RunConfig {
    /// Set the step size; `params.tau` mirrors an explicit value and holds
    /// the default placeholder while the choice is automatic.
    pub fn set_tau(&mut self, tau: Auto<f64>) {
        self.tau = tau;
        self.params.tau = match tau {
            Auto::Value(t) => t,
            Auto::Auto => RunConfig::default().params.tau,
        };
    }

    /// All keys with their textual values, in file order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let join = |v: Vec<String>| v.join(", ");
        out.push(("grid.dim".into(), self.dim.to_string()));
        out.push((
            "grid.cells".into(),
            join(self.cells.iter().map(|c| c.to_string()).collect()),
        ));
        out.push((
            "grid.lengths".into(),
            join(self.lengths.iter().map(|l| fmt_f64(*l)).collect()),
        ));
        out.push(("model.name".into(), self.model_name.clone()));
        if self.model_name != "default" {
            let m = &self.model;
            for (k, v) in [
                ("g0", m.g0),
                ("g1", m.g1),
                ("a0", m.a0),
                ("a1", m.a1),
                ("a2", m.a2),
                ("b0", m.b0),
                ("b1", m.b1),
                ("b2", m.b2),
            ] {
                out.push((format!("model.{k}"), fmt_f64(v)));
            }
        }
        out.push(("model.M".into(), fmt_auto(&self.truncation)));
        let p = &self.params;
        out.push(("scheme.mu".into(), fmt_f64(p.mu)));
        out.push(("scheme.nu".into(), fmt_f64(p.nu)));
        out.push(("scheme.eps".into(), fmt_f64(p.eps)));
        out.push(("scheme.tau".into(), fmt_auto(&self.tau)));
        out.push(("scheme.T".into(), fmt_f64(p.horizon)));
        out.push(("solver.tol_newton".into(), fmt_f64(p.tol_newton)));
        out.push(("solver.tol_fixed_point".into(), fmt_f64(p.tol_fixed_point)));
        out.push((
            "solver.max_newton_iters".into(),
            p.max_newton_iters.to_string(),
        ));
        out.push(("solver.max_fp_iters".into(), p.max_fp_iters.to_string()));
        profile_pairs("eta0", &self.eta0, &mut out);
        profile_pairs("theta0", &self.theta0, &mut out);
        forcing_pairs("forcing.u", &self.forcing_u, &mut out);
        forcing_pairs("forcing.v", &self.forcing_v, &mut out);
        out.push(("output.dir".into(), self.output.dir.display().to_string()));
        out.push(("output.cadence".into(), self.output.cadence.to_string()));
        out.push(("output.ledger".into(), self.output.ledger.to_string()));
        out.push(("seed".into(), self.seed.to_string()));
        out
    }

    pub fn serialize(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Replace one key and re-validate.
    pub fn with_override(&self, key: &str, value: &str) -> Result<RunConfig> {
        let mut map: BTreeMap<String, (String, usize)> = self
            .to_pairs()
            .into_iter()
            .map(|(k, v)| (k, (v, 0)))
            .collect();
        map.insert(key.to_string(), (value.to_string(), 0));
        from_map(map)
    }

    /// Build the grid, model, initial data and forcing.
    pub fn resolve(&self) -> Result<Resolved> {
        let grid = Grid::new(self.dim, &self.cells, &self.lengths)?;
        self.model.check_structure()?;
        let eta0 = self.eta0.sample(&grid, self.seed, 1);
        let theta0 = self.theta0.sample(&grid, self.seed, 2);
        let m = match self.truncation {
            Auto::Auto => choose_truncation_level(&eta0, self.forcing_u.sup(), &self.model)?,
            Auto::Value(m) => m,
        };
        let fns: ModelFns = self.model.truncated(m)?;
        let (tau1, tau0) = tau_guards(self.params.mu, fns.lip_g());
        let mut params = self.params;
        params.tau = match self.tau {
            Auto::Auto => {
                if tau0.is_finite() {
                    (0.5 * tau0).min(0.5)
                } else {
                    0.05
                }
            }
            Auto::Value(t) => t,
        };
        Ok(Resolved {
            grid,
            problem: Problem {
                eta0,
                theta0,
                u: self.forcing_u.into_fn(grid),
                v: self.forcing_v.into_fn(grid),
                fns,
                params,
            },
            tau0,
            tau1,
        })
    }

    /// Every violated constraint (empty when the configuration is usable).
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if let Err(e) = Grid::new(self.dim, &self.cells, &self.lengths) {
            v.push(format!("grid: {e}"));
        }
        if let Err(e) = self.model.check_structure() {
            v.push(format!("model: {e}"));
        }
        let mut params = self.params;
        if let Auto::Value(t) = self.tau {
            params.tau = t;
        }
        v.extend(params.violations());
        if let Profile::Cosine { modes, .. } = self.eta0 {
            if modes.fract() != 0.0 || modes < 0.0 {
                v.push("eta0.modes must be a nonnegative integer (Neumann-compatible)".into());
            }
        }
        if let ForcingProfile::Sine { period, .. } = self.forcing_u {
            if !(period > 0.0) {
                v.push("forcing.u.period must be > 0".into());
            }
        }
        if let ForcingProfile::Sine { period, .. } = self.forcing_v {
            if !(period > 0.0) {
                v.push("forcing.v.period must be > 0".into());
            }
        }
        if !v.is_empty() {
            return v;
        }
        match self.resolve() {
            Err(e) => v.push(e.to_string()),
            Ok(r) => {
                let p = &r.problem;
                if p.eta0.max_abs() > p.fns.m() {
                    v.push(format!(
                        "model.M = {} is below |eta0|_inf = {}",
                        p.fns.m(),
                        p.eta0.max_abs()
                    ));
                }
                if !(p.params.tau < r.tau0) {
                    v.push(format!(
                        "scheme.tau = {} violates the step-size guard tau < tau0 = min(tau1, 1/(6|g'|)) = {} (tau1 = {})",
                        p.params.tau, r.tau0, r.tau1
                    ));
                }
                if let Auto::Value(m) = self.truncation {
                    let u = self.forcing_u.sup();
                    let s = &self.model;
                    if s.g(m) < u || s.g(-m) > -u {
                        v.push(format!(
                            "model.M = {m} does not dominate the forcing: need g(M) >= {u} and g(-M) <= -{u}"
                        ));
                    }
                }
            }
        }
        v
    }
}

fn take_f64(
    map: &mut BTreeMap<String, (String, usize)>,
    key: &str,
    default: f64,
    errs: &mut Vec<String>,
) -> f64 {
    match map.remove(key) {
        None => default,
        Some((v, line)) => v.trim().parse::<f64>().unwrap_or_else(|_| {
            errs.push(format!(
                "{key}: cannot parse `{v}` as a number (line {line})"
            ));
            default
        }),
    }
}

fn take_usize(
    map: &mut BTreeMap<String, (String, usize)>,
    key: &str,
    default: usize,
    errs: &mut Vec<String>,
) -> usize {
    match map.remove(key) {
        None => default,
        Some((v, line)) => v.trim().parse::<usize>().unwrap_or_else(|_| {
            errs.push(format!(
                "{key}: cannot parse `{v}` as a nonnegative integer (line {line})"
            ));
            default
        }),
    }
}

fn take_auto(
    map: &mut BTreeMap<String, (String, usize)>,
    key: &str,
    errs: &mut Vec<String>,
) -> Auto<f64> {
    match map.remove(key) {
        None => Auto::Auto,
        Some((v, _)) if v.trim() == "auto" => Auto::Auto,
        Some((v, line)) => match v.trim().parse::<f64>() {
            Ok(x) => Auto::Value(x),
            Err(_) => {
                errs.push(format!(
                    "{key}: expected `auto` or a number, got `{v}` (line {line})"
                ));
                Auto::Auto
            }
        },
    }
}

fn take_list<T: std::str::FromStr>(
    map: &mut BTreeMap<String, (String, usize)>,
    key: &str,
    default: Vec<T>,
    errs: &mut Vec<String>,
) -> Vec<T> {
    match map.remove(key) {
        None => default,
        Some((v, line)) => {
            let parsed: std::result::Result<Vec<T>, _> =
                v.split(',').map(|s| s.trim().parse::<T>()).collect();
            parsed.unwrap_or_else(|_| {
                errs.push(format!("{key}: cannot parse list `{v}` (line {line})"));
                default
            })
        }
    }
}

fn take_profile(
    map: &mut BTreeMap<String, (String, usize)>,
    prefix: &str,
    default: Profile,
    errs: &mut Vec<String>,
) -> Profile {
    let key = format!("{prefix}.profile");
    let name = match map.remove(&key) {
        None => return default,
        Some((v, line)) => (v.trim().to_string(), line),
    };
    let mut f = |k: &str, d: f64| take_f64(map, &format!("{prefix}.{k}"), d, errs);
    match name.0.as_str() {
        "constant" => Profile::Constant {
            value: f("value", 0.0),
        },
        "cosine" => Profile::Cosine {
            offset: f("offset", 0.0),
            amplitude: f("amplitude", 1.0),
            modes: f("modes", 1.0),
        },
        "random" => Profile::Random {
            offset: f("offset", 0.0),
            amplitude: f("amplitude", 1.0),
        },
        other => {
            errs.push(format!(
                "{key}: unknown profile `{other}` (line {})",
                name.1
            ));
            default
        }
    }
}

fn take_forcing(
    map: &mut BTreeMap<String, (String, usize)>,
    prefix: &str,
    errs: &mut Vec<String>,
) -> ForcingProfile {
    let key = format!("{prefix}.profile");
    let name = match map.remove(&key) {
        None => return ForcingProfile::Zero,
        Some((v, line)) => (v.trim().to_string(), line),
    };
    let mut f = |k: &str, d: f64| take_f64(map, &format!("{prefix}.{k}"), d, errs);
    match name.0.as_str() {
        "zero" => ForcingProfile::Zero,
        "constant" => ForcingProfile::Constant {
            value: f("value", 0.0),
        },
        "sine" => ForcingProfile::Sine {
            value: f("value", 1.0),
            period: f("period", 1.0),
        },
        other => {
            errs.push(format!(
                "{key}: unknown forcing profile `{other}` (line {})",
                name.1
            ));
            ForcingProfile::Zero
        }
    }
}

fn from_map(mut map: BTreeMap<String, (String, usize)>) -> Result<RunConfig> {
    let d = RunConfig::default();
    let mut errs = Vec::new();
    let e = &mut errs;
    let dim = take_usize(&mut map, "grid.dim", d.dim, e);
    let default_cells = if dim == 2 {
        vec![16, 16]
    } else {
        d.cells.clone()
    };
    let default_lengths = vec![1.0; dim.max(1)];
    let cells = take_list(&mut map, "grid.cells", default_cells, e);
    let lengths = take_list(&mut map, "grid.lengths", default_lengths, e);

    let model_name = map
        .remove("model.name")
        .map(|(v, _)| v.trim().to_string())
        .unwrap_or_else(|| "default".into());
    let base = default_model();
    let model = match model_name.as_str() {
        "default" => base,
        "polynomial" => ModelSpec {
            g0: take_f64(&mut map, "model.g0", base.g0, e),
            g1: take_f64(&mut map, "model.g1", base.g1, e),
            a0: take_f64(&mut map, "model.a0", base.a0, e),
            a1: take_f64(&mut map, "model.a1", base.a1, e),
            a2: take_f64(&mut map, "model.a2", base.a2, e),
            b0: take_f64(&mut map, "model.b0", base.b0, e),
            b1: take_f64(&mut map, "model.b1", base.b1, e),
            b2: take_f64(&mut map, "model.b2", base.b2, e),
        },
        other => {
            e.push(format!(
                "model.name: unknown model `{other}` (expected default or polynomial)"
            ));
            base
        }
    };
    let truncation = take_auto(&mut map, "model.M", e);
    let dp = d.params;
    let tau = take_auto(&mut map, "scheme.tau", e);
    let params = SchemeParams {
        mu: take_f64(&mut map, "scheme.mu", dp.mu, e),
        nu: take_f64(&mut map, "scheme.nu", dp.nu, e),
        eps: take_f64(&mut map, "scheme.eps", dp.eps, e),
        tau: match tau {
            Auto::Value(t) => t,
            Auto::Auto => dp.tau,
        },
        horizon: take_f64(&mut map, "scheme.T", dp.horizon, e),
        tol_newton: take_f64(&mut map, "solver.tol_newton", dp.tol_newton, e),
        tol_fixed_point: take_f64(&mut map, "solver.tol_fixed_point", dp.tol_fixed_point, e),
        max_newton_iters: take_usize(&mut map, "solver.max_newton_iters", dp.max_newton_iters, e),
        max_fp_iters: take_usize(&mut map, "solver.max_fp_iters", dp.max_fp_iters, e),
    };
    let eta0 = take_profile(&mut map, "eta0", d.eta0, e);
    let theta0 = take_profile(&mut map, "theta0", d.theta0, e);
    let forcing_u = take_forcing(&mut map, "forcing.u", e);
    let forcing_v = take_forcing(&mut map, "forcing.v", e);
    let output = OutputSpec {
        dir: map
            .remove("output.dir")
            .map(|(v, _)| PathBuf::from(v.trim()))
            .unwrap_or(d.output.dir),
        cadence: take_usize(&mut map, "output.cadence", d.output.cadence, e),
        ledger: match map.remove("output.ledger") {
            None => true,
            Some((v, line)) => match v.trim() {
                "true" => true,
                "false" => false,
                other => {
                    e.push(format!(
                        "output.ledger: expected true or false, got `{other}` (line {line})"
                    ));
                    true
                }
            },
        },
    };
    let seed = match map.remove("seed") {
        None => d.seed,
        Some((v, line)) => v.trim().parse().unwrap_or_else(|_| {
            e.push(format!("seed: cannot parse `{v}` (line {line})"));
            d.seed
        }),
    };
    for (k, (_, line)) in &map {
        errs.push(format!("unknown key `{k}` (line {line})"));
    }
    let cfg = RunConfig {
        dim,
        cells,
        lengths,
        model_name,
        model,
        truncation,
        params,
        tau,
        eta0,
        theta0,
        forcing_u,
        forcing_v,
        output,
        seed,
    };
    if errs.is_empty() {
        errs = cfg.violations();
    }
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(KwcError::Validation(errs))
    }
}

/// Parse and validate configuration text.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| KwcError::Parse {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let k = k.trim();
        if k.is_empty() || k.contains(char::is_whitespace) {
            return Err(KwcError::Parse {
                line,
                message: format!("invalid key `{k}`"),
            });
        }
        if map
            .insert(k.to_string(), (v.trim().to_string(), line))
            .is_some()
        {
            return Err(KwcError::Parse {
                line,
                message: format!("duplicate key `{k}`"),
            });
        }
    }
    from_map(map)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}
