//! Configuration document: parsing, defaults and validation.
//!
//! ```toml
//! command = "nf-equilibria"
//! seed = 7
//! threads = 2
//!
//! [system]
//! name = "nf-map"
//! q = 5
//! psi1 = 1.0
//! a = 1.0
//! mu = -0.01
//!
//! [op]
//! scan_points = 2000
//! ```

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::kam::GatePolicy;
use crate::normal_form::ResonantParams;
use crate::system::{builtin_system, resonant_params_from, InvolutionId, ReversibleSystem, SystemError, TwistStd};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    CheckRev,
    FindSymOrbits,
    NfPortrait,
    NfEquilibria,
    PendulumCheck,
    MuSweep,
    PitchforkScan,
    CertifySinkSource,
    MapConfirm,
    Rotation,
    Diophantine,
    Twist,
    FmnRoots,
    AveragedFit,
}

impl Command {
    pub const ALL: [Command; 14] = [
        Command::CheckRev,
        Command::FindSymOrbits,
        Command::NfPortrait,
        Command::NfEquilibria,
        Command::PendulumCheck,
        Command::MuSweep,
        Command::PitchforkScan,
        Command::CertifySinkSource,
        Command::MapConfirm,
        Command::Rotation,
        Command::Diophantine,
        Command::Twist,
        Command::FmnRoots,
        Command::AveragedFit,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::CheckRev => "check-rev",
            Command::FindSymOrbits => "find-sym-orbits",
            Command::NfPortrait => "nf-portrait",
            Command::NfEquilibria => "nf-equilibria",
            Command::PendulumCheck => "pendulum-check",
            Command::MuSweep => "mu-sweep",
            Command::PitchforkScan => "pitchfork-scan",
            Command::CertifySinkSource => "certify-sink-source",
            Command::MapConfirm => "map-confirm",
            Command::Rotation => "rotation",
            Command::Diophantine => "diophantine",
            Command::Twist => "twist",
            Command::FmnRoots => "fmn-roots",
            Command::AveragedFit => "averaged-fit",
        }
    }

    /// Subcommands that operate on the normal form and need `nf-map`.
    pub fn needs_normal_form(&self) -> bool {
        matches!(
            self,
            Command::NfPortrait
                | Command::NfEquilibria
                | Command::PendulumCheck
                | Command::MuSweep
                | Command::PitchforkScan
                | Command::CertifySinkSource
                | Command::MapConfirm
        )
    }

    pub fn needs_system(&self) -> bool {
        !matches!(self, Command::Diophantine)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL.iter().find(|c| c.name() == s).copied().ok_or_else(|| {
            let names: Vec<&str> = Command::ALL.iter().map(|c| c.name()).collect();
            format!("unknown command `{s}`{}", suggestion(s, &names))
        })
    }
}

/// `" (did you mean `x`?)"` for the closest candidate, or an empty string.
pub fn suggestion(key: &str, candidates: &[&str]) -> String {
    candidates
        .iter()
        .map(|c| (strsim::levenshtein(key, c), *c))
        .filter(|(d, c)| *d <= 3.max(c.len() / 3) || (c.len() >= 2 && key.starts_with(c)) || (key.len() >= 2 && c.starts_with(key)))
        .min()
        .map(|(_, c)| format!(" (did you mean `{c}`?)"))
        .unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SystemSpec {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

impl SystemSpec {
    pub fn build(&self) -> Result<ReversibleSystem, SystemError> {
        builtin_system(&self.name, &self.params)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChartSpec {
    Lift { level: f64, rho_max: Option<f64> },
    Polar { center: [f64; 2], radius: f64, rho_max: Option<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum OpConfig {
    CheckRev {
        samples: usize,
        tol: f64,
    },
    FindSymOrbits {
        source: InvolutionId,
        target: InvolutionId,
        branch: usize,
        s_lo: f64,
        s_hi: f64,
        k: usize,
        tol: f64,
        scan_points: usize,
        classify_tol: f64,
        polish: bool,
    },
    NfPortrait {
        rho_lo: f64,
        rho_hi: f64,
        n_rho: usize,
        n_phi: usize,
    },
    NfEquilibria {
        rho_max: Option<f64>,
        scan_points: usize,
    },
    PendulumCheck {
        mu_lo: f64,
        mu_hi: f64,
        points: usize,
        n_theta: usize,
        n_u: usize,
        u_max: f64,
    },
    MuSweep {
        mu_lo: f64,
        mu_hi: f64,
        resolution: usize,
    },
    PitchforkScan {
        mu_lo: f64,
        mu_hi: f64,
        mu_resolution: usize,
        a_values: Vec<f64>,
    },
    CertifySinkSource,
    MapConfirm {
        pair_tol: f64,
    },
    Rotation {
        chart: ChartSpec,
        rho: f64,
        theta: f64,
        iterates: usize,
    },
    Diophantine {
        psi0: f64,
        alpha: f64,
        k_max: u64,
    },
    Twist {
        chart: ChartSpec,
        rho_lo: f64,
        rho_hi: f64,
        steps: usize,
        iterates: usize,
        theta0: f64,
        noise_limit: f64,
    },
    FmnRoots {
        chart: ChartSpec,
        ns: Vec<usize>,
        m: Option<i64>,
        rho_below: f64,
        rho_above: f64,
        iterates: usize,
        gate: GatePolicy,
        n_cap: usize,
        seeds_per_branch: usize,
        newton_tol: f64,
    },
    AveragedFit {
        chart: ChartSpec,
        rho_lo: f64,
        rho_hi: f64,
        count: usize,
        n_theta: usize,
    },
}

/// A validated configuration with every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub threads: usize,
    pub system: Option<SystemSpec>,
    pub op: OpConfig,
    /// `key = value` for every value taken from a default.
    pub defaults: Vec<String>,
}

impl RunConfig {
    pub fn resonant_params(&self) -> Option<ResonantParams> {
        let sys = self.system.as_ref()?;
        (sys.name == "nf-map").then(|| resonant_params_from(&sys.params).ok()).flatten()
    }
}

/// Command-line values that take precedence over the document.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Clone, Copy)]
enum Check {
    Any,
    Positive,
}

struct Diag {
    errors: Vec<String>,
    defaults: Vec<String>,
}

struct Section<'a> {
    name: &'static str,
    table: toml::Table,
    seen: Vec<&'static str>,
    diag: &'a mut Diag,
}

fn as_f64(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(f) => Some(*f),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

impl<'a> Section<'a> {
    fn new(name: &'static str, table: toml::Table, diag: &'a mut Diag) -> Self {
        Section { name, table, seen: Vec::new(), diag }
    }

    fn err(&mut self, key: &str, msg: impl fmt::Display) {
        self.diag.errors.push(format!("{}.{key}: {msg}", self.name));
    }

    fn note_default(&mut self, key: &str, value: impl fmt::Debug) {
        self.diag.defaults.push(format!("{}.{key} = {value:?}", self.name));
    }

    fn check_f64(&mut self, key: &str, v: f64, check: Check) -> bool {
        let ok = v.is_finite()
            && match check {
                Check::Any => true,
                Check::Positive => v > 0.0,
            };
        if !ok {
            let want = match check {
                Check::Any => "a finite number",
                Check::Positive => "> 0",
            };
            self.err(key, format!("must be {want} (got {v})"));
        }
        ok
    }

    fn opt_f64(&mut self, key: &'static str, check: Check) -> Option<f64> {
        self.seen.push(key);
        let v = self.table.get(key)?.clone();
        match as_f64(&v) {
            Some(x) if self.check_f64(key, x, check) => Some(x),
            Some(_) => None,
            None => {
                self.err(key, format!("expected a number, got {v}"));
                None
            }
        }
    }

    fn f64_or(&mut self, key: &'static str, default: f64, check: Check) -> f64 {
        if self.table.contains_key(key) {
            self.opt_f64(key, check).unwrap_or(default)
        } else {
            self.seen.push(key);
            self.note_default(key, default);
            default
        }
    }

    fn required_f64(&mut self, key: &'static str, check: Check) -> f64 {
        if !self.table.contains_key(key) {
            self.seen.push(key);
            self.err(key, "required");
            return f64::NAN;
        }
        self.opt_f64(key, check).unwrap_or(f64::NAN)
    }

    fn opt_int(&mut self, key: &'static str, min: i64) -> Option<i64> {
        self.seen.push(key);
        let v = self.table.get(key)?.clone();
        match v.as_integer() {
            Some(i) if i >= min => Some(i),
            Some(i) => {
                self.err(key, format!("must be ≥ {min} (got {i})"));
                None
            }
            None => {
                self.err(key, format!("expected an integer, got {v}"));
                None
            }
        }
    }

    fn usize_or(&mut self, key: &'static str, default: usize, min: usize) -> usize {
        if self.table.contains_key(key) {
            self.opt_int(key, min as i64).map(|i| i as usize).unwrap_or(default)
        } else {
            self.seen.push(key);
            self.note_default(key, default);
            default
        }
    }

    fn bool_or(&mut self, key: &'static str, default: bool) -> bool {
        self.seen.push(key);
        match self.table.get(key).cloned() {
            None => {
                self.note_default(key, default);
                default
            }
            Some(toml::Value::Boolean(b)) => b,
            Some(v) => {
                self.err(key, format!("expected a boolean, got {v}"));
                default
            }
        }
    }

    fn choice_or(&mut self, key: &'static str, default: &'static str, choices: &[&'static str]) -> &'static str {
        self.seen.push(key);
        match self.table.get(key).cloned() {
            None => {
                self.note_default(key, default);
                default
            }
            Some(toml::Value::String(s)) => match choices.iter().find(|c| **c == s) {
                Some(c) => c,
                None => {
                    self.err(key, format!("`{s}` is not one of {choices:?}{}", suggestion(&s, choices)));
                    default
                }
            },
            Some(v) => {
                self.err(key, format!("expected a string, got {v}"));
                default
            }
        }
    }

    fn f64_list_or(&mut self, key: &'static str, default: Vec<f64>) -> Vec<f64> {
        self.seen.push(key);
        match self.table.get(key).cloned() {
            None => {
                self.note_default(key, &default);
                default
            }
            Some(toml::Value::Array(items)) => {
                let vals: Vec<Option<f64>> = items.iter().map(as_f64).collect();
                if vals.is_empty() || vals.iter().any(|v| !v.is_some_and(f64::is_finite)) {
                    self.err(key, "expected a non-empty list of finite numbers");
                    return default;
                }
                vals.into_iter().flatten().collect()
            }
            Some(v) => {
                self.err(key, format!("expected a list, got {v}"));
                default
            }
        }
    }

    fn usize_list_or(&mut self, key: &'static str, default: Vec<usize>, min: usize) -> Vec<usize> {
        self.seen.push(key);
        match self.table.get(key).cloned() {
            None => {
                self.note_default(key, &default);
                default
            }
            Some(toml::Value::Array(items)) => {
                let vals: Vec<Option<i64>> = items.iter().map(|v| v.as_integer()).collect();
                if vals.is_empty() || vals.iter().any(|v| !v.is_some_and(|i| i >= min as i64)) {
                    self.err(key, format!("expected a non-empty list of integers ≥ {min}"));
                    return default;
                }
                vals.into_iter().flatten().map(|i| i as usize).collect()
            }
            Some(v) => {
                self.err(key, format!("expected a list, got {v}"));
                default
            }
        }
    }

    fn point_or(&mut self, key: &'static str, default: [f64; 2]) -> [f64; 2] {
        let v = self.f64_list_or(key, default.to_vec());
        if v.len() != 2 {
            self.err(key, "expected two coordinates [x, y]");
            return default;
        }
        [v[0], v[1]]
    }

    fn ordered(&mut self, lo_key: &str, lo: f64, hi_key: &str, hi: f64) {
        if lo.is_finite() && hi.is_finite() && !(lo < hi) {
            self.err(lo_key, format!("must be < {hi_key} ({lo} ≥ {hi})"));
        }
    }

    fn finish(self) {
        let unknown: Vec<String> = self.table.keys().filter(|k| !self.seen.contains(&k.as_str())).cloned().collect();
        for key in unknown {
            let s = suggestion(&key, &self.seen);
            self.diag.errors.push(format!("{}.{key}: unknown key{s}", self.name));
        }
    }
}

fn system_keys(name: &str) -> Vec<&'static str> {
    match name {
        "rigid-rotation" => vec!["psi"],
        "twist-std" => vec!["k", "eps", "omega"],
        "nf-map" => vec!["p", "q", "mu", "psi1", "psi2", "psi3", "psi4", "psi5", "psi6", "a", "b", "c", "tol", "guard"],
        _ => vec![],
    }
}

fn parse_system(table: Option<toml::Table>, command: Command, diag: &mut Diag) -> Option<SystemSpec> {
    let Some(mut table) = table else {
        if command.needs_system() {
            diag.errors.push("[system]: section required".into());
        }
        return None;
    };
    if !command.needs_system() {
        diag.errors.push(format!("[system]: not used by `{command}`"));
        return None;
    }
    let name = match table.remove("name") {
        Some(toml::Value::String(s)) => s,
        Some(v) => {
            diag.errors.push(format!("system.name: expected a string, got {v}"));
            return None;
        }
        None if command.needs_normal_form() => {
            diag.defaults.push("system.name = \"nf-map\"".into());
            "nf-map".into()
        }
        None => {
            diag.errors.push("system.name: required".into());
            return None;
        }
    };
    let known = system_keys(&name);
    if known.is_empty() {
        let names = ["nf-map", "twist-std", "rigid-rotation"];
        diag.errors.push(format!("system.name: unknown system `{name}`{}", suggestion(&name, &names)));
        return None;
    }
    if command.needs_normal_form() && name != "nf-map" {
        diag.errors.push(format!("system.name: `{command}` needs `nf-map`, got `{name}`"));
    }
    let mut params = BTreeMap::new();
    for (k, v) in table {
        let numbered_psi = name == "nf-map" && k.strip_prefix("psi").is_some_and(|d| d.parse::<usize>().is_ok_and(|j| j >= 1));
        if !known.contains(&k.as_str()) && !numbered_psi {
            diag.errors.push(format!("system.{k}: unknown parameter for `{name}`{}", suggestion(&k, &known)));
            continue;
        }
        match as_f64(&v) {
            Some(x) if x.is_finite() => {
                params.insert(k, x);
            }
            _ => diag.errors.push(format!("system.{k}: expected a finite number, got {v}")),
        }
    }
    let spec = SystemSpec { name, params };
    if let Err(e) = spec.build() {
        let msg = match &e {
            SystemError::OutOfRange { key, .. } => format!("system.{key}: {e}"),
            _ => format!("system: {e}"),
        };
        diag.errors.push(msg);
    }
    Some(spec)
}

fn parse_chart(sec: &mut Section<'_>, system: Option<&SystemSpec>) -> ChartSpec {
    let periodic = system.is_some_and(|s| s.name == "twist-std");
    let kind = sec.choice_or("chart", if periodic { "lift" } else { "polar" }, &["lift", "polar"]);
    let rho_max = sec.opt_f64("rho_max", Check::Positive);
    if kind == "lift" {
        if !periodic {
            sec.err("chart", "the lift chart needs a system with a periodic coordinate (twist-std)");
        }
        let omega = system.and_then(|s| s.params.get("omega").copied()).unwrap_or(TwistStd::DEFAULT_OMEGA);
        let level = sec.f64_or("level", 2.0 * PI * omega, Check::Any);
        ChartSpec::Lift { level, rho_max }
    } else {
        let center = sec.point_or("center", [0.0, 0.0]);
        let radius = sec.f64_or("radius", 0.5, Check::Positive);
        ChartSpec::Polar { center, radius, rho_max }
    }
}

fn involution_id(s: &str) -> InvolutionId {
    if s == "g" {
        InvolutionId::G
    } else {
        InvolutionId::FG
    }
}

fn parse_op(command: Command, table: toml::Table, system: Option<&SystemSpec>, nf: Option<&ResonantParams>, diag: &mut Diag) -> OpConfig {
    let mut sec = Section::new("op", table, diag);
    let op = match command {
        Command::CheckRev => {
            let default_tol = system.and_then(|s| s.build().ok()).map(|s| s.identity_tol).unwrap_or(1e-12);
            OpConfig::CheckRev { samples: sec.usize_or("samples", 1000, 1), tol: sec.f64_or("tol", default_tol, Check::Positive) }
        }
        Command::FindSymOrbits => {
            let source = involution_id(sec.choice_or("source", "g", &["g", "fg"]));
            let target = involution_id(sec.choice_or("target", "g", &["g", "fg"]));
            let branch = sec.usize_or("branch", 0, 0);
            let range =
                system.and_then(|s| s.build().ok()).and_then(|s| s.involution(source).fixed.branches.get(branch).map(|b| b.s_range));
            if system.is_some() && range.is_none() {
                sec.err("branch", format!("no branch {branch} on the chosen fixed set"));
            }
            let (r0, r1) = range.unwrap_or((-1.0, 1.0));
            let s_lo = sec.f64_or("s_lo", r0, Check::Any);
            let s_hi = sec.f64_or("s_hi", r1, Check::Any);
            sec.ordered("s_lo", s_lo, "s_hi", s_hi);
            OpConfig::FindSymOrbits {
                source,
                target,
                branch,
                s_lo,
                s_hi,
                k: sec.usize_or("k", 1, 1),
                tol: sec.f64_or("tol", 1e-10, Check::Positive),
                scan_points: sec.usize_or("scan_points", 401, 2),
                classify_tol: sec.f64_or("classify_tol", crate::orbits::CLASSIFY_TOL, Check::Positive),
                polish: sec.bool_or("polish", true),
            }
        }
        Command::NfPortrait => {
            let rmax = nf.map(|p| p.rho_max()).filter(|r| r.is_finite() && *r > 0.0).unwrap_or(0.3);
            let rho_lo = sec.f64_or("rho_lo", 0.02 * rmax, Check::Positive);
            let rho_hi = sec.f64_or("rho_hi", rmax, Check::Positive);
            sec.ordered("rho_lo", rho_lo, "rho_hi", rho_hi);
            OpConfig::NfPortrait { rho_lo, rho_hi, n_rho: sec.usize_or("n_rho", 40, 2), n_phi: sec.usize_or("n_phi", 72, 2) }
        }
        Command::NfEquilibria => {
            OpConfig::NfEquilibria { rho_max: sec.opt_f64("rho_max", Check::Positive), scan_points: sec.usize_or("scan_points", 2000, 2) }
        }
        Command::PendulumCheck => {
            let mu_lo = sec.f64_or("mu_lo", 1e-6, Check::Positive);
            let mu_hi = sec.f64_or("mu_hi", 1e-3, Check::Positive);
            sec.ordered("mu_lo", mu_lo, "mu_hi", mu_hi);
            OpConfig::PendulumCheck {
                mu_lo,
                mu_hi,
                points: sec.usize_or("points", 8, 2),
                n_theta: sec.usize_or("n_theta", 41, 2),
                n_u: sec.usize_or("n_u", 41, 2),
                u_max: sec.f64_or("u_max", 2.0, Check::Positive),
            }
        }
        Command::MuSweep => {
            let mu_lo = sec.f64_or("mu_lo", -1e-2, Check::Any);
            let mu_hi = sec.f64_or("mu_hi", 1e-2, Check::Any);
            sec.ordered("mu_lo", mu_lo, "mu_hi", mu_hi);
            OpConfig::MuSweep { mu_lo, mu_hi, resolution: sec.usize_or("resolution", 201, 2) }
        }
        Command::PitchforkScan => {
            let predicted = nf.map(|p| p.a * p.psi1() / (p.c - p.b)).filter(|v| v.is_finite() && *v != 0.0).unwrap_or(-1e-4);
            let mu_lo = sec.f64_or("mu_lo", predicted - predicted.abs(), Check::Any);
            let mu_hi = sec.f64_or("mu_hi", predicted + predicted.abs(), Check::Any);
            sec.ordered("mu_lo", mu_lo, "mu_hi", mu_hi);
            let a0 = nf.map(|p| p.a).unwrap_or(0.0);
            OpConfig::PitchforkScan {
                mu_lo,
                mu_hi,
                mu_resolution: sec.usize_or("mu_resolution", 101, 2),
                a_values: sec.f64_list_or("a_values", vec![a0, 0.5 * a0, 0.25 * a0]),
            }
        }
        Command::CertifySinkSource => OpConfig::CertifySinkSource,
        Command::MapConfirm => OpConfig::MapConfirm { pair_tol: sec.f64_or("pair_tol", 1e-6, Check::Positive) },
        Command::Rotation => {
            let chart = parse_chart(&mut sec, system);
            OpConfig::Rotation {
                chart,
                rho: sec.f64_or("rho", 0.0, Check::Any),
                theta: sec.f64_or("theta", 0.0, Check::Any),
                iterates: sec.usize_or("iterates", 10_000, 8),
            }
        }
        Command::Diophantine => OpConfig::Diophantine {
            psi0: sec.required_f64("psi0", Check::Any),
            alpha: sec.f64_or("alpha", 1.0, Check::Positive),
            k_max: sec.usize_or("k_max", 100_000, 1) as u64,
        },
        Command::Twist => {
            let chart = parse_chart(&mut sec, system);
            let rho_lo = sec.f64_or("rho_lo", -0.05, Check::Any);
            let rho_hi = sec.f64_or("rho_hi", 0.05, Check::Any);
            sec.ordered("rho_lo", rho_lo, "rho_hi", rho_hi);
            OpConfig::Twist {
                chart,
                rho_lo,
                rho_hi,
                steps: sec.usize_or("steps", 5, 2),
                iterates: sec.usize_or("iterates", 20_000, 8),
                theta0: sec.f64_or("theta0", 0.0, Check::Any),
                noise_limit: sec.f64_or("noise_limit", 1e-6, Check::Positive),
            }
        }
        Command::FmnRoots => {
            let chart = parse_chart(&mut sec, system);
            let ns = sec.usize_list_or("ns", vec![5, 8, 13, 21], 1);
            let m = sec.opt_int("m", i64::MIN);
            if m.is_some() && ns.len() != 1 {
                sec.err("m", "a fixed m needs exactly one entry in ns");
            }
            let n_cap = sec.usize_or("n_cap", 64, 1);
            if let Some(n) = ns.iter().find(|n| **n > n_cap) {
                sec.err("ns", format!("n = {n} exceeds n_cap = {n_cap}"));
            }
            let rho_below = sec.f64_or("rho_below", -0.9, Check::Any);
            let rho_above = sec.f64_or("rho_above", 1.3, Check::Any);
            if !(rho_below < 0.0 && rho_above > 0.0) {
                sec.err("rho_below", format!("need rho_below < 0 < rho_above (got {rho_below}, {rho_above})"));
            }
            let gate = match sec.choice_or("gate", "warn", &["warn", "reject"]) {
                "reject" => GatePolicy::Reject,
                _ => GatePolicy::Warn,
            };
            OpConfig::FmnRoots {
                chart,
                ns,
                m,
                rho_below,
                rho_above,
                iterates: sec.usize_or("iterates", 20_000, 8),
                gate,
                n_cap,
                seeds_per_branch: sec.usize_or("seeds_per_branch", 1001, 2),
                newton_tol: sec.f64_or("newton_tol", 1e-11, Check::Positive),
            }
        }
        Command::AveragedFit => {
            let chart = parse_chart(&mut sec, system);
            let rho_lo = sec.f64_or("rho_lo", 0.01, Check::Positive);
            let rho_hi = sec.f64_or("rho_hi", 0.1, Check::Positive);
            sec.ordered("rho_lo", rho_lo, "rho_hi", rho_hi);
            OpConfig::AveragedFit { chart, rho_lo, rho_hi, count: sec.usize_or("count", 6, 3), n_theta: sec.usize_or("n_theta", 64, 1) }
        }
    };
    sec.finish();
    op
}

const TOP_KEYS: [&str; 5] = ["command", "seed", "threads", "system", "op"];

/// Parse and validate a configuration document. All problems are
/// collected and returned together.
pub fn validate(text: &str, overrides: &Overrides) -> Result<RunConfig, Vec<String>> {
    let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| vec![format!("config: {}", e.message())])?;
    let mut diag = Diag { errors: Vec::new(), defaults: Vec::new() };
    for key in doc.keys() {
        if !TOP_KEYS.contains(&key.as_str()) {
            diag.errors.push(format!("{key}: unknown key{}", suggestion(key, &TOP_KEYS)));
        }
    }
    let command = match doc.remove("command") {
        Some(toml::Value::String(s)) => match s.parse::<Command>() {
            Ok(c) => Some(c),
            Err(e) => {
                diag.errors.push(format!("command: {e}"));
                None
            }
        },
        Some(v) => {
            diag.errors.push(format!("command: expected a string, got {v}"));
            None
        }
        None => {
            diag.errors.push("command: required".into());
            None
        }
    };
    let seed = match (overrides.seed, doc.remove("seed")) {
        (Some(s), _) => s,
        (None, Some(toml::Value::Integer(i))) if i >= 0 => i as u64,
        (None, Some(v)) => {
            diag.errors.push(format!("seed: expected a non-negative integer, got {v}"));
            0
        }
        (None, None) => {
            diag.defaults.push("seed = 0".into());
            0
        }
    };
    let threads = match (overrides.threads, doc.remove("threads")) {
        (Some(0), _) => {
            diag.errors.push("--threads: must be ≥ 1".into());
            1
        }
        (Some(t), _) => t,
        (None, Some(toml::Value::Integer(i))) if i >= 1 => i as usize,
        (None, Some(v)) => {
            diag.errors.push(format!("threads: expected an integer ≥ 1, got {v}"));
            1
        }
        (None, None) => {
            diag.defaults.push("threads = 1".into());
            1
        }
    };
    let table_of = |v: Option<toml::Value>, name: &str, diag: &mut Diag| match v {
        None => None,
        Some(toml::Value::Table(t)) => Some(t),
        Some(_) => {
            diag.errors.push(format!("{name}: expected a section"));
            None
        }
    };
    let system_table = table_of(doc.remove("system"), "system", &mut diag);
    let op_table = table_of(doc.remove("op"), "op", &mut diag).unwrap_or_default();
    let Some(command) = command else {
        return Err(diag.errors);
    };
    let system = parse_system(system_table, command, &mut diag);
    let nf = system.as_ref().filter(|s| s.name == "nf-map").and_then(|s| resonant_params_from(&s.params).ok());
    let op = parse_op(command, op_table, system.as_ref(), nf.as_ref(), &mut diag);
    if diag.errors.is_empty() {
        Ok(RunConfig { command, seed, threads, system, op, defaults: diag.defaults })
    } else {
        Err(diag.errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok(text: &str) -> RunConfig {
        validate(text, &Overrides::default()).unwrap_or_else(|e| panic!("{e:?}"))
    }

    fn errors(text: &str) -> Vec<String> {
        validate(text, &Overrides::default()).unwrap_err()
    }

    #[test]
    fn missing_tolerance_is_defaulted_and_noted() {
        let cfg = ok("command = \"check-rev\"\n[system]\nname = \"rigid-rotation\"\n");
        assert!(matches!(cfg.op, OpConfig::CheckRev { samples: 1000, tol } if tol == 1e-12));
        assert!(cfg.defaults.iter().any(|d| d.starts_with("op.tol")));
        assert!(cfg.defaults.iter().any(|d| d == "seed = 0"));
    }

    #[test]
    fn small_q_rejected_for_nf_commands() {
        let errs = errors("command = \"nf-equilibria\"\n[system]\nq = 4\npsi1 = 1\na = 1\nmu = -0.01\n");
        assert!(errs.iter().any(|e| e.contains("system.q") && e.contains("≥ 5")), "{errs:?}");
    }

    #[test]
    fn negative_resolution_rejected() {
        let errs = errors("command = \"mu-sweep\"\n[system]\nq = 5\npsi1 = 1\na = 1\n[op]\nresolution = -3\n");
        assert!(errs.iter().any(|e| e.starts_with("op.resolution")), "{errs:?}");
    }

    #[test]
    fn unknown_keys_get_suggestions_and_errors_aggregate() {
        let errs = errors(
            "command = \"twist\"\nsed = 3\n[system]\nname = \"twist-std\"\nepsilon = 0.1\n[op]\nsteps = 0\nrho_hi = 0.1\nrho_hii = 2\n",
        );
        assert!(errs.iter().any(|e| e.contains("sed") && e.contains("`seed`")), "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("epsilon") && e.contains("`eps`")), "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("rho_hii") && e.contains("`rho_hi`")), "{errs:?}");
        assert!(errs.iter().any(|e| e.starts_with("op.steps")), "{errs:?}");
        assert!(errs.len() >= 4);
    }

    #[test]
    fn unknown_command_suggests() {
        let errs = errors("command = \"check-reve\"\n");
        assert!(errs[0].contains("`check-rev`"), "{errs:?}");
    }

    #[test]
    fn overrides_take_precedence() {
        let o = Overrides { seed: Some(9), threads: Some(3) };
        let cfg = validate("command = \"diophantine\"\nseed = 1\n[op]\npsi0 = 0.5\n", &o).unwrap();
        assert_eq!((cfg.seed, cfg.threads), (9, 3));
    }

    #[test]
    fn diophantine_requires_psi0_and_no_system() {
        let errs = errors("command = \"diophantine\"\n[system]\nname = \"rigid-rotation\"\n");
        assert!(errs.iter().any(|e| e.contains("psi0")));
        assert!(errs.iter().any(|e| e.contains("[system]")));
    }

    #[test]
    fn nf_command_rejects_other_systems() {
        let errs = errors("command = \"nf-equilibria\"\n[system]\nname = \"twist-std\"\n");
        assert!(errs.iter().any(|e| e.contains("needs `nf-map`")), "{errs:?}");
    }
}
