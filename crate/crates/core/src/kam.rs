//! Rotation numbers, Diophantine certificates, twist checks, `F_{m/n}`
//! fixed points and the averaged form near an invariant circle.
//!
//! Angles are measured in turns (period 1). Every orbit carries an
//! unwrapped angle; see [`AnnulusChart::lift_increment`].

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Mat2};
use crate::orbits::{self, OrbitError, PeriodicOrbit, Symmetry};
use crate::roots;
use crate::system::{InvolutionId, MapError, Point, ReversibleSystem};

/// Largest angular step (in turns) accepted by a chart that has to guess
/// the winding.
pub const MAX_UNAMBIGUOUS_STEP: f64 = 0.45;

/// Name of the rotation-number estimator.
pub const WEIGHTED_BIRKHOFF: &str = "weighted-birkhoff exp(-1/(t(1-t)))";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KamError {
    #[error("orbit left the chart at iterate {step}: {point}")]
    ChartEscape { step: usize, point: Point },
    #[error("winding ambiguity at iterate {step}: angular step {increment:.6} turns; use a finer chart")]
    WindingAmbiguity { step: usize, increment: f64 },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// Coordinates `(ρ, θ)` on an annulus, `θ` in turns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AnnulusChart {
    /// Cylinder chart `θ = x / period`, `ρ = y − level`. The map's own `x`
    /// is taken as the lift, so no winding is guessed.
    Lift { period: f64, level: f64, rho_max: f64 },
    /// Polar chart about `center`, `ρ = r − radius`. Windings are guessed
    /// from consecutive angles.
    Polar { center: Point, radius: f64, rho_max: f64 },
}

impl AnnulusChart {
    /// The natural chart of a cylinder system around the circle `y = level`.
    pub fn lift(sys: &ReversibleSystem, level: f64) -> Result<Self, KamError> {
        let period = sys.x_period.ok_or_else(|| KamError::Precondition(format!("{} has no periodic coordinate", sys.name)))?;
        Ok(AnnulusChart::Lift { period, level, rho_max: f64::INFINITY })
    }

    pub fn polar(center: Point, radius: f64) -> Self {
        AnnulusChart::Polar { center, radius, rho_max: radius }
    }

    pub fn with_rho_max(self, rho_max: f64) -> Self {
        match self {
            AnnulusChart::Lift { period, level, .. } => AnnulusChart::Lift { period, level, rho_max },
            AnnulusChart::Polar { center, radius, .. } => AnnulusChart::Polar { center, radius, rho_max },
        }
    }

    fn rho_max(&self) -> f64 {
        match *self {
            AnnulusChart::Lift { rho_max, .. } | AnnulusChart::Polar { rho_max, .. } => rho_max,
        }
    }

    /// `(ρ, θ)`; for the lift chart `θ` is already unwrapped.
    pub fn coords(&self, p: Point) -> (f64, f64) {
        match *self {
            AnnulusChart::Lift { period, level, .. } => (p.y - level, p.x / period),
            AnnulusChart::Polar { center, radius, .. } => {
                let (dx, dy) = (p.x - center.x, p.y - center.y);
                (dx.hypot(dy) - radius, dy.atan2(dx) / (2.0 * PI))
            }
        }
    }

    pub fn point(&self, rho: f64, theta: f64) -> Point {
        match *self {
            AnnulusChart::Lift { period, level, .. } => Point::new(theta * period, level + rho),
            AnnulusChart::Polar { center, radius, .. } => {
                let (s, c) = (2.0 * PI * theta).sin_cos();
                Point::new(center.x + (radius + rho) * c, center.y + (radius + rho) * s)
            }
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        let (rho, _) = self.coords(p);
        let inside = rho.abs() <= self.rho_max();
        match *self {
            AnnulusChart::Lift { .. } => inside,
            AnnulusChart::Polar { center, .. } => inside && p.dist(center) > 0.0,
        }
    }

    /// Angular advance from `a` to `b` in turns on the lift.
    pub fn lift_increment(&self, a: Point, b: Point, step: usize) -> Result<f64, KamError> {
        let (_, ta) = self.coords(a);
        let (_, tb) = self.coords(b);
        match self {
            AnnulusChart::Lift { .. } => Ok(tb - ta),
            AnnulusChart::Polar { .. } => {
                let d = tb - ta;
                let d = d - d.round();
                if d.abs() > MAX_UNAMBIGUOUS_STEP {
                    Err(KamError::WindingAmbiguity { step, increment: d })
                } else {
                    Ok(d)
                }
            }
        }
    }
}

/// One orbit in chart coordinates with `θ` unwrapped.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiftedOrbit {
    pub points: Vec<Point>,
    pub rho: Vec<f64>,
    pub theta: Vec<f64>,
}

impl LiftedOrbit {
    pub fn increments(&self) -> Vec<f64> {
        self.theta.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Lift an explicit point sequence.
pub fn lift_sequence(chart: &AnnulusChart, points: &[Point]) -> Result<LiftedOrbit, KamError> {
    let mut rho = Vec::with_capacity(points.len());
    let mut theta = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        if !chart.contains(*p) {
            return Err(KamError::ChartEscape { step: i, point: *p });
        }
        let (r, t) = chart.coords(*p);
        rho.push(r);
        theta.push(match theta.last() {
            None => t,
            Some(&prev) => prev + chart.lift_increment(points[i - 1], *p, i)?,
        });
    }
    Ok(LiftedOrbit { points: points.to_vec(), rho, theta })
}

/// `n` iterates of `x0` lifted to the chart.
pub fn lifted_orbit(sys: &ReversibleSystem, chart: &AnnulusChart, x0: Point, n: usize) -> Result<LiftedOrbit, KamError> {
    let mut points = Vec::with_capacity(n + 1);
    points.push(x0);
    let mut x = x0;
    for i in 1..=n {
        x = sys.step(x).map_err(|_| KamError::ChartEscape { step: i, point: x })?;
        points.push(x);
    }
    lift_sequence(chart, &points)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationNumberEstimate {
    pub psi0: f64,
    /// `|WB_N − WB_{N/2}|`, floored at rounding level.
    pub error: f64,
    pub iterates: usize,
    pub method: String,
}

fn bump(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        (-1.0 / (t * (1.0 - t))).exp()
    }
}

/// `Σ w(t_j) d_j / Σ w(t_j)` with `t_j = (j+1)/(N+1)`.
pub fn weighted_birkhoff(d: &[f64]) -> f64 {
    let n = d.len() as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for (j, v) in d.iter().enumerate() {
        let w = bump((j as f64 + 1.0) / (n + 1.0));
        num += w * v;
        den += w;
    }
    num / den
}

fn estimate_from_increments(d: &[f64]) -> Result<RotationNumberEstimate, KamError> {
    if d.len() < 4 {
        return Err(KamError::Precondition(format!("need at least 4 increments, got {}", d.len())));
    }
    let full = weighted_birkhoff(d);
    let half = weighted_birkhoff(&d[..d.len() / 2]);
    Ok(RotationNumberEstimate {
        psi0: full,
        error: (full - half).abs().max(f64::EPSILON * (1.0 + full.abs())),
        iterates: d.len(),
        method: WEIGHTED_BIRKHOFF.into(),
    })
}

/// Rotation number of the orbit of `x0` over `n` iterates.
///
/// For Diophantine quasi-periodic orbits the weighted average converges
/// faster than any power of `1/n`; periodic orbits give `m/n` to rounding.
pub fn rotation_number(sys: &ReversibleSystem, chart: &AnnulusChart, x0: Point, n: usize) -> Result<RotationNumberEstimate, KamError> {
    let orbit = lifted_orbit(sys, chart, x0, n)?;
    estimate_from_increments(&orbit.increments())
}

/// Rotation number of a given point sequence, e.g. the `g`-image of an orbit.
pub fn rotation_of_sequence(chart: &AnnulusChart, points: &[Point]) -> Result<RotationNumberEstimate, KamError> {
    estimate_from_increments(&lift_sequence(chart, points)?.increments())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiophantineCertificate {
    pub psi0: f64,
    pub alpha: f64,
    /// `min_{1≤k≤k_max} k^α dist(kψ₀, ℤ)`.
    pub k_constant: f64,
    pub k_max: u64,
    pub k_attaining: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum DiophantineOutcome {
    Certificate(DiophantineCertificate),
    Refusal { psi0: f64, k: u64, dist: f64 },
}

fn dist_to_integer(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// Smallest `k^α dist(kψ₀, ℤ)` over `1 ≤ k ≤ k_max`, or the first `k` with
/// `kψ₀` an integer to rounding.
pub fn diophantine_check(psi0: f64, alpha: f64, k_max: u64) -> Result<DiophantineOutcome, KamError> {
    if k_max < 1 || !(alpha > 0.0) || !psi0.is_finite() {
        return Err(KamError::Precondition(format!("need k_max ≥ 1, α > 0, finite ψ₀ (k_max={k_max}, α={alpha}, ψ₀={psi0})")));
    }
    let mut best = (f64::INFINITY, 0u64);
    for k in 1..=k_max {
        let kf = k as f64;
        let x = kf * psi0;
        let d = dist_to_integer(x);
        if d <= 2.0 * f64::EPSILON * x.abs() {
            return Ok(DiophantineOutcome::Refusal { psi0, k, dist: d });
        }
        let v = kf.powf(alpha) * d;
        if v < best.0 {
            best = (v, k);
        }
    }
    Ok(DiophantineOutcome::Certificate(DiophantineCertificate { psi0, alpha, k_constant: best.0, k_max, k_attaining: best.1 }))
}

/// Second pass: `|kψ₀ + p| ≥ K/k^α` with `p` the nearest integer to `−kψ₀`.
pub fn verify_certificate(cert: &DiophantineCertificate) -> bool {
    if !(cert.k_constant > 0.0) {
        return false;
    }
    (1..=cert.k_max).all(|k| {
        let kf = k as f64;
        let p = (-kf * cert.psi0).round();
        (kf * cert.psi0 + p).abs() >= cert.k_constant / kf.powf(cert.alpha) * (1.0 - 1e-12)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistSettings {
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub steps: usize,
    pub iterates: usize,
    /// Angle (turns) of the seed of every orbit.
    pub theta0: f64,
    /// Rotation errors above this make the verdict inconclusive.
    pub noise_limit: f64,
    pub uncertainty_floor: f64,
}

impl Default for TwistSettings {
    fn default() -> Self {
        TwistSettings { rho_lo: -0.05, rho_hi: 0.05, steps: 5, iterates: 20_000, theta0: 0.0, noise_limit: 1e-6, uncertainty_floor: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistReport {
    pub rho: Vec<f64>,
    pub rotation: Vec<RotationNumberEstimate>,
    /// `dψ/dρ` at `ρ = 0`, in turns per unit `ρ`.
    pub slope: f64,
    pub uncertainty: f64,
    pub verdict: Verdict,
}

/// Least-squares slope of rotation number across a `ρ` window.
pub fn twist_check(sys: &ReversibleSystem, chart: &AnnulusChart, settings: &TwistSettings) -> Result<TwistReport, KamError> {
    if settings.steps < 2 || !(settings.rho_hi > settings.rho_lo) {
        return Err(KamError::Precondition("twist window needs steps ≥ 2 and rho_hi > rho_lo".into()));
    }
    let rho: Vec<f64> = (0..settings.steps)
        .map(|i| settings.rho_lo + (settings.rho_hi - settings.rho_lo) * i as f64 / (settings.steps - 1) as f64)
        .collect();
    let rotation = rho
        .par_iter()
        .map(|&r| rotation_number(sys, chart, chart.point(r, settings.theta0), settings.iterates))
        .collect::<Result<Vec<_>, _>>()?;
    let psi: Vec<f64> = rotation.iter().map(|e| e.psi0).collect();
    let (slope, _) = linalg::linear_fit(&rho, &psi).expect("distinct window points");
    let mean = rho.iter().sum::<f64>() / rho.len() as f64;
    let sxx: f64 = rho.iter().map(|r| (r - mean).powi(2)).sum();
    let propagated: f64 = rho.iter().zip(&rotation).map(|(r, e)| (r - mean).abs() / sxx * e.error).sum();
    let uncertainty = propagated.max(settings.uncertainty_floor);
    let verdict = if rotation.iter().any(|e| e.error > settings.noise_limit) {
        Verdict::Inconclusive
    } else if slope.abs() > 3.0 * uncertainty {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(TwistReport { rho, rotation, slope, uncertainty, verdict })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FmnSpec {
    pub m: i64,
    pub n: usize,
}

impl FmnSpec {
    pub fn ratio(&self) -> f64 {
        self.m as f64 / self.n as f64
    }
}

/// An invariant-curve approximation: a long orbit with its rotation number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveApprox {
    pub rho: f64,
    pub seed: Point,
    pub rotation: RotationNumberEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annulus {
    /// Curve from which radial distances are measured.
    pub inner: CurveApprox,
    pub outer: CurveApprox,
}

impl Annulus {
    pub fn from_levels(
        sys: &ReversibleSystem,
        chart: &AnnulusChart,
        rho_inner: f64,
        rho_outer: f64,
        theta0: f64,
        iterates: usize,
    ) -> Result<Self, KamError> {
        let curve = |rho: f64| -> Result<CurveApprox, KamError> {
            let seed = chart.point(rho, theta0);
            Ok(CurveApprox { rho, seed, rotation: rotation_number(sys, chart, seed, iterates)? })
        };
        Ok(Annulus { inner: curve(rho_inner)?, outer: curve(rho_outer)? })
    }

    pub fn rho_range(&self) -> (f64, f64) {
        (self.inner.rho.min(self.outer.rho), self.inner.rho.max(self.outer.rho))
    }

    pub fn rotation_range(&self) -> (f64, f64) {
        let (a, b) = (self.inner.rotation.psi0, self.outer.rotation.psi0);
        (a.min(b), a.max(b))
    }
}

/// What to do when `|nψ₀ − m| > 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatePolicy {
    #[default]
    Warn,
    Reject,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FmnSettings {
    pub n_cap: usize,
    pub seeds_per_branch: usize,
    pub newton_tol: f64,
    pub classify_tol: f64,
    pub gate: GatePolicy,
    /// `F_{m/n}` is declared the identity when its defect and `DF^n − I`
    /// stay below this at the probe points.
    pub degenerate_tol: f64,
}

impl Default for FmnSettings {
    fn default() -> Self {
        FmnSettings {
            n_cap: 64,
            seeds_per_branch: 1001,
            newton_tol: 1e-11,
            classify_tol: orbits::CLASSIFY_TOL,
            gate: GatePolicy::Warn,
            degenerate_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FmnRoot {
    pub orbit: PeriodicOrbit,
    /// Lift advance after `n` steps, in turns.
    pub winding: f64,
    /// `|F_{m/n}(x) − x|` in chart units.
    pub lifted_residual: f64,
    /// Largest `|ρ − ρ_inner|` over the orbit.
    pub radial_distance: f64,
    pub trace: f64,
    pub trace_defect: f64,
    pub negative_real_multiplier: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FmnReport {
    pub spec: FmnSpec,
    pub annulus: Annulus,
    /// `|nψ₀ − m|` with `ψ₀` the inner rotation number.
    pub gate_value: f64,
    pub gate_warning: bool,
    pub degenerate: bool,
    pub roots: Vec<FmnRoot>,
    pub rejected: usize,
    pub seed_branches: usize,
    pub seeds_per_branch: usize,
    pub max_radial_distance: Option<f64>,
    pub max_trace_defect: Option<f64>,
}

/// `F_{m/n}(x) − x` in chart coordinates, with `DF^n`.
fn lifted_defect(sys: &ReversibleSystem, chart: &AnnulusChart, spec: FmnSpec, x0: Point) -> Result<([f64; 2], Mat2, Point), KamError> {
    let mut x = x0;
    let mut m = Mat2::IDENTITY;
    let mut winding = 0.0;
    for i in 1..=spec.n {
        m = sys.jacobian(x)? * m;
        let y = sys.step(x)?;
        if !chart.contains(y) {
            return Err(KamError::ChartEscape { step: i, point: y });
        }
        winding += chart.lift_increment(x, y, i)?;
        x = y;
    }
    let (r0, _) = chart.coords(x0);
    let (r1, _) = chart.coords(x);
    Ok(([r1 - r0, winding - spec.m as f64], m, x))
}

fn is_degenerate(sys: &ReversibleSystem, chart: &AnnulusChart, spec: FmnSpec, annulus: &Annulus, tol: f64) -> bool {
    let (lo, hi) = annulus.rho_range();
    let probes = [(lo, 0.0), (0.5 * (lo + hi), 0.37), (hi, 0.71)];
    probes.iter().all(|&(r, t)| match lifted_defect(sys, chart, spec, chart.point(r, t)) {
        Ok((d, m, _)) => d[0].abs() <= tol && d[1].abs() <= tol && m.max_abs_diff(&Mat2::IDENTITY) <= 1e2 * tol,
        Err(_) => false,
    })
}

/// Fixed points of `F_{m/n}` in the annulus.
///
/// Seeds are laid along every branch of `Fix(g)` and `Fix(f∘g)` inside the
/// annulus; sign changes of the angular defect are refined by Brent's
/// method and polished by damped Newton on the full lifted equation.
pub fn find_fmn_fixed_points(
    sys: &ReversibleSystem,
    chart: &AnnulusChart,
    spec: FmnSpec,
    annulus: &Annulus,
    settings: &FmnSettings,
) -> Result<FmnReport, KamError> {
    if spec.n == 0 || spec.n > settings.n_cap {
        return Err(KamError::Precondition(format!("n = {} outside 1..={}", spec.n, settings.n_cap)));
    }
    let psi0 = annulus.inner.rotation.psi0;
    let gate_value = (spec.n as f64 * psi0 - spec.m as f64).abs();
    let mut report = FmnReport {
        spec,
        annulus: annulus.clone(),
        gate_value,
        gate_warning: false,
        degenerate: false,
        roots: Vec::new(),
        rejected: 0,
        seed_branches: 0,
        seeds_per_branch: settings.seeds_per_branch,
        max_radial_distance: None,
        max_trace_defect: None,
    };
    if is_degenerate(sys, chart, spec, annulus, settings.degenerate_tol) {
        report.degenerate = true;
        return Ok(report);
    }
    let (psi_lo, psi_hi) = annulus.rotation_range();
    if !(spec.ratio() > psi_lo && spec.ratio() < psi_hi) {
        return Err(KamError::Precondition(format!(
            "m/n = {}/{} not strictly between boundary rotation numbers {psi_lo:.12} and {psi_hi:.12}",
            spec.m, spec.n
        )));
    }
    if gate_value > 1.0 {
        match settings.gate {
            GatePolicy::Warn => {
                log::warn!("|nψ₀ − m| = {gate_value:.4} > 1 for {}/{}", spec.m, spec.n);
                report.gate_warning = true;
            }
            GatePolicy::Reject => {
                return Err(KamError::Precondition(format!("|nψ₀ − m| = {gate_value:.4} > 1 for {}/{}", spec.m, spec.n)));
            }
        }
    }

    let (rho_lo, rho_hi) = annulus.rho_range();
    let mut seeds = Vec::new();
    for id in [InvolutionId::G, InvolutionId::FG] {
        for branch in &sys.involution(id).fixed.branches {
            report.seed_branches += 1;
            let angular = |s: f64| -> f64 {
                let Ok(p) = branch.point(s) else { return f64::NAN };
                let (r, _) = chart.coords(p);
                if r < rho_lo || r > rho_hi || !chart.contains(p) {
                    return f64::NAN;
                }
                lifted_defect(sys, chart, spec, p).map(|(d, _, _)| d[1]).unwrap_or(f64::NAN)
            };
            let (s_lo, s_hi) = branch.s_range;
            for br in roots::scan_brackets(angular, s_lo, s_hi, settings.seeds_per_branch) {
                seeds.push((id, branch, br));
            }
        }
    }

    let candidates: Vec<Option<FmnRoot>> = seeds
        .par_iter()
        .map(|(id, branch, br)| {
            let angular = |s: f64| -> f64 {
                branch.point(s).ok().and_then(|p| lifted_defect(sys, chart, spec, p).ok()).map(|(d, _, _)| d[1]).unwrap_or(f64::NAN)
            };
            let out = roots::brent(angular, *br, 1e-15, 200)?;
            let p0 = branch.point(out.root).ok()?;
            build_root(sys, chart, spec, annulus, settings, p0, *id).ok().flatten()
        })
        .collect();
    let mut accepted: Vec<FmnRoot> = Vec::new();
    for c in candidates {
        match c {
            None => report.rejected += 1,
            Some(root) => {
                let duplicate = accepted.iter().any(|a| orbits::point_set_distance(sys, &a.orbit.points, &root.orbit.points) <= 1e-8);
                if !duplicate {
                    accepted.push(root);
                }
            }
        }
    }
    accepted.sort_by(|a, b| {
        let ka = chart.coords(a.orbit.points[0]).0;
        let kb = chart.coords(b.orbit.points[0]).0;
        ka.total_cmp(&kb)
    });
    report.max_radial_distance = accepted.iter().map(|r| r.radial_distance).reduce(f64::max);
    report.max_trace_defect = accepted.iter().map(|r| r.trace_defect).reduce(f64::max);
    report.roots = accepted;
    Ok(report)
}

fn build_root(
    sys: &ReversibleSystem,
    chart: &AnnulusChart,
    spec: FmnSpec,
    annulus: &Annulus,
    settings: &FmnSettings,
    p0: Point,
    id: InvolutionId,
) -> Result<Option<FmnRoot>, KamError> {
    let polished = orbits::newton_polish(sys, p0, spec.n, settings.newton_tol);
    let (d0, _, _) = lifted_defect(sys, chart, spec, p0)?;
    let (d1, _, _) = lifted_defect(sys, chart, spec, polished)?;
    let (p, d) = if d1[0].hypot(d1[1]) < d0[0].hypot(d0[1]) { (polished, d1) } else { (p0, d0) };
    let residual = d[0].hypot(d[1]);
    if residual > 10.0 * settings.newton_tol {
        return Ok(None);
    }
    let symmetry = match id {
        InvolutionId::G => Symmetry::ViaG,
        InvolutionId::FG => Symmetry::ViaFG,
    };
    let orbit = PeriodicOrbit::from_seed(sys, p, spec.n, symmetry, settings.classify_tol)?;
    let radial_distance = orbit.points.iter().map(|q| (chart.coords(*q).0 - annulus.inner.rho).abs()).fold(0.0, f64::max);
    let trace = orbit.monodromy.trace();
    let negative = |z: Complex64| z.im == 0.0 && z.re < 0.0;
    Ok(Some(FmnRoot {
        winding: d[1] + spec.m as f64,
        lifted_residual: residual,
        radial_distance,
        trace,
        trace_defect: (trace - 2.0).abs(),
        negative_real_multiplier: negative(orbit.multipliers.0) || negative(orbit.multipliers.1),
        orbit,
    }))
}

/// `F_{m/n}` roots for every `m` with `|nψ₀ − m| ≤ 1`, per denominator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FmnLevel {
    pub n: usize,
    pub reports: Vec<FmnReport>,
    pub max_radial_distance: Option<f64>,
    pub max_trace_defect: Option<f64>,
    pub root_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FmnStudy {
    pub levels: Vec<FmnLevel>,
    /// Log-log slope of the per-`n` maximal radial distance against `n`.
    pub radial_slope: Option<f64>,
}

/// Run [`find_fmn_fixed_points`] over `ns` on both sides of the reference
/// circle at `ρ = 0`, with outer boundaries at `rho_below < 0 < rho_above`.
pub fn fmn_study(
    sys: &ReversibleSystem,
    chart: &AnnulusChart,
    ns: &[usize],
    (rho_below, rho_above): (f64, f64),
    iterates: usize,
    settings: &FmnSettings,
) -> Result<FmnStudy, KamError> {
    if !(rho_below < 0.0 && rho_above > 0.0) {
        return Err(KamError::Precondition("need rho_below < 0 < rho_above".into()));
    }
    let below = Annulus::from_levels(sys, chart, 0.0, rho_below, 0.0, iterates)?;
    let above = Annulus::from_levels(sys, chart, 0.0, rho_above, 0.0, iterates)?;
    let psi0 = above.inner.rotation.psi0;
    let mut levels = Vec::new();
    for &n in ns {
        let nf = n as f64;
        let m_lo = (nf * psi0 - 1.0).ceil() as i64;
        let m_hi = (nf * psi0 + 1.0).floor() as i64;
        let mut reports = Vec::new();
        for m in m_lo..=m_hi {
            let spec = FmnSpec { m, n };
            let annulus = if spec.ratio() > psi0 { &above } else { &below };
            let (a, b) = annulus.rotation_range();
            match find_fmn_fixed_points(sys, chart, spec, annulus, settings) {
                Err(KamError::Precondition(_)) if spec.ratio() <= a || spec.ratio() >= b => continue,
                r => reports.push(r?),
            }
        }
        let max_radial_distance = reports.iter().filter_map(|r| r.max_radial_distance).reduce(f64::max);
        let max_trace_defect = reports.iter().filter_map(|r| r.max_trace_defect).reduce(f64::max);
        let root_count = reports.iter().map(|r| r.roots.len()).sum();
        levels.push(FmnLevel { n, reports, max_radial_distance, max_trace_defect, root_count });
    }
    let pairs: Vec<(f64, f64)> = levels.iter().filter_map(|l| l.max_radial_distance.map(|d| (l.n as f64, d))).collect();
    let radial_slope = if pairs.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        linalg::log_log_slope(&xs, &ys)
    } else {
        None
    };
    Ok(FmnStudy { levels, radial_slope })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragedSamples {
    pub rho: Vec<f64>,
    pub n_theta: usize,
}

impl AveragedSamples {
    /// `count` geometric offsets in `[lo, hi]`.
    pub fn geometric(lo: f64, hi: f64, count: usize, n_theta: usize) -> Self {
        let rho = (0..count).map(|i| lo * (hi / lo).powf(i as f64 / (count.max(2) - 1) as f64)).collect();
        AveragedSamples { rho, n_theta }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragedFit {
    /// Coefficients of `Ψ(ρ) = c₀ + c₁ρ + c₂ρ²`.
    pub psi_coeffs: Vec<f64>,
    pub rho: Vec<f64>,
    /// `max_θ |ρ̄ − ρ|` per offset.
    pub radial_residual: Vec<f64>,
    /// `max_θ |θ̄ − θ − Ψ(ρ)|` per offset.
    pub angular_residual: Vec<f64>,
    pub radial_slope: Option<f64>,
    pub angular_slope: Option<f64>,
    /// Residuals at rounding level everywhere.
    pub exact: bool,
    pub pass: bool,
}

pub const AVERAGED_SLOPE_MIN: f64 = 2.5;
const RESIDUAL_FLOOR: f64 = 1e-13;

/// One-step residuals of the model `ρ̄ = ρ`, `θ̄ = θ + Ψ(ρ)`.
pub fn averaged_form_fit(sys: &ReversibleSystem, chart: &AnnulusChart, samples: &AveragedSamples) -> Result<AveragedFit, KamError> {
    let mut distinct: Vec<f64> = samples.rho.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 || samples.n_theta == 0 {
        return Err(KamError::Precondition("averaged fit needs at least three distinct ρ offsets and n_theta ≥ 1".into()));
    }
    let mags: Vec<f64> = distinct.iter().map(|r| r.abs()).filter(|r| *r > 0.0).collect();
    let span = mags.iter().cloned().fold(0.0, f64::max) / mags.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(span >= 10.0 * (1.0 - 1e-12)) {
        return Err(KamError::Precondition(format!("ρ offsets must span a decade, got ratio {span:.3}")));
    }
    let mut rho_all = Vec::new();
    let mut adv_all = Vec::new();
    let mut radial = Vec::new();
    let mut steps = Vec::new();
    for &r in &samples.rho {
        let mut rad: f64 = 0.0;
        let mut row = Vec::with_capacity(samples.n_theta);
        for j in 0..samples.n_theta {
            let theta = j as f64 / samples.n_theta as f64;
            let p = chart.point(r, theta);
            let q = sys.step(p).map_err(|_| KamError::ChartEscape { step: 1, point: p })?;
            if !chart.contains(q) {
                return Err(KamError::ChartEscape { step: 1, point: q });
            }
            let (r1, _) = chart.coords(q);
            let adv = chart.lift_increment(p, q, 1)?;
            rad = rad.max((r1 - r).abs());
            rho_all.push(r);
            adv_all.push(adv);
            row.push(adv);
        }
        radial.push(rad);
        steps.push(row);
    }
    let psi_coeffs = linalg::poly_fit(&rho_all, &adv_all, 2).ok_or_else(|| KamError::Precondition("degenerate Ψ fit".into()))?;
    let angular: Vec<f64> = samples
        .rho
        .iter()
        .zip(&steps)
        .map(|(&r, row)| {
            let model = linalg::poly_eval(&psi_coeffs, r);
            row.iter().map(|a| (a - model).abs()).fold(0.0, f64::max)
        })
        .collect();
    let exact = radial.iter().chain(&angular).all(|v| *v <= RESIDUAL_FLOOR);
    let slope = |res: &[f64]| -> Option<f64> {
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            samples.rho.iter().zip(res).filter(|(r, v)| **r != 0.0 && **v > RESIDUAL_FLOOR).map(|(r, v)| (r.abs(), *v)).unzip();
        if xs.len() < 3 {
            None
        } else {
            linalg::log_log_slope(&xs, &ys)
        }
    };
    let radial_slope = slope(&radial);
    let angular_slope = slope(&angular);
    let pass = exact || (radial_slope.is_some_and(|s| s >= AVERAGED_SLOPE_MIN) && angular_slope.is_some_and(|s| s >= AVERAGED_SLOPE_MIN));
    Ok(AveragedFit {
        psi_coeffs,
        rho: samples.rho.clone(),
        radial_residual: radial,
        angular_residual: angular,
        radial_slope,
        angular_slope,
        exact,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{rigid_rotation, twist_std, TwistStd};

    const PSI0: f64 = 0.231_265_398_433_675_55;

    fn kam_system() -> ReversibleSystem {
        twist_std(0.0, 0.03, PSI0).unwrap()
    }

    fn kam_chart(sys: &ReversibleSystem) -> AnnulusChart {
        AnnulusChart::lift(sys, 2.0 * PI * PSI0).unwrap()
    }

    #[test]
    fn rigid_rotation_number_is_exact() {
        let sys = rigid_rotation(0.3 * 2.0 * PI);
        let chart = AnnulusChart::polar(Point::ORIGIN, 0.5);
        for x0 in [Point::new(0.5, 0.0), Point::new(-0.1, 0.3)] {
            let est = rotation_number(&sys, &chart, x0, 10_000).unwrap();
            assert!((est.psi0 - 0.3).abs() < 1e-10, "{}", est.psi0);
        }
    }

    #[test]
    fn rotation_stable_under_doubling_near_circle() {
        let sys = twist_std(0.1, 0.0, TwistStd::DEFAULT_OMEGA).unwrap();
        let chart = AnnulusChart::lift(&sys, 2.0 * PI * TwistStd::DEFAULT_OMEGA).unwrap();
        let x0 = chart.point(0.0, 0.0);
        let a = rotation_number(&sys, &chart, x0, 10_000).unwrap();
        let b = rotation_number(&sys, &chart, x0, 20_000).unwrap();
        assert!((a.psi0 - b.psi0).abs() < 1e-8, "{} vs {}", a.psi0, b.psi0);
        assert!(b.error < 1e-8);
    }

    #[test]
    fn island_orbit_locks_to_rational() {
        let sys = twist_std(0.5, 0.0, 0.0).unwrap();
        let chart = AnnulusChart::lift(&sys, 0.0).unwrap();
        let est = rotation_number(&sys, &chart, Point::new(PI + 0.1, 0.0), 10_000).unwrap();
        assert!(est.psi0.abs() < 1e-12, "{}", est.psi0);
    }

    #[test]
    fn polar_chart_flags_half_turn_steps() {
        let sys = rigid_rotation(PI);
        let chart = AnnulusChart::polar(Point::ORIGIN, 0.5);
        let err = rotation_number(&sys, &chart, Point::new(0.5, 0.0), 100).unwrap_err();
        assert!(matches!(err, KamError::WindingAmbiguity { step: 1, .. }));
    }

    #[test]
    fn chart_escape_is_reported() {
        let sys = kam_system();
        let chart = kam_chart(&sys).with_rho_max(0.1);
        let err = rotation_number(&sys, &chart, chart.point(0.5, 0.0), 100).unwrap_err();
        assert!(matches!(err, KamError::ChartEscape { step: 0, .. }));
    }

    #[test]
    fn g_image_rotates_backwards() {
        let sys = twist_std(0.1, 0.0, TwistStd::DEFAULT_OMEGA).unwrap();
        let chart = AnnulusChart::lift(&sys, 2.0 * PI * TwistStd::DEFAULT_OMEGA).unwrap();
        let orbit = lifted_orbit(&sys, &chart, chart.point(0.01, 0.1), 5000).unwrap();
        let image: Vec<Point> = orbit.points.iter().map(|p| sys.g.apply(*p).unwrap()).collect();
        let fwd = rotation_of_sequence(&chart, &orbit.points).unwrap();
        let back = rotation_of_sequence(&chart, &image).unwrap();
        assert!((fwd.psi0 + back.psi0).abs() < 1e-12);
    }

    #[test]
    fn diophantine_refuses_rationals() {
        match diophantine_check(0.5, 1.0, 100).unwrap() {
            DiophantineOutcome::Refusal { k, .. } => assert_eq!(k, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn golden_mean_constant_along_fibonacci() {
        let psi = (5f64.sqrt() - 1.0) / 2.0;
        let DiophantineOutcome::Certificate(cert) = diophantine_check(psi, 1.0, 100_000).unwrap() else { panic!() };
        let brute = (1..=100_000u64).map(|k| k as f64 * dist_to_integer(k as f64 * psi)).fold(f64::INFINITY, f64::min);
        assert_eq!(cert.k_constant, brute);
        let mut fib = vec![1u64, 2];
        while *fib.last().unwrap() < 100_000 {
            let n = fib[fib.len() - 1] + fib[fib.len() - 2];
            fib.push(n);
        }
        assert!(fib.contains(&cert.k_attaining), "k = {}", cert.k_attaining);
        assert!(verify_certificate(&cert));
    }

    #[test]
    fn diophantine_constant_non_increasing() {
        let psi = 2f64.sqrt() - 1.0;
        let mut prev = f64::INFINITY;
        for k_max in [1, 10, 100, 1000, 10_000] {
            let DiophantineOutcome::Certificate(c) = diophantine_check(psi, 1.0, k_max).unwrap() else { panic!() };
            assert!(c.k_constant <= prev);
            assert!(verify_certificate(&c));
            prev = c.k_constant;
        }
    }

    #[test]
    fn twist_matches_family_twist() {
        let sys = kam_system();
        let chart = kam_chart(&sys);
        let rep = twist_check(&sys, &chart, &TwistSettings::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::Pass);
        let analytic = 1.0 / (2.0 * PI);
        assert!((rep.slope - analytic).abs() < 1e-2 * analytic, "{}", rep.slope);
    }

    #[test]
    fn rigid_rotation_has_no_twist() {
        let sys = rigid_rotation(0.3 * 2.0 * PI);
        let chart = AnnulusChart::polar(Point::ORIGIN, 0.5);
        let s = TwistSettings { rho_lo: -0.1, rho_hi: 0.1, iterates: 2000, ..TwistSettings::default() };
        let rep = twist_check(&sys, &chart, &s).unwrap();
        assert_eq!(rep.verdict, Verdict::Fail);
    }

    #[test]
    fn twist_verdict_stable_under_doubling() {
        let sys = kam_system();
        let chart = kam_chart(&sys);
        let a = twist_check(&sys, &chart, &TwistSettings::default()).unwrap();
        let b = twist_check(&sys, &chart, &TwistSettings { steps: 10, ..TwistSettings::default() }).unwrap();
        assert_eq!(a.verdict, b.verdict);
    }

    #[test]
    fn fmn_roots_scale_like_one_over_n() {
        let sys = kam_system();
        let chart = kam_chart(&sys);
        let study = fmn_study(&sys, &chart, &[5, 8, 13, 21], (-0.9, 1.3), 20_000, &FmnSettings::default()).unwrap();
        for level in &study.levels {
            assert!(level.root_count > 0, "n = {}", level.n);
            for rep in &level.reports {
                for root in &rep.roots {
                    assert!(root.lifted_residual <= 1e-10);
                    assert_eq!(root.winding.round() as i64, rep.spec.m);
                    assert!(!root.negative_real_multiplier);
                    assert!(root.trace > 0.0);
                }
            }
        }
        let slope = study.radial_slope.unwrap();
        assert!((slope + 1.0).abs() <= 0.3, "{slope}");
    }

    #[test]
    fn rigid_rotation_resonance_is_degenerate() {
        let sys = rigid_rotation(2.0 * PI * 2.0 / 5.0);
        let chart = AnnulusChart::polar(Point::ORIGIN, 0.5);
        let annulus = Annulus::from_levels(&sys, &chart, -0.2, 0.2, 0.0, 1000).unwrap();
        let rep = find_fmn_fixed_points(&sys, &chart, FmnSpec { m: 2, n: 5 }, &annulus, &FmnSettings::default()).unwrap();
        assert!(rep.degenerate);
        assert!(rep.roots.is_empty());
    }

    #[test]
    fn fmn_outside_annulus_is_rejected() {
        let sys = kam_system();
        let chart = kam_chart(&sys);
        let annulus = Annulus::from_levels(&sys, &chart, 0.0, 0.5, 0.0, 5000).unwrap();
        let err = find_fmn_fixed_points(&sys, &chart, FmnSpec { m: 1, n: 5 }, &annulus, &FmnSettings::default()).unwrap_err();
        assert!(matches!(err, KamError::Precondition(_)));
        let err = find_fmn_fixed_points(&sys, &chart, FmnSpec { m: 30, n: 100 }, &annulus, &FmnSettings::default()).unwrap_err();
        assert!(matches!(err, KamError::Precondition(_)));
    }

    #[test]
    fn averaged_form_cubic_near_circle() {
        let sys = kam_system();
        let chart = kam_chart(&sys);
        let fit = averaged_form_fit(&sys, &chart, &AveragedSamples::geometric(0.01, 0.1, 6, 64)).unwrap();
        assert!(fit.pass);
        for s in [fit.radial_slope.unwrap(), fit.angular_slope.unwrap()] {
            assert!((2.5..=3.5).contains(&s), "{s}");
        }
    }

    #[test]
    fn averaged_form_off_circle_fails() {
        let sys = kam_system();
        let chart = AnnulusChart::lift(&sys, 2.0 * PI * PSI0 + 0.2).unwrap();
        let fit = averaged_form_fit(&sys, &chart, &AveragedSamples::geometric(0.01, 0.1, 6, 64)).unwrap();
        assert!(!fit.pass);
        assert!(fit.radial_slope.unwrap() < 2.5);
    }

    #[test]
    fn averaged_form_rigid_rotation_is_exact() {
        let sys = rigid_rotation(0.3 * 2.0 * PI);
        let chart = AnnulusChart::polar(Point::ORIGIN, 0.5);
        let fit = averaged_form_fit(&sys, &chart, &AveragedSamples::geometric(0.01, 0.1, 4, 16)).unwrap();
        assert!(fit.exact && fit.pass);
        assert!((fit.psi_coeffs[0] - 0.3).abs() < 1e-13);
        assert!(fit.psi_coeffs[1].abs() < 1e-10 && fit.psi_coeffs[2].abs() < 1e-9);
    }

    #[test]
    fn averaged_form_needs_distinct_offsets() {
        let sys = kam_system();
        let chart = kam_chart(&sys);
        let s = AveragedSamples { rho: vec![0.05; 4], n_theta: 8 };
        assert!(matches!(averaged_form_fit(&sys, &chart, &s), Err(KamError::Precondition(_))));
    }
}
