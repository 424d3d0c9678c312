//! Parameter sweeps over the normal-form flows and map-level confirmation.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Mat2;
use crate::normal_form::{
    find_equilibria, find_equilibria_with, monodromy_offset, Equilibrium, EquilibriumSearch, EquilibriumType, FlowSettings, NfError,
    ResonantParams,
};
use crate::orbits::{classify, detect_symmetry, g_pair_with, Classification, OrbitError, PeriodicOrbit};
use crate::roots;
use crate::system::{nf_map, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScanError {
    #[error(transparent)]
    Nf(#[from] NfError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("Newton refinement diverged; residual history {history:?}")]
    NewtonDivergence { history: Vec<f64> },
    #[error("sink claimed although B(B−C) = {criterion} ≤ 0: {detail}")]
    Counterexample { criterion: f64, detail: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquilibriumCounts {
    pub symmetric: usize,
    pub asymmetric: usize,
    pub saddles: usize,
    pub centers: usize,
    pub sinks: usize,
    pub sources: usize,
    pub degenerate: usize,
}

impl EquilibriumCounts {
    pub fn of(eqs: &[Equilibrium]) -> Self {
        let mut c = EquilibriumCounts::default();
        for e in eqs {
            if e.symmetric {
                c.symmetric += 1;
            } else {
                c.asymmetric += 1;
            }
            match e.kind {
                EquilibriumType::Saddle => c.saddles += 1,
                EquilibriumType::Center => c.centers += 1,
                EquilibriumType::Sink => c.sinks += 1,
                EquilibriumType::Source => c.sources += 1,
                EquilibriumType::Degenerate => c.degenerate += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.symmetric + self.asymmetric
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    SaddleCenterBirth,
    Pitchfork,
    SinkSourceOnset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BifurcationEvent {
    pub kind: EventKind,
    /// Swept parameter.
    pub axis: String,
    /// `(before, after)` parameter values bracketing the event.
    pub bracket: (f64, f64),
    /// Values of the other grid axes at the event.
    pub fixed: Vec<(String, f64)>,
    pub before: EquilibriumCounts,
    pub after: EquilibriumCounts,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn check_range(range: (f64, f64), n: usize, what: &str) -> Result<(), ScanError> {
    if n < 2 {
        return Err(ScanError::InvalidGrid(format!("{what} resolution must be ≥ 2 (got {n})")));
    }
    if !(range.0.is_finite() && range.1.is_finite() && range.0 < range.1) {
        return Err(ScanError::InvalidGrid(format!("{what} range {range:?} must be finite and ordered")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuRow {
    pub mu: f64,
    pub counts: EquilibriumCounts,
    /// Solver failure at this grid point, if any.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuSweep {
    pub rows: Vec<MuRow>,
    pub events: Vec<BifurcationEvent>,
}

/// Count equilibria along a μ grid and bracket the birth of the
/// saddle/center pairs.
pub fn mu_sweep(base: &ResonantParams, mu_range: (f64, f64), resolution: usize) -> Result<MuSweep, ScanError> {
    check_range(mu_range, resolution, "μ")?;
    if !base.is_conservative() {
        return Err(ScanError::Precondition("μ sweep needs B = C = 0".into()));
    }
    if base.psi1() == 0.0 || base.a == 0.0 {
        return Err(ScanError::Precondition("μ sweep needs Ψ₁ ≠ 0 and A ≠ 0".into()));
    }
    let rows: Vec<MuRow> = linspace(mu_range.0, mu_range.1, resolution)
        .into_par_iter()
        .map(|mu| match find_equilibria(&base.with_mu(mu)) {
            Ok(eqs) => MuRow { mu, counts: EquilibriumCounts::of(&eqs), error: None },
            Err(e) => MuRow { mu, counts: EquilibriumCounts::default(), error: Some(e.to_string()) },
        })
        .collect();
    let mut events = Vec::new();
    for w in rows.windows(2) {
        if w[0].error.is_some() || w[1].error.is_some() {
            continue;
        }
        if w[0].counts.total() != w[1].counts.total() {
            events.push(BifurcationEvent {
                kind: EventKind::SaddleCenterBirth,
                axis: "mu".into(),
                bracket: (w[0].mu, w[1].mu),
                fixed: vec![("a".into(), base.a), ("psi1".into(), base.psi1())],
                before: w[0].counts,
                after: w[1].counts,
            });
        }
    }
    Ok(MuSweep { rows, events })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PitchforkCell {
    pub mu: f64,
    pub a: f64,
    pub counts: EquilibriumCounts,
    pub error: Option<String>,
}

/// The μ-interval of asymmetric equilibria at one value of `A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymmetricInterval {
    pub a: f64,
    /// Inner (asymmetric present) and outer bracket ends on each side.
    pub lower: (f64, f64),
    pub upper: (f64, f64),
    pub center: f64,
    pub width: f64,
    /// `AΨ₁/(C−B)`.
    pub predicted_center: f64,
    /// Smallest `|λ|max` among symmetric equilibria just outside each
    /// boundary, relative to the asymmetric rates inside; vanishes at a
    /// pitchfork.
    pub boundary_eigen_ratio: (f64, f64),
    pub inside: EquilibriumCounts,
}

impl AsymmetricInterval {
    pub fn contains_prediction(&self) -> bool {
        self.lower.0 <= self.predicted_center && self.predicted_center <= self.upper.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PitchforkScan {
    pub cells: Vec<PitchforkCell>,
    pub intervals: Vec<AsymmetricInterval>,
    pub events: Vec<BifurcationEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PitchforkGrid {
    pub mu_range: (f64, f64),
    pub mu_resolution: usize,
    pub a_values: Vec<f64>,
}

fn asym_count(base: &ResonantParams, mu: f64, a: f64) -> usize {
    let p = ResonantParams { mu, a, ..base.clone() };
    find_equilibria(&p).map(|e| EquilibriumCounts::of(&e).asymmetric).unwrap_or(0)
}

/// `(μ, A)` grid scan of the degenerate form plus seeded localization of the
/// asymmetric-equilibrium interval for every `A`.
///
/// The interval is usually far narrower than any practical μ grid, so each
/// `A` row is seeded at `−Ψ(ρ_a)` with `ρ_a² = A/(B−C)` (which is `AΨ₁/(C−B)`
/// when only `Ψ₁` is set) and its ends are located by bisection on the
/// asymmetric count.
pub fn pitchfork_scan(base: &ResonantParams, grid: &PitchforkGrid) -> Result<PitchforkScan, ScanError> {
    check_range(grid.mu_range, grid.mu_resolution, "μ")?;
    if grid.a_values.is_empty() {
        return Err(ScanError::InvalidGrid("A grid is empty".into()));
    }
    if base.b == base.c {
        return Err(ScanError::Precondition("pitchfork scan needs B ≠ C".into()));
    }
    if base.psi1() == 0.0 {
        return Err(ScanError::Precondition("pitchfork scan needs Ψ₁ ≠ 0".into()));
    }
    let mus = linspace(grid.mu_range.0, grid.mu_range.1, grid.mu_resolution);
    let work: Vec<(f64, f64)> = grid.a_values.iter().flat_map(|&a| mus.iter().map(move |&m| (m, a))).collect();
    let cells: Vec<PitchforkCell> = work
        .into_par_iter()
        .map(|(mu, a)| {
            let p = ResonantParams { mu, a, ..base.clone() };
            match find_equilibria(&p) {
                Ok(eqs) => PitchforkCell { mu, a, counts: EquilibriumCounts::of(&eqs), error: None },
                Err(e) => PitchforkCell { mu, a, counts: EquilibriumCounts::default(), error: Some(e.to_string()) },
            }
        })
        .collect();

    let mut events = Vec::new();
    for w in cells.windows(2) {
        if w[0].a == w[1].a && w[0].counts.asymmetric != w[1].counts.asymmetric {
            events.push(BifurcationEvent {
                kind: EventKind::Pitchfork,
                axis: "mu".into(),
                bracket: (w[0].mu, w[1].mu),
                fixed: vec![("a".into(), w[0].a)],
                before: w[0].counts,
                after: w[1].counts,
            });
        }
    }

    let intervals: Vec<Option<AsymmetricInterval>> = grid.a_values.par_iter().map(|&a| locate_interval(base, a)).collect();
    let intervals: Vec<AsymmetricInterval> = intervals.into_iter().flatten().collect();
    for iv in &intervals {
        let fixed = vec![("a".to_string(), iv.a)];
        let outside = |mu: f64| {
            let p = ResonantParams { mu, a: iv.a, ..base.clone() };
            find_equilibria(&p).map(|e| EquilibriumCounts::of(&e)).unwrap_or_default()
        };
        let (lo_out, hi_out) = (outside(iv.lower.1), outside(iv.upper.1));
        events.push(BifurcationEvent {
            kind: EventKind::Pitchfork,
            axis: "mu".into(),
            bracket: (iv.lower.1, iv.lower.0),
            fixed: fixed.clone(),
            before: lo_out,
            after: iv.inside,
        });
        if iv.inside.sinks > 0 && iv.inside.sinks == iv.inside.sources {
            events.push(BifurcationEvent {
                kind: EventKind::SinkSourceOnset,
                axis: "mu".into(),
                bracket: (iv.lower.1, iv.lower.0),
                fixed: fixed.clone(),
                before: lo_out,
                after: iv.inside,
            });
        }
        events.push(BifurcationEvent {
            kind: EventKind::Pitchfork,
            axis: "mu".into(),
            bracket: (iv.upper.0, iv.upper.1),
            fixed,
            before: iv.inside,
            after: hi_out,
        });
    }
    Ok(PitchforkScan { cells, intervals, events })
}

fn boundary_ratio(base: &ResonantParams, mu: f64, a: f64, interior: f64) -> f64 {
    let p = ResonantParams { mu, a, ..base.clone() };
    let Ok(eqs) = find_equilibria_with(&p, &EquilibriumSearch::default()) else { return f64::NAN };
    eqs.iter().filter(|e| e.symmetric).map(|e| e.eigenvalues.0.norm().max(e.eigenvalues.1.norm()) / interior).fold(f64::NAN, f64::min)
}

fn locate_interval(base: &ResonantParams, a: f64) -> Option<AsymmetricInterval> {
    let denom = base.b - base.c;
    if a == 0.0 || !(a / denom > 0.0) {
        return None;
    }
    let predicted = a * base.psi1() / (base.c - base.b);
    let rho_a = (a / denom).sqrt();
    let seed = -base.psi_poly(rho_a);
    if asym_count(base, seed, a) == 0 {
        return None;
    }
    let detector = |mu: f64| asym_count(base, mu, a) > 0;
    let expand = |dir: f64| -> Option<f64> {
        let mut step = 1e-3 * seed.abs().max(1e-300);
        for _ in 0..200 {
            let mu = seed + dir * step;
            if !detector(mu) {
                return Some(mu);
            }
            step *= 2.0;
        }
        None
    };
    let (out_lo, out_hi) = (expand(-1.0)?, expand(1.0)?);
    let lower = roots::bisect_detector(detector, seed, out_lo, &true, 0.0, 200);
    let upper = roots::bisect_detector(detector, seed, out_hi, &true, 0.0, 200);
    let mid = 0.5 * (lower.0 + upper.0);
    let inside = {
        let p = ResonantParams { mu: mid, a, ..base.clone() };
        find_equilibria(&p).unwrap_or_default()
    };
    let interior = inside.iter().filter(|e| !e.symmetric).map(|e| e.eigenvalues.0.norm().max(e.eigenvalues.1.norm())).fold(0.0, f64::max);
    Some(AsymmetricInterval {
        a,
        lower,
        upper,
        center: mid,
        width: upper.0 - lower.0,
        predicted_center: predicted,
        boundary_eigen_ratio: (boundary_ratio(base, lower.1, a, interior), boundary_ratio(base, upper.1, a, interior)),
        inside: EquilibriumCounts::of(&inside),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinkSourceCertificate {
    /// `B(B−C)`.
    pub criterion: f64,
    pub certified: bool,
    pub sink: Option<Equilibrium>,
    pub source: Option<Equilibrium>,
    pub delta: f64,
    /// Sum of the sorted real parts of sink and source eigenvalues.
    pub real_part_asymmetry: f64,
    pub reason: String,
}

/// Relative δ-margin on eigenvalue real parts.
pub const SINK_SOURCE_DELTA: f64 = 1e-10;

fn sorted_re(e: &Equilibrium) -> [f64; 2] {
    let mut r = [e.eigenvalues.0.re, e.eigenvalues.1.re];
    r.sort_by(f64::total_cmp);
    r
}

/// Certify an asymmetric sink together with its reversor-image source.
pub fn certify_sink_source(params: &ResonantParams) -> Result<SinkSourceCertificate, ScanError> {
    let eqs = find_equilibria(params)?;
    let asym: Vec<&Equilibrium> = eqs.iter().filter(|e| !e.symmetric).collect();
    if asym.is_empty() {
        return Err(ScanError::Precondition("no asymmetric equilibria".into()));
    }
    let criterion = params.b * (params.b - params.c);
    let rho = asym[0].rho;
    let rate = rho.powi(params.q as i32 - 2) * (params.a.abs() + (params.b.abs() + params.c.abs()) * rho * rho);
    let delta = SINK_SOURCE_DELTA * rate;
    let sink = asym.iter().find(|e| e.kind == EquilibriumType::Sink).copied();
    if criterion <= 0.0 {
        if let Some(s) = sink {
            return Err(ScanError::Counterexample { criterion, detail: format!("sink at ρ = {}, φ = {}", s.rho, s.phi) });
        }
        return Ok(SinkSourceCertificate {
            criterion,
            certified: false,
            sink: None,
            source: None,
            delta,
            real_part_asymmetry: f64::NAN,
            reason: format!("B(B−C) = {criterion} ≤ 0; asymmetric equilibria are {}", asym[0].kind),
        });
    }
    let Some(sink) = sink else {
        return Ok(SinkSourceCertificate {
            criterion,
            certified: false,
            sink: None,
            source: None,
            delta,
            real_part_asymmetry: f64::NAN,
            reason: "no asymmetric equilibrium classified as sink".into(),
        });
    };
    let image_theta = (-sink.theta).rem_euclid(2.0 * std::f64::consts::PI);
    let source = asym
        .iter()
        .min_by(|a, b| {
            let da = (a.rho - sink.rho).abs() + angle_gap(a.theta, image_theta);
            let db = (b.rho - sink.rho).abs() + angle_gap(b.theta, image_theta);
            da.total_cmp(&db)
        })
        .copied()
        .unwrap();
    let (rs, ru) = (sorted_re(sink), sorted_re(source));
    let asymmetry = (rs[0] + ru[1]).abs().max((rs[1] + ru[0]).abs());
    let certified = rs[1] < -delta && ru[0] > delta && source.kind == EquilibriumType::Source;
    Ok(SinkSourceCertificate {
        criterion,
        certified,
        sink: Some(sink.clone()),
        source: Some(source.clone()),
        delta,
        real_part_asymmetry: asymmetry,
        reason: if certified { "sink/source pair certified".into() } else { "real parts inside the δ-margin".into() },
    })
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * std::f64::consts::PI);
    d.min(2.0 * std::f64::consts::PI - d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapConfirmation {
    pub orbit: PeriodicOrbit,
    pub flow_kind: EquilibriumType,
    pub map_class: Classification,
    pub matches: bool,
    /// `min | |λ| − 1 |`.
    pub delta: f64,
    /// Collar used for the map-level classification.
    pub collar: f64,
    /// `|λγ − 1|`.
    pub reciprocity: f64,
    pub residual_history: Vec<f64>,
}

/// Whether a flow class and a map class agree.
pub fn classes_agree(flow: EquilibriumType, map: &Classification) -> bool {
    matches!(
        (flow, map),
        (EquilibriumType::Center, Classification::Elliptic { .. })
            | (EquilibriumType::Saddle, Classification::Saddle)
            | (EquilibriumType::Sink, Classification::Sink)
            | (EquilibriumType::Source, Classification::Source)
    )
}

/// Monodromy of the period-`q` orbit through `x0` of the nf Poincaré map:
/// orbit points, `T^q(x0)`, `DT^q(x0)` and its eigenvalues.
///
/// Because `R^q = I`, `DT^q = I + K` with `K` accumulated in offset form, and
/// the multipliers are `1 + eig(K)`. Forming `I + K` first would round away
/// the `~ρ^q` contraction of slow orbits.
#[allow(clippy::type_complexity)]
pub fn nf_period_q_monodromy(
    params: &ResonantParams,
    settings: &FlowSettings,
    x0: Point,
) -> Result<(Vec<Point>, Point, Mat2, (Complex64, Complex64)), ScanError> {
    let q = params.q as usize;
    let (pts, end, k) = monodromy_offset(params, Complex64::new(x0.x, x0.y), q, settings).map_err(NfError::from)?;
    let (e1, e2) = k.eigenvalues();
    let one = Complex64::new(1.0, 0.0);
    let mults = (one + e1, one + e2);
    let mults = if mults.1.norm() > mults.0.norm() { (mults.1, mults.0) } else { mults };
    Ok((pts.iter().map(|z| Point::new(z.re, z.im)).collect(), Point::new(end.re, end.im), Mat2::IDENTITY + k, mults))
}

/// Seed a `T`-orbit at a flow equilibrium, refine the period-`q` point, and
/// compare its multipliers with the flow classification.
///
/// The multipliers of `T^q` at an equilibrium are `exp(q·λ)` for the flow
/// eigenvalues `λ`. Dissipative orbits therefore sit within `~qρ^q` of the
/// unit circle, so the collar is the smaller of 1e−6 and a tenth of that
/// predicted offset.
pub fn map_level_confirm(params: &ResonantParams, eq: &Equilibrium, settings: &FlowSettings) -> Result<MapConfirmation, ScanError> {
    let sys = nf_map(params.clone(), *settings);
    let z = eq.z();
    let mut x = Point::new(z.re, z.im);
    let tol = 1e-12;
    let mut history = Vec::new();
    loop {
        let (_, end, m, _) = nf_period_q_monodromy(params, settings, x)?;
        let r = [end.x - x.x, end.y - x.y];
        let norm = r[0].hypot(r[1]);
        history.push(norm);
        if norm <= tol {
            break;
        }
        let diverging = history.len() >= 2 && norm > 10.0 * history[history.len() - 2];
        if diverging || history.len() > 20 {
            return Err(ScanError::NewtonDivergence { history });
        }
        let Some(step) = (m - Mat2::IDENTITY).solve(r) else {
            return Err(ScanError::NewtonDivergence { history });
        };
        x = Point::new(x.x - step[0], x.y - step[1]);
    }
    let (points, end, m, multipliers) = nf_period_q_monodromy(params, settings, x)?;
    let predicted = {
        let (l1, l2) = eq.eigenvalues;
        let f = |l: Complex64| (params.q as f64 * l.re).exp_m1().abs();
        f(l1).max(f(l2))
    };
    let collar = if eq.kind == EquilibriumType::Center { 1e-6 } else { 1e-6_f64.min(0.1 * predicted) };
    let symmetry = detect_symmetry(&sys, &points, 1e-8).map_err(OrbitError::from)?;
    let map_class = classify(multipliers, collar);
    let (l, g) = multipliers;
    let orbit = PeriodicOrbit {
        closure: sys.distance(end, x),
        period: points.len(),
        points,
        monodromy: m,
        multipliers,
        jacobian_product: (l * g).re,
        classification: map_class,
        symmetry,
        s_root: None,
    };
    Ok(MapConfirmation {
        delta: orbit.modulus_margin(),
        reciprocity: ((l * g) - 1.0).norm(),
        matches: classes_agree(eq.kind, &map_class),
        flow_kind: eq.kind,
        map_class,
        collar,
        orbit,
        residual_history: history,
    })
}

/// `g`-image of a confirmed nf orbit, with the offset-form monodromy.
pub fn nf_g_pair(
    params: &ResonantParams,
    settings: &FlowSettings,
    orbit: &PeriodicOrbit,
    tol: f64,
    collar: f64,
) -> Result<PeriodicOrbit, ScanError> {
    let sys = nf_map(params.clone(), *settings);
    let out = g_pair_with(&sys, orbit, tol, collar, |pts| {
        let (_, _, m, mults) = nf_period_q_monodromy(params, settings, pts[0]).map_err(|e| match e {
            ScanError::Orbit(o) => o,
            other => OrbitError::InvalidWindow(other.to_string()),
        })?;
        Ok((m, mults))
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conservative(psi1: f64, a: f64) -> ResonantParams {
        ResonantParams::new(1, 5, 0.0, vec![psi1], a, 0.0, 0.0).unwrap()
    }

    fn degenerate(b: f64, c: f64, a: f64, mu: f64) -> ResonantParams {
        ResonantParams::new(1, 6, mu, vec![1.0], a, b, c).unwrap()
    }

    #[test]
    fn mu_sweep_brackets_zero() {
        let out = mu_sweep(&conservative(1.0, 1.0), (-0.02, 0.02), 41).unwrap();
        assert_eq!(out.events.len(), 1);
        let (a, b) = out.events[0].bracket;
        assert!(a <= 0.0 && 0.0 <= b && a < b);
        let at = |mu: f64| out.rows.iter().find(|r| (r.mu - mu).abs() < 1e-12).unwrap().counts;
        assert_eq!(at(-0.01).total(), 10);
        assert_eq!(at(0.01).total(), 0);
        for r in out.rows.iter().filter(|r| r.counts.total() > 0) {
            assert_eq!((r.counts.saddles, r.counts.centers), (5, 5));
        }
    }

    #[test]
    fn negative_psi1_flips_side() {
        let out = mu_sweep(&conservative(-1.0, -1.0), (-0.02, 0.02), 41).unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.rows.first().unwrap().counts.total(), 0);
        assert_eq!(out.rows.last().unwrap().counts.total(), 10);
    }

    #[test]
    fn refining_grid_keeps_event_count() {
        let a = mu_sweep(&conservative(1.0, 1.0), (-0.02, 0.015), 8).unwrap();
        let b = mu_sweep(&conservative(1.0, 1.0), (-0.02, 0.015), 15).unwrap();
        assert_eq!(a.events.len(), b.events.len());
        let wa = a.events[0].bracket.1 - a.events[0].bracket.0;
        let wb = b.events[0].bracket.1 - b.events[0].bracket.0;
        assert!(wb < wa);
    }

    #[test]
    fn pitchfork_interval_around_prediction() {
        let base = degenerate(1.0, -1.0, 0.0, 0.0);
        let grid = PitchforkGrid { mu_range: (-2e-4, 0.0), mu_resolution: 5, a_values: vec![2e-4, 0.0] };
        let out = pitchfork_scan(&base, &grid).unwrap();
        assert_eq!(out.intervals.len(), 1);
        let iv = &out.intervals[0];
        assert!(iv.contains_prediction());
        assert!((iv.predicted_center + 1e-4).abs() < 1e-18);
        assert!((iv.width - 4e-12).abs() < 1e-14, "{}", iv.width);
        assert_eq!((iv.inside.sinks, iv.inside.sources), (6, 6));
        assert!(iv.boundary_eigen_ratio.0 < 1e-3 && iv.boundary_eigen_ratio.1 < 1e-3);
        assert!(out.events.iter().any(|e| e.kind == EventKind::SinkSourceOnset));
        assert!(out.cells.iter().filter(|c| c.a == 0.0).all(|c| c.counts.asymmetric == 0));
        assert!(out.cells.iter().all(|c| c.counts.sinks == c.counts.sources));
    }

    #[test]
    fn interval_width_shrinks_with_a() {
        let base = degenerate(1.0, -1.0, 0.0, 0.0);
        let a_values: Vec<f64> = (0..5).map(|j| 2e-4 * 0.5f64.powi(j)).collect();
        let grid = PitchforkGrid { mu_range: (-2e-4, 0.0), mu_resolution: 3, a_values };
        let out = pitchfork_scan(&base, &grid).unwrap();
        assert_eq!(out.intervals.len(), 5);
        for w in out.intervals.windows(2) {
            assert!(w[1].width < w[0].width);
        }
    }

    #[test]
    fn sink_source_certified_when_criterion_positive() {
        let cert = certify_sink_source(&degenerate(1.0, -1.0, 2e-4, -1e-4)).unwrap();
        assert!(cert.certified, "{}", cert.reason);
        assert!(cert.real_part_asymmetry <= 1e-8);
        assert!(cert.delta > 0.0);
    }

    #[test]
    fn zero_b_gives_no_certificate() {
        assert!(matches!(certify_sink_source(&degenerate(0.0, -1.0, 2e-4, -1e-4)), Err(ScanError::Precondition(_))));
    }

    #[test]
    fn swapping_b_and_c_flips_certification() {
        let yes = certify_sink_source(&degenerate(1.0, 0.5, 1e-4, -2e-4)).unwrap();
        assert!(yes.certified);
        let no = certify_sink_source(&degenerate(0.5, 1.0, -1e-4, -2e-4)).unwrap();
        assert!(!no.certified);
        assert!(no.criterion < 0.0);
    }
}
