//! One function per subcommand. Each writes its data files and figures
//! into the bundle and returns a one-line summary.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{ChartSpec, OpConfig, RunConfig};
use super::report::{num, ReportBundle};
use super::svg::{Axis, Plot, PALETTE};
use super::CliError;
use crate::kam::{self, Annulus, AnnulusChart, AveragedSamples, DiophantineOutcome, FmnSettings, FmnSpec, FmnStudy, TwistSettings};
use crate::linalg;
use crate::normal_form::{
    find_equilibria, find_equilibria_with, pendulum_deviation, portrait, Equilibrium, EquilibriumSearch, FlowSettings, PendulumBox,
    ResonantParams,
};
use crate::orbits::{find_symmetric_periodic, PeriodicOrbit, SymmetrySearchWindow};
use crate::resonance_scan::{
    certify_sink_source, map_level_confirm, mu_sweep, nf_g_pair, pitchfork_scan, EquilibriumCounts, PitchforkGrid,
};
use crate::system::{check_involution, check_reversibility, ReversibleSystem};

/// Acceptance band for the pendulum-limit slope.
pub const PENDULUM_SLOPE_BAND: (f64, f64) = (0.15, 0.35);

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

fn system(cfg: &RunConfig) -> Result<ReversibleSystem, CliError> {
    let spec = cfg.system.as_ref().ok_or_else(|| CliError::Validation(vec!["[system]: section required".into()]))?;
    spec.build().map_err(|e| CliError::Validation(vec![e.to_string()]))
}

fn nf_params(cfg: &RunConfig) -> Result<ResonantParams, CliError> {
    cfg.resonant_params().ok_or_else(|| CliError::Validation(vec!["system: normal-form parameters required".into()]))
}

fn flow_settings(cfg: &RunConfig) -> FlowSettings {
    let mut s = FlowSettings::default();
    if let Some(spec) = &cfg.system {
        if let Some(t) = spec.params.get("tol") {
            s.control.tol = *t;
        }
        if let Some(g) = spec.params.get("guard") {
            s.guard_radius = *g;
        }
    }
    s
}

fn chart(sys: &ReversibleSystem, spec: &ChartSpec) -> Result<AnnulusChart, CliError> {
    match *spec {
        ChartSpec::Lift { level, rho_max } => {
            let c = AnnulusChart::lift(sys, level).map_err(|e| CliError::Validation(vec![format!("op.chart: {e}")]))?;
            Ok(rho_max.map_or(c, |r| c.with_rho_max(r)))
        }
        ChartSpec::Polar { center, radius, rho_max } => {
            let c = AnnulusChart::polar(crate::system::Point::new(center[0], center[1]), radius);
            Ok(rho_max.map_or(c, |r| c.with_rho_max(r)))
        }
    }
}

fn cplx(z: Complex64) -> [String; 2] {
    [num(z.re), num(z.im)]
}

fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

pub fn run(cfg: &RunConfig, b: &mut ReportBundle) -> Result<String, CliError> {
    match &cfg.op {
        OpConfig::CheckRev { samples, tol } => check_rev(cfg, b, *samples, *tol),
        OpConfig::FindSymOrbits { .. } => find_sym_orbits(cfg, b),
        OpConfig::NfPortrait { rho_lo, rho_hi, n_rho, n_phi } => nf_portrait(cfg, b, (*rho_lo, *rho_hi), *n_rho, *n_phi),
        OpConfig::NfEquilibria { rho_max, scan_points } => nf_equilibria(cfg, b, *rho_max, *scan_points),
        OpConfig::PendulumCheck { .. } => pendulum_check(cfg, b),
        OpConfig::MuSweep { mu_lo, mu_hi, resolution } => sweep(cfg, b, (*mu_lo, *mu_hi), *resolution),
        OpConfig::PitchforkScan { mu_lo, mu_hi, mu_resolution, a_values } => {
            pitchfork(cfg, b, PitchforkGrid { mu_range: (*mu_lo, *mu_hi), mu_resolution: *mu_resolution, a_values: a_values.clone() })
        }
        OpConfig::CertifySinkSource => certify(cfg, b),
        OpConfig::MapConfirm { pair_tol } => map_confirm(cfg, b, *pair_tol),
        OpConfig::Rotation { chart: c, rho, theta, iterates } => rotation(cfg, b, c, *rho, *theta, *iterates),
        OpConfig::Diophantine { psi0, alpha, k_max } => diophantine(b, *psi0, *alpha, *k_max),
        OpConfig::Twist { .. } => twist(cfg, b),
        OpConfig::FmnRoots { .. } => fmn_roots(cfg, b),
        OpConfig::AveragedFit { chart: c, rho_lo, rho_hi, count, n_theta } => averaged(cfg, b, c, (*rho_lo, *rho_hi), *count, *n_theta),
    }
}

fn check_rev(cfg: &RunConfig, b: &mut ReportBundle, n: usize, tol: f64) -> Result<String, CliError> {
    let sys = system(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples = sys.random_samples(n, &mut rng);
    let rev = check_reversibility(&sys, &samples, tol);
    let g = check_involution(&sys.g, &samples, tol).map_err(numerical)?;
    let h2 = check_involution(&sys.h2, &samples, tol.max(sys.identity_tol)).map_err(numerical)?;
    let rows: Vec<Vec<String>> = samples.iter().enumerate().map(|(i, p)| vec![i.to_string(), num(p.x), num(p.y)]).collect();
    b.csv("samples.csv", &["index", "x", "y"], &rows)?;
    let pass = rev.pass && g.pass && h2.pass;
    b.json(
        "check.json",
        &json!({
            "system": sys.name,
            "params": sys.params,
            "tol": tol,
            "reversibility": rev,
            "g_involution": g,
            "fg_involution": h2,
            "pass": pass,
        }),
    )?;
    Ok(format!(
        "check-rev {}: {} (max |fgfg − id| = {:e}, {} evaluated, {} skipped)",
        sys.name,
        if pass { "pass" } else { "fail" },
        rev.max_residual,
        rev.evaluated,
        rev.skipped
    ))
}

fn orbit_rows(orbits: &[PeriodicOrbit]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (i, o) in orbits.iter().enumerate() {
        for (j, p) in o.points.iter().enumerate() {
            let [l1r, l1i] = cplx(o.multipliers.0);
            let [l2r, l2i] = cplx(o.multipliers.1);
            rows.push(vec![
                i.to_string(),
                j.to_string(),
                num(p.x),
                num(p.y),
                o.period.to_string(),
                o.classification.label().into(),
                o.symmetry.label().into(),
                l1r,
                l1i,
                l2r,
                l2i,
                num(o.monodromy.trace()),
                num(o.closure),
            ]);
        }
    }
    rows
}

/// Column names of orbit tables.
pub const ORBIT_COLUMNS: [&str; 13] =
    ["orbit", "index", "x", "y", "period", "class", "symmetry", "lambda1_re", "lambda1_im", "lambda2_re", "lambda2_im", "trace", "closure"];

fn orbit_figure(b: &mut ReportBundle, name: &str, source: &str, orbits: &[PeriodicOrbit], seed: u64, title: &str) -> Result<(), CliError> {
    let pts: Vec<(f64, f64)> = orbits.iter().flat_map(|o| o.points.iter().map(|p| (p.x, p.y))).collect();
    let mut plot = Plot::new(title, "x", "y", Axis::fit(pts.iter().map(|p| p.0), false), Axis::fit(pts.iter().map(|p| p.1), false));
    for (i, o) in orbits.iter().enumerate() {
        let p: Vec<(f64, f64)> = o.points.iter().map(|p| (p.x, p.y)).collect();
        plot.points(&p, PALETTE[i % PALETTE.len()], 3.0);
    }
    b.svg(name, plot.render(source, seed))?;
    Ok(())
}

fn find_sym_orbits(cfg: &RunConfig, b: &mut ReportBundle) -> Result<String, CliError> {
    let OpConfig::FindSymOrbits { source, target, branch, s_lo, s_hi, k, tol, scan_points, classify_tol, polish } = cfg.op.clone() else {
        unreachable!()
    };
    let sys = system(cfg)?;
    let window = SymmetrySearchWindow { source, branch, s_lo, s_hi, k, target, tol, scan_points, polish, classify_tol };
    let found = find_symmetric_periodic(&sys, &window).map_err(numerical)?;
    b.csv("orbits.csv", &ORBIT_COLUMNS, &orbit_rows(&found.orbits))?;
    b.json("orbits.json", &json!({ "window": window, "implied_period": window.implied_period(), "search": found }))?;
    orbit_figure(b, "orbits.svg", "orbits.csv", &found.orbits, cfg.seed, "symmetric periodic orbits")?;
    let classes: Vec<&str> = found.orbits.iter().map(|o| o.classification.label()).collect();
    Ok(format!("find-sym-orbits: {} orbit(s) of period dividing {} {:?}", found.orbits.len(), window.implied_period(), classes))
}

fn nf_portrait(cfg: &RunConfig, b: &mut ReportBundle, range: (f64, f64), n_rho: usize, n_phi: usize) -> Result<String, CliError> {
    let params = nf_params(cfg)?;
    let samples = portrait(&params, range, n_rho, n_phi).map_err(numerical)?;
    let rows: Vec<Vec<String>> = samples.iter().map(|s| vec![num(s.rho), num(s.phi), num(s.rho_dot), num(s.phi_dot)]).collect();
    b.csv("portrait.csv", &["rho", "phi", "rho_dot", "phi_dot"], &rows)?;
    let (dphi, drho) = (2.0 * PI / (n_phi.max(2) - 1) as f64, (range.1 - range.0) / (n_rho.max(2) - 1) as f64);
    let mut plot = Plot::new("polar field direction", "phi = q theta", "rho", Axis::linear(-PI, PI), Axis::linear(range.0, range.1));
    for s in &samples {
        let (u, v) = (s.phi_dot / dphi, s.rho_dot / drho);
        let m = u.hypot(v);
        if m > 0.0 && m.is_finite() {
            let tip = (s.phi + 0.4 * dphi * u / m, s.rho + 0.4 * drho * v / m);
            plot.segment((s.phi, s.rho), tip, PALETTE[0]);
        }
    }
    b.svg("portrait.svg", plot.render("portrait.csv", cfg.seed))?;
    Ok(format!("nf-portrait: {} samples on [{}, {}]", samples.len(), range.0, range.1))
}

fn equilibrium_rows(eqs: &[Equilibrium]) -> Vec<Vec<String>> {
    eqs.iter()
        .enumerate()
        .map(|(i, e)| {
            let z = e.z();
            let [a, bb] = cplx(e.eigenvalues.0);
            let [c, d] = cplx(e.eigenvalues.1);
            vec![
                i.to_string(),
                num(e.rho),
                num(e.theta),
                num(e.phi),
                num(z.re),
                num(z.im),
                e.kind.to_string(),
                e.symmetric.to_string(),
                a,
                bb,
                c,
                d,
                num(e.residual),
            ]
        })
        .collect()
}

fn nf_equilibria(cfg: &RunConfig, b: &mut ReportBundle, rho_max: Option<f64>, scan_points: usize) -> Result<String, CliError> {
    let params = nf_params(cfg)?;
    let search = EquilibriumSearch { rho_max, scan_points, ..EquilibriumSearch::default() };
    let eqs = find_equilibria_with(&params, &search).map_err(numerical)?;
    let counts = EquilibriumCounts::of(&eqs);
    b.csv(
        "equilibria.csv",
        &["index", "rho", "theta", "phi", "x", "y", "kind", "symmetric", "eig1_re", "eig1_im", "eig2_re", "eig2_im", "residual"],
        &equilibrium_rows(&eqs),
    )?;
    b.json("equilibria.json", &json!({ "params": params, "count": eqs.len(), "counts": counts, "equilibria": eqs }))?;
    let pts: Vec<(f64, f64)> = eqs.iter().map(|e| (e.z().re, e.z().im)).collect();
    let r = eqs.iter().map(|e| e.rho).fold(0.0, f64::max).max(1e-300);
    let mut plot = Plot::new("equilibria", "x", "y", Axis::linear(-r, r), Axis::linear(-r, r));
    let kinds = ["center", "saddle", "sink", "source", "degenerate"];
    for (i, kind) in kinds.iter().enumerate() {
        let sel: Vec<(f64, f64)> = eqs.iter().zip(&pts).filter(|(e, _)| e.kind.to_string() == *kind).map(|(_, p)| *p).collect();
        plot.points(&sel, PALETTE[i], 4.0);
    }
    plot.legend(&kinds.iter().enumerate().map(|(i, k)| (*k, PALETTE[i])).collect::<Vec<_>>());
    b.svg("equilibria.svg", plot.render("equilibria.csv", cfg.seed))?;
    Ok(format!(
        "nf-equilibria: {} equilibria ({} saddles, {} centers, {} sinks, {} sources, {} asymmetric)",
        eqs.len(),
        counts.saddles,
        counts.centers,
        counts.sinks,
        counts.sources,
        counts.asymmetric
    ))
}

fn pendulum_check(cfg: &RunConfig, b: &mut ReportBundle) -> Result<String, CliError> {
    let OpConfig::PendulumCheck { mu_lo, mu_hi, points, n_theta, n_u, u_max } = cfg.op.clone() else { unreachable!() };
    let params = nf_params(cfg)?;
    let sign = -params.psi1().signum();
    let mags = geometric(mu_lo, mu_hi, points);
    let mut grid = PendulumBox::default_for(params.q);
    grid.u = (-u_max, u_max);
    grid.n_theta = n_theta;
    grid.n_u = n_u;
    let devs = mags.par_iter().map(|m| pendulum_deviation(&params, sign * m, &grid)).collect::<Result<Vec<f64>, _>>().map_err(numerical)?;
    let slope = linalg::log_log_slope(&mags, &devs);
    let pass = slope.is_some_and(|s| s >= PENDULUM_SLOPE_BAND.0 && s <= PENDULUM_SLOPE_BAND.1);
    let rows: Vec<Vec<String>> = mags.iter().zip(&devs).map(|(m, d)| vec![num(sign * m), num(*d)]).collect();
    b.csv("pendulum.csv", &["mu", "deviation"], &rows)?;
    b.json("pendulum.json", &json!({ "mu": mags.iter().map(|m| sign * m).collect::<Vec<_>>(), "deviation": devs, "slope": slope, "band": PENDULUM_SLOPE_BAND, "pass": pass, "grid": grid }))?;
    let mut plot =
        Plot::new("pendulum limit", "|mu|", "sup deviation", Axis::fit(mags.iter().copied(), true), Axis::fit(devs.iter().copied(), true));
    let pts: Vec<(f64, f64)> = mags.iter().copied().zip(devs.iter().copied()).collect();
    plot.line(&pts, PALETTE[0]);
    plot.points(&pts, PALETTE[1], 3.0);
    b.svg("pendulum.svg", plot.render("pendulum.csv", cfg.seed))?;
    Ok(format!("pendulum-check: slope {} ({})", slope.map_or("n/a".into(), |s| format!("{s:.4}")), if pass { "pass" } else { "fail" }))
}

const COUNT_COLUMNS: [&str; 7] = ["symmetric", "asymmetric", "saddles", "centers", "sinks", "sources", "degenerate"];

fn count_cells(c: &EquilibriumCounts) -> Vec<String> {
    [c.symmetric, c.asymmetric, c.saddles, c.centers, c.sinks, c.sources, c.degenerate].iter().map(|v| v.to_string()).collect()
}

fn sweep(cfg: &RunConfig, b: &mut ReportBundle, range: (f64, f64), resolution: usize) -> Result<String, CliError> {
    let params = nf_params(cfg)?;
    let out = mu_sweep(&params, range, resolution).map_err(numerical)?;
    let mut header = vec!["mu"];
    header.extend(COUNT_COLUMNS);
    header.push("error");
    let rows: Vec<Vec<String>> = out
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![num(r.mu)];
            row.extend(count_cells(&r.counts));
            row.push(r.error.clone().unwrap_or_default());
            row
        })
        .collect();
    b.csv("sweep.csv", &header, &rows)?;
    b.json("events.json", &json!({ "events": out.events }))?;
    let mut plot = Plot::new(
        "equilibrium counts",
        "mu",
        "count",
        Axis::linear(range.0, range.1),
        Axis::fit(out.rows.iter().map(|r| r.counts.total() as f64), false),
    );
    let series =
        |f: &dyn Fn(&EquilibriumCounts) -> usize| -> Vec<(f64, f64)> { out.rows.iter().map(|r| (r.mu, f(&r.counts) as f64)).collect() };
    plot.line(&series(&|c| c.saddles), PALETTE[1]);
    plot.line(&series(&|c| c.centers), PALETTE[0]);
    plot.legend(&[("saddles", PALETTE[1]), ("centers", PALETTE[0])]);
    b.svg("sweep.svg", plot.render("sweep.csv", cfg.seed))?;
    Ok(format!("mu-sweep: {} rows, {} event(s)", out.rows.len(), out.events.len()))
}

fn pitchfork(cfg: &RunConfig, b: &mut ReportBundle, grid: PitchforkGrid) -> Result<String, CliError> {
    let params = nf_params(cfg)?;
    let out = pitchfork_scan(&params, &grid).map_err(numerical)?;
    let mut header = vec!["mu", "a"];
    header.extend(COUNT_COLUMNS);
    header.push("error");
    let rows: Vec<Vec<String>> = out
        .cells
        .iter()
        .map(|c| {
            let mut row = vec![num(c.mu), num(c.a)];
            row.extend(count_cells(&c.counts));
            row.push(c.error.clone().unwrap_or_default());
            row
        })
        .collect();
    b.csv("cells.csv", &header, &rows)?;
    let iv_rows: Vec<Vec<String>> = out
        .intervals
        .iter()
        .map(|iv| {
            vec![
                num(iv.a),
                num(iv.lower.0),
                num(iv.lower.1),
                num(iv.upper.0),
                num(iv.upper.1),
                num(iv.center),
                num(iv.width),
                num(iv.predicted_center),
                iv.contains_prediction().to_string(),
                num(iv.boundary_eigen_ratio.0),
                num(iv.boundary_eigen_ratio.1),
                iv.inside.sinks.to_string(),
                iv.inside.sources.to_string(),
            ]
        })
        .collect();
    b.csv(
        "intervals.csv",
        &[
            "a",
            "lower_in",
            "lower_out",
            "upper_in",
            "upper_out",
            "center",
            "width",
            "predicted_center",
            "contains_prediction",
            "boundary_ratio_lower",
            "boundary_ratio_upper",
            "sinks",
            "sources",
        ],
        &iv_rows,
    )?;
    b.json("events.json", &json!({ "events": out.events, "intervals": out.intervals }))?;

    let mut a_sorted = grid.a_values.clone();
    a_sorted.sort_by(f64::total_cmp);
    a_sorted.dedup();
    let mus: Vec<f64> = (0..grid.mu_resolution)
        .map(|i| grid.mu_range.0 + (grid.mu_range.1 - grid.mu_range.0) * i as f64 / (grid.mu_resolution - 1) as f64)
        .collect();
    let dmu = (grid.mu_range.1 - grid.mu_range.0) / (grid.mu_resolution - 1) as f64;
    let rows_y: Vec<f64> = (0..a_sorted.len()).map(|i| i as f64).collect();
    let mut plot = Plot::new(
        "asymmetric equilibria over (mu, A row)",
        "mu",
        "A row index",
        Axis::linear(mus[0], mus[mus.len() - 1]),
        Axis::fit(rows_y.iter().copied(), false),
    );
    for c in &out.cells {
        let row = a_sorted.iter().position(|a| *a == c.a).unwrap_or(0) as f64;
        let color = if c.counts.sinks > 0 {
            PALETTE[1]
        } else if c.counts.asymmetric > 0 {
            PALETTE[3]
        } else {
            "#e8e8e8"
        };
        plot.cell(c.mu - 0.5 * dmu, c.mu + 0.5 * dmu, row - 0.4, row + 0.4, color);
    }
    for iv in &out.intervals {
        let row = a_sorted.iter().position(|a| *a == iv.a).unwrap_or(0) as f64;
        plot.segment((iv.center, row - 0.45), (iv.center, row + 0.45), PALETTE[1]);
    }
    plot.legend(&[("sink/source interval", PALETTE[1]), ("asymmetric", PALETTE[3]), ("symmetric only", "#e8e8e8")]);
    b.svg("region.svg", plot.render("cells.csv, intervals.csv", cfg.seed))?;
    let onsets = out.events.iter().filter(|e| matches!(e.kind, crate::resonance_scan::EventKind::SinkSourceOnset)).count();
    Ok(format!("pitchfork-scan: {} cells, {} interval(s), {} sink/source onset(s)", out.cells.len(), out.intervals.len(), onsets))
}

fn certify(cfg: &RunConfig, b: &mut ReportBundle) -> Result<String, CliError> {
    let params = nf_params(cfg)?;
    let cert = certify_sink_source(&params).map_err(numerical)?;
    b.json("certificate.json", &cert)?;
    Ok(format!("certify-sink-source: {} ({})", if cert.certified { "certified" } else { "no certificate" }, cert.reason))
}

#[derive(Serialize)]
struct ConfirmRow {
    rho: f64,
    theta: f64,
    flow_kind: String,
    map_class: String,
    matches: bool,
    delta: f64,
    collar: f64,
    reciprocity: f64,
    symmetry: String,
    multipliers: (Complex64, Complex64),
    pair_inverse_error: Option<f64>,
    pair_class: Option<String>,
    pair_swapped: Option<bool>,
}

/// `max |λ'·λ − 1|` after matching the image multipliers to the inverses.
pub fn inverse_pair_error(orig: (Complex64, Complex64), image: (Complex64, Complex64)) -> f64 {
    let one = Complex64::new(1.0, 0.0);
    let straight = ((orig.0 * image.0 - one).norm()).max((orig.1 * image.1 - one).norm());
    let crossed = ((orig.0 * image.1 - one).norm()).max((orig.1 * image.0 - one).norm());
    straight.min(crossed)
}

/// One equilibrium per `T`-orbit; the `q` rotated copies share `(ρ, φ)`.
pub fn orbit_representatives(eqs: &[Equilibrium]) -> Vec<&Equilibrium> {
    let mut reps: Vec<&Equilibrium> = Vec::new();
    for e in eqs {
        if !reps.iter().any(|r| (r.rho - e.rho).abs() <= 1e-12 * e.rho && (r.phi - e.phi).abs() <= 1e-9) {
            reps.push(e);
        }
    }
    reps
}

fn map_confirm(cfg: &RunConfig, b: &mut ReportBundle, pair_tol: f64) -> Result<String, CliError> {
    let params = nf_params(cfg)?;
    let settings = flow_settings(cfg);
    let eqs = find_equilibria(&params).map_err(numerical)?;
    let reps = orbit_representatives(&eqs);
    let rows = reps
        .par_iter()
        .map(|e| -> Result<ConfirmRow, CliError> {
            let c = map_level_confirm(&params, e, &settings).map_err(numerical)?;
            let (mut err, mut class, mut swapped) = (None, None, None);
            if !c.orbit.symmetry.is_symmetric() {
                let img = nf_g_pair(&params, &settings, &c.orbit, pair_tol, c.collar).map_err(numerical)?;
                err = Some(inverse_pair_error(c.orbit.multipliers, img.multipliers));
                class = Some(img.classification.label().to_string());
                swapped = Some(img.classification.label() == c.map_class.reversed().label());
            }
            Ok(ConfirmRow {
                rho: e.rho,
                theta: e.theta,
                flow_kind: c.flow_kind.to_string(),
                map_class: c.map_class.label().into(),
                matches: c.matches,
                delta: c.delta,
                collar: c.collar,
                reciprocity: c.reciprocity,
                symmetry: c.orbit.symmetry.label().into(),
                multipliers: c.orbit.multipliers,
                pair_inverse_error: err,
                pair_class: class,
                pair_swapped: swapped,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let [a, bb] = cplx(r.multipliers.0);
            let [c, d] = cplx(r.multipliers.1);
            vec![
                num(r.rho),
                num(r.theta),
                r.flow_kind.clone(),
                r.map_class.clone(),
                r.matches.to_string(),
                num(r.delta),
                num(r.collar),
                num(r.reciprocity),
                r.symmetry.clone(),
                a,
                bb,
                c,
                d,
                opt(r.pair_inverse_error),
                r.pair_class.clone().unwrap_or_default(),
                r.pair_swapped.map(|s| s.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    b.csv(
        "confirm.csv",
        &[
            "rho",
            "theta",
            "flow_kind",
            "map_class",
            "matches",
            "delta",
            "collar",
            "reciprocity",
            "symmetry",
            "lambda1_re",
            "lambda1_im",
            "lambda2_re",
            "lambda2_im",
            "pair_inverse_error",
            "pair_class",
            "pair_swapped",
        ],
        &csv_rows,
    )?;
    let all_match = rows.iter().all(|r| r.matches);
    let pairs_ok = rows.iter().all(|r| r.pair_inverse_error.is_none_or(|e| e <= pair_tol) && r.pair_swapped.unwrap_or(true));
    b.json("confirm.json", &json!({ "rows": rows, "all_match": all_match, "pairs_ok": pairs_ok, "pair_tol": pair_tol }))?;
    Ok(format!(
        "map-confirm: {} orbit(s), classes {}, pairing {}",
        rows.len(),
        if all_match { "agree" } else { "DISAGREE" },
        if pairs_ok { "ok" } else { "FAILED" }
    ))
}

fn rotation(cfg: &RunConfig, b: &mut ReportBundle, spec: &ChartSpec, rho: f64, theta: f64, iterates: usize) -> Result<String, CliError> {
    let sys = system(cfg)?;
    let c = chart(&sys, spec)?;
    let x0 = c.point(rho, theta);
    let est = kam::rotation_number(&sys, &c, x0, iterates).map_err(numerical)?;
    b.json("rotation.json", &json!({ "chart": c, "x0": x0, "estimate": est }))?;
    Ok(format!("rotation: ψ₀ = {:.15} ± {:.1e}", est.psi0, est.error))
}

fn diophantine(b: &mut ReportBundle, psi0: f64, alpha: f64, k_max: u64) -> Result<String, CliError> {
    let out = kam::diophantine_check(psi0, alpha, k_max).map_err(numerical)?;
    let verified = match &out {
        DiophantineOutcome::Certificate(c) => Some(kam::verify_certificate(c)),
        DiophantineOutcome::Refusal { .. } => None,
    };
    b.json("certificate.json", &json!({ "outcome": out, "verified": verified }))?;
    Ok(match out {
        DiophantineOutcome::Certificate(c) => {
            format!("diophantine: K = {:e} at k = {} (verified: {})", c.k_constant, c.k_attaining, verified == Some(true))
        }
        DiophantineOutcome::Refusal { k, .. } => format!("diophantine: refused, kψ₀ integral at k = {k}"),
    })
}

fn twist(cfg: &RunConfig, b: &mut ReportBundle) -> Result<String, CliError> {
    let OpConfig::Twist { chart: spec, rho_lo, rho_hi, steps, iterates, theta0, noise_limit } = cfg.op.clone() else { unreachable!() };
    let sys = system(cfg)?;
    let c = chart(&sys, &spec)?;
    let settings = TwistSettings { rho_lo, rho_hi, steps, iterates, theta0, noise_limit, ..TwistSettings::default() };
    let rep = kam::twist_check(&sys, &c, &settings).map_err(numerical)?;
    let rows: Vec<Vec<String>> = rep.rho.iter().zip(&rep.rotation).map(|(r, e)| vec![num(*r), num(e.psi0), num(e.error)]).collect();
    b.csv("twist.csv", &["rho", "psi", "error"], &rows)?;
    b.json("twist.json", &rep)?;
    let pts: Vec<(f64, f64)> = rep.rho.iter().copied().zip(rep.rotation.iter().map(|e| e.psi0)).collect();
    let mut plot = Plot::new(
        "rotation number across the window",
        "rho",
        "psi (turns)",
        Axis::linear(rho_lo, rho_hi),
        Axis::fit(pts.iter().map(|p| p.1), false),
    );
    plot.line(&pts, PALETTE[0]);
    plot.points(&pts, PALETTE[1], 3.0);
    b.svg("twist.svg", plot.render("twist.csv", cfg.seed))?;
    Ok(format!("twist: dψ/dρ = {:.6e} ± {:.1e} ({:?})", rep.slope, rep.uncertainty, rep.verdict))
}

fn fmn_roots(cfg: &RunConfig, b: &mut ReportBundle) -> Result<String, CliError> {
    let OpConfig::FmnRoots { chart: spec, ns, m, rho_below, rho_above, iterates, gate, n_cap, seeds_per_branch, newton_tol } =
        cfg.op.clone()
    else {
        unreachable!()
    };
    let sys = system(cfg)?;
    let c = chart(&sys, &spec)?;
    let settings = FmnSettings { n_cap, seeds_per_branch, newton_tol, gate, ..FmnSettings::default() };
    let study = match m {
        None => kam::fmn_study(&sys, &c, &ns, (rho_below, rho_above), iterates, &settings).map_err(numerical)?,
        Some(m) => {
            let above = Annulus::from_levels(&sys, &c, 0.0, rho_above, 0.0, iterates).map_err(numerical)?;
            let spec = FmnSpec { m, n: ns[0] };
            let annulus = if spec.ratio() > above.inner.rotation.psi0 {
                above
            } else {
                Annulus::from_levels(&sys, &c, 0.0, rho_below, 0.0, iterates).map_err(numerical)?
            };
            let rep = kam::find_fmn_fixed_points(&sys, &c, spec, &annulus, &settings).map_err(numerical)?;
            FmnStudy {
                levels: vec![kam::FmnLevel {
                    n: spec.n,
                    max_radial_distance: rep.max_radial_distance,
                    max_trace_defect: rep.max_trace_defect,
                    root_count: rep.roots.len(),
                    reports: vec![rep],
                }],
                radial_slope: None,
            }
        }
    };
    let mut rows = Vec::new();
    for level in &study.levels {
        for rep in &level.reports {
            for (i, r) in rep.roots.iter().enumerate() {
                let p = r.orbit.points[0];
                rows.push(vec![
                    level.n.to_string(),
                    rep.spec.m.to_string(),
                    i.to_string(),
                    num(p.x),
                    num(p.y),
                    num(c.coords(p).0),
                    num(r.radial_distance),
                    num(r.trace),
                    num(r.trace_defect),
                    r.orbit.classification.label().into(),
                    r.orbit.symmetry.label().into(),
                    num(r.lifted_residual),
                    num(r.winding),
                    r.negative_real_multiplier.to_string(),
                ]);
            }
        }
    }
    b.csv(
        "roots.csv",
        &[
            "n",
            "m",
            "root",
            "x",
            "y",
            "rho",
            "radial_distance",
            "trace",
            "trace_defect",
            "class",
            "symmetry",
            "lifted_residual",
            "winding",
            "negative_real",
        ],
        &rows,
    )?;
    let level_rows: Vec<Vec<String>> = study
        .levels
        .iter()
        .map(|l| {
            vec![
                l.n.to_string(),
                l.root_count.to_string(),
                l.max_radial_distance.map(num).unwrap_or_default(),
                l.max_trace_defect.map(num).unwrap_or_default(),
                l.reports.iter().any(|r| r.degenerate).to_string(),
                l.reports.iter().any(|r| r.gate_warning).to_string(),
            ]
        })
        .collect();
    b.csv("levels.csv", &["n", "roots", "max_radial_distance", "max_trace_defect", "degenerate", "gate_warning"], &level_rows)?;
    b.json("fmn.json", &study)?;
    let pts: Vec<(f64, f64)> = study.levels.iter().filter_map(|l| l.max_radial_distance.map(|d| (l.n as f64, d))).collect();
    let mut plot = Plot::new(
        "max radial distance of F_{m/n} roots",
        "n",
        "distance",
        Axis::fit(pts.iter().map(|p| p.0), true),
        Axis::fit(pts.iter().map(|p| p.1), true),
    );
    plot.line(&pts, PALETTE[0]);
    plot.points(&pts, PALETTE[1], 3.0);
    b.svg("fmn.svg", plot.render("levels.csv", cfg.seed))?;
    let total: usize = study.levels.iter().map(|l| l.root_count).sum();
    let degenerate = study.levels.iter().flat_map(|l| &l.reports).any(|r| r.degenerate);
    Ok(format!(
        "fmn-roots: {total} root orbit(s) over n = {:?}; radial slope {}{}",
        ns,
        study.radial_slope.map_or("n/a".into(), |s| format!("{s:.4}")),
        if degenerate { "; degenerate F_{m/n} = id flagged" } else { "" }
    ))
}

fn averaged(
    cfg: &RunConfig,
    b: &mut ReportBundle,
    spec: &ChartSpec,
    range: (f64, f64),
    count: usize,
    n_theta: usize,
) -> Result<String, CliError> {
    let sys = system(cfg)?;
    let c = chart(&sys, spec)?;
    let samples = AveragedSamples::geometric(range.0, range.1, count, n_theta);
    let fit = kam::averaged_form_fit(&sys, &c, &samples).map_err(numerical)?;
    let rows: Vec<Vec<String>> =
        (0..fit.rho.len()).map(|i| vec![num(fit.rho[i]), num(fit.radial_residual[i]), num(fit.angular_residual[i])]).collect();
    b.csv("averaged.csv", &["rho", "radial_residual", "angular_residual"], &rows)?;
    b.json("averaged.json", &fit)?;
    let rad: Vec<(f64, f64)> = fit.rho.iter().copied().zip(fit.radial_residual.iter().copied()).collect();
    let ang: Vec<(f64, f64)> = fit.rho.iter().copied().zip(fit.angular_residual.iter().copied()).collect();
    let mut plot = Plot::new(
        "averaged-form residuals",
        "rho",
        "residual",
        Axis::fit(fit.rho.iter().copied(), true),
        Axis::fit(fit.radial_residual.iter().chain(&fit.angular_residual).copied(), true),
    );
    plot.line(&rad, PALETTE[0]);
    plot.line(&ang, PALETTE[1]);
    plot.legend(&[("radial", PALETTE[0]), ("angular", PALETTE[1])]);
    b.svg("averaged.svg", plot.render("averaged.csv", cfg.seed))?;
    let s = |v: Option<f64>| v.map_or("n/a".into(), |s| format!("{s:.3}"));
    Ok(format!(
        "averaged-fit: radial slope {}, angular slope {} ({})",
        s(fit.radial_slope),
        s(fit.angular_slope),
        if fit.pass { "pass" } else { "fail" }
    ))
}
