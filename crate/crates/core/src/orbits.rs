//! Orbits, symmetric periodic orbits and multiplier classification.

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Mat2;
use crate::roots;
use crate::system::{InvolutionId, MapError, Point, ReversibleSystem};

/// Default collar on multiplier moduli.
pub const CLASSIFY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("invalid search window: {0}")]
    InvalidWindow(String),
    #[error("multiplier pairing failed: orbit {original:?}, image {image:?}")]
    Pairing { original: (Complex64, Complex64), image: (Complex64, Complex64) },
    #[error("orbit is not closed under g: mismatch {0:.3e}")]
    NotClosed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "lowercase")]
pub enum Classification {
    Elliptic { psi: f64 },
    Saddle,
    Sink,
    Source,
    Parabolic,
    Borderline { moduli: (f64, f64) },
}

impl Classification {
    pub fn label(&self) -> &'static str {
        match self {
            Classification::Elliptic { .. } => "elliptic",
            Classification::Saddle => "saddle",
            Classification::Sink => "sink",
            Classification::Source => "source",
            Classification::Parabolic => "parabolic",
            Classification::Borderline { .. } => "borderline",
        }
    }

    /// The class of the time-reversed orbit.
    pub fn reversed(&self) -> Classification {
        match *self {
            Classification::Sink => Classification::Source,
            Classification::Source => Classification::Sink,
            Classification::Borderline { moduli: (a, b) } => Classification::Borderline { moduli: (1.0 / b, 1.0 / a) },
            other => other,
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classification::Elliptic { psi } => write!(f, "elliptic(ψ={psi:.6})"),
            Classification::Borderline { moduli } => write!(f, "borderline(|λ|={:.6e}, |γ|={:.6e})", moduli.0, moduli.1),
            other => f.write_str(other.label()),
        }
    }
}

/// Classify a multiplier pair with collar `tol` on the moduli.
pub fn classify(multipliers: (Complex64, Complex64), tol: f64) -> Classification {
    let (l1, l2) = multipliers;
    let near = |z: Complex64, w: f64| (z - Complex64::new(w, 0.0)).norm() <= tol;
    if (near(l1, 1.0) && near(l2, 1.0)) || (near(l1, -1.0) && near(l2, -1.0)) {
        return Classification::Parabolic;
    }
    let (m1, m2) = (l1.norm(), l2.norm());
    let (big, small) = if m1 >= m2 { (m1, m2) } else { (m2, m1) };
    if l1.im != 0.0 {
        let m = 0.5 * (m1 + m2);
        return if (m - 1.0).abs() <= tol {
            Classification::Elliptic { psi: l1.arg().abs() }
        } else if m < 1.0 {
            Classification::Sink
        } else {
            Classification::Source
        };
    }
    if big > 1.0 + tol && small < 1.0 - tol {
        Classification::Saddle
    } else if big < 1.0 - tol {
        Classification::Sink
    } else if small > 1.0 + tol {
        Classification::Source
    } else {
        Classification::Borderline { moduli: (big, small) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Symmetry {
    ViaG,
    ViaFG,
    NonSymmetric,
}

impl Symmetry {
    pub fn label(&self) -> &'static str {
        match self {
            Symmetry::ViaG => "symmetric-g",
            Symmetry::ViaFG => "symmetric-fg",
            Symmetry::NonSymmetric => "non-symmetric",
        }
    }

    pub fn is_symmetric(&self) -> bool {
        !matches!(self, Symmetry::NonSymmetric)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub points: Vec<Point>,
    pub period: usize,
    pub monodromy: Mat2,
    pub multipliers: (Complex64, Complex64),
    /// `det(monodromy) = λ·γ`.
    pub jacobian_product: f64,
    pub classification: Classification,
    pub symmetry: Symmetry,
    /// Parameter of the symmetry-line root that produced the orbit.
    pub s_root: Option<f64>,
    /// `|f^n(x₀) − x₀|` at construction.
    pub closure: f64,
}

impl PeriodicOrbit {
    /// Build an orbit from its first point by iterating `period` times.
    pub fn from_seed(sys: &ReversibleSystem, x0: Point, period: usize, symmetry: Symmetry, tol: f64) -> Result<Self, OrbitError> {
        assert!(period >= 1);
        let mut points = Vec::with_capacity(period);
        let mut m = Mat2::IDENTITY;
        let mut x = x0;
        for _ in 0..period {
            points.push(x);
            m = sys.jacobian(x)? * m;
            x = sys.step(x)?;
        }
        let multipliers = m.eigenvalues();
        Ok(PeriodicOrbit {
            closure: sys.distance(x, x0),
            points,
            period,
            jacobian_product: m.det(),
            classification: classify(multipliers, tol),
            monodromy: m,
            multipliers,
            symmetry,
            s_root: None,
        })
    }

    pub fn reclassify(&mut self, tol: f64) {
        self.classification = classify(self.multipliers, tol);
    }

    /// `min | |λ| − 1 |` over both multipliers.
    pub fn modulus_margin(&self) -> f64 {
        (self.multipliers.0.norm() - 1.0).abs().min((self.multipliers.1.norm() - 1.0).abs())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Iteration {
    /// `[x₀, f(x₀), …]`, truncated at an escape.
    pub points: Vec<Point>,
    /// Index of the first iterate that could not be produced.
    pub escaped_at: Option<usize>,
    pub escape_reason: Option<String>,
}

impl Iteration {
    pub fn max_radius(&self) -> f64 {
        self.points.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }
}

pub fn iterate(sys: &ReversibleSystem, x0: Point, n: usize) -> Iteration {
    let mut points = Vec::with_capacity(n + 1);
    points.push(x0);
    let mut x = x0;
    for i in 1..=n {
        match sys.step(x) {
            Ok(y) => {
                points.push(y);
                x = y;
            }
            Err(e) => {
                return Iteration { points, escaped_at: Some(i), escape_reason: Some(e.to_string()) };
            }
        }
    }
    Iteration { points, escaped_at: None, escape_reason: None }
}

fn iterate_n(sys: &ReversibleSystem, x0: Point, n: usize) -> Result<Point, MapError> {
    let mut x = x0;
    for _ in 0..n {
        x = sys.step(x)?;
    }
    Ok(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetrySearchWindow {
    /// Involution whose fixed set is scanned.
    pub source: InvolutionId,
    /// Branch index into the source fixed set.
    pub branch: usize,
    pub s_lo: f64,
    pub s_hi: f64,
    /// Half-period `k`: the scan tests `f^k(curve(s))`.
    pub k: usize,
    /// Involution whose fixed set `f^k(curve(s))` must hit.
    pub target: InvolutionId,
    /// Closure tolerance of accepted orbits is `10·tol`.
    pub tol: f64,
    pub scan_points: usize,
    /// Newton polish on `f^n(x) = x` after bisection.
    pub polish: bool,
    /// Collar passed to [`classify`].
    pub classify_tol: f64,
}

impl SymmetrySearchWindow {
    pub fn new(source: InvolutionId, target: InvolutionId, s_lo: f64, s_hi: f64, k: usize) -> Self {
        SymmetrySearchWindow {
            source,
            branch: 0,
            s_lo,
            s_hi,
            k,
            target,
            tol: 1e-10,
            scan_points: 401,
            polish: true,
            classify_tol: CLASSIFY_TOL,
        }
    }

    pub fn validate(&self) -> Result<(), OrbitError> {
        if !(self.s_lo < self.s_hi) {
            return Err(OrbitError::InvalidWindow(format!("s_lo = {} must be < s_hi = {}", self.s_lo, self.s_hi)));
        }
        if self.k == 0 {
            return Err(OrbitError::InvalidWindow("k must be ≥ 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(OrbitError::InvalidWindow("tol must be > 0".into()));
        }
        if self.scan_points < 2 {
            return Err(OrbitError::InvalidWindow("scan_points must be ≥ 2".into()));
        }
        Ok(())
    }

    /// Period implied by the two symmetry lines: a point on `Fix(source)`
    /// whose `k`-th iterate lies on `Fix(target)` has period dividing this.
    pub fn implied_period(&self) -> usize {
        let k = self.k;
        match (self.source, self.target) {
            (InvolutionId::G, InvolutionId::G) | (InvolutionId::FG, InvolutionId::FG) => 2 * k,
            (InvolutionId::G, InvolutionId::FG) => 2 * k - 1,
            (InvolutionId::FG, InvolutionId::G) => 2 * k + 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RejectedBracket {
    pub s_lo: f64,
    pub s_hi: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymmetricSearch {
    pub orbits: Vec<PeriodicOrbit>,
    pub rejected: Vec<RejectedBracket>,
}

/// Scan a symmetry line for symmetric periodic orbits.
pub fn find_symmetric_periodic(sys: &ReversibleSystem, window: &SymmetrySearchWindow) -> Result<SymmetricSearch, OrbitError> {
    window.validate()?;
    let source = sys.involution(window.source);
    let target = sys.involution(window.target);
    let curve = source
        .fixed
        .branches
        .get(window.branch)
        .ok_or_else(|| OrbitError::InvalidWindow(format!("no branch {} on Fix({})", window.branch, window.source)))?;
    let residual = |s: f64| -> f64 {
        curve.point(s).and_then(|p| iterate_n(sys, p, window.k)).map(|q| target.fixed.signed_residual(q)).unwrap_or(f64::NAN)
    };
    let n = window.implied_period();
    let closure_tol = 10.0 * window.tol;
    let symmetry = match window.source {
        InvolutionId::G => Symmetry::ViaG,
        InvolutionId::FG => Symmetry::ViaFG,
    };
    let mut orbits = Vec::new();
    let mut rejected = Vec::new();
    let xtol = 4.0 * f64::EPSILON * window.s_lo.abs().max(window.s_hi.abs()).max(1e-300);
    for br in roots::scan_brackets(residual, window.s_lo, window.s_hi, window.scan_points) {
        let Some(root) = roots::bisect(residual, br, xtol, 200) else {
            rejected.push(RejectedBracket { s_lo: br.lo, s_hi: br.hi, reason: "bisection left the evaluable domain".into() });
            continue;
        };
        let mut x0 = match curve.point(root.root) {
            Ok(p) => p,
            Err(e) => {
                rejected.push(RejectedBracket { s_lo: br.lo, s_hi: br.hi, reason: e.to_string() });
                continue;
            }
        };
        let img = match iterate_n(sys, x0, window.k) {
            Ok(p) => p,
            Err(e) => {
                rejected.push(RejectedBracket { s_lo: br.lo, s_hi: br.hi, reason: e.to_string() });
                continue;
            }
        };
        // Sign changes of a residual that is not a distance (e.g. across a
        // branch cut) must land on the target fixed set.
        let on_target = target.apply(img).map(|h| target.distance(h, img)).unwrap_or(f64::INFINITY);
        if !(on_target <= closure_tol.max(1e-8)) {
            rejected.push(RejectedBracket {
                s_lo: br.lo,
                s_hi: br.hi,
                reason: format!("f^k(x) misses Fix({}) by {on_target:.3e}", window.target),
            });
            continue;
        }
        if window.polish {
            x0 = newton_polish(sys, x0, n, window.tol);
        }
        match smallest_period(sys, x0, n, closure_tol) {
            Ok(Some(period)) => {
                let mut orbit = PeriodicOrbit::from_seed(sys, x0, period, symmetry, window.classify_tol)?;
                orbit.s_root = Some(root.root);
                orbits.push(orbit);
            }
            Ok(None) => {
                let closure = iterate_n(sys, x0, n).map(|y| sys.distance(y, x0)).unwrap_or(f64::INFINITY);
                rejected.push(RejectedBracket {
                    s_lo: br.lo,
                    s_hi: br.hi,
                    reason: format!("closure {closure:.3e} exceeds {closure_tol:.1e} at period {n}"),
                });
            }
            Err(e) => rejected.push(RejectedBracket { s_lo: br.lo, s_hi: br.hi, reason: e.to_string() }),
        }
    }
    let orbits = merge_orbits(sys, orbits, closure_tol);
    Ok(SymmetricSearch { orbits, rejected })
}

/// Run several windows in parallel and merge deterministically.
pub fn find_symmetric_periodic_many(sys: &ReversibleSystem, windows: &[SymmetrySearchWindow]) -> Result<SymmetricSearch, OrbitError> {
    let parts: Vec<Result<SymmetricSearch, OrbitError>> = windows.par_iter().map(|w| find_symmetric_periodic(sys, w)).collect();
    let mut orbits = Vec::new();
    let mut rejected = Vec::new();
    let mut tol: f64 = 0.0;
    for (w, part) in windows.iter().zip(parts) {
        let part = part?;
        tol = tol.max(10.0 * w.tol);
        orbits.extend(part.orbits);
        rejected.extend(part.rejected);
    }
    Ok(SymmetricSearch { orbits: merge_orbits(sys, orbits, tol), rejected })
}

fn smallest_period(sys: &ReversibleSystem, x0: Point, n: usize, tol: f64) -> Result<Option<usize>, MapError> {
    let mut x = x0;
    for d in 1..=n {
        x = sys.step(x)?;
        if n.is_multiple_of(d) && sys.distance(x, x0) <= tol {
            return Ok(Some(d));
        }
    }
    Ok(None)
}

fn wrapped_delta(sys: &ReversibleSystem, a: Point, b: Point) -> [f64; 2] {
    let mut dx = a.x - b.x;
    if let Some(p) = sys.x_period {
        dx -= p * (dx / p).round();
    }
    [dx, a.y - b.y]
}

/// Damped Newton on `f^n(x) − x`, keeping only steps that reduce the
/// residual. `DF^n − I` is close to singular for near-parabolic orbits, so
/// the input is returned unchanged whenever no step helps.
pub fn newton_polish(sys: &ReversibleSystem, x0: Point, n: usize, tol: f64) -> Point {
    let residual = |x: Point| -> Option<([f64; 2], Mat2)> {
        let mut m = Mat2::IDENTITY;
        let mut y = x;
        for _ in 0..n {
            m = sys.jacobian(y).ok()? * m;
            y = sys.step(y).ok()?;
        }
        Some((wrapped_delta(sys, y, x), m))
    };
    let mut x = x0;
    let Some((mut r, mut m)) = residual(x) else { return x0 };
    for _ in 0..8 {
        let norm = r[0].hypot(r[1]);
        if norm <= 1e-3 * tol {
            break;
        }
        let Some(step) = (m - Mat2::IDENTITY).solve(r) else { break };
        let mut improved = false;
        let mut lambda = 1.0;
        for _ in 0..6 {
            let cand = Point::new(x.x - lambda * step[0], x.y - lambda * step[1]);
            if let Some((rc, mc)) = residual(cand) {
                if rc[0].hypot(rc[1]) < norm {
                    x = cand;
                    r = rc;
                    m = mc;
                    improved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    x
}

/// Hausdorff distance between orbit point sets.
pub fn point_set_distance(sys: &ReversibleSystem, a: &[Point], b: &[Point]) -> f64 {
    let one_way = |u: &[Point], v: &[Point]| {
        u.iter().map(|p| v.iter().map(|q| sys.distance(*p, *q)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

fn merge_orbits(sys: &ReversibleSystem, mut orbits: Vec<PeriodicOrbit>, tol: f64) -> Vec<PeriodicOrbit> {
    orbits.sort_by(|a, b| a.period.cmp(&b.period).then(a.s_root.unwrap_or(f64::NAN).total_cmp(&b.s_root.unwrap_or(f64::NAN))));
    let mut out: Vec<PeriodicOrbit> = Vec::new();
    for o in orbits {
        let dup = out.iter().any(|k| k.period == o.period && point_set_distance(sys, &k.points, &o.points) < tol);
        if !dup {
            out.push(o);
        }
    }
    out
}

/// Tag an orbit by whether its point set is `g`-invariant, and through which
/// fixed set.
pub fn detect_symmetry(sys: &ReversibleSystem, points: &[Point], tol: f64) -> Result<Symmetry, MapError> {
    let image: Vec<Point> = points.iter().map(|p| sys.g.apply(*p)).collect::<Result<_, _>>()?;
    if point_set_distance(sys, points, &image) > tol {
        return Ok(Symmetry::NonSymmetric);
    }
    for p in points {
        if sys.distance(sys.g.apply(*p)?, *p) <= tol {
            return Ok(Symmetry::ViaG);
        }
    }
    Ok(Symmetry::ViaFG)
}

fn pairs_are_inverse(a: (Complex64, Complex64), b: (Complex64, Complex64), tol: f64) -> bool {
    let inv = (1.0 / a.0, 1.0 / a.1);
    let close = |x: Complex64, y: Complex64| (x - y).norm() <= tol * (1.0 + y.norm());
    (close(inv.0, b.0) && close(inv.1, b.1)) || (close(inv.0, b.1) && close(inv.1, b.0))
}

/// The `g`-image of an orbit, with recomputed monodromy. Since
/// `g∘f = f⁻¹∘g`, the image is traversed in reverse order.
///
/// `tol` bounds the relative mismatch between the image multipliers and the
/// inverses of the originals; `classify_tol` is the collar used to classify
/// the image.
pub fn g_pair(sys: &ReversibleSystem, orbit: &PeriodicOrbit, tol: f64, classify_tol: f64) -> Result<PeriodicOrbit, OrbitError> {
    g_pair_with(sys, orbit, tol, classify_tol, |pts| {
        let mut m = Mat2::IDENTITY;
        for p in pts {
            m = sys.jacobian(*p)? * m;
        }
        Ok((m, m.eigenvalues()))
    })
}

/// [`g_pair`] with a caller-supplied monodromy evaluation returning the
/// matrix and its eigenvalues.
pub fn g_pair_with<M>(
    sys: &ReversibleSystem,
    orbit: &PeriodicOrbit,
    tol: f64,
    classify_tol: f64,
    monodromy: M,
) -> Result<PeriodicOrbit, OrbitError>
where
    M: Fn(&[Point]) -> Result<(Mat2, (Complex64, Complex64)), OrbitError>,
{
    let n = orbit.period;
    let image: Vec<Point> = (0..n).map(|j| sys.g.apply(orbit.points[(n - j) % n])).collect::<Result<_, _>>()?;
    if orbit.symmetry.is_symmetric() {
        let d = point_set_distance(sys, &orbit.points, &image);
        if d > 10.0 * tol.max(orbit.closure) {
            return Err(OrbitError::NotClosed(d));
        }
        return Ok(orbit.clone());
    }
    let (m, multipliers) = monodromy(&image)?;
    let last = sys.step(*image.last().unwrap())?;
    let out = PeriodicOrbit {
        points: image.clone(),
        period: n,
        monodromy: m,
        multipliers,
        jacobian_product: (multipliers.0 * multipliers.1).re,
        classification: classify(multipliers, classify_tol),
        symmetry: Symmetry::NonSymmetric,
        s_root: None,
        closure: sys.distance(last, image[0]),
    };
    if !pairs_are_inverse(orbit.multipliers, multipliers, tol) {
        return Err(OrbitError::Pairing { original: orbit.multipliers, image: multipliers });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{rigid_rotation, twist_std};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn classification_examples() {
        let e = Complex64::from_polar(1.0, 0.3);
        assert!(matches!(classify((e, e.conj()), 1e-6), Classification::Elliptic { psi } if (psi - 0.3).abs() < 1e-15));
        assert_eq!(classify((c(2.0, 0.0), c(0.5, 0.0)), 1e-6), Classification::Saddle);
        let s = Complex64::from_polar(0.9, 0.4);
        assert_eq!(classify((s, s.conj()), 1e-6), Classification::Sink);
        assert_eq!(classify((c(1.1, 0.0), c(1.2, 0.0)), 1e-6), Classification::Source);
        assert_eq!(classify((c(1.0, 0.0), c(1.0, 0.0)), 1e-6), Classification::Parabolic);
        assert_eq!(classify((c(-1.0, 0.0), c(-1.0 + 1e-9, 0.0)), 1e-6), Classification::Parabolic);
        assert!(matches!(classify((c(1.0 + 1e-7, 0.0), c(0.5, 0.0)), 1e-6), Classification::Borderline { .. }));
    }

    #[test]
    fn implied_periods() {
        use InvolutionId::*;
        assert_eq!(SymmetrySearchWindow::new(G, G, 0.0, 1.0, 3).implied_period(), 6);
        assert_eq!(SymmetrySearchWindow::new(G, FG, 0.0, 1.0, 3).implied_period(), 5);
        assert_eq!(SymmetrySearchWindow::new(FG, G, 0.0, 1.0, 3).implied_period(), 7);
        assert_eq!(SymmetrySearchWindow::new(FG, FG, 0.0, 1.0, 3).implied_period(), 6);
        assert!(SymmetrySearchWindow::new(G, G, 1.0, 0.0, 1).validate().is_err());
        assert!(SymmetrySearchWindow::new(G, G, 0.0, 1.0, 0).validate().is_err());
    }

    #[test]
    fn quarter_rotation_returns_after_four() {
        let sys = rigid_rotation(PI / 2.0);
        let it = iterate(&sys, Point::new(1.0, 0.0), 4);
        assert_eq!(it.points.len(), 5);
        assert!(it.points[4].dist(Point::new(1.0, 0.0)) < 1e-14);
        assert_eq!(iterate(&sys, Point::new(0.2, 0.1), 0).points, vec![Point::new(0.2, 0.1)]);
    }

    #[test]
    fn escape_is_reported() {
        let sys = twist_std(0.0, 0.2, 0.1).unwrap();
        let y0 = 2.0 * PI * 0.1;
        let it = iterate(&sys, Point::new(0.3, y0 + 1.5), 100);
        assert!(it.escaped_at.is_some());
        assert!(it.escape_reason.unwrap().contains("outside"));
    }

    #[test]
    fn twist_std_fixed_points_on_g_line() {
        let sys = twist_std(0.5, 0.0, 0.0).unwrap();
        let mut found = Vec::new();
        for branch in 0..2 {
            let mut w = SymmetrySearchWindow::new(InvolutionId::G, InvolutionId::FG, -1.0, 1.0, 1);
            w.branch = branch;
            found.extend(find_symmetric_periodic(&sys, &w).unwrap().orbits);
        }
        assert_eq!(found.len(), 2);
        let saddle = found.iter().find(|o| o.classification == Classification::Saddle).unwrap();
        assert!(saddle.points[0].dist(Point::ORIGIN) < 1e-12);
        let ell = found.iter().find(|o| matches!(o.classification, Classification::Elliptic { .. })).unwrap();
        assert!(ell.points[0].dist(Point::new(PI, 0.0)) < 1e-12);
        for o in &found {
            assert_eq!(o.period, 1);
            assert!((o.jacobian_product - 1.0).abs() < 1e-12);
            let (l, g) = o.multipliers;
            assert!(((l * g).norm() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn rigid_rotation_only_origin() {
        let sys = rigid_rotation(0.3);
        for k in 1..5 {
            let w = SymmetrySearchWindow::new(InvolutionId::G, InvolutionId::G, -1.0, 1.0, k);
            let out = find_symmetric_periodic(&sys, &w).unwrap();
            assert_eq!(out.orbits.len(), 1, "k = {k}");
            assert!(out.orbits[0].points[0].norm() < 1e-15);
            assert_eq!(out.orbits[0].period, 1);
        }
    }

    #[test]
    fn closure_within_ten_tolerances() {
        let sys = twist_std(0.9, 0.0, 0.0).unwrap();
        let w = SymmetrySearchWindow::new(InvolutionId::G, InvolutionId::G, 0.2, 3.0, 3);
        let out = find_symmetric_periodic(&sys, &w).unwrap();
        assert!(!out.orbits.is_empty());
        for o in &out.orbits {
            let back = iterate(&sys, o.points[0], o.period);
            assert!(sys.distance(*back.points.last().unwrap(), o.points[0]) <= 10.0 * w.tol);
            assert!((o.monodromy.det() - (o.multipliers.0 * o.multipliers.1).re).abs() < 1e-10);
            assert_eq!(g_pair(&sys, o, 1e-8, CLASSIFY_TOL).unwrap(), *o);
        }
    }

    #[test]
    fn parallel_windows_match_sequential() {
        let sys = twist_std(0.9, 0.0, 0.0).unwrap();
        let ws: Vec<_> =
            [(0.1, 1.5), (1.4, 3.0)].iter().map(|&(a, b)| SymmetrySearchWindow::new(InvolutionId::G, InvolutionId::G, a, b, 2)).collect();
        let par = find_symmetric_periodic_many(&sys, &ws).unwrap();
        let mut seq = Vec::new();
        for w in &ws {
            seq.extend(find_symmetric_periodic(&sys, w).unwrap().orbits);
        }
        assert!(par.orbits.len() <= seq.len());
        for w in par.orbits.windows(2) {
            assert!((w[0].period, w[0].s_root.unwrap()) <= (w[1].period, w[1].s_root.unwrap()));
        }
    }
}
