//! Planar maps, involutions and reversible systems.
//!
//! A [`ReversibleSystem`] bundles a map `f` with an involution `g` such that
//! `f⁻¹ = g∘f∘g`, together with the second involution `h₂ = f∘g`. Every
//! involution carries a parametrization of its fixed set (the symmetry
//! lines) and a signed residual that vanishes on it; the orbit search walks
//! those curves.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::IntegrationError;
use crate::linalg::Mat2;
use crate::normal_form::{FlowSettings, NormalFormMap, ResonantParams};
use crate::roots;

/// Tolerance for identities that hold exactly up to rounding.
pub const ALGEBRAIC_TOL: f64 = 1e-12;
/// Tolerance for identities routed through numerical integration.
pub const INTEGRATED_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(&self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.17e}, {:.17e})", self.x, self.y)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("{map}: point {point} lies outside the validated domain")]
    OutOfDomain { map: String, point: Point },
    #[error("{what}: non-finite value at {point}")]
    NonFinite { what: String, point: Point },
    #[error("{map}: integration failed at {point}: {source}")]
    Integration {
        map: String,
        point: Point,
        #[source]
        source: IntegrationError,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("unknown built-in system `{name}` (expected one of {known:?})")]
    UnknownSystem { name: String, known: Vec<&'static str> },
    #[error("unknown parameter `{key}` for `{system}`")]
    UnknownParameter { system: String, key: String },
    #[error("parameter `{key}` = {value} out of range: {reason}")]
    OutOfRange { key: String, value: f64, reason: String },
}

/// A map of the plane (or of a chart of the cylinder).
pub trait PlanarMap: Send + Sync {
    fn name(&self) -> &str;

    fn apply(&self, p: Point) -> Result<Point, MapError>;

    /// Exact derivative, when the map can supply one.
    fn exact_jacobian(&self, _p: Point) -> Option<Result<Mat2, MapError>> {
        None
    }

    fn inverse(&self, _p: Point) -> Option<Result<Point, MapError>> {
        None
    }
}

type PointFn = dyn Fn(Point) -> Result<Point, MapError> + Send + Sync;
type JacFn = dyn Fn(Point) -> Result<Mat2, MapError> + Send + Sync;

/// A planar map assembled from closures.
#[derive(Clone)]
pub struct FnMap {
    name: String,
    forward: Arc<PointFn>,
    jacobian: Option<Arc<JacFn>>,
    inverse: Option<Arc<PointFn>>,
}

impl FnMap {
    pub fn new<F>(name: impl Into<String>, forward: F) -> Self
    where
        F: Fn(Point) -> Result<Point, MapError> + Send + Sync + 'static,
    {
        FnMap { name: name.into(), forward: Arc::new(forward), jacobian: None, inverse: None }
    }

    pub fn with_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(Point) -> Result<Mat2, MapError> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    pub fn with_inverse<I>(mut self, inv: I) -> Self
    where
        I: Fn(Point) -> Result<Point, MapError> + Send + Sync + 'static,
    {
        self.inverse = Some(Arc::new(inv));
        self
    }

    /// Exact linear map `p ↦ m·p`.
    pub fn linear(name: impl Into<String>, m: Mat2) -> Self {
        let inv = m.inverse();
        let mut out = FnMap::new(name, move |p| {
            let [x, y] = m.apply([p.x, p.y]);
            Ok(Point::new(x, y))
        })
        .with_jacobian(move |_| Ok(m));
        if let Some(inv) = inv {
            out = out.with_inverse(move |p| {
                let [x, y] = inv.apply([p.x, p.y]);
                Ok(Point::new(x, y))
            });
        }
        out
    }
}

impl PlanarMap for FnMap {
    fn name(&self) -> &str {
        &self.name
    }

    fn apply(&self, p: Point) -> Result<Point, MapError> {
        (self.forward)(p)
    }

    fn exact_jacobian(&self, p: Point) -> Option<Result<Mat2, MapError>> {
        self.jacobian.as_ref().map(|j| j(p))
    }

    fn inverse(&self, p: Point) -> Option<Result<Point, MapError>> {
        self.inverse.as_ref().map(|i| i(p))
    }
}

/// `outer ∘ inner`.
pub struct Composition {
    name: String,
    outer: Arc<dyn PlanarMap>,
    inner: Arc<dyn PlanarMap>,
}

impl Composition {
    pub fn new(outer: Arc<dyn PlanarMap>, inner: Arc<dyn PlanarMap>) -> Self {
        let name = format!("{}∘{}", outer.name(), inner.name());
        Composition { name, outer, inner }
    }
}

impl PlanarMap for Composition {
    fn name(&self) -> &str {
        &self.name
    }

    fn apply(&self, p: Point) -> Result<Point, MapError> {
        self.outer.apply(self.inner.apply(p)?)
    }

    fn exact_jacobian(&self, p: Point) -> Option<Result<Mat2, MapError>> {
        let ji = match self.inner.exact_jacobian(p)? {
            Ok(j) => j,
            Err(e) => return Some(Err(e)),
        };
        let q = match self.inner.apply(p) {
            Ok(q) => q,
            Err(e) => return Some(Err(e)),
        };
        Some(self.outer.exact_jacobian(q)?.map(|jo| jo * ji))
    }

    fn inverse(&self, p: Point) -> Option<Result<Point, MapError>> {
        let qo = self.outer.inverse(p)?;
        Some(qo.and_then(|q| match self.inner.inverse(q) {
            Some(r) => r,
            None => Err(MapError::NonFinite { what: format!("{} inverse", self.name), point: p }),
        }))
    }
}

/// Finite-difference step for the central-difference Jacobian.
pub fn default_fd_step(p: Point) -> f64 {
    1e-6 * p.x.abs().max(p.y.abs()).max(1.0)
}

/// Derivative of `map` at `p`: exact when the map provides it, otherwise
/// central differences with step `h`.
pub fn jacobian(map: &dyn PlanarMap, p: Point, h: f64) -> Result<Mat2, MapError> {
    if let Some(j) = map.exact_jacobian(p) {
        let j = j?;
        if !j.is_finite() {
            return Err(MapError::NonFinite { what: format!("{} exact jacobian", map.name()), point: p });
        }
        return Ok(j);
    }
    fd_jacobian(map, p, h)
}

/// Central-difference Jacobian regardless of exact availability.
pub fn fd_jacobian(map: &dyn PlanarMap, p: Point, h: f64) -> Result<Mat2, MapError> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let eval = |q: Point| -> Result<Point, MapError> {
        let v = map.apply(q)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(MapError::NonFinite { what: format!("{} stencil", map.name()), point: q })
        }
    };
    let xp = eval(Point::new(p.x + h, p.y))?;
    let xm = eval(Point::new(p.x - h, p.y))?;
    let yp = eval(Point::new(p.x, p.y + h))?;
    let ym = eval(Point::new(p.x, p.y - h))?;
    let s = 0.5 / h;
    Ok(Mat2::new((xp.x - xm.x) * s, (yp.x - ym.x) * s, (xp.y - xm.y) * s, (yp.y - ym.y) * s))
}

type CurveFn = dyn Fn(f64) -> Result<Point, MapError> + Send + Sync;
type ResidualFn = dyn Fn(Point) -> f64 + Send + Sync;

/// One connected branch of a fixed set, parametrized by `s`.
#[derive(Clone)]
pub struct FixedCurve {
    pub label: String,
    /// Default parameter interval covering the validated domain.
    pub s_range: (f64, f64),
    curve: Arc<CurveFn>,
}

impl FixedCurve {
    pub fn new<C>(label: impl Into<String>, s_range: (f64, f64), curve: C) -> Self
    where
        C: Fn(f64) -> Result<Point, MapError> + Send + Sync + 'static,
    {
        FixedCurve { label: label.into(), s_range, curve: Arc::new(curve) }
    }

    pub fn point(&self, s: f64) -> Result<Point, MapError> {
        (self.curve)(s)
    }
}

/// Fixed set of an involution: its branches plus a signed residual whose
/// zero set is the fixed set.
#[derive(Clone)]
pub struct FixedSet {
    pub branches: Vec<FixedCurve>,
    residual: Arc<ResidualFn>,
}

impl FixedSet {
    pub fn new<R>(branches: Vec<FixedCurve>, residual: R) -> Self
    where
        R: Fn(Point) -> f64 + Send + Sync + 'static,
    {
        FixedSet { branches, residual: Arc::new(residual) }
    }

    /// Signed residual; NaN when it cannot be evaluated.
    pub fn signed_residual(&self, p: Point) -> f64 {
        (self.residual)(p)
    }
}

#[derive(Clone)]
pub struct Involution {
    pub map: Arc<dyn PlanarMap>,
    pub fixed: FixedSet,
    /// Period of the x coordinate when the chart is a cylinder lift.
    pub x_period: Option<f64>,
}

impl Involution {
    pub fn apply(&self, p: Point) -> Result<Point, MapError> {
        self.map.apply(p)
    }

    pub fn distance(&self, a: Point, b: Point) -> f64 {
        periodic_distance(a, b, self.x_period)
    }
}

/// Distance with the x coordinate taken modulo `x_period` when present.
pub fn periodic_distance(a: Point, b: Point, x_period: Option<f64>) -> f64 {
    let mut dx = a.x - b.x;
    if let Some(p) = x_period {
        dx -= p * (dx / p).round();
    }
    dx.hypot(a.y - b.y)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Plane,
    Disk { radius: f64 },
    Strip { y_lo: f64, y_hi: f64 },
}

impl Domain {
    pub fn contains(&self, p: Point) -> bool {
        if !p.is_finite() {
            return false;
        }
        match *self {
            Domain::Plane => true,
            Domain::Disk { radius } => p.norm() <= radius,
            Domain::Strip { y_lo, y_hi } => p.y >= y_lo && p.y <= y_hi,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InvolutionId {
    /// The reversor `g`.
    G,
    /// The composed involution `h₂ = f∘g`.
    FG,
}

impl fmt::Display for InvolutionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InvolutionId::G => write!(f, "g"),
            InvolutionId::FG => write!(f, "f∘g"),
        }
    }
}

#[derive(Clone)]
pub struct ReversibleSystem {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub f: Arc<dyn PlanarMap>,
    pub g: Involution,
    pub h2: Involution,
    pub domain: Domain,
    pub x_period: Option<f64>,
    /// Box `(lower-left, upper-right)` used for random validation samples.
    pub sample_box: (Point, Point),
    /// Tolerance at which the reversibility identities are expected to hold.
    pub identity_tol: f64,
}

impl fmt::Debug for ReversibleSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReversibleSystem").field("name", &self.name).field("params", &self.params).field("domain", &self.domain).finish()
    }
}

impl ReversibleSystem {
    pub fn involution(&self, id: InvolutionId) -> &Involution {
        match id {
            InvolutionId::G => &self.g,
            InvolutionId::FG => &self.h2,
        }
    }

    pub fn distance(&self, a: Point, b: Point) -> f64 {
        periodic_distance(a, b, self.x_period)
    }

    /// `f(p)`, refusing points outside the validated domain.
    pub fn step(&self, p: Point) -> Result<Point, MapError> {
        if !self.domain.contains(p) {
            return Err(MapError::OutOfDomain { map: self.name.clone(), point: p });
        }
        let q = self.f.apply(p)?;
        if !q.is_finite() {
            return Err(MapError::NonFinite { what: self.name.clone(), point: p });
        }
        Ok(q)
    }

    pub fn jacobian(&self, p: Point) -> Result<Mat2, MapError> {
        jacobian(self.f.as_ref(), p, default_fd_step(p))
    }

    pub fn random_samples<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<Point> {
        let (lo, hi) = self.sample_box;
        (0..n).map(|_| Point::new(rng.gen_range(lo.x..=hi.x), rng.gen_range(lo.y..=hi.y))).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub max_residual: f64,
    pub pass: bool,
    pub evaluated: usize,
    /// Samples skipped because an orbit left the evaluable domain.
    pub skipped: usize,
}

/// Max over `samples` of `|g(g(x)) − x|`.
pub fn check_involution(g: &Involution, samples: &[Point], tol: f64) -> Result<CheckReport, MapError> {
    assert!(!samples.is_empty(), "check_involution needs samples");
    let mut max_residual: f64 = 0.0;
    for &p in samples {
        let once = g.apply(p)?;
        let twice = g.apply(once)?;
        if !once.is_finite() || !twice.is_finite() {
            return Err(MapError::NonFinite { what: format!("{} at sample", g.map.name()), point: p });
        }
        max_residual = max_residual.max(g.distance(twice, p));
    }
    Ok(CheckReport { max_residual, pass: max_residual <= tol, evaluated: samples.len(), skipped: 0 })
}

/// Max over `samples` of `|f(g(f(g(x)))) − x|`. Samples whose composition
/// leaves the domain are skipped and counted.
pub fn check_reversibility(sys: &ReversibleSystem, samples: &[Point], tol: f64) -> CheckReport {
    let mut max_residual: f64 = 0.0;
    let mut evaluated = 0;
    let mut skipped = 0;
    for &p in samples {
        let chain = (|| {
            let a = sys.g.apply(p)?;
            let b = sys.step(a)?;
            let c = sys.g.apply(b)?;
            sys.step(c)
        })();
        match chain {
            Ok(q) => {
                evaluated += 1;
                max_residual = max_residual.max(sys.distance(q, p));
            }
            Err(e) => {
                log::warn!("reversibility sample skipped: {e}");
                skipped += 1;
            }
        }
    }
    CheckReport { max_residual, pass: evaluated > 0 && max_residual <= tol, evaluated, skipped }
}

pub const BUILTIN_NAMES: [&str; 3] = ["nf-map", "twist-std", "rigid-rotation"];

fn param(params: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

fn reject_unknown(system: &str, params: &BTreeMap<String, f64>, allowed: &dyn Fn(&str) -> bool) -> Result<(), SystemError> {
    for key in params.keys() {
        if !allowed(key) {
            return Err(SystemError::UnknownParameter { system: system.into(), key: key.clone() });
        }
    }
    Ok(())
}

/// Construct a built-in system by name.
///
/// - `rigid-rotation`: `psi` (rotation angle, radians).
/// - `twist-std`: `k` (sine kick), `eps` (cubic kick about the reference
///   circle), `omega` (rotation number of the reference circle, turns).
/// - `nf-map`: `p`, `q`, `mu`, `psi1`…, `a`, `b`, `c`, `tol`, `guard`.
pub fn builtin_system(name: &str, params: &BTreeMap<String, f64>) -> Result<ReversibleSystem, SystemError> {
    match name {
        "rigid-rotation" => {
            reject_unknown(name, params, &|k| k == "psi")?;
            Ok(rigid_rotation(param(params, "psi", 0.3)))
        }
        "twist-std" => {
            reject_unknown(name, params, &|k| matches!(k, "k" | "eps" | "omega"))?;
            twist_std(param(params, "k", 0.5), param(params, "eps", 0.0), param(params, "omega", TwistStd::DEFAULT_OMEGA))
        }
        "nf-map" => {
            reject_unknown(name, params, &|k| {
                matches!(k, "p" | "q" | "mu" | "a" | "b" | "c" | "tol" | "guard")
                    || k.strip_prefix("psi").is_some_and(|d| d.parse::<usize>().is_ok_and(|j| j >= 1))
            })?;
            let nf = resonant_params_from(params)?;
            let mut settings = FlowSettings::default();
            settings.control.tol = param(params, "tol", settings.control.tol);
            settings.guard_radius = param(params, "guard", settings.guard_radius);
            if settings.control.tol <= 0.0 {
                return Err(SystemError::OutOfRange { key: "tol".into(), value: settings.control.tol, reason: "must be > 0".into() });
            }
            if settings.guard_radius <= 0.0 {
                return Err(SystemError::OutOfRange { key: "guard".into(), value: settings.guard_radius, reason: "must be > 0".into() });
            }
            Ok(nf_map(nf, settings))
        }
        other => Err(SystemError::UnknownSystem { name: other.into(), known: BUILTIN_NAMES.to_vec() }),
    }
}

/// Build [`ResonantParams`] from the flat `nf-map` parameter keys.
pub fn resonant_params_from(params: &BTreeMap<String, f64>) -> Result<ResonantParams, SystemError> {
    let p = param(params, "p", 1.0);
    let q = param(params, "q", 5.0);
    for (key, v) in [("p", p), ("q", q)] {
        if v.fract() != 0.0 {
            return Err(SystemError::OutOfRange { key: key.into(), value: v, reason: "must be an integer".into() });
        }
    }
    let mut psi = Vec::new();
    let mut j = 1;
    while let Some(&v) = params.get(&format!("psi{j}")) {
        psi.push(v);
        j += 1;
    }
    if params.keys().any(|k| k.strip_prefix("psi").and_then(|d| d.parse::<usize>().ok()).is_some_and(|i| i > psi.len())) {
        return Err(SystemError::OutOfRange {
            key: "psi".into(),
            value: f64::NAN,
            reason: "psi coefficients must be contiguous from psi1".into(),
        });
    }
    ResonantParams::new(
        p as i64,
        q as i64,
        param(params, "mu", 0.0),
        psi,
        param(params, "a", 0.0),
        param(params, "b", 0.0),
        param(params, "c", 0.0),
    )
    .map_err(|e| SystemError::OutOfRange { key: e.key().into(), value: e.value(), reason: e.to_string() })
}

fn conjugation(x_period: Option<f64>, s_range: (f64, f64)) -> Involution {
    let map = FnMap::linear("conj", Mat2::new(1.0, 0.0, 0.0, -1.0));
    Involution {
        map: Arc::new(map),
        fixed: FixedSet::new(vec![FixedCurve::new("real axis", s_range, |s| Ok(Point::new(s, 0.0)))], |p| p.y),
        x_period,
    }
}

pub fn rigid_rotation(psi: f64) -> ReversibleSystem {
    let f: Arc<dyn PlanarMap> = Arc::new(FnMap::linear("rigid-rotation", Mat2::rotation(psi)));
    let g = conjugation(None, (-1.0, 1.0));
    let (sh, ch) = (0.5 * psi).sin_cos();
    let h2 = Involution {
        map: Arc::new(Composition::new(f.clone(), g.map.clone())),
        fixed: FixedSet::new(vec![FixedCurve::new("axis at psi/2", (-1.0, 1.0), move |s| Ok(Point::new(s * ch, s * sh)))], move |p| {
            -sh * p.x + ch * p.y
        }),
        x_period: None,
    };
    ReversibleSystem {
        name: "rigid-rotation".into(),
        params: BTreeMap::from([("psi".to_string(), psi)]),
        f,
        g,
        h2,
        domain: Domain::Plane,
        x_period: None,
        sample_box: (Point::new(-1.0, -1.0), Point::new(1.0, 1.0)),
        identity_tol: ALGEBRAIC_TOL,
    }
}

/// Drift–kick–drift twist map on the cylinder `x mod 2π`:
///
/// ```text
/// x½ = x + y/2
/// y₁ = y + (k/2) sin x½
/// u  = y₁ − y₀,   u' = u / sqrt(1 − 2 ε sin(x½) u²)      (time-1 flow of u̇ = ε sin(x½) u³)
/// y' = y₀ + u' + (k/2) sin x½
/// x' = x½ + y'/2
/// ```
///
/// with `y₀ = 2π ω`. Every stage is reversed by `g: (x, y) ↦ (−x, y)`, so the
/// symmetric composition is `g`-reversible. For `k = 0` the circle `y = y₀` is
/// invariant with rotation number `ω` and the cubic kick perturbs its
/// neighbourhood only at third order in `y − y₀`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwistStd {
    pub k: f64,
    pub eps: f64,
    pub omega: f64,
}

impl TwistStd {
    pub const DEFAULT_OMEGA: f64 = 0.618_033_988_749_894_8;

    pub fn y_ref(&self) -> f64 {
        2.0 * PI * self.omega
    }

    fn stage(&self, p: Point) -> Option<(f64, f64, f64, f64, f64)> {
        let xh = p.x + 0.5 * p.y;
        let s = xh.sin();
        let y1 = p.y + 0.5 * self.k * s;
        let u = y1 - self.y_ref();
        let d = 1.0 - 2.0 * self.eps * s * u * u;
        if d <= 0.0 {
            return None;
        }
        Some((xh, s, u, d, y1))
    }

    pub fn forward(&self, p: Point) -> Option<Point> {
        let (xh, s, u, d, _) = self.stage(p)?;
        let y2 = self.y_ref() + u / d.sqrt();
        let yn = y2 + 0.5 * self.k * s;
        Some(Point::new(xh + 0.5 * yn, yn))
    }

    pub fn backward(&self, p: Point) -> Option<Point> {
        let xh = p.x - 0.5 * p.y;
        let s = xh.sin();
        let y2 = p.y - 0.5 * self.k * s;
        let up = y2 - self.y_ref();
        let d = 1.0 + 2.0 * self.eps * s * up * up;
        if d <= 0.0 {
            return None;
        }
        let y1 = self.y_ref() + up / d.sqrt();
        let y = y1 - 0.5 * self.k * s;
        Some(Point::new(xh - 0.5 * y, y))
    }

    pub fn jacobian(&self, p: Point) -> Option<Mat2> {
        let (xh, s, u, d, _) = self.stage(p)?;
        let c = xh.cos();
        let drift = Mat2::new(1.0, 0.5, 0.0, 1.0);
        let kick = Mat2::new(1.0, 0.0, 0.5 * self.k * c, 1.0);
        let d15 = d.powf(-1.5);
        // u' = u d^{-1/2}, d = 1 − 2ε sin(x½) u²
        let du_du = d.powf(-0.5) + 2.0 * self.eps * s * u * u * d15;
        let du_dx = self.eps * c * u * u * u * d15;
        let cubic = Mat2::new(1.0, 0.0, du_dx, du_du);
        Some(drift * kick * cubic * kick * drift)
    }

    pub fn domain(&self) -> Domain {
        if self.eps == 0.0 {
            Domain::Plane
        } else {
            let half = 0.9 / (2.0 * self.eps.abs()).sqrt();
            Domain::Strip { y_lo: self.y_ref() - half, y_hi: self.y_ref() + half }
        }
    }
}

pub fn twist_std(k: f64, eps: f64, omega: f64) -> Result<ReversibleSystem, SystemError> {
    for (key, v) in [("k", k), ("eps", eps), ("omega", omega)] {
        if !v.is_finite() {
            return Err(SystemError::OutOfRange { key: key.into(), value: v, reason: "must be finite".into() });
        }
    }
    if eps < 0.0 {
        return Err(SystemError::OutOfRange { key: "eps".into(), value: eps, reason: "must be ≥ 0".into() });
    }
    let tw = TwistStd { k, eps, omega };
    let name = "twist-std".to_string();
    let domain = tw.domain();
    let out_of_domain = {
        let name = name.clone();
        move |p: Point| MapError::OutOfDomain { map: name.clone(), point: p }
    };
    let (ood_f, ood_j, ood_i) = (out_of_domain.clone(), out_of_domain.clone(), out_of_domain);
    let f: Arc<dyn PlanarMap> = Arc::new(
        FnMap::new(name.clone(), move |p| tw.forward(p).ok_or_else(|| ood_f(p)))
            .with_jacobian(move |p| tw.jacobian(p).ok_or_else(|| ood_j(p)))
            .with_inverse(move |p| tw.backward(p).ok_or_else(|| ood_i(p))),
    );
    let (s_lo, s_hi) = match domain {
        Domain::Strip { y_lo, y_hi } => (y_lo, y_hi),
        _ => (-2.0 * PI, 2.0 * PI),
    };
    let period = Some(2.0 * PI);
    let g = Involution {
        map: Arc::new(FnMap::linear("mirror-x", Mat2::new(-1.0, 0.0, 0.0, 1.0))),
        fixed: FixedSet::new(
            vec![
                FixedCurve::new("x = 0", (s_lo, s_hi), |s| Ok(Point::new(0.0, s))),
                FixedCurve::new("x = π", (s_lo, s_hi), |s| Ok(Point::new(PI, s))),
            ],
            |p| p.x.sin(),
        ),
        x_period: period,
    };
    let h2 = Involution {
        map: Arc::new(Composition::new(f.clone(), g.map.clone())),
        fixed: FixedSet::new(
            vec![
                FixedCurve::new("x = y/2", (s_lo, s_hi), |s| Ok(Point::new(0.5 * s, s))),
                FixedCurve::new("x = y/2 + π", (s_lo, s_hi), |s| Ok(Point::new(0.5 * s + PI, s))),
            ],
            |p| (p.x - 0.5 * p.y).sin(),
        ),
        x_period: period,
    };
    let y_half = match domain {
        Domain::Strip { .. } => PI.min(0.5 / (2.0 * eps).sqrt()),
        _ => PI,
    };
    let y_mid = if eps == 0.0 { 0.0 } else { tw.y_ref() };
    Ok(ReversibleSystem {
        name,
        params: BTreeMap::from([("k".into(), k), ("eps".into(), eps), ("omega".into(), omega)]),
        f,
        g,
        h2,
        domain,
        x_period: period,
        sample_box: (Point::new(-PI, y_mid - y_half), Point::new(PI, y_mid + y_half)),
        identity_tol: ALGEBRAIC_TOL,
    })
}

/// `T = R_{2πp/q} ∘ F` with `F` the time-1 map of the normal-form flow,
/// reversed by complex conjugation.
pub fn nf_map(params: ResonantParams, settings: FlowSettings) -> ReversibleSystem {
    let guard = settings.guard_radius;
    let map = NormalFormMap::new(params.clone(), settings);
    let f: Arc<dyn PlanarMap> = Arc::new(map);
    let g = conjugation(None, (-guard, guard));
    let alpha = PI * params.p as f64 / params.q as f64;
    let (sa, ca) = alpha.sin_cos();
    let h2_map: Arc<dyn PlanarMap> = Arc::new(Composition::new(f.clone(), g.map.clone()));
    let residual = {
        let h2_map = h2_map.clone();
        move |p: Point| -> f64 {
            match h2_map.apply(p) {
                Ok(q) => (q.x - p.x) * (-sa) + (q.y - p.y) * ca,
                Err(_) => f64::NAN,
            }
        }
    };
    let curve_residual = residual.clone();
    // The fixed curve of f∘g bends away from the line at angle πp/q; each
    // curve point is recovered by a 1-D solve along the line's normal.
    let curve = move |s: f64| -> Result<Point, MapError> {
        let base = Point::new(s * ca, s * sa);
        let along = |t: f64| curve_residual(Point::new(base.x - t * sa, base.y + t * ca));
        let width = 0.02 + 0.5 * s.abs();
        let brs = roots::scan_brackets(along, -width, width, 41);
        let best = brs.into_iter().filter_map(|b| roots::brent(along, b, 1e-15, 200)).min_by(|a, b| a.root.abs().total_cmp(&b.root.abs()));
        match best {
            Some(r) => Ok(Point::new(base.x - r.root * sa, base.y + r.root * ca)),
            None => Err(MapError::NonFinite { what: "f∘g fixed curve".into(), point: base }),
        }
    };
    let h2 = Involution {
        map: h2_map,
        fixed: FixedSet::new(vec![FixedCurve::new("fix(f∘g)", (-guard, guard), curve)], residual),
        x_period: None,
    };
    let box_half = 0.3_f64.min(0.5 * guard);
    let mut pmap = BTreeMap::from([
        ("p".to_string(), params.p as f64),
        ("q".to_string(), params.q as f64),
        ("mu".to_string(), params.mu),
        ("a".to_string(), params.a),
        ("b".to_string(), params.b),
        ("c".to_string(), params.c),
        ("tol".to_string(), settings.control.tol),
        ("guard".to_string(), guard),
    ]);
    for (j, v) in params.psi.iter().enumerate() {
        pmap.insert(format!("psi{}", j + 1), *v);
    }
    ReversibleSystem {
        name: "nf-map".into(),
        params: pmap,
        f,
        g,
        h2,
        domain: Domain::Disk { radius: guard },
        x_period: None,
        sample_box: (Point::new(-box_half, -box_half), Point::new(box_half, box_half)),
        identity_tol: INTEGRATED_TOL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn samples(sys: &ReversibleSystem, n: usize) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        sys.random_samples(n, &mut rng)
    }

    #[test]
    fn reflection_is_exact_involution() {
        let g = conjugation(None, (-1.0, 1.0));
        let pts = [Point::new(0.3, -2.0), Point::new(1e3, 4.0)];
        let r = check_involution(&g, &pts, 1e-12).unwrap();
        assert_eq!(r.max_residual, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn conjugation_on_unit_circle() {
        let g = conjugation(None, (-1.0, 1.0));
        let pts: Vec<Point> = (0..32)
            .map(|i| {
                let t = i as f64 * 0.2;
                Point::new(t.cos(), t.sin())
            })
            .collect();
        assert_eq!(check_involution(&g, &pts, 1e-12).unwrap().max_residual, 0.0);
    }

    #[test]
    fn quarter_turn_is_not_an_involution() {
        let rot = Involution {
            map: Arc::new(FnMap::linear("rot90", Mat2::new(0.0, -1.0, 1.0, 0.0))),
            fixed: FixedSet::new(vec![], |_| f64::NAN),
            x_period: None,
        };
        let r = check_involution(&rot, &[Point::new(1.0, 0.0)], 1e-12).unwrap();
        assert!((r.max_residual - 2.0).abs() < 1e-15);
        assert!(!r.pass);
    }

    #[test]
    fn non_finite_involution_output_names_sample() {
        let bad = Involution {
            map: Arc::new(FnMap::new("bad", |p: Point| Ok(Point::new(1.0 / (p.x - 1.0) * 0.0 / 0.0, p.y)))),
            fixed: FixedSet::new(vec![], |_| f64::NAN),
            x_period: None,
        };
        let err = check_involution(&bad, &[Point::new(0.5, 0.5)], 1e-12).unwrap_err();
        assert!(err.to_string().contains("5.0"));
    }

    #[test]
    fn identity_map_is_reversible_for_any_involution() {
        let mut sys = rigid_rotation(0.0);
        sys.f = Arc::new(FnMap::linear("id", Mat2::IDENTITY));
        let r = check_reversibility(&sys, &samples(&sys, 50), 1e-12);
        assert_eq!(r.max_residual, 0.0);
    }

    #[test]
    fn rigid_rotation_reversible_and_fixed_sets() {
        let sys = builtin_system("rigid-rotation", &BTreeMap::from([("psi".into(), 0.3)])).unwrap();
        let pts = samples(&sys, 200);
        assert!(check_reversibility(&sys, &pts, 1e-12).max_residual < 1e-15);
        assert!(check_involution(&sys.h2, &pts, 1e-12).unwrap().pass);
        for s in [-0.9, 0.1, 0.7] {
            for inv in [&sys.g, &sys.h2] {
                let p = inv.fixed.branches[0].point(s).unwrap();
                assert!(inv.apply(p).unwrap().dist(p) <= 1e-10);
                assert!(inv.fixed.signed_residual(p).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn twist_std_reversible_at_algebraic_tolerance() {
        let sys = builtin_system("twist-std", &BTreeMap::from([("k".into(), 0.5)])).unwrap();
        let pts = samples(&sys, 1000);
        let r = check_reversibility(&sys, &pts, 1e-12);
        assert!(r.pass, "{r:?}");
        assert_eq!(r.skipped, 0);
        assert!(check_involution(&sys.g, &pts, 1e-12).unwrap().pass);
        assert!(check_involution(&sys.h2, &pts, 1e-12).unwrap().pass);
    }

    #[test]
    fn twist_std_with_cubic_kick_stays_reversible() {
        let sys = twist_std(0.2, 0.03, 0.3).unwrap();
        let pts = samples(&sys, 500);
        assert!(check_reversibility(&sys, &pts, 1e-12).pass);
        for p in pts.iter().take(50) {
            let q = sys.f.apply(*p).unwrap();
            let back = sys.f.inverse(q).unwrap().unwrap();
            assert!(back.dist(*p) < 1e-12);
        }
    }

    #[test]
    fn twist_std_fixed_curves_are_fixed() {
        let sys = twist_std(0.7, 0.02, 0.4).unwrap();
        for inv in [&sys.g, &sys.h2] {
            for br in &inv.fixed.branches {
                for s in [br.s_range.0 * 0.5 + br.s_range.1 * 0.5, br.s_range.1 - 0.1] {
                    let p = br.point(s).unwrap();
                    assert!(inv.distance(inv.apply(p).unwrap(), p) <= 1e-10, "{} at {s}", br.label);
                }
            }
        }
    }

    #[test]
    fn exact_jacobians_match_lines() {
        let rot = rigid_rotation(0.8);
        let j = rot.jacobian(Point::new(2.0, -1.0)).unwrap();
        assert!(j.max_abs_diff(&Mat2::rotation(0.8)) < 1e-15);
        let id = FnMap::new("id", Ok);
        let j = jacobian(&id, Point::new(0.3, 0.1), 1e-6).unwrap();
        assert!(j.max_abs_diff(&Mat2::IDENTITY) < 1e-10);
    }

    #[test]
    fn central_differences_converge_quadratically() {
        let sys = twist_std(0.9, 0.05, 0.3).unwrap();
        let p = Point::new(0.4, 2.0);
        let exact = sys.jacobian(p).unwrap();
        let err = |h: f64| fd_jacobian(sys.f.as_ref(), p, h).unwrap().max_abs_diff(&exact);
        let (e1, e2) = (err(1e-3), err(5e-4));
        assert!(e1 / e2 >= 3.0, "{e1} {e2}");
    }

    #[test]
    fn unknown_system_and_params_rejected() {
        assert!(matches!(builtin_system("henon", &BTreeMap::new()), Err(SystemError::UnknownSystem { .. })));
        assert!(matches!(
            builtin_system("rigid-rotation", &BTreeMap::from([("k".into(), 1.0)])),
            Err(SystemError::UnknownParameter { .. })
        ));
        assert!(matches!(builtin_system("nf-map", &BTreeMap::from([("q".into(), 4.0)])), Err(SystemError::OutOfRange { .. })));
    }

    #[test]
    fn strip_domain_refuses_points() {
        let sys = twist_std(0.0, 0.1, 0.3).unwrap();
        let far = Point::new(0.0, sys.params["omega"] * 2.0 * PI + 10.0);
        assert!(matches!(sys.step(far), Err(MapError::OutOfDomain { .. })));
    }
}
