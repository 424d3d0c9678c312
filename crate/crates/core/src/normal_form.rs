//! Resonant normal-form flows and their equilibria.
//!
//! The flow is
//!
//! ```text
//! ż = iμz + i Σ_j Ψ_j |z|^{2j} z + iA z*^{q−1} + iB z^{q+1} + iC z z*^q
//! ```
//!
//! which is conservative when `B = C = 0`. In polar coordinates with the
//! rescaled angle `φ = q·arg z` it reads
//!
//! ```text
//! ρ̇ = ρ^{q−1} (A + (C−B)ρ²) sin φ
//! φ̇ = q (μ + Ψ(ρ)) + q ρ^{q−2} (A + (C+B)ρ²) cos φ
//! ```
//!
//! with `Ψ(ρ) = Σ_j Ψ_j ρ^{2j}`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::{integrate, IntegrationError, StepControl};
use crate::linalg::Mat2;
use crate::roots;
use crate::system::{MapError, PlanarMap, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("q must be ≥ 5 (got {0})")]
    SmallQ(i64),
    #[error("p and q must be coprime (gcd({p}, {q}) = {gcd})")]
    NotCoprime { p: i64, q: i64, gcd: i64 },
    #[error("coefficient `{key}` is not finite ({value})")]
    NonFinite { key: String, value: f64 },
}

impl ParamError {
    pub fn key(&self) -> &str {
        match self {
            ParamError::SmallQ(_) => "q",
            ParamError::NotCoprime { .. } => "p",
            ParamError::NonFinite { key, .. } => key,
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            ParamError::SmallQ(q) => *q as f64,
            ParamError::NotCoprime { p, .. } => *p as f64,
            ParamError::NonFinite { value, .. } => *value,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NfError {
    #[error("polar evaluation needs ρ > 0 (got {0})")]
    Domain(f64),
    #[error("Ψ₁ must be nonzero")]
    ZeroPsi1,
    #[error("{branch}: root refinement failed on [{lo}, {hi}]")]
    RootFailure { branch: String, lo: f64, hi: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonantParams {
    pub p: i64,
    pub q: i64,
    pub mu: f64,
    /// `Ψ₁, Ψ₂, …`
    pub psi: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ResonantParams {
    pub fn new(p: i64, q: i64, mu: f64, psi: Vec<f64>, a: f64, b: f64, c: f64) -> Result<Self, ParamError> {
        if q < 5 {
            return Err(ParamError::SmallQ(q));
        }
        let g = gcd(p, q);
        if g != 1 {
            return Err(ParamError::NotCoprime { p, q, gcd: g });
        }
        let mut named = vec![("mu".to_string(), mu), ("a".into(), a), ("b".into(), b), ("c".into(), c)];
        named.extend(psi.iter().enumerate().map(|(j, v)| (format!("psi{}", j + 1), *v)));
        if let Some((key, value)) = named.into_iter().find(|(_, v)| !v.is_finite()) {
            return Err(ParamError::NonFinite { key, value });
        }
        Ok(ResonantParams { p, q, mu, psi, a, b, c })
    }

    /// Default length of the Ψ list: `⌊(q−1)/2⌋` in the conservative case,
    /// `⌊q/2⌋` otherwise.
    pub fn default_psi_len(q: i64, conservative: bool) -> usize {
        if conservative {
            ((q - 1) / 2) as usize
        } else {
            (q / 2) as usize
        }
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        ResonantParams { mu, ..self.clone() }
    }

    pub fn is_conservative(&self) -> bool {
        self.b == 0.0 && self.c == 0.0
    }

    pub fn psi1(&self) -> f64 {
        self.psi.first().copied().unwrap_or(0.0)
    }

    /// Rotation angle `2πp/q` of the resonant rotation.
    pub fn resonance_angle(&self) -> f64 {
        2.0 * PI * self.p as f64 / self.q as f64
    }

    /// `Ψ(ρ) = Σ_j Ψ_j ρ^{2j}`.
    pub fn psi_poly(&self, rho: f64) -> f64 {
        let r2 = rho * rho;
        self.psi.iter().rev().fold(0.0, |acc, c| (acc + c) * r2)
    }

    pub fn psi_poly_deriv(&self, rho: f64) -> f64 {
        let r2 = rho * rho;
        let mut out = 0.0;
        let mut pow = rho;
        for (j, c) in self.psi.iter().enumerate() {
            out += 2.0 * (j + 1) as f64 * c * pow;
            pow *= r2;
        }
        out
    }

    /// Default upper end of the small-ρ window, `3·√(|μ|/|Ψ₁|)`.
    pub fn rho_max(&self) -> f64 {
        3.0 * (self.mu.abs() / self.psi1().abs()).sqrt()
    }
}

/// Velocity of the normal-form field at `z`.
pub fn eval_field_cartesian(params: &ResonantParams, z: Complex64) -> Complex64 {
    let q = params.q as u32;
    let zc = z.conj();
    let r2 = z.norm_sqr();
    let i = Complex64::i();
    let mut v = Complex64::new(params.mu, 0.0) + params.psi_poly(r2.sqrt());
    v *= z;
    v += params.a * zc.powu(q - 1);
    if params.b != 0.0 {
        v += params.b * z.powu(q + 1);
    }
    if params.c != 0.0 {
        v += params.c * z * zc.powu(q);
    }
    i * v
}

/// Wirtinger derivatives `(∂V/∂z, ∂V/∂z*)`.
pub fn field_wirtinger(params: &ResonantParams, z: Complex64) -> (Complex64, Complex64) {
    let q = params.q as u32;
    let zc = z.conj();
    let r2 = z.norm_sqr();
    let i = Complex64::i();
    let mut vz = Complex64::new(params.mu, 0.0);
    let mut vzc = Complex64::new(0.0, 0.0);
    let mut pow = 1.0;
    for (j, c) in params.psi.iter().enumerate() {
        let j = (j + 1) as f64;
        // pow = |z|^{2(j−1)}
        vz += c * (j + 1.0) * pow * r2;
        vzc += c * j * pow * z * z;
        pow *= r2;
    }
    vzc += params.a * (q as f64 - 1.0) * zc.powu(q - 2);
    vz += params.b * (q as f64 + 1.0) * z.powu(q);
    vz += params.c * zc.powu(q);
    vzc += params.c * q as f64 * z * zc.powu(q - 1);
    (i * vz, i * vzc)
}

/// Real 2×2 derivative of the field at `z = x + iy`.
pub fn field_jacobian(params: &ResonantParams, z: Complex64) -> Mat2 {
    let (vz, vzc) = field_wirtinger(params, z);
    let vx = vz + vzc;
    let vy = Complex64::i() * (vz - vzc);
    Mat2::new(vx.re, vy.re, vx.im, vy.im)
}

/// Planar divergence `2·Re(∂V/∂z)`.
pub fn divergence_cartesian(params: &ResonantParams, z: Complex64) -> f64 {
    2.0 * field_wirtinger(params, z).0.re
}

/// `(ρ̇, φ̇)` with `φ` the rescaled angle.
pub fn eval_field_polar(params: &ResonantParams, rho: f64, phi: f64) -> Result<(f64, f64), NfError> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(NfError::Domain(rho));
    }
    let q = params.q as f64;
    let r2 = rho * rho;
    let big_p = params.a + (params.c - params.b) * r2;
    let big_q = params.a + (params.c + params.b) * r2;
    let (s, c) = phi.sin_cos();
    let rho_dot = rho.powi(params.q as i32 - 1) * big_p * s;
    let phi_dot = q * (params.mu + params.psi_poly(rho)) + q * rho.powi(params.q as i32 - 2) * big_q * c;
    Ok((rho_dot, phi_dot))
}

/// Derivative of `(ρ̇, φ̇)` with respect to `(ρ, φ)`.
pub fn polar_jacobian(params: &ResonantParams, rho: f64, phi: f64) -> Result<Mat2, NfError> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(NfError::Domain(rho));
    }
    let qi = params.q as i32;
    let q = params.q as f64;
    let r2 = rho * rho;
    let (bb, cc) = (params.b, params.c);
    let big_p = params.a + (cc - bb) * r2;
    let big_q = params.a + (cc + bb) * r2;
    let (s, c) = phi.sin_cos();
    let drr = ((q - 1.0) * rho.powi(qi - 2) * big_p + 2.0 * (cc - bb) * rho.powi(qi)) * s;
    let drp = rho.powi(qi - 1) * big_p * c;
    let dpr = q * params.psi_poly_deriv(rho) + q * ((q - 2.0) * rho.powi(qi - 3) * big_q + 2.0 * (cc + bb) * rho.powi(qi - 1)) * c;
    let dpp = -q * rho.powi(qi - 2) * big_q * s;
    Ok(Mat2::new(drr, drp, dpr, dpp))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSettings {
    pub control: StepControl,
    /// Integration fails once `|z|` exceeds this radius.
    pub guard_radius: f64,
}

impl Default for FlowSettings {
    fn default() -> Self {
        FlowSettings { control: StepControl::default(), guard_radius: 1.0 }
    }
}

fn norm2(y: &[f64; 2]) -> f64 {
    y[0].hypot(y[1])
}

/// Flow of the field for signed time `t`.
pub fn integrate_flow(params: &ResonantParams, z0: Complex64, t: f64, settings: &FlowSettings) -> Result<Complex64, IntegrationError> {
    let field = |y: &[f64; 2]| {
        let v = eval_field_cartesian(params, Complex64::new(y[0], y[1]));
        [v.re, v.im]
    };
    let tr = integrate(field, [z0.re, z0.im], t, settings.control, norm2, settings.guard_radius)?;
    Ok(Complex64::new(tr.state[0], tr.state[1]))
}

/// Flow together with its derivative, from the variational equation.
pub fn integrate_flow_with_jacobian(
    params: &ResonantParams,
    z0: Complex64,
    t: f64,
    settings: &FlowSettings,
) -> Result<(Complex64, Mat2), IntegrationError> {
    let (z, n) = integrate_flow_with_offset(params, z0, t, settings)?;
    Ok((z, Mat2::IDENTITY + n))
}

/// Flow together with `DF − I`. Integrating the offset directly keeps its
/// relative precision when `DF` is close to the identity, which matters for
/// the nearly defective linearizations of slow equilibria.
pub fn integrate_flow_with_offset(
    params: &ResonantParams,
    z0: Complex64,
    t: f64,
    settings: &FlowSettings,
) -> Result<(Complex64, Mat2), IntegrationError> {
    let field = |y: &[f64; 6]| {
        let z = Complex64::new(y[0], y[1]);
        let v = eval_field_cartesian(params, z);
        let j = field_jacobian(params, z);
        let n = Mat2::new(y[2], y[3], y[4], y[5]);
        let dn = j + j * n;
        [v.re, v.im, dn.0[0][0], dn.0[0][1], dn.0[1][0], dn.0[1][1]]
    };
    let guard = |y: &[f64; 6]| y[0].hypot(y[1]);
    let y0 = [z0.re, z0.im, 0.0, 0.0, 0.0, 0.0];
    let tr = integrate(field, y0, t, settings.control, guard, settings.guard_radius)?;
    let s = tr.state;
    Ok((Complex64::new(s[0], s[1]), Mat2::new(s[2], s[3], s[4], s[5])))
}

/// Orbit `z₀, T z₀, …, T^{n−1} z₀` and the offset `K` with
/// `DT^n(z₀) = R^n (I + K)`, accumulated along the orbit so that `K` keeps
/// full relative precision.
///
/// With `DT(z_j) = R (I + N_j)`, `K_{j+1} = Ñ_j + K_j + Ñ_j K_j` where
/// `Ñ_j = R^{−j} N_j R^j`.
pub fn monodromy_offset(
    params: &ResonantParams,
    z0: Complex64,
    n: usize,
    settings: &FlowSettings,
) -> Result<(Vec<Complex64>, Complex64, Mat2), IntegrationError> {
    let alpha = params.resonance_angle();
    let rot = Complex64::from_polar(1.0, alpha);
    let mut k = Mat2::new(0.0, 0.0, 0.0, 0.0);
    let mut z = z0;
    let mut points = Vec::with_capacity(n);
    for j in 0..n {
        points.push(z);
        let (fz, nj) = integrate_flow_with_offset(params, z, 1.0, settings)?;
        let rj = Mat2::rotation(alpha * j as f64);
        let rj_inv = Mat2::rotation(-alpha * j as f64);
        let nt = rj_inv * nj * rj;
        k = nt + k + nt * k;
        z = rot * fz;
    }
    Ok((points, z, k))
}

/// `T = R_{2πp/q} ∘ F` with `F` the time-1 flow map.
pub fn poincare_map(params: &ResonantParams, z: Complex64, settings: &FlowSettings) -> Result<Complex64, IntegrationError> {
    let f = integrate_flow(params, z, 1.0, settings)?;
    Ok(Complex64::from_polar(1.0, params.resonance_angle()) * f)
}

/// The Poincaré map as a [`PlanarMap`].
#[derive(Clone, Debug)]
pub struct NormalFormMap {
    pub params: ResonantParams,
    pub settings: FlowSettings,
    rotation: Mat2,
}

impl NormalFormMap {
    pub fn new(params: ResonantParams, settings: FlowSettings) -> Self {
        let rotation = Mat2::rotation(params.resonance_angle());
        NormalFormMap { params, settings, rotation }
    }

    fn wrap(&self, p: Point, e: IntegrationError) -> MapError {
        MapError::Integration { map: "nf-map".into(), point: p, source: e }
    }
}

impl PlanarMap for NormalFormMap {
    fn name(&self) -> &str {
        "nf-map"
    }

    fn apply(&self, p: Point) -> Result<Point, MapError> {
        let z = poincare_map(&self.params, Complex64::new(p.x, p.y), &self.settings).map_err(|e| self.wrap(p, e))?;
        Ok(Point::new(z.re, z.im))
    }

    fn exact_jacobian(&self, p: Point) -> Option<Result<Mat2, MapError>> {
        Some(
            integrate_flow_with_jacobian(&self.params, Complex64::new(p.x, p.y), 1.0, &self.settings)
                .map(|(_, m)| self.rotation * m)
                .map_err(|e| self.wrap(p, e)),
        )
    }

    fn inverse(&self, p: Point) -> Option<Result<Point, MapError>> {
        let back = Complex64::from_polar(1.0, -self.params.resonance_angle()) * Complex64::new(p.x, p.y);
        Some(integrate_flow(&self.params, back, -1.0, &self.settings).map(|z| Point::new(z.re, z.im)).map_err(|e| self.wrap(p, e)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EquilibriumType {
    Center,
    Saddle,
    Sink,
    Source,
    Degenerate,
}

impl std::fmt::Display for EquilibriumType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EquilibriumType::Center => "center",
            EquilibriumType::Saddle => "saddle",
            EquilibriumType::Sink => "sink",
            EquilibriumType::Source => "source",
            EquilibriumType::Degenerate => "degenerate",
        };
        f.write_str(s)
    }
}

/// Relative collar on eigenvalue real parts used to classify equilibria.
pub const FLOW_COLLAR: f64 = 1e-9;

/// Classify a linearization by its eigenvalues. Real parts within
/// `max(rel_collar·max|λ|, floor)` of zero count as zero; `floor` absorbs
/// rounding in the linearization itself.
pub fn classify_flow(eigs: (Complex64, Complex64), rel_collar: f64, floor: f64) -> EquilibriumType {
    let (l1, l2) = eigs;
    let scale = l1.norm().max(l2.norm());
    if scale == 0.0 || !scale.is_finite() {
        return EquilibriumType::Degenerate;
    }
    let collar = (rel_collar * scale).max(floor);
    if l1.norm().min(l2.norm()) <= collar {
        return EquilibriumType::Degenerate;
    }
    let (r1, r2) = (l1.re, l2.re);
    if r1.abs() <= collar && r2.abs() <= collar {
        EquilibriumType::Center
    } else if r1 < -collar && r2 < -collar {
        EquilibriumType::Sink
    } else if r1 > collar && r2 > collar {
        EquilibriumType::Source
    } else if r1 * r2 < 0.0 && r1.abs() > collar && r2.abs() > collar {
        EquilibriumType::Saddle
    } else {
        EquilibriumType::Degenerate
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub rho: f64,
    /// Rescaled angle `q·θ`, reduced to `(−π, π]`.
    pub phi: f64,
    /// Polar angle `θ` of this copy, in `[0, 2π)`.
    pub theta: f64,
    pub linearization: Mat2,
    pub eigenvalues: (Complex64, Complex64),
    pub kind: EquilibriumType,
    pub symmetric: bool,
    /// `|(ρ̇, φ̇)|` at the returned point.
    pub residual: f64,
}

impl Equilibrium {
    pub fn z(&self) -> Complex64 {
        Complex64::from_polar(self.rho, self.theta)
    }
}

/// Tolerance on `|sin φ|` for the symmetric tag.
pub const SYMMETRIC_TOL: f64 = 1e-10;

fn reduce_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Eigenvalue noise level of a computed linearization.
pub fn rounding_floor(lin: &Mat2) -> f64 {
    64.0 * f64::EPSILON * lin.0.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn build_equilibrium(params: &ResonantParams, rho: f64, phi: f64, l: i64) -> Result<Equilibrium, NfError> {
    let q = params.q as f64;
    let (rd, pd) = eval_field_polar(params, rho, phi)?;
    let lin = polar_jacobian(params, rho, phi)?;
    let eig = lin.eigenvalues();
    let theta = ((phi + 2.0 * PI * l as f64) / q).rem_euclid(2.0 * PI);
    Ok(Equilibrium {
        rho,
        phi: reduce_angle(phi),
        theta,
        linearization: lin,
        eigenvalues: eig,
        kind: classify_flow(eig, FLOW_COLLAR, rounding_floor(&lin)),
        symmetric: phi.sin().abs() <= SYMMETRIC_TOL,
        residual: rd.hypot(pd),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSearch {
    /// Upper end of the ρ window; `None` selects [`ResonantParams::rho_max`].
    pub rho_max: Option<f64>,
    /// Grid size of the sign-change scan.
    pub scan_points: usize,
    pub xtol: f64,
}

impl Default for EquilibriumSearch {
    fn default() -> Self {
        EquilibriumSearch { rho_max: None, scan_points: 2000, xtol: 1e-15 }
    }
}

pub fn find_equilibria(params: &ResonantParams) -> Result<Vec<Equilibrium>, NfError> {
    find_equilibria_with(params, &EquilibriumSearch::default())
}

/// Every equilibrium with `0 < ρ ≤ ρ_max`, all `q` copies of each root
/// included. Symmetric roots come first, ordered by `(ρ, θ)`.
pub fn find_equilibria_with(params: &ResonantParams, search: &EquilibriumSearch) -> Result<Vec<Equilibrium>, NfError> {
    if params.psi1() == 0.0 {
        return Err(NfError::ZeroPsi1);
    }
    let rho_max = search.rho_max.unwrap_or_else(|| params.rho_max());
    let mut out = Vec::new();
    if !(rho_max > 0.0) {
        return Ok(out);
    }
    let q = params.q;
    let qi = q as i32;
    let lo = rho_max * 1e-6;
    for (sign, phi, label) in [(1.0, 0.0, "symmetric φ=0"), (-1.0, PI, "symmetric φ=π")] {
        let g = |rho: f64| params.mu + params.psi_poly(rho) + sign * rho.powi(qi - 2) * (params.a + (params.b + params.c) * rho * rho);
        for br in roots::scan_brackets(g, lo, rho_max, search.scan_points) {
            let r =
                roots::brent(g, br, search.xtol, 300).ok_or_else(|| NfError::RootFailure { branch: label.into(), lo: br.lo, hi: br.hi })?;
            for l in 0..q {
                out.push(build_equilibrium(params, r.root, phi, l)?);
            }
        }
    }
    out.extend(asymmetric_equilibria(params, rho_max)?);
    out.sort_by(|a, b| (!a.symmetric).cmp(&!b.symmetric).then(a.rho.total_cmp(&b.rho)).then(a.theta.total_cmp(&b.theta)));
    out.dedup_by(|a, b| a.symmetric == b.symmetric && a.rho == b.rho && a.theta == b.theta);
    Ok(out)
}

/// Off-axis equilibria (`sin φ ≠ 0`). The radial factor forces
/// `ρ² = A/(B−C)`; the angle then follows from `φ̇ = 0`, and one Newton pass
/// on the full polar system checks the seed.
fn asymmetric_equilibria(params: &ResonantParams, rho_max: f64) -> Result<Vec<Equilibrium>, NfError> {
    let denom = params.b - params.c;
    if denom == 0.0 || params.a == 0.0 {
        return Ok(Vec::new());
    }
    let r2 = params.a / denom;
    if !(r2 > 0.0) {
        return Ok(Vec::new());
    }
    let rho = r2.sqrt();
    if rho > rho_max {
        return Ok(Vec::new());
    }
    let qi = params.q as i32;
    let big_q = params.a + (params.b + params.c) * r2;
    let scale = rho.powi(qi - 2) * big_q;
    if scale.abs() < 1e-300 {
        return Ok(Vec::new());
    }
    let cos_phi = -(params.mu + params.psi_poly(rho)) / scale;
    if !(cos_phi.abs() < 1.0) {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for sign in [1.0, -1.0] {
        let phi0 = sign * cos_phi.acos();
        if phi0.sin().abs() <= SYMMETRIC_TOL {
            continue;
        }
        let (rho_n, phi_n) = newton_polar(params, rho, phi0);
        for l in 0..params.q {
            out.push(build_equilibrium(params, rho_n, phi_n, l)?);
        }
    }
    Ok(out)
}

fn newton_polar(params: &ResonantParams, rho: f64, phi: f64) -> (f64, f64) {
    let (mut r, mut p) = (rho, phi);
    let res = |r: f64, p: f64| eval_field_polar(params, r, p).map(|(a, b)| a.hypot(b)).unwrap_or(f64::INFINITY);
    let scale = rho.powi(params.q as i32 - 2) * (params.a.abs() + (params.b.abs() + params.c.abs()) * rho * rho);
    let tol = 1e-14 * scale.max(1e-300);
    for _ in 0..8 {
        let cur = res(r, p);
        if cur <= tol {
            break;
        }
        let Ok((fr, fp)) = eval_field_polar(params, r, p) else { break };
        let Ok(j) = polar_jacobian(params, r, p) else { break };
        let Some([dr, dp]) = j.solve([fr, fp]) else { break };
        let (nr, np) = (r - dr, p - dp);
        if !(nr > 0.0) || res(nr, np) >= cur {
            break;
        }
        r = nr;
        p = np;
    }
    (r, p)
}

/// Counts of symmetric and asymmetric roots in the `φ`-plane (one per
/// rescaled angle, i.e. divided by the `q` copies).
pub fn distinct_counts(eqs: &[Equilibrium], q: i64) -> (usize, usize) {
    let sym = eqs.iter().filter(|e| e.symmetric).count();
    let asym = eqs.len() - sym;
    (sym / q as usize, asym / q as usize)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumRescaling {
    pub rho_star: f64,
    /// `ε` in `ρ = ρ* + ε u`.
    pub u_scale: f64,
    /// `ω` in `τ = ω t`.
    pub tau_scale: f64,
    pub mu: f64,
}

/// Grid in the rescaled `(θ, u)` plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumBox {
    pub theta: (f64, f64),
    pub u: (f64, f64),
    pub n_theta: usize,
    pub n_u: usize,
}

impl PendulumBox {
    /// One resonance cell in angle, `|u| ≤ 2`.
    pub fn default_for(q: i64) -> Self {
        let w = PI / q as f64;
        PendulumBox { theta: (-w, w), u: (-2.0, 2.0), n_theta: 41, n_u: 41 }
    }

    fn nodes(range: (f64, f64), n: usize) -> Vec<f64> {
        let n = n.max(2);
        (0..n).map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64).collect()
    }
}

/// Root `ρ*` of `μ + Ψ(ρ) = 0` and the scales that normalize the leading
/// terms: substituting `ρ = ρ* + εu`, `τ = ωt` gives
/// `ε² = A ρ*^{q−1} / Ψ'(ρ*)` and `ω = Ψ'(ρ*) ε`, which for a single `Ψ₁`
/// are `ε = √(A ρ*^{q−2}/(2Ψ₁))` and `ω = √(2AΨ₁ ρ*^q)`.
pub fn pendulum_rescaling(params: &ResonantParams, mu: f64) -> Result<PendulumRescaling, NfError> {
    if !params.is_conservative() {
        return Err(NfError::Precondition("pendulum rescaling needs B = C = 0".into()));
    }
    let psi1 = params.psi1();
    if psi1 == 0.0 {
        return Err(NfError::ZeroPsi1);
    }
    if !(mu * psi1 < 0.0) {
        return Err(NfError::Precondition(format!("needs μΨ₁ < 0 (μ = {mu}, Ψ₁ = {psi1})")));
    }
    if !(params.a * psi1 > 0.0) {
        return Err(NfError::Precondition("needs AΨ₁ > 0".into()));
    }
    let p = params.with_mu(mu);
    let g = |r: f64| mu + p.psi_poly(r);
    let hi = p.rho_max();
    let br = roots::scan_brackets(g, hi * 1e-6, hi, 400).into_iter().next().ok_or_else(|| NfError::RootFailure {
        branch: "ρ*".into(),
        lo: 0.0,
        hi,
    })?;
    let rho_star = roots::brent(g, br, 1e-16, 300).ok_or_else(|| NfError::RootFailure { branch: "ρ*".into(), lo: br.lo, hi: br.hi })?.root;
    let dpsi = p.psi_poly_deriv(rho_star);
    let e2 = p.a * rho_star.powi(p.q as i32 - 1) / dpsi;
    if !(e2 > 0.0) {
        return Err(NfError::Precondition(format!("non-positive rescaling ε² = {e2}")));
    }
    let eps = e2.sqrt();
    let omega = dpsi * eps;
    if !(omega > 0.0) {
        return Err(NfError::Precondition(format!("non-positive time scale ω = {omega}")));
    }
    Ok(PendulumRescaling { rho_star, u_scale: eps, tau_scale: omega, mu })
}

/// Rescaled field `(dθ/dτ, du/dτ)` at `(θ, u)`.
pub fn rescaled_field(params: &ResonantParams, resc: &PendulumRescaling, theta: f64, u: f64) -> Result<(f64, f64), NfError> {
    let rho = resc.rho_star + resc.u_scale * u;
    if !(rho > 0.0) {
        return Err(NfError::Domain(rho));
    }
    let qi = params.q as i32;
    let ang = params.q as f64 * theta;
    let th_dot = (resc.mu + params.psi_poly(rho) + params.a * rho.powi(qi - 2) * ang.cos()) / resc.tau_scale;
    let u_dot = params.a * rho.powi(qi - 1) * ang.sin() / (resc.u_scale * resc.tau_scale);
    Ok((th_dot, u_dot))
}

/// Sup-norm distance on the grid between the rescaled field and the
/// pendulum field `(u, sin qθ)`.
pub fn pendulum_deviation(params: &ResonantParams, mu: f64, grid: &PendulumBox) -> Result<f64, NfError> {
    let resc = pendulum_rescaling(params, mu)?;
    let p = params.with_mu(mu);
    let mut worst: f64 = 0.0;
    for &th in &PendulumBox::nodes(grid.theta, grid.n_theta) {
        for &u in &PendulumBox::nodes(grid.u, grid.n_u) {
            let (a, b) = rescaled_field(&p, &resc, th, u)?;
            let pend = (u, (p.q as f64 * th).sin());
            worst = worst.max((a - pend.0).abs()).max((b - pend.1).abs());
        }
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortraitSample {
    pub rho: f64,
    pub phi: f64,
    pub rho_dot: f64,
    pub phi_dot: f64,
}

/// Polar field on a `(ρ, φ)` grid; `φ` spans `[−π, π]`.
pub fn portrait(params: &ResonantParams, rho_range: (f64, f64), n_rho: usize, n_phi: usize) -> Result<Vec<PortraitSample>, NfError> {
    let mut out = Vec::with_capacity(n_rho * n_phi);
    for &rho in &PendulumBox::nodes(rho_range, n_rho) {
        for &phi in &PendulumBox::nodes((-PI, PI), n_phi) {
            let (rho_dot, phi_dot) = eval_field_polar(params, rho, phi)?;
            out.push(PortraitSample { rho, phi, rho_dot, phi_dot });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conservative(q: i64, mu: f64) -> ResonantParams {
        ResonantParams::new(1, q, mu, vec![1.0], 1.0, 0.0, 0.0).unwrap()
    }

    fn degenerate_q6(mu: f64) -> ResonantParams {
        ResonantParams::new(1, 6, mu, vec![1.0], 2e-4, 1.0, -1.0).unwrap()
    }

    #[test]
    fn params_validation() {
        assert_eq!(ResonantParams::new(1, 4, 0.0, vec![], 0.0, 0.0, 0.0), Err(ParamError::SmallQ(4)));
        assert!(matches!(ResonantParams::new(2, 6, 0.0, vec![], 0.0, 0.0, 0.0), Err(ParamError::NotCoprime { .. })));
        assert!(ResonantParams::new(1, 5, f64::NAN, vec![], 0.0, 0.0, 0.0).is_err());
        assert_eq!(ResonantParams::default_psi_len(7, true), 3);
        assert_eq!(ResonantParams::default_psi_len(7, false), 3);
        assert_eq!(ResonantParams::default_psi_len(6, true), 2);
        assert_eq!(ResonantParams::default_psi_len(6, false), 3);
    }

    #[test]
    fn field_vanishes_at_origin() {
        let p = ResonantParams::new(2, 7, 0.3, vec![1.0, -2.0], 0.5, 0.2, 0.1).unwrap();
        assert_eq!(eval_field_cartesian(&p, Complex64::new(0.0, 0.0)), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn hand_evaluated_field_on_real_axis() {
        let p = ResonantParams::new(1, 5, 0.1, vec![1.0], 1.0, 0.0, 0.0).unwrap();
        let v = eval_field_cartesian(&p, Complex64::new(0.1, 0.0));
        assert!(v.re.abs() < 1e-18);
        assert!((v.im - 0.0111).abs() < 1e-15);
    }

    #[test]
    fn polar_radial_rate_vanishes_on_symmetry_angles() {
        let p = ResonantParams::new(1, 5, -0.01, vec![1.0], 1.0, 0.3, -0.2).unwrap();
        assert_eq!(eval_field_polar(&p, 0.1, 0.0).unwrap().0, 0.0);
        // sin(π) rounds to 1.2e−16
        assert!(eval_field_polar(&p, 0.1, PI).unwrap().0.abs() < 1e-19);
    }

    #[test]
    fn hand_evaluated_polar_field() {
        // ρ̇ = 0.1⁴ = 1e−4; φ̇ = 5(−0.01 + 0.1²) + 5·0.1³·cos(π/2) = 0 up to cos(π/2) rounding.
        let p = conservative(5, -0.01);
        let (rd, pd) = eval_field_polar(&p, 0.1, PI / 2.0).unwrap();
        assert!((rd - 1e-4).abs() < 1e-18);
        assert!(pd.abs() < 1e-17);
    }

    #[test]
    fn polar_rejects_nonpositive_radius() {
        assert_eq!(eval_field_polar(&conservative(5, 0.0), 0.0, 0.0), Err(NfError::Domain(0.0)));
    }

    #[test]
    fn wirtinger_jacobian_matches_central_differences() {
        let p = ResonantParams::new(2, 7, 0.03, vec![1.0, -0.5, 0.2], 0.7, 0.4, -0.3).unwrap();
        let z = Complex64::new(0.21, -0.13);
        let j = field_jacobian(&p, z);
        let h = 1e-6;
        let dx = (eval_field_cartesian(&p, z + h) - eval_field_cartesian(&p, z - h)) / (2.0 * h);
        let dy = (eval_field_cartesian(&p, z + Complex64::new(0.0, h)) - eval_field_cartesian(&p, z - Complex64::new(0.0, h))) / (2.0 * h);
        let fd = Mat2::new(dx.re, dy.re, dx.im, dy.im);
        assert!(j.max_abs_diff(&fd) < 1e-9, "{j:?} {fd:?}");
    }

    #[test]
    fn divergence_zero_when_conservative_and_closed_form_otherwise() {
        let cons = ResonantParams::new(1, 5, 0.02, vec![1.0, 0.3], 1.0, 0.0, 0.0).unwrap();
        let z = Complex64::new(0.3, 0.2);
        assert!(divergence_cartesian(&cons, z).abs() < 1e-13);
        let deg = ResonantParams::new(1, 6, 0.02, vec![1.0], 0.1, 1.0, 0.0).unwrap();
        let d = divergence_cartesian(&deg, z);
        let want = 2.0 * (deg.c - 7.0 * deg.b) * z.powu(6).im;
        assert!((d - want).abs() < 1e-15);
        assert!(d.abs() > 1e-6);
        assert!(divergence_cartesian(&deg, Complex64::new(0.4, 0.0)).abs() < 1e-13);
    }

    #[test]
    fn polar_jacobian_matches_differences() {
        let p = degenerate_q6(-1e-4);
        let (r, f) = (0.05, 0.7);
        let j = polar_jacobian(&p, r, f).unwrap();
        let h = 1e-7;
        let a = eval_field_polar(&p, r + h, f).unwrap();
        let b = eval_field_polar(&p, r - h, f).unwrap();
        let c = eval_field_polar(&p, r, f + h).unwrap();
        let d = eval_field_polar(&p, r, f - h).unwrap();
        let fd = Mat2::new((a.0 - b.0) / (2.0 * h), (c.0 - d.0) / (2.0 * h), (a.1 - b.1) / (2.0 * h), (c.1 - d.1) / (2.0 * h));
        assert!(j.max_abs_diff(&fd) < 1e-8);
    }

    #[test]
    fn zero_field_flow_is_identity_and_linear_flow_rotates() {
        let zero = ResonantParams::new(1, 5, 0.0, vec![], 0.0, 0.0, 0.0).unwrap();
        let z = Complex64::new(0.3, -0.2);
        let s = FlowSettings::default();
        assert_eq!(integrate_flow(&zero, z, 1.0, &s).unwrap(), z);
        let lin = zero.with_mu(0.37);
        let out = integrate_flow(&lin, z, 1.0, &s).unwrap();
        assert!((out - Complex64::from_polar(1.0, 0.37) * z).norm() < 1e-10);
    }

    #[test]
    fn zero_field_poincare_map_has_period_q() {
        let zero = ResonantParams::new(1, 5, 0.0, vec![], 0.0, 0.0, 0.0).unwrap();
        let s = FlowSettings::default();
        let z0 = Complex64::new(0.4, 0.1);
        let mut z = z0;
        for _ in 0..5 {
            z = poincare_map(&zero, z, &s).unwrap();
        }
        assert!((z - z0).norm() < 1e-12);
    }

    #[test]
    fn variational_jacobian_is_area_preserving_when_conservative() {
        let p = conservative(5, -0.01);
        let (_, m) = integrate_flow_with_jacobian(&p, Complex64::new(0.2, 0.1), 1.0, &FlowSettings::default()).unwrap();
        assert!((m.det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn guard_escape_surfaces() {
        let p = conservative(5, 0.0);
        let s = FlowSettings { guard_radius: 0.1, ..FlowSettings::default() };
        assert!(matches!(integrate_flow(&p, Complex64::new(0.5, 0.0), 1.0, &s), Err(IntegrationError::GuardEscape { .. })));
    }

    #[test]
    fn conservative_q5_has_ten_alternating_equilibria() {
        let eqs = find_equilibria(&conservative(5, -0.01)).unwrap();
        assert_eq!(eqs.len(), 10);
        assert!(eqs.iter().all(|e| e.symmetric));
        let mut by_angle = eqs.clone();
        by_angle.sort_by(|a, b| a.theta.total_cmp(&b.theta));
        for w in by_angle.windows(2) {
            assert_ne!(w[0].kind, w[1].kind);
        }
        let saddles: Vec<_> = eqs.iter().filter(|e| e.kind == EquilibriumType::Saddle).collect();
        assert_eq!(saddles.len(), 5);
        assert_eq!(eqs.iter().filter(|e| e.kind == EquilibriumType::Center).count(), 5);
        assert!(saddles.iter().all(|e| e.phi == 0.0 && (e.rho - 0.0953).abs() < 1e-3));
        for e in &eqs {
            assert!((e.rho - 0.1).abs() < 0.01);
            assert!(e.residual < 1e-15);
        }
    }

    #[test]
    fn no_equilibria_on_wrong_side() {
        assert!(find_equilibria(&conservative(5, 0.01)).unwrap().is_empty());
        assert!(find_equilibria(&conservative(5, 0.0)).unwrap().is_empty());
        assert_eq!(find_equilibria(&ResonantParams::new(1, 5, 0.0, vec![], 1.0, 0.0, 0.0).unwrap()), Err(NfError::ZeroPsi1));
    }

    #[test]
    fn degenerate_q6_asymmetric_sink_source_pair() {
        let eqs = find_equilibria(&degenerate_q6(-1e-4)).unwrap();
        let asym: Vec<_> = eqs.iter().filter(|e| !e.symmetric).collect();
        assert_eq!(asym.len(), 12);
        assert!(asym.iter().all(|e| (e.rho - 0.01).abs() < 1e-15));
        let sinks: Vec<_> = asym.iter().filter(|e| e.kind == EquilibriumType::Sink).collect();
        let sources: Vec<_> = asym.iter().filter(|e| e.kind == EquilibriumType::Source).collect();
        assert_eq!((sinks.len(), sources.len()), (6, 6));
        let (s, r) = (sinks[0], sources[0]);
        assert!((s.phi + r.phi).abs() < 1e-12);
        let (mut a, mut b) = ([s.eigenvalues.0.re, s.eigenvalues.1.re], [-r.eigenvalues.0.re, -r.eigenvalues.1.re]);
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert!((a[0] - b[0]).abs() < 1e-20 && (a[1] - b[1]).abs() < 1e-20);
        // Closed-form rates 2(B−C)ρ^q|sin φ| and 2qBρ^q|sin φ|.
        let sp = s.phi.sin().abs();
        assert!((a[1] + 4e-12 * sp).abs() < 1e-18 && (a[0] + 12e-12 * sp).abs() < 1e-18);
    }

    #[test]
    fn pendulum_scales_and_convergence() {
        let p = conservative(5, -1e-4);
        let r = pendulum_rescaling(&p, -1e-4).unwrap();
        assert!((r.rho_star - 0.01).abs() < 1e-15);
        assert!((r.u_scale - (0.01f64.powi(3) / 2.0).sqrt()).abs() < 1e-15);
        assert!((r.tau_scale - (2.0 * 0.01f64.powi(5)).sqrt()).abs() < 1e-15);
        let grid = PendulumBox::default_for(5);
        let d1 = pendulum_deviation(&p, -1e-4, &grid).unwrap();
        let d2 = pendulum_deviation(&p, -1e-6, &grid).unwrap();
        assert!(d2 < d1);
        assert!(pendulum_rescaling(&p, 1e-4).is_err());
    }
}
