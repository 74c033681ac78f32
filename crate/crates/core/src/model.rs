//! Domain types for rotationally symmetric λ-hypersurfaces.
//!
//! A profile curve `γ(s) = (x(s), r(s))` in the closed half plane, rotated
//! about the x-axis, generates a hypersurface in ℝⁿ⁺¹. The curve is
//! parametrized by arclength with tangent angle `θ`, and the equation
//! `H + ⟨X, ν⟩ = λ` becomes the first-order system
//!
//! ```text
//! ẋ = cos θ
//! ṙ = sin θ
//! θ̇ = ((n−1)/r − r) cos θ + x sin θ + λ
//! ```
//!
//! The unit normal is `ν = (−ṙ, ẋ α)` for `α ∈ Sⁿ⁻¹`, which gives
//! `⟨X, ν⟩ = −x sin θ + r cos θ`. The rotational principal curvatures are
//! `−ẋ / r = −cos θ / r` and the profile curvature is `ẋ r̈ − ẍ ṙ`. For a
//! unit-speed curve `(ẋ, ṙ) = (cos θ, sin θ)` one has `r̈ = θ̇ cos θ` and
//! `ẍ = −θ̇ sin θ`, so `ẋ r̈ − ẍ ṙ = θ̇ (cos²θ + sin²θ) = θ̇`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimension `n`, the constant `λ`, and the radii of the cylinder and sphere
/// solutions for `λ` and `−λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub n: u32,
    pub lambda: f64,
    /// Root of `C² − λC − (n−1) = 0`: radius of the cylinder solution.
    pub c_lambda: f64,
    /// Root of `R² − λR − n = 0`: radius of the round sphere.
    pub r_lambda: f64,
    pub c_minus_lambda: f64,
    pub r_minus_lambda: f64,
}

/// Positive root of `t² − b t − c = 0` for `c > 0`, computed without
/// cancellation for either sign of `b`.
fn positive_root(b: f64, c: f64) -> f64 {
    let disc = (b * b + 4.0 * c).sqrt();
    if b >= 0.0 {
        (b + disc) / 2.0
    } else {
        2.0 * c / (disc - b)
    }
}

impl Params {
    /// Derives all four radii from `n` and `λ`.
    pub fn new(n: u32, lambda: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "dimension n must be at least 2, got {n}"
            )));
        }
        if !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda must be finite, got {lambda}"
            )));
        }
        let nf = f64::from(n);
        Ok(Self {
            n,
            lambda,
            c_lambda: positive_root(lambda, nf - 1.0),
            r_lambda: positive_root(lambda, nf),
            c_minus_lambda: positive_root(-lambda, nf - 1.0),
            r_minus_lambda: positive_root(-lambda, nf),
        })
    }

    /// `n − 1` as a float, the multiplicity of the rotational curvature.
    pub fn rot_mult(&self) -> f64 {
        f64::from(self.n) - 1.0
    }

    /// The same dimension with `λ` negated: the equation satisfied by a
    /// solution after its unit normal is reversed.
    pub fn flipped(&self) -> Self {
        Self {
            n: self.n,
            lambda: -self.lambda,
            c_lambda: self.c_minus_lambda,
            r_lambda: self.r_minus_lambda,
            c_minus_lambda: self.c_lambda,
            r_minus_lambda: self.r_lambda,
        }
    }

    /// Coefficient `1 + (n−1)/C_λ²` of the equation linearized about the
    /// cylinder.
    pub fn linearized_coefficient(&self) -> f64 {
        1.0 + self.rot_mult() / (self.c_lambda * self.c_lambda)
    }
}

/// A point on a profile curve together with its tangent angle.
///
/// `theta` is unwrapped: it accumulates across full turns and is never
/// reduced modulo 2π.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileState {
    pub s: f64,
    pub x: f64,
    pub r: f64,
    pub theta: f64,
}

impl ProfileState {
    pub fn new(s: f64, x: f64, r: f64, theta: f64) -> Self {
        Self { s, x, r, theta }
    }

    pub(crate) fn from_vec(s: f64, y: &[f64; 3]) -> Self {
        Self { s, x: y[0], r: y[1], theta: y[2] }
    }

    pub(crate) fn to_vec(self) -> [f64; 3] {
        [self.x, self.r, self.theta]
    }

    /// Reflection `(s, x, θ) ↦ (−s, −x, −θ)`, a symmetry of the system.
    pub fn mirrored(&self) -> Self {
        Self { s: -self.s, x: -self.x, r: self.r, theta: -self.theta }
    }
}

/// Principal curvatures and the equation residual at a profile state, in
/// the orientation `ν = (−ṙ, ẋ α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureData {
    /// `κ₁ = … = κₙ₋₁ = −cos θ / r`.
    pub kappa_rot: f64,
    /// `κₙ = θ̇`.
    pub kappa_profile: f64,
    /// `H = κₙ + (n−1) κ₁`.
    pub mean: f64,
    /// `⟨X, ν⟩ = −x sin θ + r cos θ`.
    pub support: f64,
    /// `H + ⟨X, ν⟩ − λ`.
    pub residual: f64,
}

impl CurvatureData {
    /// Curvatures after reversing the unit normal. Every principal
    /// curvature, `H` and `⟨X, ν⟩` change sign; the flipped data solves the
    /// equation with constant `−λ`, so the residual is taken against that.
    pub fn flipped(&self, params: &Params) -> Self {
        let mean = -self.mean;
        let support = -self.support;
        Self {
            kappa_rot: -self.kappa_rot,
            kappa_profile: -self.kappa_profile,
            mean,
            support,
            residual: mean + support + params.lambda,
        }
    }
}

fn check_r(r: f64) -> Result<()> {
    if r > 0.0 {
        Ok(())
    } else {
        Err(Error::Singularity { r })
    }
}

/// `θ̇` without the singularity check; callers guarantee `r > 0`.
#[inline]
pub(crate) fn theta_dot(params: &Params, x: f64, r: f64, theta: f64) -> f64 {
    let (sin, cos) = theta.sin_cos();
    (params.rot_mult() / r - r) * cos + x * sin + params.lambda
}

/// Right-hand side of the profile system: `(ẋ, ṙ, θ̇)`.
pub fn rhs(state: &ProfileState, params: &Params) -> Result<(f64, f64, f64)> {
    check_r(state.r)?;
    let (sin, cos) = state.theta.sin_cos();
    Ok((cos, sin, theta_dot(params, state.x, state.r, state.theta)))
}

pub fn curvatures(state: &ProfileState, params: &Params) -> Result<CurvatureData> {
    check_r(state.r)?;
    let (sin, cos) = state.theta.sin_cos();
    let kappa_rot = -cos / state.r;
    let kappa_profile = theta_dot(params, state.x, state.r, state.theta);
    let mean = kappa_profile + params.rot_mult() * kappa_rot;
    let support = -state.x * sin + state.r * cos;
    Ok(CurvatureData {
        kappa_rot,
        kappa_profile,
        mean,
        support,
        residual: mean + support - params.lambda,
    })
}

/// The cylinder `r ≡ C_λ` traversed in the +x direction, with `x = s`.
pub fn exact_cylinder(params: &Params, s: f64) -> ProfileState {
    ProfileState::new(s, s, params.c_lambda, 0.0)
}

/// The round sphere of radius `R_λ`, starting on the axis at `x = −R_λ`
/// and ending at `x = +R_λ` when `s = π R_λ`.
pub fn exact_sphere(params: &Params, s: f64) -> Result<ProfileState> {
    let radius = params.r_lambda;
    let end = std::f64::consts::PI * radius;
    if !(s > 0.0 && s < end) {
        return Err(Error::Domain {
            value: s,
            domain: format!("(0, {end})"),
        });
    }
    let u = s / radius;
    Ok(ProfileState::new(
        s,
        -radius * u.cos(),
        radius * u.sin(),
        FRAC_PI_2 - u,
    ))
}
