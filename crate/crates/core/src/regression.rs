//! Comparisons against closed-form solutions, shared by the test suites
//! and the command-line `verify` command.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::integrator::{integrate, singular_start, Branch, IntegrationControls, Terminal, DEFAULT_LAUNCH_RADIUS};
use crate::linearize::{solve_linearized, LinearizeOptions};
use crate::model::{exact_cylinder, exact_sphere, Params};

/// Largest deviation from a closed form over the integrated samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactError {
    /// `max |x − x_exact|, |r − r_exact|` over every sample.
    pub position: f64,
    /// `max |θ − θ_exact|` away from the axis layer.
    pub angle: f64,
    pub samples: usize,
}

impl ExactError {
    pub fn max(&self) -> f64 {
        self.position.max(self.angle)
    }
}

/// Cylinder `r ≡ C_λ` integrated over `s ∈ [0, s_max]`.
pub fn cylinder_error(params: &Params, controls: &IntegrationControls, s_max: f64) -> Result<ExactError> {
    let c = IntegrationControls { s_max, max_turns: None, ..*controls };
    let traj = integrate(exact_cylinder(params, 0.0), params, &c)?;
    let mut err = ExactError { position: 0.0, angle: 0.0, samples: traj.samples.len() };
    for st in &traj.samples {
        let e = exact_cylinder(params, st.s);
        err.position = err.position.max((st.x - e.x).abs()).max((st.r - e.r).abs());
        err.angle = err.angle.max((st.theta - e.theta).abs());
    }
    Ok(err)
}

/// Round solution of radius `R_λ`, launched from `(−R_λ, 0)` and
/// integrated until it reaches the axis again. Angles are compared up to
/// `angle_margin` before the far pole, where the `1/r` terms amplify the
/// global error.
pub fn sphere_error(params: &Params, controls: &IntegrationControls, angle_margin: f64) -> Result<ExactError> {
    let start = singular_start(-params.r_lambda, Branch::Ascending, params, DEFAULT_LAUNCH_RADIUS)?;
    let c = IntegrationControls { max_turns: None, ..*controls };
    let traj = integrate(start, params, &c)?;
    let s_far = std::f64::consts::PI * params.r_lambda;
    let mut err = ExactError { position: 0.0, angle: 0.0, samples: traj.samples.len() };
    if traj.terminal != Terminal::AxisHit {
        err.position = f64::INFINITY;
        return Ok(err);
    }
    for st in &traj.samples {
        let s = st.s.min(s_far * (1.0 - f64::EPSILON));
        let e = exact_sphere(params, s)?;
        err.position = err.position.max((st.x - e.x).abs()).max((st.r - e.r).abs());
        if st.s < s_far - angle_margin {
            err.angle = err.angle.max((st.theta - e.theta).abs());
        }
    }
    Ok(err)
}

/// Roots of `He₆(x) = x⁶ − 15x⁴ + 45x² − 15`, positive, increasing.
pub fn hermite6_roots() -> [f64; 3] {
    // x² solves t³ − 15t² + 45t − 15 = 0 (trigonometric form; the three
    // roots are real).
    let (a, b, c) = (-15.0f64, 45.0f64, -15.0f64);
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let m = 2.0 * (-p / 3.0).sqrt();
    let phi = (3.0 * q / (p * m)).acos() / 3.0;
    let mut t: Vec<f64> =
        (0..3).map(|k| m * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - a / 3.0).collect();
    t.sort_by(f64::total_cmp);
    [t[0].sqrt(), t[1].sqrt(), t[2].sqrt()]
}

/// Zero locations against `1 − x²` (c = 2) and `He₆` (c = 6); returns the
/// largest location error, or infinity when the counts differ.
pub fn hermite_zero_error() -> Result<f64> {
    let opts = LinearizeOptions::default();
    let two = solve_linearized(2.0, &opts)?;
    let six = solve_linearized(6.0, &opts)?;
    if two.count != 1 || six.count != 3 {
        return Ok(f64::INFINITY);
    }
    let mut err = (two.zeros[0] - 1.0).abs();
    for (z, e) in six.zeros.iter().zip(hermite6_roots()) {
        err = err.max((z - e).abs());
    }
    Ok(err)
}
