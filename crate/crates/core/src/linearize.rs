//! The graph equation over the x-axis linearized about the cylinder
//! `u ≡ C_λ`: with `u_ε(0) = C_λ + ε`, `u_ε′(0) = 0` and
//! `w = ∂u_ε/∂ε |_{ε=0}`,
//!
//! ```text
//! w″ − x w′ + c w = 0,   c = 1 + (n−1)/C_λ²,   w(0) = 1, w′(0) = 0.
//! ```
//!
//! For even integer `c = 2m` the solution is a multiple of the
//! probabilists' Hermite polynomial `He_{2m}`. Zeros are counted by
//! integrating the equation, not by evaluating ₁F₁.
//!
//! Past the turning point `x_t = √(4c+2)` the solution is a polynomial
//! part `~ x^c` plus a growing part `~ e^{x²/2}`. A zero out there is a
//! cancellation between the two, located where their ratio is about
//! `x^c e^{−x²/2}`. When that ratio is below `resolution` the zero is
//! indistinguishable from integration error (at even integer `c` the
//! growing part is pure error) and is reported as unresolved instead of
//! counted.

use serde::{Deserialize, Serialize};

use crate::dopri::{StepOptions, Stepper};
use crate::error::{Error, Result};
use crate::model::Params;
use crate::roots::brent;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizeOptions {
    /// Right end of the search interval; `None` uses `3√c + 5`.
    pub x_max: Option<f64>,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub zero_tol: f64,
    pub resolution: f64,
}

impl Default for LinearizeOptions {
    fn default() -> Self {
        Self { x_max: None, rel_tol: 1e-13, abs_tol: 1e-15, zero_tol: 1e-14, resolution: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizedSolution {
    pub coefficient: f64,
    pub x_max: f64,
    /// Positive zeros of `w` on `(0, x_max]`, increasing.
    pub zeros: Vec<f64>,
    /// `w′` at each zero.
    pub slopes: Vec<f64>,
    pub count: usize,
    /// Zeros past the turning point that are below the error level.
    pub unresolved: Vec<f64>,
    /// `ceil(c / 2)`.
    pub expected: usize,
    /// `(x, w, w′)` at accepted steps.
    pub samples: Vec<[f64; 3]>,
    /// A zero sat at the end of the interval even after widening it.
    pub flagged: bool,
}

impl LinearizedSolution {
    pub fn matches_expected(&self) -> bool {
        self.count == self.expected
    }
}

pub fn default_x_max(c: f64) -> f64 {
    3.0 * c.sqrt() + 5.0
}

/// Integrates `w″ − x w′ + c w = 0` from `(w, w′) = (1, 0)` and returns
/// its positive zeros.
pub fn solve_linearized(c: f64, opts: &LinearizeOptions) -> Result<LinearizedSolution> {
    if !c.is_finite() {
        return Err(Error::InvalidParameter(format!("coefficient must be finite, got {c}")));
    }
    let mut x_max = opts.x_max.unwrap_or_else(|| default_x_max(c.max(0.0)));
    if !(x_max > 0.0) {
        return Err(Error::InvalidParameter(format!("x_max must be positive, got {x_max}")));
    }
    let mut widened = false;
    loop {
        let sol = integrate_once(c, x_max, opts)?;
        let at_edge = sol.zeros.last().is_some_and(|z| x_max - z <= opts.zero_tol.max(1e-12));
        if !at_edge {
            return Ok(sol);
        }
        if widened {
            return Ok(LinearizedSolution { flagged: true, ..sol });
        }
        widened = true;
        x_max += 2.0;
    }
}

fn integrate_once(c: f64, x_max: f64, opts: &LinearizeOptions) -> Result<LinearizedSolution> {
    let rhs = move |x: f64, y: &[f64; 2]| Some([y[1], x * y[1] - c * y[0]]);
    let step_opts = StepOptions { rel_tol: opts.rel_tol, abs_tol: opts.abs_tol, h_max: 0.05, direction: 1.0 };
    let mut st = Stepper::new(rhs, 0.0, [1.0, 0.0], step_opts).expect("linear right-hand side is total");
    st.set_stop(x_max);
    let mut samples = vec![[0.0, 1.0, 0.0]];
    let mut zeros = Vec::new();
    let mut slopes = Vec::new();
    let mut unresolved = Vec::new();
    let turning = (4.0 * c + 2.0).max(0.0).sqrt();
    let resolved = |z: f64| z <= turning || (c * z.ln() - 0.5 * z * z).exp() > opts.resolution;
    const PROBES: usize = 4;
    while st.t() < x_max {
        let d = st.step().map_err(|_| Error::NonConvergence("step size underflow in linearized equation".into()))?;
        let mut prev = (d.t0, d.start()[0]);
        for k in 1..=PROBES {
            let x = if k == PROBES { d.t1() } else { d.t0 + d.h * k as f64 / PROBES as f64 };
            let w = d.eval(x)[0];
            if prev.1 != 0.0 && (w == 0.0 || w.signum() != prev.1.signum()) {
                let z = brent(|t| d.eval(t)[0], prev.0, x, opts.zero_tol);
                if resolved(z) {
                    zeros.push(z);
                    slopes.push(d.eval(z)[1]);
                } else {
                    unresolved.push(z);
                }
            }
            prev = (x, w);
        }
        let y = st.y();
        samples.push([st.t(), y[0], y[1]]);
    }
    let expected = (c / 2.0).ceil().max(0.0) as usize;
    Ok(LinearizedSolution {
        coefficient: c,
        x_max,
        count: zeros.len(),
        zeros,
        slopes,
        flagged: false,
        unresolved,
        expected,
        samples,
    })
}

/// Counts positive zeros of the linearization about the cylinder of
/// `params`.
pub fn count_positive_zeros(params: &Params, opts: &LinearizeOptions) -> Result<LinearizedSolution> {
    solve_linearized(params.linearized_coefficient(), opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_two_is_one_minus_x_squared() {
        let sol = solve_linearized(2.0, &LinearizeOptions::default()).unwrap();
        assert_eq!(sol.count, 1);
        assert!((sol.zeros[0] - 1.0).abs() < 1e-10);
        assert!((sol.slopes[0] + 2.0).abs() < 1e-9);
        for s in &sol.samples {
            let x = s[0];
            if x > 3.0 {
                break;
            }
            assert!((s[1] - (1.0 - x * x)).abs() < 1e-9 * (1.0 + x * x));
        }
    }

    #[test]
    fn zeros_are_simple() {
        for c in [2.0, 3.3, 4.0, 6.0, 7.5, 8.0] {
            let sol = solve_linearized(c, &LinearizeOptions::default()).unwrap();
            assert!(sol.slopes.iter().all(|s| s.abs() > 1e-8), "c={c}");
        }
    }

    #[test]
    fn spurious_far_zero_is_unresolved() {
        let sol = solve_linearized(4.0, &LinearizeOptions { x_max: Some(14.0), ..Default::default() }).unwrap();
        assert_eq!(sol.count, 2);
        let near = solve_linearized(4.1, &LinearizeOptions::default()).unwrap();
        assert_eq!(near.count, 3);
        assert!(near.unresolved.is_empty());
    }

    #[test]
    fn negative_coefficient_has_no_zero() {
        // w″ = x w′ − c w with c < 0 stays convex and increasing.
        let sol = solve_linearized(-1.0, &LinearizeOptions::default()).unwrap();
        assert_eq!(sol.count, 0);
        assert_eq!(sol.expected, 0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(solve_linearized(f64::NAN, &LinearizeOptions::default()).is_err());
        let opts = LinearizeOptions { x_max: Some(-1.0), ..Default::default() };
        assert!(solve_linearized(2.0, &opts).is_err());
    }

    #[test]
    fn widening_recovers_zero_at_edge() {
        let opts = LinearizeOptions { x_max: Some(1.0), ..Default::default() };
        let sol = solve_linearized(2.0, &opts).unwrap();
        assert_eq!(sol.count, 1);
        assert!(sol.x_max > 1.0);
        assert!(!sol.flagged);
    }
}
