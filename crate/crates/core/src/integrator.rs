//! Adaptive integration of the profile system with dense output and event
//! location, plus the Taylor launch from a point on the rotation axis.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dopri::{DenseStep, StepError, StepOptions, Stepper};
use crate::error::{Error, Result};
use crate::model::{curvatures, theta_dot, Params, ProfileState};
use crate::roots::brent;

/// Number of interior probes per step used to detect sign changes.
const PROBES_PER_STEP: usize = 8;

/// Values of a crossing function with magnitude below this are treated as
/// having no sign, which keeps round-off flicker around an exact zero (for
/// instance `sin θ` on the cylinder) from producing events.
pub const SIGN_DEADBAND: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationControls {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Axis cutoff: reaching `r ≤ r_min` terminates with an axis hit.
    pub r_min: f64,
    /// Arclength budget.
    pub s_max: f64,
    pub x_max: f64,
    pub theta_max: f64,
    /// Root tolerance in `s` for located events.
    pub event_tol: f64,
    /// Largest step in `s`.
    pub h_max: f64,
    /// Stop at this many `sin θ = 0` crossings, if set.
    pub max_turns: Option<u32>,
}

impl Default for IntegrationControls {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            r_min: 1e-6,
            s_max: 50.0,
            x_max: 50.0,
            theta_max: 100.0,
            event_tol: 1e-12,
            h_max: 0.05,
            max_turns: None,
        }
    }
}

impl IntegrationControls {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("r_min", self.r_min),
            ("s_max", self.s_max),
            ("x_max", self.x_max),
            ("theta_max", self.theta_max),
            ("event_tol", self.event_tol),
            ("h_max", self.h_max),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.event_tol > self.rel_tol {
            return Err(Error::InvalidParameter(format!(
                "event_tol {} exceeds rel_tol {}",
                self.event_tol, self.rel_tol
            )));
        }
        Ok(())
    }

    /// Copy with the stepping tolerances and axis cutoff tightened tenfold.
    pub fn refined(&self) -> Self {
        Self {
            rel_tol: self.rel_tol / 10.0,
            abs_tol: self.abs_tol / 10.0,
            event_tol: self.event_tol / 10.0,
            r_min: self.r_min / 10.0,
            ..*self
        }
    }

    pub fn with_max_turns(self, turns: u32) -> Self {
        Self { max_turns: Some(turns), ..self }
    }

    pub fn with_r_min(self, r_min: f64) -> Self {
        Self { r_min, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    /// `sin θ = 0`: the curve stops being a graph over the r-axis.
    RAxisTurn,
    /// `θ̇ = 0`: inflection of the graph over the r-axis.
    ThetaDotZero,
    /// `cos θ = 0`: critical point of the graph over the r-axis.
    FPrimeZero,
    AxisHit,
    Blowup,
    Budget,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub s: f64,
    pub state: ProfileState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminal {
    AxisHit,
    Blowup,
    Budget,
    /// Stopped after the requested number of `sin θ = 0` crossings.
    TurnLimit,
}

/// Dense-output record for the step between two consecutive samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub s0: f64,
    pub h: f64,
    pub coeffs: [[f64; 3]; 5],
}

impl StepRecord {
    fn dense(&self) -> DenseStep<3> {
        DenseStep { t0: self.s0, h: self.h, coeffs: self.coeffs }
    }

    fn from_dense(d: &DenseStep<3>) -> Self {
        Self { s0: d.t0, h: d.h, coeffs: d.coeffs }
    }
}

/// A solution of the profile system: samples at accepted steps, the
/// interpolant between them, and the located events in order of `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: Params,
    pub controls: IntegrationControls,
    pub samples: Vec<ProfileState>,
    /// `steps[i]` interpolates between `samples[i]` and `samples[i + 1]`.
    pub steps: Vec<StepRecord>,
    pub events: Vec<Event>,
    pub terminal: Terminal,
}

/// Which crossing function an event tracks.
#[derive(Clone, Copy)]
enum Crossing {
    Sin,
    Cos,
    ThetaDot,
    Axis,
    XGuard,
    ThetaDotGuard,
    ThetaGuard,
}

impl Crossing {
    const ALL: [Crossing; 7] = [
        Crossing::Sin,
        Crossing::Cos,
        Crossing::ThetaDot,
        Crossing::Axis,
        Crossing::XGuard,
        Crossing::ThetaDotGuard,
        Crossing::ThetaGuard,
    ];

    fn kind(self) -> EventKind {
        match self {
            Crossing::Sin => EventKind::RAxisTurn,
            Crossing::Cos => EventKind::FPrimeZero,
            Crossing::ThetaDot => EventKind::ThetaDotZero,
            Crossing::Axis => EventKind::AxisHit,
            Crossing::XGuard | Crossing::ThetaDotGuard | Crossing::ThetaGuard => EventKind::Blowup,
        }
    }

    fn value(self, y: &[f64; 3], params: &Params, c: &IntegrationControls) -> f64 {
        let [x, r, theta] = *y;
        match self {
            Crossing::Sin => theta.sin(),
            Crossing::Cos => theta.cos(),
            Crossing::ThetaDot => theta_dot(params, x, r, theta),
            Crossing::Axis => r - c.r_min,
            Crossing::XGuard => c.x_max - x.abs(),
            Crossing::ThetaDotGuard => 1.0 / c.event_tol - theta_dot(params, x, r, theta).abs(),
            Crossing::ThetaGuard => c.theta_max - theta.abs(),
        }
    }

    /// Guards and the axis cutoff are one-sided: only a positive-to-negative
    /// transition counts.
    fn one_sided(self) -> bool {
        !matches!(self, Crossing::Sin | Crossing::Cos | Crossing::ThetaDot)
    }

    fn deadband(self) -> f64 {
        if self.one_sided() {
            0.0
        } else {
            SIGN_DEADBAND
        }
    }
}

fn sign_of(v: f64, deadband: f64) -> Option<bool> {
    if v > deadband {
        Some(true)
    } else if v < -deadband {
        Some(false)
    } else {
        None
    }
}

struct Tracker {
    /// Last registered sign and the `s` where it was observed.
    last: Option<(bool, f64)>,
}

/// Integrates the profile system from `initial` until an axis hit, a
/// blow-up guard, the arclength budget, or the optional turn limit.
pub fn integrate(
    initial: ProfileState,
    params: &Params,
    controls: &IntegrationControls,
) -> Result<Trajectory> {
    controls.validate()?;
    if !(initial.r > controls.r_min) {
        return Err(Error::Singularity { r: initial.r });
    }
    let p = *params;
    let rhs = move |_s: f64, y: &[f64; 3]| {
        if !(y[1] > 0.0) {
            return None;
        }
        let (sin, cos) = y[2].sin_cos();
        let v = [cos, sin, theta_dot(&p, y[0], y[1], y[2])];
        v[2].is_finite().then_some(v)
    };
    let opts = StepOptions {
        rel_tol: controls.rel_tol,
        abs_tol: controls.abs_tol,
        h_max: controls.h_max,
        direction: 1.0,
    };
    let s_end = initial.s + controls.s_max;
    let mut stepper = Stepper::new(rhs, initial.s, initial.to_vec(), opts)
        .ok_or(Error::Singularity { r: initial.r })?;
    stepper.set_stop(s_end);

    let y0 = initial.to_vec();
    let mut trackers: Vec<Tracker> = Crossing::ALL
        .iter()
        .map(|c| Tracker {
            last: sign_of(c.value(&y0, params, controls), c.deadband()).map(|sg| (sg, initial.s)),
        })
        .collect();

    let mut samples = vec![initial];
    let mut steps = Vec::new();
    let mut events = Vec::new();
    let mut turns = 0u32;

    loop {
        let dense = match stepper.step() {
            Ok(d) => d,
            Err(StepError::Underflow { .. }) => {
                return Err(Error::StepUnderflow { last: *samples.last().unwrap() });
            }
        };
        let mut found: Vec<(f64, Crossing)> = Vec::new();
        let probes: Vec<(f64, [f64; 3])> = (1..=PROBES_PER_STEP)
            .map(|k| {
                let s = if k == PROBES_PER_STEP {
                    dense.t1()
                } else {
                    dense.t0 + dense.h * k as f64 / PROBES_PER_STEP as f64
                };
                let y = if k == PROBES_PER_STEP { stepper.y() } else { dense.eval(s) };
                (s, y)
            })
            .collect();
        for (ci, &c) in Crossing::ALL.iter().enumerate() {
            let tracker = &mut trackers[ci];
            for &(s, ref y) in &probes {
                let Some(sg) = sign_of(c.value(y, params, controls), c.deadband()) else {
                    continue;
                };
                match tracker.last {
                    Some((prev, s_prev)) if prev != sg => {
                        if !c.one_sided() || prev {
                            let root = locate(&dense, c, params, controls, s_prev.max(dense.t0), s);
                            found.push((root, c));
                        }
                        tracker.last = Some((sg, s));
                    }
                    _ => tracker.last = Some((sg, s)),
                }
            }
        }
        found.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut stop: Option<(f64, Terminal)> = None;
        for &(s, c) in &found {
            let kind = c.kind();
            let y = dense.eval(s);
            let state = ProfileState::from_vec(s, &y);
            match kind {
                EventKind::AxisHit => {
                    events.push(Event { kind, s, state });
                    stop = Some((s, Terminal::AxisHit));
                    break;
                }
                EventKind::Blowup => {
                    events.push(Event { kind, s, state });
                    stop = Some((s, Terminal::Blowup));
                    break;
                }
                EventKind::RAxisTurn => {
                    events.push(Event { kind, s, state });
                    turns += 1;
                    if controls.max_turns.is_some_and(|m| turns >= m) {
                        stop = Some((s, Terminal::TurnLimit));
                        break;
                    }
                }
                _ => events.push(Event { kind, s, state }),
            }
        }

        steps.push(StepRecord::from_dense(&dense));
        if let Some((s, terminal)) = stop {
            let y = dense.eval(s);
            samples.push(ProfileState::from_vec(s, &y));
            return Ok(Trajectory { params: *params, controls: *controls, samples, steps, events, terminal });
        }
        samples.push(ProfileState::from_vec(stepper.t(), &stepper.y()));
        if stepper.t() >= s_end {
            let state = *samples.last().unwrap();
            events.push(Event { kind: EventKind::Budget, s: state.s, state });
            return Ok(Trajectory {
                params: *params,
                controls: *controls,
                samples,
                steps,
                events,
                terminal: Terminal::Budget,
            });
        }
    }
}

/// Refines a bracketed crossing on the dense output.
fn locate(
    dense: &DenseStep<3>,
    c: Crossing,
    params: &Params,
    controls: &IntegrationControls,
    a: f64,
    b: f64,
) -> f64 {
    let g = |s: f64| c.value(&dense.eval(s), params, controls);
    let (ga, gb) = (g(a), g(b));
    if ga == 0.0 {
        return a;
    }
    if gb == 0.0 || ga.signum() == gb.signum() {
        return b;
    }
    brent(g, a, b, controls.event_tol)
}

impl Trajectory {
    pub fn s_start(&self) -> f64 {
        self.samples[0].s
    }

    pub fn s_end(&self) -> f64 {
        self.samples.last().unwrap().s
    }

    pub fn start(&self) -> &ProfileState {
        &self.samples[0]
    }

    pub fn end(&self) -> &ProfileState {
        self.samples.last().unwrap()
    }

    /// State at arclength `s` from the dense output.
    pub fn evaluate(&self, s: f64) -> Result<ProfileState> {
        let (lo, hi) = (self.s_start(), self.s_end());
        if !(s >= lo && s <= hi) {
            return Err(Error::Domain { value: s, domain: format!("[{lo}, {hi}]") });
        }
        // First sample with samples[i].s >= s.
        let i = self.samples.partition_point(|st| st.s < s);
        if i < self.samples.len() && self.samples[i].s == s {
            return Ok(self.samples[i]);
        }
        let step = &self.steps[i - 1];
        Ok(ProfileState::from_vec(s, &step.dense().eval(s)))
    }

    /// `θ′ − θ̇` at `s`, with `θ′` the derivative of the interpolant and `θ̇`
    /// the vector field at the interpolated state. This is the equation
    /// residual `H + ⟨X, ν⟩ − λ` of the computed curve between samples.
    pub fn interpolation_residual(&self, s: f64) -> Result<f64> {
        let st = self.evaluate(s)?;
        let (_, _, td) = crate::model::rhs(&st, &self.params)?;
        let i = self.samples.partition_point(|p| p.s < s).clamp(1, self.steps.len());
        Ok(self.steps[i - 1].dense().eval_derivative(s)[2] - td)
    }

    /// `θ̇` at `s`.
    pub fn theta_dot_at(&self, s: f64) -> Result<f64> {
        let st = self.evaluate(s)?;
        Ok(theta_dot(&self.params, st.x, st.r, st.theta))
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// Writes one row per sample with curvature data.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "s,x,r,theta,thetadot,H,kappa_rot,kappa_profile,residual")?;
        for st in &self.samples {
            let c = curvatures(st, &self.params)?;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                st.s, st.x, st.r, st.theta, c.kappa_profile, c.mean, c.kappa_rot, c.kappa_profile, c.residual
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Second derivative of `θ` along the flow, from differentiating `θ̇`.
///
/// With `A(r) = (n−1)/r − r`, `θ̈ = A′(r) sin θ cos θ − A(r) sin θ θ̇ +
/// sin θ cos θ + x cos θ θ̇`. At a zero of `θ̇` this reduces to
/// `−(n−1) sin θ cos θ / r²`.
pub fn theta_ddot(state: &ProfileState, params: &Params) -> Result<f64> {
    let (_, _, td) = crate::model::rhs(state, params)?;
    let (sin, cos) = state.theta.sin_cos();
    let r = state.r;
    let nm1 = params.rot_mult();
    let a = nm1 / r - r;
    let a_prime = -nm1 / (r * r) - 1.0;
    Ok(a_prime * sin * cos - a * sin * td + sin * cos + state.x * cos * td)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Leaves the axis with `ṙ > 0`.
    Ascending,
    /// Arrives at or leaves the axis with `ṙ < 0`.
    Descending,
}

pub const DEFAULT_LAUNCH_RADIUS: f64 = 1e-4;

/// `f″(0)` of the analytic graph `x = f(r)` through `(b, 0)` with `f′(0) = 0`.
///
/// Substituting `f = b + a r² + …` into the graph equation and letting
/// `r → 0`, the term `−(n−1) f′ / r` contributes `−(n−1) f″(0)`, giving
/// `n f″(0) = −b ∓ λ` (minus on the ascending branch).
pub fn launch_curvature(b: f64, branch: Branch, params: &Params) -> f64 {
    let nf = f64::from(params.n);
    match branch {
        Branch::Ascending => (-params.lambda - b) / nf,
        Branch::Descending => (params.lambda - b) / nf,
    }
}

/// State at `r = r0` on the solution that meets the axis perpendicularly at
/// `x = b`, from the second-order Taylor expansion of the graph over the
/// r-axis. `s` is the arclength from the axis point.
pub fn singular_start(b: f64, branch: Branch, params: &Params, r0: f64) -> Result<ProfileState> {
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::InvalidParameter(format!("launch radius must be positive, got {r0}")));
    }
    if !b.is_finite() {
        return Err(Error::InvalidParameter(format!("axis point must be finite, got {b}")));
    }
    let k = launch_curvature(b, branch, params);
    let f = b + 0.5 * k * r0 * r0;
    let fp = k * r0;
    // Tangent (f′, 1)/|·| going up, (−f′, −1)/|·| going down.
    let theta = match branch {
        Branch::Ascending => FRAC_PI_2 - fp.atan(),
        Branch::Descending => -FRAC_PI_2 - fp.atan(),
    };
    // Arclength of x = b + k r²/2 from the axis.
    let s = if k == 0.0 { r0 } else { 0.5 * (r0 * (1.0 + fp * fp).sqrt() + fp.asinh() / k) };
    Ok(ProfileState::new(s, f, r0, theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{exact_cylinder, exact_sphere};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn sphere_run(lambda: f64, controls: &IntegrationControls) -> (Params, Trajectory) {
        let p = Params::new(2, lambda).unwrap();
        let start = singular_start(-p.r_lambda, Branch::Ascending, &p, 1e-4).unwrap();
        (p, integrate(start, &p, controls).unwrap())
    }

    #[test]
    fn launch_on_constant_solution() {
        let p = Params::new(2, -1.0).unwrap();
        let st = singular_start(-p.lambda, Branch::Ascending, &p, 1e-4).unwrap();
        assert_eq!(launch_curvature(-p.lambda, Branch::Ascending, &p), 0.0);
        assert_eq!(st.x, -p.lambda);
        assert_eq!(st.theta, FRAC_PI_2);
        assert_eq!(st.s, 1e-4);
    }

    #[test]
    fn launch_curvature_reported_case() {
        let p = Params::new(2, -5f64.sqrt()).unwrap();
        assert_relative_eq!(
            launch_curvature(0.0, Branch::Ascending, &p),
            5f64.sqrt() / 2.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn launch_matches_sphere() {
        let p = Params::new(2, -1.0).unwrap();
        let r0 = 1e-4;
        let st = singular_start(-p.r_lambda, Branch::Ascending, &p, r0).unwrap();
        // On the circle x = −√(R² − r²).
        let exact = exact_sphere(&p, st.s).unwrap();
        assert!((st.r - exact.r).abs() < 1e-12);
        assert!((st.x - exact.x).abs() < 1e-12);
        assert!((st.theta - exact.theta).abs() < 1e-11);
        let down = singular_start(p.r_lambda, Branch::Descending, &p, r0).unwrap();
        assert!((down.theta + FRAC_PI_2).abs() < 1e-3);
        assert!(down.x < p.r_lambda);
    }

    #[test]
    fn sphere_closed_form() {
        let c = IntegrationControls::default();
        let (p, traj) = sphere_run(-1.0, &c);
        assert_eq!(traj.terminal, Terminal::AxisHit);
        let end = traj.end();
        assert!((end.x - p.r_lambda).abs() < 1e-6);
        for st in &traj.samples {
            if st.s < PI * p.r_lambda - 0.01 {
                let e = exact_sphere(&p, st.s).unwrap();
                let err = (st.x - e.x).abs().max((st.r - e.r).abs()).max((st.theta - e.theta).abs());
                assert!(err < 1e-7, "s={} err={err}", st.s);
            }
        }
        let mid = traj.evaluate(PI * p.r_lambda / 2.0).unwrap();
        assert!(mid.x.abs() < 1e-7 && (mid.r - p.r_lambda).abs() < 1e-7);
        // One turn at the top; cos θ and θ̇ keep their signs away from the
        // axis layer.
        assert_eq!(traj.events_of(EventKind::RAxisTurn).count(), 1);
        assert!(traj.events.iter().filter(|e| e.state.r > 1e-4).all(|e| e.kind == EventKind::RAxisTurn));
    }

    #[test]
    fn cylinder_stays_put() {
        let p = Params::new(2, -1.0).unwrap();
        let c = IntegrationControls { s_max: 6.0, ..Default::default() };
        let traj = integrate(exact_cylinder(&p, 0.0), &p, &c).unwrap();
        assert_eq!(traj.terminal, Terminal::Budget);
        assert!(traj.samples.iter().all(|st| (st.r - p.c_lambda).abs() < 1e-8));
        assert_eq!(traj.events_of(EventKind::RAxisTurn).count(), 0);
    }

    #[test]
    fn evaluate_hits_samples_and_events() {
        let (_, traj) = sphere_run(-1.0, &IntegrationControls::default());
        let sm = traj.samples[5];
        assert_eq!(traj.evaluate(sm.s).unwrap(), sm);
        for ev in &traj.events {
            let st = traj.evaluate(ev.s).unwrap();
            assert!((st.theta - ev.state.theta).abs() < 1e-12);
        }
        assert!(traj.evaluate(traj.s_end() + 1.0).is_err());
        assert!(traj.evaluate(traj.s_start() - 1e-3).is_err());
    }

    #[test]
    fn rejects_start_below_cutoff() {
        let p = Params::new(2, -1.0).unwrap();
        let c = IntegrationControls::default();
        assert!(matches!(
            integrate(ProfileState::new(0.0, 0.0, 1e-7, 0.0), &p, &c),
            Err(Error::Singularity { .. })
        ));
        let bad = IntegrationControls { event_tol: 1e-3, ..c };
        assert!(integrate(ProfileState::new(0.0, 0.0, 0.5, 0.0), &p, &bad).is_err());
    }

    #[test]
    fn theta_ddot_at_inflection() {
        let p = Params::new(3, -0.7).unwrap();
        // Pick a state and solve for x so that θ̇ = 0.
        let (r, theta) = (0.4f64, 1.1f64);
        let x = -(((2.0 / r) - r) * theta.cos() + p.lambda) / theta.sin();
        let st = ProfileState::new(0.0, x, r, theta);
        assert!(crate::model::rhs(&st, &p).unwrap().2.abs() < 1e-12);
        let tdd = theta_ddot(&st, &p).unwrap();
        assert_relative_eq!(tdd, -2.0 * theta.sin() * theta.cos() / (r * r), max_relative = 1e-10);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let (_, traj) = sphere_run(-5f64.sqrt(), &IntegrationControls::default());
        let text = traj.to_json().unwrap();
        let back = Trajectory::from_json(&text).unwrap();
        assert_eq!(back, traj);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn csv_has_fixed_columns() {
        let (_, traj) = sphere_run(-1.0, &IntegrationControls::default());
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "s,x,r,theta,thetadot,H,kappa_rot,kappa_profile,residual");
        assert_eq!(lines.count(), traj.samples.len());
    }
}
