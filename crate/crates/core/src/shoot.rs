//! Scans and bisection over the starting height.
//!
//! `γ_δ` starts at `(0, δ)` perpendicular to the r-axis; `γ̄_b` leaves the
//! x-axis at `(b, 0)`. For `λ` negative enough, small `δ` give `C2(2,1)`
//! and `δ` near `C_λ` give `C2(2,2)`. The infimum `δ_s` of the `C2(2,2)`
//! heights is located by bisection; the curve there returns to the axis
//! perpendicularly and closes up after reflection.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{classify, ClassifierOptions, CurveClass, SegmentType};
use crate::error::{Error, Result};
use crate::integrator::{
    integrate, singular_start, Branch, EventKind, IntegrationControls, Terminal, Trajectory, DEFAULT_LAUNCH_RADIUS,
};
use crate::model::{Params, ProfileState};
use crate::surface::{convexity_report, mirror_extend_uniform, self_intersection_check, Closure, ConvexityReport};

/// One classified curve of a scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    /// `δ` or `b`.
    pub parameter: f64,
    pub class: CurveClass,
    pub label: String,
    pub terminal: Terminal,
    /// `(s, r)` at the first turn, if any.
    pub first_turn: Option<(f64, f64)>,
}

impl ScanRow {
    fn from_trajectory(parameter: f64, traj: &Trajectory, opts: &ClassifierOptions) -> Result<Self> {
        let class = classify(traj, opts)?.class;
        Ok(Self {
            parameter,
            label: class.label(),
            class,
            terminal: traj.terminal,
            first_turn: traj.events_of(EventKind::RAxisTurn).next().map(|e| (e.s, e.state.r)),
        })
    }
}

pub fn write_scan_csv<W: Write>(rows: &[ScanRow], mut w: W) -> Result<()> {
    writeln!(w, "parameter,class,partial,low_confidence,terminal,first_turn_s,first_turn_r")?;
    for row in rows {
        let (s1, r1) = row.first_turn.map_or((String::new(), String::new()), |(s, r)| (format!("{s:e}"), format!("{r:e}")));
        writeln!(
            w,
            "{:e},{},{},{},{:?},{},{}",
            row.parameter, row.label, row.class.partial, row.class.low_confidence, row.terminal, s1, r1
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub controls: IntegrationControls,
    pub classifier: ClassifierOptions,
    /// Pieces integrated per curve.
    pub turns: u32,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { controls: IntegrationControls::default(), classifier: ClassifierOptions::default(), turns: 2 }
    }
}

fn require_negative(params: &Params) -> Result<()> {
    if params.lambda < 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("scans need λ < 0, got {}", params.lambda)))
    }
}

pub fn delta_start(delta: f64) -> ProfileState {
    ProfileState::new(0.0, 0.0, delta, 0.0)
}

/// Classifies `γ_δ` for each `δ` of the grid. Rows come back in grid
/// order.
pub fn scan_delta(params: &Params, grid: &[f64], opts: &ScanOptions) -> Result<Vec<ScanRow>> {
    require_negative(params)?;
    opts.controls.validate()?;
    if let Some(&d) = grid.iter().find(|&&d| !(d > 0.0 && d < params.c_lambda)) {
        return Err(Error::InvalidParameter(format!("δ = {d} outside (0, C_λ = {})", params.c_lambda)));
    }
    let controls = opts.controls.with_max_turns(opts.turns);
    grid.par_iter()
        .map(|&d| {
            let traj = integrate(delta_start(d), params, &controls)?;
            ScanRow::from_trajectory(d, &traj, &opts.classifier)
        })
        .collect()
}

/// Classifies `γ̄_b`, launched upward from `(b, 0)`, for each `b`.
pub fn scan_b(params: &Params, grid: &[f64], opts: &ScanOptions) -> Result<Vec<ScanRow>> {
    require_negative(params)?;
    opts.controls.validate()?;
    if let Some(&b) = grid.iter().find(|&&b| !(b < -params.lambda) || !b.is_finite()) {
        return Err(Error::InvalidParameter(format!("b = {b} must be below −λ = {}", -params.lambda)));
    }
    let controls = opts.controls.with_max_turns(opts.turns);
    grid.par_iter()
        .map(|&b| {
            let start = singular_start(b, Branch::Ascending, params, DEFAULT_LAUNCH_RADIUS)?;
            let traj = integrate(start, params, &controls)?;
            ScanRow::from_trajectory(b, &traj, &opts.classifier)
        })
        .collect()
}

/// Lower bound for the height of the first turn of `γ̄_b`,
/// `√(log(−1/(2√π(b+λ)))) + λ`, valid for `b ∈ [−λ − 1/(2√π), −λ)`.
pub fn first_turn_height_bound(b: f64, params: &Params) -> Option<f64> {
    let lam = params.lambda;
    let width = 0.5 / std::f64::consts::PI.sqrt();
    if !(b >= -lam - width && b < -lam) {
        return None;
    }
    let arg = (-1.0 / (2.0 * std::f64::consts::PI.sqrt() * (b + lam))).ln();
    Some(arg.max(0.0).sqrt() + lam)
}

/// Width of the window below `−λ` where `γ̄_b` is known to be `C2(3,1)`:
/// `(1/(2√π)) e^{−(C_{−λ} + √2 − λ)²}`.
pub fn near_axis_window(params: &Params) -> f64 {
    let e = params.c_minus_lambda + std::f64::consts::SQRT_2 - params.lambda;
    0.5 / std::f64::consts::PI.sqrt() * (-e * e).exp()
}

/// Geometric grid of `points` values between `lo` and `hi`, inclusive.
pub fn geometric_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln();
    (0..points)
        .map(|i| match i {
            0 => lo,
            _ if i + 1 == points => hi,
            _ => lo * (ratio * i as f64 / (points - 1) as f64).exp(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootOptions {
    pub controls: IntegrationControls,
    pub classifier: ClassifierOptions,
    /// Axis layer for the bisection predicate. Zero counts every zero, so
    /// the predicate stays informative down to the integration noise.
    pub bisection_layer: f64,
    pub grid_points: usize,
    /// Grid range as fractions of `C_λ`.
    pub grid_range: (f64, f64),
    /// Tolerance refinements tried on a partial classification.
    pub retries: u32,
    /// Axis cutoff for the closing curve.
    pub r_close: f64,
    /// Bisection steps allowed beyond `tol_delta` while waiting for the
    /// midpoint curve to close.
    pub max_polish: u32,
    /// Forward samples of the mirrored closing profile.
    pub profile_points: usize,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self {
            controls: IntegrationControls { rel_tol: 1e-11, abs_tol: 1e-13, event_tol: 1e-13, ..Default::default() },
            classifier: ClassifierOptions::default(),
            bisection_layer: 0.0,
            grid_points: 64,
            grid_range: (0.02, 0.98),
            retries: 3,
            r_close: 5e-4,
            max_polish: 80,
            profile_points: 2000,
        }
    }
}

/// Outcome of the δ-bisection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootResult {
    pub params: Params,
    pub delta_s: f64,
    pub bracket: (f64, f64),
    pub tol_delta: f64,
    pub iterations: u32,
    /// Steps taken past `tol_delta` before the midpoint closed.
    pub polish_iterations: u32,
    /// `λ ≤ −4√((n−1)/5)`.
    pub hypothesis_holds: bool,
    /// Some grid point below the bracket was already `C2(2,2)`.
    pub interval_violation: bool,
    pub scan: Vec<ScanRow>,
    /// Labels at `(δ_lo, δ_hi)`.
    pub class_at: (String, String),
    /// Labels at `δ_lo − tol_delta` and `δ_hi + tol_delta`; these must
    /// match `class_at`.
    pub class_outside: (String, String),
    pub closing_class: String,
    /// `θ̇` zeros and `cos θ` zeros on the first piece of the closing curve.
    pub first_piece_zeros: (usize, usize),
    pub closure: Closure,
    /// Closure with the axis cutoff lowered tenfold.
    pub closure_refined: Closure,
    pub closing_trajectory: Trajectory,
    pub embedded: bool,
    pub convexity: ConvexityReport,
}

impl ShootResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn hypothesis_holds(params: &Params) -> bool {
    params.lambda <= -4.0 * (params.rot_mult() / 5.0).sqrt()
}

struct Bisector<'a> {
    params: &'a Params,
    opts: &'a ShootOptions,
}

impl Bisector<'_> {
    /// Whether `γ_δ` is `C2(2,2)`, refining tolerances on partial results.
    fn is_22(&self, delta: f64) -> Result<(bool, CurveClass)> {
        let classifier = ClassifierOptions { axis_layer: self.opts.bisection_layer, ..self.opts.classifier };
        let mut controls = self.opts.controls.with_max_turns(2);
        let mut last = None;
        for _ in 0..=self.opts.retries {
            let traj = integrate(delta_start(delta), self.params, &controls)?;
            let class = classify(&traj, &classifier)?.class;
            if class.belongs_to(&[2, 2]) {
                return Ok((true, class));
            }
            if !class.partial || class.len() >= 2 {
                return Ok((false, class));
            }
            last = Some(class);
            controls = controls.refined();
        }
        Err(Error::NonConvergence(format!(
            "classification at δ = {delta} stayed partial ({}) after {} refinements",
            last.map(|c| c.label()).unwrap_or_default(),
            self.opts.retries
        )))
    }

    /// Closing run at `delta`, if it closes: class `C2(2,3)` with a
    /// perpendicular hit at `r_close`, and again at `r_close / 10` with a
    /// smaller `|cos θ|`. Only the cutoff changes between the two runs;
    /// tightening the tolerances as well would move `δ_s` itself by more
    /// than the bracket width.
    fn close(&self, delta: f64) -> Result<Option<(Trajectory, CurveClass, Trajectory)>> {
        let every_zero = ClassifierOptions { axis_layer: 0.0, ..self.opts.classifier };
        let run = |r_min: f64| -> Result<Option<(Trajectory, CurveClass)>> {
            let controls = self.opts.controls.with_max_turns(2).with_r_min(r_min);
            let traj = integrate(delta_start(delta), self.params, &controls)?;
            if traj.terminal != Terminal::AxisHit {
                return Ok(None);
            }
            let class = classify(&traj, &every_zero)?.class;
            let closes = class.belongs_to(&[2, 3]) && class.closed && !class.partial;
            Ok(closes.then_some((traj, class)))
        };
        let Some((traj, class)) = run(self.opts.r_close)? else {
            return Ok(None);
        };
        let Some((refined, _)) = run(self.opts.r_close / 10.0)? else {
            return Ok(None);
        };
        if refined.end().theta.cos().abs() >= traj.end().theta.cos().abs() {
            return Ok(None);
        }
        Ok(Some((traj, class, refined)))
    }
}

/// Locates `δ_s = inf{δ̃ : γ_δ ∈ C2(2,2) for all δ ∈ (δ̃, C_λ)}`.
///
/// A grid scan supplies the bracket: the top grid point must be `C2(2,2)`
/// and the lower end is the highest grid point that is not. Bisection then
/// runs until the bracket is narrower than `tol_delta` and the midpoint
/// curve closes (see `ShootOptions::r_close`).
pub fn find_delta_s(params: &Params, tol_delta: f64, opts: &ShootOptions) -> Result<ShootResult> {
    require_negative(params)?;
    if !(tol_delta > 0.0) {
        return Err(Error::InvalidParameter(format!("tol_delta must be positive, got {tol_delta}")));
    }
    opts.controls.validate()?;
    let c = params.c_lambda;
    let grid = geometric_grid(opts.grid_range.0 * c, opts.grid_range.1 * c, opts.grid_points);
    let scan_opts = ScanOptions {
        controls: opts.controls,
        classifier: ClassifierOptions { axis_layer: opts.bisection_layer, ..opts.classifier },
        turns: 2,
    };
    let scan = scan_delta(params, &grid, &scan_opts)?;
    let is22: Vec<bool> = scan.iter().map(|r| r.class.belongs_to(&[2, 2])).collect();
    if !is22.last().copied().unwrap_or(false) {
        return Err(Error::NotFound(format!(
            "γ_δ at the top grid point δ = {:.6} is {}, not C2(2,2)",
            grid.last().copied().unwrap_or(f64::NAN),
            scan.last().map(|r| r.label.as_str()).unwrap_or("unclassified")
        )));
    }
    let Some(lo_idx) = is22.iter().rposition(|&b| !b) else {
        return Err(Error::NotFound("every grid point is C2(2,2); no lower bracket".into()));
    };
    let interval_violation = is22[..lo_idx].iter().any(|&b| b);

    let bis = Bisector { params, opts };
    let (mut lo, mut hi) = (grid[lo_idx], grid[lo_idx + 1]);
    // The scan classified with the same options; partial lower points are
    // re-examined here.
    let (lo_is22, _) = bis.is_22(lo)?;
    if lo_is22 {
        return Err(Error::NonConvergence(format!("grid point δ = {lo} flipped to C2(2,2) after refinement")));
    }
    let mut iterations = 0;
    let mut polish = 0;
    let closing = loop {
        let mid = 0.5 * (lo + hi);
        if hi - lo < tol_delta {
            if let Some(found) = bis.close(mid)? {
                break found;
            }
            if polish >= opts.max_polish || mid <= lo || mid >= hi {
                return Err(Error::NonConvergence(format!(
                    "bracket [{lo}, {hi}] narrower than {tol_delta} but the midpoint curve does not close"
                )));
            }
            polish += 1;
        }
        if iterations > 200 {
            return Err(Error::NonConvergence(format!("bracket stalled at [{lo}, {hi}]")));
        }
        iterations += 1;
        if bis.is_22(mid)?.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    };
    let (closing_trajectory, closing_class, refined) = closing;
    let delta_s = 0.5 * (lo + hi);

    let (_, lo_class) = bis.is_22(lo)?;
    let (_, hi_class) = bis.is_22(hi)?;
    let below = (lo - tol_delta).max(0.5 * lo);
    let above = (hi + tol_delta).min(0.5 * (hi + c));
    let (_, below_class) = bis.is_22(below)?;
    let (_, above_class) = bis.is_22(above)?;

    let first_piece_zeros = {
        let first_turn = closing_trajectory.events_of(EventKind::RAxisTurn).next().map_or(f64::INFINITY, |e| e.s);
        let count = |k: EventKind| closing_trajectory.events_of(k).filter(|e| e.s < first_turn).count();
        (count(EventKind::ThetaDotZero), count(EventKind::FPrimeZero))
    };
    let profile = mirror_extend_uniform(&closing_trajectory, opts.profile_points)?;
    let embedded = !self_intersection_check(&profile);
    let convexity = convexity_report(&profile, params)?;

    Ok(ShootResult {
        params: *params,
        delta_s,
        bracket: (lo, hi),
        tol_delta,
        iterations,
        polish_iterations: polish,
        hypothesis_holds: hypothesis_holds(params),
        interval_violation,
        scan,
        class_at: (label2(&lo_class), label2(&hi_class)),
        class_outside: (label2(&below_class), label2(&above_class)),
        closing_class: closing_class.label(),
        first_piece_zeros,
        closure: Closure::of(closing_trajectory.end()),
        closure_refined: Closure::of(refined.end()),
        closing_trajectory,
        embedded,
        convexity,
    })
}

fn label2(class: &CurveClass) -> String {
    class.label_k(2).unwrap_or_else(|| class.label())
}

/// Distance from `γ_δ` to `γ̄_0`, with `r` at the first `θ̇` zero of `γ_δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub delta: f64,
    pub distance: f64,
    pub r_at_first_inflection: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOptions {
    pub controls: IntegrationControls,
    /// Both curves are compared inside `|x| ≤ window.0`, `r ≤ window.1`.
    pub window: (f64, f64),
    /// Arclength spacing of the compared polylines.
    pub spacing: f64,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self { controls: IntegrationControls::default(), window: (4.0, 4.0), spacing: 2e-3 }
    }
}

/// Points of the first two pieces inside the window, spaced in arclength.
fn two_piece_polyline(traj: &Trajectory, opts: &ConvergenceOptions) -> Result<Vec<[f64; 2]>> {
    let end = traj.events_of(EventKind::RAxisTurn).nth(1).map_or(traj.s_end(), |e| e.s);
    let (a, b) = (traj.s_start(), end);
    let n = ((b - a) / opts.spacing).ceil().max(1.0) as usize;
    let mut pts = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let s = if i == n { b } else { a + (b - a) * i as f64 / n as f64 };
        let p = traj.evaluate(s)?;
        if p.x.abs() <= opts.window.0 && p.r <= opts.window.1 {
            pts.push([p.x, p.r]);
        }
    }
    Ok(pts)
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) };
    let (qx, qy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    (qx * qx + qy * qy).sqrt()
}

fn directed_distance(from: &[[f64; 2]], to: &[[f64; 2]]) -> f64 {
    from.par_iter()
        .map(|&p| {
            if to.len() == 1 {
                return point_segment_distance(p, to[0], to[0]);
            }
            to.windows(2).map(|w| point_segment_distance(p, w[0], w[1])).fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max)
}

/// Symmetric Hausdorff distance between two polylines.
pub fn hausdorff(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    directed_distance(a, b).max(directed_distance(b, a))
}

/// Distances between the first two pieces of `γ_δ` and of `γ̄_0`.
pub fn convergence_to_singular_limit(
    params: &Params,
    deltas: &[f64],
    opts: &ConvergenceOptions,
) -> Result<Vec<ConvergenceRow>> {
    require_negative(params)?;
    let controls = opts.controls.with_max_turns(2);
    let start = singular_start(0.0, Branch::Ascending, params, DEFAULT_LAUNCH_RADIUS)?;
    let limit = integrate(start, params, &controls)?;
    let limit_line = two_piece_polyline(&limit, opts)?;
    deltas
        .iter()
        .map(|&d| {
            let traj = integrate(delta_start(d), params, &controls)?;
            let line = two_piece_polyline(&traj, opts)?;
            let r_at_first_inflection = traj.events_of(EventKind::ThetaDotZero).next().map(|e| e.state.r);
            Ok(ConvergenceRow { delta: d, distance: hausdorff(&line, &limit_line), r_at_first_inflection })
        })
        .collect()
}

/// Zero-count type of the first piece of `traj`, if it completed.
pub fn first_piece_type(traj: &Trajectory, opts: &ClassifierOptions) -> Result<Option<SegmentType>> {
    Ok(classify(traj, opts)?.class.types.first().copied())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_geometric_with_exact_ends() {
        let g = geometric_grid(0.01, 1.0, 3);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[2], 1.0);
        assert!((g[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn scan_rejects_cylinder_height() {
        let p = Params::new(2, -1.0).unwrap();
        let err = scan_delta(&p, &[0.1, p.c_lambda], &ScanOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
        assert!(scan_delta(&Params::new(2, 0.5).unwrap(), &[0.1], &ScanOptions::default()).is_err());
    }

    #[test]
    fn scan_preserves_grid_order() {
        let p = Params::new(2, -1.0).unwrap();
        let grid = [0.02, 0.004, 0.014, 0.009];
        let rows = scan_delta(&p, &grid, &ScanOptions::default()).unwrap();
        let params: Vec<f64> = rows.iter().map(|r| r.parameter).collect();
        assert_eq!(params, grid);
        let mut rev = grid;
        rev.reverse();
        let back = scan_delta(&p, &rev, &ScanOptions::default()).unwrap();
        for row in &rows {
            let twin = back.iter().find(|r| r.parameter == row.parameter).unwrap();
            assert_eq!(twin.label, row.label);
        }
    }

    #[test]
    fn height_bound_window() {
        let p = Params::new(2, -1.0).unwrap();
        assert!(first_turn_height_bound(0.5, &p).is_none());
        assert!(first_turn_height_bound(1.0, &p).is_none());
        let v = first_turn_height_bound(0.95, &p).unwrap();
        assert!((v - ((1.0 / (2.0 * std::f64::consts::PI.sqrt() * 0.05)).ln().sqrt() - 1.0)).abs() < 1e-12);
        assert!(near_axis_window(&p) > 0.0 && near_axis_window(&p) < 1e-6);
    }

    #[test]
    fn hausdorff_of_shifted_lines() {
        let a = [[0.0, 0.0], [1.0, 0.0]];
        let b = [[0.0, 0.5], [1.0, 0.5]];
        assert!((hausdorff(&a, &b) - 0.5).abs() < 1e-15);
        assert_eq!(hausdorff(&a, &a), 0.0);
    }
}
