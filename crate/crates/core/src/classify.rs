//! Splitting a profile curve into graphs over the r-axis and labelling them.
//!
//! Between consecutive zeros of `sin θ` the curve is a graph `x = f(r)`.
//! On such a piece
//!
//! ```text
//! f′ = dx/dr = cos θ / sin θ = cot θ
//! f″ = d(cot θ)/dr = −csc²θ · θ̇ / ṙ = −θ̇ / sin³θ
//! ```
//!
//! so `f′ = 0` exactly where `cos θ = 0` and `sign f″ = −sign θ̇ · sign sin θ`.
//! A piece with one zero of `f′` is type 1, one zero of `f″` type 2, and
//! neither type 3.
//!
//! Near a perpendicular axis hit, integration error excites the singular
//! solution of the graph equation, which produces a spurious critical point
//! or inflection at `r ≈ √(ε R)` for an error of size `ε`. Zeros on a piece
//! that ends at the axis cutoff and lie below [`ClassifierOptions::axis_layer`]
//! are attributed to the endpoint instead of the piece.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{integrate, EventKind, Terminal, Trajectory};
use crate::model::theta_dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    /// `sin θ > 0`: r increases along the curve.
    Ascending,
    /// `sin θ < 0`.
    Descending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentEnd {
    /// Ended at a zero of `sin θ`.
    Turn,
    AxisHit,
    Blowup,
    /// Arclength budget ran out with `r` beyond the escape radius.
    Escape,
    /// Stopped without reaching any conclusive end.
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentType {
    T1,
    T2,
    T3,
}

impl SegmentType {
    pub fn number(self) -> u8 {
        match self {
            SegmentType::T1 => 1,
            SegmentType::T2 => 2,
            SegmentType::T3 => 3,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(SegmentType::T1),
            2 => Some(SegmentType::T2),
            3 => Some(SegmentType::T3),
            _ => None,
        }
    }
}

/// One graph over the r-axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// 1-based position along the curve.
    pub index: usize,
    pub s_range: (f64, f64),
    pub orientation: Orientation,
    /// Zeros of `f′` (`cos θ = 0`).
    pub fprime_zeros: Vec<f64>,
    /// Zeros of `f″` (`θ̇ = 0`).
    pub fsecond_zeros: Vec<f64>,
    /// Zeros inside the axis layer that were not counted.
    pub layer_zeros: Vec<f64>,
    /// Radii at the start and end of the piece.
    pub r_range: (f64, f64),
    pub end: SegmentEnd,
}

impl Segment {
    /// Type from the zero counts, or `None` if the counts are impossible
    /// for a non-constant solution.
    pub fn zero_type(&self) -> Option<SegmentType> {
        match (self.fprime_zeros.len(), self.fsecond_zeros.len()) {
            (1, 0) => Some(SegmentType::T1),
            (0, 1) => Some(SegmentType::T2),
            (0, 0) => Some(SegmentType::T3),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOptions {
    /// Zeros below this radius on a piece ending at the axis cutoff belong
    /// to the endpoint.
    pub axis_layer: f64,
    /// A piece reaching the axis counts as a perpendicular hit when
    /// `|cos θ|` at the cutoff is below this.
    pub perpendicular_cos: f64,
    /// A piece still running when the budget ends has escaped if `r`
    /// exceeds this multiple of `R_λ`.
    pub escape_factor: f64,
}

impl Default for ClassifierOptions {
    fn default() -> Self {
        Self { axis_layer: 1e-4, perpendicular_cos: 0.05, escape_factor: 2.0 }
    }
}

/// Ordered type labels of the first pieces of a curve.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurveClass {
    pub types: Vec<SegmentType>,
    /// The last typed piece ends where the solution ends (`s_k = S`).
    pub closed: bool,
    /// A trailing piece could not be typed.
    pub partial: bool,
    /// Some decision relied on the axis layer or on a blow-up guard.
    pub low_confidence: bool,
}

impl CurveClass {
    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    /// Whether the curve belongs to `C_k(N₁, …, N_k)` with `k = expected.len()`.
    pub fn belongs_to(&self, expected: &[u8]) -> bool {
        self.types.len() >= expected.len()
            && self.types.iter().zip(expected).all(|(t, &n)| t.number() == n)
    }

    /// Label of the first `k` pieces, e.g. `C2(2,1)`; `None` if fewer are
    /// typed.
    pub fn label_k(&self, k: usize) -> Option<String> {
        if self.types.len() < k {
            return None;
        }
        let inner: Vec<String> = self.types[..k].iter().map(|t| t.number().to_string()).collect();
        Some(format!("C{}({})", k, inner.join(",")))
    }

    /// Label of every typed piece, with a trailing `+partial` when a piece
    /// could not be typed.
    pub fn label(&self) -> String {
        let base = self.label_k(self.types.len()).unwrap_or_else(|| "C0()".into());
        if self.partial {
            format!("{base}+partial")
        } else {
            base
        }
    }

    /// Parses labels produced by [`CurveClass::label_k`].
    pub fn parse_label(label: &str) -> Option<Vec<SegmentType>> {
        let rest = label.strip_prefix('C')?;
        let (k, rest) = rest.split_once('(')?;
        let inner = rest.strip_suffix(')')?;
        let k: usize = k.parse().ok()?;
        let types: Option<Vec<_>> = if inner.is_empty() {
            Some(Vec::new())
        } else {
            inner.split(',').map(|t| t.parse().ok().and_then(SegmentType::from_number)).collect()
        };
        types.filter(|t| t.len() == k)
    }
}

impl fmt::Display for CurveClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub segments: Vec<Segment>,
    pub class: CurveClass,
}

/// Splits a trajectory into graphs over the r-axis.
pub fn segment(traj: &Trajectory, opts: &ClassifierOptions) -> Result<Vec<Segment>> {
    let mut last_s = traj.s_start();
    for ev in &traj.events {
        if ev.s < last_s {
            return Err(Error::EventOrder(format!("{} at s = {} after s = {}", ev.kind, ev.s, last_s)));
        }
        last_s = ev.s;
    }

    let mut bounds = vec![traj.s_start()];
    bounds.extend(traj.events_of(EventKind::RAxisTurn).map(|e| e.s));
    let s_end = traj.s_end();
    let trailing_open = bounds.last().is_some_and(|&b| s_end > b);
    if trailing_open {
        bounds.push(s_end);
    }

    let terminal_end = match traj.terminal {
        Terminal::AxisHit => SegmentEnd::AxisHit,
        Terminal::Blowup => SegmentEnd::Blowup,
        Terminal::Budget => {
            if traj.end().r > opts.escape_factor * traj.params.r_lambda {
                SegmentEnd::Escape
            } else {
                SegmentEnd::Open
            }
        }
        Terminal::TurnLimit => SegmentEnd::Turn,
    };

    let mut segments = Vec::new();
    for (k, w) in bounds.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let is_last = k + 2 == bounds.len();
        let end = if is_last && trailing_open { terminal_end } else { SegmentEnd::Turn };
        let mid = traj.evaluate(0.5 * (a + b))?;
        let orientation = if mid.theta.sin() > 0.0 { Orientation::Ascending } else { Orientation::Descending };
        let (ra, rb) = (traj.evaluate(a)?.r, traj.evaluate(b)?.r);

        let mut fprime_zeros = Vec::new();
        let mut fsecond_zeros = Vec::new();
        let mut layer_zeros = Vec::new();
        for ev in traj.events.iter().filter(|e| e.s > a && e.s < b) {
            let bucket = match ev.kind {
                EventKind::FPrimeZero => &mut fprime_zeros,
                EventKind::ThetaDotZero => &mut fsecond_zeros,
                _ => continue,
            };
            if end == SegmentEnd::AxisHit && ev.state.r < opts.axis_layer {
                layer_zeros.push(ev.s);
            } else {
                bucket.push(ev.s);
            }
        }
        segments.push(Segment {
            index: segments.len() + 1,
            s_range: (a, b),
            orientation,
            fprime_zeros,
            fsecond_zeros,
            layer_zeros,
            r_range: (ra, rb),
            end,
        });
    }

    for pair in segments.windows(2) {
        if pair[0].orientation == pair[1].orientation {
            return Err(Error::EventOrder(format!(
                "pieces {} and {} have the same orientation",
                pair[0].index, pair[1].index
            )));
        }
    }
    Ok(segments)
}

/// Labels the pieces of a trajectory.
///
/// Pieces ending at a turn are typed by their zero counts. A trailing
/// piece is typed only when the curve ended at the axis cutoff (type 3
/// additionally needs a perpendicular hit), blew up, or escaped; otherwise
/// the class is partial.
pub fn classify(traj: &Trajectory, opts: &ClassifierOptions) -> Result<Classification> {
    let segments = segment(traj, opts)?;
    let mut class = CurveClass { types: Vec::new(), closed: false, partial: false, low_confidence: false };
    for seg in &segments {
        let Some(t) = seg.zero_type() else {
            class.partial = true;
            break;
        };
        if !seg.layer_zeros.is_empty() {
            class.low_confidence = true;
        }
        match seg.end {
            SegmentEnd::Turn => class.types.push(t),
            SegmentEnd::AxisHit => {
                let cos_end = traj.end().theta.cos().abs();
                if t == SegmentType::T3 && cos_end >= opts.perpendicular_cos {
                    class.partial = true;
                    break;
                }
                if t != SegmentType::T3 {
                    class.low_confidence = true;
                }
                class.types.push(t);
                class.closed = true;
            }
            SegmentEnd::Blowup | SegmentEnd::Escape => {
                class.types.push(t);
                class.closed = true;
                class.low_confidence = true;
            }
            SegmentEnd::Open => {
                class.partial = true;
                break;
            }
        }
    }
    Ok(Classification { segments, class })
}

/// Re-integrates from the same start with a tenfold smaller axis cutoff and
/// tolerances; a perpendicular hit must get more perpendicular.
pub fn confirm_axis_closure(traj: &Trajectory) -> Result<bool> {
    if traj.terminal != Terminal::AxisHit {
        return Ok(false);
    }
    let refined = integrate(*traj.start(), &traj.params, &traj.controls.refined())?;
    if refined.terminal != Terminal::AxisHit {
        return Ok(false);
    }
    Ok(refined.end().theta.cos().abs() < traj.end().theta.cos().abs())
}

/// `sign f′ · sign f″` at `s`, from the chart correspondence.
pub fn fprime_fsecond_sign(traj: &Trajectory, s: f64) -> Result<f64> {
    let st = traj.evaluate(s)?;
    let (sin, cos) = st.theta.sin_cos();
    let td = theta_dot(&traj.params, st.x, st.r, st.theta);
    Ok((cos / sin).signum() * -(td * sin).signum())
}

/// Checks at `probes` points that once `f′ f″ > 0` it stays positive toward
/// the larger-r end of the piece. Points within `margin` of a zero of `f′`
/// or `f″` are skipped.
pub fn sign_propagation_holds(traj: &Trajectory, seg: &Segment, probes: usize, margin: f64) -> Result<bool> {
    let (a, b) = seg.s_range;
    let zeros: Vec<f64> = seg
        .fprime_zeros
        .iter()
        .chain(&seg.fsecond_zeros)
        .chain(&seg.layer_zeros)
        .copied()
        .collect();
    let mut signs = Vec::with_capacity(probes);
    for i in 0..probes {
        let s = a + (b - a) * (i as f64 + 0.5) / probes as f64;
        if zeros.iter().any(|z| (z - s).abs() < margin) {
            continue;
        }
        signs.push(fprime_fsecond_sign(traj, s)?);
    }
    // Order by increasing r.
    if seg.orientation == Orientation::Descending {
        signs.reverse();
    }
    let mut seen_positive = false;
    for sg in signs {
        if sg > 0.0 {
            seen_positive = true;
        } else if seen_positive {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{singular_start, Branch, IntegrationControls};
    use crate::model::{exact_cylinder, Params, ProfileState};

    #[test]
    fn labels_round_trip() {
        let c = CurveClass {
            types: vec![SegmentType::T2, SegmentType::T1],
            closed: false,
            partial: false,
            low_confidence: false,
        };
        assert_eq!(c.label(), "C2(2,1)");
        assert_eq!(c.label_k(1).unwrap(), "C1(2)");
        assert!(c.label_k(3).is_none());
        assert_eq!(CurveClass::parse_label("C2(2,1)").unwrap(), c.types);
        assert!(CurveClass::parse_label("C2(2)").is_none());
        assert!(CurveClass::parse_label("C1(4)").is_none());
        assert!(c.belongs_to(&[2, 1]) && c.belongs_to(&[2]) && !c.belongs_to(&[2, 2]));
    }

    #[test]
    fn sphere_is_two_monotone_arcs() {
        let p = Params::new(2, -1.0).unwrap();
        let start = singular_start(-p.r_lambda, Branch::Ascending, &p, 1e-4).unwrap();
        let traj = integrate(start, &p, &IntegrationControls::default()).unwrap();
        let cl = classify(&traj, &ClassifierOptions::default()).unwrap();
        assert_eq!(cl.segments.len(), 2);
        for seg in &cl.segments {
            assert!(seg.fprime_zeros.is_empty() && seg.fsecond_zeros.is_empty());
        }
        assert_eq!(cl.segments[0].orientation, Orientation::Ascending);
        assert_eq!(cl.segments[1].end, SegmentEnd::AxisHit);
        assert_eq!(cl.class.label(), "C2(3,3)");
        assert!(cl.class.closed);
    }

    #[test]
    fn cylinder_has_no_completed_piece() {
        let p = Params::new(2, -1.0).unwrap();
        let c = IntegrationControls { s_max: 5.0, ..Default::default() };
        let traj = integrate(exact_cylinder(&p, 0.0), &p, &c).unwrap();
        let cl = classify(&traj, &ClassifierOptions::default()).unwrap();
        assert!(cl.class.is_empty());
        assert!(cl.class.partial);
        assert!(cl.segments.iter().all(|s| s.end != SegmentEnd::Turn));
    }

    #[test]
    fn small_delta_first_piece_has_one_inflection() {
        let p = Params::new(2, -1.0).unwrap();
        let c = IntegrationControls::default().with_max_turns(2);
        let traj = integrate(ProfileState::new(0.0, 0.0, 0.009, 0.0), &p, &c).unwrap();
        let segs = segment(&traj, &ClassifierOptions::default()).unwrap();
        assert_eq!(segs[0].fsecond_zeros.len(), 1);
        assert!(segs[0].fprime_zeros.is_empty());
        // θ̇ vanishes before the first turn.
        let first_two: Vec<EventKind> = traj
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::ThetaDotZero | EventKind::RAxisTurn))
            .take(2)
            .map(|e| e.kind)
            .collect();
        assert_eq!(first_two, vec![EventKind::ThetaDotZero, EventKind::RAxisTurn]);
    }

    #[test]
    fn chart_correspondence_matches_finite_differences() {
        let p = Params::new(2, -1.0).unwrap();
        let c = IntegrationControls::default().with_max_turns(2);
        let traj = integrate(ProfileState::new(0.0, 0.0, 0.02, 0.0), &p, &c).unwrap();
        let segs = segment(&traj, &ClassifierOptions::default()).unwrap();
        for seg in &segs {
            let (a, b) = seg.s_range;
            for i in 1..20 {
                let s = a + (b - a) * f64::from(i) / 20.0;
                let h = 1e-4 * (b - a);
                let (m, o, q) = (traj.evaluate(s - h).unwrap(), traj.evaluate(s).unwrap(), traj.evaluate(s + h).unwrap());
                // f′ and f″ from divided differences of x against r.
                let fp1 = (o.x - m.x) / (o.r - m.r);
                let fp2 = (q.x - o.x) / (q.r - o.r);
                let fp = (q.x - m.x) / (q.r - m.r);
                let fpp = (fp2 - fp1) / (0.5 * (q.r - m.r));
                let cot = o.theta.cos() / o.theta.sin();
                assert!((fp - cot).abs() < 1e-5 * (1.0 + cot.abs()), "s={s}");
                let sign = fprime_fsecond_sign(&traj, s).unwrap();
                if fp.abs() > 1e-3 && fpp.abs() > 1e-3 {
                    assert_eq!(sign, (fp * fpp).signum(), "s={s}");
                }
            }
        }
    }
}
