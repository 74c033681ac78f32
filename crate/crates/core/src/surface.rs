//! Closed profiles, surfaces of revolution and their curvature.
//!
//! A curve that leaves the r-axis perpendicularly at `(0, δ)` and comes
//! back to it is closed up by the reflection `(s, x, θ) ↦ (−s, −x, −θ)`.
//! Revolving the full profile about the x-axis gives a sphere-type
//! hypersurface. Its curvature data is reported with the unit normal
//! reversed, which turns a solution for `λ̃` into a solution for `−λ̃`.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{Terminal, Trajectory};
use crate::model::{curvatures, CurvatureData, Params, ProfileState};

/// Closure of one axis endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Closure {
    pub r_end: f64,
    pub cos_end: f64,
    pub x_end: f64,
}

impl Closure {
    pub fn of(state: &ProfileState) -> Self {
        Self { r_end: state.r, cos_end: state.theta.cos().abs(), x_end: state.x }
    }
}

/// Full profile over `s ∈ [−S, S]`, in the orientation of the system it
/// was integrated in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedProfile {
    pub params: Params,
    pub samples: Vec<ProfileState>,
    pub left: Closure,
    pub right: Closure,
}

const AXIS_START_TOL: f64 = 1e-12;

/// Below this radius the individual principal curvatures are dominated by
/// integration error amplified by the `1/r` terms (their sum stays
/// accurate), so values there are extrapolated from farther out.
pub const AXIS_LAYER: f64 = 1e-4;

fn layered_curvatures(samples: &[ProfileState], params: &Params, layer: f64) -> Result<Vec<CurvatureData>> {
    let mut out: Vec<CurvatureData> =
        samples.iter().map(|p| Ok(curvatures(p, params)?.flipped(params))).collect::<Result<_>>()?;
    let outside: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].r >= layer).collect();
    if let (Some(&first), Some(&last)) = (outside.first(), outside.last()) {
        for i in 0..first {
            out[i] = out[first];
        }
        for i in last + 1..samples.len() {
            out[i] = out[last];
        }
    }
    Ok(out)
}

/// Mirrors a forward trajectory through the r-axis using its accepted
/// steps as samples.
pub fn mirror_extend(traj: &Trajectory) -> Result<ClosedProfile> {
    check_closable(traj)?;
    Ok(assemble(&traj.params, &traj.samples))
}

/// As [`mirror_extend`] with the forward half resampled at `points`
/// equally spaced arclengths from the dense output.
pub fn mirror_extend_uniform(traj: &Trajectory, points: usize) -> Result<ClosedProfile> {
    check_closable(traj)?;
    if points < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 points, got {points}")));
    }
    let (a, b) = (traj.s_start(), traj.s_end());
    let mut forward = Vec::with_capacity(points);
    for i in 0..points {
        let s = if i + 1 == points { b } else { a + (b - a) * i as f64 / (points - 1) as f64 };
        forward.push(traj.evaluate(s)?);
    }
    Ok(assemble(&traj.params, &forward))
}

fn check_closable(traj: &Trajectory) -> Result<()> {
    let p = traj.start();
    if p.s != 0.0 || p.x.abs() > AXIS_START_TOL || p.theta.abs() > AXIS_START_TOL {
        return Err(Error::Rejected(format!(
            "trajectory must start on the r-axis with θ = 0 at s = 0, got s={} x={} θ={}",
            p.s, p.x, p.theta
        )));
    }
    if traj.terminal != Terminal::AxisHit {
        return Err(Error::Rejected(format!("trajectory must end on the axis, ended with {:?}", traj.terminal)));
    }
    Ok(())
}

fn assemble(params: &Params, forward: &[ProfileState]) -> ClosedProfile {
    let mut start = forward[0];
    start.x = 0.0;
    start.theta = 0.0;
    let mut samples: Vec<ProfileState> = forward[1..].iter().rev().map(ProfileState::mirrored).collect();
    samples.push(start);
    samples.extend_from_slice(&forward[1..]);
    ClosedProfile {
        params: *params,
        left: Closure::of(&samples[0]),
        right: Closure::of(samples.last().expect("non-empty")),
        samples,
    }
}

impl ClosedProfile {
    /// Wraps arbitrary samples, for curvature reports on open arcs.
    pub fn from_samples(params: Params, samples: Vec<ProfileState>) -> Result<Self> {
        let (first, last) = match (samples.first(), samples.last()) {
            (Some(f), Some(l)) => (*f, *l),
            _ => return Err(Error::InvalidParameter("profile needs at least one sample".into())),
        };
        Ok(Self { params, left: Closure::of(&first), right: Closure::of(&last), samples })
    }

    /// Curvature data after reversing the normal, with samples inside the
    /// axis layer carrying the values of the nearest sample outside it.
    pub fn flipped_curvatures(&self) -> Result<Vec<CurvatureData>> {
        layered_curvatures(&self.samples, &self.params, AXIS_LAYER)
    }

    pub fn polyline(&self) -> Vec<[f64; 2]> {
        self.samples.iter().map(|p| [p.x, p.r]).collect()
    }

    /// Profile with flipped curvatures, one row per sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "s,x,r,theta,H,kappa_rot,kappa_profile,residual")?;
        for (p, c) in self.samples.iter().zip(self.flipped_curvatures()?) {
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                p.s, p.x, p.r, p.theta, c.mean, c.kappa_rot, c.kappa_profile, c.residual
            )?;
        }
        Ok(())
    }
}

/// Triangulated surface of revolution in ℝ³.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    /// Flipped curvature data per vertex.
    pub curvature: Vec<CurvatureData>,
    pub meridians: usize,
}

/// Revolves a closed profile about the x-axis. The endpoints become poles.
pub fn revolve(profile: &ClosedProfile, meridians: usize, params: &Params) -> Result<Mesh> {
    if params.n != 2 {
        return Err(Error::Rejected(format!(
            "meshes are built for n = 2 only (surfaces in 3-space), got n = {}; use the curvature report instead",
            params.n
        )));
    }
    if meridians < 8 {
        return Err(Error::InvalidParameter(format!("meridians must be at least 8, got {meridians}")));
    }
    let samples = &profile.samples;
    if samples.len() < 3 {
        return Err(Error::InvalidParameter("profile needs at least 3 samples".into()));
    }
    let rings = samples.len() - 2;
    let curv = layered_curvatures(samples, params, AXIS_LAYER)?;

    let mut vertices = Vec::with_capacity(rings * meridians + 2);
    let mut curvature = Vec::with_capacity(vertices.capacity());
    vertices.push([samples[0].x, 0.0, 0.0]);
    curvature.push(curv[0]);
    let angles: Vec<(f64, f64)> =
        (0..meridians).map(|j| (std::f64::consts::TAU * j as f64 / meridians as f64).sin_cos()).collect();
    for (p, c) in samples[1..=rings].iter().zip(&curv[1..=rings]) {
        for &(sin, cos) in &angles {
            vertices.push([p.x, p.r * cos, p.r * sin]);
            curvature.push(*c);
        }
    }
    let last = samples.len() - 1;
    vertices.push([samples[last].x, 0.0, 0.0]);
    curvature.push(curv[last]);

    let south = 0;
    let north = vertices.len() - 1;
    let v = |i: usize, j: usize| 1 + i * meridians + j % meridians;
    let mut faces = Vec::with_capacity(2 * rings * meridians);
    for j in 0..meridians {
        faces.push([south, v(0, j + 1), v(0, j)]);
    }
    for i in 0..rings - 1 {
        for j in 0..meridians {
            faces.push([v(i, j), v(i, j + 1), v(i + 1, j)]);
            faces.push([v(i, j + 1), v(i + 1, j + 1), v(i + 1, j)]);
        }
    }
    for j in 0..meridians {
        faces.push([v(rings - 1, j), v(rings - 1, j + 1), north]);
    }
    let mut mesh = Mesh { vertices, faces, curvature, meridians };
    if mesh.signed_volume() < 0.0 {
        for f in &mut mesh.faces {
            f.swap(1, 2);
        }
    }
    Ok(mesh)
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

impl Mesh {
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| dot(self.vertices[f[0]], cross(self.vertices[f[1]], self.vertices[f[2]])))
            .sum::<f64>()
            / 6.0
    }

    pub fn euler_characteristic(&self) -> i64 {
        let edges = self.edge_uses().len();
        self.vertices.len() as i64 - edges as i64 + self.faces.len() as i64
    }

    fn edge_uses(&self) -> HashMap<(usize, usize), (u32, u32)> {
        let mut uses: HashMap<(usize, usize), (u32, u32)> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let e = uses.entry((a.min(b), a.max(b))).or_default();
                if a < b {
                    e.0 += 1;
                } else {
                    e.1 += 1;
                }
            }
        }
        uses
    }

    /// Every edge is shared by exactly two faces that traverse it in
    /// opposite directions.
    pub fn is_watertight(&self) -> bool {
        self.edge_uses().values().all(|&(fwd, back)| fwd == 1 && back == 1)
    }

    /// Outward orientation: positive enclosed volume with consistent
    /// winding.
    pub fn is_outward_oriented(&self) -> bool {
        self.is_watertight() && self.signed_volume() > 0.0
    }

    /// Mean curvature (sum of principal curvatures) from the cotangent
    /// Laplacian with mixed Voronoi areas, `H_i = |Δ x_i|` signed against
    /// the inward direction. Convex surfaces get positive values.
    pub fn discrete_mean_curvature(&self) -> Vec<f64> {
        let nv = self.vertices.len();
        let mut lap = vec![[0.0; 3]; nv];
        let mut area = vec![0.0; nv];
        let mut normal = vec![[0.0; 3]; nv];
        for f in &self.faces {
            let p = [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]];
            let n = cross(sub(p[1], p[0]), sub(p[2], p[0]));
            let a2 = norm(n);
            if a2 == 0.0 {
                continue;
            }
            for k in 0..3 {
                let (i, j, l) = (k, (k + 1) % 3, (k + 2) % 3);
                normal[f[i]] = [normal[f[i]][0] + n[0], normal[f[i]][1] + n[1], normal[f[i]][2] + n[2]];
                // Angle at vertex l faces edge (i, j).
                let u = sub(p[i], p[l]);
                let w = sub(p[j], p[l]);
                let cot = dot(u, w) / norm(cross(u, w));
                let d = sub(p[j], p[i]);
                for c in 0..3 {
                    lap[f[i]][c] += 0.5 * cot * d[c];
                    lap[f[j]][c] -= 0.5 * cot * d[c];
                }
            }
            let ang = |a: usize| {
                let u = sub(p[(a + 1) % 3], p[a]);
                let w = sub(p[(a + 2) % 3], p[a]);
                dot(u, w)
            };
            let obtuse = (0..3).find(|&a| ang(a) < 0.0);
            for k in 0..3 {
                let contrib = match obtuse {
                    None => {
                        let (j, l) = ((k + 1) % 3, (k + 2) % 3);
                        let cot_at = |a: usize| {
                            let u = sub(p[(a + 1) % 3], p[a]);
                            let w = sub(p[(a + 2) % 3], p[a]);
                            dot(u, w) / norm(cross(u, w))
                        };
                        let e_kj = sub(p[j], p[k]);
                        let e_kl = sub(p[l], p[k]);
                        (dot(e_kj, e_kj) * cot_at(l) + dot(e_kl, e_kl) * cot_at(j)) / 8.0
                    }
                    Some(o) if o == k => a2 / 4.0,
                    Some(_) => a2 / 8.0,
                };
                area[f[k]] += contrib;
            }
        }
        (0..nv)
            .map(|i| {
                let l = [lap[i][0] / area[i], lap[i][1] / area[i], lap[i][2] / area[i]];
                // Δx = −H ν for the outward normal ν.
                let h = norm(l);
                if dot(l, normal[i]) > 0.0 {
                    -h
                } else {
                    h
                }
            })
            .collect()
    }

    /// Wavefront OBJ, coordinates at 9 significant digits.
    pub fn write_obj<W: Write>(&self, mut w: W) -> Result<()> {
        for v in &self.vertices {
            writeln!(w, "v {:.8e} {:.8e} {:.8e}", v[0], v[1], v[2])?;
        }
        for f in &self.faces {
            writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
        Ok(())
    }
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    robust::orient2d(
        robust::Coord { x: a[0], y: a[1] },
        robust::Coord { x: b[0], y: b[1] },
        robust::Coord { x: c[0], y: c[1] },
    )
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    a[0].min(b[0]) <= p[0] && p[0] <= a[0].max(b[0]) && a[1].min(b[1]) <= p[1] && p[1] <= a[1].max(b[1])
}

/// Closed-segment intersection with exact orientation tests.
pub fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// Whether two non-adjacent segments of the polyline meet. Segments are
/// swept in order of their left x-coordinate.
pub fn polyline_self_intersects(points: &[[f64; 2]]) -> bool {
    if points.len() < 4 {
        return false;
    }
    let m = points.len() - 1;
    let lo = |i: usize| points[i][0].min(points[i + 1][0]);
    let hi = |i: usize| points[i][0].max(points[i + 1][0]);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| lo(a).total_cmp(&lo(b)));
    for (k, &i) in order.iter().enumerate() {
        let reach = hi(i);
        for &j in &order[k + 1..] {
            if lo(j) > reach {
                break;
            }
            if i.abs_diff(j) <= 1 {
                continue;
            }
            if segments_intersect(points[i], points[i + 1], points[j], points[j + 1]) {
                return true;
            }
        }
    }
    false
}

pub fn self_intersection_check(profile: &ClosedProfile) -> bool {
    polyline_self_intersects(&profile.polyline())
}

/// Extremes of the flipped curvatures along a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub min_h: f64,
    pub max_h: f64,
    pub min_kappa_rot: f64,
    pub max_kappa_rot: f64,
    pub min_kappa_profile: f64,
    pub max_kappa_profile: f64,
    /// Sign changes of `κ_profile` along `s`, exact zeros skipped.
    pub kappa_profile_sign_changes: usize,
    /// `max |H + ⟨X, ν⟩ + λ̃|` after the flip.
    pub max_residual: f64,
    /// Samples inside the axis layer, left out of the extremes.
    pub layer_samples: usize,
}

impl ConvexityReport {
    pub fn strictly_mean_convex(&self) -> bool {
        self.min_h > 0.0
    }

    pub fn convex(&self) -> bool {
        self.min_kappa_rot >= 0.0 && self.min_kappa_profile >= 0.0
    }
}

pub fn convexity_report(profile: &ClosedProfile, params: &Params) -> Result<ConvexityReport> {
    convexity_report_with_layer(profile, params, AXIS_LAYER)
}

pub fn convexity_report_with_layer(profile: &ClosedProfile, params: &Params, layer: f64) -> Result<ConvexityReport> {
    let mut rep = ConvexityReport {
        min_h: f64::INFINITY,
        max_h: f64::NEG_INFINITY,
        min_kappa_rot: f64::INFINITY,
        max_kappa_rot: f64::NEG_INFINITY,
        min_kappa_profile: f64::INFINITY,
        max_kappa_profile: f64::NEG_INFINITY,
        kappa_profile_sign_changes: 0,
        max_residual: 0.0,
        layer_samples: 0,
    };
    let mut last_sign = 0.0;
    for p in &profile.samples {
        if p.r < layer {
            rep.layer_samples += 1;
            continue;
        }
        let c = curvatures(p, params)?.flipped(params);
        rep.min_h = rep.min_h.min(c.mean);
        rep.max_h = rep.max_h.max(c.mean);
        rep.min_kappa_rot = rep.min_kappa_rot.min(c.kappa_rot);
        rep.max_kappa_rot = rep.max_kappa_rot.max(c.kappa_rot);
        rep.min_kappa_profile = rep.min_kappa_profile.min(c.kappa_profile);
        rep.max_kappa_profile = rep.max_kappa_profile.max(c.kappa_profile);
        rep.max_residual = rep.max_residual.max(c.residual.abs());
        if c.kappa_profile != 0.0 {
            let s = c.kappa_profile.signum();
            if last_sign != 0.0 && s != last_sign {
                rep.kappa_profile_sign_changes += 1;
            }
            last_sign = s;
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{integrate, IntegrationControls};
    use crate::model::{exact_cylinder, exact_sphere};

    fn sphere_profile(lambda: f64, points: usize) -> (Params, ClosedProfile) {
        let params = Params::new(2, lambda).unwrap();
        let start = ProfileState::new(0.0, 0.0, params.r_lambda, 0.0);
        let traj = integrate(start, &params, &IntegrationControls::default()).unwrap();
        (params, mirror_extend_uniform(&traj, points).unwrap())
    }

    #[test]
    fn mirror_is_exactly_symmetric() {
        let (_, prof) = sphere_profile(-1.0, 50);
        let m = prof.samples.len();
        assert_eq!(m, 99);
        for i in 0..m {
            let (a, b) = (prof.samples[i], prof.samples[m - 1 - i]);
            assert_eq!(a.s, -b.s);
            assert_eq!(a.x, -b.x);
            assert_eq!(a.r, b.r);
            assert_eq!(a.theta, -b.theta);
        }
        assert!(prof.left.cos_end < 0.05 && prof.right.cos_end < 0.05);
    }

    #[test]
    fn rejects_off_axis_start() {
        let params = Params::new(2, -1.0).unwrap();
        let start = ProfileState::new(0.0, 0.3, params.r_lambda, 0.0);
        let traj = integrate(start, &params, &IntegrationControls::default().with_max_turns(1)).unwrap();
        assert!(matches!(mirror_extend(&traj), Err(Error::Rejected(_))));
    }

    #[test]
    fn sphere_mesh_topology_and_curvature() {
        let (params, prof) = sphere_profile(-1.0, 40);
        let mesh = revolve(&prof, 64, &params).unwrap();
        assert_eq!(mesh.vertices.len(), (prof.samples.len() - 2) * 64 + 2);
        assert!(mesh.is_watertight());
        assert!(mesh.is_outward_oriented());
        assert_eq!(mesh.euler_characteristic(), 2);
        let target = 2.0 / params.flipped().r_minus_lambda;
        for c in &mesh.curvature {
            assert!((c.mean - target).abs() < 1e-5, "{} vs {}", c.mean, target);
        }
        let eight = revolve(&prof, 8, &params).unwrap();
        assert_eq!(eight.euler_characteristic(), 2);
    }

    #[test]
    fn mesh_rejects_higher_dimension_and_few_meridians() {
        let (params, prof) = sphere_profile(-1.0, 20);
        assert!(revolve(&prof, 7, &params).is_err());
        let p3 = Params::new(3, -1.0).unwrap();
        assert!(matches!(revolve(&prof, 16, &p3), Err(Error::Rejected(_))));
    }

    #[test]
    fn sphere_convexity_report() {
        let (params, prof) = sphere_profile(-2.0, 200);
        let rep = convexity_report(&prof, &params).unwrap();
        let target = 2.0 / params.r_lambda;
        assert!((rep.min_h - target).abs() < 1e-6 && (rep.max_h - target).abs() < 1e-6);
        assert_eq!(rep.kappa_profile_sign_changes, 0);
        assert!(rep.max_residual < 1e-6);
        assert!(rep.convex(), "{rep:?}");
    }

    #[test]
    fn cylinder_has_flat_profile() {
        let params = Params::new(2, -1.0).unwrap();
        let samples = (0..20).map(|i| exact_cylinder(&params, i as f64 * 0.1)).collect();
        let prof = ClosedProfile::from_samples(params, samples).unwrap();
        let rep = convexity_report(&prof, &params).unwrap();
        assert_eq!(rep.min_kappa_profile, 0.0);
        assert_eq!(rep.max_kappa_profile, 0.0);
    }

    #[test]
    fn circle_and_figure_eight() {
        let circle: Vec<[f64; 2]> = (0..=100)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / 100.0;
                [t.cos(), t.sin()]
            })
            .collect();
        // Closing point shares an endpoint with the first segment only
        // through the wrap, which is not adjacency in an open polyline.
        assert!(!polyline_self_intersects(&circle[..100]));
        let eight: Vec<[f64; 2]> = (0..=100)
            .map(|i| {
                let t = std::f64::consts::TAU * (i as f64 + 0.5) / 100.0;
                [t.sin(), (2.0 * t).sin() / 2.0]
            })
            .collect();
        assert!(polyline_self_intersects(&eight));
    }

    #[test]
    fn sphere_profile_is_embedded() {
        let params = Params::new(2, -1.0).unwrap();
        let samples =
            (0..=200).map(|i| exact_sphere(&params, 1e-3 + i as f64 * (std::f64::consts::PI * params.r_lambda - 2e-3) / 200.0).unwrap());
        let prof = ClosedProfile::from_samples(params, samples.collect()).unwrap();
        assert!(!self_intersection_check(&prof));
    }

    #[test]
    fn obj_has_nine_significant_digits() {
        let (params, prof) = sphere_profile(-1.0, 10);
        let mesh = revolve(&prof, 8, &params).unwrap();
        let mut buf = Vec::new();
        mesh.write_obj(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().next().unwrap();
        let coord = first.split_whitespace().nth(1).unwrap();
        let mantissa = coord.trim_start_matches('-').split('e').next().unwrap();
        assert_eq!(mantissa.replace('.', "").len(), 9);
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), mesh.faces.len());
    }
}
