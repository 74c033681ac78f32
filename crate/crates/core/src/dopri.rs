//! Dormand–Prince 5(4) stepper with step-size control and the
//! fourth-order continuous extension of Hairer, Nørsett & Wanner.
//!
//! The stepper is generic over the state dimension and only advances one
//! accepted step at a time; event handling and termination live with the
//! callers.

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Nominal order of the propagated solution.
pub const ORDER: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest allowed |h|.
    pub h_max: f64,
    /// Integration direction: +1 or −1.
    pub direction: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_tol: 1e-12, h_max: f64::INFINITY, direction: 1.0 }
    }
}

/// One accepted step with its interpolation coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    pub coeffs: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn start(&self) -> [f64; N] {
        self.coeffs[0]
    }

    pub fn end(&self) -> [f64; N] {
        let mut y = [0.0; N];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.coeffs[0][i] + self.coeffs[1][i];
        }
        y
    }

    /// Continuous extension at `t`; exact at both step ends.
    pub fn eval(&self, t: f64) -> [f64; N] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.coeffs;
        let mut y = [0.0; N];
        for i in 0..N {
            y[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
        }
        y
    }

    /// Derivative of the continuous extension at `t`.
    pub fn eval_derivative(&self, t: f64) -> [f64; N] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [_, r2, r3, r4, r5] = &self.coeffs;
        let mut dy = [0.0; N];
        for i in 0..N {
            let rr = r4[i] + th1 * r5[i];
            let q = r3[i] + th * rr;
            let p = r2[i] + th1 * q;
            let dq = rr - th * r5[i];
            let dp = -q + th1 * dq;
            dy[i] = (p + th * dp) / self.h;
        }
        dy
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepError {
    /// |h| fell below the representable resolution at `t`.
    Underflow { t: f64 },
}

/// Adaptive stepper state.
pub struct Stepper<F, const N: usize> {
    rhs: F,
    opts: StepOptions,
    t: f64,
    y: [f64; N],
    k1: [f64; N],
    h: f64,
    err_old: f64,
    rejected_last: bool,
    t_stop: Option<f64>,
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        if *c != 0.0 {
            for i in 0..N {
                out[i] += h * c * k[i];
            }
        }
    }
    out
}

impl<F, const N: usize> Stepper<F, N>
where
    F: FnMut(f64, &[f64; N]) -> Option<[f64; N]>,
{
    /// Creates a stepper at `(t0, y0)`. Returns `None` if the right-hand side
    /// is undefined there.
    pub fn new(mut rhs: F, t0: f64, y0: [f64; N], opts: StepOptions) -> Option<Self> {
        let k1 = rhs(t0, &y0)?;
        let mut st = Self { rhs, opts, t: t0, y: y0, k1, h: 0.0, err_old: 1e-4, rejected_last: false, t_stop: None };
        st.h = st.initial_step();
        Some(st)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> [f64; N] {
        self.y
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.opts.abs_tol + self.opts.rel_tol * a.abs().max(b.abs())
    }

    fn initial_step(&mut self) -> f64 {
        let dir = self.opts.direction;
        let (mut dnf, mut dny) = (0.0, 0.0);
        for i in 0..N {
            let sk = self.scale(self.y[i], self.y[i]);
            dnf += (self.k1[i] / sk).powi(2);
            dny += (self.y[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { (dny / dnf).sqrt() * 0.01 };
        h = h.min(self.opts.h_max);
        let y1 = axpy(&self.y, dir * h, &[(1.0, &self.k1)]);
        let Some(k2) = (self.rhs)(self.t + dir * h, &y1) else {
            return (h * 1e-3).max(1e-12);
        };
        let mut der2 = 0.0;
        for i in 0..N {
            let sk = self.scale(self.y[i], self.y[i]);
            der2 += ((k2[i] - self.k1[i]) / sk).powi(2);
        }
        let der2 = der2.sqrt() / h;
        let der12 = der2.abs().max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 {
            (h * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(1.0 / f64::from(ORDER))
        };
        (100.0 * h).min(h1).min(self.opts.h_max)
    }

    /// Never step past `t_stop`; the step that reaches it lands exactly.
    pub fn set_stop(&mut self, t_stop: f64) {
        self.t_stop = Some(t_stop);
    }

    /// Attempts steps until one is accepted and returns it.
    pub fn step(&mut self) -> Result<DenseStep<N>, StepError> {
        const SAFE: f64 = 0.9;
        const BETA: f64 = 0.04;
        const EXPO: f64 = 0.2 - BETA * 0.75;
        let dir = self.opts.direction;
        loop {
            let mut h_abs = self.h.min(self.opts.h_max);
            if h_abs <= 8.0 * f64::EPSILON * self.t.abs().max(1e-3) {
                return Err(StepError::Underflow { t: self.t });
            }
            let mut lands = false;
            if let Some(stop) = self.t_stop {
                let remaining = (stop - self.t) * dir;
                if remaining <= h_abs * 1.01 {
                    h_abs = remaining;
                    lands = true;
                }
            }
            let h = dir * h_abs;
            match self.attempt(h) {
                Some((dense, y_new, k7, err)) => {
                    if err <= 1.0 {
                        let fac11 = err.powf(EXPO);
                        let mut fac = fac11 / self.err_old.powf(BETA);
                        fac = (fac / SAFE).clamp(1.0 / 10.0, 1.0 / 0.2);
                        let mut h_new = h_abs / fac;
                        if self.rejected_last {
                            h_new = h_new.min(h_abs);
                        }
                        self.err_old = err.max(1e-4);
                        self.rejected_last = false;
                        self.t = match (lands, self.t_stop) {
                            (true, Some(stop)) => stop,
                            _ => self.t + h,
                        };
                        self.y = y_new;
                        self.k1 = k7;
                        self.h = h_new.min(self.opts.h_max);
                        return Ok(dense);
                    }
                    let fac11 = err.powf(EXPO);
                    self.h = h_abs / (fac11 / SAFE).min(1.0 / 0.2);
                    self.rejected_last = true;
                }
                None => {
                    // Right-hand side undefined somewhere in the step.
                    self.h = h_abs * 0.25;
                    self.rejected_last = true;
                }
            }
        }
    }

    #[allow(clippy::type_complexity)]
    fn attempt(&mut self, h: f64) -> Option<(DenseStep<N>, [f64; N], [f64; N], f64)> {
        let (t, y, k1) = (self.t, self.y, self.k1);
        let f = &mut self.rhs;
        let k2 = f(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]))?;
        let k3 = f(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]))?;
        let k4 = f(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = f(t + C5 * h, &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
        let y6 = axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        let k6 = f(t + h, &y6)?;
        let y_new = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(t + h, &y_new)?;

        let mut err = 0.0;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = self.opts.abs_tol + self.opts.rel_tol * y[i].abs().max(y_new[i].abs());
            err += (e / sk).powi(2);
        }
        let err = (err / N as f64).sqrt();
        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            return None;
        }

        let mut coeffs = [[0.0; N]; 5];
        for i in 0..N {
            let ydiff = y_new[i] - y[i];
            let bspl = h * k1[i] - ydiff;
            coeffs[0][i] = y[i];
            coeffs[1][i] = ydiff;
            coeffs[2][i] = bspl;
            coeffs[3][i] = ydiff - h * k7[i] - bspl;
            coeffs[4][i] = h
                * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        Some((DenseStep { t0: t, h, coeffs }, y_new, k7, err))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_harmonic(tol: f64, t_end: f64) -> (f64, Vec<DenseStep<2>>) {
        let opts = StepOptions { rel_tol: tol, abs_tol: tol, ..Default::default() };
        let mut st = Stepper::new(|_t, y: &[f64; 2]| Some([y[1], -y[0]]), 0.0, [0.0, 1.0], opts).unwrap();
        let mut steps = Vec::new();
        st.set_stop(t_end);
        while st.t() < t_end {
            steps.push(st.step().unwrap());
        }
        let y = st.y();
        ((y[0] - t_end.sin()).abs().max((y[1] - t_end.cos()).abs()), steps)
    }

    #[test]
    fn harmonic_oscillator_accuracy() {
        let (err, _) = run_harmonic(1e-10, 10.0);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn dense_output_is_exact_at_step_ends_and_accurate_inside() {
        let (_, steps) = run_harmonic(1e-11, 5.0);
        for st in &steps {
            assert_eq!(st.eval(st.t0), st.start());
            let end = st.eval(st.t1());
            assert!((end[0] - st.end()[0]).abs() < 1e-15);
            for k in 1..8 {
                let t = st.t0 + st.h * f64::from(k) / 8.0;
                let y = st.eval(t);
                assert!((y[0] - t.sin()).abs() < 1e-8, "t={t}");
            }
        }
    }

    #[test]
    fn dense_derivative_matches_vector_field() {
        let (_, steps) = run_harmonic(1e-11, 5.0);
        for st in &steps {
            let d0 = st.eval_derivative(st.t0);
            assert!((d0[0] - st.start()[1]).abs() < 1e-14);
            for k in 1..8 {
                let t = st.t0 + st.h * f64::from(k) / 8.0;
                let d = st.eval_derivative(t);
                assert!((d[0] - t.cos()).abs() < 1e-7, "t={t}");
                assert!((d[1] + t.sin()).abs() < 1e-7, "t={t}");
            }
        }
    }

    #[test]
    fn tolerance_proportionality() {
        let (e1, _) = run_harmonic(1e-6, 10.0);
        let (e2, _) = run_harmonic(1e-8, 10.0);
        assert!(e2 < e1 / 10.0, "{e1} {e2}");
    }

    #[test]
    fn backward_direction() {
        let opts = StepOptions { direction: -1.0, ..Default::default() };
        let mut st = Stepper::new(|_t, y: &[f64; 1]| Some([y[0]]), 0.0, [1.0], opts).unwrap();
        st.set_stop(-2.0);
        while st.t() > -2.0 {
            st.step().unwrap();
        }
        assert!((st.y()[0] - (-2.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn undefined_rhs_shrinks_step() {
        // y' = 1 / sqrt(1 - t) is undefined past t = 1.
        let opts = StepOptions::default();
        let rhs = |t: f64, _y: &[f64; 1]| if t < 1.0 { Some([1.0 / (1.0 - t).sqrt()]) } else { None };
        let mut st = Stepper::new(rhs, 0.0, [0.0], opts).unwrap();
        let mut guard = 0;
        while st.step().is_ok() {
            guard += 1;
            assert!(st.t() < 1.0);
            if guard > 100_000 {
                break;
            }
        }
    }
}
