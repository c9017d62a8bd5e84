//! Integration of the first-order quasi-derivative system equivalent to
//! `(tau - lambda) u = g`:
//!
//! ```text
//! u'      = u1 / p - s u
//! (u1)'   = s u1 + (q - lambda r) u - r g
//! ```
//!
//! `u` and `u1 = p (u' + s u)` stay absolutely continuous even when the
//! coefficients jump, so an adaptive smooth-piece integrator with coefficient
//! breakpoints as hard step boundaries is the right tool. Exponential growth
//! is absorbed by renormalization; the accumulated exponent travels with the
//! trajectory in `scale_log`.
//!
//! Dense output per step is the order-matched continuous extension of the
//! Dormand-Prince 5(4) pair (a quartic in the step-local variable), so
//! interpolated values carry the same accuracy as the nodes. Trajectories
//! rebuilt from plain node data fall back to cubic Hermite spans.

use crate::coefficients::{Coefficient, ValidatedProblem};
use crate::error::{Error, Result};

/// Default integrator tolerances (absolute, relative).
pub const DEFAULT_ABS_TOL: f64 = 1e-12;
pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// State norm above which the integrator rescales and accumulates the
/// exponent in `scale_log`.
const RENORM_THRESHOLD: f64 = 1e100;

/// Relative floor of the double-zero guard: `u` and `u1` simultaneously
/// below this fraction of the running scale is impossible for nontrivial
/// data and aborts the run.
const TRIVIALITY_FLOOR: f64 = 1e-14;

/// Solution value and first quasi-derivative at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiState {
    pub x: f64,
    pub u: f64,
    pub u1: f64,
}

/// Initial-value problem for `(tau - lambda) u = g` from `x0` to `target`.
#[derive(Debug, Clone)]
pub struct IvpSpec {
    pub x0: f64,
    pub u0: f64,
    pub u1_0: f64,
    pub lambda: f64,
    pub inhomogeneity: Option<Coefficient>,
    pub target: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl IvpSpec {
    pub fn new(x0: f64, u0: f64, u1_0: f64, lambda: f64, target: f64) -> IvpSpec {
        IvpSpec {
            x0,
            u0,
            u1_0,
            lambda,
            inhomogeneity: None,
            target,
            abs_tol: DEFAULT_ABS_TOL,
            rel_tol: DEFAULT_REL_TOL,
        }
    }

    pub fn with_tol(mut self, abs_tol: f64, rel_tol: f64) -> IvpSpec {
        self.abs_tol = abs_tol;
        self.rel_tol = rel_tol;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// A recorded zero of `u`, with the sign of the crossing
/// (+1 when `u` increases through zero).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroRecord {
    pub x: f64,
    pub sign: i8,
}

fn poly_eval<const N: usize>(c: &[f64; N], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * t + ck)
}

/// Real roots of a quadratic, ascending.
fn quadratic_roots(c0: f64, c1: f64, c2: f64) -> Vec<f64> {
    if c2.abs() < 1e-300 {
        if c1.abs() < 1e-300 {
            return vec![];
        }
        return vec![-c0 / c1];
    }
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 {
        return vec![];
    }
    let sq = disc.sqrt();
    // Numerically stable form.
    let q = -0.5 * (c1 + c1.signum() * sq);
    let mut roots = if q.abs() > 1e-300 {
        vec![q / c2, c0 / q]
    } else {
        vec![0.0, 0.0]
    };
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots
}

/// Roots of a polynomial located by strict sign changes across the given
/// span partition (bisection to ~1e-18 in the local variable). Spans whose
/// endpoint values vanish within `floor` are skipped; callers deal with
/// those separately.
fn sign_change_roots<const N: usize>(
    c: &[f64; N],
    knots: &[f64],
    floor: f64,
) -> Vec<f64> {
    let mut roots = Vec::new();
    for w in knots.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        if !(ta < tb) {
            continue;
        }
        let (va, vb) = (poly_eval(c, ta), poly_eval(c, tb));
        if va.abs() <= floor || vb.abs() <= floor {
            continue;
        }
        if va.signum() == vb.signum() {
            continue;
        }
        let (mut a, mut b, mut fa) = (ta, tb, va);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            let fm = poly_eval(c, m);
            if fm == 0.0 {
                a = m;
                b = m;
                break;
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        roots.push(0.5 * (a + b));
    }
    roots
}

/// One accepted step with quartic dense output in the local variable
/// `t = (x - xl)/(xr - xl)`, stored with ascending endpoints regardless of
/// integration direction.
#[derive(Debug, Clone, PartialEq)]
struct DenseStep {
    xl: f64,
    xr: f64,
    /// Power-basis coefficients of u and u1 in t.
    cu: [f64; 5],
    cw: [f64; 5],
    scale_log: f64,
}

impl DenseStep {
    fn eval(&self, x: f64) -> (f64, f64) {
        let t = (x - self.xl) / (self.xr - self.xl);
        (poly_eval(&self.cu, t), poly_eval(&self.cw, t))
    }

    fn left(&self) -> (f64, f64) {
        (self.cu[0], self.cw[0])
    }

    fn right(&self) -> (f64, f64) {
        (self.cu.iter().sum(), self.cw.iter().sum())
    }

    /// Zeros of the dense u-polynomial in [0,1], as x locations with
    /// crossing signs. Node zeros at the edges are reported according to the
    /// `include_left`/`include_right` flags (each interior node is claimed by
    /// exactly one adjacent step); the interior is split into monotone spans
    /// at the critical points, bisected, and polished with a Newton step.
    /// Roots landing within snapping distance of a step edge resolve to the
    /// edge location.
    fn u_zeros(&self, include_left: bool, include_right: bool) -> Vec<ZeroRecord> {
        let c = &self.cu;
        let h = self.xr - self.xl;
        let scale = c.iter().map(|v| v.abs()).fold(0.0_f64, f64::max);
        if scale == 0.0 {
            return vec![];
        }
        // A dense value below this floor counts as a node zero; a genuine
        // simple zero this close to a critical point would contradict the
        // nontriviality guard.
        let node_floor = 1e-13 * scale;
        let d1 = [c[1], 2.0 * c[2], 3.0 * c[3], 4.0 * c[4]];
        let d2_roots = quadratic_roots(d1[1], 2.0 * d1[2], 3.0 * d1[3]);
        let mut d1_knots = vec![0.0];
        d1_knots.extend(d2_roots.into_iter().filter(|&t| t > 0.0 && t < 1.0));
        d1_knots.push(1.0);
        let crit = sign_change_roots(&d1, &d1_knots, 0.0);

        let deriv_sign = |t: f64| if poly_eval(&d1, t) >= 0.0 { 1i8 } else { -1i8 };
        let snap = 1e-9;
        let mut out = Vec::new();

        if include_left && poly_eval(c, 0.0).abs() <= node_floor {
            out.push(ZeroRecord { x: self.xl, sign: deriv_sign(0.0) });
        }
        let mut knots = vec![0.0];
        knots.extend(crit.into_iter().filter(|&t| t > 0.0 && t < 1.0));
        knots.push(1.0);
        for t in sign_change_roots(c, &knots, node_floor) {
            let mut tt = t;
            let d = poly_eval(&d1, tt);
            if d.abs() > 1e-300 {
                let tn = tt - poly_eval(c, tt) / d;
                if tn > 0.0 && tn < 1.0 {
                    tt = tn;
                }
            }
            let x = if tt <= snap {
                self.xl
            } else if tt >= 1.0 - snap {
                self.xr
            } else {
                self.xl + tt * h
            };
            out.push(ZeroRecord { x, sign: deriv_sign(tt) });
        }
        if include_right && poly_eval(c, 1.0).abs() <= node_floor {
            out.push(ZeroRecord { x: self.xr, sign: deriv_sign(1.0) });
        }
        out
    }
}

/// Cubic Hermite coefficients from endpoint values and slopes.
fn hermite_coeffs(h: f64, yl: f64, ml: f64, yr: f64, mr: f64) -> [f64; 5] {
    let (sl, sr) = (h * ml, h * mr);
    [
        yl,
        sl,
        -3.0 * yl - 2.0 * sl + 3.0 * yr - sr,
        2.0 * yl + sl - 2.0 * yr + sr,
        0.0,
    ]
}

/// Dense-output solution of `(tau - lambda) u = g` on a subinterval, with
/// zero-crossing records and the accumulated rescaling exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    lambda: f64,
    direction: Direction,
    steps: Vec<DenseStep>,
    zeros: Vec<ZeroRecord>,
    x_lo: f64,
    x_hi: f64,
}

impl Trajectory {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn span(&self) -> (f64, f64) {
        (self.x_lo, self.x_hi)
    }

    pub fn covers(&self, x: f64) -> bool {
        let slack = 1e-12 * (1.0 + (self.x_hi - self.x_lo).abs());
        x >= self.x_lo - slack && x <= self.x_hi + slack
    }

    pub fn zeros(&self) -> &[ZeroRecord] {
        &self.zeros
    }

    /// Step edges (node x-locations) in ascending order.
    pub fn node_xs(&self) -> Vec<f64> {
        let mut xs: Vec<f64> = self.steps.iter().map(|s| s.xl).collect();
        xs.push(self.x_hi);
        xs
    }

    fn step_at(&self, x: f64) -> Result<&DenseStep> {
        if !self.covers(x) {
            return Err(Error::OutOfRange { x, lo: self.x_lo, hi: self.x_hi });
        }
        let idx = self.steps.partition_point(|s| s.xr < x);
        Ok(&self.steps[idx.min(self.steps.len() - 1)])
    }

    /// Stored-scale state at x plus the local rescaling exponent; the true
    /// solution is `(u, u1) * exp(scale_log)`.
    pub fn eval_scaled(&self, x: f64) -> Result<(f64, f64, f64)> {
        let s = self.step_at(x)?;
        let (u, w) = s.eval(x.clamp(s.xl, s.xr));
        Ok((u, w, s.scale_log))
    }

    /// De-scaled state at x; may overflow to infinity for strongly growing
    /// solutions, in which case consumers should fall back to `eval_scaled`.
    pub fn eval(&self, x: f64) -> Result<QuasiState> {
        let (u, u1, slog) = self.eval_scaled(x)?;
        let m = slog.exp();
        Ok(QuasiState { x, u: u * m, u1: u1 * m })
    }

    /// Node states in integration order (stored scale).
    pub fn nodes(&self) -> Vec<(QuasiState, f64)> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        let push = |out: &mut Vec<(QuasiState, f64)>, x: f64, v: (f64, f64), slog: f64| {
            out.push((QuasiState { x, u: v.0, u1: v.1 }, slog));
        };
        match self.direction {
            Direction::Forward => {
                let first = &self.steps[0];
                push(&mut out, first.xl, first.left(), first.scale_log);
                for s in &self.steps {
                    push(&mut out, s.xr, s.right(), s.scale_log);
                }
            }
            Direction::Backward => {
                let first = self.steps.last().unwrap();
                push(&mut out, first.xr, first.right(), first.scale_log);
                for s in self.steps.iter().rev() {
                    push(&mut out, s.xl, s.left(), s.scale_log);
                }
            }
        }
        out
    }

    /// Line-delimited dump `x u u1 scale_log` at node points, 17 significant
    /// digits per field.
    pub fn dump<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        for (state, slog) in self.nodes() {
            writeln!(w, "{:.16e} {:.16e} {:.16e} {:.16e}", state.x, state.u, state.u1, slog)?;
        }
        Ok(())
    }

    /// Multiplies the trajectory by a nonzero constant.
    pub fn scale_by(&mut self, c: f64) {
        assert!(c != 0.0 && c.is_finite(), "trajectory scale must be finite and nonzero");
        for s in &mut self.steps {
            for k in 0..5 {
                s.cu[k] *= c;
                s.cw[k] *= c;
            }
        }
        if c < 0.0 {
            for z in &mut self.zeros {
                z.sign = -z.sign;
            }
        }
    }
}

/// Right-hand side of the quasi-derivative system with coefficient piece
/// indices pinned for one smooth segment.
struct SegmentRhs<'a> {
    problem: &'a ValidatedProblem,
    lambda: f64,
    g: Option<&'a Coefficient>,
    pi: usize,
    qi: usize,
    ri: usize,
    si: usize,
    gi: usize,
}

impl<'a> SegmentRhs<'a> {
    fn new(
        problem: &'a ValidatedProblem,
        lambda: f64,
        g: Option<&'a Coefficient>,
        seg_mid: f64,
    ) -> SegmentRhs<'a> {
        let pr = problem.problem();
        SegmentRhs {
            problem,
            lambda,
            g,
            pi: pr.p.piece_index(seg_mid),
            qi: pr.q.piece_index(seg_mid),
            ri: pr.r.piece_index(seg_mid),
            si: pr.s.piece_index(seg_mid),
            gi: g.map(|c| c.piece_index(seg_mid)).unwrap_or(0),
        }
    }

    fn eval(&self, x: f64, y: [f64; 2]) -> [f64; 2] {
        let pr = self.problem.problem();
        let p = pr.p.eval_in_piece(self.pi, x);
        let q = pr.q.eval_in_piece(self.qi, x);
        let r = pr.r.eval_in_piece(self.ri, x);
        let s = pr.s.eval_in_piece(self.si, x);
        let g = self.g.map(|c| c.eval_in_piece(self.gi, x)).unwrap_or(0.0);
        [
            y[1] / p - s * y[0],
            s * y[1] + (q - self.lambda * r) * y[0] - r * g,
        ]
    }
}

// Dormand-Prince 5(4) tableau with the coefficients of its order-matched
// continuous extension.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const MAX_TOTAL_STEPS: usize = 2_000_000;

/// Power-basis coefficients of the continuous extension for one component.
/// The interpolant is `r1 + t(r2 + (1-t)(r3 + t(r4 + (1-t) r5)))` in the
/// step-local variable t.
fn dense_coeffs(h: f64, y0: f64, y1: f64, k: &[[f64; 2]; 7], comp: usize) -> [f64; 5] {
    let ydiff = y1 - y0;
    let bspl = h * k[0][comp] - ydiff;
    let r4 = ydiff - h * k[6][comp] - bspl;
    let mut r5 = 0.0;
    for (j, kj) in k.iter().enumerate() {
        if D[j] != 0.0 {
            r5 += D[j] * kj[comp];
        }
    }
    r5 *= h;
    [
        y0,
        ydiff + bspl,
        -bspl + r4 + r5,
        -r4 - 2.0 * r5,
        r5,
    ]
}

struct Integrator {
    steps: Vec<DenseStep>,
    zeros: Vec<ZeroRecord>,
    scale_log: f64,
    abs_tol: f64,
    rel_tol: f64,
    total_steps: usize,
    renormalize: bool,
    /// Per-step relative decay guard. Sound for the integrator's small
    /// steps; node-built trajectories may legitimately decay by many orders
    /// over one wide span and only check for exact double zeros.
    strict_decay_guard: bool,
}

impl Integrator {
    fn record_step(&mut self, step: DenseStep, forward: bool, final_step: bool) -> Result<()> {
        let (ul, wl) = step.left();
        let (ur, wr) = step.right();
        let m_new = ur.abs().max(wr.abs());
        let m_old = ul.abs().max(wl.abs());
        let floor = if self.strict_decay_guard { TRIVIALITY_FLOOR * m_old } else { 0.0 };
        if m_new < floor || (m_new == 0.0 && m_old > 0.0) {
            return Err(Error::TrivialState { x: step.xr, floor });
        }
        // Each interior node is claimed by exactly one adjacent step; the
        // terminal node belongs to the final step.
        let (il, ir) = if forward { (true, final_step) } else { (final_step, true) };
        self.zeros.extend(step.u_zeros(il, ir));
        self.steps.push(step);
        Ok(())
    }

    /// Integrates one smooth segment [from, to] (direction-signed endpoints)
    /// and returns the state at `to`.
    fn run_segment(
        &mut self,
        rhs: &SegmentRhs<'_>,
        from: f64,
        to: f64,
        mut y: [f64; 2],
        last_segment: bool,
    ) -> Result<[f64; 2]> {
        let dir = if to > from { 1.0 } else { -1.0 };
        let seg_len = (to - from).abs();
        let mut x = from;
        let mut f = rhs.eval(x, y);

        let ynorm = y[0].abs().max(y[1].abs());
        let fnorm = f[0].abs().max(f[1].abs());
        let mut h = if fnorm > 1e-30 {
            (0.01 * (ynorm + self.abs_tol) / fnorm).min(seg_len)
        } else {
            seg_len
        };
        h = h.max(seg_len * 1e-10) * dir;

        loop {
            let remaining = to - x;
            if remaining.abs() <= 1e-14 * (1.0 + x.abs()) {
                break;
            }
            if h.abs() > remaining.abs() {
                h = remaining;
            }
            if self.total_steps >= MAX_TOTAL_STEPS {
                return Err(Error::IntegrationFailure(format!(
                    "step budget exhausted at x = {x:.6e}"
                )));
            }
            self.total_steps += 1;

            // Stage evaluations (FSAL: the 7th stage is the next f).
            let mut k = [[0.0; 2]; 7];
            k[0] = f;
            for i in 1..6 {
                let mut ys = y;
                for (j, kj) in k.iter().enumerate().take(i) {
                    let a = A[i - 1][j];
                    if a != 0.0 {
                        ys[0] += h * a * kj[0];
                        ys[1] += h * a * kj[1];
                    }
                }
                k[i] = rhs.eval(x + C[i] * h, ys);
            }
            let mut y5 = y;
            for (j, kj) in k.iter().enumerate().take(6) {
                let b = A[5][j];
                if b != 0.0 {
                    y5[0] += h * b * kj[0];
                    y5[1] += h * b * kj[1];
                }
            }
            let f_new = rhs.eval(x + h, y5);
            k[6] = f_new;

            let mut err = [0.0; 2];
            for (j, kj) in k.iter().enumerate() {
                let d = B5[j] - B4[j];
                if d != 0.0 {
                    err[0] += h * d * kj[0];
                    err[1] += h * d * kj[1];
                }
            }
            let mut err_norm: f64 = 0.0;
            for comp in 0..2 {
                let sc = self.abs_tol + self.rel_tol * y[comp].abs().max(y5[comp].abs());
                err_norm = err_norm.max((err[comp] / sc).abs());
            }
            if !err_norm.is_finite() {
                return Err(Error::IntegrationFailure(format!(
                    "state not finite near x = {x:.6e}"
                )));
            }

            if err_norm <= 1.0 {
                let x_new = x + h;
                let at_target = (to - x_new).abs() <= 1e-14 * (1.0 + x_new.abs());
                let cu = dense_coeffs(h, y[0], y5[0], &k, 0);
                let cw = dense_coeffs(h, y[1], y5[1], &k, 1);
                let step = if dir > 0.0 {
                    DenseStep { xl: x, xr: x_new, cu, cw, scale_log: self.scale_log }
                } else {
                    // Re-express the polynomials in the ascending local
                    // variable t' = 1 - t.
                    DenseStep {
                        xl: x_new,
                        xr: x,
                        cu: reverse_poly(&cu),
                        cw: reverse_poly(&cw),
                        scale_log: self.scale_log,
                    }
                };
                self.record_step(step, dir > 0.0, last_segment && at_target)?;
                x = x_new;
                y = y5;
                f = f_new;

                if self.renormalize {
                    let m = y[0].abs().max(y[1].abs());
                    if m > RENORM_THRESHOLD {
                        y[0] /= m;
                        y[1] /= m;
                        f[0] /= m;
                        f[1] /= m;
                        self.scale_log += m.ln();
                    }
                }
            }

            let factor = if err_norm <= 1e-30 {
                5.0
            } else {
                (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= factor;
            if h.abs() < 1e-14 * (1.0 + x.abs()) {
                return Err(Error::StepSizeUnderflow { x, h });
            }
        }
        Ok(y)
    }
}

/// Substitutes t -> 1 - t in a power-basis polynomial.
fn reverse_poly(c: &[f64; 5]) -> [f64; 5] {
    // Binomial expansion of sum c_k (1-t)^k.
    let mut out = [0.0; 5];
    for (k, &ck) in c.iter().enumerate() {
        // (1-t)^k = sum_j C(k,j) (-t)^j
        let mut binom = 1.0;
        for j in 0..=k {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            out[j] += ck * sign * binom;
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
    }
    out
}

fn finalize_zeros(zeros: &mut Vec<ZeroRecord>, span: f64) {
    zeros.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap());
    let tol = 1e-12 * (1.0 + span);
    zeros.dedup_by(|a, b| (a.x - b.x).abs() <= tol);
}

/// Integrates the quasi-derivative system from `spec.x0` to `spec.target`
/// with every coefficient breakpoint as a mandatory step boundary.
pub fn integrate_ivp(vp: &ValidatedProblem, spec: &IvpSpec) -> Result<Trajectory> {
    let iv = vp.interval();
    if !spec.target.is_finite() {
        return Err(Error::EndpointSingular { x: spec.target });
    }
    if !spec.x0.is_finite() {
        return Err(Error::EndpointSingular { x: spec.x0 });
    }
    let slack = 1e-12 * (1.0 + spec.x0.abs().max(spec.target.abs()));
    for x in [spec.x0, spec.target] {
        if x < iv.a() - slack || x > iv.b() + slack {
            return Err(Error::OutOfRange { x, lo: iv.a(), hi: iv.b() });
        }
    }
    if spec.x0 == spec.target {
        return Err(Error::InvalidInput("integration range is empty".into()));
    }
    if spec.inhomogeneity.is_none() && spec.u0 == 0.0 && spec.u1_0 == 0.0 {
        return Err(Error::InvalidInput(
            "homogeneous problem needs nontrivial initial data".into(),
        ));
    }

    let forward = spec.target > spec.x0;
    let (lo, hi) = if forward { (spec.x0, spec.target) } else { (spec.target, spec.x0) };

    // Segment boundaries: every breakpoint of the coefficients (and of the
    // inhomogeneity) strictly between x0 and target.
    let mut cuts: Vec<f64> = vp
        .breakpoints()
        .iter()
        .copied()
        .filter(|&bp| bp > lo && bp < hi)
        .collect();
    if let Some(g) = &spec.inhomogeneity {
        cuts.extend(g.breakpoints_in(lo, hi));
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    if !forward {
        cuts.reverse();
    }

    let mut boundaries = vec![spec.x0];
    boundaries.extend(cuts);
    boundaries.push(spec.target);

    let mut integ = Integrator {
        steps: Vec::new(),
        zeros: Vec::new(),
        scale_log: 0.0,
        abs_tol: spec.abs_tol,
        rel_tol: spec.rel_tol,
        total_steps: 0,
        renormalize: spec.inhomogeneity.is_none(),
        strict_decay_guard: true,
    };

    let mut y = [spec.u0, spec.u1_0];
    for (i, w) in boundaries.windows(2).enumerate() {
        let (from, to) = (w[0], w[1]);
        let rhs = SegmentRhs::new(vp, spec.lambda, spec.inhomogeneity.as_ref(), 0.5 * (from + to));
        let last = i + 2 == boundaries.len();
        y = integ.run_segment(&rhs, from, to, y, last)?;
    }

    let mut steps = integ.steps;
    if !forward {
        steps.reverse();
    }
    let mut zeros = integ.zeros;
    finalize_zeros(&mut zeros, hi - lo);

    Ok(Trajectory {
        lambda: spec.lambda,
        direction: if forward { Direction::Forward } else { Direction::Backward },
        steps,
        zeros,
        x_lo: lo,
        x_hi: hi,
    })
}

/// Builds a trajectory through given de-scaled node states, with cubic
/// Hermite spans whose slopes come from the ODE right-hand side. Zeros are
/// collected with the same machinery the integrator uses.
pub(crate) fn trajectory_from_nodes(
    vp: &ValidatedProblem,
    lambda: f64,
    nodes: &[(f64, f64, f64)],
) -> Result<Trajectory> {
    if nodes.len() < 2 {
        return Err(Error::InvalidInput("need at least two nodes".into()));
    }
    let ascending = nodes[1].0 > nodes[0].0;
    let ordered: Vec<(f64, f64, f64)> = if ascending {
        nodes.to_vec()
    } else {
        nodes.iter().rev().copied().collect()
    };
    let mut integ = Integrator {
        steps: Vec::new(),
        zeros: Vec::new(),
        scale_log: 0.0,
        abs_tol: DEFAULT_ABS_TOL,
        rel_tol: DEFAULT_REL_TOL,
        total_steps: 0,
        renormalize: false,
        strict_decay_guard: false,
    };
    let n = ordered.len();
    for i in 0..n - 1 {
        let (xl, ul, wl) = ordered[i];
        let (xr, ur, wr) = ordered[i + 1];
        if !(xl < xr) {
            return Err(Error::InvalidInput("nodes must be strictly monotone".into()));
        }
        let rhs = SegmentRhs::new(vp, lambda, None, 0.5 * (xl + xr));
        let fl = rhs.eval(xl, [ul, wl]);
        let fr = rhs.eval(xr, [ur, wr]);
        let h = xr - xl;
        let step = DenseStep {
            xl,
            xr,
            cu: hermite_coeffs(h, ul, fl[0], ur, fr[0]),
            cw: hermite_coeffs(h, wl, fl[1], wr, fr[1]),
            scale_log: 0.0,
        };
        integ.record_step(step, true, i + 2 == n)?;
    }
    let mut zeros = integ.zeros;
    let (x_lo, x_hi) = (ordered[0].0, ordered[n - 1].0);
    finalize_zeros(&mut zeros, x_hi - x_lo);
    Ok(Trajectory {
        lambda,
        direction: Direction::Forward,
        steps: integ.steps,
        zeros,
        x_lo,
        x_hi,
    })
}

/// Modified Wronskian `u1(x) u2^[1](x) - u1^[1](x) u2(x)` of two trajectories
/// at equal spectral parameter, de-scaled by the stored exponents.
pub fn wronskian(t1: &Trajectory, t2: &Trajectory, x: f64) -> Result<f64> {
    if t1.lambda != t2.lambda {
        return Err(Error::LambdaMismatch(t1.lambda, t2.lambda));
    }
    let (u1, w1, s1) = t1.eval_scaled(x)?;
    let (u2, w2, s2) = t2.eval_scaled(x)?;
    Ok((u1 * w2 - w1 * u2) * (s1 + s2).exp())
}

/// Number of zeros of `u` in a subinterval. Open mode counts strictly
/// interior zeros; closed mode also counts zeros at the subinterval
/// endpoints. Containment is decided with a relative tolerance of
/// `1e-9 * (d - c)`.
pub fn count_zeros(t: &Trajectory, subinterval: (f64, f64), open: bool) -> Result<usize> {
    let (c, d) = subinterval;
    if !(c < d) {
        return Err(Error::InvalidInput(format!("bad subinterval ({c}, {d})")));
    }
    if !t.covers(c) || !t.covers(d) {
        return Err(Error::OutOfRange {
            x: if t.covers(c) { d } else { c },
            lo: t.x_lo,
            hi: t.x_hi,
        });
    }
    let tol = 1e-9 * (d - c);
    Ok(t.zeros
        .iter()
        .filter(|z| {
            if open {
                z.x > c + tol && z.x < d - tol
            } else {
                z.x >= c - tol && z.x <= d + tol
            }
        })
        .count())
}

/// Reduction of order: builds `u2(x) = u1(x) * integral_{x0}^{x} dt / (p u1^2)`
/// on a range where `u1` does not vanish. The Wronskian `W(u1, u2)` of the
/// result is 1 by construction.
pub fn second_solution(
    vp: &ValidatedProblem,
    u1: &Trajectory,
    x0: f64,
    range: (f64, f64),
) -> Result<Trajectory> {
    let (c, d) = range;
    if !(c < d) || x0 < c || x0 > d {
        return Err(Error::InvalidInput(format!(
            "need c < d and x0 in [c, d]; got ({c}, {d}), x0 = {x0}"
        )));
    }
    if !u1.covers(c) || !u1.covers(d) {
        return Err(Error::OutOfRange {
            x: if u1.covers(c) { d } else { c },
            lo: u1.x_lo,
            hi: u1.x_hi,
        });
    }
    let tol = 1e-9 * (d - c);
    if let Some(z) = u1.zeros.iter().find(|z| z.x > c + tol && z.x < d - tol) {
        return Err(Error::VanishingBase { x: z.x });
    }

    let problem = vp.problem();
    let integrand = |x: f64| {
        let (u, _, slog) = u1.eval_scaled(x).unwrap_or((f64::NAN, 0.0, 0.0));
        let denom = problem.p.eval(x) * u * u * (2.0 * slog).exp();
        1.0 / denom
    };

    // Node grid: u1's step edges inside the range plus x0 and both ends.
    let mut xs: Vec<f64> = vec![c, d, x0];
    for s in &u1.steps {
        if s.xl > c && s.xl < d {
            xs.push(s.xl);
        }
        if s.xr > c && s.xr < d {
            xs.push(s.xr);
        }
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + b.abs()));

    // Cumulative reduction integral from x0 outward in both directions.
    let i0 = xs
        .iter()
        .position(|&x| (x - x0).abs() <= 1e-13 * (1.0 + x0.abs()))
        .unwrap();
    let mut integral = vec![0.0; xs.len()];
    for i in (i0 + 1)..xs.len() {
        integral[i] = integral[i - 1]
            + crate::quad::integrate(&integrand, xs[i - 1], xs[i], 1e-12, vp.breakpoints())?;
    }
    for i in (0..i0).rev() {
        integral[i] = integral[i + 1]
            - crate::quad::integrate(&integrand, xs[i], xs[i + 1], 1e-12, vp.breakpoints())?;
    }

    let mut nodes = Vec::with_capacity(xs.len());
    for (i, &x) in xs.iter().enumerate() {
        let st = u1.eval(x)?;
        if !st.u.is_finite() || !st.u1.is_finite() {
            return Err(Error::IntegrationFailure(
                "base solution overflows on the requested range".into(),
            ));
        }
        // u2 = u1 I, u2^[1] = u1^[1] I + 1/u1.
        nodes.push((x, st.u * integral[i], st.u1 * integral[i] + 1.0 / st.u));
    }
    trajectory_from_nodes(vp, u1.lambda, &nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{validate_problem, Coefficient, Interval, SlProblem};
    use std::f64::consts::PI;

    fn free(a: f64, b: f64) -> ValidatedProblem {
        validate_problem(&SlProblem::constant_free(a, b).unwrap()).unwrap()
    }

    #[test]
    fn constant_solution() {
        let vp = free(0.0, PI);
        let t = integrate_ivp(&vp, &IvpSpec::new(0.0, 1.0, 0.0, 0.0, PI)).unwrap();
        for &x in &[0.0, 1.0, 2.0, PI] {
            let st = t.eval(x).unwrap();
            assert!((st.u - 1.0).abs() < 1e-12);
            assert!(st.u1.abs() < 1e-12);
        }
        assert!(t.zeros().is_empty());
    }

    #[test]
    fn linear_solution_dense_output_exact() {
        // lambda = 0, u = x: the dense interpolant must reproduce a linear
        // solution exactly (consistency of the continuous extension).
        let vp = free(0.0, PI);
        let t = integrate_ivp(&vp, &IvpSpec::new(0.0, 0.0, 1.0, 0.0, PI)).unwrap();
        for k in 0..=37 {
            let x = PI * k as f64 / 37.0;
            let st = t.eval(x).unwrap();
            assert!((st.u - x).abs() < 1e-13, "u({x}) = {}", st.u);
            assert!((st.u1 - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn sine_solution_accuracy() {
        let vp = free(0.0, PI);
        let t = integrate_ivp(&vp, &IvpSpec::new(0.0, 0.0, 1.0, 1.0, PI)).unwrap();
        let mut max_err: f64 = 0.0;
        for k in 0..=100 {
            let x = PI * k as f64 / 100.0;
            let st = t.eval(x).unwrap();
            max_err = max_err.max((st.u - x.sin()).abs()).max((st.u1 - x.cos()).abs());
        }
        assert!(max_err < 1e-9, "max error {max_err}");
    }

    #[test]
    fn constant_s_path() {
        // p = r = 1, s = c, q = -c^2: tau u = -u'' so u = sin x at lambda = 1,
        // and u^[1] = u' + c u = cos x + c sin x.
        let c = 0.8;
        let problem = SlProblem::new(
            Interval::new(0.0, PI).unwrap(),
            Coefficient::constant(1.0),
            Coefficient::constant(-c * c),
            Coefficient::constant(1.0),
            Coefficient::constant(c),
        );
        let vp = validate_problem(&problem).unwrap();
        let t = integrate_ivp(&vp, &IvpSpec::new(0.0, 0.0, 1.0, 1.0, PI)).unwrap();
        for k in 1..10 {
            let x = PI * k as f64 / 10.0;
            let st = t.eval(x).unwrap();
            assert!((st.u - x.sin()).abs() < 1e-9);
            assert!((st.u1 - (x.cos() + c * x.sin())).abs() < 1e-9);
        }
    }

    #[test]
    fn wronskian_of_fundamental_pair() {
        let vp = free(0.0, PI);
        let t_cos = integrate_ivp(&vp, &IvpSpec::new(0.0, 1.0, 0.0, 1.0, PI)).unwrap();
        let t_sin = integrate_ivp(&vp, &IvpSpec::new(0.0, 0.0, 1.0, 1.0, PI)).unwrap();
        for &x in &[0.0, 0.5, 1.5, 3.0] {
            let w = wronskian(&t_cos, &t_sin, x).unwrap();
            assert!((w - 1.0).abs() < 1e-9, "W = {w} at x = {x}");
        }
        assert!(wronskian(&t_sin, &t_sin, 1.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn wronskian_constancy_at_lambda_4() {
        let vp = free(0.0, PI);
        let t1 = integrate_ivp(&vp, &IvpSpec::new(0.0, 1.0, 0.0, 4.0, PI)).unwrap();
        let t2 = integrate_ivp(&vp, &IvpSpec::new(0.0, 0.0, 1.0, 4.0, PI)).unwrap();
        let w_mid = wronskian(&t1, &t2, 0.5 * PI).unwrap();
        for &x in &[0.1, 1.0, 3.0] {
            let w = wronskian(&t1, &t2, x).unwrap();
            assert!((w - w_mid).abs() <= 1e-9 * (1.0 + w_mid.abs()));
        }
    }

    #[test]
    fn count_zeros_of_sine() {
        let vp = free(0.0, 3.5 * PI);
        let t = integrate_ivp(&vp, &IvpSpec::new(0.0, 0.0, 1.0, 1.0, 3.5 * PI)).unwrap();
        assert_eq!(count_zeros(&t, (0.0, 3.5 * PI), true).unwrap(), 3);
        assert_eq!(count_zeros(&t, (0.0, PI), true).unwrap(), 0);
        assert_eq!(count_zeros(&t, (0.0, PI), false).unwrap(), 2);
    }

    #[test]
    fn count_zeros_scaled_frequency() {
        // u = sin(sqrt(2) x) on (0, pi): one interior zero at pi/sqrt(2).
        let vp = free(0.0, PI);
        let t = integrate_ivp(&vp, &IvpSpec::new(0.0, 0.0, 1.0, 2.0, PI)).unwrap();
        assert_eq!(count_zeros(&t, (0.0, PI), true).unwrap(), 1);
        let z = t.zeros().iter().find(|z| z.x > 0.1).unwrap();
        assert!((z.x - PI / 2.0_f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn second_solution_of_constant_base() {
        let vp = free(0.0, 1.0);
        let u1 = integrate_ivp(&vp, &IvpSpec::new(0.0, 1.0, 0.0, 0.0, 1.0)).unwrap();
        let u2 = second_solution(&vp, &u1, 0.25, (0.0, 1.0)).unwrap();
        for &x in &[0.0, 0.5, 1.0] {
            let st = u2.eval(x).unwrap();
            assert!((st.u - (x - 0.25)).abs() < 1e-10);
            assert!((st.u1 - 1.0).abs() < 1e-10);
        }
        assert!((wronskian(&u1, &u2, 0.7).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn second_solution_exponential_base() {
        // u1 = e^x solves -u'' = -u (lambda = -1); u2 from x0 = 0 is sinh x.
        let vp = free(0.0, 2.0);
        let u1 = integrate_ivp(&vp, &IvpSpec::new(0.0, 1.0, 1.0, -1.0, 2.0)).unwrap();
        let u2 = second_solution(&vp, &u1, 0.0, (0.0, 2.0)).unwrap();
        for &x in &[0.3, 1.0, 1.9] {
            let st = u2.eval(x).unwrap();
            assert!((st.u - x.sinh()).abs() < 5e-9, "u2({x}) = {}", st.u);
            assert!((st.u1 - x.cosh()).abs() < 5e-9);
        }
    }

    #[test]
    fn second_solution_rejects_vanishing_base() {
        let vp = free(0.0, PI);
        let u1 = integrate_ivp(&vp, &IvpSpec::new(0.0, 0.0, 1.0, 2.0, PI)).unwrap();
        match second_solution(&vp, &u1, 0.5, (0.0, PI)) {
            Err(Error::VanishingBase { .. }) => {}
            other => panic!("expected VanishingBase, got {other:?}"),
        }
    }

    #[test]
    fn linearity_in_initial_data() {
        let vp = free(0.0, PI);
        let t1 = integrate_ivp(&vp, &IvpSpec::new(0.0, 0.3, 1.0, 2.5, PI)).unwrap();
        let alpha = -7.5;
        let t2 = integrate_ivp(&vp, &IvpSpec::new(0.0, alpha * 0.3, alpha, 2.5, PI)).unwrap();
        for k in 0..=20 {
            let x = PI * k as f64 / 20.0;
            let a = t1.eval(x).unwrap();
            let b = t2.eval(x).unwrap();
            assert!((b.u - alpha * a.u).abs() < 1e-8 * (1.0 + a.u.abs() * alpha.abs()));
            assert!((b.u1 - alpha * a.u1).abs() < 1e-8 * (1.0 + a.u1.abs() * alpha.abs()));
        }
    }

    #[test]
    fn time_reversal_consistency() {
        let vp = free(0.0, PI);
        let spec = IvpSpec::new(0.0, 0.4, -0.7, 3.0, PI);
        let fwd = integrate_ivp(&vp, &spec).unwrap();
        let end = fwd.eval(PI).unwrap();
        let back = integrate_ivp(&vp, &IvpSpec::new(PI, end.u, end.u1, 3.0, 0.0)).unwrap();
        let start = back.eval(0.0).unwrap();
        assert!((start.u - 0.4).abs() < 1e-9);
        assert!((start.u1 + 0.7).abs() < 1e-9);
    }

    #[test]
    fn zero_count_nondecreasing_in_lambda() {
        let vp = free(0.0, PI);
        let mut prev = 0;
        for k in 0..=20 {
            let lambda = 0.5 + k as f64;
            let t = integrate_ivp(&vp, &IvpSpec::new(0.0, 0.0, 1.0, lambda, PI)).unwrap();
            let n = count_zeros(&t, (0.0, PI), true).unwrap();
            assert!(n >= prev, "zero count dropped from {prev} to {n} at lambda {lambda}");
            prev = n;
        }
    }

    #[test]
    fn renormalization_tracks_exponent() {
        // lambda = -400 on (0, 20): u = sinh(20 x)/20 grows like e^(400).
        let vp = free(0.0, 20.0);
        let t = integrate_ivp(&vp, &IvpSpec::new(0.0, 0.0, 1.0, -400.0, 20.0)).unwrap();
        let (u, _, slog) = t.eval_scaled(20.0).unwrap();
        assert!(u.is_finite() && slog > 100.0);
        let log_exact = 400.0 - (2.0_f64).ln() - (20.0_f64).ln();
        let log_computed = u.abs().ln() + slog;
        assert!(
            (log_computed - log_exact).abs() < 1e-6 * log_exact,
            "log magnitude {log_computed} vs {log_exact}"
        );
    }

    #[test]
    fn breakpoints_are_step_boundaries() {
        let problem = SlProblem::new(
            Interval::new(0.0, 1.0).unwrap(),
            Coefficient::constant(1.0),
            Coefficient::step(0.5, 0.0, -1.0),
            Coefficient::constant(1.0),
            Coefficient::step(0.5, 0.0, 1.0),
        );
        let vp = validate_problem(&problem).unwrap();
        let t = integrate_ivp(&vp, &IvpSpec::new(0.0, 0.0, 1.0, 7.0, 1.0)).unwrap();
        assert!(t.steps.iter().any(|s| s.xr == 0.5));
        // u and u^[1] are continuous across the jump by construction.
        let left = t.eval(0.5 - 1e-12).unwrap();
        let right = t.eval(0.5 + 1e-12).unwrap();
        assert!((left.u - right.u).abs() < 1e-9);
        assert!((left.u1 - right.u1).abs() < 1e-9);
    }

    #[test]
    fn backward_integration_matches_forward() {
        let vp = free(0.0, PI);
        let fwd = integrate_ivp(&vp, &IvpSpec::new(0.0, 0.0, 1.0, 1.0, PI)).unwrap();
        let back = integrate_ivp(&vp, &IvpSpec::new(PI, 0.0, -1.0, 1.0, 0.0)).unwrap();
        // Both represent sin x (the backward run starts from sin's data at pi).
        for &x in &[0.4, 1.3, 2.8] {
            let a = fwd.eval(x).unwrap();
            let b = back.eval(x).unwrap();
            assert!((a.u - b.u).abs() < 1e-9, "{} vs {}", a.u, b.u);
            assert!((a.u1 - b.u1).abs() < 1e-9);
        }
        assert_eq!(count_zeros(&back, (0.0, PI), false).unwrap(), 2);
    }

    #[test]
    fn infinite_target_is_rejected() {
        let vp = free(0.0, f64::INFINITY);
        match integrate_ivp(&vp, &IvpSpec::new(1.0, 1.0, 0.0, 0.0, f64::INFINITY)) {
            Err(Error::EndpointSingular { .. }) => {}
            other => panic!("expected EndpointSingular, got {other:?}"),
        }
    }

    #[test]
    fn dump_round_trips() {
        let vp = free(0.0, 1.0);
        let t = integrate_ivp(&vp, &IvpSpec::new(0.0, 0.0, 1.0, 1.0, 1.0)).unwrap();
        let mut buf = Vec::new();
        t.dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for (line, (state, slog)) in text.lines().zip(t.nodes()) {
            let fields: Vec<f64> = line.split(' ').map(|s| s.parse().unwrap()).collect();
            assert_eq!(fields.len(), 4);
            assert_eq!(fields[0], state.x);
            assert_eq!(fields[1], state.u);
            assert_eq!(fields[2], state.u1);
            assert_eq!(fields[3], slog);
        }
    }
}
