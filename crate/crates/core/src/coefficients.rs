//! Problem definitions: interval, piecewise-elementary coefficients,
//! validation, regularity classification, and endpoint type tests.
//!
//! Coefficients are restricted to piecewise-elementary closed forms. This
//! makes local-integrability checks decidable and hands the integrator exact
//! breakpoint locations, while still covering step-function `s` (and with it
//! distributional delta potentials).

use crate::error::{Error, Result};
use crate::quad::{
    truncated_integral_test, IntegralVerdict, QuadratureConfig, TruncationEvidence,
};

/// Open interval (a, b); either endpoint may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    a: f64,
    b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Interval> {
        if a.is_nan() || b.is_nan() || !(a < b) {
            return Err(Error::EmptyInterval { a, b });
        }
        Ok(Interval { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn endpoint(&self, which: Endpoint) -> f64 {
        match which {
            Endpoint::A => self.a,
            Endpoint::B => self.b,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.a < x && x < self.b
    }

    /// A finite interior anchor point, used to start integrations and
    /// truncation sequences.
    pub fn anchor(&self) -> f64 {
        match (self.a.is_finite(), self.b.is_finite()) {
            (true, true) => 0.5 * (self.a + self.b),
            (true, false) => self.a + 1.0,
            (false, true) => self.b - 1.0,
            (false, false) => 0.0,
        }
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.a, self.b)
    }
}

/// Which endpoint of the interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    A,
    B,
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::A => write!(f, "a"),
            Endpoint::B => write!(f, "b"),
        }
    }
}

/// One elementary summand of a coefficient piece.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Constant(f64),
    /// `c0 + c1 x + c2 x^2 + ...`
    Polynomial(Vec<f64>),
    /// `scale * (x - center)^exponent`
    Power { scale: f64, center: f64, exponent: f64 },
    /// `scale * exp(rate * x)`
    Exponential { scale: f64, rate: f64 },
    /// `scale * sin(freq * x + phase)`
    Sin { scale: f64, freq: f64, phase: f64 },
    /// `scale * cos(freq * x + phase)`
    Cos { scale: f64, freq: f64, phase: f64 },
}

impl Term {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Term::Constant(c) => *c,
            Term::Polynomial(cs) => cs.iter().rev().fold(0.0, |acc, &c| acc * x + c),
            Term::Power { scale, center, exponent } => scale * (x - center).powf(*exponent),
            Term::Exponential { scale, rate } => scale * (rate * x).exp(),
            Term::Sin { scale, freq, phase } => scale * (freq * x + phase).sin(),
            Term::Cos { scale, freq, phase } => scale * (freq * x + phase).cos(),
        }
    }

    fn derivative(&self, x: f64) -> Result<f64> {
        Ok(match self {
            Term::Constant(_) => 0.0,
            Term::Polynomial(cs) => {
                let mut acc = 0.0;
                for k in (1..cs.len()).rev() {
                    acc = acc * x + cs[k] * k as f64;
                }
                acc
            }
            Term::Power { scale, center, exponent } => {
                let d = scale * exponent * (x - center).powf(exponent - 1.0);
                if !d.is_finite() {
                    return Err(Error::NotDifferentiable { x });
                }
                d
            }
            Term::Exponential { scale, rate } => scale * rate * (rate * x).exp(),
            Term::Sin { scale, freq, phase } => scale * freq * (freq * x + phase).cos(),
            Term::Cos { scale, freq, phase } => -scale * freq * (freq * x + phase).sin(),
        })
    }
}

/// A coefficient piece: a finite sum of elementary terms over `[from, to]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub from: f64,
    pub to: f64,
    pub terms: Vec<Term>,
}

impl Piece {
    pub fn new(from: f64, to: f64, terms: Vec<Term>) -> Piece {
        Piece { from, to, terms }
    }

    fn eval(&self, x: f64) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    fn derivative(&self, x: f64) -> Result<f64> {
        let mut d = 0.0;
        for t in &self.terms {
            d += t.derivative(x)?;
        }
        Ok(d)
    }
}

/// Piecewise-elementary coefficient function. Pieces tile a contiguous span;
/// their interior boundaries are the breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pieces: Vec<Piece>,
}

impl Coefficient {
    pub fn from_pieces(pieces: Vec<Piece>) -> Result<Coefficient> {
        if pieces.is_empty() {
            return Err(Error::InvalidInput("coefficient needs at least one piece".into()));
        }
        for w in pieces.windows(2) {
            if w[0].to != w[1].from {
                return Err(Error::InvalidInput(format!(
                    "coefficient pieces must tile: piece ending at {} followed by piece starting at {}",
                    w[0].to, w[1].from
                )));
            }
        }
        for p in &pieces {
            if !(p.from < p.to) {
                return Err(Error::InvalidInput(format!(
                    "degenerate piece span [{}, {}]",
                    p.from, p.to
                )));
            }
        }
        Ok(Coefficient { pieces })
    }

    /// Constant on the whole real line.
    pub fn constant(value: f64) -> Coefficient {
        Coefficient {
            pieces: vec![Piece::new(
                f64::NEG_INFINITY,
                f64::INFINITY,
                vec![Term::Constant(value)],
            )],
        }
    }

    /// Polynomial `c0 + c1 x + ...` on the whole real line.
    pub fn polynomial(coeffs: Vec<f64>) -> Coefficient {
        Coefficient {
            pieces: vec![Piece::new(
                f64::NEG_INFINITY,
                f64::INFINITY,
                vec![Term::Polynomial(coeffs)],
            )],
        }
    }

    /// Step function: `left` for x < x0, `right` for x > x0.
    pub fn step(x0: f64, left: f64, right: f64) -> Coefficient {
        Coefficient {
            pieces: vec![
                Piece::new(f64::NEG_INFINITY, x0, vec![Term::Constant(left)]),
                Piece::new(x0, f64::INFINITY, vec![Term::Constant(right)]),
            ],
        }
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn span(&self) -> (f64, f64) {
        (self.pieces[0].from, self.pieces[self.pieces.len() - 1].to)
    }

    /// Index of the piece whose half-open span `[from, to)` contains x
    /// (the last piece also claims its right edge).
    pub fn piece_index(&self, x: f64) -> usize {
        match self
            .pieces
            .binary_search_by(|p| p.from.partial_cmp(&x).unwrap())
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => (i - 1).min(self.pieces.len() - 1),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.pieces[self.piece_index(x)].eval(x)
    }

    pub fn eval_in_piece(&self, idx: usize, x: f64) -> f64 {
        self.pieces[idx].eval(x)
    }

    pub fn derivative_in_piece(&self, idx: usize, x: f64) -> Result<f64> {
        self.pieces[idx].derivative(x)
    }

    pub fn left_limit(&self, x: f64) -> f64 {
        let idx = self.piece_index(x);
        if idx > 0 && self.pieces[idx].from == x {
            self.pieces[idx - 1].eval(x)
        } else {
            self.pieces[idx].eval(x)
        }
    }

    pub fn right_limit(&self, x: f64) -> f64 {
        self.pieces[self.piece_index(x)].eval(x)
    }

    /// Interior piece boundaries that fall strictly inside (lo, hi).
    pub fn breakpoints_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        self.pieces
            .iter()
            .skip(1)
            .map(|p| p.from)
            .filter(|&x| x > lo && x < hi)
            .collect()
    }

    /// Breakpoints inside (lo, hi) at which the one-sided limits differ.
    pub fn jumps_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        self.breakpoints_in(lo, hi)
            .into_iter()
            .filter(|&x| {
                let l = self.left_limit(x);
                let r = self.right_limit(x);
                (l - r).abs() > 1e-13 * (1.0 + l.abs() + r.abs())
            })
            .collect()
    }

    /// Clips the representation to the hull `[lo, hi]`.
    pub fn restrict(&self, lo: f64, hi: f64) -> Coefficient {
        let mut pieces: Vec<Piece> = self
            .pieces
            .iter()
            .filter(|p| p.to > lo && p.from < hi)
            .map(|p| Piece::new(p.from.max(lo), p.to.min(hi), p.terms.clone()))
            .collect();
        if pieces.is_empty() {
            // Hull lies outside the representation; keep the nearest piece.
            let p = if hi <= self.pieces[0].from {
                &self.pieces[0]
            } else {
                self.pieces.last().unwrap()
            };
            pieces = vec![Piece::new(lo, hi, p.terms.clone())];
        }
        Coefficient { pieces }
    }
}

/// A four-coefficient Sturm-Liouville problem on an interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SlProblem {
    pub interval: Interval,
    pub p: Coefficient,
    pub q: Coefficient,
    pub r: Coefficient,
    pub s: Coefficient,
}

impl SlProblem {
    pub fn new(
        interval: Interval,
        p: Coefficient,
        q: Coefficient,
        r: Coefficient,
        s: Coefficient,
    ) -> SlProblem {
        SlProblem { interval, p, q, r, s }
    }

    /// p = r = 1, q = s = 0 on (a, b); the workhorse test family.
    pub fn constant_free(a: f64, b: f64) -> Result<SlProblem> {
        Ok(SlProblem::new(
            Interval::new(a, b)?,
            Coefficient::constant(1.0),
            Coefficient::constant(0.0),
            Coefficient::constant(1.0),
            Coefficient::constant(0.0),
        ))
    }

    pub fn coefficient(&self, name: char) -> &Coefficient {
        match name {
            'p' => &self.p,
            'q' => &self.q,
            'r' => &self.r,
            's' => &self.s,
            _ => panic!("unknown coefficient {name}"),
        }
    }

    /// Restriction of the problem to a subinterval (for truncation schedules
    /// and domain-monotonicity experiments).
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<SlProblem> {
        let iv = Interval::new(lo, hi)?;
        if lo < self.interval.a() || hi > self.interval.b() {
            return Err(Error::InvalidInput(format!(
                "({lo}, {hi}) is not a subinterval of {}",
                self.interval
            )));
        }
        Ok(SlProblem::new(
            iv,
            self.p.restrict(lo, hi),
            self.q.restrict(lo, hi),
            self.r.restrict(lo, hi),
            self.s.restrict(lo, hi),
        ))
    }
}

/// Evidence recorded while checking p, r > 0 on the validation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PositivityEvidence {
    pub points_checked: usize,
    pub min_p: f64,
    pub min_r: f64,
}

/// A problem that passed `validate_problem`, annotated with its merged
/// breakpoint and jump sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedProblem {
    problem: SlProblem,
    /// All interior piece boundaries of all four coefficients; mandatory
    /// integrator step boundaries.
    breakpoints: Vec<f64>,
    /// Subset of `breakpoints` where some coefficient actually jumps.
    jumps: Vec<f64>,
    pub positivity: PositivityEvidence,
}

impl ValidatedProblem {
    pub fn problem(&self) -> &SlProblem {
        &self.problem
    }

    pub fn interval(&self) -> Interval {
        self.problem.interval
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn jumps(&self) -> &[f64] {
        &self.jumps
    }

    pub fn restrict(&self, lo: f64, hi: f64) -> Result<ValidatedProblem> {
        validate_problem(&self.problem.restrict(lo, hi)?)
    }
}

/// Points used to probe coefficient values on (lo, hi). For infinite sides
/// the grid only reaches as far as the truncation horizon ever will.
fn validation_grid(interval: Interval) -> Vec<f64> {
    let mut pts = Vec::new();
    let horizon = 2.0 * QuadratureConfig::default().infinite_start
        * QuadratureConfig::default()
            .infinite_ratio
            .powi(QuadratureConfig::default().depth_count as i32);
    let lo = if interval.a().is_finite() { interval.a() } else { -horizon };
    let hi = if interval.b().is_finite() { interval.b() } else { horizon };
    let n = 257;
    for j in 1..n {
        pts.push(lo + (hi - lo) * j as f64 / n as f64);
    }
    pts
}

/// Validates Hypothesis-style structural requirements: a < b, coefficients
/// cover the interval, power pieces keep 1/p, q, r, s locally integrable,
/// and p, r stay strictly positive on the validation grid plus all piece
/// interiors. Returns the problem annotated with breakpoint and jump sets.
pub fn validate_problem(problem: &SlProblem) -> Result<ValidatedProblem> {
    let iv = problem.interval;
    let (a, b) = (iv.a(), iv.b());

    for name in ['p', 'q', 'r', 's'] {
        let c = problem.coefficient(name);
        let (lo, hi) = c.span();
        if lo > a || hi < b {
            return Err(Error::InvalidInput(format!(
                "coefficient {name} spans [{lo}, {hi}] and does not cover {}",
                iv
            )));
        }
        for piece in c.pieces() {
            let plo = piece.from.max(a);
            let phi = piece.to.min(b);
            if !(plo < phi) {
                continue;
            }
            for term in &piece.terms {
                if let Term::Power { center, exponent, .. } = term {
                    let interior = iv.contains(*center);
                    let touches = *center >= plo && *center <= phi;
                    if interior && touches && *exponent <= -1.0 {
                        return Err(Error::NonLocallyIntegrable {
                            name,
                            x: *center,
                            exponent: *exponent,
                        });
                    }
                    if *exponent < 0.0 && *center > plo && *center < phi {
                        // Pole strictly inside a smooth piece: evaluation
                        // would not be finite there.
                        return Err(Error::NonLocallyIntegrable {
                            name,
                            x: *center,
                            exponent: *exponent,
                        });
                    }
                    if exponent.fract() != 0.0 && plo < *center {
                        return Err(Error::InvalidInput(format!(
                            "power piece of {name} with fractional exponent {exponent} extends left of its center {center}"
                        )));
                    }
                }
            }
        }
    }

    // Positivity / finiteness probe: global grid plus per-piece interiors.
    let mut grid = validation_grid(iv);
    for name in ['p', 'q', 'r', 's'] {
        for piece in problem.coefficient(name).pieces() {
            let plo = piece.from.max(if a.is_finite() { a } else { grid[0] });
            let phi = piece.to.min(if b.is_finite() { b } else { *grid.last().unwrap() });
            if !(plo < phi) {
                continue;
            }
            for j in 1..32 {
                grid.push(plo + (phi - plo) * j as f64 / 32.0);
            }
        }
    }
    grid.sort_by(|x, y| x.partial_cmp(y).unwrap());
    grid.dedup();

    let mut min_p = f64::INFINITY;
    let mut min_r = f64::INFINITY;
    for &x in &grid {
        if !iv.contains(x) {
            continue;
        }
        for name in ['p', 'q', 'r', 's'] {
            let v = problem.coefficient(name).eval(x);
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "coefficient {name} is not finite at x = {x:.6e}"
                )));
            }
            match name {
                'p' => {
                    min_p = min_p.min(v);
                    if v <= 0.0 {
                        return Err(Error::NonPositiveCoefficient { name, x, value: v });
                    }
                }
                'r' => {
                    min_r = min_r.min(v);
                    if v <= 0.0 {
                        return Err(Error::NonPositiveCoefficient { name, x, value: v });
                    }
                }
                _ => {}
            }
        }
    }

    let mut breakpoints = Vec::new();
    let mut jumps = Vec::new();
    for name in ['p', 'q', 'r', 's'] {
        breakpoints.extend(problem.coefficient(name).breakpoints_in(a, b));
        jumps.extend(problem.coefficient(name).jumps_in(a, b));
    }
    breakpoints.sort_by(|x, y| x.partial_cmp(y).unwrap());
    breakpoints.dedup();
    jumps.sort_by(|x, y| x.partial_cmp(y).unwrap());
    jumps.dedup();

    Ok(ValidatedProblem {
        problem: problem.clone(),
        breakpoints,
        jumps,
        positivity: PositivityEvidence {
            points_checked: grid.len(),
            min_p,
            min_r,
        },
    })
}

/// Endpoint classification outcome. The limit-point verdict is only issued
/// with Theorem-4.5-style evidence; the criterion is sufficient, not
/// necessary, so `Undetermined` is a legitimate answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndpointVerdict {
    LimitCircle,
    LimitPoint,
    Undetermined,
}

impl std::fmt::Display for EndpointVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EndpointVerdict::LimitCircle => write!(f, "limit-circle"),
            EndpointVerdict::LimitPoint => write!(f, "limit-point"),
            EndpointVerdict::Undetermined => write!(f, "undetermined"),
        }
    }
}

/// Integrability evidence for one of |1/p|, |q|, r, |s| toward both
/// endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientEvidence {
    pub name: &'static str,
    pub toward_a: TruncationEvidence,
    pub toward_b: TruncationEvidence,
}

impl CoefficientEvidence {
    pub fn convergent(&self) -> bool {
        self.toward_a.verdict == IntegralVerdict::Convergent
            && self.toward_b.verdict == IntegralVerdict::Convergent
    }
}

/// Report from `classify_regularity`, optionally refined by
/// `limit_point_test` verdicts.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub regular: bool,
    pub endpoint_a_finite: bool,
    pub endpoint_b_finite: bool,
    pub evidence: Vec<CoefficientEvidence>,
    pub endpoint_a: EndpointVerdict,
    pub endpoint_b: EndpointVerdict,
}

fn integrand<'a>(
    problem: &'a SlProblem,
    which: usize,
) -> (&'static str, Box<dyn Fn(f64) -> f64 + 'a>) {
    match which {
        0 => ("1/p", Box::new(move |x| (1.0 / problem.p.eval(x)).abs())),
        1 => ("q", Box::new(move |x| problem.q.eval(x).abs())),
        2 => ("r", Box::new(move |x| problem.r.eval(x))),
        _ => ("s", Box::new(move |x| problem.s.eval(x).abs())),
    }
}

/// Classifies regularity: both endpoints finite and |1/p|, |q|, r, |s| all
/// integrable up to the endpoints, with improper integrals decided by
/// geometric truncation sequences. Regular sides are reported limit-circle;
/// everything else starts out undetermined.
pub fn classify_regularity(
    vp: &ValidatedProblem,
    quad: &QuadratureConfig,
) -> Result<ClassificationReport> {
    let problem = vp.problem();
    let iv = problem.interval;
    let anchor = iv.anchor();
    let bps = vp.breakpoints();

    let mut evidence = Vec::with_capacity(4);
    for which in 0..4 {
        let (name, f) = integrand(problem, which);
        let toward_a = truncated_integral_test(&f, anchor, iv.a(), bps, quad)?;
        let toward_b = truncated_integral_test(&f, anchor, iv.b(), bps, quad)?;
        evidence.push(CoefficientEvidence { name, toward_a, toward_b });
    }

    let a_side_ok = iv.a().is_finite()
        && evidence.iter().all(|e| e.toward_a.verdict == IntegralVerdict::Convergent);
    let b_side_ok = iv.b().is_finite()
        && evidence.iter().all(|e| e.toward_b.verdict == IntegralVerdict::Convergent);

    Ok(ClassificationReport {
        regular: a_side_ok && b_side_ok,
        endpoint_a_finite: iv.a().is_finite(),
        endpoint_b_finite: iv.b().is_finite(),
        evidence,
        endpoint_a: if a_side_ok {
            EndpointVerdict::LimitCircle
        } else {
            EndpointVerdict::Undetermined
        },
        endpoint_b: if b_side_ok {
            EndpointVerdict::LimitCircle
        } else {
            EndpointVerdict::Undetermined
        },
    })
}

/// True when the endpoint is finite and all four coefficient integrals
/// converge toward it (the expression is "regular at" that endpoint).
pub fn endpoint_regular(
    vp: &ValidatedProblem,
    endpoint: Endpoint,
    quad: &QuadratureConfig,
) -> Result<bool> {
    let iv = vp.interval();
    let e = iv.endpoint(endpoint);
    if !e.is_finite() {
        return Ok(false);
    }
    let anchor = iv.anchor();
    for which in 0..4 {
        let (_, f) = integrand(vp.problem(), which);
        let ev = truncated_integral_test(&f, anchor, e, vp.breakpoints(), quad)?;
        if ev.verdict != IntegralVerdict::Convergent {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Sufficient limit-point criterion at an endpoint: nonoscillation of
/// `tau - lambda` witnessed by one solution plus divergence of the
/// truncated integrals of |r/p|^(1/2). Regular endpoints come back
/// limit-circle; when the criterion is silent the verdict is undetermined.
pub fn limit_point_test(
    vp: &ValidatedProblem,
    endpoint: Endpoint,
    lambda_witness: f64,
    quad: &QuadratureConfig,
) -> Result<EndpointVerdict> {
    if endpoint_regular(vp, endpoint, quad)? {
        return Ok(EndpointVerdict::LimitCircle);
    }
    let iv = vp.interval();
    let anchor = iv.anchor();
    let e = iv.endpoint(endpoint);

    // Nonoscillation witness: one solution toward the endpoint must stop
    // producing zeros along the truncation sequence.
    let pts = crate::quad::truncation_points(anchor, e, quad);
    let target = *pts.last().unwrap();
    let spec = crate::quasi_ode::IvpSpec::new(anchor, 1.0, 0.0, lambda_witness, target);
    let traj = crate::quasi_ode::integrate_ivp(vp, &spec)
        .map_err(|err| Error::IntegrationFailure(format!("nonoscillation witness: {err}")))?;
    let mut windows_with_zeros = 0;
    let mut prev = anchor;
    for &t in &pts {
        let (lo, hi) = if t > prev { (prev, t) } else { (t, prev) };
        let n = crate::quasi_ode::count_zeros(&traj, (lo, hi), true)?;
        if n > 0 {
            windows_with_zeros += 1;
        } else {
            windows_with_zeros = 0;
        }
        prev = t;
    }
    if windows_with_zeros >= 3 {
        return Err(Error::OscillatoryWitness { lambda: lambda_witness });
    }

    let problem = vp.problem();
    let f = move |x: f64| (problem.r.eval(x) / problem.p.eval(x)).abs().sqrt();
    let ev = truncated_integral_test(&f, anchor, e, vp.breakpoints(), quad)?;
    Ok(if ev.verdict == IntegralVerdict::Divergent {
        EndpointVerdict::LimitPoint
    } else {
        EndpointVerdict::Undetermined
    })
}

/// Dirac component of the formal potential at a jump of `p*s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaComponent {
    pub location: f64,
    /// `-[p*s]` across the jump.
    pub weight: f64,
}

/// The formal potential `-(ps)' + p s^2 + q` at a point, plus the global
/// list of Dirac components sitting at jumps of `p*s`. Diagnostic only; the
/// solver always works through the quasi-derivative system.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectivePotential {
    pub value: f64,
    pub deltas: Vec<DeltaComponent>,
}

pub fn effective_potential(vp: &ValidatedProblem, x: f64) -> Result<EffectivePotential> {
    let problem = vp.problem();
    let iv = problem.interval;
    if !iv.contains(x) {
        return Err(Error::OutOfRange { x, lo: iv.a(), hi: iv.b() });
    }

    let mut deltas = Vec::new();
    for &c in vp.breakpoints() {
        let lp = problem.p.left_limit(c) * problem.s.left_limit(c);
        let rp = problem.p.right_limit(c) * problem.s.right_limit(c);
        if (lp - rp).abs() > 1e-13 * (1.0 + lp.abs() + rp.abs()) {
            deltas.push(DeltaComponent { location: c, weight: -(rp - lp) });
        }
    }

    if deltas.iter().any(|d| d.location == x) {
        return Err(Error::NotDifferentiable { x });
    }

    let pi = problem.p.piece_index(x);
    let si = problem.s.piece_index(x);
    let p = problem.p.eval_in_piece(pi, x);
    let s = problem.s.eval_in_piece(si, x);
    let dp = problem.p.derivative_in_piece(pi, x)?;
    let ds = problem.s.derivative_in_piece(si, x)?;
    let q = problem.q.eval(x);

    Ok(EffectivePotential {
        value: -(dp * s + p * ds) + p * s * s + q,
        deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn free_problem(a: f64, b: f64) -> ValidatedProblem {
        validate_problem(&SlProblem::constant_free(a, b).unwrap()).unwrap()
    }

    #[test]
    fn constant_problem_validates() {
        let vp = free_problem(0.0, PI);
        assert!(vp.breakpoints().is_empty());
        assert_eq!(vp.positivity.min_p, 1.0);
    }

    #[test]
    fn local_integrability_is_local() {
        // p = x on (0,1): 1/p fails at the endpoint but is locally integrable.
        let problem = SlProblem::new(
            Interval::new(0.0, 1.0).unwrap(),
            Coefficient::polynomial(vec![0.0, 1.0]),
            Coefficient::constant(1.0),
            Coefficient::constant(1.0),
            Coefficient::constant(0.0),
        );
        assert!(validate_problem(&problem).is_ok());
    }

    #[test]
    fn sign_change_is_rejected() {
        let problem = SlProblem::new(
            Interval::new(0.0, 1.0).unwrap(),
            Coefficient::polynomial(vec![-0.5, 1.0]),
            Coefficient::constant(0.0),
            Coefficient::constant(1.0),
            Coefficient::constant(0.0),
        );
        match validate_problem(&problem) {
            Err(Error::NonPositiveCoefficient { name: 'p', .. }) => {}
            other => panic!("expected NonPositiveCoefficient, got {other:?}"),
        }
    }

    #[test]
    fn interior_pole_is_rejected() {
        let problem = SlProblem::new(
            Interval::new(0.0, 1.0).unwrap(),
            Coefficient::constant(1.0),
            Coefficient {
                pieces: vec![Piece::new(
                    f64::NEG_INFINITY,
                    f64::INFINITY,
                    vec![Term::Power { scale: 1.0, center: 0.5, exponent: -1.0 }],
                )],
            },
            Coefficient::constant(1.0),
            Coefficient::constant(0.0),
        );
        match validate_problem(&problem) {
            Err(Error::NonLocallyIntegrable { name: 'q', .. }) => {}
            other => panic!("expected NonLocallyIntegrable, got {other:?}"),
        }
    }

    #[test]
    fn empty_interval_rejected() {
        match Interval::new(1.0, 1.0) {
            Err(Error::EmptyInterval { .. }) => {}
            other => panic!("expected EmptyInterval, got {other:?}"),
        }
    }

    #[test]
    fn validation_is_idempotent() {
        let problem = SlProblem::constant_free(0.0, PI).unwrap();
        let v1 = validate_problem(&problem).unwrap();
        let v2 = validate_problem(v1.problem()).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn classify_regular_constant() {
        let vp = free_problem(0.0, PI);
        let report = classify_regularity(&vp, &QuadratureConfig::default()).unwrap();
        assert!(report.regular);
        assert_eq!(report.endpoint_a, EndpointVerdict::LimitCircle);
        assert_eq!(report.endpoint_b, EndpointVerdict::LimitCircle);
    }

    #[test]
    fn classify_infinite_endpoint_not_regular() {
        let vp = free_problem(0.0, f64::INFINITY);
        let report = classify_regularity(&vp, &QuadratureConfig::default()).unwrap();
        assert!(!report.regular);
        assert!(!report.endpoint_b_finite);
    }

    #[test]
    fn classify_divergent_one_over_p() {
        // p = x on (0,1): integral of 1/x from 0 diverges; cross-checked
        // against the logarithmic closed form in quad::tests.
        let problem = SlProblem::new(
            Interval::new(0.0, 1.0).unwrap(),
            Coefficient::polynomial(vec![0.0, 1.0]),
            Coefficient::constant(1.0),
            Coefficient::constant(1.0),
            Coefficient::constant(0.0),
        );
        let vp = validate_problem(&problem).unwrap();
        let report = classify_regularity(&vp, &QuadratureConfig::default()).unwrap();
        assert!(!report.regular);
        let inv_p = &report.evidence[0];
        assert_eq!(inv_p.name, "1/p");
        assert_eq!(inv_p.toward_a.verdict, IntegralVerdict::Divergent);
        assert_eq!(inv_p.toward_b.verdict, IntegralVerdict::Convergent);
    }

    #[test]
    fn effective_potential_reduces_to_q() {
        // s = 0: potential equals q pointwise, no delta components.
        let problem = SlProblem::new(
            Interval::new(0.0, PI).unwrap(),
            Coefficient::constant(1.0),
            Coefficient::polynomial(vec![2.0, -1.0]),
            Coefficient::constant(1.0),
            Coefficient::constant(0.0),
        );
        let vp = validate_problem(&problem).unwrap();
        for &x in &[0.3, 1.0, 2.5] {
            let ep = effective_potential(&vp, x).unwrap();
            assert_eq!(ep.value, 2.0 - x);
            assert!(ep.deltas.is_empty());
        }
    }

    #[test]
    fn effective_potential_step_s_gives_delta() {
        // p = 1, s = alpha H(x - x0), q = -alpha^2 H(x - x0): potential is 0
        // off x0 with a single delta of weight -alpha at x0.
        let alpha = 1.5;
        let x0 = 0.5;
        let problem = SlProblem::new(
            Interval::new(0.0, 1.0).unwrap(),
            Coefficient::constant(1.0),
            Coefficient::step(x0, 0.0, -alpha * alpha),
            Coefficient::constant(1.0),
            Coefficient::step(x0, 0.0, alpha),
        );
        let vp = validate_problem(&problem).unwrap();
        let ep = effective_potential(&vp, 0.25).unwrap();
        assert!(ep.value.abs() < 1e-14);
        assert_eq!(ep.deltas.len(), 1);
        assert_eq!(ep.deltas[0].location, x0);
        assert!((ep.deltas[0].weight + alpha).abs() < 1e-14);
        let ep2 = effective_potential(&vp, 0.75).unwrap();
        assert!(ep2.value.abs() < 1e-14);
        assert!(effective_potential(&vp, x0).is_err());
    }

    #[test]
    fn effective_potential_constant_s_cancels() {
        // p = 1, s = c, q = -c^2: (ps)' = 0 and p s^2 + q = 0.
        let c = 0.7;
        let problem = SlProblem::new(
            Interval::new(0.0, 1.0).unwrap(),
            Coefficient::constant(1.0),
            Coefficient::constant(-c * c),
            Coefficient::constant(1.0),
            Coefficient::constant(c),
        );
        let vp = validate_problem(&problem).unwrap();
        let ep = effective_potential(&vp, 0.4).unwrap();
        assert_eq!(ep.value, 0.0);
        assert!(ep.deltas.is_empty());
    }

    #[test]
    fn restrict_clips_pieces() {
        let c = Coefficient::step(0.5, 1.0, 2.0);
        let r = c.restrict(0.6, 1.0);
        assert_eq!(r.pieces().len(), 1);
        assert_eq!(r.eval(0.8), 2.0);
    }
}
