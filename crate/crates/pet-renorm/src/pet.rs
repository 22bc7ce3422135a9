//! The rectangle exchange maps.
//!
//! `Ψ̃_{α,β}` acts on `Ỹ×N` with `Ỹ = ℝ²/ℤ²`:
//! `((x,y),(a,b)) ↦ ((x+bsα, y+asβ), (bs,as))`, where `s = +1` exactly when `x`
//! and `y` lie in the same half of the unit interval. `Ψ_{α,β}` is the same rule
//! on the quotient `Y = ℝ²/Λ`, `Λ = ℤ² + ℤ(½,½)`, with fundamental domain
//! `[0,½)×[0,1)`.
//!
//! Pieces are half-open exactly as written (`[0,½)`, `[α,1−α)`); boundary points
//! are classified by that rule and never perturbed.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{reduce_mod_g, Scalar};
use crate::params::f_step;

/// An inward unit normal: one of `(1,0), (−1,0), (0,1), (0,−1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "(i8, i8)", try_from = "(i8, i8)")]
pub enum Direction {
    East,
    West,
    North,
    South,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::East, Direction::West, Direction::North, Direction::South];

    pub fn components(self) -> (i8, i8) {
        match self {
            Direction::East => (1, 0),
            Direction::West => (-1, 0),
            Direction::North => (0, 1),
            Direction::South => (0, -1),
        }
    }

    pub fn from_components(a: i8, b: i8) -> Option<Direction> {
        match (a, b) {
            (1, 0) => Some(Direction::East),
            (-1, 0) => Some(Direction::West),
            (0, 1) => Some(Direction::North),
            (0, -1) => Some(Direction::South),
            _ => None,
        }
    }

    pub fn is_horizontal(self) -> bool {
        matches!(self, Direction::East | Direction::West)
    }

    /// `(a,b) ↦ s·(b,a)`.
    pub fn turn(self, s: i8) -> Direction {
        let (a, b) = self.components();
        Direction::from_components(s * b, s * a).expect("turn stays in N")
    }

    pub fn reversed(self) -> Direction {
        let (a, b) = self.components();
        Direction::from_components(-a, -b).expect("negation stays in N")
    }
}

impl From<Direction> for (i8, i8) {
    fn from(d: Direction) -> (i8, i8) {
        d.components()
    }
}

impl TryFrom<(i8, i8)> for Direction {
    type Error = Error;
    fn try_from((a, b): (i8, i8)) -> Result<Direction> {
        Direction::from_components(a, b).ok_or_else(|| Error::Parse(format!("({a},{b}) is not a unit direction")))
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = self.components();
        write!(f, "({a},{b})")
    }
}

/// A point of `Ỹ×N`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct LiftState {
    pub x: Scalar,
    pub y: Scalar,
    pub v: Direction,
}

impl LiftState {
    pub fn new(x: Scalar, y: Scalar, v: Direction) -> Result<LiftState> {
        for (t, name) in [(&x, "x"), (&y, "y")] {
            if t.is_negative() || *t >= Scalar::one() {
                return Err(Error::Domain(format!("{name} = {t} outside [0,1)")));
            }
        }
        Ok(LiftState { x, y, v })
    }
}

fn lower_half(t: &Scalar) -> bool {
    *t < Scalar::half()
}

/// `+1` iff `x` and `y` lie in the same half of `[0,1)`.
pub fn sector(x: &Scalar, y: &Scalar) -> i8 {
    if lower_half(x) == lower_half(y) {
        1
    } else {
        -1
    }
}

fn check_params(alpha: &Scalar, beta: &Scalar) -> Result<()> {
    for (t, name) in [(alpha, "alpha"), (beta, "beta")] {
        if t.is_negative() || *t > Scalar::half() {
            return Err(Error::Domain(format!("{name} = {t} outside [0,1/2]")));
        }
    }
    Ok(())
}

fn translate(t: &Scalar, sign: i8, by: &Scalar) -> Scalar {
    match sign {
        0 => t.clone(),
        1 => (t + by).wrap_unit(),
        _ => (t - by).wrap_unit(),
    }
}

/// One step of `Ψ̃_{α,β}`. Parameters are trusted to lie in `[0,½]`.
pub fn psi_lift_step(st: &LiftState, alpha: &Scalar, beta: &Scalar) -> LiftState {
    let s = sector(&st.x, &st.y);
    let (a, b) = st.v.components();
    LiftState { x: translate(&st.x, b * s, alpha), y: translate(&st.y, a * s, beta), v: st.v.turn(s) }
}

/// `Ψ̃_{α,β}^{-1}`. The translation `(a′α, b′β)` is read off the new
/// direction, the sector is evaluated at the old point.
pub fn psi_lift_inverse(st: &LiftState, alpha: &Scalar, beta: &Scalar) -> LiftState {
    let (a1, b1) = st.v.components();
    let x = translate(&st.x, -a1, alpha);
    let y = translate(&st.y, -b1, beta);
    let s = sector(&x, &y);
    let v = Direction::from_components(s * b1, s * a1).expect("direction");
    LiftState { x, y, v }
}

/// Checked variant of [`psi_lift_step`].
pub fn try_psi_lift_step(st: &LiftState, alpha: &Scalar, beta: &Scalar) -> Result<LiftState> {
    check_params(alpha, beta)?;
    Ok(psi_lift_step(st, alpha, beta))
}

/// Reduce a point of `[0,1)²` into the fundamental domain `[0,½)×[0,1)` of `Λ`.
pub fn project_to_quotient(x: &Scalar, y: &Scalar) -> (Scalar, Scalar) {
    if lower_half(x) {
        (x.clone(), y.clone())
    } else {
        (x - &Scalar::half(), (y - &Scalar::half()).wrap_unit())
    }
}

/// One step of `Ψ_{α,β}` on `Y×N`, using `A₁ = [0,½)×[0,½)` and
/// `A₋₁ = [0,½)×[½,1)` directly.
pub fn psi_quotient_step(st: &LiftState, alpha: &Scalar, beta: &Scalar) -> Result<LiftState> {
    if st.x.is_negative() || st.x >= Scalar::half() || st.y.is_negative() || st.y >= Scalar::one() {
        return Err(Error::Domain(format!("({}, {}) outside [0,1/2)x[0,1)", st.x, st.y)));
    }
    check_params(alpha, beta)?;
    let s: i8 = if lower_half(&st.y) { 1 } else { -1 };
    let (a, b) = st.v.components();
    let x = translate(&st.x, b * s, alpha);
    let y = translate(&st.y, a * s, beta);
    let (x, y) = project_to_quotient(&x, &y);
    Ok(LiftState { x, y, v: st.v.turn(s) })
}

/// `Z = [α,1−α)×[β,1−β)`.
pub fn in_z(x: &Scalar, y: &Scalar, alpha: &Scalar, beta: &Scalar) -> bool {
    let one = Scalar::one();
    *x >= *alpha && *x < &one - alpha && *y >= *beta && *y < &one - beta
}

/// First return of `Ψ̃_{α,β}` to `Z×N`.
pub fn first_return_to_z(st: &LiftState, alpha: &Scalar, beta: &Scalar, step_cap: u64) -> Result<(LiftState, u64)> {
    check_open_params(alpha, beta)?;
    if !in_z(&st.x, &st.y, alpha, beta) {
        return Err(Error::OutsideDomain(format!("({}, {}) is not in Z", st.x, st.y)));
    }
    let mut cur = st.clone();
    for t in 1..=step_cap {
        cur = psi_lift_step(&cur, alpha, beta);
        if in_z(&cur.x, &cur.y, alpha, beta) {
            return Ok((cur, t));
        }
    }
    Err(Error::CapExceeded { what: "return to Z".into(), cap: step_cap })
}

fn check_open_params(alpha: &Scalar, beta: &Scalar) -> Result<()> {
    for (t, name) in [(alpha, "alpha"), (beta, "beta")] {
        if !t.is_positive() || *t >= Scalar::half() {
            return Err(Error::Domain(format!("{name} = {t} outside (0,1/2)")));
        }
    }
    Ok(())
}

/// The dilation `ψ_t : [t,1−t) → ℝ/ℤ`, oriented by `o(t/(1−2t))`.
pub fn psi_dilation(t: &Scalar, x: &Scalar) -> Scalar {
    let w = Scalar::one() - t.mul_int(2);
    let o = reduce_mod_g(&(t / &w)).orientation;
    let h = Scalar::half();
    let v = if o == 1 { &(&(x - &h) / &w) + &h } else { &(&h - x) / &w };
    v.frac()
}

/// `φ(x,y,v) = (ψ_α(x), ψ_β(y), v)` on `Z×N`.
pub fn conjugacy_phi(st: &LiftState, alpha: &Scalar, beta: &Scalar) -> Result<LiftState> {
    check_open_params(alpha, beta)?;
    if !in_z(&st.x, &st.y, alpha, beta) {
        return Err(Error::OutsideDomain(format!("({}, {}) is not in Z", st.x, st.y)));
    }
    Ok(LiftState { x: psi_dilation(alpha, &st.x), y: psi_dilation(beta, &st.y), v: st.v })
}

/// One failure of `φ∘Ψ̂ = Ψ̃_{f(α),f(β)}∘φ`.
#[derive(Clone, Debug, Serialize)]
pub struct Mismatch {
    pub state: LiftState,
    pub lhs: LiftState,
    pub rhs: LiftState,
}

#[derive(Clone, Debug, Serialize)]
pub struct RenormReport {
    pub alpha: Scalar,
    pub beta: Scalar,
    pub f_alpha: Scalar,
    pub f_beta: Scalar,
    pub samples: usize,
    pub seed: u64,
    /// Draws discarded because the orbit touched a piece boundary.
    pub redrawn: usize,
    pub max_return_time: u64,
    pub mismatches: Vec<Mismatch>,
}

impl RenormReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

const SAMPLE_DENOMINATOR: i64 = 2_147_483_647;

/// Uniform rational in `[lo, hi)` with a fixed prime denominator, so sampled
/// points avoid dyadic boundaries such as `½`.
pub fn sample_between(rng: &mut impl Rng, lo: &Scalar, hi: &Scalar) -> Scalar {
    let k = rng.random_range(0..SAMPLE_DENOMINATOR);
    lo + &(&(hi - lo) * &Scalar::ratio(k, SAMPLE_DENOMINATOR))
}

fn sample_direction(rng: &mut impl Rng) -> Direction {
    Direction::ALL[rng.random_range(0..4usize)]
}

fn on_boundary(st: &LiftState, alpha: &Scalar, beta: &Scalar) -> bool {
    let one = Scalar::one();
    let h = Scalar::half();
    let bad_x = st.x.is_zero() || st.x == h || st.x == *alpha || st.x == &one - alpha;
    let bad_y = st.y.is_zero() || st.y == h || st.y == *beta || st.y == &one - beta;
    bad_x || bad_y
}

/// Check `φ∘Ψ̂ = Ψ̃_{f(α),f(β)}∘φ` exactly on random states of `Z×N`.
pub fn verify_renormalization(alpha: &Scalar, beta: &Scalar, samples: usize, seed: u64) -> Result<RenormReport> {
    check_open_params(alpha, beta)?;
    let (fa, _) = f_step(alpha)?;
    let (fb, _) = f_step(beta)?;
    let one = Scalar::one();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = RenormReport {
        alpha: alpha.clone(),
        beta: beta.clone(),
        f_alpha: fa.clone(),
        f_beta: fb.clone(),
        samples,
        seed,
        redrawn: 0,
        max_return_time: 0,
        mismatches: Vec::new(),
    };
    let cap = return_cap(alpha, beta);
    let mut done = 0;
    while done < samples {
        let x = sample_between(&mut rng, alpha, &(&one - alpha));
        let y = sample_between(&mut rng, beta, &(&one - beta));
        let z = LiftState { x, y, v: sample_direction(&mut rng) };
        let (ret, t) = first_return_to_z(&z, alpha, beta, cap)?;
        let mut touched = on_boundary(&z, alpha, beta);
        let mut cur = z.clone();
        for _ in 0..t {
            cur = psi_lift_step(&cur, alpha, beta);
            touched |= on_boundary(&cur, alpha, beta);
        }
        if touched {
            report.redrawn += 1;
            continue;
        }
        report.max_return_time = report.max_return_time.max(t);
        let lhs = conjugacy_phi(&ret, alpha, beta)?;
        let rhs = psi_lift_step(&conjugacy_phi(&z, alpha, beta)?, &fa, &fb);
        if lhs != rhs {
            report.mismatches.push(Mismatch { state: z, lhs, rhs });
        }
        done += 1;
    }
    Ok(report)
}

/// Generous cap on return times to `Z`: `2⌊1/(1−2t)⌋+3` per coordinate.
fn return_cap(alpha: &Scalar, beta: &Scalar) -> u64 {
    let one = Scalar::one();
    let bound = |t: &Scalar| {
        let q = (&one / &(&one - &t.mul_int(2))).floor();
        crate::numerics::to_i64(&q).unwrap_or(i64::MAX / 4) as u64
    };
    2 * (bound(alpha) + bound(beta)) + 8
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeriodStatus {
    Periodic,
    OpenWithinBound,
    BoundaryHit,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PeriodReport {
    pub status: PeriodStatus,
    pub period: Option<u64>,
    pub steps_used: u64,
}

fn touches_discontinuity(st: &LiftState) -> bool {
    let h = Scalar::half();
    st.x.is_zero() || st.x == h || st.y.is_zero() || st.y == h
}

/// Minimal period of the exact `Ψ̃` orbit, if it closes within `max_steps`.
/// An orbit that does not close and has visited a discontinuity line is
/// reported as `boundary-hit`.
pub fn detect_period(st: &LiftState, alpha: &Scalar, beta: &Scalar, max_steps: u64) -> Result<PeriodReport> {
    check_params(alpha, beta)?;
    let mut cur = st.clone();
    let mut touched = touches_discontinuity(st);
    for t in 1..=max_steps {
        cur = psi_lift_step(&cur, alpha, beta);
        if cur == *st {
            return Ok(PeriodReport { status: PeriodStatus::Periodic, period: Some(t), steps_used: t });
        }
        touched |= touches_discontinuity(&cur);
    }
    let status = if touched { PeriodStatus::BoundaryHit } else { PeriodStatus::OpenWithinBound };
    Ok(PeriodReport { status, period: None, steps_used: max_steps })
}

#[derive(Clone, Debug, Serialize)]
pub struct McReport {
    pub alpha: Scalar,
    pub beta: Scalar,
    pub samples: usize,
    pub max_period: u64,
    pub seed: u64,
    pub periodic: usize,
    pub period4: usize,
    pub fraction_periodic: f64,
    pub fraction_period4: f64,
    pub stderr_periodic: f64,
    pub stderr_period4: f64,
}

/// Samples per independent ChaCha stream; fixed so results do not depend on
/// the worker count.
pub const MC_CHUNK: usize = 1024;

/// Monte Carlo estimate of the Lebesgue measure of periodic points of `Ψ̃`
/// (minimal period ≤ `max_period`) and of the period-4 points.
pub fn periodic_measure_mc(alpha: &Scalar, beta: &Scalar, samples: usize, max_period: u64, seed: u64) -> Result<McReport> {
    check_params(alpha, beta)?;
    if samples == 0 {
        return Err(Error::Domain("at least one sample is required".into()));
    }
    let chunks = samples.div_ceil(MC_CHUNK);
    let counts: Vec<(usize, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = MC_CHUNK.min(samples - c * MC_CHUNK);
            let (zero, one) = (Scalar::zero(), Scalar::one());
            let mut per = 0;
            let mut p4 = 0;
            for _ in 0..n {
                let st = LiftState {
                    x: sample_between(&mut rng, &zero, &one),
                    y: sample_between(&mut rng, &zero, &one),
                    v: sample_direction(&mut rng),
                };
                let rep = detect_period(&st, alpha, beta, max_period).expect("parameters checked");
                if let Some(p) = rep.period {
                    per += 1;
                    if p == 4 {
                        p4 += 1;
                    }
                }
            }
            (per, p4)
        })
        .collect();
    let (periodic, period4) = counts.iter().fold((0, 0), |(a, b), (c, d)| (a + c, b + d));
    let n = samples as f64;
    let fp = periodic as f64 / n;
    let f4 = period4 as f64 / n;
    Ok(McReport {
        alpha: alpha.clone(),
        beta: beta.clone(),
        samples,
        max_period,
        seed,
        periodic,
        period4,
        fraction_periodic: fp,
        fraction_period4: f4,
        stderr_periodic: (fp * (1.0 - fp) / n).sqrt(),
        stderr_period4: (f4 * (1.0 - f4) / n).sqrt(),
    })
}

/// Orbit dump: `step,x,y,vx,vy` with exact scalars.
pub fn orbit_csv(st: &LiftState, alpha: &Scalar, beta: &Scalar, steps: u64) -> Result<String> {
    check_params(alpha, beta)?;
    let mut out = String::from("step,x,y,vx,vy\n");
    let mut cur = st.clone();
    for k in 0..=steps {
        let (a, b) = cur.v.components();
        out.push_str(&format!("{k},{},{},{a},{b}\n", cur.x, cur.y));
        if k < steps {
            cur = psi_lift_step(&cur, alpha, beta);
        }
    }
    Ok(out)
}
