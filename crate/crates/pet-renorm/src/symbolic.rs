//! Symbolic side: the skew system `Φ` on pairs of `±1` sequences, collapsing
//! `c`, return times to the kept set, and the six step classes whose counts
//! along a first return form the rows of `K(k)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{floor_quotient, to_i64, Scalar};
use crate::params::f_step;
use crate::pet::Direction;
use crate::tiling::{curve_follow, is_kept, SeqWindow, Tiling};

/// Longest alternating run searched before a sequence is declared not
/// unboundedly collapsible.
pub const GAP_CAP: u64 = 1 << 20;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolicState {
    pub omega: SeqWindow,
    pub eta: SeqWindow,
    pub v: Direction,
}

impl SymbolicState {
    pub fn new(omega: SeqWindow, eta: SeqWindow, v: Direction) -> SymbolicState {
        SymbolicState { omega, eta, v }
    }

    pub fn tiling(&self) -> Tiling {
        Tiling::new(self.omega.clone(), self.eta.clone())
    }

    /// `S(i,j,w) = (σ^i ω, σ^j η, w)`.
    pub fn shifted(&self, i: i64, j: i64, w: Direction) -> SymbolicState {
        SymbolicState::new(self.omega.shift(i), self.eta.shift(j), w)
    }

    /// Entry-wise comparison on `[lo,hi]` in both coordinates.
    pub fn agrees_on(&self, o: &SymbolicState, lo: i64, hi: i64) -> Result<bool> {
        Ok(self.v == o.v
            && self.omega.values(lo, hi)? == o.omega.values(lo, hi)?
            && self.eta.values(lo, hi)? == o.eta.values(lo, hi)?)
    }
}

/// `ς_α(x)_n = +1` iff `x + nα mod 1 ∈ [0,½)`.
pub fn code_rotation(alpha: &Scalar, x: &Scalar) -> SeqWindow {
    SeqWindow::rotation(alpha.clone(), x.clone())
}

/// `Φ(ω,η,(a,b)) = (σ^{sb}ω, σ^{sa}η, s(b,a))` with `s = ω₀η₀`.
pub fn phi_step(st: &SymbolicState) -> Result<SymbolicState> {
    let s = st.omega.get(0)? * st.eta.get(0)?;
    let (a, b) = st.v.components();
    Ok(st.shifted((s * b) as i64, (s * a) as i64, st.v.turn(s)))
}

/// `Φ^k` through the tiling: `Φ^k(ω,η,v) = S∘C^k((0,0),v)`.
pub fn phi_iterate(st: &SymbolicState, k: u64) -> Result<SymbolicState> {
    let t = st.tiling();
    let mut cur = ((0, 0), st.v);
    for _ in 0..k {
        cur = curve_follow(&t, cur.0, cur.1)?;
    }
    Ok(st.shifted(cur.0 .0, cur.0 .1, cur.1))
}

/// `R₁ = Ω₀ × Ω₀ × N`.
pub fn in_r1(st: &SymbolicState) -> Result<bool> {
    Ok(is_kept(&st.omega, 0)? && is_kept(&st.eta, 0)?)
}

fn unbounded(e: Error) -> Error {
    match e {
        Error::Window { index, lo, hi } => {
            Error::NotUnboundedCollapsible(format!("kept indices run past the window [{lo},{hi}] at {index}"))
        }
        other => other,
    }
}

/// First kept index strictly beyond `from` in direction `dir = ±1`.
fn next_kept(s: &SeqWindow, from: i64, dir: i64) -> Result<i64> {
    let mut k = from;
    for _ in 0..GAP_CAP {
        k += dir;
        if is_kept(s, k).map_err(unbounded)? {
            return Ok(k);
        }
    }
    Err(Error::NotUnboundedCollapsible(format!("no kept index within {GAP_CAP} of {from}")))
}

/// `(r₊, r₋)`: distances from `0 ∈ K(ω)` to the neighbouring kept indices.
pub fn return_times(s: &SeqWindow) -> Result<(u64, u64)> {
    if !is_kept(s, 0)? {
        return Err(Error::NotZeroCollapsible);
    }
    Ok((next_kept(s, 0, 1)? as u64, (-next_kept(s, 0, -1)?) as u64))
}

/// Kept indices `k_lo..=k_hi` (with `k₀ = 0`, `lo ≤ 0 ≤ hi`) of a
/// zero-collapsible sequence.
pub fn kept_indices(s: &SeqWindow, lo: i64, hi: i64) -> Result<Vec<i64>> {
    if lo > 0 || hi < 0 {
        return Err(Error::Domain(format!("collapse window [{lo},{hi}] must contain 0")));
    }
    if !is_kept(s, 0)? {
        return Err(Error::NotZeroCollapsible);
    }
    let mut out = Vec::with_capacity((hi - lo + 1) as usize);
    let mut k = 0;
    for _ in lo..0 {
        k = next_kept(s, k, -1)?;
        out.push(k);
    }
    out.reverse();
    out.push(0);
    k = 0;
    for _ in 0..hi {
        k = next_kept(s, k, 1)?;
        out.push(k);
    }
    Ok(out)
}

/// `[c(ω)]_i = ω_{k_i}` for `i ∈ [lo,hi]`, `lo ≤ 0 ≤ hi`, as an explicit window.
pub fn collapse(s: &SeqWindow, lo: i64, hi: i64) -> Result<SeqWindow> {
    let ks = kept_indices(s, lo, hi)?;
    let vals = ks.iter().map(|&k| s.get(k)).collect::<Result<Vec<_>>>()?;
    SeqWindow::explicit(lo, vals)
}

/// Renormalized shift `σ̂(ω) = σ^{r₊(ω)}(ω)`.
pub fn sigma_hat(s: &SeqWindow) -> Result<SeqWindow> {
    Ok(s.shift(return_times(s)?.0 as i64))
}

/// `(r₊, r₋)` of `ς_α(x)` for `x ∈ [α, 1−α)`, from the lengths of the
/// alternating runs next to `0`.
///
/// `r₋ = 2⌈(1−x)/(1−2α)⌉ − 1` equals `2⌊(1−x)/(1−2α)⌋ + 1` except where the
/// quotient is an integer; the ceiling form is the one that is exact there
/// under the `[0, ½)` coding.
pub fn rrt_closed_form(alpha: &Scalar, x: &Scalar) -> Result<(u64, u64)> {
    let one = Scalar::one();
    if x < alpha || x >= &(&one - alpha) {
        return Err(Error::OutsideDomain(format!("x = {x} is outside [α, 1−α)")));
    }
    let w = &one - &alpha.mul_int(2);
    let plus = floor_quotient(x, &w)?;
    let minus_ceil = -floor_quotient(&(x - &one), &w)?;
    Ok(((2 * to_i64(&plus)? + 1) as u64, (2 * to_i64(&minus_ceil)? - 1) as u64))
}

/// `(r₊, r₋)` of a rotation-coded `ω` predicted from the branch `(n,r)` of
/// `α` and the collapsed sequence `c(ω)` near 0.
pub fn rot_ret_prediction(alpha: &Scalar, collapsed: &SeqWindow) -> Result<(u64, u64)> {
    let (_, b) = f_step(alpha)?;
    let n = b.n as u64;
    let (cm, c0, c1) = (collapsed.get(-1)?, collapsed.get(0)?, collapsed.get(1)?);
    Ok(if b.r == 1 {
        (
            if c0 == -1 && c1 == 1 { 2 * n + 3 } else { 2 * n + 1 },
            if cm == -1 && c0 == 1 { 2 * n + 3 } else { 2 * n + 1 },
        )
    } else {
        (
            if c0 == 1 && c1 == -1 { 2 * n - 1 } else { 2 * n + 1 },
            if cm == 1 && c0 == -1 { 2 * n - 1 } else { 2 * n + 1 },
        )
    })
}

/// `ρ(ω,η,v) = (c(ω), c(η), v)` on `[−radius, radius]`.
pub fn rho(st: &SymbolicState, radius: i64) -> Result<SymbolicState> {
    Ok(SymbolicState::new(collapse(&st.omega, -radius, radius)?, collapse(&st.eta, -radius, radius)?, st.v))
}

/// Return time to `R₁` predicted from the outgoing direction `w = s(b,a)`.
pub fn predicted_r1_return(st: &SymbolicState) -> Result<u64> {
    let s = st.omega.get(0)? * st.eta.get(0)?;
    let (po, mo) = return_times(&st.omega)?;
    let (pe, me) = return_times(&st.eta)?;
    let r = match st.v.turn(s) {
        Direction::East => po,
        Direction::West => mo,
        Direction::North => pe,
        Direction::South => me,
    };
    Ok(2 * r - 1)
}

/// First return of `Φ` to `R₁`, checked against [`predicted_r1_return`].
pub fn first_return_r1(st: &SymbolicState, cap: u64) -> Result<(SymbolicState, u64)> {
    if !in_r1(st)? {
        return Err(Error::OutsideDomain("state is not in R1".into()));
    }
    let predicted = predicted_r1_return(st)?;
    let t = st.tiling();
    let mut cur = ((0, 0), st.v);
    for k in 1..=cap {
        cur = curve_follow(&t, cur.0, cur.1)?;
        if t.is_kept_site(cur.0 .0, cur.0 .1)? {
            if k != predicted {
                return Err(Error::Invariant(format!("R1 return after {k} steps, predicted {predicted}")));
            }
            return Ok((st.shifted(cur.0 .0, cur.0 .1, cur.1), k));
        }
    }
    Err(Error::CapExceeded { what: "first return to R1".into(), cap })
}

/// Step class `1..=6` of a state: the pair of symbols the outgoing step
/// crosses, `−+`, `+−` or equal, horizontal (1–3) or vertical (4–6).
pub fn step_class(st: &SymbolicState) -> Result<u8> {
    let s = st.omega.get(0)? * st.eta.get(0)?;
    let w = st.v.turn(s);
    let (seq, lo) = match w {
        Direction::East => (&st.omega, 0),
        Direction::West => (&st.omega, -1),
        Direction::North => (&st.eta, 0),
        Direction::South => (&st.eta, -1),
    };
    let (p, q) = (seq.get(lo)?, seq.get(lo + 1)?);
    let base = if w.is_horizontal() { 0 } else { 3 };
    Ok(base
        + match (p, q) {
            (-1, 1) => 1,
            (1, -1) => 2,
            _ => 3,
        })
}

/// Class counts over `x, Φx, …, Φ^{R₁−1}x` for `x ∈ R₁`, and the class of `ρ(x)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Census {
    pub return_time: u64,
    pub rho_class: u8,
    pub counts: [u64; 6],
}

pub fn step_class_census(st: &SymbolicState, cap: u64) -> Result<Census> {
    let (_, r) = first_return_r1(st, cap)?;
    let mut counts = [0u64; 6];
    let t = st.tiling();
    let mut cur = ((0, 0), st.v);
    for _ in 0..r {
        let x = st.shifted(cur.0 .0, cur.0 .1, cur.1);
        counts[(step_class(&x)? - 1) as usize] += 1;
        cur = curve_follow(&t, cur.0, cur.1)?;
    }
    let rho_class = step_class(&rho(st, 2)?)?;
    Ok(Census { return_time: r, rho_class, counts })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    StablePeriodic,
    PeriodicNotStable,
    OpenWithinBound,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StabilityReport {
    pub status: Stability,
    pub period: Option<u64>,
}

/// Stable periodicity is closure of the curve through the origin. A
/// non-closed curve can still give a `Φ`-periodic state when the sequences
/// are shift-periodic; that is only certified for backends with a known
/// shift period.
pub fn stable_classification(st: &SymbolicState, cap: u64) -> Result<StabilityReport> {
    let t = st.tiling();
    let start = ((0, 0), st.v);
    let mut cur = start;
    let mut phi_period = None;
    for k in 1..=cap {
        cur = curve_follow(&t, cur.0, cur.1)?;
        if cur == start {
            return Ok(StabilityReport { status: Stability::StablePeriodic, period: Some(k) });
        }
        if phi_period.is_none() && cur.1 == st.v && st.omega.shift_invariant(cur.0 .0) && st.eta.shift_invariant(cur.0 .1) {
            phi_period = Some(k);
        }
    }
    Ok(match phi_period {
        Some(p) => StabilityReport { status: Stability::PeriodicNotStable, period: Some(p) },
        None => StabilityReport { status: Stability::OpenWithinBound, period: None },
    })
}
