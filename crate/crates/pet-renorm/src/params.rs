//! Dynamics of the parameter map `f(t) = t/(1−2t) mod G` on `[0,½]`.
//!
//! The inverse branches `g_{n,r}(x) = (rx+n)/(1+2(rx+n))` are indexed by the
//! alphabet `A = {(n,r) : n ≥ 0, r = ±1, (n,r) ≠ (0,−1)}`; an itinerary is the
//! sequence of branches visited by the orbit and determines the parameter.
//!
//! Conventions:
//! * ties between two branches (at `t = n/(1+2n)`) go to `r = +1`;
//! * `f(t) = ½` ends an orbit: the itinerary records a boundary marker;
//! * an orbit reaching `0` stays there on branch `(0,1)` (the "zero tail").

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::cocycle;
use crate::error::{Error, Result};
use crate::numerics::{reduce_mod_g, session_field, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "(i64, i8)", into = "(i64, i8)")]
pub struct Branch {
    pub n: i64,
    pub r: i8,
}

impl Branch {
    pub fn new(n: i64, r: i8) -> Result<Branch> {
        if n < 0 || !(r == 1 || r == -1) || (n == 0 && r == -1) {
            return Err(Error::Domain(format!("({n},{r}) is not a branch label")));
        }
        Ok(Branch { n, r })
    }

    /// `(0,1)`, the branch fixing `0`.
    pub const ZERO: Branch = Branch { n: 0, r: 1 };
}

impl TryFrom<(i64, i8)> for Branch {
    type Error = Error;
    fn try_from((n, r): (i64, i8)) -> Result<Branch> {
        Branch::new(n, r)
    }
}

impl From<Branch> for (i64, i8) {
    fn from(b: Branch) -> (i64, i8) {
        (b.n, b.r)
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.n, self.r)
    }
}

/// Finite prefix of a coding sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Itinerary {
    pub branches: Vec<Branch>,
    /// The orbit reached `½` right after the listed branches.
    pub boundary: bool,
    /// The orbit reached `0`; the sequence continues with `(0,1)` forever.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub zero_tail: bool,
}

impl Itinerary {
    pub fn new(branches: Vec<Branch>) -> Itinerary {
        Itinerary { branches, boundary: false, zero_tail: false }
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("itinerary serializes")
    }

    pub fn from_json(s: &str) -> Result<Itinerary> {
        serde_json::from_str(s).map_err(|e| Error::Parse(format!("itinerary json: {e}")))
    }
}

impl fmt::Display for Itinerary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.branches.iter().map(|b| b.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Parses the comma-separated text form `"(n,r),(n,r),…"`.
impl FromStr for Itinerary {
    type Err = Error;
    fn from_str(s: &str) -> Result<Itinerary> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut out = Vec::new();
        let mut rest = compact.as_str();
        while !rest.is_empty() {
            let body = rest
                .strip_prefix('(')
                .ok_or_else(|| Error::Parse(format!("expected '(' in itinerary at {rest:?}")))?;
            let close = body.find(')').ok_or_else(|| Error::Parse("unclosed '(' in itinerary".into()))?;
            let (n, r) = body[..close]
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("branch {:?} needs two entries", &body[..close])))?;
            let n: i64 = n.parse().map_err(|_| Error::Parse(format!("bad branch index {n:?}")))?;
            let r: i8 = r.parse().map_err(|_| Error::Parse(format!("bad branch sign {r:?}")))?;
            out.push(Branch::new(n, r)?);
            rest = &body[close + 1..];
            rest = rest.strip_prefix(',').unwrap_or(rest);
        }
        if out.is_empty() {
            return Err(Error::Parse("empty itinerary".into()));
        }
        Ok(Itinerary::new(out))
    }
}

fn check_unit_half(t: &Scalar, what: &str) -> Result<()> {
    if t.is_negative() || *t > Scalar::half() {
        return Err(Error::Domain(format!("{what} = {t} is outside [0,1/2]")));
    }
    Ok(())
}

/// `(α, β)` together with optional itinerary metadata.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamPair {
    pub alpha: Scalar,
    pub beta: Scalar,
    pub alpha_itinerary: Option<Itinerary>,
    pub beta_itinerary: Option<Itinerary>,
}

impl ParamPair {
    pub fn new(alpha: Scalar, beta: Scalar) -> Result<ParamPair> {
        check_unit_half(&alpha, "alpha")?;
        check_unit_half(&beta, "beta")?;
        session_field([&alpha, &beta])?;
        Ok(ParamPair { alpha, beta, alpha_itinerary: None, beta_itinerary: None })
    }

    /// Attach itineraries after checking them against the scalar values.
    pub fn with_itineraries(mut self, a: Itinerary, b: Itinerary) -> Result<ParamPair> {
        for (t, it, name) in [(&self.alpha, &a, "alpha"), (&self.beta, &b, "beta")] {
            let actual = itinerary_of(t, it.len())?;
            if actual.branches != it.branches {
                return Err(Error::Invariant(format!("{name} itinerary {it} disagrees with orbit {actual}")));
            }
        }
        self.alpha_itinerary = Some(a);
        self.beta_itinerary = Some(b);
        Ok(self)
    }

    /// `(f(α), f(β))` with both branches.
    pub fn step(&self) -> Result<(ParamPair, Branch, Branch)> {
        let (a, ba) = f_step(&self.alpha)?;
        let (b, bb) = f_step(&self.beta)?;
        Ok((ParamPair::new(a, b)?, ba, bb))
    }
}

/// One application of `f` on `[0,½)`: the value and the branch `(m,r)` with
/// `f(t) = r·(t/(1−2t) − m)`.
pub fn f_step(t: &Scalar) -> Result<(Scalar, Branch)> {
    if t.is_negative() || *t >= Scalar::half() {
        if *t == Scalar::half() {
            return Err(Error::Boundary(0));
        }
        return Err(Error::Domain(format!("f is defined on [0,1/2); got {t}")));
    }
    let u = t / &(Scalar::one() - t.mul_int(2));
    let red = reduce_mod_g(&u);
    let n = red
        .integer_part
        .to_i64()
        .ok_or_else(|| Error::Domain(format!("branch index of {t} overflows")))?;
    Ok((red.reduced, Branch { n, r: red.orientation }))
}

/// `g_{n,r}(x) = (rx+n)/(1+2(rx+n))`.
pub fn branch_inverse(b: Branch, x: &Scalar) -> Scalar {
    let y = x.mul_int(b.r as i64).add_int(b.n);
    &y / &y.mul_int(2).add_int(1)
}

/// Coding sequence of `t` to the given depth.
pub fn itinerary_of(t: &Scalar, depth: usize) -> Result<Itinerary> {
    check_unit_half(t, "t")?;
    let mut it = Itinerary::new(Vec::with_capacity(depth));
    if *t == Scalar::half() {
        it.boundary = true;
        return Ok(it);
    }
    let mut x = t.clone();
    while it.len() < depth {
        if x.is_zero() {
            it.zero_tail = true;
            it.branches.resize(depth, Branch::ZERO);
            break;
        }
        let (next, b) = f_step(&x)?;
        it.branches.push(b);
        if next == Scalar::half() {
            it.boundary = true;
            break;
        }
        x = next;
    }
    if x.is_zero() {
        it.zero_tail = true;
    }
    Ok(it)
}

/// Certified enclosure of the parameter coded by an itinerary prefix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Enclosure {
    pub lo: Scalar,
    pub hi: Scalar,
    pub midpoint: Scalar,
    /// `lo == hi` and the point is exact (boundary or zero tail).
    pub exact: bool,
}

impl Enclosure {
    pub fn width(&self) -> Scalar {
        &self.hi - &self.lo
    }

    pub fn contains(&self, x: &Scalar) -> bool {
        self.lo <= *x && *x <= self.hi
    }
}

fn compose_inverses(branches: &[Branch], x: Scalar) -> Scalar {
    branches.iter().rev().fold(x, |acc, &b| branch_inverse(b, &acc))
}

/// Image of `[0,½]` under `g_{b₀} ∘ … ∘ g_{b_k}`; exact when the itinerary
/// ends on the boundary or in the zero tail.
pub fn param_from_itinerary(it: &Itinerary) -> Result<Enclosure> {
    if it.is_empty() && !it.boundary {
        return Err(Error::Domain("empty itinerary".into()));
    }
    let exact_end = if it.boundary {
        Some(Scalar::half())
    } else if it.zero_tail {
        Some(Scalar::zero())
    } else {
        None
    };
    if let Some(end) = exact_end {
        let p = compose_inverses(&it.branches, end);
        return Ok(Enclosure { lo: p.clone(), hi: p.clone(), midpoint: p, exact: true });
    }
    let e0 = compose_inverses(&it.branches, Scalar::zero());
    let e1 = compose_inverses(&it.branches, Scalar::half());
    let (lo, hi) = if e0 <= e1 { (e0, e1) } else { (e1, e0) };
    let midpoint = (&lo + &hi) * Scalar::half();
    Ok(Enclosure { lo, hi, midpoint, exact: false })
}

/// Number of `f`-steps until the orbit of `p/q ∈ [0,½)` reaches `{0, ½}`.
pub fn rational_termination(p: i64, q: i64) -> Result<u64> {
    if q <= 0 || p < 0 || 2 * p >= q || p.gcd(&q) != 1 && p != 0 {
        return Err(Error::Domain(format!("{p}/{q} is not a reduced fraction in [0,1/2)")));
    }
    let mut x = Scalar::ratio(p, q);
    let mut steps = 0u64;
    while !x.is_zero() && x != Scalar::half() {
        x = f_step(&x)?.0;
        steps += 1;
    }
    Ok(steps)
}

/// `χ(f(p/q))`: denominator of the reduced value of `f(p/q)`.
pub fn f_denominator(p: &BigInt, q: &BigInt) -> Result<BigInt> {
    let (v, _) = f_step(&Scalar::big_ratio(p.clone(), q.clone()))?;
    Ok(v.as_ratio().expect("rational input gives rational output").1.clone())
}

/// A joint branch for `f × f`: `(m,r)` for `α`, `(n,s)` for `β`.
pub type PairBranch = (Branch, Branch);

fn pb(m: i64, r: i8, n: i64, s: i8) -> PairBranch {
    (Branch { n: m, r }, Branch { n, r: s })
}

/// `k`-upward block: `(0,1,1,1)`, then `(0,1,0,1)` for `1 ≤ i ≤ k−1`, then `(1,1,0,1)`.
pub fn upward_block(k: usize) -> Vec<PairBranch> {
    assert!(k >= 1, "block length parameter must be positive");
    let mut out = vec![pb(0, 1, 1, 1)];
    out.extend(std::iter::repeat_n(pb(0, 1, 0, 1), k - 1));
    out.push(pb(1, 1, 0, 1));
    out
}

/// `k`-rightward block: the upward block with the two coordinates swapped.
pub fn rightward_block(k: usize) -> Vec<PairBranch> {
    upward_block(k).into_iter().map(|(a, b)| (b, a)).collect()
}

/// Rational box containing every pair with a `k`-upward itinerary:
/// `[1/(3+2k), 3/(8+6k)] × [1/3, (3+2k)/(8+6k)]`.
pub fn upward_box(k: usize) -> ((Scalar, Scalar), (Scalar, Scalar)) {
    let k = k as i64;
    (
        (Scalar::ratio(1, 3 + 2 * k), Scalar::ratio(3, 8 + 6 * k)),
        (Scalar::ratio(1, 3), Scalar::ratio(3 + 2 * k, 8 + 6 * k)),
    )
}

pub fn rightward_box(k: usize) -> ((Scalar, Scalar), (Scalar, Scalar)) {
    let (a, b) = upward_box(k);
    (b, a)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Understandable {
    pub alpha: Itinerary,
    pub beta: Itinerary,
    /// `a_0 = 0, a_{j+1} = a_j + k_j + 1`; the last entry is the total length.
    pub marks: Vec<usize>,
    pub k_schedule: Vec<usize>,
}

/// Concatenate `k_j`-upward (even `j`) and `k_j`-rightward (odd `j`) blocks.
pub fn understandable_itinerary(k_schedule: &[usize]) -> Result<Understandable> {
    if k_schedule.is_empty() {
        return Err(Error::Domain("empty k schedule".into()));
    }
    if let Some(bad) = k_schedule.iter().find(|&&k| k == 0) {
        return Err(Error::Domain(format!("block parameter {bad} must be at least 1")));
    }
    let mut marks = vec![0usize];
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (j, &k) in k_schedule.iter().enumerate() {
        let block = if j % 2 == 0 { upward_block(k) } else { rightward_block(k) };
        for (x, y) in block {
            a.push(x);
            b.push(y);
        }
        marks.push(marks[j] + k + 1);
    }
    Ok(Understandable {
        alpha: Itinerary::new(a),
        beta: Itinerary::new(b),
        marks,
        k_schedule: k_schedule.to_vec(),
    })
}

/// Supremum of `4αβ` over the `k`-upward box: `12(3+2k)/(8+6k)²`.
pub fn upward_period4_bound(k: usize) -> Scalar {
    let ((_, a_hi), (_, b_hi)) = upward_box(k);
    (a_hi * b_hi).mul_int(4)
}

/// The quantity `3(3+2k)/(8+6k)²` as printed in the source argument for the
/// first stage. It is a quarter of [`upward_period4_bound`], so it is kept for
/// reference only and never used to certify anything.
pub fn printed_stage0_quantity(k: usize) -> Scalar {
    let k = k as i64;
    Scalar::ratio(3 * (3 + 2 * k), (8 + 6 * k) * (8 + 6 * k))
}

#[derive(Clone, Debug, Serialize)]
pub struct StageCertificate {
    pub stage: usize,
    pub epsilon: Scalar,
    pub k_prev: Option<usize>,
    pub k: usize,
    /// Smallest relative slack `min_i (w_i − (1−ε)v_i)/v_i` over the box corners
    /// (stage 0: `1 − ε − (1 − 4αβ)_min` slack instead).
    pub min_slack: Scalar,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecaySchedule {
    pub eta: Scalar,
    pub epsilons: Vec<Scalar>,
    pub k_schedule: Vec<usize>,
    pub stages: Vec<StageCertificate>,
    /// `∏_{j<J}(1−ε_j)`: certified lower bound for `ν(O_{a_{J−1}+1})`.
    pub prefix_product: Scalar,
    /// `∏_{j<J}(1−ε_j)·(1 − Σ_{j≥J} ε_j)`: lower bound for the measure of
    /// non-periodic points once the schedule is continued with the same rule.
    pub ns_lower_bound: Scalar,
}

/// Choose `ε_j = η/2^{j+1}` and the smallest admissible `k_j` for `stages`
/// blocks; every choice is certified by an exact box check.
pub fn decay_schedule(eta: &Scalar, stages: usize, k_cap: usize) -> Result<DecaySchedule> {
    if !eta.is_positive() || *eta >= Scalar::one() {
        return Err(Error::Domain(format!("eta = {eta} must lie in (0,1)")));
    }
    if stages == 0 {
        return Err(Error::Domain("at least one stage is required".into()));
    }
    let eps: Vec<Scalar> = (0..stages)
        .map(|j| eta * &Scalar::big_ratio(BigInt::one(), BigInt::one() << (j + 1)))
        .collect();
    let mut ks = Vec::with_capacity(stages);
    let mut certs = Vec::with_capacity(stages);

    let k0 = (1..=k_cap)
        .find(|&k| upward_period4_bound(k) < eps[0])
        .ok_or_else(|| Error::CapExceeded { what: "stage 0 block search".into(), cap: k_cap as u64 })?;
    ks.push(k0);
    certs.push(StageCertificate {
        stage: 0,
        epsilon: eps[0].clone(),
        k_prev: None,
        k: k0,
        min_slack: &eps[0] - &upward_period4_bound(k0),
        holds: true,
    });

    for j in 1..stages {
        let prev = ks[j - 1];
        let found = first_passing(prev, &eps[j], k_cap)?;
        ks.push(found.0);
        certs.push(StageCertificate {
            stage: j,
            epsilon: eps[j].clone(),
            k_prev: Some(prev),
            k: found.0,
            min_slack: found.1,
            holds: true,
        });
    }
    let prefix_product = eps.iter().fold(Scalar::one(), |acc, e| acc * (Scalar::one() - e));
    let tail = eta * &Scalar::big_ratio(BigInt::one(), BigInt::one() << stages);
    let ns_lower_bound = &prefix_product * &(Scalar::one() - tail);
    Ok(DecaySchedule { eta: eta.clone(), epsilons: eps, k_schedule: ks, stages: certs, prefix_product, ns_lower_bound })
}

fn first_passing(prev: usize, eps: &Scalar, k_cap: usize) -> Result<(usize, Scalar)> {
    use rayon::prelude::*;
    // Scan candidates in parallel batches; the minimal passing k wins.
    let batch = 16usize;
    let mut start = 1usize;
    while start <= k_cap {
        let end = (start + batch - 1).min(k_cap);
        let hit = (start..=end)
            .into_par_iter()
            .map(|k| (k, cocycle::decay_inequality_check(prev, k, eps, 0)))
            .filter(|(_, c)| c.holds)
            .min_by_key(|(k, _)| *k);
        if let Some((k, c)) = hit {
            return Ok((k, c.min_slack));
        }
        start = end + 1;
    }
    Err(Error::CapExceeded { what: format!("block search after k={prev} with epsilon {eps}"), cap: k_cap as u64 })
}

/// Density `1/x + 1/(1−x)` of the `f`-invariant measure `m`.
pub fn invariant_density(x: &Scalar) -> Result<Scalar> {
    if !x.is_positive() || *x >= Scalar::one() {
        return Err(Error::Domain(format!("density needs 0 < x < 1, got {x}")));
    }
    Ok(x.recip().unwrap() + (Scalar::one() - x).recip().unwrap())
}

fn odds(x: &Scalar) -> Scalar {
    x / &(Scalar::one() - x)
}

/// `m([a,b]) = log(Q)` with `Q` exact; this returns `Q`.
pub fn measure_log_argument(a: &Scalar, b: &Scalar) -> Scalar {
    odds(b) / odds(a)
}

#[derive(Clone, Debug, Serialize)]
pub struct PushforwardDefect {
    /// Exact rational `Q` with `defect = |log Q|`.
    pub log_argument: Scalar,
    pub defect: f64,
    /// Mass carried by the omitted branches `n > cutoff`.
    pub tail_bound: f64,
}

/// Compare `m([a,b])` with the mass of its preimage restricted to branches
/// `n ≤ cutoff`.
pub fn pushforward_defect(a: &Scalar, b: &Scalar, cutoff: i64) -> Result<PushforwardDefect> {
    if !a.is_positive() || a > b || *b >= Scalar::half() {
        return Err(Error::Domain(format!("need 0 < a <= b < 1/2, got [{a}, {b}]")));
    }
    let mut q = measure_log_argument(a, b);
    for n in 0..=cutoff {
        for r in [1i8, -1] {
            let Ok(br) = Branch::new(n, r) else { continue };
            let (x, y) = (branch_inverse(br, a), branch_inverse(br, b));
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            q = q / measure_log_argument(&lo, &hi);
        }
    }
    let (af, bf, nf) = (a.to_f64(), b.to_f64(), (cutoff + 1) as f64);
    let tail_bound = (bf - af) * (1.0 / (nf + af) + 1.0 / (nf - bf));
    Ok(PushforwardDefect { defect: q.to_f64().ln().abs(), log_argument: q, tail_bound })
}

/// Upper bound `2·log((1−ε)/(1−3ε))·log((1−ε)/ε)` for the `m×m` mass of the
/// plug region; reporting precision only.
pub fn plug_measure(eps: &Scalar) -> Result<f64> {
    if !eps.is_positive() || *eps >= Scalar::ratio(1, 4) {
        return Err(Error::Domain(format!("plug bound needs 0 < eps < 1/4, got {eps}")));
    }
    let one = Scalar::one();
    let l1 = ((&one - eps) / (&one - &eps.mul_int(3))).to_f64().ln();
    let l2 = ((&one - eps) / eps.clone()).to_f64().ln();
    Ok(2.0 * l1 * l2)
}

/// `|x|` of a rational's denominator as `u64` (test/report helper).
pub fn denominator_u64(x: &Scalar) -> Option<u64> {
    x.as_ratio().and_then(|(_, q)| q.abs().to_u64())
}
