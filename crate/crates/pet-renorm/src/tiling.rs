//! Truchet tilings `τ(m,n) = ω_m·η_n` induced by corner percolation, the
//! curve-following map `C`, and the kept-square renormalization.
//!
//! Tile `T₊₁` carries arcs around its top-left and bottom-right corners and
//! `T₋₁` around the other two; `C((m,n),(a,b)) = ((m+sb, n+sa), s(b,a))` with
//! `s = τ(m,n)` moves an inward edge normal along the arc to the next tile.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Scalar;
use crate::pet::Direction;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Backend {
    /// Entry `m` is `+1` iff `base + m·param mod 1 ∈ [0,½)`.
    Rotation { param: Scalar, base: Scalar },
    /// Entries `lo..lo+len`; anything else is a hard error.
    Explicit { lo: i64, values: Vec<i8> },
    /// Entry `m` is `pattern[m mod len]`.
    Periodic { pattern: Vec<i8> },
}

/// A `±1` sequence indexed by `ℤ`, possibly known only on a window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeqWindow {
    backend: Backend,
    /// Precomputed entries `cache_lo..cache_lo+cache.len()` (rotation only).
    cache_lo: i64,
    cache: Vec<i8>,
}

fn check_signs(values: &[i8]) -> Result<()> {
    match values.iter().find(|&&v| v != 1 && v != -1) {
        Some(v) => Err(Error::Parse(format!("sequence entry {v} is not ±1"))),
        None => Ok(()),
    }
}

impl SeqWindow {
    fn from_backend(backend: Backend) -> SeqWindow {
        SeqWindow { backend, cache_lo: 0, cache: Vec::new() }
    }

    pub fn rotation(param: Scalar, base: Scalar) -> SeqWindow {
        SeqWindow::from_backend(Backend::Rotation { param, base: base.frac() })
    }

    pub fn explicit(lo: i64, values: Vec<i8>) -> Result<SeqWindow> {
        check_signs(&values)?;
        Ok(SeqWindow::from_backend(Backend::Explicit { lo, values }))
    }

    pub fn periodic(pattern: Vec<i8>) -> Result<SeqWindow> {
        check_signs(&pattern)?;
        if pattern.is_empty() {
            return Err(Error::Parse("empty periodic pattern".into()));
        }
        Ok(SeqWindow::from_backend(Backend::Periodic { pattern }))
    }

    pub fn constant(v: i8) -> SeqWindow {
        SeqWindow::periodic(vec![v]).expect("±1")
    }

    /// `ω^alt_n = (−1)^n`.
    pub fn alternating() -> SeqWindow {
        SeqWindow::periodic(vec![1, -1]).expect("±1")
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    /// Index range for explicit windows; `None` means defined on all of `ℤ`.
    pub fn bounds(&self) -> Option<(i64, i64)> {
        match &self.backend {
            Backend::Explicit { lo, values } => Some((*lo, lo + values.len() as i64 - 1)),
            _ => None,
        }
    }

    pub fn get(&self, m: i64) -> Result<i8> {
        let off = m - self.cache_lo;
        if off >= 0 && (off as usize) < self.cache.len() {
            return Ok(self.cache[off as usize]);
        }
        match &self.backend {
            Backend::Rotation { param, base } => Ok(rotation_entry(param, base, m)),
            Backend::Explicit { lo, values } => {
                let i = m - lo;
                if i < 0 || i as usize >= values.len() {
                    return Err(Error::Window { index: m, lo: *lo, hi: lo + values.len() as i64 - 1 });
                }
                Ok(values[i as usize])
            }
            Backend::Periodic { pattern } => Ok(pattern[m.rem_euclid(pattern.len() as i64) as usize]),
        }
    }

    pub fn values(&self, lo: i64, hi: i64) -> Result<Vec<i8>> {
        if let Backend::Rotation { param, base } = &self.backend {
            // running sum instead of one multiplication per entry
            let mut t = (base + &param.mul_int(lo)).frac();
            let mut out = Vec::with_capacity((hi - lo + 1).max(0) as usize);
            for _ in lo..=hi {
                out.push(if t < Scalar::half() { 1 } else { -1 });
                t = (&t + param).frac();
            }
            return Ok(out);
        }
        (lo..=hi).map(|m| self.get(m)).collect()
    }

    /// Same sequence with entries `lo..=hi` precomputed.
    pub fn with_cache(&self, lo: i64, hi: i64) -> Result<SeqWindow> {
        let mut out = self.clone();
        if matches!(self.backend, Backend::Rotation { .. }) {
            out.cache = self.values(lo, hi)?;
            out.cache_lo = lo;
        }
        Ok(out)
    }

    /// Explicit copy of entries `lo..=hi`.
    pub fn materialize(&self, lo: i64, hi: i64) -> Result<SeqWindow> {
        SeqWindow::explicit(lo, self.values(lo, hi)?)
    }

    /// `σ^k`: entry `m` of the result is entry `m+k` of `self`.
    pub fn shift(&self, k: i64) -> SeqWindow {
        let backend = match &self.backend {
            Backend::Rotation { param, base } => {
                Backend::Rotation { param: param.clone(), base: (base + &param.mul_int(k)).frac() }
            }
            Backend::Explicit { lo, values } => Backend::Explicit { lo: lo - k, values: values.clone() },
            Backend::Periodic { pattern } => {
                let n = pattern.len();
                let r = k.rem_euclid(n as i64) as usize;
                Backend::Periodic { pattern: (0..n).map(|i| pattern[(i + r) % n]).collect() }
            }
        };
        let mut out = SeqWindow::from_backend(backend);
        if !self.cache.is_empty() {
            out.cache = self.cache.clone();
            out.cache_lo = self.cache_lo - k;
        }
        out
    }

    /// Minimal shift period when the backend certifies one.
    pub fn shift_period(&self) -> Option<u64> {
        let pattern = match &self.backend {
            Backend::Periodic { pattern } => pattern.clone(),
            Backend::Rotation { param, .. } if param.is_rational() => {
                let q = crate::numerics::to_i64(param.denominator()).ok()?;
                self.values(0, q - 1).ok()?
            }
            _ => return None,
        };
        let n = pattern.len();
        (1..=n).find(|&d| n % d == 0 && (0..n).all(|i| pattern[i] == pattern[(i + d) % n])).map(|d| d as u64)
    }

    /// Whether `σ^k(self) = self` is certified.
    pub fn shift_invariant(&self, k: i64) -> bool {
        k == 0 || self.shift_period().is_some_and(|p| k.rem_euclid(p as i64) == 0)
    }
}

fn rotation_entry(param: &Scalar, base: &Scalar, m: i64) -> i8 {
    if (base + &param.mul_int(m)).frac() < Scalar::half() {
        1
    } else {
        -1
    }
}

/// Render `±1` entries as `+`/`-`.
pub fn signs_to_string(v: &[i8]) -> String {
    v.iter().map(|&x| if x > 0 { '+' } else { '-' }).collect()
}

pub fn parse_signs(s: &str) -> Result<Vec<i8>> {
    s.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '+' => Ok(1),
            '-' => Ok(-1),
            other => Err(Error::Parse(format!("unexpected sign character {other:?}"))),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tiling {
    pub omega: SeqWindow,
    pub eta: SeqWindow,
}

/// Lattice site and inward normal.
pub type CurveState = ((i64, i64), Direction);

impl Tiling {
    pub fn new(omega: SeqWindow, eta: SeqWindow) -> Tiling {
        Tiling { omega, eta }
    }

    /// Tiling coded by rotations: `ω = ς_α(x)`, `η = ς_β(y)`.
    pub fn rotation(alpha: &Scalar, x: &Scalar, beta: &Scalar, y: &Scalar) -> Tiling {
        Tiling::new(SeqWindow::rotation(alpha.clone(), x.clone()), SeqWindow::rotation(beta.clone(), y.clone()))
    }

    pub fn with_cache(&self, m: (i64, i64), n: (i64, i64)) -> Result<Tiling> {
        Ok(Tiling::new(self.omega.with_cache(m.0, m.1)?, self.eta.with_cache(n.0, n.1)?))
    }

    pub fn materialize(&self, m: (i64, i64), n: (i64, i64)) -> Result<Tiling> {
        Ok(Tiling::new(self.omega.materialize(m.0, m.1)?, self.eta.materialize(n.0, n.1)?))
    }

    pub fn tau_at(&self, m: i64, n: i64) -> Result<i8> {
        Ok(self.omega.get(m)? * self.eta.get(n)?)
    }

    pub fn is_kept_site(&self, m: i64, n: i64) -> Result<bool> {
        Ok(is_kept(&self.omega, m)? && is_kept(&self.eta, n)?)
    }

    pub fn window_json(&self, m: (i64, i64), n: (i64, i64)) -> Result<WindowJson> {
        Ok(WindowJson { omega: self.omega.values(m.0, m.1)?, eta: self.eta.values(n.0, n.1)?, base: [m.0, n.0] })
    }

    pub fn from_window_json(w: &WindowJson) -> Result<Tiling> {
        Ok(Tiling::new(SeqWindow::explicit(w.base[0], w.omega.clone())?, SeqWindow::explicit(w.base[1], w.eta.clone())?))
    }
}

/// `{"omega":[...], "eta":[...], "base":[lo_m, lo_n]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowJson {
    pub omega: Vec<i8>,
    pub eta: Vec<i8>,
    pub base: [i64; 2],
}

pub fn tau_at(t: &Tiling, m: i64, n: i64) -> Result<i8> {
    t.tau_at(m, n)
}

/// `C`.
pub fn curve_follow(t: &Tiling, site: (i64, i64), v: Direction) -> Result<CurveState> {
    let s = t.tau_at(site.0, site.1)?;
    let (a, b) = v.components();
    Ok(((site.0 + (s * b) as i64, site.1 + (s * a) as i64), v.turn(s)))
}

/// `C⁻¹`: the previous site is `(m′−a′, n′−b′)` whatever the tile, and the
/// tile there fixes the previous normal.
pub fn curve_follow_inverse(t: &Tiling, site: (i64, i64), v: Direction) -> Result<CurveState> {
    let (a1, b1) = v.components();
    let prev = (site.0 - a1 as i64, site.1 - b1 as i64);
    let s = t.tau_at(prev.0, prev.1)?;
    Ok((prev, Direction::from_components(s * b1, s * a1).expect("direction")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    Closed,
    OpenTruncated,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CurveTrace {
    pub kind: CurveKind,
    pub sites: Vec<(i64, i64, Direction)>,
    /// Period when closed, number of steps taken otherwise.
    pub length: u64,
}

/// Follow the curve through `(site, v)` until the state recurs or `max_steps`.
pub fn trace_curve(t: &Tiling, site: (i64, i64), v: Direction, max_steps: u64) -> Result<CurveTrace> {
    let start = (site, v);
    let mut cur = start;
    let mut sites = vec![(site.0, site.1, v)];
    for k in 1..=max_steps {
        cur = curve_follow(t, cur.0, cur.1)?;
        if cur == start {
            return Ok(CurveTrace { kind: CurveKind::Closed, sites, length: k });
        }
        sites.push((cur.0 .0, cur.0 .1, cur.1));
    }
    Ok(CurveTrace { kind: CurveKind::OpenTruncated, sites, length: max_steps })
}

/// Length of the curve through `(site, v)` if it closes within `max_steps`,
/// without recording the sites.
pub fn curve_period(t: &Tiling, site: (i64, i64), v: Direction, max_steps: u64) -> Result<Option<u64>> {
    let start = (site, v);
    let mut cur = start;
    for k in 1..=max_steps {
        cur = curve_follow(t, cur.0, cur.1)?;
        if cur == start {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// `k ∈ K(ω)`: `ω_k` is not part of a `−+` subword.
pub fn is_kept(s: &SeqWindow, k: i64) -> Result<bool> {
    let (p, c, n) = (s.get(k - 1)?, s.get(k)?, s.get(k + 1)?);
    Ok(!(c == -1 && n == 1) && !(p == -1 && c == 1))
}

/// `K(ω) ∩ [lo,hi]`; needs entries `lo−1..=hi+1`.
pub fn kept_set(s: &SeqWindow, lo: i64, hi: i64) -> Result<Vec<i64>> {
    if hi < lo {
        return Ok(Vec::new());
    }
    let v = s.values(lo - 1, hi + 1)?;
    Ok((1..v.len() - 1)
        .filter(|&i| !(v[i] == -1 && v[i + 1] == 1) && !(v[i - 1] == -1 && v[i] == 1))
        .map(|i| lo - 1 + i as i64)
        .collect())
}

/// Renormalized tiling `τ′ = τ∘κ` on the given index window. `κ(0)` is the
/// least non-negative kept index in each coordinate.
pub fn renormalize_tiling(t: &Tiling, m: (i64, i64), n: (i64, i64)) -> Result<Tiling> {
    let collapse = |s: &SeqWindow, lo: i64, hi: i64, name: &str| -> Result<SeqWindow> {
        let kept = kept_set(s, lo, hi)?;
        let zero = kept.iter().position(|&k| k >= 0).ok_or_else(|| {
            Error::Assumption(format!("{name} has no non-negative kept index in [{lo},{hi}]"))
        })?;
        let vals = kept.iter().map(|&k| s.get(k)).collect::<Result<Vec<_>>>()?;
        SeqWindow::explicit(-(zero as i64), vals)
    };
    Ok(Tiling::new(collapse(&t.omega, m.0, m.1, "omega")?, collapse(&t.eta, n.0, n.1, "eta")?))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct KeptReturn {
    pub site: (i64, i64),
    pub v: Direction,
    /// Steps of `C` until the next kept square.
    pub r: u64,
    /// Excision count `E(m,n,w) = min{j>0 : (m,n)+j·w ∈ K̄}`.
    pub e: u64,
}

/// First return of `C` to `K̄×N`, checked against `R = 2E − 1`.
pub fn return_to_kept(t: &Tiling, site: (i64, i64), v: Direction, cap: u64) -> Result<KeptReturn> {
    if !t.is_kept_site(site.0, site.1)? {
        return Err(Error::OutsideDomain(format!("site {site:?} is not a kept square")));
    }
    let mut cur = (site, v);
    let mut r = 0;
    loop {
        cur = curve_follow(t, cur.0, cur.1)?;
        r += 1;
        if t.is_kept_site(cur.0 .0, cur.0 .1)? {
            break;
        }
        if r >= cap {
            return Err(Error::CapExceeded { what: "return to kept squares".into(), cap });
        }
    }
    let s = t.tau_at(site.0, site.1)?;
    let w = v.turn(s);
    let (wa, wb) = w.components();
    let mut e = 0;
    loop {
        e += 1;
        let p = (site.0 + e as i64 * wa as i64, site.1 + e as i64 * wb as i64);
        if t.is_kept_site(p.0, p.1)? {
            break;
        }
        if e >= cap {
            return Err(Error::CapExceeded { what: "excision count".into(), cap });
        }
    }
    if r != 2 * e - 1 {
        return Err(Error::Invariant(format!("return time {r} != 2*{e}-1 at {site:?} {v}")));
    }
    Ok(KeptReturn { site: cur.0, v: cur.1, r, e })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BoxInfo {
    /// Length parameter `ℓ`: the box is `2ℓ` squares long.
    pub ell: u64,
    pub cols: (i64, i64),
    pub rows: (i64, i64),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SiteClass {
    Loop4,
    HorizontalBox(BoxInfo),
    VerticalBox(BoxInfo),
}

/// Closed-form test for a loop of length four: the arc entered with normal
/// `v` wraps the corner `(dx,dy) = w − v`, and the four tiles around that
/// corner all wrap it exactly when `ω` changes sign across `dx` and `η`
/// across `dy`.
pub fn is_loop4(t: &Tiling, site: (i64, i64), v: Direction) -> Result<bool> {
    let s = t.tau_at(site.0, site.1)?;
    let (a, b) = v.components();
    let (wa, wb) = v.turn(s).components();
    let (dx, dy) = ((wa - a) as i64, (wb - b) as i64);
    Ok(t.omega.get(site.0 + dx)? != t.omega.get(site.0)? && t.eta.get(site.1 + dy)? != t.eta.get(site.1)?)
}

fn c4_is_identity(t: &Tiling, site: (i64, i64), v: Direction) -> Result<bool> {
    let mut cur = (site, v);
    for _ in 0..4 {
        cur = curve_follow(t, cur.0, cur.1)?;
    }
    Ok(cur == (site, v))
}

/// Which of the three alternatives for a non-kept square holds: the state
/// lies on a 4-loop, or on the central curve of a horizontal or a vertical box.
pub fn classify_site(t: &Tiling, site: (i64, i64), v: Direction, cap: u64) -> Result<SiteClass> {
    if t.is_kept_site(site.0, site.1)? {
        return Err(Error::OutsideDomain(format!("site {site:?} is a kept square")));
    }
    let loop4 = is_loop4(t, site, v)?;
    if loop4 != c4_is_identity(t, site, v)? {
        return Err(Error::Invariant(format!("4-loop pattern disagrees with C^4 at {site:?} {v}")));
    }
    if loop4 {
        return Ok(SiteClass::Loop4);
    }
    // The central curve of the maximal box runs between two kept squares.
    let mut squares: HashSet<(i64, i64)> = HashSet::from([site]);
    let mut cur = (site, v);
    let mut steps = 0;
    loop {
        cur = curve_follow(t, cur.0, cur.1)?;
        if t.is_kept_site(cur.0 .0, cur.0 .1)? {
            break;
        }
        squares.insert(cur.0);
        steps += 1;
        if steps > cap {
            return Err(Error::CapExceeded { what: "forward box exit".into(), cap });
        }
    }
    let exit_dir = cur.1;
    cur = (site, v);
    loop {
        cur = curve_follow_inverse(t, cur.0, cur.1)?;
        if t.is_kept_site(cur.0 .0, cur.0 .1)? {
            break;
        }
        squares.insert(cur.0);
        steps += 1;
        if steps > cap {
            return Err(Error::CapExceeded { what: "backward box entry".into(), cap });
        }
    }
    let cols = (squares.iter().map(|p| p.0).min().unwrap(), squares.iter().map(|p| p.0).max().unwrap());
    let rows = (squares.iter().map(|p| p.1).min().unwrap(), squares.iter().map(|p| p.1).max().unwrap());
    let horizontal = is_box(&t.omega, &t.eta, cols, rows, squares.len())?;
    let vertical = is_box(&t.eta, &t.omega, rows, cols, squares.len())?;
    match (horizontal, vertical) {
        (Some(ell), None) if exit_dir.is_horizontal() => Ok(SiteClass::HorizontalBox(BoxInfo { ell, cols, rows })),
        (None, Some(ell)) if !exit_dir.is_horizontal() => Ok(SiteClass::VerticalBox(BoxInfo { ell, cols, rows })),
        _ => Err(Error::Invariant(format!(
            "curve through {site:?} {v} is neither a 4-loop nor a single box central curve (cols {cols:?}, rows {rows:?})"
        ))),
    }
}

/// `along` alternates `−+−+…` on `long` (length `2ℓ`) and `across` takes equal
/// values on the two indices of `short`; the curve must fill the box.
fn is_box(along: &SeqWindow, across: &SeqWindow, long: (i64, i64), short: (i64, i64), visited: usize) -> Result<Option<u64>> {
    let len = long.1 - long.0 + 1;
    if short.1 - short.0 != 1 || len % 2 != 0 || visited as i64 != 2 * len {
        return Ok(None);
    }
    for (i, m) in (long.0..=long.1).enumerate() {
        let want = if i % 2 == 0 { -1 } else { 1 };
        if along.get(m)? != want {
            return Ok(None);
        }
    }
    if across.get(short.0)? != across.get(short.1)? {
        return Ok(None);
    }
    Ok(Some((len / 2) as u64))
}

/// Condition (3) of corner percolation on a finite grid `grid[i][j] = τ(i,j)`:
/// every 2×2 block has product `+1`.
pub fn satisfies_product_condition(grid: &[Vec<i8>]) -> bool {
    (0..grid.len().saturating_sub(1)).all(|i| {
        (0..grid[i].len().saturating_sub(1)).all(|j| grid[i][j] * grid[i + 1][j] * grid[i][j + 1] * grid[i + 1][j + 1] == 1)
    })
}

/// Condition (2): a factorization `τ(i,j) = ω_i·η_j`, normalized by `η_0 = +1`.
pub fn factor_tiling(grid: &[Vec<i8>]) -> Option<(Vec<i8>, Vec<i8>)> {
    let first = grid.first()?;
    let omega: Vec<i8> = grid.iter().map(|row| row[0]).collect();
    let eta: Vec<i8> = first.iter().map(|&t| t * omega[0]).collect();
    let ok = grid.iter().enumerate().all(|(i, row)| row.iter().enumerate().all(|(j, &t)| t == omega[i] * eta[j]));
    ok.then_some((omega, eta))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Viewport {
    pub m_lo: i64,
    pub n_lo: i64,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SvgStyle {
    pub tile_px: u32,
    pub stroke: String,
    pub stroke_width: u32,
    pub background: String,
}

impl Default for SvgStyle {
    fn default() -> SvgStyle {
        SvgStyle { tile_px: 20, stroke: "#000000".into(), stroke_width: 2, background: "#ffffff".into() }
    }
}

/// `k·px/2` without floating point.
fn half_units(k: i64, px: u32) -> String {
    let v = k * px as i64;
    if v % 2 == 0 {
        (v / 2).to_string()
    } else {
        format!("{}.5", (v - 1) / 2)
    }
}

/// SVG 1.1 rendering; tile rows go top (largest `n`) to bottom, columns left
/// to right, so the document is byte-identical across runs.
pub fn render_svg(t: &Tiling, view: Viewport, style: &SvgStyle) -> Result<String> {
    let px = style.tile_px;
    let (w, h) = (view.width as i64, view.height as i64);
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">",
        w * px as i64,
        h * px as i64,
        w * px as i64,
        h * px as i64
    );
    let _ = writeln!(
        out,
        "<g fill=\"{}\" stroke=\"#cccccc\" stroke-width=\"1\">",
        style.background
    );
    for row in 0..h {
        for col in 0..w {
            let _ = writeln!(out, "<rect x=\"{}\" y=\"{}\" width=\"{px}\" height=\"{px}\"/>", col * px as i64, row * px as i64);
        }
    }
    out.push_str("</g>\n");
    let _ = writeln!(
        out,
        "<g fill=\"none\" stroke=\"{}\" stroke-width=\"{}\" stroke-linecap=\"round\">",
        style.stroke, style.stroke_width
    );
    for row in 0..h {
        let n = view.n_lo + h - 1 - row;
        for col in 0..w {
            let m = view.m_lo + col;
            let s = t.tau_at(m, n)?;
            let corners: [(i64, i64); 2] = if s == 1 { [(-1, 1), (1, -1)] } else { [(1, 1), (-1, -1)] };
            // tile centre in half-pixel units
            let (cx, cy) = (2 * col + 1, 2 * row + 1);
            for (dx, dy) in corners {
                let (p1x, p1y) = (cx + dx, cy);
                let (p2x, p2y) = (cx, cy - dy);
                let sweep = if dx * dy > 0 { 1 } else { 0 };
                let _ = writeln!(
                    out,
                    "<path d=\"M {} {} A {} {} 0 0 {sweep} {} {}\"/>",
                    half_units(p1x, px),
                    half_units(p1y, px),
                    half_units(1, px),
                    half_units(1, px),
                    half_units(p2x, px),
                    half_units(p2y, px)
                );
            }
        }
    }
    out.push_str("</g>\n</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(lo: i64, s: &str) -> SeqWindow {
        SeqWindow::explicit(lo, parse_signs(s).unwrap()).unwrap()
    }

    fn fp() -> Scalar {
        "(2-1*sqrt(2))/2".parse().unwrap()
    }

    #[test]
    fn tau_and_follow_examples() {
        let t = Tiling::new(SeqWindow::constant(1), SeqWindow::constant(-1));
        assert_eq!(t.tau_at(0, 0).unwrap(), -1);
        let plus = Tiling::new(SeqWindow::constant(1), SeqWindow::constant(1));
        assert_eq!(curve_follow(&plus, (0, 0), Direction::East).unwrap(), ((0, 1), Direction::North));
        assert_eq!(curve_follow(&t, (0, 0), Direction::East).unwrap(), ((0, -1), Direction::South));
        for v in Direction::ALL {
            let (p, w) = curve_follow(&t, (3, 4), v).unwrap();
            assert_eq!(curve_follow_inverse(&t, p, w).unwrap(), ((3, 4), v));
        }
    }

    #[test]
    fn explicit_windows_do_not_extend() {
        let s = seq(0, "+-");
        assert!(matches!(s.get(2), Err(Error::Window { index: 2, lo: 0, hi: 1 })));
        assert_eq!(s.shift(1).get(0).unwrap(), -1);
    }

    #[test]
    fn rotation_backend_agrees_with_materialized() {
        let s = SeqWindow::rotation(fp(), "1/3".parse().unwrap());
        let e = s.materialize(-30, 30).unwrap();
        let c = s.with_cache(-10, 10).unwrap();
        for m in -30..=30 {
            assert_eq!(s.get(m).unwrap(), e.get(m).unwrap());
            assert_eq!(s.get(m).unwrap(), c.get(m).unwrap());
            assert_eq!(s.shift(5).get(m - 5).unwrap(), s.get(m).unwrap());
            assert_eq!(c.shift(-3).get(m + 3).unwrap(), s.get(m).unwrap());
        }
        let r = SeqWindow::rotation("2/7".parse().unwrap(), "1/10".parse().unwrap());
        assert_eq!(r.shift_period(), Some(7));
        assert!(r.shift_invariant(14) && !r.shift_invariant(3));
        assert_eq!(s.shift_period(), None);
    }

    #[test]
    fn kept_set_examples() {
        // "+ − + +" at 0..3 padded with + on both sides
        let s = seq(-1, "++-+++");
        assert_eq!(kept_set(&s, 0, 3).unwrap(), vec![0, 3]);
        assert_eq!(kept_set(&SeqWindow::constant(1), -5, 5).unwrap().len(), 11);
        assert!(kept_set(&SeqWindow::alternating(), -20, 20).unwrap().is_empty());
        assert!(kept_set(&seq(0, "+-+"), 0, 2).is_err());
    }

    #[test]
    fn renormalize_examples() {
        let plus = Tiling::new(SeqWindow::constant(1), SeqWindow::constant(-1));
        let r = renormalize_tiling(&plus, (-3, 3), (-3, 3)).unwrap();
        assert_eq!(r.omega.values(-3, 3).unwrap(), vec![1; 7]);
        // indices -1..6; kept in [0,5]: 0, 1, 4
        let t = Tiling::new(seq(-1, "+++-+--+"), SeqWindow::constant(1));
        let r = renormalize_tiling(&t, (0, 5), (0, 0)).unwrap();
        assert_eq!(r.omega.values(0, 2).unwrap(), vec![1, 1, -1]);
        assert!(r.omega.get(3).is_err());
        let alt = Tiling::new(SeqWindow::alternating(), SeqWindow::constant(1));
        assert!(matches!(renormalize_tiling(&alt, (0, 9), (0, 0)), Err(Error::Assumption(_))));
    }

    #[test]
    fn rotation_renormalized_tiling_is_rotation_coded() {
        let (a, x) = ("1/5".parse::<Scalar>().unwrap(), "0.37".parse::<Scalar>().unwrap());
        let (b, y) = ("2/7".parse::<Scalar>().unwrap(), "0.61".parse::<Scalar>().unwrap());
        let t = Tiling::rotation(&a, &x, &b, &y);
        let r = renormalize_tiling(&t, (0, 60), (0, 60)).unwrap();
        let (fa, _) = crate::params::f_step(&a).unwrap();
        let (fb, _) = crate::params::f_step(&b).unwrap();
        let px = crate::pet::psi_dilation(&a, &x);
        let py = crate::pet::psi_dilation(&b, &y);
        assert_eq!(r.omega.values(0, 20).unwrap(), SeqWindow::rotation(fa, px).values(0, 20).unwrap());
        assert_eq!(r.eta.values(0, 20).unwrap(), SeqWindow::rotation(fb, py).values(0, 20).unwrap());
    }

    #[test]
    fn four_loop_and_boxes() {
        // ω = −+ and η = +− around the origin corner give the 4-loop.
        let t = Tiling::new(seq(-2, "++-+++"), seq(-2, "+++-++"));
        let p = (0, 0);
        let mut found = false;
        for d in Direction::ALL {
            if is_loop4(&t, p, d).unwrap() {
                found = true;
                assert_eq!(trace_curve(&t, p, d, 10).unwrap().length, 4);
                assert_eq!(classify_site(&t, p, d, 50).unwrap(), SiteClass::Loop4);
            }
        }
        assert!(found);
        // horizontal box with ℓ = 1: ω = + − + +, η constant
        let t = Tiling::new(seq(-3, "+++-+++"), SeqWindow::constant(1));
        let mut boxes = 0;
        for d in Direction::ALL {
            match classify_site(&t, (0, 0), d, 50).unwrap() {
                SiteClass::HorizontalBox(b) => {
                    assert_eq!((b.ell, b.cols), (1, (0, 1)));
                    boxes += 1;
                }
                other => panic!("unexpected {other:?}"),
            }
        }
        assert_eq!(boxes, 4);
    }

    #[test]
    fn box_return_time() {
        // ω = + − + − + + …: a box of length ℓ = 2 starting at column 1
        let t = Tiling::new(seq(-2, "+++-+-+++"), SeqWindow::constant(1));
        let mut seen = Vec::new();
        for v in Direction::ALL {
            let r = return_to_kept(&t, (0, 0), v, 100).unwrap();
            seen.push((r.r, r.e));
        }
        assert!(seen.contains(&(1, 1)));
        assert!(seen.contains(&(9, 5)), "{seen:?}");
    }

    #[test]
    fn all_plus_has_no_closed_curves() {
        let t = Tiling::new(SeqWindow::constant(1), SeqWindow::constant(1));
        for v in Direction::ALL {
            assert_eq!(trace_curve(&t, (0, 0), v, 200).unwrap().kind, CurveKind::OpenTruncated);
        }
    }

    #[test]
    fn svg_counts_and_determinism() {
        let t = Tiling::new(SeqWindow::constant(1), SeqWindow::constant(1));
        let view = Viewport { m_lo: 0, n_lo: 0, width: 2, height: 2 };
        let svg = render_svg(&t, view, &SvgStyle::default()).unwrap();
        assert_eq!(svg.matches("<rect").count(), 4);
        assert_eq!(svg.matches("<path").count(), 8);
        assert_eq!(svg, render_svg(&t, view, &SvgStyle::default()).unwrap());
        assert!(svg.contains("<path d=\"M 0 10 A 10 10 0 0 0 10 0\"/>"), "{svg}");
    }

    #[test]
    fn window_json_round_trip() {
        let t = Tiling::rotation(&fp(), &"0.3".parse().unwrap(), &fp(), &"0.7".parse().unwrap());
        let w = t.window_json((-2, 5), (0, 3)).unwrap();
        let text = serde_json::to_string(&w).unwrap();
        assert!(text.starts_with("{\"omega\":["));
        let back: WindowJson = serde_json::from_str(&text).unwrap();
        let t2 = Tiling::from_window_json(&back).unwrap();
        for m in -2..=5 {
            for n in 0..=3 {
                assert_eq!(t.tau_at(m, n).unwrap(), t2.tau_at(m, n).unwrap());
            }
        }
    }

    fn signs(n: usize) -> impl Strategy<Value = Vec<i8>> {
        prop::collection::vec(prop::sample::select(vec![1i8, -1]), n)
    }

    proptest! {
        #[test]
        fn product_condition_iff_factorization(rows in prop::collection::vec(signs(5), 5), om in signs(5), et in signs(5), use_product in any::<bool>()) {
            let grid: Vec<Vec<i8>> = if use_product {
                om.iter().map(|&a| et.iter().map(|&b| a * b).collect()).collect()
            } else {
                rows
            };
            prop_assert_eq!(satisfies_product_condition(&grid), factor_tiling(&grid).is_some());
        }

        #[test]
        fn non_kept_sites_have_exactly_one_class(om in signs(40), et in signs(40), m in 12i64..28, n in 12i64..28, d in 0usize..4) {
            let t = Tiling::new(SeqWindow::explicit(0, om).unwrap(), SeqWindow::explicit(0, et).unwrap());
            let v = Direction::ALL[d];
            prop_assume!(!t.is_kept_site(m, n).unwrap());
            match classify_site(&t, (m, n), v, 40) {
                // the curve may leave the finite window before reaching K̄
                Err(Error::Window { .. }) | Err(Error::CapExceeded { .. }) => {}
                Err(e) => prop_assert!(false, "{}", e),
                Ok(SiteClass::Loop4) => prop_assert_eq!(curve_period(&t, (m, n), v, 4).unwrap(), Some(4)),
                Ok(_) => {
                    // statement (3): box curves reach K̄ both ways and are not 4-loops
                    prop_assert!(!c4_is_identity(&t, (m, n), v).unwrap());
                }
            }
        }

        #[test]
        fn corner_percolation(om in signs(12), et in signs(12)) {
            let t = Tiling::new(SeqWindow::explicit(0, om).unwrap(), SeqWindow::explicit(0, et).unwrap());
            for m in 0..11 { for n in 0..11 {
                let p = t.tau_at(m,n).unwrap() * t.tau_at(m+1,n).unwrap() * t.tau_at(m,n+1).unwrap() * t.tau_at(m+1,n+1).unwrap();
                prop_assert_eq!(p, 1);
            }}
        }

        #[test]
        fn curves_alternate_axis(om in signs(20), et in signs(20), d in 0usize..4) {
            let t = Tiling::new(SeqWindow::explicit(0, om).unwrap(), SeqWindow::explicit(0, et).unwrap());
            let mut cur = ((10, 10), Direction::ALL[d]);
            for _ in 0..6 {
                let next = curve_follow(&t, cur.0, cur.1).unwrap();
                prop_assert_ne!(next.1.is_horizontal(), cur.1.is_horizontal());
                cur = next;
            }
        }
    }
}
