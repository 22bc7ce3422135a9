//! Command-line front end. Every command is a pure function of a resolved
//! [`RunConfig`] returning the text it emits; [`run`] handles argument
//! parsing, config files, output files and exit codes.
//!
//! Exit codes: 0 ok, 1 property failure, 2 usage error, 3 resource cap.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cocycle::{accumulate, ns_limit, scaling_check, CocycleRun};
use crate::error::{Error, Result};
use crate::numerics::Scalar;
use crate::params::{decay_schedule, param_from_itinerary, understandable_itinerary, Itinerary};
use crate::pet::{self, Direction, LiftState};
use crate::symbolic::{code_rotation, collapse, sigma_hat};
use crate::tiling::{self, kept_set, SeqWindow, SvgStyle, Tiling, Viewport, WindowJson};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Bumped whenever a CSV or JSON layout changes.
pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PROPERTY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CAP: i32 = 3;

const FIXED_POINT: &str = "(2-1*sqrt(2))/2";

#[derive(Parser, Debug)]
#[command(name = "pet-renorm", version, about = "Rectangle exchange maps, Truchet tilings and their renormalization")]
pub struct Cli {
    /// JSON config file; flags given on the command line take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Tiling output.
    Tile {
        #[command(subcommand)]
        action: TileAction,
    },
    /// Cocycle table ν(O_{k+1}) along the parameter orbit.
    Measure(RunConfig),
    /// Monte Carlo census of periodic points.
    McPeriodic(RunConfig),
    /// Property suite with a pass/fail report.
    Verify(RunConfig),
    /// Understandable itinerary with a certified lower bound on the non-periodic measure.
    ConstructSmallMeasure(RunConfig),
    /// ν(O_{depth+1}) over a grid of parameter pairs.
    Sweep(RunConfig),
    /// Exact orbit dump.
    Orbit(RunConfig),
}

#[derive(Subcommand, Debug)]
pub enum TileAction {
    /// Render a window of the tiling as SVG (or dump it as window JSON).
    Render(RunConfig),
}

/// Every option of every command. Unset fields fall back to the config file,
/// then to per-command defaults.
#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub beta: Option<String>,
    /// Itinerary pair file `{"alpha": {...}, "beta": {...}}`.
    #[arg(long)]
    pub itinerary: Option<PathBuf>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// `WxH`.
    #[arg(long)]
    pub window: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Window JSON with explicit sequences.
    #[arg(long)]
    pub window_json: Option<PathBuf>,
    /// `0` or `1`.
    #[arg(long)]
    pub renormalize: Option<u8>,
    /// Lower-left lattice site `m,n` of the rendered window.
    #[arg(long, allow_hyphen_values = true)]
    pub origin: Option<String>,
    #[arg(long)]
    pub x: Option<String>,
    #[arg(long)]
    pub y: Option<String>,
    /// `E`, `W`, `N`, `S` or `a,b`.
    #[arg(long, allow_hyphen_values = true)]
    pub direction: Option<String>,
    #[arg(long)]
    pub tile_px: Option<u32>,
    #[arg(long)]
    pub eta: Option<String>,
    #[arg(long)]
    pub stages: Option<usize>,
    #[arg(long)]
    pub k_cap: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
    /// `all`, `renormalization`, `return-time`, `collapse`, `rotation-collapse`,
    /// `return-formulas`, `scaling`, `site-classes`.
    #[arg(long)]
    pub property: Option<String>,
    /// Write the certificate here (construct-small-measure).
    #[arg(long)]
    pub certificate: Option<PathBuf>,
    /// Mutation smoke test for `verify`: `curve-sign`.
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

macro_rules! merge_fields {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RunConfig {
    /// Fill fields unset on the command line from `file`.
    pub fn merged_with(mut self, file: &RunConfig) -> RunConfig {
        merge_fields!(
            self, file, alpha, beta, itinerary, depth, samples, seed, max_steps, window, out, format, workers,
            window_json, renormalize, origin, x, y, direction, tile_px, eta, stages, k_cap, grid, property,
            certificate, inject_fault
        );
        self
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("config file: {e}")))
    }

    /// SHA-256 of the canonical JSON form of the resolved config. The worker
    /// count is left out: it never changes results.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&RunConfig { workers: None, ..self.clone() }).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn scalar(field: &Option<String>, default: &str, name: &str) -> Result<Scalar> {
        field
            .as_deref()
            .unwrap_or(default)
            .parse()
            .map_err(|e: Error| Error::Parse(format!("--{name}: {e}")))
    }

    fn alpha(&self) -> Result<Scalar> {
        RunConfig::scalar(&self.alpha, FIXED_POINT, "alpha")
    }

    fn beta(&self) -> Result<Scalar> {
        RunConfig::scalar(&self.beta, FIXED_POINT, "beta")
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn format(&self, default: &str, allowed: &[&str]) -> Result<String> {
        let f = self.format.clone().unwrap_or_else(|| default.to_string());
        if !allowed.contains(&f.as_str()) {
            return Err(Error::Parse(format!("--format {f} is not one of {allowed:?}")));
        }
        Ok(f)
    }

    fn window_size(&self, default: (u32, u32)) -> Result<(u32, u32)> {
        match &self.window {
            None => Ok(default),
            Some(w) => {
                let (a, b) = w
                    .split_once(['x', 'X'])
                    .ok_or_else(|| Error::Parse(format!("--window {w:?} must look like WxH")))?;
                let parse = |s: &str| s.trim().parse::<u32>().map_err(|_| Error::Parse(format!("--window {w:?}")));
                let (a, b) = (parse(a)?, parse(b)?);
                if a == 0 || b == 0 {
                    return Err(Error::Parse("--window dimensions must be positive".into()));
                }
                Ok((a, b))
            }
        }
    }

    fn origin(&self) -> Result<Option<(i64, i64)>> {
        self.origin
            .as_deref()
            .map(|s| {
                let (a, b) = s.split_once(',').ok_or_else(|| Error::Parse(format!("--origin {s:?} must be m,n")))?;
                let p = |t: &str| t.trim().parse::<i64>().map_err(|_| Error::Parse(format!("--origin {s:?}")));
                Ok((p(a)?, p(b)?))
            })
            .transpose()
    }
}

pub fn parse_direction(s: &str) -> Result<Direction> {
    match s.trim() {
        "E" | "e" | "east" => Ok(Direction::East),
        "W" | "w" | "west" => Ok(Direction::West),
        "N" | "n" | "north" => Ok(Direction::North),
        "S" | "s" | "south" => Ok(Direction::South),
        other => {
            let t = other.trim_start_matches('(').trim_end_matches(')');
            let (a, b) = t.split_once(',').ok_or_else(|| Error::Parse(format!("bad direction {s:?}")))?;
            let p = |u: &str| u.trim().parse::<i8>().map_err(|_| Error::Parse(format!("bad direction {s:?}")));
            Direction::from_components(p(a)?, p(b)?).ok_or_else(|| Error::Parse(format!("bad direction {s:?}")))
        }
    }
}

/// Itinerary pair file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItineraryPair {
    pub alpha: Itinerary,
    pub beta: Itinerary,
}

/// Parameters as used by a command, with the enclosure width when they come
/// from an itinerary prefix.
#[derive(Clone, Debug)]
pub struct ResolvedParams {
    pub alpha: Scalar,
    pub beta: Scalar,
    pub width: Option<(Scalar, Scalar)>,
}

fn read_text(p: &Path) -> Result<String> {
    fs::read_to_string(p).map_err(|e| Error::Parse(format!("cannot read {}: {e}", p.display())))
}

fn resolve_params(cfg: &RunConfig) -> Result<ResolvedParams> {
    if let Some(path) = &cfg.itinerary {
        if cfg.alpha.is_some() || cfg.beta.is_some() {
            return Err(Error::Parse("--itinerary excludes --alpha/--beta".into()));
        }
        let pair: ItineraryPair = serde_json::from_str(&read_text(path)?)
            .map_err(|e| Error::Parse(format!("itinerary file: {e}")))?;
        let ea = param_from_itinerary(&pair.alpha)?;
        let eb = param_from_itinerary(&pair.beta)?;
        return Ok(ResolvedParams { width: Some((ea.width(), eb.width())), alpha: ea.midpoint, beta: eb.midpoint });
    }
    Ok(ResolvedParams { alpha: cfg.alpha()?, beta: cfg.beta()?, width: None })
}

/// Report header shared by every command.
pub fn header(command: &str, cfg: &RunConfig) -> Value {
    json!({
        "tool": "pet-renorm",
        "version": VERSION,
        "schema": SCHEMA_VERSION,
        "command": command,
        "config_hash": cfg.hash(),
        "seed": cfg.seed(),
    })
}

fn csv_header_line(command: &str, cfg: &RunConfig) -> String {
    format!(
        "# pet-renorm {VERSION} schema={SCHEMA_VERSION} command={command} config={} seed={}\n",
        cfg.hash(),
        cfg.seed()
    )
}

fn progress(msg: &str) {
    eprintln!("[pet-renorm] {msg}");
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json");
    s.push('\n');
    s
}

/// Output of one command: the primary text plus optional side files.
#[derive(Debug, Default)]
pub struct Output {
    pub text: String,
    pub extra: Vec<(PathBuf, String)>,
    /// Some property failed; exit code 1.
    pub failed: bool,
}

impl Output {
    fn text(text: String) -> Output {
        Output { text, ..Output::default() }
    }
}

// ---------------------------------------------------------------- tile render

fn tiling_source(cfg: &RunConfig) -> Result<(Tiling, Option<Viewport>)> {
    if let Some(path) = &cfg.window_json {
        let w: WindowJson = serde_json::from_str(&read_text(path)?)
            .map_err(|e| Error::Parse(format!("window json: {e}")))?;
        let view = Viewport { m_lo: w.base[0], n_lo: w.base[1], width: w.omega.len() as u32, height: w.eta.len() as u32 };
        return Ok((Tiling::from_window_json(&w)?, Some(view)));
    }
    let alpha = cfg.alpha()?;
    let beta = cfg.beta()?;
    let x = RunConfig::scalar(&cfg.x, "0", "x")?;
    let y = RunConfig::scalar(&cfg.y, "0", "y")?;
    Ok((Tiling::rotation(&alpha, &x, &beta, &y), None))
}

/// Renormalized tiling large enough to cover a `w×h` window at the origin.
fn renormalized_for_view(t: &Tiling, explicit: Option<Viewport>, w: u32, h: u32) -> Result<Tiling> {
    if let Some(v) = explicit {
        // kept-ness needs a neighbour on each side
        let m = (v.m_lo + 1, v.m_lo + v.width as i64 - 2);
        let n = (v.n_lo + 1, v.n_lo + v.height as i64 - 2);
        return tiling::renormalize_tiling(t, m, n);
    }
    let mut span = 4 * (w.max(h) as i64 + 4);
    loop {
        let r = tiling::renormalize_tiling(t, (-span, span), (-span, span))?;
        let covers = |s: &SeqWindow, len: u32| s.bounds().is_some_and(|(_, hi)| hi >= len as i64 - 1);
        if covers(&r.omega, w) && covers(&r.eta, h) {
            return Ok(r);
        }
        if span > 1 << 22 {
            return Err(Error::CapExceeded { what: "renormalization window".into(), cap: span as u64 });
        }
        span *= 2;
    }
}

pub fn cmd_tile_render(cfg: &RunConfig) -> Result<Output> {
    let format = cfg.format("svg", &["svg", "json"])?;
    let (mut t, explicit) = tiling_source(cfg)?;
    let (w, h) = cfg.window_size(explicit.map(|v| (v.width, v.height)).unwrap_or((30, 15)))?;
    let renorm = match cfg.renormalize.unwrap_or(0) {
        0 => false,
        1 => true,
        other => return Err(Error::Parse(format!("--renormalize {other} must be 0 or 1"))),
    };
    let mut origin = cfg.origin()?.or(explicit.map(|v| (v.m_lo, v.n_lo))).unwrap_or((0, 0));
    if renorm {
        t = renormalized_for_view(&t, explicit, w, h)?;
        origin = cfg.origin()?.unwrap_or((0, 0));
    }
    let view = Viewport { m_lo: origin.0, n_lo: origin.1, width: w, height: h };
    let text = if format == "svg" {
        let style = SvgStyle { tile_px: cfg.tile_px.unwrap_or(20), ..SvgStyle::default() };
        tiling::render_svg(&t, view, &style)?
    } else {
        let wj = t.window_json((view.m_lo, view.m_lo + w as i64 - 1), (view.n_lo, view.n_lo + h as i64 - 1))?;
        let mut s = serde_json::to_string(&wj).expect("json");
        s.push('\n');
        s
    };
    Ok(Output::text(text))
}

// -------------------------------------------------------------------- measure

pub const MEASURE_CSV_COLUMNS: &str =
    "k,alpha_k,beta_k,d_k,nu_O_k_plus_1,alpha_k_decimal,beta_k_decimal,d_k_decimal,nu_O_k_plus_1_decimal";

/// Cocycle table in exact text scalars plus 15-digit decimals.
pub fn cocycle_csv(run: &CocycleRun) -> String {
    let mut out = String::from(MEASURE_CSV_COLUMNS);
    out.push('\n');
    for s in &run.states {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            s.k,
            s.alpha_k,
            s.beta_k,
            s.d_k,
            s.nu,
            s.alpha_k.to_decimal(15),
            s.beta_k.to_decimal(15),
            s.d_k.to_decimal(15),
            s.nu.to_decimal(15)
        ));
    }
    if let Some(k) = run.boundary_at {
        out.push_str(&format!("# boundary: parameter orbit reached 1/2 at k={k}; table truncated\n"));
    }
    out
}

pub fn cmd_measure(cfg: &RunConfig) -> Result<Output> {
    let format = cfg.format("csv", &["csv", "json"])?;
    let p = resolve_params(cfg)?;
    let depth = cfg.depth.unwrap_or(30);
    progress(&format!("accumulating cocycle to depth {depth}"));
    let run = accumulate(&p.alpha, &p.beta, depth)?;
    let limit = ns_limit(&p.alpha, &p.beta, depth, &Scalar::ratio(1, 1_000_000))?;
    let last = run.states.last().expect("depth 0 row");
    let summary = json!({
        "header": header("measure", cfg),
        "alpha": p.alpha,
        "beta": p.beta,
        "enclosure_width": p.width.as_ref().map(|(a, b)| json!({"alpha": a.to_decimal(15), "beta": b.to_decimal(15)})),
        "depth": depth,
        "rows": run.states.len(),
        "final_k": last.k,
        "final_nu": last.nu,
        "final_nu_decimal": last.nu.to_decimal(15),
        "boundary_at": run.boundary_at,
        "ns_limit": limit,
    });
    if format == "json" {
        let rows: Vec<Value> = run
            .states
            .iter()
            .map(|s| {
                json!({"k": s.k, "alpha_k": s.alpha_k, "beta_k": s.beta_k, "d_k": s.d_k, "nu": s.nu,
                       "nu_decimal": s.nu.to_decimal(15)})
            })
            .collect();
        let mut v = summary;
        v["table"] = Value::Array(rows);
        return Ok(Output::text(pretty(&v)));
    }
    let mut text = csv_header_line("measure", cfg);
    if let Some((wa, wb)) = &p.width {
        text.push_str(&format!("# enclosure_width alpha={} beta={}\n", wa.to_decimal(15), wb.to_decimal(15)));
    }
    text.push_str(&cocycle_csv(&run));
    let mut out = Output::text(text);
    if let Some(path) = &cfg.out {
        out.extra.push((path.with_extension("summary.json"), pretty(&summary)));
    }
    Ok(out)
}

// ---------------------------------------------------------------- mc-periodic

pub fn cmd_mc_periodic(cfg: &RunConfig) -> Result<Output> {
    cfg.format("json", &["json"])?;
    let alpha = cfg.alpha()?;
    let beta = cfg.beta()?;
    let samples = cfg.samples.unwrap_or(100_000);
    let max_steps = cfg.max_steps.unwrap_or(1_000);
    progress(&format!("sampling {samples} states, period cap {max_steps}"));
    let rep = pet::periodic_measure_mc(&alpha, &beta, samples, max_steps, cfg.seed())?;
    let four_ab = (&alpha * &beta).mul_int(4);
    let v = json!({
        "header": header("mc-periodic", cfg),
        "report": rep,
        "four_alpha_beta": four_ab.to_decimal(15),
        "period4_z_score": if rep.stderr_period4 > 0.0 {
            (rep.fraction_period4 - four_ab.to_f64()) / rep.stderr_period4
        } else { 0.0 },
    });
    Ok(Output::text(pretty(&v)))
}

// --------------------------------------------------------------------- verify

#[derive(Clone, Debug, Serialize)]
pub struct PropertyResult {
    pub property: String,
    pub passed: bool,
    pub checks: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Value>,
}

impl PropertyResult {
    fn new(property: &str, checks: u64, counterexample: Option<Value>) -> PropertyResult {
        PropertyResult { property: property.into(), passed: counterexample.is_none(), checks, counterexample }
    }
}

/// `C` with the sign of the displacement flipped; only used to show that the
/// suite detects a broken curve map.
fn faulty_follow(t: &Tiling, site: (i64, i64), v: Direction) -> Result<tiling::CurveState> {
    let s = t.tau_at(site.0, site.1)?;
    let (a, b) = v.components();
    Ok(((site.0 - (s * b) as i64, site.1 - (s * a) as i64), v.turn(s)))
}

/// Return-time law on rotation-coded windows: first return to `K̄` against
/// `2E − 1`, with `curve` standing in for `C`.
pub fn check_return_time_law<F>(windows: usize, sites_per_window: usize, seed: u64, curve: F) -> PropertyResult
where
    F: Fn(&Tiling, (i64, i64), Direction) -> Result<tiling::CurveState> + Sync,
{
    let results: Vec<(u64, Option<Value>)> = (0..windows)
        .into_par_iter()
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(w as u64);
            let alpha = Scalar::ratio(rng.random_range(1..49_999), 100_000);
            let beta = Scalar::ratio(rng.random_range(1..49_999), 100_000);
            let x = Scalar::ratio(rng.random_range(0..1_000_003), 1_000_003);
            let y = Scalar::ratio(rng.random_range(0..1_000_003), 1_000_003);
            let span = 400i64;
            let t = match Tiling::rotation(&alpha, &x, &beta, &y).materialize((-span - 1, span + 1), (-span - 1, span + 1)) {
                Ok(t) => t,
                Err(e) => return (0, Some(json!({"error": e.to_string()}))),
            };
            let km = kept_set(&t.omega, -span / 4, span / 4).unwrap_or_default();
            let kn = kept_set(&t.eta, -span / 4, span / 4).unwrap_or_default();
            let mut checks = 0;
            if km.is_empty() || kn.is_empty() {
                return (0, None);
            }
            for _ in 0..sites_per_window {
                let site = (km[rng.random_range(0..km.len())], kn[rng.random_range(0..kn.len())]);
                let v = Direction::ALL[rng.random_range(0..4)];
                match return_and_excision(&t, site, v, &curve) {
                    Ok(None) => checks += 1,
                    // window exhausted: a long box ran past the materialized region
                    Err(Error::Window { .. }) => {}
                    Ok(Some(bad)) => return (checks, Some(bad)),
                    Err(e) => return (checks, Some(json!({"error": e.to_string()}))),
                }
            }
            (checks, None)
        })
        .collect();
    let checks = results.iter().map(|r| r.0).sum();
    let bad = results.into_iter().find_map(|r| r.1);
    PropertyResult::new("return-time", checks, bad)
}

fn return_and_excision<F>(t: &Tiling, site: (i64, i64), v: Direction, curve: &F) -> Result<Option<Value>>
where
    F: Fn(&Tiling, (i64, i64), Direction) -> Result<tiling::CurveState>,
{
    let mut cur = (site, v);
    let mut r = 0u64;
    loop {
        cur = curve(t, cur.0, cur.1)?;
        r += 1;
        if t.is_kept_site(cur.0 .0, cur.0 .1)? {
            break;
        }
        if r > 100_000 {
            return Ok(Some(json!({"site": site, "v": v, "error": "no return"})));
        }
    }
    let (wa, wb) = v.turn(t.tau_at(site.0, site.1)?).components();
    let mut e = 0i64;
    loop {
        e += 1;
        if t.is_kept_site(site.0 + e * wa as i64, site.1 + e * wb as i64)? {
            break;
        }
    }
    Ok((r as i64 != 2 * e - 1).then(|| json!({"site": site, "v": v, "return_time": r, "excision": e})))
}

/// `c∘σ̂ = σ∘c` on rotation-coded sequences with `0` kept.
pub fn check_collapse_shift(count: usize, seed: u64) -> PropertyResult {
    let bad = (0..count).into_par_iter().find_map_first(|i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let alpha = Scalar::ratio(rng.random_range(1..49_999), 100_000);
        let w = Scalar::one() - alpha.mul_int(2);
        // ς⁻¹(kept at 0) = [α, 1−α)
        let x = &alpha + &(&w * &Scalar::ratio(rng.random_range(0..1_000_003), 1_000_003));
        let s = code_rotation(&alpha, &x);
        let res = (|| -> Result<bool> {
            let lhs = collapse(&sigma_hat(&s)?, -4, 4)?.values(-4, 4)?;
            let rhs = collapse(&s, -3, 5)?.values(-3, 5)?;
            Ok(lhs == rhs)
        })();
        match res {
            Ok(true) => None,
            Ok(false) => Some(json!({"alpha": alpha, "x": x})),
            Err(e) => Some(json!({"alpha": alpha, "x": x, "error": e.to_string()})),
        }
    });
    PropertyResult::new("collapse", count as u64, bad)
}

/// `c∘ς_α(x) = ς_{f(α)}∘ψ_α(x)`.
pub fn check_rotation_collapse(count: usize, seed: u64) -> PropertyResult {
    let bad = (0..count).into_par_iter().find_map_first(|i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        rng.set_stream(i as u64);
        let alpha = Scalar::ratio(rng.random_range(1..49_999), 100_000);
        let w = Scalar::one() - alpha.mul_int(2);
        let x = &alpha + &(&w * &Scalar::ratio(rng.random_range(0..1_000_003), 1_000_003));
        let res = (|| -> Result<bool> {
            let (fa, _) = crate::params::f_step(&alpha)?;
            let lhs = collapse(&code_rotation(&alpha, &x), -6, 6)?.values(-6, 6)?;
            let rhs = code_rotation(&fa, &pet::psi_dilation(&alpha, &x)).values(-6, 6)?;
            Ok(lhs == rhs)
        })();
        match res {
            Ok(true) => None,
            Ok(false) => Some(json!({"alpha": alpha, "x": x})),
            Err(e) => Some(json!({"alpha": alpha, "x": x, "error": e.to_string()})),
        }
    });
    PropertyResult::new("rotation-collapse", count as u64, bad)
}

/// Closed-form return times of rotation codings against brute force.
pub fn check_return_formulas(count: usize, seed: u64) -> PropertyResult {
    use crate::symbolic::{return_times, rot_ret_prediction, rrt_closed_form};
    let bad = (0..count).into_par_iter().find_map_first(|i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e7);
        rng.set_stream(i as u64);
        let alpha = Scalar::ratio(rng.random_range(1..49_999), 100_000);
        let w = Scalar::one() - alpha.mul_int(2);
        let x = &alpha + &(&w * &Scalar::ratio(rng.random_range(0..1_000_003), 1_000_003));
        let res = (|| -> Result<bool> {
            let s = code_rotation(&alpha, &x);
            let brute = return_times(&s)?;
            let c = collapse(&s, -2, 2)?;
            Ok(brute == rrt_closed_form(&alpha, &x)? && brute == rot_ret_prediction(&alpha, &c)?)
        })();
        match res {
            Ok(true) => None,
            Ok(false) => Some(json!({"alpha": alpha, "x": x})),
            Err(e) => Some(json!({"alpha": alpha, "x": x, "error": e.to_string()})),
        }
    });
    PropertyResult::new("return-formulas", count as u64, bad)
}

/// Scaling inequality on the `grid × grid` lattice `(0.025, 0.475)²`.
pub fn check_scaling_grid(grid: usize) -> PropertyResult {
    let pts: Vec<(usize, usize)> = (0..grid).flat_map(|i| (0..grid).map(move |j| (i, j))).collect();
    let coord = |i: usize| -> Scalar {
        if grid == 1 {
            return Scalar::ratio(1, 4);
        }
        // 0.025 + i·0.45/(grid−1)
        Scalar::ratio(1, 40) + Scalar::ratio(9 * i as i64, 20 * (grid as i64 - 1))
    };
    let bad = pts.par_iter().find_map_first(|&(i, j)| {
        let (g, d) = (coord(i), coord(j));
        match scaling_check(&g, &d) {
            Ok(c) if c.holds => None,
            Ok(c) => Some(json!({"gamma": g, "delta": d, "min_slack": c.min_slack})),
            Err(e) => Some(json!({"gamma": g, "delta": d, "error": e.to_string()})),
        }
    });
    PropertyResult::new("scaling", pts.len() as u64, bad)
}

/// Every non-kept site is exactly one of 4-loop / horizontal box / vertical box.
pub fn check_site_classes(windows: usize, seed: u64) -> PropertyResult {
    let results: Vec<(u64, Option<Value>)> = (0..windows)
        .into_par_iter()
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc1a55);
            rng.set_stream(w as u64);
            let alpha = Scalar::ratio(rng.random_range(1..49_999), 100_000);
            let beta = Scalar::ratio(rng.random_range(1..49_999), 100_000);
            let x = Scalar::ratio(rng.random_range(0..1_000_003), 1_000_003);
            let y = Scalar::ratio(rng.random_range(0..1_000_003), 1_000_003);
            let t = match Tiling::rotation(&alpha, &x, &beta, &y).materialize((-300, 300), (-300, 300)) {
                Ok(t) => t,
                Err(e) => return (0, Some(json!({"error": e.to_string()}))),
            };
            let mut checks = 0;
            for _ in 0..50 {
                let site = (rng.random_range(-50..50), rng.random_range(-50..50));
                let v = Direction::ALL[rng.random_range(0..4)];
                if t.is_kept_site(site.0, site.1).unwrap_or(true) {
                    continue;
                }
                match tiling::classify_site(&t, site, v, 10_000) {
                    Ok(_) => checks += 1,
                    Err(Error::Window { .. }) => {}
                    Err(e) => return (checks, Some(json!({"alpha": alpha, "beta": beta, "site": site, "v": v, "error": e.to_string()}))),
                }
            }
            (checks, None)
        })
        .collect();
    let checks = results.iter().map(|r| r.0).sum();
    PropertyResult::new("site-classes", checks, results.into_iter().find_map(|r| r.1))
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Output> {
    cfg.format("json", &["json"])?;
    let property = cfg.property.clone().unwrap_or_else(|| "all".into());
    const ALL: [&str; 7] =
        ["renormalization", "return-time", "collapse", "rotation-collapse", "return-formulas", "scaling", "site-classes"];
    let selected: Vec<&str> = if property == "all" {
        ALL.to_vec()
    } else if ALL.contains(&property.as_str()) {
        vec![property.as_str()]
    } else {
        return Err(Error::Parse(format!("unknown property {property:?}; expected all or one of {ALL:?}")));
    };
    let fault = match cfg.inject_fault.as_deref() {
        None => false,
        Some("curve-sign") => true,
        Some(other) => return Err(Error::Parse(format!("unknown fault {other:?}"))),
    };
    let seed = cfg.seed();
    let samples = cfg.samples.unwrap_or(1_000);
    let mut results = Vec::new();
    for p in selected {
        progress(&format!("checking {p}"));
        let r = match p {
            "renormalization" => {
                let rep = pet::verify_renormalization(&cfg.alpha()?, &cfg.beta()?, samples.min(10_000), seed)?;
                let bad = (!rep.passed()).then(|| json!(rep.mismatches.first()));
                PropertyResult::new(p, rep.samples as u64, bad)
            }
            "return-time" => {
                let per = samples.div_ceil(20).max(1);
                if fault {
                    check_return_time_law(20, per, seed, faulty_follow)
                } else {
                    check_return_time_law(20, per, seed, tiling::curve_follow)
                }
            }
            "collapse" => check_collapse_shift(samples, seed),
            "rotation-collapse" => check_rotation_collapse(samples, seed),
            "return-formulas" => check_return_formulas(samples, seed),
            "scaling" => check_scaling_grid(cfg.grid.unwrap_or(20)),
            "site-classes" => check_site_classes(samples.div_ceil(50).max(1), seed),
            _ => unreachable!(),
        };
        results.push(r);
    }
    let failed = results.iter().any(|r| !r.passed);
    let v = json!({
        "header": header("verify", cfg),
        "passed": !failed,
        "results": results,
    });
    Ok(Output { text: pretty(&v), extra: Vec::new(), failed })
}

// ---------------------------------------------------- construct-small-measure

#[derive(Clone, Debug, Serialize)]
pub struct SmallMeasureCertificate {
    pub eta: Scalar,
    pub k_schedule: Vec<usize>,
    /// `a_0 = 0, a_{j+1} = a_j + k_j + 1`.
    pub marks: Vec<usize>,
    pub epsilons: Vec<Scalar>,
    pub stages: Vec<crate::params::StageCertificate>,
    pub prefix_product: Scalar,
    pub ns_lower_bound: Scalar,
    pub ns_lower_bound_decimal: String,
    pub itinerary: ItineraryPair,
    /// Rational parameters obtained from the itinerary prefix; their `f`
    /// orbits follow every listed block.
    pub alpha_midpoint: Scalar,
    pub beta_midpoint: Scalar,
}

pub fn construct_small_measure(eta: &Scalar, stages: usize, k_cap: usize) -> Result<SmallMeasureCertificate> {
    let sched = decay_schedule(eta, stages, k_cap)?;
    let und = understandable_itinerary(&sched.k_schedule)?;
    let ea = param_from_itinerary(&und.alpha)?;
    let eb = param_from_itinerary(&und.beta)?;
    Ok(SmallMeasureCertificate {
        eta: eta.clone(),
        k_schedule: sched.k_schedule.clone(),
        marks: und.marks.clone(),
        epsilons: sched.epsilons.clone(),
        stages: sched.stages.clone(),
        prefix_product: sched.prefix_product.clone(),
        ns_lower_bound_decimal: sched.ns_lower_bound.to_decimal(15),
        ns_lower_bound: sched.ns_lower_bound,
        itinerary: ItineraryPair { alpha: und.alpha, beta: und.beta },
        alpha_midpoint: ea.midpoint,
        beta_midpoint: eb.midpoint,
    })
}

/// `ν(O_{a_j+1}) ≥ ∏_{i<j}(1−ε_i)` along the midpoint parameters, for every
/// mark `a_j` with `j ≤ last_stage`.
pub fn cross_check_marks(cert: &SmallMeasureCertificate, last_stage: usize) -> Result<Vec<(usize, Scalar, Scalar)>> {
    // stage j certifies ν(O_{a_j+1}) > ∏_{i≤j}(1−ε_i); marks past the last stage are uncertified
    let last = last_stage.min(cert.epsilons.len() - 1);
    let top = cert.marks[last];
    let run = accumulate(&cert.alpha_midpoint, &cert.beta_midpoint, top + 1)?;
    let mut out = Vec::new();
    let mut bound = Scalar::one();
    for j in 0..=last {
        bound = &bound * &(Scalar::one() - &cert.epsilons[j]);
        let k = cert.marks[j];
        let nu = run
            .states
            .get(k)
            .ok_or_else(|| Error::Invariant(format!("cocycle run stopped before k={k}")))?
            .nu
            .clone();
        out.push((k, nu, bound.clone()));
    }
    Ok(out)
}

pub fn cmd_construct_small_measure(cfg: &RunConfig) -> Result<Output> {
    cfg.format("json", &["json"])?;
    let eta = RunConfig::scalar(&cfg.eta, "1/2", "eta")?;
    let stages = cfg.stages.unwrap_or(4);
    let k_cap = cfg.k_cap.unwrap_or(1 << 16);
    progress(&format!("searching block schedule: eta={eta}, {stages} stages"));
    let cert = construct_small_measure(&eta, stages, k_cap)?;
    let itinerary_text = pretty(&serde_json::to_value(&cert.itinerary).expect("json"));
    let v = json!({"header": header("construct-small-measure", cfg), "certificate": cert});
    let mut out = Output::default();
    match (&cfg.out, &cfg.certificate) {
        // --out receives the itinerary file, the certificate goes to stdout or --certificate
        (Some(_), Some(c)) => {
            out.text = itinerary_text;
            out.extra.push((c.clone(), pretty(&v)));
        }
        (Some(_), None) => {
            out.text = itinerary_text;
            print!("{}", pretty(&v));
        }
        (None, Some(c)) => {
            out.text = pretty(&v);
            out.extra.push((c.clone(), pretty(&v)));
        }
        (None, None) => out.text = pretty(&v),
    }
    Ok(out)
}

// ---------------------------------------------------------------------- sweep

pub const SWEEP_CSV_COLUMNS: &str = "i,j,alpha,beta,depth,nu,nu_decimal,boundary_at";

/// Cell midpoints `(2i+1)/(4·grid)` of the uniform grid on `(0,½)`.
pub fn sweep_coordinate(i: usize, grid: usize) -> Scalar {
    Scalar::ratio(2 * i as i64 + 1, 4 * grid as i64)
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Output> {
    cfg.format("csv", &["csv"])?;
    let grid = cfg.grid.unwrap_or(20);
    let depth = cfg.depth.unwrap_or(8);
    let samples = cfg.samples.unwrap_or(0);
    let max_steps = cfg.max_steps.unwrap_or(1_000);
    if grid == 0 {
        return Err(Error::Parse("--grid must be positive".into()));
    }
    progress(&format!("sweeping {grid}x{grid} cells at depth {depth}"));
    let cells: Vec<(usize, usize)> = (0..grid).flat_map(|i| (0..grid).map(move |j| (i, j))).collect();
    let rows: Vec<Result<String>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (sweep_coordinate(i, grid), sweep_coordinate(j, grid));
            let run = accumulate(&a, &b, depth)?;
            let last = run.states.last().expect("row");
            let mut row = format!(
                "{i},{j},{a},{b},{},{},{},{}",
                last.k,
                last.nu,
                last.nu.to_decimal(15),
                run.boundary_at.map(|k| k.to_string()).unwrap_or_default()
            );
            if samples > 0 {
                let seed = cfg.seed().wrapping_add((i * grid + j) as u64);
                let mc = pet::periodic_measure_mc(&a, &b, samples, max_steps, seed)?;
                row.push_str(&format!(",{:.6}", mc.fraction_periodic));
            }
            row.push('\n');
            Ok(row)
        })
        .collect();
    let mut text = csv_header_line("sweep", cfg);
    text.push_str(SWEEP_CSV_COLUMNS);
    if samples > 0 {
        text.push_str(",mc_fraction_periodic");
    }
    text.push('\n');
    for r in rows {
        text.push_str(&r?);
    }
    Ok(Output::text(text))
}

// ---------------------------------------------------------------------- orbit

pub fn cmd_orbit(cfg: &RunConfig) -> Result<Output> {
    cfg.format("csv", &["csv"])?;
    let st = LiftState::new(
        RunConfig::scalar(&cfg.x, "1/3", "x")?,
        RunConfig::scalar(&cfg.y, "1/3", "y")?,
        parse_direction(cfg.direction.as_deref().unwrap_or("E"))?,
    )?;
    let mut text = csv_header_line("orbit", cfg);
    text.push_str(&pet::orbit_csv(&st, &cfg.alpha()?, &cfg.beta()?, cfg.max_steps.unwrap_or(100))?);
    Ok(Output::text(text))
}

// ------------------------------------------------------------------- plumbing

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::CapExceeded { .. } => EXIT_CAP,
        Error::Invariant(_) => EXIT_PROPERTY,
        _ => EXIT_USAGE,
    }
}

fn dispatch(command: &Command, file: &RunConfig) -> Result<(RunConfig, Output)> {
    let (cfg, f): (RunConfig, fn(&RunConfig) -> Result<Output>) = match command {
        Command::Tile { action: TileAction::Render(c) } => (c.clone(), cmd_tile_render),
        Command::Measure(c) => (c.clone(), cmd_measure),
        Command::McPeriodic(c) => (c.clone(), cmd_mc_periodic),
        Command::Verify(c) => (c.clone(), cmd_verify),
        Command::ConstructSmallMeasure(c) => (c.clone(), cmd_construct_small_measure),
        Command::Sweep(c) => (c.clone(), cmd_sweep),
        Command::Orbit(c) => (c.clone(), cmd_orbit),
    };
    let cfg = cfg.merged_with(file);
    let out = match cfg.workers {
        Some(0) => return Err(Error::Parse("--workers must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Domain(format!("worker pool: {e}")))?
            .install(|| f(&cfg))?,
        None => f(&cfg)?,
    };
    Ok((cfg, out))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Domain(format!("cannot write {}: {e}", path.display())))
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let file = match &cli.config {
        None => RunConfig::default(),
        Some(p) => match read_text(p).and_then(|t| RunConfig::from_json(&t)) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        },
    };
    match dispatch(&cli.command, &file) {
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
        Ok((cfg, out)) => {
            let written = match &cfg.out {
                Some(p) => write_file(p, &out.text),
                None => {
                    let mut stdout = std::io::stdout().lock();
                    stdout.write_all(out.text.as_bytes()).map_err(|e| Error::Domain(e.to_string()))
                }
            };
            let written = written.and_then(|_| out.extra.iter().try_for_each(|(p, t)| write_file(p, t)));
            if let Err(e) = written {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
            if out.failed {
                EXIT_PROPERTY
            } else {
                EXIT_OK
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(json: &str) -> RunConfig {
        RunConfig::from_json(json).unwrap()
    }

    #[test]
    fn precedence_flags_over_file() {
        let flags = RunConfig { depth: Some(3), ..RunConfig::default() };
        let file = cfg(r#"{"depth": 9, "seed": 7}"#);
        let m = flags.merged_with(&file);
        assert_eq!((m.depth, m.seed), (Some(3), Some(7)));
        assert!(RunConfig::from_json(r#"{"nope": 1}"#).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = cfg(r#"{"seed": 1}"#);
        assert_eq!(a.hash(), cfg(r#"{"seed": 1}"#).hash());
        assert_ne!(a.hash(), cfg(r#"{"seed": 2}"#).hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn direction_and_window_parsing() {
        assert_eq!(parse_direction("N").unwrap(), Direction::North);
        assert_eq!(parse_direction("(-1,0)").unwrap(), Direction::West);
        assert!(parse_direction("1,1").is_err());
        let c = RunConfig { window: Some("30x15".into()), ..RunConfig::default() };
        assert_eq!(c.window_size((1, 1)).unwrap(), (30, 15));
        let bad = RunConfig { window: Some("30by15".into()), ..RunConfig::default() };
        assert!(bad.window_size((1, 1)).is_err());
    }

    #[test]
    fn measure_depth_zero_is_one_minus_four_ab() {
        let c = cfg(r#"{"alpha": "1/5", "beta": "2/7", "depth": 0}"#);
        let out = cmd_measure(&c).unwrap();
        let rows: Vec<&str> = out.text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], MEASURE_CSV_COLUMNS);
        assert_eq!(rows.len(), 2);
        // 1 − 4·(1/5)(2/7) = 27/35
        assert!(rows[1].starts_with("0,1/5,2/7,1,27/35,"), "{}", rows[1]);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["pet-renorm", "measure", "--alpha", "bogus"]), EXIT_USAGE);
        assert_eq!(run(["pet-renorm", "no-such-command"]), EXIT_USAGE);
        assert_eq!(run(["pet-renorm", "--help"]), EXIT_OK);
        assert_eq!(exit_code(&Error::CapExceeded { what: "x".into(), cap: 1 }), EXIT_CAP);
    }

    #[test]
    fn sweep_rows_and_symmetry() {
        let c = cfg(r#"{"grid": 4, "depth": 3}"#);
        let out = cmd_sweep(&c).unwrap();
        let rows: Vec<Vec<String>> = out
            .text
            .lines()
            .skip(2)
            .map(|l| l.split(',').map(String::from).collect())
            .collect();
        assert_eq!(rows.len(), 16);
        for r in &rows {
            let (i, j): (usize, usize) = (r[0].parse().unwrap(), r[1].parse().unwrap());
            let mirror = &rows[j * 4 + i];
            assert_eq!(r[5], mirror[5]);
        }
        assert_eq!(out.text, cmd_sweep(&c).unwrap().text);
    }

    #[test]
    fn faulty_curve_is_detected() {
        assert!(check_return_time_law(2, 20, 1, tiling::curve_follow).passed);
        assert!(!check_return_time_law(2, 20, 1, faulty_follow).passed);
    }

    #[test]
    fn renormalized_render_matches_library() {
        let c = cfg(r#"{"alpha": "1/5", "beta": "2/7", "x": "0.3", "y": "0.4", "window": "6x5", "renormalize": 1, "format": "json"}"#);
        let out = cmd_tile_render(&c).unwrap();
        let w: WindowJson = serde_json::from_str(&out.text).unwrap();
        let t = Tiling::rotation(&"1/5".parse().unwrap(), &"0.3".parse().unwrap(), &"2/7".parse().unwrap(), &"0.4".parse().unwrap());
        let r = tiling::renormalize_tiling(&t, (-40, 40), (-40, 40)).unwrap();
        assert_eq!(w.omega, r.omega.values(0, 5).unwrap());
        assert_eq!(w.eta, r.eta.values(0, 4).unwrap());
    }
}
