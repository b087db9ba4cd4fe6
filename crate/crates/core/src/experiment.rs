//! Experiment configuration and drivers: convergence sweeps over mesh levels,
//! robustness sweeps in `ν`, and spectrum dumps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::assembly::{assemble_forms, SparseSystem};
use crate::c64;
use crate::convection::{BetaKind, ConvectionField};
use crate::diagnostics::{estimate_constants, ConstantsReport};
use crate::eigensolver::{eigenvalue_order, serialize_c64, solve_oseen, ArnoldiOptions, EigenPair};
use crate::error::{Error, Result};
use crate::mesh::{DiagonalPattern, DomainKind, Mesh};
use crate::postprocess::{filter_spectrum, fit_rate, is_conjugate_pair, is_real, recover_pressure, RateFit, Window};
use crate::spaces::{Family, SpacePair};

/// Shift of the spectral transformation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftSpec {
    /// `0.8 Re λ₁` from a probe on the coarsest level.
    Auto,
    Value(#[serde(serialize_with = "serialize_c64")] c64),
}

impl std::str::FromStr for ShiftSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(ShiftSpec::Auto);
        }
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let num = |t: &str| t.parse::<f64>().map_err(|_| Error::Config(format!("invalid shift '{s}'")));
        let z = match parts.as_slice() {
            [re] => c64::new(num(re)?, 0.0),
            [re, im] => c64::new(num(re)?, num(im)?),
            _ => return Err(Error::Config(format!("invalid shift '{s}'"))),
        };
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Config(format!("invalid shift '{s}'")));
        }
        Ok(ShiftSpec::Value(z))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub domain: DomainKind,
    pub family: Family,
    /// Family index: `RT_k` or `BDM_k`.
    pub degree: usize,
    pub beta: BetaKind,
    pub normalize_beta: bool,
    pub beta_scale: f64,
    pub nu: f64,
    pub levels: Vec<usize>,
    pub nev: usize,
    pub shift: ShiftSpec,
    pub pattern: DiagonalPattern,
    pub seed: u64,
    /// Exponents `j` of the robustness sweep `ν = 2^{-j}`.
    pub nu_exponents: Vec<u32>,
    /// Estimate stability constants on the coarsest level.
    pub constants: bool,
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
    #[serde(skip)]
    pub emit_matrices: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            domain: DomainKind::Square,
            family: Family::Rt,
            degree: 0,
            beta: BetaKind::Beta1,
            normalize_beta: true,
            beta_scale: 1.0,
            nu: 0.5,
            levels: vec![20, 30, 40, 50],
            nev: 4,
            shift: ShiftSpec::Auto,
            pattern: DiagonalPattern::Alternating,
            seed: 0,
            nu_exponents: (0..=8).collect(),
            constants: true,
            out_dir: None,
            emit_matrices: false,
        }
    }
}

fn parse_bool(v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean '{v}'"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).map(|t| parse_num(key, t)).collect()
}

impl ExperimentConfig {
    /// Sets one `key = value` entry. Keys use underscores; dashes are accepted.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        match key.as_str() {
            "domain" => self.domain = v.parse()?,
            "family" => self.family = v.parse()?,
            "degree" => self.degree = parse_num(&key, v)?,
            "beta" => self.beta = v.parse()?,
            "normalize" | "normalize_beta" => self.normalize_beta = parse_bool(v)?,
            "beta_scale" => self.beta_scale = parse_num(&key, v)?,
            "nu" => self.nu = parse_num(&key, v)?,
            "levels" => self.levels = parse_list(&key, v)?,
            "nev" => self.nev = parse_num(&key, v)?,
            "shift" => self.shift = v.parse()?,
            "pattern" => self.pattern = v.parse()?,
            "seed" => self.seed = parse_num(&key, v)?,
            "nu_exponents" => self.nu_exponents = parse_list(&key, v)?,
            "constants" => self.constants = parse_bool(v)?,
            "out_dir" => self.out_dir = Some(PathBuf::from(v)),
            "emit_matrices" => self.emit_matrices = parse_bool(v)?,
            other => return Err(Error::Config(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    /// Defaults, then the optional file, then the overrides in order.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Config("at least one level is required".into()));
        }
        if self.levels[0] < 1 || self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("levels must be strictly increasing and ≥ 1, got {:?}", self.levels)));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::Config(format!("nu must be positive, got {}", self.nu)));
        }
        if self.nev == 0 {
            return Err(Error::Config("nev must be at least 1".into()));
        }
        if !self.beta_scale.is_finite() {
            return Err(Error::Config("beta_scale must be finite".into()));
        }
        crate::spaces::ReferenceElement::new(self.family, self.degree).map_err(|e| Error::Config(format!("{e}")))?;
        Ok(())
    }

    pub fn convection(&self) -> Result<ConvectionField> {
        ConvectionField::new(self.beta, self.domain, self.normalize_beta, self.beta_scale)
    }

    fn arnoldi(&self) -> ArnoldiOptions {
        ArnoldiOptions { seed: self.seed, ..ArnoldiOptions::default() }
    }

    fn space(&self, n: usize) -> Result<SpacePair> {
        let mesh = Arc::new(Mesh::build(self.domain, n, self.pattern)?);
        SpacePair::new(mesh, self.family, self.degree)
    }
}

/// Pressure of the first eigenmode, after normalizing the eigenvector phase.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PressureCheck {
    pub mean: f64,
    pub l2_norm: f64,
}

/// Everything computed on one mesh level.
#[derive(Debug, Clone, Serialize)]
pub struct LevelResult {
    pub level: usize,
    pub n: usize,
    pub h: f64,
    /// `n_sigma + n_u`.
    pub dof: usize,
    /// `n_sigma + n_u + 1`, counting the trace multiplier.
    pub dof_with_multiplier: usize,
    #[serde(serialize_with = "serialize_c64")]
    pub shift: c64,
    pub eigenpairs: Vec<EigenPair>,
    pub pressure: Option<PressureCheck>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrackedValue {
    pub level: usize,
    pub n: usize,
    pub h: f64,
    pub dof: usize,
    #[serde(serialize_with = "serialize_c64")]
    pub lambda: c64,
}

/// One eigenvalue followed across levels.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub eig_index: usize,
    pub levels: Vec<TrackedValue>,
    /// Fit over all levels.
    pub fit: Option<RateFit>,
    /// Fit over the three finest levels, when there are more than three.
    pub fit_last3: Option<RateFit>,
    pub fit_error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRun {
    pub config: ExperimentConfig,
    pub beta_sup: f64,
    pub levels: Vec<LevelResult>,
    pub tracked: Vec<ConvergenceReport>,
    pub constants: Option<ConstantsReport>,
    #[serde(skip)]
    pub systems: Vec<SparseSystem>,
}

/// Extra eigenvalues computed beyond `nev` so that continuation has candidates.
const EXTRA: usize = 2;

fn phase_normalized_real(pair: &EigenPair) -> (Vec<f64>, Vec<f64>) {
    let pivot = pair.u_coeffs.iter().chain(&pair.sigma_coeffs).copied().fold(c64::new(0.0, 0.0), |a, b| {
        if b.norm() > a.norm() {
            b
        } else {
            a
        }
    });
    let rot = if pivot.norm() > 0.0 { pivot.conj() / pivot.norm() } else { c64::new(1.0, 0.0) };
    let sigma = pair.sigma_coeffs.iter().map(|v| (v * rot).re).collect();
    let u = pair.u_coeffs.iter().map(|v| (v * rot).re).collect();
    (sigma, u)
}

fn solve_level(
    cfg: &ExperimentConfig,
    beta: &ConvectionField,
    level: usize,
    n: usize,
    shift: c64,
    nev: usize,
) -> Result<(LevelResult, SparseSystem, SpacePair)> {
    let space = cfg.space(n)?;
    let sys = assemble_forms(&space, beta, cfg.nu)?;
    let mut pairs = solve_oseen(&sys, shift, nev, &cfg.arnoldi())?;
    pairs.sort_by(|a, b| eigenvalue_order(&a.lambda, &b.lambda));
    let pressure = match pairs.first() {
        Some(p) => {
            let (s, u) = phase_normalized_real(p);
            let pf = recover_pressure(&space, &s, &u, beta)?;
            Some(PressureCheck { mean: pf.mean, l2_norm: pf.l2_norm })
        }
        None => None,
    };
    let result = LevelResult {
        level,
        n,
        h: space.mesh.h_max,
        dof: space.n_sigma + space.n_u,
        dof_with_multiplier: space.n_sigma + space.n_u + 1,
        shift,
        eigenpairs: pairs,
        pressure,
    };
    Ok((result, sys, space))
}

/// Resolves the shift, probing the coarsest level when automatic.
pub fn resolve_shift(cfg: &ExperimentConfig, beta: &ConvectionField) -> Result<c64> {
    match cfg.shift {
        ShiftSpec::Value(z) => Ok(z),
        ShiftSpec::Auto => {
            let n = cfg.levels[0];
            let (probe, _, _) = solve_level(cfg, beta, 0, n, c64::new(0.0, 0.0), 1)
                .map_err(|e| Error::AtLevel { n, source: Box::new(e) })?;
            let re = probe.eigenpairs.first().map(|p| p.lambda.re).unwrap_or(0.0);
            Ok(c64::new(0.8 * re.max(0.0), 0.0))
        }
    }
}

/// Continuation of the coarsest level's first `nev` eigenvalues: at each level
/// the tracked values are assigned to distinct candidates minimizing the total
/// distance. Pairing a real value with a non-real candidate (or vice versa)
/// carries a large penalty, so it only happens when nothing else is left.
pub fn track_eigenvalues(levels: &[Vec<c64>], nev: usize) -> Vec<Vec<c64>> {
    let Some(first) = levels.first() else {
        return Vec::new();
    };
    let mut tracks: Vec<Vec<c64>> = first.iter().take(nev).map(|z| vec![*z]).collect();
    for cands in &levels[1..] {
        let last: Vec<c64> = tracks.iter().map(|t| *t.last().unwrap()).collect();
        let scale = last.iter().chain(cands).map(|z| z.norm()).fold(1.0, f64::max);
        let cost = |i: usize, j: usize| {
            let d = (cands[j] - last[i]).norm();
            if is_real(cands[j]) == is_real(last[i]) {
                d
            } else {
                d + 1e3 * scale
            }
        };
        let assignment = if cands.len() <= MAX_EXACT_CANDIDATES {
            assign_exact(last.len(), cands.len(), cost)
        } else {
            assign_greedy(last.len(), cands.len(), cost)
        };
        for (track, j) in tracks.iter_mut().zip(assignment) {
            if let Some(j) = j {
                track.push(cands[j]);
            }
        }
    }
    tracks
}

/// Above this many candidates the assignment falls back to greedy matching.
const MAX_EXACT_CANDIDATES: usize = 16;

/// Minimum-cost injective assignment of `n` rows to `m` columns by dynamic
/// programming over subsets of used columns. Rows beyond `m` stay unassigned.
fn assign_exact(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<Option<usize>> {
    let rows = n.min(m);
    let size = 1usize << m;
    let mut best = vec![f64::INFINITY; size];
    let mut choice = vec![usize::MAX; size];
    best[0] = 0.0;
    for mask in 0..size {
        let i = mask.count_ones() as usize;
        if i >= rows || !best[mask].is_finite() {
            continue;
        }
        for j in (0..m).filter(|j| mask & (1 << j) == 0) {
            let next = mask | (1 << j);
            let c = best[mask] + cost(i, j);
            if c < best[next] {
                best[next] = c;
                choice[next] = j;
            }
        }
    }
    let mut mask = (0..size)
        .filter(|k| k.count_ones() as usize == rows)
        .min_by(|a, b| best[*a].partial_cmp(&best[*b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0);
    let mut out = vec![None; n];
    for i in (0..rows).rev() {
        let j = choice[mask];
        out[i] = Some(j);
        mask &= !(1 << j);
    }
    out
}

fn assign_greedy(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<Option<usize>> {
    let mut used = vec![false; m];
    (0..n)
        .map(|i| {
            let j = (0..m)
                .filter(|j| !used[*j])
                .min_by(|a, b| cost(i, *a).partial_cmp(&cost(i, *b)).unwrap_or(std::cmp::Ordering::Equal))?;
            used[j] = true;
            Some(j)
        })
        .collect()
}

fn fit_reports(levels: &[LevelResult], nev: usize) -> Vec<ConvergenceReport> {
    let values: Vec<Vec<c64>> = levels.iter().map(|l| l.eigenpairs.iter().map(|p| p.lambda).collect()).collect();
    let tracks = track_eigenvalues(&values, nev);
    tracks
        .into_iter()
        .enumerate()
        .map(|(i, track)| {
            let tv: Vec<TrackedValue> = track
                .iter()
                .zip(levels)
                .map(|(lambda, l)| TrackedValue { level: l.level, n: l.n, h: l.h, dof: l.dof, lambda: *lambda })
                .collect();
            let data: Vec<(f64, c64)> = tv.iter().map(|t| (t.h, t.lambda)).collect();
            let (fit, fit_error) = if data.len() < levels.len() {
                (None, Some("eigenvalue lost during continuation".to_string()))
            } else {
                match fit_rate(&data) {
                    Ok(f) => (Some(f), None),
                    Err(e) => (None, Some(e.to_string())),
                }
            };
            let fit_last3 = if data.len() > 3 { fit_rate(&data[data.len() - 3..]).ok() } else { None };
            ConvergenceReport { eig_index: i, levels: tv, fit, fit_last3, fit_error }
        })
        .collect()
}

/// Solves all levels (concurrently once the shift is known), tracks the first
/// `nev` eigenvalues and fits their convergence.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceRun> {
    cfg.validate()?;
    let beta = cfg.convection()?;
    let shift = resolve_shift(cfg, &beta)?;
    let nev = cfg.nev + EXTRA;
    let outcomes: Vec<Result<(LevelResult, SparseSystem, SpacePair)>> = std::thread::scope(|s| {
        let handles: Vec<_> = cfg
            .levels
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let beta = &beta;
                s.spawn(move || {
                    solve_level(cfg, beta, i, n, shift, nev).map_err(|e| Error::AtLevel { n, source: Box::new(e) })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::LinearAlgebra("level worker panicked".into()))))
            .collect()
    });
    let mut levels = Vec::new();
    let mut systems = Vec::new();
    let mut coarse_space = None;
    for o in outcomes {
        let (l, sys, space) = o?;
        if coarse_space.is_none() {
            coarse_space = Some(space);
        }
        levels.push(l);
        systems.push(sys);
    }
    let constants = match (cfg.constants, &coarse_space) {
        (true, Some(space)) => Some(estimate_constants(space, &systems[0], &beta, None)),
        _ => None,
    };
    let tracked = fit_reports(&levels, cfg.nev);
    Ok(ConvergenceRun { config: cfg.clone(), beta_sup: beta.sup_norm(), levels, tracked, constants, systems })
}

/// `‖β‖∞ = 1` versus `‖β‖∞ = ν` in the robustness sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    UnitConvection,
    ConvectionEqualsNu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InstabilityFlag {
    NegativeEigenvalue,
    SolverFailure,
    FitFailure,
    NonMonotone,
}

#[derive(Debug, Clone, Serialize)]
pub struct RobustnessPoint {
    pub j: u32,
    pub nu: f64,
    pub scenario: Scenario,
    pub beta_sup: f64,
    pub tracked: Vec<ConvergenceReport>,
    pub flags: Vec<InstabilityFlag>,
    pub error: Option<String>,
}

impl RobustnessPoint {
    pub fn orders(&self) -> Vec<Option<f64>> {
        self.tracked.iter().map(|t| t.fit.as_ref().and_then(|f| f.alpha)).collect()
    }
}

/// For each `ν = 2^{-j}` and both scenarios, runs a convergence sweep over
/// `cfg.levels` and flags instabilities. Failures are recorded per point.
pub fn run_robustness(cfg: &ExperimentConfig) -> Result<Vec<RobustnessPoint>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for &j in &cfg.nu_exponents {
        let nu = 0.5f64.powi(j as i32);
        for scenario in [Scenario::UnitConvection, Scenario::ConvectionEqualsNu] {
            let mut c = cfg.clone();
            c.nu = nu;
            c.normalize_beta = true;
            c.beta_scale = match scenario {
                Scenario::UnitConvection => 1.0,
                Scenario::ConvectionEqualsNu => nu,
            };
            c.constants = false;
            c.shift = ShiftSpec::Auto;
            let beta_sup = c.convection()?.sup_norm();
            let point = match run_convergence(&c) {
                Ok(run) => {
                    let mut flags = Vec::new();
                    let negative =
                        run.levels.iter().any(|l| l.eigenpairs.iter().take(c.nev).any(|p| p.lambda.re < 0.0));
                    if negative {
                        flags.push(InstabilityFlag::NegativeEigenvalue);
                    }
                    let bad_fit = run.tracked.len() < c.nev
                        || run.tracked.iter().any(|t| match &t.fit {
                            None => true,
                            Some(f) => match f.alpha {
                                None => true,
                                Some(a) => {
                                    let (lo, hi) = crate::postprocess::ALPHA_RANGE;
                                    a <= lo + 1e-6 || a >= hi - 1e-6
                                }
                            },
                        });
                    if bad_fit {
                        flags.push(InstabilityFlag::FitFailure);
                    }
                    if run.tracked.iter().any(|t| t.fit.as_ref().is_some_and(|f| f.non_monotone)) {
                        flags.push(InstabilityFlag::NonMonotone);
                    }
                    RobustnessPoint { j, nu, scenario, beta_sup, tracked: run.tracked, flags, error: None }
                }
                Err(e) => RobustnessPoint {
                    j,
                    nu,
                    scenario,
                    beta_sup,
                    tracked: Vec::new(),
                    flags: vec![InstabilityFlag::SolverFailure],
                    error: Some(e.to_string()),
                },
            };
            out.push(point);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumRun {
    pub config: ExperimentConfig,
    pub n: usize,
    #[serde(serialize_with = "serialize_c64")]
    pub shift: c64,
    #[serde(serialize_with = "serialize_c64_list")]
    pub eigenvalues: Vec<c64>,
    pub conjugate_pairs: usize,
}

fn serialize_c64_list<S: serde::Serializer>(v: &[c64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

/// Drops trailing values whose conjugate partner was cut off, then checks that
/// every non-real value has its partner.
fn conjugate_closed(values: Vec<c64>, nev: usize) -> Result<Vec<c64>> {
    let mut sorted = values;
    sorted.sort_by(eigenvalue_order);
    sorted.truncate(nev);
    while let Some(last) = sorted.last().copied() {
        let paired = sorted[..sorted.len() - 1].iter().any(|z| is_conjugate_pair(last, *z));
        if is_real(last) || paired {
            break;
        }
        sorted.pop();
    }
    for z in &sorted {
        if !is_real(*z) && !sorted.iter().any(|w| is_conjugate_pair(*z, *w)) {
            return Err(Error::LinearAlgebra(format!("eigenvalue {z} has no conjugate partner")));
        }
    }
    Ok(sorted)
}

/// The `nev` smallest eigenvalues on the finest configured level.
pub fn emit_spectrum(cfg: &ExperimentConfig) -> Result<SpectrumRun> {
    cfg.validate()?;
    let beta = cfg.convection()?;
    let n = *cfg.levels.last().unwrap();
    let shift = match cfg.shift {
        ShiftSpec::Value(z) => z,
        ShiftSpec::Auto => {
            let probe = ExperimentConfig { levels: vec![n], ..cfg.clone() };
            resolve_shift(&probe, &beta)?
        }
    };
    let (level, _, _) =
        solve_level(cfg, &beta, 0, n, shift, cfg.nev + EXTRA).map_err(|e| Error::AtLevel { n, source: Box::new(e) })?;
    let values = conjugate_closed(level.eigenpairs.iter().map(|p| p.lambda).collect(), cfg.nev)?;
    let eigenvalues = filter_spectrum(&values, &Window::default());
    let conjugate_pairs = crate::postprocess::count_conjugate_pairs(&eigenvalues);
    Ok(SpectrumRun { config: cfg.clone(), n, shift, eigenvalues, conjugate_pairs })
}

fn fmt_f(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Two whitespace-separated columns `Re Im`.
pub fn format_spectrum(values: &[c64]) -> String {
    let mut s = String::new();
    for z in values {
        let _ = writeln!(s, "{} {}", fmt_f(z.re), fmt_f(z.im));
    }
    s
}

pub fn parse_spectrum(text: &str) -> Result<Vec<c64>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|l| {
            let cols: Vec<&str> = l.split_whitespace().collect();
            if cols.len() != 2 {
                return Err(Error::Parse(format!("expected two columns, got '{l}'")));
            }
            let p = |t: &str| t.parse::<f64>().map_err(|_| Error::Parse(format!("invalid number '{t}'")));
            Ok(c64::new(p(cols[0])?, p(cols[1])?))
        })
        .collect()
}

pub const CSV_HEADER: &str = "level,N,h,dof,eig_index,re,im,alpha,extr_re,extr_im,fit_residual,dof_with_multiplier";

/// One row per level per tracked eigenvalue.
pub fn format_convergence_csv(run: &ConvergenceRun) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for t in &run.tracked {
        for (tv, l) in t.levels.iter().zip(&run.levels) {
            let (alpha, er, ei, res) = match &t.fit {
                Some(f) => (f.alpha.unwrap_or(f64::INFINITY), f.lambda_extr.re, f.lambda_extr.im, f.residual),
                None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                tv.level,
                tv.n,
                fmt_f(tv.h),
                tv.dof,
                t.eig_index,
                fmt_f(tv.lambda.re),
                fmt_f(tv.lambda.im),
                fmt_f(alpha),
                fmt_f(er),
                fmt_f(ei),
                fmt_f(res),
                l.dof_with_multiplier
            );
        }
    }
    s
}

pub fn format_robustness_csv(points: &[RobustnessPoint]) -> String {
    let mut s = String::from("j,nu,scenario,eig_index,alpha,extr_re,extr_im,flags\n");
    for p in points {
        let scenario = match p.scenario {
            Scenario::UnitConvection => "unit",
            Scenario::ConvectionEqualsNu => "nu",
        };
        let flags: Vec<String> = p.flags.iter().map(|f| format!("{f:?}")).collect();
        if p.tracked.is_empty() {
            let _ = writeln!(s, "{},{},{},,,,,{}", p.j, fmt_f(p.nu), scenario, flags.join(";"));
        }
        for t in &p.tracked {
            let (a, er, ei) = match &t.fit {
                Some(f) => (f.alpha.unwrap_or(f64::INFINITY), f.lambda_extr.re, f.lambda_extr.im),
                None => (f64::NAN, f64::NAN, f64::NAN),
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                p.j,
                fmt_f(p.nu),
                scenario,
                t.eig_index,
                fmt_f(a),
                fmt_f(er),
                fmt_f(ei),
                flags.join(";")
            );
        }
    }
    s
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Parse(e.to_string()))
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, content)?;
    Ok(path)
}

/// Writes `convergence.csv`, `convergence.json` and optionally the per-level
/// matrices `K_N{n}.mtx`, `M_N{n}.mtx`.
pub fn write_convergence(run: &ConvergenceRun, dir: &Path, emit_matrices: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = vec![
        write_file(dir, "convergence.csv", &format_convergence_csv(run))?,
        write_file(dir, "convergence.json", &to_json(run)?)?,
    ];
    if emit_matrices {
        for (l, sys) in run.levels.iter().zip(&run.systems) {
            for (name, m) in [("K", sys.global_matrix()), ("M", sys.global_mass())] {
                let path = dir.join(format!("{name}_N{}.mtx", l.n));
                m.write_matrix_market(BufWriter::new(fs::File::create(&path)?))?;
                files.push(path);
            }
        }
    }
    Ok(files)
}

pub fn write_robustness(points: &[RobustnessPoint], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    Ok(vec![
        write_file(dir, "robustness.csv", &format_robustness_csv(points))?,
        write_file(dir, "robustness.json", &to_json(&points)?)?,
    ])
}

pub fn write_spectrum(run: &SpectrumRun, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    Ok(vec![
        write_file(dir, "spectrum.dat", &format_spectrum(&run.eigenvalues))?,
        write_file(dir, "spectrum.json", &to_json(run)?)?,
    ])
}

/// Expected extrapolated value for one tracked eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub eig_index: usize,
    pub lambda: c64,
    pub tol: f64,
    pub alpha: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub eig_index: usize,
    pub passed: bool,
    pub message: String,
}

/// Reference table: whitespace-separated `eig_index re im tol [alpha alpha_tol]`
/// per line, `#` comments.
pub fn parse_reference(text: &str) -> Result<Vec<Reference>> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 4 && cols.len() != 6 {
            return Err(Error::Parse(format!("reference line needs 4 or 6 columns: '{line}'")));
        }
        let f = |t: &str| t.parse::<f64>().map_err(|_| Error::Parse(format!("invalid number '{t}'")));
        let eig_index = cols[0].parse().map_err(|_| Error::Parse(format!("invalid index '{}'", cols[0])))?;
        let alpha = if cols.len() == 6 { Some((f(cols[4])?, f(cols[5])?)) } else { None };
        out.push(Reference { eig_index, lambda: c64::new(f(cols[1])?, f(cols[2])?), tol: f(cols[3])?, alpha });
    }
    Ok(out)
}

pub fn check_against_reference(run: &ConvergenceRun, refs: &[Reference]) -> Vec<CheckResult> {
    let by_index: BTreeMap<usize, &ConvergenceReport> = run.tracked.iter().map(|t| (t.eig_index, t)).collect();
    refs.iter()
        .map(|r| {
            let Some(fit) = by_index.get(&r.eig_index).and_then(|t| t.fit.as_ref()) else {
                return CheckResult { eig_index: r.eig_index, passed: false, message: "no fit available".into() };
            };
            let dist = (fit.lambda_extr - r.lambda).norm();
            let mut passed = dist <= r.tol;
            let mut message = format!("λ_extr = {} (expected {}, distance {dist:.3e})", fit.lambda_extr, r.lambda);
            if let Some((a, atol)) = r.alpha {
                let got = fit.alpha.unwrap_or(f64::INFINITY);
                passed &= (got - a).abs() <= atol;
                let _ = write!(message, ", α = {got:.3} (expected {a} ± {atol})");
            }
            CheckResult { eig_index: r.eig_index, passed, message }
        })
        .collect()
}

/// Writes `text` to stdout, ignoring broken pipes.
pub fn print_stdout(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    #[test]
    fn config_precedence_and_validation() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text("# comment\nnu = 0.25\nlevels = 4, 8\nfamily = bdm\ndegree = 1\n").unwrap();
        assert_eq!(cfg.nu, 0.25);
        assert_eq!(cfg.levels, vec![4, 8]);
        cfg.set("nu", "0.125").unwrap();
        assert_eq!(cfg.nu, 0.125);
        cfg.validate().unwrap();
        assert!(cfg.set("bogus", "1").is_err());
        for bad in ["levels = 8, 4", "nev = 0", "nu = -1", "levels = 0, 2", "family = rt\ndegree = 5"] {
            let mut c = ExperimentConfig::default();
            let r = c.apply_text(bad).and_then(|_| c.validate());
            assert!(r.is_err_and(|e| e.is_config()), "{bad}");
        }
        assert_eq!("auto".parse::<ShiftSpec>().unwrap(), ShiftSpec::Auto);
        assert_eq!("10, 2".parse::<ShiftSpec>().unwrap(), ShiftSpec::Value(c(10.0, 2.0)));
    }

    #[test]
    fn tracking_keeps_real_and_complex_apart() {
        let levels = vec![
            vec![c(1.0, 0.0), c(2.0, -0.1), c(2.0, 0.1)],
            vec![c(1.9, 0.0), c(0.99, 0.0), c(1.95, 0.12), c(1.95, -0.12)],
        ];
        let t = track_eigenvalues(&levels, 3);
        assert_eq!(t[0], vec![c(1.0, 0.0), c(0.99, 0.0)]);
        assert_eq!(t[1][1], c(1.95, -0.12));
        assert_eq!(t[2][1], c(1.95, 0.12));
    }

    #[test]
    fn tracking_prefers_total_distance_over_greedy() {
        // greedy matching would send 23.411 to 23.548 and leave 23.704 with 23.255
        let levels = vec![vec![c(23.411, 0.0), c(23.704, 0.0)], vec![c(23.255, 0.0), c(23.548, 0.0)]];
        let t = track_eigenvalues(&levels, 2);
        assert_eq!(t[0][1], c(23.255, 0.0));
        assert_eq!(t[1][1], c(23.548, 0.0));
        let g = assign_greedy(2, 2, |i, j| (levels[1][j] - levels[0][i]).norm());
        assert_eq!(g, vec![Some(1), Some(0)]);
        assert_eq!(assign_exact(3, 2, |i, j| (i + j) as f64).iter().filter(|a| a.is_some()).count(), 2);
    }

    #[test]
    fn spectrum_round_trip() {
        let v = vec![c(1.0, 0.0), c(2.5, -1.0 / 3.0), c(2.5, 1.0 / 3.0)];
        assert_eq!(parse_spectrum(&format_spectrum(&v)).unwrap(), v);
        assert!(parse_spectrum("1 2 3").is_err());
    }

    #[test]
    fn conjugate_closure_drops_cut_pairs() {
        let v = vec![c(1.0, 0.0), c(2.0, 1.0), c(2.0, -1.0), c(3.0, 0.5)];
        assert_eq!(conjugate_closed(v.clone(), 4).unwrap().len(), 3);
        assert_eq!(conjugate_closed(v, 2).unwrap(), vec![c(1.0, 0.0)]);
    }

    #[test]
    fn reference_parsing() {
        let r = parse_reference("# idx re im tol alpha atol\n0 13.6 0 0.01 1.92 0.2\n1 23.1 0.7 0.03\n").unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].alpha, Some((1.92, 0.2)));
        assert!(parse_reference("0 1 2").is_err());
    }

    #[test]
    fn small_convergence_run() {
        let cfg = ExperimentConfig { levels: vec![4, 6, 8], nev: 2, constants: false, ..ExperimentConfig::default() };
        let run = run_convergence(&cfg).unwrap();
        assert_eq!(run.tracked.len(), 2);
        assert!(run.tracked.iter().all(|t| t.levels.len() == 3 && t.fit.is_some()));
        let csv = format_convergence_csv(&run);
        assert_eq!(csv.lines().count(), 1 + 2 * 3);
        assert!(csv.starts_with(CSV_HEADER));
    }
}
