use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use oseen::experiment::{
    self, check_against_reference, parse_reference, print_stdout, ConvergenceRun, ExperimentConfig, RobustnessPoint,
    SpectrumRun,
};
use oseen::{Error, Result};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    /// Track the smallest eigenvalues across levels and fit convergence rates.
    Convergence,
    /// Sweep ν = 2^-j for both convection scalings.
    Robustness,
    /// Dump the spectrum of the finest level.
    Spectrum,
}

/// Mixed finite element eigenvalue solver for the Oseen problem in
/// velocity-pseudostress form.
#[derive(Debug, Parser)]
#[command(name = "oseen", version)]
struct Cli {
    #[arg(long, value_enum, default_value_t = Mode::Convergence)]
    mode: Mode,
    /// Flat key = value configuration file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// square | lshape
    #[arg(long)]
    domain: Option<String>,
    /// rt | bdm
    #[arg(long)]
    family: Option<String>,
    /// Family index k of RT_k or BDM_k.
    #[arg(long)]
    degree: Option<usize>,
    /// beta1 | beta2 | beta3 | beta4 | zero | axis:a,b
    #[arg(long)]
    beta: Option<String>,
    /// Normalize β to unit sup norm before scaling (true | false).
    #[arg(long)]
    normalize: Option<String>,
    #[arg(long)]
    beta_scale: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    /// Comma-separated mesh parameters N.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    nev: Option<usize>,
    /// auto | re | re,im
    #[arg(long, allow_hyphen_values = true)]
    shift: Option<String>,
    /// right | left | alternating
    #[arg(long)]
    pattern: Option<String>,
    /// Comma-separated exponents j for the robustness sweep.
    #[arg(long)]
    nu_exponents: Option<String>,
    /// Skip the stability-constant estimates.
    #[arg(long)]
    no_constants: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Write K and M̃ of every level in MatrixMarket format.
    #[arg(long)]
    emit_matrices: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Reference table (`eig_index re im tol [alpha alpha_tol]` per line); exit 4 on mismatch.
    #[arg(long)]
    check: Option<PathBuf>,
}

impl Cli {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut o: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k.to_string(), v));
            }
        };
        put("domain", self.domain.clone());
        put("family", self.family.clone());
        put("degree", self.degree.map(|v| v.to_string()));
        put("beta", self.beta.clone());
        put("normalize", self.normalize.clone());
        put("beta_scale", self.beta_scale.map(|v| v.to_string()));
        put("nu", self.nu.map(|v| v.to_string()));
        put("levels", self.levels.clone());
        put("nev", self.nev.map(|v| v.to_string()));
        put("shift", self.shift.clone());
        put("pattern", self.pattern.clone());
        put("nu_exponents", self.nu_exponents.clone());
        put("seed", self.seed.map(|v| v.to_string()));
        put("out_dir", self.out_dir.as_ref().map(|p| p.display().to_string()));
        if self.no_constants {
            put("constants", Some("false".into()));
        }
        if self.emit_matrices {
            put("emit_matrices", Some("true".into()));
        }
        o
    }
}

fn summarize_convergence(run: &ConvergenceRun) -> String {
    let mut s = String::new();
    for l in &run.levels {
        let _ = writeln!(s, "N = {:>4}  h = {:.5}  dof = {}", l.n, l.h, l.dof);
    }
    for t in &run.tracked {
        let _ = write!(s, "λ{}:", t.eig_index + 1);
        for v in &t.levels {
            let _ = write!(s, "  {:.6}{:+.6}i", v.lambda.re, v.lambda.im);
        }
        match &t.fit {
            Some(f) => {
                let alpha = f.alpha.map_or("inf".to_string(), |a| format!("{a:.3}"));
                let _ = write!(s, "  | α = {alpha}  λ_extr = {:.6}{:+.6}i", f.lambda_extr.re, f.lambda_extr.im);
                if f.non_monotone {
                    s.push_str("  (non-monotone)");
                }
            }
            None => {
                let _ = write!(s, "  | no fit: {}", t.fit_error.as_deref().unwrap_or("unknown"));
            }
        }
        s.push('\n');
    }
    if let Some(c) = &run.constants {
        let _ = writeln!(
            s,
            "γ_h = {:.4}  c1_h = {:.4}  L = {:.4}  C_J‖β‖/ν = {:.4}",
            c.gamma_h, c.c1_h, c.contraction_l, c.uniqueness_ratio
        );
        for w in &c.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
    }
    s
}

fn summarize_robustness(points: &[RobustnessPoint]) -> String {
    let mut s = String::new();
    for p in points {
        let orders: Vec<String> = p.orders().iter().map(|a| a.map_or("-".to_string(), |a| format!("{a:.2}"))).collect();
        let _ = writeln!(
            s,
            "j = {:>2}  ν = {:.3e}  ‖β‖ = {:.3e}  orders [{}]  flags {:?}{}",
            p.j,
            p.nu,
            p.beta_sup,
            orders.join(", "),
            p.flags,
            p.error.as_ref().map_or(String::new(), |e| format!("  error: {e}"))
        );
    }
    s
}

fn summarize_spectrum(run: &SpectrumRun) -> String {
    let mut s =
        format!("N = {}  {} eigenvalues, {} conjugate pairs\n", run.n, run.eigenvalues.len(), run.conjugate_pairs);
    s.push_str(&experiment::format_spectrum(&run.eigenvalues));
    s
}

enum Outcome {
    Ok,
    CheckFailed,
}

fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &cli.overrides())?;
    let refs = match &cli.check {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read reference table {}: {e}", path.display())))?;
            Some(parse_reference(&text).map_err(|e| Error::Config(e.to_string()))?)
        }
        None => None,
    };
    let mut outcome = Outcome::Ok;
    match cli.mode {
        Mode::Convergence => {
            let run = experiment::run_convergence(&cfg)?;
            print_stdout(&summarize_convergence(&run));
            if let Some(dir) = &cfg.out_dir {
                experiment::write_convergence(&run, dir, cfg.emit_matrices)?;
            }
            if let Some(refs) = refs {
                for c in check_against_reference(&run, &refs) {
                    print_stdout(&format!(
                        "{} λ{}: {}\n",
                        if c.passed { "PASS" } else { "FAIL" },
                        c.eig_index + 1,
                        c.message
                    ));
                    if !c.passed {
                        outcome = Outcome::CheckFailed;
                    }
                }
            }
        }
        Mode::Robustness => {
            let points = experiment::run_robustness(&cfg)?;
            print_stdout(&summarize_robustness(&points));
            if let Some(dir) = &cfg.out_dir {
                experiment::write_robustness(&points, dir)?;
            }
        }
        Mode::Spectrum => {
            let run = experiment::emit_spectrum(&cfg)?;
            print_stdout(&summarize_spectrum(&run));
            if let Some(dir) = &cfg.out_dir {
                experiment::write_spectrum(&run, dir)?;
            }
        }
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
