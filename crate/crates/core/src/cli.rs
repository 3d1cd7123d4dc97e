//! Command-line front end: `validate`, `enumerate` and `solve`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::bo::{self, AcquisitionConfig, BoConfig};
use crate::direct_search::{self, GlobalStrategy, SearchConfig};
use crate::domain::TypeGroup;
use crate::gp::KernelConfig;
use crate::neighborhood::HookRegistry;
use crate::problem::{BlackboxBinding, LoadError, Problem};
use crate::runtime::{write_history, Evaluator};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Overrides the timeout of subprocess blackboxes, in seconds.
pub const TIMEOUT_ENV: &str = "MIXOPT_BLACKBOX_TIMEOUT";

#[derive(Parser, Debug)]
#[command(name = "mixopt", version, about = "Mixed-variable blackbox optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a problem file against every load-time rule.
    Validate { file: PathBuf },
    /// Print the meta set and the dimensions under each meta component.
    Enumerate { file: PathBuf },
    /// Run a solver and write the evaluation history.
    Solve {
        file: PathBuf,
        #[arg(long, value_enum)]
        solver: Solver,
        #[arg(long)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration acquisition log (BO only).
        #[arg(long)]
        aux_log: Option<PathBuf>,
        /// JSON file with solver settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Suppress per-iteration progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Solver {
    Direct,
    Bo,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
enum GlobalName {
    #[default]
    Random,
    None,
}

/// Optional solver settings read from `--config`.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields, default)]
struct RunConfig {
    subproblem_budget: Option<usize>,
    max_iterations: Option<usize>,
    opportunistic: Option<bool>,
    global: Option<GlobalName>,
    stall_limit: Option<usize>,
    kernel: Option<KernelConfig>,
    acquisition_starts: Option<usize>,
    enumeration_limit: Option<usize>,
    grid_limit: Option<usize>,
    inner_evaluations: Option<usize>,
    refit_all_until: Option<usize>,
    refit_every: Option<usize>,
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let mut text = e.render().to_string();
            if e.use_stderr() {
                if !text.contains("Usage:") {
                    text = format!("{text}\n{}\n", Cli::command().render_usage());
                }
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    match cli.command {
        Command::Validate { file } => match load(&file, err) {
            Ok(p) => {
                let _ = writeln!(
                    out,
                    "{}: ok ({} variables, {} constraints)",
                    p.name,
                    p.domain.variables().len(),
                    p.constraints.constraints().len()
                );
                EXIT_OK
            }
            Err(code) => code,
        },
        Command::Enumerate { file } => match load(&file, err) {
            Ok(p) => enumerate(&p, out, err),
            Err(code) => code,
        },
        Command::Solve {
            file,
            solver,
            budget,
            seed,
            out: out_path,
            aux_log,
            config,
            quiet,
        } => {
            let problem = match load(&file, err) {
                Ok(p) => p,
                Err(code) => return code,
            };
            let run_cfg = match config.as_deref().map(read_config).transpose() {
                Ok(c) => c.unwrap_or_default(),
                Err(msg) => {
                    let _ = writeln!(err, "error: {msg}");
                    return EXIT_VALIDATION;
                }
            };
            if budget == 0 {
                let _ = writeln!(err, "error: --budget must be positive");
                return EXIT_USAGE;
            }
            let job = Job {
                problem: &problem,
                solver,
                budget,
                seed,
                out_path: &out_path,
                aux_log: aux_log.as_deref(),
                cfg: run_cfg,
                quiet,
            };
            job.run(out, err)
        }
    }
}

fn load(path: &Path, err: &mut dyn Write) -> Result<Problem, i32> {
    match Problem::from_path(path) {
        Ok(mut p) => {
            apply_timeout_override(&mut p);
            Ok(p)
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            Err(match e {
                LoadError::Io { .. } => EXIT_RUNTIME,
                _ => EXIT_VALIDATION,
            })
        }
    }
}

fn apply_timeout_override(p: &mut Problem) {
    if let BlackboxBinding::Command { timeout_secs, .. } = &mut p.blackbox {
        if let Some(t) = std::env::var(TIMEOUT_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|t| *t > 0.0)
        {
            *timeout_secs = t;
        }
    }
}

fn read_config(path: &Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn enumerate(p: &Problem, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let d = &p.domain;
    let metas = match d.enumerate_meta_set() {
        Ok(m) => m,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_VALIDATION;
        }
    };
    let _ = writeln!(out, "|X^m| = {}", metas.len());
    let _ = writeln!(
        out,
        "{:<28} {:>4} {:>4} {:>4} {:>6}",
        "meta", "n^q", "n^z", "n^c", "|C^m|"
    );
    for xm in &metas {
        let dim = |g| d.dimension(xm, g).unwrap_or(0);
        let _ = writeln!(
            out,
            "{:<28} {:>4} {:>4} {:>4} {:>6}",
            d.render_meta(xm),
            dim(TypeGroup::Categorical),
            dim(TypeGroup::Integer),
            dim(TypeGroup::Continuous),
            p.constraints.acting_decreed_constraints(xm).len()
        );
    }
    EXIT_OK
}

struct Job<'a> {
    problem: &'a Problem,
    solver: Solver,
    budget: usize,
    seed: u64,
    out_path: &'a Path,
    aux_log: Option<&'a Path>,
    cfg: RunConfig,
    quiet: bool,
}

impl Job<'_> {
    fn run(self, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
        let ev = match Evaluator::new(self.problem, self.budget) {
            Ok(ev) => ev,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                return EXIT_VALIDATION;
            }
        };
        let c = &self.cfg;
        let quiet = self.quiet;
        let result = match self.solver {
            Solver::Direct => {
                let d = SearchConfig::default();
                let cfg = SearchConfig {
                    budget: self.budget,
                    subproblem_budget: c.subproblem_budget.unwrap_or(d.subproblem_budget),
                    max_iterations: c.max_iterations.unwrap_or(d.max_iterations),
                    seed: self.seed,
                    opportunistic: c.opportunistic.unwrap_or(d.opportunistic),
                    global: match c.global {
                        Some(GlobalName::None) => GlobalStrategy::None,
                        _ => GlobalStrategy::Random,
                    },
                    stall_limit: c.stall_limit.unwrap_or(d.stall_limit),
                };
                direct_search::run_direct_search_with(&ev, &cfg, &HookRegistry::default(), |r| {
                    if !quiet {
                        let _ = writeln!(
                            err,
                            "iteration {} evals {} incumbent {}",
                            r.iteration, r.used, r.incumbent
                        );
                    }
                })
                .map(|o| (o.history, None))
            }
            Solver::Bo => {
                let d = BoConfig::default();
                let a = AcquisitionConfig::default();
                let cfg = BoConfig {
                    budget: self.budget,
                    seed: self.seed,
                    kernel: c.kernel.clone().unwrap_or_default(),
                    acquisition: AcquisitionConfig {
                        starts: c.acquisition_starts.unwrap_or(a.starts),
                        enumeration_limit: c.enumeration_limit.unwrap_or(a.enumeration_limit),
                        grid_limit: c.grid_limit.unwrap_or(a.grid_limit),
                        inner_evaluations: c.inner_evaluations.unwrap_or(a.inner_evaluations),
                    },
                    refit_all_until: c.refit_all_until.unwrap_or(d.refit_all_until),
                    refit_every: c.refit_every.unwrap_or(d.refit_every),
                };
                bo::run_bo_with(&ev, &cfg, |r| {
                    if !quiet {
                        let _ = writeln!(
                            err,
                            "iteration {} evals {} meta {} ei {}",
                            r.iteration,
                            ev.budget().used,
                            r.meta,
                            r.ei
                        );
                    }
                })
                .map(|o| (o.history, Some(o.log)))
            }
        };
        let (history, log) = match result {
            Ok(r) => r,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                return EXIT_RUNTIME;
            }
        };
        if let Err(e) = write_history(self.problem, &history, self.out_path) {
            let _ = writeln!(err, "error: {}: {e}", self.out_path.display());
            return EXIT_RUNTIME;
        }
        if let Some(path) = self.aux_log {
            let text = bo::acquisition_log_csv(log.as_deref().unwrap_or_default());
            if let Err(e) = std::fs::write(path, text) {
                let _ = writeln!(err, "error: {}: {e}", path.display());
                return EXIT_RUNTIME;
            }
        }
        match crate::runtime::best_of(&history) {
            Some(best) => {
                let _ = writeln!(out, "best objective {}", best.objective);
                let _ = writeln!(out, "{}", self.problem.domain.point_to_json(&best.point));
            }
            None => {
                let _ = writeln!(out, "no feasible point found");
            }
        }
        let _ = writeln!(out, "evaluations {}", ev.budget().used);
        EXIT_OK
    }
}
