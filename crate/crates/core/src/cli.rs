//! Command-line front end. Every run is described by a [`RunConfig`]; its
//! SHA-256 tags the JSON report and every file written.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bubbles::{threshold_scan_critical, threshold_scan_subcritical};
use crate::conditions::{check_conditions, log_samples, parse_nonlinearity};
use crate::constants::{gn_constant, sobolev_constant, thresholds, ExponentPack};
use crate::error::{param, Error, Result};
use crate::functionals::{energy_report, ProblemParams};
use crate::pohozaev::{fiber_critical_points, project};
use crate::radial::{Grading, RadialFunction, RadialGrid};
use crate::solvers::{
    deformation_flow_demo, gaussian_init, ground_state_minimax, local_minimize,
    random_blended_init, SolutionReport, SolveOptions, ToyFunctional,
};
use crate::verify;

/// Environment variable giving the default worker count.
pub const WORKERS_ENV: &str = "NORMSOL_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_ACCEPTANCE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "normsol", version, about = "Normalized solutions with Sobolev-critical growth")]
pub struct Cli {
    /// Read the whole run description from a RunConfig JSON file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for JSON reports and CSV artifacts; nothing is written without it.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads (default: $NORMSOL_WORKERS, else all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Seed for randomized initial data.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Exponents, Sobolev and Gagliardo–Nirenberg constants, thresholds.
    Constants(ProblemArgs),
    /// Energy, Pohozaev functional and multiplier of a profile.
    Energy(ProfileArgs),
    /// Fiber critical points and the projection onto the Pohozaev set.
    Project(ProfileArgs),
    /// Local minimizer on V(c) (q below the L²-critical exponent).
    LocalMin(SolveArgs),
    /// Minimax ground state on the Pohozaev set (q at or above it).
    GroundState(SolveArgs),
    /// Energy of bubble test functions against the compactness threshold.
    BubbleScan(ScanArgs),
    /// Audit a nonlinearity f(t) against the growth conditions.
    CheckF(CheckArgs),
    /// Negative gradient flow of a toy functional on the unit sphere.
    DeformDemo(DeformArgs),
    /// Run the acceptance suite.
    VerifyAll(VerifyArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Constants(_) => "constants",
            Command::Energy(_) => "energy",
            Command::Project(_) => "project",
            Command::LocalMin(_) => "local-min",
            Command::GroundState(_) => "ground-state",
            Command::BubbleScan(_) => "bubble-scan",
            Command::CheckF(_) => "check-f",
            Command::DeformDemo(_) => "deform-demo",
            Command::VerifyAll(_) => "verify-all",
        }
    }
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemArgs {
    #[arg(long = "N", value_name = "N")]
    #[serde(rename = "N")]
    pub dim: usize,
    #[arg(long)]
    pub q: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
}

impl ProblemArgs {
    fn params(&self) -> Result<ProblemParams> {
        ProblemParams::new(self.dim, self.c, self.mu, self.q)
    }
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridArgs {
    #[arg(long, default_value_t = 50.0)]
    pub r_max: f64,
    #[arg(long, default_value_t = 3000)]
    pub cells: usize,
    /// `uniform` or `graded(p)`.
    #[arg(long, default_value = "graded(2)")]
    pub grading: Grading,
}

impl GridArgs {
    fn grid(&self, dim: usize) -> Result<Arc<RadialGrid>> {
        Ok(Arc::new(RadialGrid::new(dim, self.r_max, self.cells, self.grading)?))
    }
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    /// Profile CSV (`r,value` rows); a Gaussian scaled to mass c otherwise.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub width: f64,
}

impl ProfileArgs {
    fn load(&self) -> Result<RadialFunction> {
        match &self.profile {
            Some(path) => RadialFunction::load_csv(path),
            None => gaussian_init(self.grid.grid(self.problem.dim)?, self.problem.c, self.width),
        }
    }
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 1e-8)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = 20_000)]
    pub max_iters: usize,
    /// Initial profile CSV; a seeded default otherwise.
    #[arg(long)]
    pub init: Option<PathBuf>,
}

impl SolveArgs {
    fn options(&self, seed: u64) -> SolveOptions {
        SolveOptions {
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            seed,
            cells: self.grid.cells,
            r_max: Some(self.grid.r_max),
            grading: self.grid.grading,
            ..SolveOptions::default()
        }
    }
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub problem: ProblemArgs,
    /// Concentrations as `start:end:xF` (geometric) or a comma list.
    #[arg(long, default_value = "8:256:x2")]
    pub n: String,
    /// Cells of the path grids (subcritical scans).
    #[arg(long, default_value_t = 6000)]
    pub cells: usize,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckArgs {
    /// Expression in t, e.g. `abs(t)^2*t + abs(t)^4*t`.
    #[arg(long)]
    pub f: String,
    #[arg(long = "N", value_name = "N")]
    #[serde(rename = "N")]
    pub dim: usize,
    #[arg(long)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub t_min: f64,
    #[arg(long, default_value_t = 1e6)]
    pub t_max: f64,
    #[arg(long, default_value_t = 10)]
    pub per_decade: usize,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformArgs {
    #[arg(long)]
    pub dim: usize,
    /// `height`, `quadratic` or `double-well`.
    #[arg(long, default_value = "height")]
    pub functional: String,
    #[arg(long, default_value_t = 10.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// Reduced sample counts; tolerances unchanged.
    #[arg(long)]
    pub quick: bool,
    /// Comma-separated criterion numbers (all by default).
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<u8>,
}

/// Serialized description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: String,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub command: Command,
}

impl RunConfig {
    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Geometric `a:b:xF` or an explicit comma list.
pub fn parse_n_spec(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Parse(format!("bad n specification '{spec}' (use 8:256:x2 or 8,16,32)"));
    if let Some((range, factor)) = spec.rsplit_once(":x") {
        let (a, b) = range.split_once(':').ok_or_else(bad)?;
        let (a, b, f): (f64, f64, f64) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
            factor.trim().parse().map_err(|_| bad())?,
        );
        if !(a > 0.0 && b >= a && f > 1.0) {
            return Err(bad());
        }
        let mut out = Vec::new();
        let mut n = a;
        while n <= b * (1.0 + 1e-12) {
            out.push(n);
            n *= f;
        }
        return Ok(out);
    }
    spec.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect()
}

/// Outcome of a run: the JSON report and the exit status.
pub struct RunOutput {
    pub report: Value,
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
}

struct Artifacts<'a> {
    dir: Option<&'a Path>,
    stem: String,
    files: Vec<PathBuf>,
}

impl Artifacts<'_> {
    fn write(&mut self, suffix: &str, contents: &str) -> Result<()> {
        if let Some(dir) = self.dir {
            fs::create_dir_all(dir)?;
            let path = dir.join(format!("{}{suffix}", self.stem));
            fs::write(&path, contents)?;
            self.files.push(path);
        }
        Ok(())
    }
}

fn solution_json(r: &SolutionReport, art: &mut Artifacts) -> Result<Value> {
    art.write("-profile.csv", &r.u.to_csv_string())?;
    art.write("-history.csv", &r.history_csv())?;
    let mut v = serde_json::to_value(r)?;
    // the per-iteration history goes to CSV; keep the JSON compact
    if let Some(obj) = v.as_object_mut() {
        obj.remove("history");
        obj.insert("history_len".into(), json!(r.history.len()));
    }
    Ok(v)
}

/// Executes one configured run.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let hash = config.hash();
    let mut art = Artifacts {
        dir: config.out_dir.as_deref(),
        stem: format!("{}-{}", config.command.name(), &hash[..12]),
        files: Vec::new(),
    };
    let mut exit_code = EXIT_OK;
    let result: Value = match &config.command {
        Command::Constants(a) => {
            let ex = ExponentPack::new(a.dim, a.q)?;
            let th = thresholds(a.dim, a.q, a.mu, a.c)?;
            let s = sobolev_constant(a.dim)?;
            json!({
                "gamma_q": ex.gamma_q,
                "q_bar": ex.q_bar,
                "two_star": ex.two_star,
                "sobolev": s,
                "gn_constant": gn_constant(a.dim, a.q)?,
                "thresholds": th,
            })
        }
        Command::Energy(a) => {
            let u = a.load()?;
            let p = a.problem.params()?;
            serde_json::to_value(energy_report(&u, &p)?)?
        }
        Command::Project(a) => {
            let u = a.load()?;
            let p = a.problem.params()?;
            let points = fiber_critical_points(&u, &p)?;
            let projected = match project(&u, &p) {
                Ok((v, cp)) => {
                    art.write("-profile.csv", &v.to_csv_string())?;
                    json!({ "critical_point": cp, "energy": energy_report(&v, &p)? })
                }
                Err(e @ Error::Hypothesis(_)) => json!({ "skipped": e.to_string() }),
                Err(e) => return Err(e),
            };
            json!({ "critical_points": points, "projection": projected })
        }
        Command::LocalMin(a) | Command::GroundState(a) => {
            let p = a.problem.params()?;
            let opts = a.options(config.seed);
            let grid = a.grid.grid(a.problem.dim)?;
            let local = matches!(config.command, Command::LocalMin(_));
            let init = match &a.init {
                Some(path) => RadialFunction::load_csv(path)?,
                None if local => gaussian_init(grid, a.problem.c, 2.0)?,
                None => random_blended_init(grid, a.problem.c, config.seed)?,
            };
            let r = if local {
                local_minimize(&p, &init, &opts)?
            } else {
                ground_state_minimax(&p, &init, &opts)?
            };
            if !r.converged {
                exit_code = EXIT_NUMERICAL;
            }
            solution_json(&r, &mut art)?
        }
        Command::BubbleScan(a) => {
            let p = a.problem.params()?;
            let ns = parse_n_spec(&a.n)?;
            let scan = if p.exponents.is_subcritical() {
                let grid = Arc::new(RadialGrid::new(p.dim, 50.0, 3000, Grading::Graded(2.0))?);
                let init = gaussian_init(grid, p.c, 2.0)?;
                let sol = local_minimize(&p, &init, &SolveOptions { seed: config.seed, ..Default::default() })?;
                threshold_scan_subcritical(&p, &sol.u, &ns, a.cells)?
            } else {
                threshold_scan_critical(&p, &ns)?
            };
            art.write(".csv", &scan.to_csv())?;
            serde_json::to_value(&scan)?
        }
        Command::CheckF(a) => {
            let f = parse_nonlinearity(&a.f)?;
            let ts = log_samples(a.t_min, a.t_max, a.per_decade);
            serde_json::to_value(check_conditions(&f, a.dim, a.kappa, &ts)?)?
        }
        Command::DeformDemo(a) => {
            let functional: ToyFunctional = a.functional.parse()?;
            if a.dim < 2 {
                return Err(param("the sphere needs dimension at least 2"));
            }
            // start just off the north pole, tilted in a seeded direction
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
            let mut x: Vec<f64> = (0..a.dim).map(|_| rng.random_range(-0.5..0.5)).collect();
            x[a.dim - 1] = 1.0;
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= nx);
            let tr = deformation_flow_demo(functional, &x, a.duration, a.step)?;
            art.write("-trajectory.csv", &tr.to_csv())?;
            let last = tr.steps.last().expect("trajectory has its start");
            let drift = tr.steps.iter().map(|s| (s.norm - 1.0).abs()).fold(0.0, f64::max);
            json!({
                "dim": tr.dim,
                "functional": tr.functional,
                "steps": tr.steps.len() - 1,
                "rejected_steps": tr.rejected_steps,
                "final_value": last.value,
                "max_norm_drift": drift,
                "displacement": last.displacement,
                "displacement_bound": last.bound,
                "trajectory": tr.steps,
            })
        }
        Command::VerifyAll(a) => {
            let ids: Vec<u8> = if a.only.is_empty() {
                verify::CRITERIA.iter().map(|c| c.0).collect()
            } else {
                a.only.clone()
            };
            let matrix = verify::AcceptanceMatrix {
                quick: a.quick,
                results: ids.iter().map(|&id| verify::run_criterion(id, a.quick)).collect(),
            };
            eprintln!("{}", matrix.summary());
            if !matrix.all_pass() {
                exit_code = EXIT_ACCEPTANCE;
            }
            json!({ "all_pass": matrix.all_pass(), "matrix": matrix })
        }
    };
    let report = json!({
        "config": config,
        "config_hash": hash,
        "result": result,
    });
    art.write(".json", &serde_json::to_string_pretty(&report)?)?;
    Ok(RunOutput {
        report,
        exit_code,
        files: art.files,
    })
}

/// Usage-type errors (bad input) versus numerical failures.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Parameter(_)
        | Error::Parse(_)
        | Error::Json(_)
        | Error::Io(_)
        | Error::Expression(_)
        | Error::Hypothesis(_)
        | Error::Shape { .. } => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}

/// Builds the run configuration from parsed arguments.
pub fn config_from_cli(cli: &Cli) -> Result<RunConfig> {
    match (&cli.config, &cli.command) {
        (Some(path), None) => {
            let mut cfg = RunConfig::from_json(&fs::read_to_string(path)?)?;
            if cli.out_dir.is_some() {
                cfg.out_dir = cli.out_dir.clone();
            }
            Ok(cfg)
        }
        (Some(_), Some(_)) => Err(Error::Parse("give either --config or a subcommand, not both".into())),
        (None, Some(cmd)) => Ok(RunConfig {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cli.seed,
            out_dir: cli.out_dir.clone(),
            command: cmd.clone(),
        }),
        (None, None) => Err(Error::Parse("a subcommand or --config is required".into())),
    }
}

fn configure_workers(flag: Option<usize>) -> Result<()> {
    let from_env = std::env::var(WORKERS_ENV)
        .ok()
        .map(|v| v.parse::<usize>().map_err(|_| Error::Parse(format!("{WORKERS_ENV}={v} is not a count"))))
        .transpose()?;
    if let Some(n) = flag.or(from_env).filter(|n| *n > 0) {
        // fails only if a pool already exists, in which case it is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses `args`, runs, prints the JSON report to stdout and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = configure_workers(cli.workers)
        .and_then(|_| config_from_cli(&cli))
        .and_then(|cfg| run(&cfg));
    match outcome {
        Ok(out) => {
            use std::io::Write;
            let text = serde_json::to_string_pretty(&out.report).expect("report serializes");
            // a closed pipe downstream is not a failure of the run
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            out.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
