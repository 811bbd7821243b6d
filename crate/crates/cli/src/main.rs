use clap::{Args, Parser, Subcommand, ValueEnum};
use compet_ctl::freqeval::{self, Evaluated, FreqContext, Grid};
use compet_ctl::model::{self, Document, LtiSystem, ModelError};
use compet_ctl::sim::{self, DisturbanceKind, DisturbanceSpec, SimOptions};
use compet_ctl::synthesis::{self, ControllerRealization, CrPath, Method, SynthesisError, SynthesisOptions};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

const EXIT_ERROR: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_SYNTHESIS: u8 = 3;

/// Competitive-ratio, regret-optimal, H2 and H-infinity controller synthesis.
#[derive(Parser, Debug)]
#[command(name = "compet-ctl", version)]
struct Cli {
    /// `key = value` file supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a system file.
    Check(Common),
    /// Synthesize one controller and print its certificate.
    Synth(SynthArgs),
    /// Evaluate frequency-domain metrics for several controllers.
    Sweep(Common),
    /// Simulate closed-loop costs.
    Sim(SimArgs),
    /// One metric table per system.
    Table(TableArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// System file.
    #[arg(long)]
    system: Option<PathBuf>,
    /// Comma-separated methods: h2, hinf, cr, regret, noncausal.
    #[arg(long, value_delimiter = ',')]
    method: Vec<Method>,
    /// Frequency grid points.
    #[arg(long)]
    grid: Option<usize>,
    /// Output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Riccati/Lyapunov solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Force a competitive-ratio construction.
    #[arg(long, value_enum)]
    path: Option<PathArg>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PathArg {
    General,
    Square,
    Scalar,
}

#[derive(Args, Debug)]
struct SimArgs {
    #[command(flatten)]
    common: Common,
    /// Controller file to simulate instead of synthesizing from --method.
    #[arg(long)]
    controller: Option<PathBuf>,
    /// `gaussian`, `sine`, or a path to a disturbance file.
    #[arg(long)]
    disturbance: Option<String>,
    /// Horizon in steps.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sinusoid frequency in radians per step.
    #[arg(long)]
    omega: Option<f64>,
}

#[derive(Args, Debug)]
struct TableArgs {
    /// System files, one table block each.
    #[arg(long, num_args = 1..)]
    system: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    method: Vec<Method>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Self::new(EXIT_ERROR, e.to_string())
    }
}

impl From<SynthesisError> for Failure {
    fn from(e: SynthesisError) -> Self {
        let code = match e {
            SynthesisError::Invalid(_) => EXIT_INVALID,
            _ => EXIT_SYNTHESIS,
        };
        Self::new(code, e.to_string())
    }
}

impl From<compet_ctl::pipeline::PipelineError> for Failure {
    fn from(e: compet_ctl::pipeline::PipelineError) -> Self {
        Self::new(EXIT_SYNTHESIS, e.to_string())
    }
}

impl From<sim::SimError> for Failure {
    fn from(e: sim::SimError) -> Self {
        let code = match e {
            sim::SimError::UnstableLoop { .. } | sim::SimError::NonFiniteState { .. } => EXIT_SYNTHESIS,
            _ => EXIT_ERROR,
        };
        Self::new(code, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

/// Flag values with config-file fallbacks.
struct Config {
    doc: Document,
    path: Option<PathBuf>,
}

impl Config {
    fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self { doc: Document::default(), path: None });
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::new(EXIT_ERROR, format!("cannot read {}: {e}", path.display())))?;
        let doc = Document::parse(&text).map_err(|e| Failure::new(EXIT_ERROR, format!("{}: {e}", path.display())))?;
        Ok(Self { doc, path: Some(path.to_path_buf()) })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.doc.text(key)
    }

    fn get<V: std::str::FromStr>(&self, flag: Option<V>, key: &str) -> Result<Option<V>, Failure> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                Failure::new(EXIT_ERROR, format!("config: invalid value `{v}` for `{key}`"))
            }),
        }
    }

    /// Relative paths in the config file resolve against its directory.
    fn path(&self, flag: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.or_else(|| Some(self.resolve(self.raw(key)?)))
    }

    fn resolve(&self, value: &str) -> PathBuf {
        let v = PathBuf::from(value.trim());
        match (&self.path, v.is_relative()) {
            (Some(cfg), true) => cfg.parent().unwrap_or(Path::new(".")).join(v),
            _ => v,
        }
    }

    fn methods(&self, flag: Vec<Method>, default: &[Method]) -> Result<Vec<Method>, Failure> {
        if !flag.is_empty() {
            return Ok(flag);
        }
        match self.raw("method") {
            None => Ok(default.to_vec()),
            Some(list) => list
                .split(',')
                .map(|m| m.parse::<Method>().map_err(|e| Failure::new(EXIT_ERROR, format!("config: {e}"))))
                .collect(),
        }
    }
}

fn positive(v: usize, what: &str) -> Result<usize, Failure> {
    if v == 0 {
        Err(Failure::new(EXIT_ERROR, format!("{what} must be positive")))
    } else {
        Ok(v)
    }
}

fn synthesis_options(cfg: &Config, tol: Option<f64>) -> Result<SynthesisOptions<f64>, Failure> {
    let mut opts = SynthesisOptions::default();
    if let Some(t) = cfg.get(tol, "tol")? {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Failure::new(EXIT_ERROR, "tolerance must be positive"));
        }
        opts.solver = opts.solver.with_tolerance(t);
    }
    Ok(opts)
}

fn load(cfg: &Config, flag: Option<PathBuf>) -> Result<LtiSystem<f64>, Failure> {
    let path = cfg.path(flag, "system").ok_or_else(|| Failure::new(EXIT_ERROR, "no system given (--system)"))?;
    let mut sys: LtiSystem<f64> =
        model::load_system(&path).map_err(|e| Failure::new(EXIT_ERROR, format!("{}: {e}", path.display())))?;
    if sys.name.is_none() {
        sys.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    }
    Ok(sys)
}

fn write_or_print(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::new(EXIT_ERROR, format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn ensure_valid(sys: &LtiSystem<f64>) -> Outcome {
    let rep = model::validate(sys);
    if rep.passed() {
        Ok(())
    } else {
        Err(Failure::new(EXIT_INVALID, format!("system failed validation:\n{rep}")))
    }
}

// ---------------------------------------------------------------------------

fn cmd_check(cfg: &Config, args: Common) -> Outcome {
    let sys = load(cfg, args.system)?;
    let rep = model::validate(&sys);
    print!("{rep}");
    if rep.passed() {
        Ok(())
    } else {
        Err(Failure::new(EXIT_INVALID, "validation failed"))
    }
}

fn cmd_synth(cfg: &Config, args: SynthArgs) -> Outcome {
    let sys = load(cfg, args.common.system.clone())?;
    ensure_valid(&sys)?;
    let methods = cfg.methods(args.common.method.clone(), &[Method::Cr])?;
    let [method] = methods[..] else {
        return Err(Failure::new(EXIT_ERROR, "synth takes exactly one method"));
    };
    let mut opts = synthesis_options(cfg, args.common.tol)?;
    opts.cr_path = args.path.map(|p| match p {
        PathArg::General => CrPath::General,
        PathArg::Square => CrPath::Square,
        PathArg::Scalar => CrPath::Scalar,
    });
    let (report, ctrl) = match method {
        Method::Cr => {
            let (c, k) = synthesis::synth_cr(&sys, &opts)?;
            (c.report(), k)
        }
        Method::H2 => {
            let (c, k) = synthesis::synth_h2(&sys, &opts)?;
            (
                format!(
                    "riccati_residual = {:.3e}\nspectral_radius.closed_loop = {:.6}\n",
                    c.residual, c.closed_loop_radius
                ),
                k,
            )
        }
        Method::Regret => {
            let (c, k) = synthesis::synth_regret(&sys, &opts)?;
            (
                format!(
                    "regret = {:.16e}\nspectral_radius.closed_loop = {:.6}\n",
                    c.value, c.closed_loop_radius
                ),
                k,
            )
        }
        Method::Hinf => {
            let (c, k) = synthesis::synth_hinf(&sys, &opts)?;
            (
                format!(
                    "gamma = {:.16e}\ngamma_lower = {:.16e}\nbisection_steps = {}\nspectral_radius.closed_loop = {:.6}\n",
                    c.gamma, c.lower, c.iterations, c.closed_loop_radius
                ),
                k,
            )
        }
        Method::Noncausal => return Err(SynthesisError::NotRealizable(method).into()),
    };
    println!("method = {method}");
    print!("{report}");
    let text = model::format_controller(&ctrl.to_file());
    match cfg.path(args.common.out, "out") {
        Some(p) => write_or_print(Some(&p), &text),
        None => {
            println!();
            write_or_print(None, &text)
        }
    }
}

fn controllers(
    sys: &LtiSystem<f64>,
    methods: &[Method],
    opts: &SynthesisOptions<f64>,
) -> Result<Vec<(Method, Option<ControllerRealization<f64>>)>, Failure> {
    methods
        .iter()
        .map(|&m| match m {
            Method::Noncausal => Ok((m, None)),
            _ => Ok((m, Some(synthesis::synthesize(sys, m, opts)?))),
        })
        .collect()
}

fn metrics(
    sys: &LtiSystem<f64>,
    methods: &[Method],
    grid: usize,
    opts: &SynthesisOptions<f64>,
) -> Result<freqeval::FrequencyMetrics<f64>, Failure> {
    let ctrls = controllers(sys, methods, opts)?;
    let ctx = FreqContext::new(sys, &opts.solver)?;
    let list: Vec<(String, Evaluated<'_, f64>)> = ctrls
        .iter()
        .map(|(m, c)| {
            let ev = match c {
                Some(c) => Evaluated::Causal(c),
                None => Evaluated::Noncausal,
            };
            (m.name().to_string(), ev)
        })
        .collect();
    Ok(freqeval::sweep(&ctx, &list, &Grid::new(grid))?)
}

fn cmd_sweep(cfg: &Config, args: Common) -> Outcome {
    let sys = load(cfg, args.system.clone())?;
    ensure_valid(&sys)?;
    let methods = cfg.methods(args.method.clone(), &Method::ALL)?;
    let grid = positive(cfg.get(args.grid, "grid")?.unwrap_or(1024), "grid")?;
    let opts = synthesis_options(cfg, args.tol)?;
    let fm = metrics(&sys, &methods, grid, &opts)?;
    if let Some(p) = cfg.path(args.out, "out") {
        write_or_print(Some(&p), &fm.to_csv())?;
    }
    print!("{}", fm.summary_table());
    Ok(())
}

fn cmd_table(cfg: &Config, args: TableArgs) -> Outcome {
    let systems: Vec<PathBuf> = if args.system.is_empty() {
        cfg.raw("system").map(|s| s.split(',').map(|p| cfg.resolve(p)).collect()).unwrap_or_default()
    } else {
        args.system.clone()
    };
    if systems.is_empty() {
        return Err(Failure::new(EXIT_ERROR, "no system given (--system)"));
    }
    let methods = cfg.methods(args.method.clone(), &Method::ALL)?;
    let grid = positive(cfg.get(args.grid, "grid")?.unwrap_or(1024), "grid")?;
    let opts = synthesis_options(cfg, args.tol)?;
    let mut text = String::new();
    for path in systems {
        let sys = load(cfg, Some(path))?;
        ensure_valid(&sys)?;
        let fm = metrics(&sys, &methods, grid, &opts)?;
        text.push_str(&format!(
            "# {} (n={}, p={}, m={})\n",
            sys.name.as_deref().unwrap_or("system"),
            sys.n(),
            sys.p(),
            sys.m()
        ));
        text.push_str(&fm.summary_table());
        text.push('\n');
    }
    write_or_print(cfg.path(args.out, "out").as_deref(), &text)
}

fn disturbance(cfg: &Config, args: &SimArgs, m: usize) -> Result<DisturbanceKind<f64>, Failure> {
    let kind = args.disturbance.clone().or_else(|| cfg.raw("disturbance").map(str::to_string));
    let kind = kind.unwrap_or_else(|| "gaussian".into());
    match kind.as_str() {
        "gaussian" => Ok(DisturbanceKind::Gaussian { seed: cfg.get(args.seed, "seed")?.unwrap_or(0) }),
        "sine" => {
            let omega = cfg.get(args.omega, "omega")?.unwrap_or(0.016);
            Ok(DisturbanceKind::sine(omega, m))
        }
        path => {
            let data = sim::load_disturbance_file(Path::new(path), m)?;
            Ok(DisturbanceKind::File { data: Arc::new(data) })
        }
    }
}

fn cmd_sim(cfg: &Config, args: SimArgs) -> Outcome {
    let sys = load(cfg, args.common.system.clone())?;
    let steps = positive(cfg.get(args.steps, "steps")?.unwrap_or(10_000), "steps")?;
    let trials = positive(cfg.get(args.trials, "trials")?.unwrap_or(1), "trials")?;
    let kind = disturbance(cfg, &args, sys.m())?;
    let spec = DisturbanceSpec { kind, horizon: steps };
    let so = SimOptions { trials, record_stride: (steps / 1000).max(1), ..Default::default() };

    let mut runs: Vec<(String, ControllerRealization<f64>)> = Vec::new();
    if let Some(path) = cfg.path(args.controller.clone(), "controller") {
        let file = model::load_controller(&path).map_err(|e| Failure::new(EXIT_ERROR, format!("{}: {e}", path.display())))?;
        let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "controller".into());
        runs.push((label, ControllerRealization::from_file(&sys, file)?));
    } else {
        ensure_valid(&sys)?;
        let methods = cfg.methods(args.common.method.clone(), &[Method::H2, Method::Hinf, Method::Regret, Method::Cr])?;
        let opts = synthesis_options(cfg, args.common.tol)?;
        for (m, c) in controllers(&sys, &methods, &opts)? {
            match c {
                Some(c) => runs.push((m.name().into(), c)),
                None => return Err(SynthesisError::NotRealizable(m).into()),
            }
        }
    }

    let mut running = String::from("controller,t,trial,cost_avg\n");
    let mut summary = String::from(sim::SUMMARY_HEADER);
    for (label, ctrl) in &runs {
        let res = sim::simulate(&sys, ctrl, &spec, &so)?;
        for line in res.running_csv().lines().skip(1) {
            running.push_str(&format!("{label},{line}\n"));
        }
        summary.push_str(&res.summary_row(label));
    }
    if let Some(p) = cfg.path(args.common.out.clone(), "out") {
        write_or_print(Some(&p), &running)?;
    }
    print!("{summary}");
    Ok(())
}

fn configure_threads() {
    let n = std::env::var("COMPET_CTL_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()).unwrap_or(0);
    if n > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    configure_threads();
    let result = Config::load(cli.config.as_deref()).and_then(|cfg| match cli.command {
        Command::Check(a) => cmd_check(&cfg, a),
        Command::Synth(a) => cmd_synth(&cfg, a),
        Command::Sweep(a) => cmd_sweep(&cfg, a),
        Command::Sim(a) => cmd_sim(&cfg, a),
        Command::Table(a) => cmd_table(&cfg, a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
