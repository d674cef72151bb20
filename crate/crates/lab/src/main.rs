use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use journe_core::carleson::{cm_ell_norm, cm_norm, cm_rec_norm, CarlesonWeight, CmMode, CmReport};
use journe_core::embedding::{emb_all, enlarged_set, EmbVariant, EnlargementSpec};
use journe_core::geometry::{DyadicInterval, RectCollection, Region};
use journe_core::grids::{shifted_cover, verify_grid_property, AxisFamily, GridFamily, GridSpec, ShiftedGridId};
use journe_core::haar::bmo_norms;
use journe_core::io::{collection_from_json, collection_to_json};
use journe_core::journe::{good_bad_decompose, replay, GoodBadResult, GoodBadTrace, SelectionOrder};
use journe_core::maximal::{lattice_family, superlevel, StepFunction, Threshold, DEFAULT_CAP};
use journe_core::num::{fmt_rational, parse_rational, serde_rational, Rational};

use journe_lab::gen::{gen_collection, instance_rng, random_step, random_weight, GenMode};
use journe_lab::ledger::Ledger;
use journe_lab::report::{append_csv, to_csv, EmbedRow, SuiteRow};
use journe_lab::verify::{judge_rows, verify_collection, VerifyVariant};
use journe_lab::{judge, LabError, LabResult, Suite, SuiteConfig};

const EXIT_VIOLATION: u8 = 1;
const EXIT_USAGE: u8 = 2;

/// Seeded corpora and exact verifiers for Journé-type covering lemmas.
#[derive(Parser)]
#[command(name = "journe-lab", version)]
struct Cli {
    /// Corpus seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write observed metrics into the ledger instead of comparing.
    #[arg(long, global = true)]
    freeze: bool,
    /// Enumeration cap.
    #[arg(long, global = true)]
    cap: Option<usize>,
    /// Regression ledger file.
    #[arg(long, global = true, default_value = "ledger.json")]
    ledger: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a collection, Carleson weight or step function.
    Gen(GenArgs),
    /// Embeddedness sums over a collection, or a whole suite.
    Verify(VerifyArgs),
    /// Good/bad decomposition with a replayable trace.
    Decompose {
        #[arg(long, default_value = "8/9")]
        theta: String,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Member indices selected first, comma separated.
        #[arg(long, value_delimiter = ',')]
        priority: Vec<usize>,
    },
    /// Re-run a decomposition from its trace.
    Replay {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Carleson norms of a weight.
    Cm {
        #[arg(long)]
        alpha: PathBuf,
        #[arg(long, default_value = "exact")]
        mode: CmMode,
    },
    /// Product BMO norms of a step function.
    Bmo {
        #[arg(long)]
        input: PathBuf,
    },
    #[command(subcommand)]
    Grids(GridsCommand),
    #[command(subcommand)]
    Maximal(MaximalCommand),
    #[command(subcommand)]
    Embed(EmbedCommand),
    #[command(subcommand)]
    Ledger(LedgerCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Collection,
    Weight,
    Step,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum, default_value = "collection")]
    kind: GenKind,
    /// Suite configuration; the flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<GenMode>,
    #[arg(long)]
    dim: Option<usize>,
    /// Collection size, number of weight entries or of step terms.
    #[arg(long)]
    n: Option<usize>,
    /// Scale range `kmin..kmax`.
    #[arg(long, allow_hyphen_values = true)]
    scales: Option<String>,
    /// Instance index within the corpus.
    #[arg(long, default_value_t = 0)]
    index: u64,
}

#[derive(Args)]
struct VerifyArgs {
    /// classic, uniform, redux, pipher-rect, few or uniform-high.
    #[arg(long, conflicts_with = "suite", required_unless_present = "suite")]
    variant: Option<String>,
    /// Run a corpus suite instead of a single collection.
    #[arg(long)]
    suite: Option<Suite>,
    /// Suite configuration (with --suite).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "1/2")]
    epsilon: String,
    #[arg(long, required_unless_present = "suite")]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    subsets: usize,
    /// Shifted-grid depth for uniform-high.
    #[arg(long, default_value_t = 1)]
    depth: u32,
    /// CSV report, appended to.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GridsCommand {
    /// Nested-or-disjoint check of the dyadic grid and every shifted grid of a depth.
    Check {
        #[arg(long)]
        depth: u32,
        #[arg(long, default_value = "-6..6", allow_hyphen_values = true)]
        scales: String,
        #[arg(long, default_value_t = 64)]
        offsets: i64,
    },
    /// Shifted-grid witnesses for `I ± δ|I|`.
    Cover {
        #[arg(long)]
        depth: u32,
        #[arg(long, allow_negative_numbers = true)]
        scale: i32,
        #[arg(long, allow_negative_numbers = true)]
        offset: i64,
    },
}

#[derive(Subcommand)]
enum MaximalCommand {
    /// `{M^F f > λ}` for a region indicator or step function.
    Superlevel {
        /// dyadic, shifted:d or lattice:r.
        #[arg(long)]
        family: String,
        #[arg(long)]
        lambda: String,
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Subcommand)]
enum EmbedCommand {
    /// Embeddedness of every member as CSV.
    Report {
        /// uniform, dir:j or pair.
        #[arg(long)]
        variant: String,
        /// family,lambda,iterations with family dyadic or shifted:d.
        #[arg(long, default_value = "dyadic,1/2,1")]
        enl: String,
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Subcommand)]
enum LedgerCommand {
    /// Print the ledger.
    Show,
    /// Print a suite's default corpus configuration.
    Config { suite: Suite },
    /// Run suites (all when none given) against the ledger.
    Run {
        suites: Vec<Suite>,
        /// CSV report of per-instance rows, appended to.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

/// Failure with its exit code.
struct Exit(u8, String);

impl From<LabError> for Exit {
    fn from(e: LabError) -> Self {
        Exit(EXIT_USAGE, e.to_string())
    }
}

impl From<journe_core::Error> for Exit {
    fn from(e: journe_core::Error) -> Self {
        Exit(EXIT_USAGE, e.to_string())
    }
}

type CmdResult = Result<u8, Exit>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Exit(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: &Cli) -> CmdResult {
    let cap = cli.cap.unwrap_or(DEFAULT_CAP);
    match &cli.command {
        Command::Gen(args) => gen(cli, args),
        Command::Verify(args) => verify(cli, args, cap),
        Command::Decompose { theta, input, trace, priority } => {
            let u = read_collection(input)?;
            let theta = rational(theta)?;
            let order = if priority.is_empty() {
                SelectionOrder::AreaThenLex
            } else {
                SelectionOrder::Priority(priority.clone())
            };
            let r = good_bad_decompose(&u, &theta, &order)?;
            if let Some(p) = trace {
                write_file(p, &json(&r.trace))?;
            }
            let floor = Rational::from_integer(1.into()) - &theta;
            let frac = r.min_private_fraction();
            let summary = DecomposeSummary {
                good: r.good.len(),
                bad: r.bad.iter().map(RectCollection::len).collect(),
                min_private_fraction: frac.clone(),
                steps: r.trace.steps.len(),
            };
            emit(cli, &json(&summary))?;
            Ok(if frac >= floor { 0 } else { EXIT_VIOLATION })
        }
        Command::Replay { input, trace } => {
            let u = read_collection(input)?;
            let t: GoodBadTrace = serde_json::from_str(&read_file(trace)?).map_err(LabError::from)?;
            let r: GoodBadResult = replay(&u, &t)?;
            emit(cli, &json(&r))?;
            Ok(0)
        }
        Command::Cm { alpha, mode } => {
            let w: CarlesonWeight = serde_json::from_str(&read_file(alpha)?).map_err(LabError::from)?;
            let cm = cm_norm(&w, cap, *mode)?;
            let ell = if *mode == CmMode::Exact {
                (1..w.dim()).map(|l| cm_ell_norm(&w, l, cap)).collect::<Result<Vec<_>, _>>()?
            } else {
                Vec::new()
            };
            emit(cli, &json(&CmOutput { cm, rec: cm_rec_norm(&w), ell }))?;
            Ok(0)
        }
        Command::Bmo { input } => {
            let b: StepFunction = serde_json::from_str(&read_file(input)?).map_err(LabError::from)?;
            emit(cli, &json(&bmo_norms(&b, cap)?))?;
            Ok(0)
        }
        Command::Grids(g) => grids(cli, g),
        Command::Maximal(MaximalCommand::Superlevel { family, lambda, input }) => {
            let text = read_file(input)?;
            let f = match serde_json::from_str::<Region>(&text) {
                Ok(r) => StepFunction::indicator(&r),
                Err(_) => serde_json::from_str::<StepFunction>(&text).map_err(LabError::from)?,
            };
            let lambda = rational(lambda)?;
            let fam = parse_family(family, f.dim(), Some((&f, &lambda)))?;
            emit(cli, &json(&superlevel(&fam, &f, &lambda, Threshold::Above, cap)?))?;
            Ok(0)
        }
        Command::Embed(EmbedCommand::Report { variant, enl, input }) => {
            let u = read_collection(input)?;
            let variant = parse_variant(variant)?;
            let spec = parse_enlargement(enl, u.dim())?;
            let v = enlarged_set(&u, &spec, cap)?;
            let rows: Vec<EmbedRow> = emb_all(&u, &variant, &v)?
                .into_iter()
                .zip(u.iter())
                .enumerate()
                .map(|(i, (e, r))| EmbedRow {
                    rect_id: i,
                    rect: r.to_string(),
                    emb: fmt_rational(&e.value),
                    mu: e.mu.iter().map(fmt_rational).collect::<Vec<_>>().join(";"),
                })
                .collect();
            emit(cli, &to_csv(&rows, true)?)?;
            Ok(0)
        }
        Command::Ledger(l) => ledger(cli, l),
    }
}

#[derive(Serialize)]
struct DecomposeSummary {
    good: usize,
    bad: Vec<usize>,
    #[serde(with = "serde_rational")]
    min_private_fraction: Rational,
    steps: usize,
}

#[derive(Serialize, Deserialize)]
struct CmOutput {
    cm: CmReport,
    rec: CmReport,
    /// `CM(ℓ)` for `ℓ = 1..d−1`.
    ell: Vec<CmReport>,
}

fn gen(cli: &Cli, a: &GenArgs) -> CmdResult {
    let mut cfg = match &a.config {
        Some(p) => SuiteConfig::load(p)?,
        None => SuiteConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    if let Some(d) = a.dim {
        cfg.dim = d;
    }
    if let Some(n) = a.n {
        (cfg.n_min, cfg.n_max) = (n, n);
    }
    if let Some(s) = &a.scales {
        (cfg.scale_min, cfg.scale_max) = range(s)?;
    }
    cfg.validate()?;
    let text = match a.kind {
        GenKind::Collection => collection_to_json(&gen_collection(&cfg, a.index)?),
        GenKind::Weight => {
            let mut rng = instance_rng(cfg.seed, a.index);
            json(&random_weight(&mut rng, cfg.dim, cfg.n_max, cfg.scale_min, cfg.scale_max))
        }
        GenKind::Step => {
            let mut rng = instance_rng(cfg.seed, a.index);
            json(&random_step(&mut rng, cfg.dim, cfg.n_max, cfg.scale_min, cfg.scale_max))
        }
    };
    emit(cli, &text)?;
    Ok(0)
}

fn verify(cli: &Cli, a: &VerifyArgs, cap: usize) -> CmdResult {
    let mut ledger = Ledger::load(&cli.ledger)?;
    if let Some(suite) = a.suite {
        let code = run_suites(cli, &[suite], a.config.as_deref(), a.report.as_deref(), &mut ledger)?;
        return Ok(code);
    }
    let variant: VerifyVariant = a.variant.as_deref().expect("clap requires a variant").parse()?;
    let input = a.input.as_ref().expect("clap requires an input");
    let u = read_collection(input)?;
    let epsilon = rational(&a.epsilon)?;
    let seed = cli.seed.unwrap_or(SuiteConfig::default().seed);
    let mut run = verify_collection(&u, variant, &epsilon, a.subsets, a.depth, seed, cap)?;
    let key = variant.ledger_key(&epsilon);
    let check = judge_rows(&mut run, &key, &mut ledger, seed, &input.display().to_string(), cli.freeze)?;
    if cli.freeze {
        ledger.save(&cli.ledger)?;
    }
    if let Some(p) = &a.report {
        append_csv(p, &run.rows)?;
    }
    emit(cli, &to_csv(&run.rows, true)?)?;
    eprintln!("{}", check.describe());
    for v in &run.violations {
        eprintln!("violation: {v}");
    }
    Ok(if check.within && run.violations.is_empty() { 0 } else { EXIT_VIOLATION })
}

fn run_suites(
    cli: &Cli,
    suites: &[Suite],
    config: Option<&Path>,
    report: Option<&Path>,
    ledger: &mut Ledger,
) -> Result<u8, Exit> {
    let mut code = 0;
    let mut verdicts = Vec::new();
    for s in suites {
        let mut cfg = match config {
            Some(p) => SuiteConfig::load(p)?,
            None => s.default_config(),
        };
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        if let Some(c) = cli.cap {
            cfg.cap = c;
        }
        let start = Instant::now();
        let outcome = s.run(&cfg)?;
        let rows: Vec<SuiteRow> = outcome.rows.clone();
        let v = judge(outcome, ledger, cli.freeze)?;
        eprintln!("{} [{:.1}s]", v.summary(), start.elapsed().as_secs_f64());
        if let Some(p) = report.or(cfg.report.as_deref()) {
            append_csv(p, &rows)?;
        }
        if !v.pass {
            code = EXIT_VIOLATION;
        }
        verdicts.push(v);
    }
    if cli.freeze {
        ledger.save(&cli.ledger)?;
    }
    emit(cli, &json(&verdicts))?;
    Ok(code)
}

fn grids(cli: &Cli, g: &GridsCommand) -> CmdResult {
    match g {
        GridsCommand::Check { depth, scales, offsets } => {
            let (lo, hi) = range(scales)?;
            let mut specs = vec![GridSpec::Dyadic];
            specs.extend(ShiftedGridId::all(*depth)?.into_iter().map(GridSpec::Shifted));
            let found: Vec<String> = specs
                .into_iter()
                .flat_map(|s| verify_grid_property(s, lo as i64..=hi as i64, -offsets..=*offsets))
                .map(|v| v.to_string())
                .collect();
            emit(cli, &json(&found))?;
            Ok(if found.is_empty() { 0 } else { EXIT_VIOLATION })
        }
        GridsCommand::Cover { depth, scale, offset } => {
            let c = shifted_cover(&DyadicInterval::new(*scale, *offset), *depth)?;
            let ok = c.plus.verify() && c.minus.verify();
            emit(cli, &json(&c))?;
            Ok(if ok { 0 } else { EXIT_VIOLATION })
        }
    }
}

fn ledger(cli: &Cli, l: &LedgerCommand) -> CmdResult {
    let mut ledger = Ledger::load(&cli.ledger)?;
    match l {
        LedgerCommand::Show => {
            emit(cli, &json(&ledger))?;
            Ok(0)
        }
        LedgerCommand::Config { suite } => {
            emit(cli, &suite.default_config().to_json())?;
            Ok(0)
        }
        LedgerCommand::Run { suites, report } => {
            let all = if suites.is_empty() { Suite::ALL.to_vec() } else { suites.clone() };
            run_suites(cli, &all, None, report.as_deref(), &mut ledger)
        }
    }
}

fn parse_family(s: &str, dim: usize, lattice_input: Option<(&StepFunction, &Rational)>) -> LabResult<GridFamily> {
    let bad = || LabError::Config(format!("unknown family {s:?}; expected dyadic, shifted:d or lattice:r"));
    match s.split_once(':') {
        None if s == "dyadic" => Ok(GridFamily::dyadic(dim)),
        Some(("shifted", d)) => {
            let depth = d.parse().map_err(|_| bad())?;
            Ok(GridFamily::uniform(AxisFamily::ShiftedUnion { depth }, dim))
        }
        Some(("lattice", r)) => {
            let r = r.parse().map_err(|_| bad())?;
            let (f, lambda) = lattice_input.ok_or_else(bad)?;
            Ok(lattice_family(f, lambda, r)?)
        }
        _ => Err(bad()),
    }
}

fn parse_enlargement(s: &str, dim: usize) -> LabResult<EnlargementSpec> {
    let parts: Vec<&str> = s.split(',').collect();
    let [family, lambda, iters] = parts.as_slice() else {
        return Err(LabError::Config(format!("--enl {s:?} is not family,lambda,iterations")));
    };
    let family = parse_family(family, dim, None)?;
    let iters = iters.parse().map_err(|_| LabError::Config(format!("bad iteration count {iters:?}")))?;
    Ok(EnlargementSpec::new(family, rational(lambda)?, iters))
}

fn parse_variant(s: &str) -> LabResult<EmbVariant> {
    match s {
        "uniform" => Ok(EmbVariant::Uniform),
        "pair" => Ok(EmbVariant::ProductPair { first: 0, second: 1 }),
        _ => s
            .strip_prefix("dir:")
            .and_then(|j| j.parse().ok())
            .map(EmbVariant::directional)
            .ok_or_else(|| LabError::Config(format!("unknown variant {s:?}; expected uniform, dir:j or pair"))),
    }
}

fn range(s: &str) -> LabResult<(i32, i32)> {
    let bad = || LabError::Config(format!("{s:?} is not a range a..b"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let a = a.trim().parse().map_err(|_| bad())?;
    let b = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
    if a > b {
        return Err(bad());
    }
    Ok((a, b))
}

fn rational(s: &str) -> LabResult<Rational> {
    Ok(parse_rational(s)?)
}

fn read_file(p: &Path) -> LabResult<String> {
    std::fs::read_to_string(p).map_err(|e| LabError::io(p, e))
}

fn write_file(p: &Path, text: &str) -> LabResult<()> {
    std::fs::write(p, text).map_err(|e| LabError::io(p, e))
}

fn read_collection(p: &Path) -> LabResult<RectCollection> {
    Ok(collection_from_json(&read_file(p)?)?)
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize")
}

fn emit(cli: &Cli, text: &str) -> LabResult<()> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match &cli.out {
        Some(p) => write_file(p, &text),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| LabError::io("<stdout>", e)),
    }
}
