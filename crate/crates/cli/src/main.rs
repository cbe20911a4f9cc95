//! `jointmax`: run the joint double maximum test and its competitors on a
//! CSV file, inspect rank scores, or run a size/power simulation.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use jointmax::classical::{kw_test, relative_effects_mctp, PermutationPlan};
use jointmax::data::load_dataset_ordered;
use jointmax::maxt::{export_ci_plotdata, joint_double_max_test_with, Alternative, JointOptions, TestReport};
use jointmax::sim::{run_power_study, write_power_table, GlobalTest, PowerReport, ScenarioConfig};
use jointmax::{ContrastKind, ContrastMatrix, Dataset, DfPolicy, MvtOptions, ScoreSet};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "jointmax", version, about = "Joint double maximum test for one-way layouts")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "JOINTMAX_THREADS")]
    threads: Option<usize>,

    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Joint double maximum test over location, scale and shape scores.
    Joint(JointArgs),
    /// Kruskal-Wallis test with asymptotic and permutation p-values.
    Kw(KwArgs),
    /// Multiple contrast test on global-rank relative effects.
    Mctp(MctpArgs),
    /// Print mid-rank, Ansari-Bradley and Savage scores of the response.
    Scores(ScoresArgs),
    /// Monte Carlo size and power study.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct InputArgs {
    /// CSV file with a header row; `-` reads standard input.
    #[arg(short, long)]
    input: PathBuf,
    /// Name of the response column.
    #[arg(long, default_value = "value")]
    value: String,
    /// Name of the group column.
    #[arg(long, default_value = "group")]
    group: String,
    /// Comma-separated group order; the first group is the control for
    /// Dunnett contrasts. Defaults to order of first appearance.
    #[arg(long, value_delimiter = ',')]
    order: Option<Vec<String>>,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the result here instead of standard output.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ContrastArg {
    GrandMean,
    Dunnett,
}

impl From<ContrastArg> for ContrastKind {
    fn from(c: ContrastArg) -> Self {
        match c {
            ContrastArg::GrandMean => ContrastKind::GrandMean,
            ContrastArg::Dunnett => ContrastKind::Dunnett,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlternativeArg {
    TwoSided,
    Greater,
    Less,
}

impl From<AlternativeArg> for Alternative {
    fn from(a: AlternativeArg) -> Self {
        match a {
            AlternativeArg::TwoSided => Alternative::TwoSided,
            AlternativeArg::Greater => Alternative::Greater,
            AlternativeArg::Less => Alternative::Less,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DfArg {
    /// sum of (n_j - 4)
    SizeMinusFour,
    /// N - k
    Residual,
    /// multivariate normal
    Asymptotic,
}

impl From<DfArg> for DfPolicy {
    fn from(d: DfArg) -> Self {
        match d {
            DfArg::SizeMinusFour => DfPolicy::SizeMinusFour,
            DfArg::Residual => DfPolicy::Residual,
            DfArg::Asymptotic => DfPolicy::Asymptotic,
        }
    }
}

#[derive(Args)]
struct TestArgs {
    #[arg(long, value_enum, default_value_t = ContrastArg::GrandMean)]
    contrast: ContrastArg,
    #[arg(long, value_enum, default_value_t = AlternativeArg::TwoSided)]
    alternative: AlternativeArg,
    /// Seed for the randomized lattice integration.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Target absolute error of multivariate t probabilities.
    #[arg(long, default_value_t = 1e-4)]
    accuracy: f64,
}

#[derive(Args)]
struct JointArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    test: TestArgs,
    /// Simultaneous confidence level.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, value_enum, default_value_t = DfArg::SizeMinusFour)]
    df_policy: DfArg,
    /// Also write the location-block simultaneous limits as CSV.
    #[arg(long)]
    ci_out: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct KwArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Number of random permutations (0 disables the permutation p-value).
    #[arg(long, default_value_t = 10_000, conflicts_with = "exhaustive")]
    permutations: usize,
    /// Enumerate every distinct group assignment instead of sampling.
    #[arg(long)]
    exhaustive: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct MctpArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    test: TestArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ScoresArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML or JSON file with one scenario or a `scenarios` list.
    #[arg(long, required_unless_present = "presets")]
    scenario: Option<PathBuf>,
    /// Run the eight built-in scenarios (Normal and skewed, H0/H1 for
    /// location and scale).
    #[arg(long, conflicts_with = "scenario")]
    presets: bool,
    /// Replicates per preset scenario.
    #[arg(long, default_value_t = 10_000)]
    replicates: usize,
    /// Seed for the preset scenarios.
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Tests to run.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [TestArg::Joint, TestArg::Nonparmct, TestArg::Kw])]
    tests: Vec<TestArg>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestArg {
    Joint,
    Nonparmct,
    Kw,
}

impl From<TestArg> for GlobalTest {
    fn from(t: TestArg) -> Self {
        match t {
            TestArg::Joint => GlobalTest::Joint,
            TestArg::Nonparmct => GlobalTest::NonparMct,
            TestArg::Kw => GlobalTest::Kw,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScenarioFile {
    Many { scenarios: Vec<ScenarioConfig> },
    One(ScenarioConfig),
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'a str,
    seed: u64,
    result: T,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("JOINTMAX_LOG")
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Joint(a) => joint(a),
        Command::Kw(a) => kw(a),
        Command::Mctp(a) => mctp(a),
        Command::Scores(a) => scores(a),
        Command::Simulate(a) => simulate(a),
    }
}

fn load(input: &InputArgs) -> Result<Dataset> {
    let order = input.order.as_deref();
    let ds = if input.input.as_os_str() == "-" {
        load_dataset_ordered(io::stdin().lock(), &input.value, &input.group, order)
    } else {
        let file = File::open(&input.input).with_context(|| format!("opening {}", input.input.display()))?;
        load_dataset_ordered(file, &input.value, &input.group, order)
    };
    let ds = ds.with_context(|| format!("reading {}", input.input.display()))?;
    log::info!("{} observations in {} groups", ds.len(), ds.n_groups());
    Ok(ds)
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(out: &mut dyn Write, seed: u64, result: T) -> Result<()> {
    let env = Envelope {
        version: VERSION,
        seed,
        result,
    };
    serde_json::to_writer_pretty(&mut *out, &env)?;
    writeln!(out)?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.5}")).unwrap_or_else(|| "-".into())
}

fn fmt_df(df: f64) -> String {
    if df.is_finite() {
        format!("{df}")
    } else {
        "inf".into()
    }
}

fn joint(a: JointArgs) -> Result<()> {
    let ds = load(&a.input)?;
    let cm = ContrastMatrix::for_groups(a.test.contrast.into(), ds.group_order())?;
    let opts = JointOptions {
        alternative: a.test.alternative.into(),
        level: a.level,
        df_policy: a.df_policy.into(),
        mvt: MvtOptions::with_accuracy(a.test.accuracy),
        seed: a.test.seed,
        ..JointOptions::default()
    };
    let report = joint_double_max_test_with(&ds, &cm, &opts)?;

    if let Some(path) = &a.ci_out {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        export_ci_plotdata(&report, BufWriter::new(file))?;
    }

    let mut out = sink(a.output.out.as_deref())?;
    match a.output.format {
        Format::Json => write_json(&mut out, a.test.seed, &report)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record([
                "effect",
                "hypothesis",
                "estimate",
                "std_error",
                "statistic",
                "p_adjusted",
            ])?;
            for r in &report.rows {
                w.write_record([
                    r.effect.as_str().to_string(),
                    r.hypothesis.clone(),
                    format!("{:?}", r.estimate),
                    format!("{:?}", r.std_error),
                    format!("{:?}", r.statistic),
                    format!("{:?}", r.p_adjusted),
                ])?;
            }
            w.flush()?;
        }
        Format::Text => write_joint_text(&mut out, &report)?,
    }
    out.flush()?;
    Ok(())
}

fn write_joint_text(out: &mut dyn Write, report: &TestReport) -> Result<()> {
    writeln!(
        out,
        "Joint double maximum test ({}), df = {}",
        report.alternative,
        fmt_df(report.df)
    )?;
    writeln!(
        out,
        "{:<10} {:<14} {:>10} {:>10} {:>10} {:>10}",
        "effect", "hypothesis", "estimate", "std.error", "statistic", "p.adj"
    )?;
    for r in &report.rows {
        writeln!(
            out,
            "{:<10} {:<14} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
            r.effect.as_str(),
            r.hypothesis,
            r.estimate,
            r.std_error,
            r.statistic,
            r.p_adjusted
        )?;
    }
    writeln!(out, "global p-value: {:.5}", report.global_p)?;
    writeln!(out, "critical value: {:.5}", report.critical_value)?;
    if let Some(sci) = &report.sci {
        writeln!(out, "simultaneous {}% limits (location):", report.level * 100.0)?;
        for iv in sci {
            writeln!(
                out,
                "  {:<14} {:>10.5} [{}, {}]",
                iv.label,
                iv.estimate,
                fmt_opt(iv.lower),
                fmt_opt(iv.upper)
            )?;
        }
    }
    Ok(())
}

fn kw(a: KwArgs) -> Result<()> {
    let ds = load(&a.input)?;
    let plan = if a.exhaustive {
        Some(PermutationPlan::Exhaustive)
    } else if a.permutations > 0 {
        Some(PermutationPlan::monte_carlo(a.permutations, a.seed))
    } else {
        None
    };
    let r = kw_test(&ds, plan)?;
    let mut out = sink(a.output.out.as_deref())?;
    match a.output.format {
        Format::Json => write_json(&mut out, a.seed, &r)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["statistic", "df", "p_asymptotic", "p_permutation", "permutations"])?;
            w.write_record([
                format!("{:?}", r.statistic),
                r.df.to_string(),
                format!("{:?}", r.p_asymptotic),
                r.p_permutation.map(|p| format!("{p:?}")).unwrap_or_default(),
                r.permutations_used.to_string(),
            ])?;
            w.flush()?;
        }
        Format::Text => {
            writeln!(out, "Kruskal-Wallis test")?;
            writeln!(out, "H = {:.5}, df = {}", r.statistic, r.df)?;
            writeln!(out, "asymptotic p-value: {:.5}", r.p_asymptotic)?;
            if let Some(p) = r.p_permutation {
                writeln!(
                    out,
                    "permutation p-value: {:.5} ({} assignments)",
                    p, r.permutations_used
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn mctp(a: MctpArgs) -> Result<()> {
    let ds = load(&a.input)?;
    let cm = ContrastMatrix::for_groups(a.test.contrast.into(), ds.group_order())?;
    let r = relative_effects_mctp(
        &ds,
        &cm,
        a.test.alternative.into(),
        &MvtOptions::with_accuracy(a.test.accuracy),
        a.test.seed,
    )?;
    let mut out = sink(a.output.out.as_deref())?;
    match a.output.format {
        Format::Json => write_json(&mut out, a.test.seed, &r)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["hypothesis", "estimate", "std_error", "statistic", "p_adjusted"])?;
            for i in 0..r.contrast_labels.len() {
                w.write_record([
                    r.contrast_labels[i].clone(),
                    format!("{:?}", r.contrast_estimates[i]),
                    format!("{:?}", r.std_errors[i]),
                    format!("{:?}", r.statistics[i]),
                    format!("{:?}", r.p_adjusted[i]),
                ])?;
            }
            w.flush()?;
        }
        Format::Text => {
            writeln!(
                out,
                "Relative-effects multiple contrast test ({}), df = {:.5}",
                r.alternative, r.df
            )?;
            let effects: Vec<String> = r.effects.iter().map(|p| format!("{p:.5}")).collect();
            writeln!(out, "relative effects: {}", effects.join(" "))?;
            writeln!(
                out,
                "{:<14} {:>10} {:>10} {:>10} {:>10}",
                "hypothesis", "estimate", "std.error", "statistic", "p.adj"
            )?;
            for i in 0..r.contrast_labels.len() {
                writeln!(
                    out,
                    "{:<14} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
                    r.contrast_labels[i], r.contrast_estimates[i], r.std_errors[i], r.statistics[i], r.p_adjusted[i]
                )?;
            }
            writeln!(out, "global p-value: {:.5}", r.global_p)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    group: &'a str,
    value: f64,
    midrank: f64,
    ansari: f64,
    savage: f64,
}

fn scores(a: ScoresArgs) -> Result<()> {
    let ds = load(&a.input)?;
    let s = ScoreSet::compute(ds.values())?;
    let rows: Vec<ScoreRow> = (0..ds.len())
        .map(|i| ScoreRow {
            group: &ds.group_order()[ds.group_indices()[i]],
            value: ds.values()[i],
            midrank: s.midrank[i],
            ansari: s.ansari[i],
            savage: s.savage[i],
        })
        .collect();
    let mut out = sink(a.output.out.as_deref())?;
    match a.output.format {
        Format::Json => write_json(&mut out, 0, &rows)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Text => {
            writeln!(
                out,
                "{:<10} {:>10} {:>10} {:>10} {:>10}",
                "group", "value", "midrank", "ansari", "savage"
            )?;
            for r in &rows {
                writeln!(
                    out,
                    "{:<10} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
                    r.group, r.value, r.midrank, r.ansari, r.savage
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn read_scenarios(path: &Path) -> Result<Vec<ScenarioConfig>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let file: ScenarioFile = if is_json {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(match file {
        ScenarioFile::Many { scenarios } => scenarios,
        ScenarioFile::One(s) => vec![s],
    })
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let scenarios = match &a.scenario {
        Some(path) => read_scenarios(path)?,
        None => ScenarioConfig::presets(a.replicates, a.seed),
    };
    if scenarios.is_empty() {
        bail!("no scenarios to run");
    }
    let tests: Vec<GlobalTest> = a.tests.iter().map(|&t| t.into()).collect();
    let mut reports: Vec<PowerReport> = Vec::with_capacity(scenarios.len());
    for (i, s) in scenarios.iter().enumerate() {
        log::info!("scenario {}/{}: {}", i + 1, scenarios.len(), s.name);
        let r = run_power_study(s, &tests).with_context(|| format!("scenario {:?}", s.name))?;
        for t in &r.results {
            if t.failures > 0 {
                log::warn!("{}: {:?} failed on {} replicates", s.name, t.test, t.failures);
            }
        }
        reports.push(r);
    }
    let mut out = sink(a.output.out.as_deref())?;
    match a.output.format {
        Format::Json => write_json(&mut out, a.seed, &reports)?,
        Format::Csv => write_power_table(&mut out, &reports)?,
        Format::Text => {
            for r in &reports {
                writeln!(out, "{} ({} replicates)", r.scenario.name, r.scenario.n_replicates)?;
                for t in &r.results {
                    writeln!(
                        out,
                        "  {:<10} {:.5} (se {:.5}, failures {})",
                        t.test.column_name(),
                        t.proportion,
                        t.mc_std_error,
                        t.failures
                    )?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}
