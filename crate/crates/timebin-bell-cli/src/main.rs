//! Command-line surface for the time-bin Bell simulator.
//!
//! Exit codes: 0 success, 1 usage error, 2 verification failure, 3 data
//! error.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use timebin_bell::analysis::{
    fit_fringe, full_pipeline, run_chained_experiment, singles_histogram, table1_config,
    CoincidenceWindow, DeltaTauHistogram, FringeScan, PipelineReport, SinglesHistogram,
};
use timebin_bell::bell::{bounds, Bounds};
use timebin_bell::io;
use timebin_bell::lhv::{lhv_table_oracle, MIN_ORACLE_RESOLUTION};
use timebin_bell::quantum::{
    critical_visibility, joint_table, qm_chained_ch, qm_chained_chsh, StateModel,
};
use timebin_bell::settings::{
    build_run_plan, optimal_chained_settings, ChainedSettings, Functional, Phase,
    DEFAULT_RUN_DURATION_S,
};
use timebin_bell::simulator::{
    simulate_plan, simulate_run_labeled, ExperimentConfig, TimetagStream,
};

#[derive(Parser)]
#[command(
    name = "timebin-bell",
    version,
    about = "Chained Bell tests on time-bin entanglement: predictions, LHV verification, timetag simulation and analysis"
)]
struct Cli {
    /// Worker threads for the Monte Carlo cores (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output format for printed results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic predictions and the violation verdict for an n-chain.
    Predict {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        visibility: f64,
    },
    /// Check the local hidden variable model against the quantum table.
    LhvVerify {
        /// Theta-grid resolution of the integration oracle.
        #[arg(long, default_value_t = 1 << 16)]
        resolution: usize,
        /// Phase grid is `grid x grid` over [0, 2pi)^2.
        #[arg(long, default_value_t = 5)]
        grid: usize,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        /// Export the quantum and LHV joint tables per grid point as CSV.
        #[arg(long)]
        table_out: Option<PathBuf>,
    },
    /// Print the classical / time-bin / trivial bound families.
    Bounds {
        #[arg(long)]
        n: usize,
    },
    /// Generate timetag files for a full run plan from a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Analyze timetag files (TTB1 or CSV) into a Bell report.
    Analyze {
        /// Chain length of the schedule the files were produced for.
        #[arg(long)]
        n: usize,
        /// Timetag files; alternatively use --dir.
        files: Vec<PathBuf>,
        /// Read every *.ttb1/*.csv file in this directory.
        #[arg(long)]
        dir: Option<PathBuf>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Emit plot-ready CSVs (singles, delta-tau, results table) here.
        #[arg(long)]
        csv_dir: Option<PathBuf>,
    },
    /// End-to-end simulation and analysis at results-table scale.
    ReproduceTable1 {
        /// Chain length, one of 3, 4, 5.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.99)]
        visibility: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Per-run measurement time in seconds.
        #[arg(long, default_value_t = DEFAULT_RUN_DURATION_S)]
        duration: f64,
    },
    /// Simulate a coincidence fringe scan and fit its visibility.
    Fringe {
        #[arg(long, default_value_t = 24)]
        points: usize,
        #[arg(long, default_value_t = 0.99)]
        visibility: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Measurement time per scan point in seconds.
        #[arg(long, default_value_t = DEFAULT_RUN_DURATION_S)]
        duration: f64,
        /// Write the scan as CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum CliError {
    Usage(String),
    Verification(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Verification(_) => 2,
            CliError::Data(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Verification(m) | CliError::Data(m) => m,
        }
    }
}

impl From<timebin_bell::Error> for CliError {
    fn from(e: timebin_bell::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with exit 0
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("failed to configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command, cli.format) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(command: Command, format: Format) -> Result<(), CliError> {
    match command {
        Command::Predict { n, visibility } => cmd_predict(n, visibility, format),
        Command::LhvVerify {
            resolution,
            grid,
            tolerance,
            table_out,
        } => cmd_lhv_verify(resolution, grid, tolerance, table_out.as_deref(), format),
        Command::Bounds { n } => cmd_bounds(n, format),
        Command::Simulate {
            config,
            out_dir,
            seed,
        } => cmd_simulate(&config, &out_dir, seed, format),
        Command::Analyze {
            n,
            files,
            dir,
            out,
            csv_dir,
        } => cmd_analyze(
            n,
            &files,
            dir.as_deref(),
            out.as_deref(),
            csv_dir.as_deref(),
            format,
        ),
        Command::ReproduceTable1 {
            n,
            visibility,
            seed,
            duration,
        } => cmd_reproduce_table1(n, visibility, seed, duration, format),
        Command::Fringe {
            points,
            visibility,
            seed,
            duration,
            out,
        } => cmd_fringe(points, visibility, seed, duration, out.as_deref(), format),
    }
}

fn require_chain(n: usize) -> Result<(), CliError> {
    if n < 2 {
        return Err(CliError::Usage(format!(
            "chain length must be at least 2, got {n}"
        )));
    }
    Ok(())
}

/// Entropy fallback when no seed is given; the chosen seed is printed so the
/// run can be reproduced.
fn resolve_seed(seed: Option<u64>) -> u64 {
    match seed {
        Some(s) => s,
        None => {
            let s = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos() as u64)
                .unwrap_or(0)
                ^ (std::process::id() as u64) << 32;
            eprintln!("seed: {s} (no --seed given; pass it to reproduce this run)");
            s
        }
    }
}

// ---------------------------------------------------------------------------
// predict / bounds
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct Prediction {
    n: usize,
    s_qm: f64,
    s_lhv: f64,
    s_classical: f64,
    ch_qm: f64,
    ch_interval: (f64, f64),
    visibility: f64,
    expected_statistic: f64,
    critical_visibility: f64,
    violation_expected: bool,
    violation_possible: bool,
}

fn cmd_predict(n: usize, visibility: f64, format: Format) -> Result<(), CliError> {
    require_chain(n)?;
    if !(0.0..=1.0).contains(&visibility) {
        return Err(CliError::Usage(format!(
            "visibility must lie in [0, 1], got {visibility}"
        )));
    }
    let s_qm = qm_chained_chsh(n)?;
    let b = bounds(n)?;
    let vcr = critical_visibility(n)?;
    let p = Prediction {
        n,
        s_qm,
        s_lhv: b.timebin_chsh,
        s_classical: b.classical_chsh,
        ch_qm: qm_chained_ch(n)?,
        ch_interval: b.ch_interval,
        visibility,
        expected_statistic: visibility * s_qm,
        critical_visibility: vcr,
        violation_expected: visibility * s_qm > b.timebin_chsh,
        violation_possible: vcr < 1.0,
    };
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&p).map_err(to_data)?),
        Format::Csv => {
            println!("n,s_qm,s_lhv,s_classical,ch_qm,v,expected,v_cr,violation_expected");
            println!(
                "{},{:.6},{},{},{:.6},{},{:.6},{:.6},{}",
                p.n,
                p.s_qm,
                p.s_lhv,
                p.s_classical,
                p.ch_qm,
                p.visibility,
                p.expected_statistic,
                p.critical_visibility,
                p.violation_expected
            );
        }
        Format::Human => {
            println!(
                "chained Bell test with n = {n} settings per side (2n = {} terms)",
                2 * n
            );
            println!("  quantum statistic     S_QM  = {:.4}", p.s_qm);
            println!("  time-bin LHV bound    S_LHV = {}", p.s_lhv);
            println!("  classical bound             = {}", p.s_classical);
            println!("  CH quantum value            = {:.4}", p.ch_qm);
            println!(
                "  time-bin CH interval        = [{}, {}]",
                p.ch_interval.0, p.ch_interval.1
            );
            println!(
                "  expected statistic  V * S_QM = {:.4}  (V = {})",
                p.expected_statistic, p.visibility
            );
            println!(
                "  critical visibility   V_cr  = {:.4} ({:.2}%)",
                p.critical_visibility,
                100.0 * p.critical_visibility
            );
            if !p.violation_possible {
                println!("  verdict: no violation possible (quantum prediction stays below the time-bin bound)");
            } else if p.violation_expected {
                println!("  verdict: violation expected");
            } else {
                println!(
                    "  verdict: no violation at this visibility (needs V > {:.4})",
                    p.critical_visibility
                );
            }
        }
    }
    Ok(())
}

fn cmd_bounds(n: usize, format: Format) -> Result<(), CliError> {
    require_chain(n)?;
    let b: Bounds = bounds(n)?;
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&b).map_err(to_data)?),
        Format::Csv => {
            println!("classical_chsh,timebin_chsh,trivial_ee_chsh,ch_lo,ch_hi,ch_ll_lo,ch_ll_hi,ch_ee_lo,ch_ee_hi");
            println!(
                "{},{},{},{},{},{},{},{},{}",
                b.classical_chsh,
                b.timebin_chsh,
                b.trivial_ee_chsh,
                b.ch_interval.0,
                b.ch_interval.1,
                b.ch_ll_interval.0,
                b.ch_ll_interval.1,
                b.ch_ee_interval.0,
                b.ch_ee_interval.1
            );
        }
        Format::Human => {
            println!("bounds for the n = {n} chain:");
            println!("  classical CHSH bound     = {}", b.classical_chsh);
            println!("  time-bin CHSH bound      = {}", b.timebin_chsh);
            println!("  trivial EE CHSH bound    = {}", b.trivial_ee_chsh);
            println!(
                "  time-bin CH interval     = [{}, {}]",
                b.ch_interval.0, b.ch_interval.1
            );
            println!(
                "  LL-subensemble CH bound  = [{}, {}]",
                b.ch_ll_interval.0, b.ch_ll_interval.1
            );
            println!(
                "  EE-subensemble CH bound  = [{}, {}]",
                b.ch_ee_interval.0, b.ch_ee_interval.1
            );
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// lhv-verify
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct LhvVerifyOutput {
    resolution: usize,
    grid: usize,
    tolerance: f64,
    max_deviation: f64,
    el_cells_zero: bool,
    pass: bool,
}

fn cmd_lhv_verify(
    resolution: usize,
    grid: usize,
    tolerance: f64,
    table_out: Option<&Path>,
    format: Format,
) -> Result<(), CliError> {
    if resolution < MIN_ORACLE_RESOLUTION {
        return Err(CliError::Usage(format!(
            "resolution must be at least {MIN_ORACLE_RESOLUTION}"
        )));
    }
    if grid < 2 {
        return Err(CliError::Usage("grid must be at least 2".into()));
    }
    if let Some(dir) = table_out {
        std::fs::create_dir_all(dir).map_err(to_data_io)?;
    }
    let mut max_deviation = 0.0_f64;
    let mut el_cells_zero = true;
    for i in 0..grid {
        for j in 0..grid {
            let pa = Phase::new(i as f64 * TAU / grid as f64);
            let pb = Phase::new(j as f64 * TAU / grid as f64);
            let oracle = lhv_table_oracle(pa, pb, resolution)?;
            let quantum = joint_table(StateModel::IDEAL, pa, pb);
            max_deviation = max_deviation.max(oracle.max_abs_diff(&quantum));
            if let Some(dir) = table_out {
                std::fs::write(dir.join(format!("quantum_{i}_{j}.csv")), quantum.to_csv())
                    .map_err(to_data_io)?;
                std::fs::write(dir.join(format!("lhv_{i}_{j}.csv")), oracle.to_csv())
                    .map_err(to_data_io)?;
            }
            use timebin_bell::quantum::{Sign, Slot, SlotSign};
            for sa in Sign::ALL {
                for sb in Sign::ALL {
                    let el = oracle.get(
                        SlotSign::new(Slot::Early, sa),
                        SlotSign::new(Slot::Late, sb),
                    );
                    let le = oracle.get(
                        SlotSign::new(Slot::Late, sa),
                        SlotSign::new(Slot::Early, sb),
                    );
                    if el != 0.0 || le != 0.0 {
                        el_cells_zero = false;
                    }
                }
            }
        }
    }
    let pass = max_deviation < tolerance && el_cells_zero;
    let out = LhvVerifyOutput {
        resolution,
        grid,
        tolerance,
        max_deviation,
        el_cells_zero,
        pass,
    };
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&out).map_err(to_data)?),
        _ => {
            println!(
                "LHV model vs quantum table on a {grid}x{grid} phase grid at resolution {resolution}:"
            );
            println!("  max cell deviation = {max_deviation:.3e} (tolerance {tolerance:.1e})");
            println!("  E-L cells exactly zero: {el_cells_zero}");
            println!("  {}", if pass { "PASS" } else { "FAIL" });
        }
    }
    if !pass {
        return Err(CliError::Verification(format!(
            "max deviation {max_deviation:.3e} exceeds {tolerance:.1e} at resolution {resolution}; \
             the oracle converges as the resolution grows"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    experiment: ExperimentConfig,
    chain: ChainSpec,
    #[serde(default)]
    plan: PlanSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, untagged)]
enum ChainSpec {
    ByLength {
        n: usize,
    },
    Explicit {
        alice_phases: Vec<f64>,
        bob_phases: Vec<f64>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanSpec {
    #[serde(default = "default_functional")]
    functional: String,
    #[serde(default = "default_duration")]
    run_duration_s: f64,
    #[serde(default = "default_gap")]
    stabilization_gap_s: f64,
}

impl Default for PlanSpec {
    fn default() -> Self {
        PlanSpec {
            functional: default_functional(),
            run_duration_s: default_duration(),
            stabilization_gap_s: default_gap(),
        }
    }
}

fn default_functional() -> String {
    "chained-chsh".into()
}
fn default_duration() -> f64 {
    DEFAULT_RUN_DURATION_S
}
fn default_gap() -> f64 {
    timebin_bell::settings::DEFAULT_STABILIZATION_GAP_S
}

fn parse_functional(s: &str) -> Result<Functional, CliError> {
    match s {
        "chained-chsh" => Ok(Functional::ChainedChsh),
        "ch-form-1" => Ok(Functional::ChForm(1)),
        "ch-form-2" => Ok(Functional::ChForm(2)),
        "ch-form-3" => Ok(Functional::ChForm(3)),
        "ch-form-4" => Ok(Functional::ChForm(4)),
        other => Err(CliError::Usage(format!(
            "unknown functional {other:?}; use chained-chsh or ch-form-1..4"
        ))),
    }
}

#[derive(Serialize)]
struct SimulateManifest {
    seed: u64,
    runs: Vec<ManifestEntry>,
}

#[derive(Serialize)]
struct ManifestEntry {
    file: String,
    label: String,
    records: usize,
}

fn cmd_simulate(
    config_path: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    format: Format,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", config_path.display())))?;
    let mut config: SimulateConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("invalid config: {e}")))?;
    if let Some(s) = seed {
        config.experiment.seed = s;
    }
    let settings = match &config.chain {
        ChainSpec::ByLength { n } => {
            require_chain(*n)?;
            optimal_chained_settings(*n)?
        }
        ChainSpec::Explicit {
            alice_phases,
            bob_phases,
        } => ChainedSettings::new(
            alice_phases.iter().copied().map(Phase::new).collect(),
            bob_phases.iter().copied().map(Phase::new).collect(),
        )?,
    };
    let functional = parse_functional(&config.plan.functional)?;
    let mut plan = build_run_plan(&settings, functional, config.plan.run_duration_s)?;
    plan.stabilization_gap_s = config.plan.stabilization_gap_s;

    std::fs::create_dir_all(out_dir).map_err(to_data_io)?;
    let streams = simulate_plan(&config.experiment, &plan)?;
    let mut manifest = SimulateManifest {
        seed: config.experiment.seed,
        runs: Vec::new(),
    };
    for stream in &streams {
        let file_name = format!("{}.ttb1", stream.header.label.replace(':', "-"));
        let path = out_dir.join(&file_name);
        io::write_stream_to_path(stream, &path)?;
        manifest.runs.push(ManifestEntry {
            file: file_name,
            label: stream.header.label.clone(),
            records: stream.records.len(),
        });
    }
    let manifest_json = serde_json::to_string_pretty(&manifest).map_err(to_data)?;
    std::fs::write(out_dir.join("manifest.json"), &manifest_json).map_err(to_data_io)?;
    match format {
        Format::Json => println!("{manifest_json}"),
        _ => {
            println!(
                "wrote {} runs to {} (seed {})",
                manifest.runs.len(),
                out_dir.display(),
                manifest.seed
            );
            for entry in &manifest.runs {
                println!(
                    "  {:<14} {:>9} records  {}",
                    entry.label, entry.records, entry.file
                );
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct AnalyzeOutput {
    n: usize,
    files: usize,
    records_read: u64,
    report: PipelineReport,
}

fn cmd_analyze(
    n: usize,
    files: &[PathBuf],
    dir: Option<&Path>,
    out: Option<&Path>,
    csv_dir: Option<&Path>,
    format: Format,
) -> Result<(), CliError> {
    require_chain(n)?;
    let mut paths: Vec<PathBuf> = files.to_vec();
    if let Some(dir) = dir {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(to_data_io)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("ttb1") | Some("csv")
                )
            })
            .collect();
        entries.sort();
        paths.extend(entries);
    }
    if paths.is_empty() {
        return Err(CliError::Usage(
            "no input files; pass paths or --dir".into(),
        ));
    }
    let mut streams = Vec::with_capacity(paths.len());
    let mut records_read = 0u64;
    for p in &paths {
        let s = io::read_stream_auto(p)?;
        records_read += s.records.len() as u64;
        streams.push(s);
    }
    let settings = optimal_chained_settings(n)?;
    let report = full_pipeline(&streams, &settings, CoincidenceWindow::default())?;

    if let Some(csv_dir) = csv_dir {
        std::fs::create_dir_all(csv_dir).map_err(to_data_io)?;
        write_plot_csvs(csv_dir, &streams, &report)?;
    }

    let output = AnalyzeOutput {
        n,
        files: paths.len(),
        records_read,
        report,
    };
    let json = serde_json::to_string_pretty(&output).map_err(to_data)?;
    if let Some(out) = out {
        std::fs::write(out, &json).map_err(to_data_io)?;
    }
    match format {
        Format::Json => println!("{json}"),
        Format::Csv => print!("{}", output.report.to_table_csv()),
        Format::Human => {
            println!(
                "analyzed {} files, {} records, {} coincidences",
                output.files, output.records_read, output.report.total_coincidences
            );
            print_table(&output.report);
        }
    }
    Ok(())
}

fn write_plot_csvs(
    csv_dir: &Path,
    streams: &[TimetagStream],
    report: &PipelineReport,
) -> Result<(), CliError> {
    // aggregate singles and delta-tau over all runs
    let mut alice_total: Option<SinglesHistogram> = None;
    let mut bob_total: Option<SinglesHistogram> = None;
    let mut dtau_total: Option<DeltaTauHistogram> = None;
    for s in streams {
        let h = singles_histogram(s);
        accumulate(&mut alice_total, h.alice);
        accumulate(&mut bob_total, h.bob);
        let c = timebin_bell::analysis::count_coincidences(s, s, CoincidenceWindow::default())?;
        match &mut dtau_total {
            None => dtau_total = Some(c.delta_tau),
            Some(t) if t.counts.len() == c.delta_tau.counts.len() => {
                for (a, b) in t.counts.iter_mut().zip(&c.delta_tau.counts) {
                    *a += b;
                }
            }
            Some(_) => {}
        }
    }
    if let Some(h) = alice_total {
        std::fs::write(csv_dir.join("singles_alice.csv"), h.to_csv()).map_err(to_data_io)?;
    }
    if let Some(h) = bob_total {
        std::fs::write(csv_dir.join("singles_bob.csv"), h.to_csv()).map_err(to_data_io)?;
    }
    if let Some(h) = dtau_total {
        std::fs::write(csv_dir.join("delta_tau.csv"), h.to_csv()).map_err(to_data_io)?;
    }
    std::fs::write(csv_dir.join("table.csv"), report.to_table_csv()).map_err(to_data_io)?;
    Ok(())
}

fn accumulate(total: &mut Option<SinglesHistogram>, h: SinglesHistogram) {
    match total {
        None => *total = Some(h),
        Some(t) if t.counts.len() == h.counts.len() => {
            for (a, b) in t.counts.iter_mut().zip(&h.counts) {
                *a += b;
            }
        }
        Some(_) => {}
    }
}

// ---------------------------------------------------------------------------
// reproduce-table1 / fringe
// ---------------------------------------------------------------------------

fn print_table(report: &PipelineReport) {
    println!("  i      S_LHV,i    S_CH,i     err_S     Violation");
    for r in &report.ch_rows {
        println!(
            "  {}      {:>7.2}    {:>7.3}    {:>6.3}    {:>5.2} sigma",
            r.variant, r.lhv_bound, r.value, r.std_error, r.violation_sigma
        );
    }
    println!(
        "  S_CHSH {:>7.2}    {:>7.3}    {:>6.3}    {:>5.2} sigma",
        report.chsh.lhv_bound,
        report.chsh.statistic,
        report.chsh.std_error,
        report.chsh.violation_sigma
    );
}

#[derive(Serialize)]
struct Table1Output {
    n: usize,
    visibility: f64,
    seed: u64,
    run_duration_s: f64,
    report: PipelineReport,
}

fn cmd_reproduce_table1(
    n: usize,
    visibility: f64,
    seed: Option<u64>,
    duration: f64,
    format: Format,
) -> Result<(), CliError> {
    if !(3..=5).contains(&n) {
        return Err(CliError::Usage(format!(
            "reproduce-table1 supports n = 3, 4 or 5, got {n}"
        )));
    }
    if !(0.0..=1.0).contains(&visibility) {
        return Err(CliError::Usage(format!(
            "visibility must lie in [0, 1], got {visibility}"
        )));
    }
    let seed = resolve_seed(seed);
    let config = table1_config(visibility, seed);
    let report = run_chained_experiment(&config, n, duration)?;
    let output = Table1Output {
        n,
        visibility,
        seed,
        run_duration_s: duration,
        report,
    };
    let report = output.report.clone();
    match format {
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&output).map_err(to_data)?
        ),
        Format::Csv => print!("# seed {seed}\n{}", report.to_table_csv()),
        Format::Human => {
            println!(
                "n = {n}, visibility {visibility}, seed {seed}, {duration} s per run, {} coincidences",
                report.total_coincidences
            );
            print_table(&report);
            let verdict = if report.chsh.violation_sigma > 0.0 {
                "time-bin LHV bound violated"
            } else {
                "no violation"
            };
            println!("  -> {verdict}");
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct FringeOutput {
    seed: u64,
    points: usize,
    visibility: f64,
    fit: timebin_bell::analysis::FringeFit,
}

fn cmd_fringe(
    points: usize,
    visibility: f64,
    seed: Option<u64>,
    duration: f64,
    out: Option<&Path>,
    format: Format,
) -> Result<(), CliError> {
    if points < 4 {
        return Err(CliError::Usage("need at least 4 scan points".into()));
    }
    if !(0.0..=1.0).contains(&visibility) {
        return Err(CliError::Usage(format!(
            "visibility must lie in [0, 1], got {visibility}"
        )));
    }
    let seed = resolve_seed(seed);
    let mut config = table1_config(visibility, seed);
    config.pair_prob_per_pulse = 5e-3; // fringe scans want bright fringes
    let mut streams = Vec::with_capacity(points);
    for i in 0..points {
        let mut point_config = config;
        point_config.seed = timebin_bell::rng::derive_seed(seed, &[0xF1, i as u64]);
        streams.push(simulate_run_labeled(
            &point_config,
            &format!("scan:{i}"),
            Phase::new(i as f64 * TAU / points as f64),
            Phase::ZERO,
            duration,
        )?);
    }
    let scan = FringeScan::from_streams(&streams, CoincidenceWindow::default())?;
    if let Some(out) = out {
        std::fs::write(out, scan.to_csv()).map_err(to_data_io)?;
    }
    let fit = fit_fringe(&scan)?;
    let output = FringeOutput {
        seed,
        points,
        visibility,
        fit,
    };
    match format {
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&output).map_err(to_data)?
        ),
        _ => {
            println!("fringe scan: {points} points, injected V = {visibility}, seed {seed}");
            println!(
                "  fitted visibility = {:.4} +- {:.4}",
                fit.visibility, fit.visibility_std_error
            );
            println!(
                "  phase offset      = {:.4} +- {:.4} rad",
                fit.phase_offset_rad, fit.phase_offset_std_error
            );
            println!(
                "  mean level        = {:.1} +- {:.1} counts",
                fit.amplitude, fit.amplitude_std_error
            );
            println!("  contrast (max-min)/(max+min) = {:.4}", fit.contrast);
        }
    }
    Ok(())
}

fn to_data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn to_data_io(e: std::io::Error) -> CliError {
    CliError::Data(e.to_string())
}
