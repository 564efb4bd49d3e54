//! Command-line front end: analytic model tables, single simulations,
//! parameter sweeps and roofline datasets.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tcdmsim::analytic::{self, ProbabilityModel};
use tcdmsim::engine::{SimOptions, Simulator};
use tcdmsim::metrics::{self, ReportFormat, RunReport};
use tcdmsim::runspec::{overrides_from_file, parse_levels, ConfigOverrides, WorkloadSpec};
use tcdmsim::topology::{AccessMode, ClusterConfig, Preset};
use tcdmsim::workloads::BaseAlignment;

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_DEADLOCK: u8 = 3;

/// Directory prepended to relative --out paths.
const OUT_DIR_ENV: &str = "TCDMSIM_OUT_DIR";

#[derive(Parser)]
#[command(name = "tcdmsim", version, about = "Shared-L1 vector cluster bandwidth model and cycle-level simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form bandwidth table and estimates.
    Model(ModelArgs),
    /// One deterministic simulation run.
    Simulate(SimulateArgs),
    /// Cross-product of presets, modes, grouping factors and seeds.
    Sweep(SweepArgs),
    /// Roofline bounds plus simulated kernel points, plot-ready.
    Roofline(RooflineArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Preset shape: mp4spatz4, mp64spatz4, mp128spatz8 or `all` (model only).
    #[arg(long)]
    preset: Option<String>,
    /// Flat key/value config file (TOML, ClusterConfig field names).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_pe: Option<u32>,
    #[arg(long)]
    k_ports: Option<u32>,
    #[arg(long)]
    ccs_per_tile: Option<u32>,
    #[arg(long)]
    banks_per_cc: Option<u32>,
    #[arg(long)]
    bank_capacity_words: Option<u32>,
    /// Response-channel grouping factor.
    #[arg(long)]
    gf: Option<u32>,
    /// Access mode: baseline or burst.
    #[arg(long)]
    mode: Option<AccessMode>,
    #[arg(long)]
    rob_depth: Option<u32>,
    #[arg(long)]
    vlen_bits: Option<u32>,
    #[arg(long)]
    burst_fifo_depth: Option<u32>,
    /// Hierarchy as name:fanout:latency,... from the tile outward.
    #[arg(long)]
    levels: Option<String>,
    /// Remote ports per hierarchy level, comma-separated.
    #[arg(long, value_delimiter = ',')]
    remote_ports: Option<Vec<u32>>,
}

impl ConfigArgs {
    fn overrides(&self) -> Result<ConfigOverrides, CliError> {
        let mut ov = match &self.config {
            Some(path) => overrides_from_file(path).map_err(validation)?,
            None => ConfigOverrides::default(),
        };
        // flags override file values
        ov.n_pe = self.n_pe.or(ov.n_pe);
        ov.k_ports = self.k_ports.or(ov.k_ports);
        ov.ccs_per_tile = self.ccs_per_tile.or(ov.ccs_per_tile);
        ov.banks_per_cc = self.banks_per_cc.or(ov.banks_per_cc);
        ov.bank_capacity_words = self.bank_capacity_words.or(ov.bank_capacity_words);
        ov.gf = self.gf.or(ov.gf);
        ov.mode = self.mode.or(ov.mode);
        ov.rob_depth = self.rob_depth.or(ov.rob_depth);
        ov.vlen_bits = self.vlen_bits.or(ov.vlen_bits);
        ov.burst_fifo_depth = self.burst_fifo_depth.or(ov.burst_fifo_depth);
        if let Some(levels) = &self.levels {
            ov.levels = Some(parse_levels(levels).map_err(usage)?);
        }
        if let Some(ports) = &self.remote_ports {
            ov.remote_ports_per_level = Some(ports.clone());
        }
        Ok(ov)
    }

    fn resolve(&self) -> Result<ClusterConfig, CliError> {
        let base = match self.preset.as_deref() {
            Some(name) => tcdmsim::topology::preset_by_name(name).map_err(validation)?,
            None if self.config.is_some() => {
                // a config file without a preset must define a full shape;
                // start from the smallest preset and let the file override
                tcdmsim::topology::preset(Preset::Mp4Spatz4)
            }
            None => tcdmsim::topology::preset(Preset::Mp64Spatz4),
        };
        self.overrides()?.apply(base).map_err(validation)
    }
}

#[derive(Args)]
struct ModelArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Grouping factors for the comparison table.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    gf_list: Vec<u32>,
    /// Probability model: paper or geometric.
    #[arg(long, default_value = "paper")]
    prob: ProbabilityModel,
    #[arg(long, default_value = "text")]
    format: ReportFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    workload: WorkloadArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    cycle_limit: Option<u64>,
    /// Abort if nothing progresses for this many cycles.
    #[arg(long, default_value_t = 10_000)]
    deadlock_window: u64,
    /// Also run the gf=1 baseline of the same shape and report improvements.
    #[arg(long)]
    paired: bool,
    /// Reporting frequency in MHz for GFLOPS (defaults per shape).
    #[arg(long)]
    freq_mhz: Option<f64>,
    #[arg(long, default_value = "text")]
    format: ReportFormat,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a per-cycle counter trace (cycle, bytes, fpus, stalls) as CSV.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct WorkloadArgs {
    /// random, dotp, matmul or fft.
    #[arg(long, default_value = "random")]
    workload: String,
    /// Problem size: elements (dotp), matrix dimension (matmul), points (fft).
    #[arg(long)]
    n: Option<u64>,
    /// Parallel kernel instances (fft).
    #[arg(long, default_value_t = 1)]
    instances: u32,
    /// Vector loads per PE for the random kernel.
    #[arg(long, default_value_t = 1000)]
    vectors_per_pe: u32,
    /// Random base alignment: word or group.
    #[arg(long, default_value = "word")]
    align: BaseAlignment,
    /// Inject an external trace file instead of generating one.
    #[arg(long)]
    trace_in: Option<PathBuf>,
}

impl WorkloadArgs {
    fn spec(&self) -> Result<WorkloadSpec, CliError> {
        if let Some(path) = &self.trace_in {
            return Ok(WorkloadSpec::TraceFile { path: path.display().to_string() });
        }
        Ok(match self.workload.as_str() {
            "random" => WorkloadSpec::Random {
                vectors_per_pe: self.vectors_per_pe,
                alignment: self.align,
            },
            "dotp" => WorkloadSpec::Dotp { n: self.n.ok_or_else(|| usage("dotp needs --n"))? },
            "matmul" => WorkloadSpec::Matmul { n: self.n.ok_or_else(|| usage("matmul needs --n"))? },
            "fft" => WorkloadSpec::Fft {
                n_points: self.n.ok_or_else(|| usage("fft needs --n"))?,
                instances: self.instances,
            },
            other => return Err(usage(format!("unknown workload `{other}`"))),
        })
    }
}

#[derive(Args)]
struct SweepArgs {
    /// Presets to sweep.
    #[arg(long, value_delimiter = ',', default_value = "mp4spatz4,mp64spatz4,mp128spatz8")]
    presets: Vec<String>,
    /// Grouping factors; gf 1 runs in baseline mode, others in burst mode.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    gfs: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[command(flatten)]
    workload: WorkloadArgs,
    #[arg(long)]
    cycle_limit: Option<u64>,
    #[arg(long, default_value = "csv")]
    format: ReportFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RooflineArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Kernels to place on the roofline (simulated in both modes).
    #[arg(long, value_delimiter = ',', default_value = "dotp,fft,matmul")]
    kernels: Vec<String>,
    /// Burst-mode grouping factor for the kernel points.
    #[arg(long, default_value_t = 4)]
    gf: u32,
    /// Skip simulation; emit the bound curves only.
    #[arg(long)]
    bounds_only: bool,
    #[arg(long, default_value_t = 48)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct CliError {
    code: u8,
    msg: String,
}

fn usage(msg: impl ToString) -> CliError {
    CliError { code: EXIT_USAGE, msg: msg.to_string() }
}

fn validation(err: impl ToString) -> CliError {
    CliError { code: EXIT_VALIDATION, msg: err.to_string() }
}

fn write_output(out: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    match out {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(path) => {
            let path = resolve_out_path(path);
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent).map_err(|e| validation(format!("{}: {e}", parent.display())))?;
                }
            }
            let mut f = std::fs::File::create(&path).map_err(|e| validation(format!("{}: {e}", path.display())))?;
            f.write_all(content.as_bytes()).map_err(|e| validation(format!("{}: {e}", path.display())))?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn resolve_out_path(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // keep clap's rendering but pin the usage exit code
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help { ExitCode::SUCCESS } else { ExitCode::from(EXIT_USAGE) };
        }
    };
    let result = match cli.command {
        Command::Model(args) => cmd_model(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Roofline(args) => cmd_roofline(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}

fn cmd_model(args: ModelArgs) -> Result<(), CliError> {
    let wants_preset_table =
        args.config.preset.as_deref() == Some("all") || (args.config.preset.is_none() && args.config.config.is_none() && args.config.overrides()?.is_empty());
    let content = if wants_preset_table {
        let rows = analytic::table1(&args.gf_list);
        match args.format {
            ReportFormat::Csv => analytic::render_table_csv(&rows),
            _ => analytic::render_table_text(&rows),
        }
    } else {
        let mut out = String::new();
        for &gf in &args.gf_list {
            let mut cfg = args.config.resolve()?;
            cfg.gf = gf;
            if gf > 1 {
                cfg.mode = AccessMode::Burst;
            }
            let cfg = cfg.validate().map_err(validation)?;
            let est = analytic::avg_bw(&cfg, args.prob);
            match args.format {
                ReportFormat::Json => {
                    out.push_str(&serde_json::to_string_pretty(&est).map_err(validation)?);
                    out.push('\n');
                }
                ReportFormat::Csv => {
                    if gf == args.gf_list[0] {
                        out.push_str("gf,bw_bytes_per_cycle,utilization_pct,improvement_pct\n");
                    }
                    out.push_str(&format!(
                        "{},{:.6},{:.6},{:.6}\n",
                        gf,
                        est.bw_hier_avg,
                        est.utilization * 100.0,
                        est.improvement_vs_baseline_pct
                    ));
                }
                ReportFormat::Text => {
                    out.push_str(&format!(
                        "gf {:>2}: {:>7.2} B/cyc  utilization {:>6.2}%  improvement {:>+8.2}%\n",
                        gf,
                        est.bw_hier_avg,
                        est.utilization * 100.0,
                        est.improvement_vs_baseline_pct
                    ));
                }
            }
        }
        out
    };
    write_output(&args.out, &content)
}

fn run_one(
    cfg: &ClusterConfig,
    spec: &WorkloadSpec,
    seed: u64,
    cycle_limit: Option<u64>,
    deadlock_window: u64,
    freq_hz: Option<f64>,
    collect_cycle_log: bool,
) -> Result<(RunReport, Option<String>), CliError> {
    let trace = spec.generate(cfg, seed).map_err(validation)?;
    let opts = SimOptions {
        seed,
        cycle_limit,
        deadlock_window,
        collect_cycle_log,
        ..Default::default()
    };
    let mut sim = Simulator::new(cfg, &trace, opts).map_err(validation)?;
    let outcome = sim.run().map_err(|e| CliError { code: EXIT_DEADLOCK, msg: e.to_string() })?;
    let report = metrics::summarize(&sim, outcome, &trace.spec, freq_hz);
    let log = sim.cycle_log().map(|rows| {
        let mut s = String::from("cycle,bytes_retired,active_fpus,stall_port,stall_bank,stall_rob,stall_barrier\n");
        for r in rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.cycle, r.bytes_retired, r.active_fpus, r.stall_port, r.stall_bank, r.stall_rob, r.stall_barrier
            ));
        }
        s
    });
    Ok((report, log))
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = args.config.resolve()?;
    let spec = args.workload.spec()?;
    let freq = args.freq_mhz.map(|m| m * 1e6);
    let (report, log) = run_one(
        &cfg,
        &spec,
        args.seed,
        args.cycle_limit,
        args.deadlock_window,
        freq,
        args.trace_out.is_some(),
    )?;
    if let (Some(path), Some(log)) = (&args.trace_out, log) {
        write_output(&Some(path.clone()), &log)?;
    }
    let mut content = metrics::emit(&report, args.format).map_err(validation)?;
    if args.paired {
        let mut base_cfg = cfg.clone();
        base_cfg.mode = AccessMode::Baseline;
        base_cfg.gf = 1;
        let base_cfg = base_cfg.validate().map_err(validation)?;
        let (base_report, _) = run_one(
            &base_cfg,
            &spec,
            args.seed,
            args.cycle_limit,
            args.deadlock_window,
            freq,
            false,
        )?;
        let cmp = metrics::compare(&base_report, &report).map_err(validation)?;
        match args.format {
            ReportFormat::Json => {
                content.push('\n');
                content.push_str(&serde_json::to_string_pretty(&cmp).map_err(validation)?);
                content.push('\n');
            }
            _ => {
                content.push_str(&format!(
                    "paired baseline     {:.3} B/cyc, {:.2} FLOP/cyc over {} cycles\n\
                     improvement         bandwidth {:+.2}%, performance {:+.2}%, speedup {:+.2}%\n",
                    base_report.steady_aggregate_bw,
                    base_report.performance_flop_per_cycle,
                    base_report.total_cycles,
                    cmp.bandwidth_improvement_pct,
                    cmp.performance_improvement_pct,
                    cmp.speedup_pct,
                ));
            }
        }
    }
    write_output(&args.out, &content)?;
    if report.incomplete {
        return Err(CliError { code: EXIT_DEADLOCK, msg: "cycle limit reached; run incomplete".into() });
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let spec = args.workload.spec()?;
    let mut reports: Vec<(String, Result<RunReport, String>)> = Vec::new();
    for preset_name in &args.presets {
        for &gf in &args.gfs {
            for &seed in &args.seeds {
                let cell = format!("{preset_name}/gf{gf}/seed{seed}");
                let run = (|| -> Result<RunReport, CliError> {
                    let mut cfg = tcdmsim::topology::preset_by_name(preset_name).map_err(validation)?;
                    if gf > 1 {
                        cfg.mode = AccessMode::Burst;
                        cfg.gf = gf;
                        cfg.rob_depth *= 2;
                    }
                    let cfg = cfg.validate().map_err(validation)?;
                    let (report, _) = run_one(&cfg, &spec, seed, args.cycle_limit, 10_000, None, false)?;
                    Ok(report)
                })();
                // record errors and keep sweeping
                reports.push((cell, run.map_err(|e| e.msg)));
            }
        }
    }
    let mut content = String::new();
    match args.format {
        ReportFormat::Json => {
            let values: Vec<serde_json::Value> = reports
                .iter()
                .map(|(cell, r)| match r {
                    Ok(rep) => serde_json::json!({"cell": cell, "report": rep}),
                    Err(e) => serde_json::json!({"cell": cell, "error": e}),
                })
                .collect();
            content = serde_json::to_string_pretty(&values).map_err(validation)?;
            content.push('\n');
        }
        _ => {
            content.push_str(&format!("cell,{}\n", metrics::report_csv_header()));
            for (cell, r) in &reports {
                match r {
                    Ok(rep) => content.push_str(&format!("{cell},{}\n", metrics::report_csv_row(rep))),
                    Err(e) => content.push_str(&format!("{cell},error: {}\n", e.replace('\n', " "))),
                }
            }
            // paired improvements per preset/seed against the gf=1 cell
            content.push_str("\npaired,baseline_cell,bandwidth_improvement_pct,performance_improvement_pct\n");
            for (cell, r) in &reports {
                let Ok(rep) = r else { continue };
                if rep.config.effective_gf() == 1 {
                    continue;
                }
                let base_cell_prefix = cell.split('/').next().unwrap_or_default();
                let seed_part = cell.rsplit('/').next().unwrap_or_default();
                let base_cell = format!("{base_cell_prefix}/gf1/{seed_part}");
                if let Some((_, Ok(base))) = reports.iter().find(|(c, _)| *c == base_cell) {
                    if let Ok(cmp) = metrics::compare(base, rep) {
                        content.push_str(&format!(
                            "{cell},{base_cell},{:+.3},{:+.3}\n",
                            cmp.bandwidth_improvement_pct, cmp.performance_improvement_pct
                        ));
                    }
                }
            }
        }
    }
    write_output(&args.out, &content)
}

fn cmd_roofline(args: RooflineArgs) -> Result<(), CliError> {
    let cfg = args.config.resolve()?;
    let freq = metrics::default_frequency_hz(&cfg);
    let pair = analytic::roofline(&cfg, ProbabilityModel::Paper, Some(freq));
    let mut content = String::from("kind,mode,intensity_flop_per_byte,flop_per_cycle,label\n");
    for (x, ideal, hier) in analytic::roofline_samples(&pair, args.samples) {
        content.push_str(&format!("bound,ideal,{x:.6},{ideal:.6},ideal no-contention\n"));
        content.push_str(&format!("bound,hier_avg,{x:.6},{hier:.6},hierarchical average\n"));
    }
    if !args.bounds_only {
        let size_for = |kernel: &str| -> Option<WorkloadSpec> {
            match kernel {
                "dotp" => Some(WorkloadSpec::Dotp { n: 1024 * cfg.n_pe as u64 }),
                "matmul" => Some(WorkloadSpec::Matmul { n: 64.max(cfg.vlen_words() as u64) }),
                "fft" => Some(WorkloadSpec::Fft { n_points: 512, instances: 1 }),
                _ => None,
            }
        };
        for kernel in &args.kernels {
            let Some(spec) = size_for(kernel) else {
                return Err(usage(format!("unknown kernel `{kernel}`")));
            };
            for (mode, gf) in [(AccessMode::Baseline, 1u32), (AccessMode::Burst, args.gf)] {
                let mut kcfg = cfg.clone();
                kcfg.mode = mode;
                kcfg.gf = gf;
                if mode == AccessMode::Burst {
                    kcfg.rob_depth = cfg.rob_depth * 2;
                }
                let kcfg = kcfg.validate().map_err(validation)?;
                let (report, _) = run_one(&kcfg, &spec, args.seed, None, 10_000, Some(freq), false)?;
                content.push_str(&format!(
                    "kernel,{},{:.6},{:.6},{}\n",
                    mode, report.measured_intensity, report.performance_flop_per_cycle, kernel
                ));
            }
        }
    }
    write_output(&args.out, &content)
}
