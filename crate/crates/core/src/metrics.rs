//! Aggregates engine counters into bandwidth, utilization, stall and
//! roofline measurements and renders them as JSON, CSV or aligned text.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic;
use crate::engine::{RunOutcome, Simulator};
use crate::topology::ClusterConfig;
use crate::workloads::KernelSpec;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("reports compare different workloads: {0} vs {1}")]
    WorkloadMismatch(String, String),
    #[error("serialization failed: {0}")]
    Serialize(String),
}

/// Default reporting frequency for GFLOPS display: 910 MHz for the
/// 4-FPU-per-PE shapes, 875 MHz for the 8-FPU-per-PE shape.
pub fn default_frequency_hz(cfg: &ClusterConfig) -> f64 {
    if cfg.k_ports >= 8 {
        875e6
    } else {
        910e6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StallBreakdown {
    /// FPU-cycles lost waiting on remote request/response channels.
    pub port_contention: u64,
    /// FPU-cycles lost on bank queues and manager FIFOs.
    pub bank_conflict: u64,
    /// FPU-cycles the issue logic spent blocked on full reorder buffers.
    pub rob_full: u64,
    /// FPU-cycles idled between barrier arrival and release.
    pub barrier_idle: u64,
    /// FPU-cycles with compute in flight.
    pub busy: u64,
    /// Everything else (transit latency, drained traces).
    pub idle: u64,
}

impl StallBreakdown {
    pub fn total(&self) -> u64 {
        self.port_contention + self.bank_conflict + self.rob_full + self.barrier_idle + self.busy + self.idle
    }
}

/// Structured record of one finished (or truncated) simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: ClusterConfig,
    pub workload: KernelSpec,
    pub seed: u64,
    pub total_cycles: u64,
    pub incomplete: bool,
    pub bytes_loaded: u64,
    pub bytes_stored: u64,
    /// bytes_loaded / total_cycles: the load path is what the bandwidth
    /// model prices, so stores are reported separately.
    pub aggregate_bw: f64,
    pub avg_bw_per_pe: f64,
    /// Same figures with the warm-up window excluded.
    pub warmup_cycles: u64,
    pub steady_aggregate_bw: f64,
    pub steady_avg_bw_per_pe: f64,
    pub total_flops: u64,
    /// executed FLOPs / (2 FLOPs x FPUs x cycles).
    pub fpu_utilization: f64,
    /// FLOPs over loaded plus stored bytes for this run.
    pub measured_intensity: f64,
    pub performance_flop_per_cycle: f64,
    pub frequency_hz: f64,
    pub gflops: f64,
    pub stall_breakdown: StallBreakdown,
    pub barrier_skew_max: u64,
    pub barrier_count: u32,
}

/// Folds a finished simulation into a report.
pub fn summarize(sim: &Simulator, outcome: RunOutcome, workload: &KernelSpec, frequency_hz: Option<f64>) -> RunReport {
    let cfg = sim.config().clone();
    let k = sim.counters();
    let cycles = outcome.total_cycles.max(1);
    let aggregate_bw = k.bytes_loaded as f64 / cycles as f64;
    let steady_cycles = outcome.total_cycles.saturating_sub(sim.warmup_cycles());
    let steady_aggregate_bw = if steady_cycles > 0 {
        sim.bytes_loaded_after_warmup() as f64 / steady_cycles as f64
    } else {
        0.0
    };
    let n_fpus = cfg.n_fpus() as u64;
    let fpu_utilization = k.flops as f64 / (2.0 * (n_fpus * cycles) as f64);
    let moved = k.bytes_loaded + k.bytes_stored;
    let frequency_hz = frequency_hz.unwrap_or_else(|| default_frequency_hz(&cfg));
    let performance = k.flops as f64 / cycles as f64;
    let kp = cfg.k_ports as u64;
    RunReport {
        schema_version: 1,
        workload: workload.clone(),
        seed: sim.options().seed,
        total_cycles: outcome.total_cycles,
        incomplete: outcome.incomplete,
        bytes_loaded: k.bytes_loaded,
        bytes_stored: k.bytes_stored,
        aggregate_bw,
        avg_bw_per_pe: aggregate_bw / cfg.n_pe as f64,
        warmup_cycles: sim.warmup_cycles(),
        steady_aggregate_bw,
        steady_avg_bw_per_pe: steady_aggregate_bw / cfg.n_pe as f64,
        total_flops: k.flops,
        fpu_utilization,
        measured_intensity: if moved == 0 { 0.0 } else { k.flops as f64 / moved as f64 },
        performance_flop_per_cycle: performance,
        frequency_hz,
        gflops: performance * frequency_hz / 1e9,
        stall_breakdown: StallBreakdown {
            port_contention: k.pe_cycles_port * kp,
            bank_conflict: k.pe_cycles_bank * kp,
            rob_full: k.pe_cycles_rob_full * kp,
            barrier_idle: k.pe_cycles_barrier * kp,
            busy: k.pe_cycles_busy * kp,
            idle: k.pe_cycles_idle * kp,
        },
        barrier_skew_max: k.barrier_skews.iter().copied().max().unwrap_or(0),
        barrier_count: k.barrier_skews.len() as u32,
        config: cfg,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "text" => Ok(ReportFormat::Text),
            other => Err(format!("unknown format `{other}` (json, csv or text)")),
        }
    }
}

pub const REPORT_CSV_COLUMNS: &[&str] = &[
    "preset_shape",
    "mode",
    "gf",
    "workload",
    "seed",
    "total_cycles",
    "incomplete",
    "bytes_loaded",
    "bytes_stored",
    "aggregate_bw",
    "avg_bw_per_pe",
    "steady_aggregate_bw",
    "steady_avg_bw_per_pe",
    "total_flops",
    "fpu_utilization",
    "measured_intensity",
    "performance_flop_per_cycle",
    "gflops",
    "stall_port_contention",
    "stall_bank_conflict",
    "stall_rob_full",
    "stall_barrier_idle",
];

pub fn report_csv_header() -> String {
    REPORT_CSV_COLUMNS.join(",")
}

pub fn report_csv_row(r: &RunReport) -> String {
    format!(
        "{}x{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{:.6},{:.6},{:.6},{:.6},{},{},{},{}",
        r.config.n_pe,
        r.config.k_ports,
        r.config.mode,
        r.config.effective_gf(),
        r.workload.kind,
        r.seed,
        r.total_cycles,
        r.incomplete,
        r.bytes_loaded,
        r.bytes_stored,
        r.aggregate_bw,
        r.avg_bw_per_pe,
        r.steady_aggregate_bw,
        r.steady_avg_bw_per_pe,
        r.total_flops,
        r.fpu_utilization,
        r.measured_intensity,
        r.performance_flop_per_cycle,
        r.gflops,
        r.stall_breakdown.port_contention,
        r.stall_breakdown.bank_conflict,
        r.stall_breakdown.rob_full,
        r.stall_breakdown.barrier_idle,
    )
}

/// Serializes a report. JSON is stable field-for-field (no timestamps), so
/// identical runs emit identical bytes.
pub fn emit(report: &RunReport, format: ReportFormat) -> Result<String, MetricsError> {
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(report).map_err(|e| MetricsError::Serialize(e.to_string()))
        }
        ReportFormat::Csv => Ok(format!("{}\n{}\n", report_csv_header(), report_csv_row(report))),
        ReportFormat::Text => Ok(render_text(report)),
    }
}

fn render_text(r: &RunReport) -> String {
    let s = &r.stall_breakdown;
    format!(
        "cluster            {} PEs x {} ports, {} mode, gf {}\n\
         workload           {} (size {}, seed {})\n\
         cycles             {}{}\n\
         bytes loaded       {}\n\
         bytes stored       {}\n\
         aggregate bw       {:.3} B/cyc ({:.3} per PE)\n\
         steady-state bw    {:.3} B/cyc ({:.3} per PE, warm-up {} cycles)\n\
         fpu utilization    {:.2}%\n\
         intensity          {:.4} FLOP/B\n\
         performance        {:.2} FLOP/cyc = {:.2} GFLOPS @ {:.0} MHz\n\
         stalls (fpu-cyc)   port {} bank {} rob {} barrier {} busy {} idle {}\n\
         barriers           {} (max skew {} cycles)\n",
        r.config.n_pe,
        r.config.k_ports,
        r.config.mode,
        r.config.effective_gf(),
        r.workload.kind,
        r.workload.size,
        r.seed,
        r.total_cycles,
        if r.incomplete { " (incomplete)" } else { "" },
        r.bytes_loaded,
        r.bytes_stored,
        r.aggregate_bw,
        r.avg_bw_per_pe,
        r.steady_aggregate_bw,
        r.steady_avg_bw_per_pe,
        r.warmup_cycles,
        r.fpu_utilization * 100.0,
        r.measured_intensity,
        r.performance_flop_per_cycle,
        r.gflops,
        r.frequency_hz / 1e6,
        s.port_contention,
        s.bank_conflict,
        s.rob_full,
        s.barrier_idle,
        s.busy,
        s.idle,
        r.barrier_count,
        r.barrier_skew_max,
    )
}

/// Improvement of run `b` over run `a`, as signed percentages (x2.76 shows
/// as +176%).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub bandwidth_ratio: f64,
    pub bandwidth_improvement_pct: f64,
    pub performance_ratio: f64,
    pub performance_improvement_pct: f64,
    pub cycles_ratio: f64,
    pub speedup_pct: f64,
}

pub fn compare(a: &RunReport, b: &RunReport) -> Result<Comparison, MetricsError> {
    let sig = |r: &RunReport| {
        format!(
            "{}:{}:{}:{}:{}",
            r.workload.kind, r.workload.size, r.workload.instances, r.workload.total_flops, r.workload.bytes_loaded
        )
    };
    let (sa, sb) = (sig(a), sig(b));
    if sa != sb {
        return Err(MetricsError::WorkloadMismatch(sa, sb));
    }
    let bw_ratio = b.steady_aggregate_bw / a.steady_aggregate_bw;
    let perf_ratio = if a.performance_flop_per_cycle > 0.0 {
        b.performance_flop_per_cycle / a.performance_flop_per_cycle
    } else {
        bw_ratio
    };
    let cycles_ratio = a.total_cycles as f64 / b.total_cycles as f64;
    Ok(Comparison {
        bandwidth_ratio: bw_ratio,
        bandwidth_improvement_pct: (bw_ratio - 1.0) * 100.0,
        performance_ratio: perf_ratio,
        performance_improvement_pct: (perf_ratio - 1.0) * 100.0,
        cycles_ratio,
        speedup_pct: (cycles_ratio - 1.0) * 100.0,
    })
}

/// Roofline consistency: a run may not beat the ideal bound at its own
/// intensity.
pub fn attainable_bound(report: &RunReport) -> f64 {
    let pair = analytic::roofline(&report.config, analytic::ProbabilityModel::Paper, None);
    pair.ideal.attainable(report.measured_intensity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{SimOptions, Simulator};
    use crate::topology::{preset, Preset};
    use crate::workloads::{gen_dotp, gen_random, BaseAlignment};

    fn small_report(seed: u64) -> RunReport {
        let cfg = preset(Preset::Mp4Spatz4);
        let trace = gen_random(&cfg, 40, seed, BaseAlignment::Word).unwrap();
        let mut sim = Simulator::new(&cfg, &trace, SimOptions { seed, ..Default::default() }).unwrap();
        let outcome = sim.run().unwrap();
        summarize(&sim, outcome, &trace.spec, None)
    }

    #[test]
    fn zero_traffic_report_is_all_zeros() {
        let cfg = preset(Preset::Mp4Spatz4);
        let trace = crate::workloads::trace_from_text(4, "").unwrap();
        let mut sim = Simulator::new(&cfg, &trace, SimOptions::default()).unwrap();
        let outcome = sim.run().unwrap();
        let r = summarize(&sim, outcome, &trace.spec, None);
        assert_eq!(r.aggregate_bw, 0.0);
        assert_eq!(r.bytes_loaded, 0);
        assert_eq!(r.fpu_utilization, 0.0);
    }

    #[test]
    fn json_round_trips_field_for_field() {
        let r = small_report(1);
        let text = emit(&r, ReportFormat::Json).unwrap();
        let back: RunReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn identical_runs_emit_identical_json() {
        let a = emit(&small_report(7), ReportFormat::Json).unwrap();
        let b = emit(&small_report(7), ReportFormat::Json).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_header_matches_documented_columns() {
        let r = small_report(2);
        let csv = emit(&r, ReportFormat::Csv).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), report_csv_header());
        let row = lines.next().unwrap();
        assert_eq!(row.split(',').count(), REPORT_CSV_COLUMNS.len());
    }

    #[test]
    fn performance_is_utilization_times_peak() {
        let cfg = preset(Preset::Mp64Spatz4);
        let trace = gen_dotp(&cfg, 8192).unwrap();
        let mut sim = Simulator::new(&cfg, &trace, SimOptions::default()).unwrap();
        let outcome = sim.run().unwrap();
        let r = summarize(&sim, outcome, &trace.spec, None);
        let peak = 512.0;
        assert!((r.performance_flop_per_cycle - r.fpu_utilization * peak).abs() < 1e-9);
        assert!(r.performance_flop_per_cycle <= attainable_bound(&r) + 1e-9);
    }

    #[test]
    fn stall_accounting_closure() {
        let r = small_report(3);
        assert_eq!(
            r.stall_breakdown.total(),
            r.total_cycles * r.config.n_fpus() as u64
        );
    }

    #[test]
    fn aggregate_bw_cannot_exceed_cluster_peak() {
        let r = small_report(4);
        let peak = r.config.n_pe as f64 * r.config.k_ports as f64 * 4.0;
        assert!(r.aggregate_bw <= peak);
        assert!(r.steady_aggregate_bw <= peak * 1.0001);
    }

    #[test]
    fn compare_is_antisymmetric_in_ratio_space() {
        let a = small_report(5);
        let b = small_report(5);
        let c = compare(&a, &b).unwrap();
        assert!((c.bandwidth_improvement_pct).abs() < 1e-12);
        // 2.76x shows as +176%
        let mut fast = a.clone();
        fast.steady_aggregate_bw = a.steady_aggregate_bw * 2.76;
        fast.performance_flop_per_cycle = a.performance_flop_per_cycle * 2.76;
        let c = compare(&a, &fast).unwrap();
        assert!((c.bandwidth_improvement_pct - 176.0).abs() < 1e-9);
        let inv = compare(&fast, &a).unwrap();
        assert!((c.bandwidth_ratio * inv.bandwidth_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn compare_rejects_mismatched_workloads() {
        let cfg = preset(Preset::Mp4Spatz4);
        let a = small_report(6);
        let trace = gen_dotp(&cfg, 512).unwrap();
        let mut sim = Simulator::new(&cfg, &trace, SimOptions::default()).unwrap();
        let outcome = sim.run().unwrap();
        let b = summarize(&sim, outcome, &trace.spec, None);
        assert!(compare(&a, &b).is_err());
    }
}
