//! Deterministic cycle-driven simulation of the cluster: PEs (VLSU ports,
//! reorder buffers, burst sender), remote request/response channels, burst
//! managers and scratchpad banks, in baseline and burst access modes.
//!
//! # Cycle structure
//!
//! Each cycle advances in a fixed phase order, with stages closer to
//! retirement updated first so a freed reorder-buffer slot is reusable the
//! same cycle:
//!
//! 1. response delivery (beats arriving from remote channels fill ROB slots)
//! 2. retire (per port, the head slot completed on an earlier cycle leaves)
//! 3. response injection (one beat per response channel enters the network)
//! 4. request arrival (transfers reaching their tile queue at banks/managers)
//! 5. PE processing (barrier release, FPU execution, group issue)
//! 6. request grant (one transfer per request channel enters the network)
//! 7. manager dispatch (one pending sub-burst fans out to the group's banks)
//! 8. bank access (one operation per bank; local data visible immediately)
//!
//! A round-trip latency of L splits into (L-1)/2 request traversal, one bank
//! cycle and (L-1)/2 response traversal. Local accesses issue, read the bank
//! and deliver in the same cycle; they retire one cycle after issue. A remote
//! access granted on cycle g retires on cycle g + L when uncontended.
//!
//! Remote channels are instantiated per PE and per hierarchical port class
//! (the classes `topology::remote_port_of` assigns), one transfer per cycle
//! per direction: a PE's k parallel words serialize onto one class channel,
//! which is precisely the serialization the closed-form model prices at
//! 4 bytes/cycle, while the grouping factor widens each response transfer to
//! `gf` words.

mod components;

use std::collections::BTreeMap;

use components::*;
use serde::Serialize;
use thiserror::Error;

use crate::topology::{AccessMode, ClusterConfig, TopologyError, WORD_BYTES};
use crate::workloads::{validate_trace, TraceItem, WorkloadError, WorkloadTrace};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("deadlock at cycle {cycle}: no component progressed for {window} cycles\n{diagnostic}")]
    Deadlock {
        cycle: u64,
        window: u64,
        diagnostic: String,
    },
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    /// Echoed into reports; the engine itself is deterministic.
    pub seed: u64,
    pub cycle_limit: Option<u64>,
    /// Abort when nothing progresses for this many cycles.
    pub deadlock_window: u64,
    /// Keep every retired (address, value) pair per PE (test oracles).
    pub record_retirements: bool,
    /// Cycles excluded from steady-state bandwidth; defaults to
    /// max(20, 2 x outermost round-trip latency).
    pub warmup: Option<u64>,
    /// Collect one counters row per cycle.
    pub collect_cycle_log: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            seed: 0,
            cycle_limit: None,
            deadlock_window: 10_000,
            record_retirements: false,
            warmup: None,
            collect_cycle_log: false,
        }
    }
}

/// Event counters accumulated over a run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Counters {
    pub bytes_loaded: u64,
    pub bytes_stored: u64,
    pub flops: u64,
    pub loads_issued_words: u64,
    pub loads_retired_words: u64,
    pub req_transfers: u64,
    pub rsp_beats: u64,
    /// PE-cycles per stall cause (multiply by k_ports for FPU-cycles).
    pub pe_cycles_busy: u64,
    pub pe_cycles_barrier: u64,
    pub pe_cycles_rob_full: u64,
    pub pe_cycles_port: u64,
    pub pe_cycles_bank: u64,
    pub pe_cycles_idle: u64,
    pub max_rob_occupancy: u32,
    pub barrier_skews: Vec<u64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CycleRow {
    pub cycle: u64,
    pub bytes_retired: u64,
    pub active_fpus: u64,
    pub stall_port: u32,
    pub stall_bank: u32,
    pub stall_rob: u32,
    pub stall_barrier: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct RunOutcome {
    pub total_cycles: u64,
    pub incomplete: bool,
}

/// Splits the word range [base, base+len) at every gf-aligned bank-group
/// boundary, in ascending order. Group boundaries are word-index multiples of
/// gf; tile edges and the capacity wrap always coincide with one because gf
/// divides the banks per tile. Every piece spans at most gf words and maps to
/// exactly one burst manager.
pub fn burst_split(cfg: &ClusterConfig, base_word: u64, len: u32) -> Vec<(u64, u32)> {
    let gf = cfg.effective_gf() as u64;
    let cap = cfg.capacity_words();
    let mut out = Vec::new();
    let mut start = 0u64;
    while start < len as u64 {
        let word = (base_word + start) % cap;
        let take = (gf - word % gf).min(len as u64 - start);
        out.push((word, take as u32));
        start += take;
    }
    out
}

pub struct Simulator {
    cfg: ClusterConfig,
    opts: SimOptions,
    // routing tables
    n_tiles: u32,
    ports_per_tile: u32,
    level_of: Vec<u8>,
    port_of: Vec<u8>,
    /// One-way in-flight cycles per level: (L-1)/2 - 1.
    fly_of_level: Vec<u64>,
    total_banks: u64,
    banks_per_tile: u32,
    cap_words: u64,
    mgrs_per_tile: u32,
    // state
    mem: Vec<u32>,
    pes: Vec<Pe>,
    banks: Vec<Bank>,
    mgrs: Vec<Manager>,
    req_lanes: Vec<ReqLane>,
    rsp_lanes: Vec<RspLane>,
    barriers: BTreeMap<u32, BarrierState>,
    cycle: u64,
    last_progress: u64,
    progressed: bool,
    outstanding: u64,
    done: bool,
    warmup: u64,
    warmup_bytes: u64,
    counters: Counters,
    retired_pairs: Option<Vec<Vec<(u64, u32)>>>,
    cycle_log: Option<Vec<CycleRow>>,
    // per-cycle scratch
    bytes_this_cycle: u64,
    flops_this_cycle: u64,
    stall_row: [u32; 4],
}

impl Simulator {
    pub fn new(cfg: &ClusterConfig, trace: &WorkloadTrace, opts: SimOptions) -> Result<Simulator, SimError> {
        let cfg = cfg.clone().validate()?;
        validate_trace(&cfg, trace)?;
        let n_tiles = cfg.n_tiles();
        let ports_per_tile = cfg.ports_per_tile();
        let mut level_of = vec![0u8; (n_tiles * n_tiles) as usize];
        let mut port_of = vec![0u8; (n_tiles * n_tiles) as usize];
        for s in 0..n_tiles {
            for d in 0..n_tiles {
                let idx = (s * n_tiles + d) as usize;
                level_of[idx] = cfg.level_index_between(s, d) as u8;
                if s != d {
                    port_of[idx] = cfg.remote_port_of(s, d).unwrap() as u8;
                }
            }
        }
        let fly_of_level: Vec<u64> = cfg
            .levels
            .iter()
            .map(|l| ((l.round_trip_latency_cycles as u64 - 1) / 2).saturating_sub(1))
            .collect();
        let total_banks = cfg.total_banks() as u64;
        let cap_words = cfg.capacity_words();
        // integrity pattern: the token stored at (bank b, word i) is the flat
        // word address i * total_banks + b
        let capw = cfg.bank_capacity_words as u64;
        let mut mem = vec![0u32; cap_words as usize];
        for b in 0..total_banks {
            for i in 0..capw {
                mem[(b * capw + i) as usize] = (i * total_banks + b) as u32;
            }
        }
        let mgrs_per_tile = if cfg.mode == AccessMode::Burst {
            cfg.banks_per_tile() / cfg.effective_gf()
        } else {
            0
        };
        let mgrs = (0..n_tiles * mgrs_per_tile)
            .map(|m| Manager::new(m / mgrs_per_tile.max(1), cfg.burst_fifo_depth))
            .collect();
        let pes = (0..cfg.n_pe)
            .map(|p| Pe::new(cfg.tile_of_pe(p), cfg.k_ports, trace.per_pe[p as usize].clone()))
            .collect();
        let lanes = (cfg.n_pe * ports_per_tile) as usize;
        let warmup = opts
            .warmup
            .unwrap_or_else(|| 20u64.max(2 * cfg.max_round_trip_latency() as u64));
        let retired_pairs = opts
            .record_retirements
            .then(|| vec![Vec::new(); cfg.n_pe as usize]);
        let cycle_log = opts.collect_cycle_log.then(Vec::new);
        Ok(Simulator {
            n_tiles,
            ports_per_tile,
            level_of,
            port_of,
            fly_of_level,
            total_banks,
            banks_per_tile: cfg.banks_per_tile(),
            cap_words,
            mgrs_per_tile,
            mem,
            pes,
            banks: (0..total_banks).map(|_| Bank::default()).collect(),
            mgrs,
            req_lanes: (0..lanes).map(|_| ReqLane::default()).collect(),
            rsp_lanes: (0..lanes).map(|_| RspLane::default()).collect(),
            barriers: BTreeMap::new(),
            cycle: 0,
            last_progress: 0,
            progressed: false,
            outstanding: 0,
            done: false,
            warmup,
            warmup_bytes: 0,
            counters: Counters::default(),
            retired_pairs,
            cycle_log,
            bytes_this_cycle: 0,
            flops_this_cycle: 0,
            stall_row: [0; 4],
            cfg,
            opts,
        })
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.cfg
    }

    pub fn options(&self) -> &SimOptions {
        &self.opts
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn warmup_cycles(&self) -> u64 {
        self.warmup
    }

    pub fn bytes_loaded_after_warmup(&self) -> u64 {
        self.counters.bytes_loaded.saturating_sub(self.warmup_bytes)
    }

    pub fn cycle_log(&self) -> Option<&[CycleRow]> {
        self.cycle_log.as_deref()
    }

    /// Retired (byte address, value) pairs per PE, when recording was on.
    pub fn retired_pairs(&self) -> Option<&Vec<Vec<(u64, u32)>>> {
        self.retired_pairs.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    fn level_between(&self, a: u32, b: u32) -> u8 {
        self.level_of[(a * self.n_tiles + b) as usize]
    }

    fn port_between(&self, a: u32, b: u32) -> u8 {
        self.port_of[(a * self.n_tiles + b) as usize]
    }

    fn tile_of_bank(&self, bank: u64) -> u32 {
        (bank / self.banks_per_tile as u64) as u32
    }

    fn bank_of_word(&self, word: Word) -> u64 {
        word % self.total_banks
    }

    fn mem_index(&self, word: Word) -> usize {
        let bank = word % self.total_banks;
        let idx = word / self.total_banks;
        (bank * self.cfg.bank_capacity_words as u64 + idx) as usize
    }

    fn lane_index(&self, pe: u32, port: u8) -> usize {
        (pe * self.ports_per_tile + port as u32) as usize
    }

    fn mgr_of_word(&self, word: Word) -> u32 {
        let bank = self.bank_of_word(word);
        let tile = self.tile_of_bank(bank);
        let group = (bank % self.banks_per_tile as u64) as u32 / self.cfg.effective_gf();
        tile * self.mgrs_per_tile + group
    }

    fn all_work_done(&self) -> bool {
        self.outstanding == 0 && self.pes.iter().all(|p| p.fully_done())
    }

    /// Runs to completion, the cycle limit, or a deadlock.
    pub fn run(&mut self) -> Result<RunOutcome, SimError> {
        loop {
            if self.done || self.all_work_done() {
                self.done = true;
                return Ok(RunOutcome {
                    total_cycles: self.cycle,
                    incomplete: false,
                });
            }
            if let Some(limit) = self.opts.cycle_limit {
                if self.cycle >= limit {
                    return Ok(RunOutcome {
                        total_cycles: self.cycle,
                        incomplete: true,
                    });
                }
            }
            self.step()?;
        }
    }

    /// Advances the simulation one cycle.
    pub fn step(&mut self) -> Result<(), SimError> {
        let c = self.cycle;
        self.progressed = false;
        self.bytes_this_cycle = 0;
        self.flops_this_cycle = 0;
        self.stall_row = [0; 4];

        self.phase_response_delivery(c);
        self.phase_retire(c);
        self.phase_response_inject(c);
        self.phase_request_arrive(c);
        self.phase_pe(c);
        self.phase_request_grant(c);
        self.phase_managers();
        self.phase_banks(c);
        self.phase_end(c)?;

        self.cycle += 1;
        Ok(())
    }

    fn phase_response_delivery(&mut self, c: u64) {
        for lane in 0..self.rsp_lanes.len() {
            while let Some((arrival, _)) = self.rsp_lanes[lane].in_flight.front() {
                if *arrival >= c {
                    break;
                }
                let (arrival, beat) = self.rsp_lanes[lane].in_flight.pop_front().unwrap();
                self.deliver_beat(&beat, arrival);
            }
        }
    }

    fn deliver_beat(&mut self, beat: &Beat, complete_cycle: u64) {
        let pe = &mut self.pes[beat.pe as usize];
        for &(port, seq, word, value) in &beat.words {
            let slot = pe.rob[port as usize]
                .iter_mut()
                .find(|s| s.seq == seq)
                .expect("response for a retired or unallocated slot");
            debug_assert!(slot.value.is_none(), "slot filled twice");
            debug_assert_eq!(slot.word, word);
            slot.value = Some(value);
            slot.complete_cycle = complete_cycle;
        }
        self.progressed = true;
    }

    fn phase_retire(&mut self, c: u64) {
        for pe_idx in 0..self.pes.len() {
            for port in 0..self.cfg.k_ports as usize {
                let pe = &mut self.pes[pe_idx];
                let ready = matches!(
                    pe.rob[port].front(),
                    Some(slot) if slot.value.is_some() && slot.complete_cycle < c
                );
                if !ready {
                    continue;
                }
                let slot = self.pes[pe_idx].rob[port].pop_front().unwrap();
                let value = slot.value.unwrap();
                debug_assert_eq!(
                    value, slot.word as u32,
                    "retired word does not carry the integrity token of its address"
                );
                let pe = &mut self.pes[pe_idx];
                pe.retired_load_words += 1;
                self.counters.loads_retired_words += 1;
                self.counters.bytes_loaded += WORD_BYTES;
                self.bytes_this_cycle += WORD_BYTES;
                self.outstanding -= 1;
                if let Some(pairs) = &mut self.retired_pairs {
                    pairs[pe_idx].push((slot.word * WORD_BYTES, value));
                }
                self.progressed = true;
            }
        }
    }

    fn phase_response_inject(&mut self, c: u64) {
        let gf = self.cfg.effective_gf() as usize;
        for lane in 0..self.rsp_lanes.len() {
            let Some(beat) = self.rsp_lanes[lane].grant() else {
                continue;
            };
            debug_assert!(beat.words.len() <= gf, "beat wider than the response channel");
            debug_assert!(
                self.cfg.mode == AccessMode::Burst || beat.words.len() == 1,
                "baseline response carries one word"
            );
            if let Some(m) = beat.from_mgr {
                self.mgrs[m as usize].busy = false;
            }
            let arrival = c + self.fly_of_level[beat.level as usize];
            self.pes[beat.pe as usize].waiting_rsp -= beat.words.len() as u64;
            self.counters.rsp_beats += 1;
            debug_assert!(self
                .rsp_lanes[lane]
                .in_flight
                .back()
                .map_or(true, |(a, _)| *a <= arrival));
            self.rsp_lanes[lane].in_flight.push_back((arrival, beat));
            self.progressed = true;
        }
    }

    fn phase_request_arrive(&mut self, c: u64) {
        for lane in 0..self.req_lanes.len() {
            while let Some((arrival, _)) = self.req_lanes[lane].in_flight.front() {
                if *arrival >= c {
                    break;
                }
                let (_, transfer) = self.req_lanes[lane].in_flight.pop_front().unwrap();
                match transfer {
                    Transfer::Narrow {
                        pe, word, write, port, seq, ..
                    } => {
                        let bank = self.bank_of_word(word);
                        let op = if write {
                            BankOp::Write { pe, word }
                        } else {
                            BankOp::Read {
                                pe,
                                port,
                                seq,
                                word,
                                remote: true,
                            }
                        };
                        self.banks[bank as usize].queue.push_back(op);
                        self.pes[pe as usize].bank_pending += 1;
                    }
                    Transfer::SubBurst(sb) => {
                        self.pes[sb.pe as usize].bank_pending += sb.words.len() as u64;
                        let mgr = &mut self.mgrs[sb.mgr as usize];
                        mgr.fifo.push_back(sb);
                        debug_assert!(
                            mgr.fifo.len() as u32 <= self.cfg.burst_fifo_depth,
                            "manager FIFO exceeded its depth"
                        );
                    }
                }
                self.progressed = true;
            }
        }
    }

    fn phase_pe(&mut self, c: u64) {
        for pe_idx in 0..self.pes.len() {
            // barrier release
            if let Some(wait) = self.pes[pe_idx].barrier {
                if wait.arrived {
                    let released = self.barriers[&wait.id]
                        .release_at
                        .is_some_and(|r| r <= c);
                    if released {
                        let pe = &mut self.pes[pe_idx];
                        pe.barrier = None;
                        pe.pos += 1;
                        self.progressed = true;
                    }
                }
            }

            let issued = self.lsu_step(pe_idx, c);
            let fpu_busy = self.fpu_step(pe_idx);

            // barrier arrival once everything older has drained
            let pe = &mut self.pes[pe_idx];
            if let Some(wait) = &mut pe.barrier {
                if !wait.arrived && pe.retired_load_words == pe.issued_load_words
                    && pe.fpu_queue.is_empty()
                    && pe.fpu_remaining.is_none()
                {
                    wait.arrived = true;
                    let id = wait.id;
                    let n_pe = self.cfg.n_pe;
                    let state = self.barriers.entry(id).or_default();
                    if state.arrived == 0 {
                        state.first_arrival = c;
                    }
                    state.arrived += 1;
                    state.last_arrival = c;
                    if state.arrived == n_pe {
                        state.release_at = Some(c + 1);
                        self.counters
                            .barrier_skews
                            .push(state.last_arrival - state.first_arrival);
                    }
                    self.progressed = true;
                }
            }

            // stall attribution: one bucket per PE-cycle
            let pe = &self.pes[pe_idx];
            if fpu_busy {
                self.counters.pe_cycles_busy += 1;
            } else if pe.barrier.is_some_and(|w| w.arrived) {
                self.counters.pe_cycles_barrier += 1;
                self.stall_row[3] += 1;
            } else if issued == IssueOutcome::RobFull {
                self.counters.pe_cycles_rob_full += 1;
                self.stall_row[2] += 1;
            } else if pe.pending_req > 0 || pe.waiting_rsp > 0 || issued == IssueOutcome::MgrFull {
                self.counters.pe_cycles_port += 1;
                self.stall_row[0] += 1;
            } else if pe.bank_pending > 0 {
                self.counters.pe_cycles_bank += 1;
                self.stall_row[1] += 1;
            } else {
                self.counters.pe_cycles_idle += 1;
            }
        }
    }

    fn fpu_step(&mut self, pe_idx: usize) -> bool {
        let flops_per_cycle = 2 * self.cfg.k_ports as u64;
        let pe = &mut self.pes[pe_idx];
        if pe.fpu_remaining.is_none() {
            // skip zero-cost items, then start the next eligible compute
            while let Some(&(flops, dep)) = pe.fpu_queue.front() {
                if dep > pe.retired_load_words {
                    break;
                }
                pe.fpu_queue.pop_front();
                if flops > 0 {
                    pe.fpu_remaining = Some(flops);
                    break;
                }
            }
        }
        if let Some(rem) = pe.fpu_remaining {
            let done_now = rem.min(flops_per_cycle);
            let left = rem - done_now;
            pe.fpu_remaining = if left == 0 { None } else { Some(left) };
            self.counters.flops += done_now;
            self.flops_this_cycle += done_now;
            self.progressed = true;
            true
        } else {
            false
        }
    }

    fn lsu_step(&mut self, pe_idx: usize, c: u64) -> IssueOutcome {
        if self.pes[pe_idx].barrier.is_some() {
            return IssueOutcome::Blocked;
        }
        let k = self.cfg.k_ports;
        let mut outcome = IssueOutcome::Nothing;
        loop {
            // try to issue one group of the current memory item
            if let Some(&(base, len, write)) = self.pes[pe_idx].groups.front() {
                match self.try_issue_group(pe_idx, base, len, write, c) {
                    IssueOutcome::Issued => {
                        self.pes[pe_idx].groups.pop_front();
                        if self.pes[pe_idx].groups.is_empty() {
                            self.pes[pe_idx].pos += 1;
                            // keep scanning: computes behind this item may
                            // enter the FPU queue this cycle
                            outcome = IssueOutcome::Issued;
                            continue;
                        }
                        return IssueOutcome::Issued;
                    }
                    blocked => return blocked,
                }
            }
            let pe = &mut self.pes[pe_idx];
            let Some(item) = pe.items.get(pe.pos).copied() else {
                return outcome;
            };
            match item {
                TraceItem::Compute { flops } => {
                    pe.fpu_queue.push_back((flops, pe.issued_load_words));
                    pe.pos += 1;
                }
                TraceItem::Barrier { id } => {
                    pe.barrier = Some(BarrierWait { id, arrived: false });
                    return outcome;
                }
                TraceItem::VectorLoad { base, n_elems } | TraceItem::VectorStore { base, n_elems } => {
                    if outcome == IssueOutcome::Issued {
                        // one group per cycle: stop in front of the next item
                        return outcome;
                    }
                    let write = matches!(item, TraceItem::VectorStore { .. });
                    let first_word = (base / WORD_BYTES) % self.cap_words;
                    let mut off = 0u32;
                    while off < n_elems {
                        let len = k.min(n_elems - off) as u8;
                        pe.groups
                            .push_back(((first_word + off as u64) % self.cap_words, len, write));
                        off += len as u32;
                    }
                    if pe.groups.is_empty() {
                        // zero-length access
                        pe.pos += 1;
                    }
                }
            }
        }
    }

    fn try_issue_group(&mut self, pe_idx: usize, base: Word, len: u8, write: bool, c: u64) -> IssueOutcome {
        let pe_id = pe_idx as u32;
        let src_tile = self.pes[pe_idx].tile;
        let burst_mode = self.cfg.mode == AccessMode::Burst && !write;
        if !write {
            let depth = self.cfg.rob_depth as usize;
            let rob_free = (0..len as usize).all(|p| self.pes[pe_idx].rob[p].len() < depth);
            if !rob_free {
                return IssueOutcome::RobFull;
            }
        }
        let pieces = if burst_mode {
            burst_split(&self.cfg, base, len as u32)
        } else {
            Vec::new()
        };
        if burst_mode {
            // local sub-bursts enter their manager FIFO at issue; require space
            for &(word, _) in &pieces {
                let bank = self.bank_of_word(word);
                if self.tile_of_bank(bank) == src_tile {
                    let mgr = self.mgr_of_word(word);
                    if self.mgrs[mgr as usize].free_slots == 0 {
                        return IssueOutcome::MgrFull;
                    }
                }
            }
        }

        // allocate ROB slots: element j of the group lives on port j
        let mut refs: Vec<WordRef> = Vec::with_capacity(len as usize);
        for j in 0..len {
            let word = (base + j as u64) % self.cap_words;
            if write {
                refs.push(WordRef { port: j, seq: 0, word });
            } else {
                let pe = &mut self.pes[pe_idx];
                let seq = pe.next_seq[j as usize];
                pe.next_seq[j as usize] += 1;
                pe.rob[j as usize].push_back(RobSlot {
                    seq,
                    word,
                    value: None,
                    complete_cycle: u64::MAX,
                });
                let occ = pe.rob[j as usize].len() as u32;
                debug_assert!(occ <= self.cfg.rob_depth, "ROB beyond its depth");
                self.counters.max_rob_occupancy = self.counters.max_rob_occupancy.max(occ);
                pe.issued_load_words += 1;
                self.counters.loads_issued_words += 1;
                refs.push(WordRef { port: j, seq, word });
            }
            self.outstanding += 1;
        }
        if write {
            self.counters.bytes_stored += len as u64 * WORD_BYTES;
        }

        if burst_mode {
            let mut cursor = 0usize;
            for (word, plen) in pieces {
                let words = refs[cursor..cursor + plen as usize].to_vec();
                cursor += plen as usize;
                let bank = self.bank_of_word(word);
                let dst_tile = self.tile_of_bank(bank);
                let mgr = self.mgr_of_word(word);
                let level = self.level_between(src_tile, dst_tile);
                let sb = SubBurst { pe: pe_id, mgr, level, words };
                if dst_tile == src_tile {
                    let m = &mut self.mgrs[mgr as usize];
                    m.free_slots -= 1;
                    m.fifo.push_back(sb);
                    self.pes[pe_idx].bank_pending += plen as u64;
                } else {
                    let port = self.port_between(src_tile, dst_tile);
                    let lane = self.lane_index(pe_id, port);
                    self.req_lanes[lane].pending.push_back(Transfer::SubBurst(sb));
                    self.pes[pe_idx].pending_req += 1;
                }
            }
        } else {
            for r in refs {
                let bank = self.bank_of_word(r.word);
                let dst_tile = self.tile_of_bank(bank);
                if dst_tile == src_tile {
                    let op = if write {
                        BankOp::Write { pe: pe_id, word: r.word }
                    } else {
                        BankOp::Read {
                            pe: pe_id,
                            port: r.port,
                            seq: r.seq,
                            word: r.word,
                            remote: false,
                        }
                    };
                    self.banks[bank as usize].queue.push_back(op);
                    self.pes[pe_idx].bank_pending += 1;
                } else {
                    let port = self.port_between(src_tile, dst_tile);
                    let level = self.level_between(src_tile, dst_tile);
                    let lane = self.lane_index(pe_id, port);
                    self.req_lanes[lane].pending.push_back(Transfer::Narrow {
                        pe: pe_id,
                        word: r.word,
                        write,
                        port: r.port,
                        seq: r.seq,
                        level,
                    });
                    self.pes[pe_idx].pending_req += 1;
                }
            }
        }
        let _ = c;
        self.progressed = true;
        IssueOutcome::Issued
    }

    fn phase_request_grant(&mut self, c: u64) {
        // Each VLSU port drives one narrow request per cycle and the burst
        // sender forwards one sub-burst per cycle; the per-class channels
        // serialize on top of that. These masks carry the per-PE state
        // within the phase.
        self.narrow_port_used.fill(0);
        self.burst_sender_used.fill(false);
        for lane in 0..self.req_lanes.len() {
            let Some(front) = self.req_lanes[lane].pending.front() else {
                continue;
            };
            match front {
                Transfer::SubBurst(sb) => {
                    if self.burst_sender_used[sb.pe as usize] {
                        continue;
                    }
                    // credit check against the destination manager's FIFO
                    if self.mgrs[sb.mgr as usize].free_slots == 0 {
                        continue;
                    }
                }
                Transfer::Narrow { pe, port, .. } => {
                    if self.narrow_port_used[*pe as usize] & (1 << *port) != 0 {
                        continue;
                    }
                }
            }
            let transfer = self.req_lanes[lane].pending.pop_front().unwrap();
            let pe = match &transfer {
                Transfer::Narrow { pe, port, .. } => {
                    self.narrow_port_used[*pe as usize] |= 1 << *port;
                    *pe
                }
                Transfer::SubBurst(sb) => {
                    self.burst_sender_used[sb.pe as usize] = true;
                    self.mgrs[sb.mgr as usize].free_slots -= 1;
                    sb.pe
                }
            };
            self.pes[pe as usize].pending_req -= 1;
            let arrival = c + self.fly_of_level[transfer.level() as usize];
            debug_assert!(self
                .req_lanes[lane]
                .in_flight
                .back()
                .map_or(true, |(a, _)| *a <= arrival));
            self.req_lanes[lane].in_flight.push_back((arrival, transfer));
            self.counters.req_transfers += 1;
            self.progressed = true;
        }
    }

    fn phase_managers(&mut self) {
        for m in 0..self.mgrs.len() {
            if self.mgrs[m].busy {
                continue;
            }
            let Some(sb) = self.mgrs[m].fifo.pop_front() else {
                continue;
            };
            {
                let mgr = &mut self.mgrs[m];
                mgr.free_slots += 1;
                mgr.busy = true;
                mgr.pending_words = sb.words.len() as u32;
                mgr.collected.clear();
                mgr.current_pe = sb.pe;
                mgr.current_level = sb.level;
            }
            for r in &sb.words {
                let bank = self.bank_of_word(r.word);
                debug_assert_eq!(self.mgr_of_word(r.word), m as u32);
                self.banks[bank as usize].queue.push_back(BankOp::BurstWord {
                    pe: sb.pe,
                    mgr: m as u32,
                    port: r.port,
                    seq: r.seq,
                    word: r.word,
                });
            }
            self.progressed = true;
        }
    }

    fn phase_banks(&mut self, c: u64) {
        for bank in 0..self.banks.len() {
            let Some(op) = self.banks[bank].queue.pop_front() else {
                continue;
            };
            self.progressed = true;
            match op {
                BankOp::Write { pe, word } => {
                    // stores carry the integrity token of their address, so
                    // bank contents are order-independent
                    let idx = self.mem_index(word);
                    self.mem[idx] = word as u32;
                    self.pes[pe as usize].bank_pending -= 1;
                    self.outstanding -= 1;
                }
                BankOp::Read { pe, port, seq, word, remote } => {
                    let value = self.mem[self.mem_index(word)];
                    self.pes[pe as usize].bank_pending -= 1;
                    if remote {
                        let src_tile = self.pes[pe as usize].tile;
                        let dst_tile = self.tile_of_bank(bank as u64);
                        let lane_port = self.port_between(src_tile, dst_tile);
                        let level = self.level_between(src_tile, dst_tile);
                        let lane = self.lane_index(pe, lane_port);
                        let beat = Beat {
                            pe,
                            level,
                            src_unit: bank as u32,
                            from_mgr: None,
                            words: vec![(port, seq, word, value)],
                        };
                        self.pes[pe as usize].waiting_rsp += 1;
                        self.rsp_lanes[lane].push_ready(beat);
                    } else {
                        // local round trip: data visible at the port this
                        // cycle, retired the next
                        self.deliver_beat(
                            &Beat {
                                pe,
                                level: 0,
                                src_unit: bank as u32,
                                from_mgr: None,
                                words: vec![(port, seq, word, value)],
                            },
                            c,
                        );
                    }
                }
                BankOp::BurstWord { pe, mgr, port, seq, word } => {
                    let value = self.mem[self.mem_index(word)];
                    self.pes[pe as usize].bank_pending -= 1;
                    let finished = {
                        let m = &mut self.mgrs[mgr as usize];
                        m.collected.push((port, seq, word, value));
                        m.pending_words -= 1;
                        if m.pending_words == 0 {
                            let mut words = std::mem::take(&mut m.collected);
                            words.sort_by_key(|w| w.2);
                            Some((m.tile, m.current_level, words))
                        } else {
                            None
                        }
                    };
                    if let Some((dst_tile, level, words)) = finished {
                        let src_tile = self.pes[pe as usize].tile;
                        let src_unit = self.total_banks as u32 + mgr;
                        if dst_tile == src_tile {
                            self.mgrs[mgr as usize].busy = false;
                            self.deliver_beat(
                                &Beat { pe, level, src_unit, from_mgr: None, words },
                                c,
                            );
                        } else {
                            let lane_port = self.port_between(src_tile, dst_tile);
                            let lane = self.lane_index(pe, lane_port);
                            self.pes[pe as usize].waiting_rsp += words.len() as u64;
                            let beat = Beat { pe, level, src_unit, from_mgr: Some(mgr), words };
                            self.rsp_lanes[lane].push_ready(beat);
                        }
                    }
                }
            }
        }
    }

    fn phase_end(&mut self, c: u64) -> Result<(), SimError> {
        if self.progressed {
            self.last_progress = c;
        }
        if c + 1 == self.warmup {
            self.warmup_bytes = self.counters.bytes_loaded;
        }
        if let Some(log) = &mut self.cycle_log {
            log.push(CycleRow {
                cycle: c,
                bytes_retired: self.bytes_this_cycle,
                active_fpus: self.flops_this_cycle / 2,
                stall_port: self.stall_row[0],
                stall_bank: self.stall_row[1],
                stall_rob: self.stall_row[2],
                stall_barrier: self.stall_row[3],
            });
        }
        if self.all_work_done() {
            self.done = true;
            return Ok(());
        }
        if c - self.last_progress >= self.opts.deadlock_window {
            return Err(SimError::Deadlock {
                cycle: c,
                window: self.opts.deadlock_window,
                diagnostic: self.diagnostic(),
            });
        }
        Ok(())
    }

    fn diagnostic(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "outstanding words: {}, barriers: {:?}\n",
            self.outstanding,
            self.barriers
                .iter()
                .map(|(id, s)| (*id, s.arrived, s.release_at))
                .collect::<Vec<_>>()
        ));
        for (i, pe) in self.pes.iter().enumerate() {
            if pe.fully_done() {
                continue;
            }
            out.push_str(&format!(
                "pe {i}: item {}/{} groups {} issued {} retired {} fpu_q {} barrier {:?}\n",
                pe.pos,
                pe.items.len(),
                pe.groups.len(),
                pe.issued_load_words,
                pe.retired_load_words,
                pe.fpu_queue.len(),
                pe.barrier
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum IssueOutcome {
    /// No memory item was ready to issue.
    Nothing,
    /// A group was issued this cycle.
    Issued,
    /// A group was ready but reorder-buffer slots were missing.
    RobFull,
    /// A local sub-burst found its manager FIFO full.
    MgrFull,
    /// LSU blocked behind a barrier.
    Blocked,
}

#[cfg(test)]
mod tests;
