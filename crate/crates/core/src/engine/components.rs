//! Engine building blocks: transactions, reorder buffers, channels, banks
//! and burst managers.

use std::collections::{BTreeMap, VecDeque};

use crate::workloads::TraceItem;

/// Wrapped word index into the flat L1 space.
pub(crate) type Word = u64;

/// One 32-bit word of a vector request: its VLSU port and the per-port
/// sequence number that names its reorder-buffer slot.
#[derive(Debug, Clone, Copy)]
pub(crate) struct WordRef {
    pub port: u8,
    pub seq: u64,
    pub word: Word,
}

/// A request transfer occupying a remote channel for one cycle: either one
/// narrow 32-bit request or one sub-burst header.
#[derive(Debug, Clone)]
pub(crate) enum Transfer {
    Narrow {
        pe: u32,
        word: Word,
        write: bool,
        port: u8,
        seq: u64,
        level: u8,
    },
    SubBurst(SubBurst),
}

impl Transfer {
    pub fn level(&self) -> u8 {
        match self {
            Transfer::Narrow { level, .. } => *level,
            Transfer::SubBurst(sb) => sb.level,
        }
    }
}

/// A burst request covering consecutive words of one bank group.
#[derive(Debug, Clone)]
pub(crate) struct SubBurst {
    pub pe: u32,
    pub mgr: u32,
    pub level: u8,
    pub words: Vec<WordRef>,
}

/// One response transfer: up to `gf` words retired in parallel.
#[derive(Debug, Clone)]
pub(crate) struct Beat {
    pub pe: u32,
    pub level: u8,
    /// Bank (narrow) or manager (burst) that produced the data.
    pub src_unit: u32,
    /// Set when the producing burst manager must be released on grant.
    pub from_mgr: Option<u32>,
    pub words: Vec<(u8, u64, Word, u32)>,
}

/// Reorder-buffer slot of one VLSU port.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RobSlot {
    pub seq: u64,
    pub word: Word,
    pub value: Option<u32>,
    pub complete_cycle: u64,
}

/// Work queued at one scratchpad bank; served one entry per cycle.
#[derive(Debug, Clone)]
pub(crate) enum BankOp {
    Read {
        pe: u32,
        port: u8,
        seq: u64,
        word: Word,
        remote: bool,
    },
    Write {
        pe: u32,
        word: Word,
    },
    BurstWord {
        pe: u32,
        mgr: u32,
        port: u8,
        seq: u64,
        word: Word,
    },
}

#[derive(Debug, Default)]
pub(crate) struct Bank {
    pub queue: VecDeque<BankOp>,
}

/// Burst manager fronting one gf-aligned bank group of a tile.
///
/// Holds pending sub-bursts in a small FIFO (credits reserved at the source
/// keep it within depth), dispatches at most one sub-burst per cycle to the
/// group's banks and merges the read data into a single response beat. The
/// merge station stays busy until the beat leaves on a response channel.
#[derive(Debug)]
pub(crate) struct Manager {
    pub tile: u32,
    pub free_slots: u32,
    pub fifo: VecDeque<SubBurst>,
    pub busy: bool,
    pub pending_words: u32,
    pub collected: Vec<(u8, u64, Word, u32)>,
    pub current_pe: u32,
    pub current_level: u8,
}

impl Manager {
    pub fn new(tile: u32, fifo_depth: u32) -> Self {
        Manager {
            tile,
            free_slots: fifo_depth,
            fifo: VecDeque::new(),
            busy: false,
            pending_words: 0,
            collected: Vec::new(),
            current_pe: 0,
            current_level: 0,
        }
    }
}

/// Request direction of one remote channel: pending transfers waiting for a
/// grant (one per cycle) and granted transfers in flight toward their
/// destination tile.
#[derive(Debug, Default)]
pub(crate) struct ReqLane {
    pub pending: VecDeque<Transfer>,
    pub in_flight: VecDeque<(u64, Transfer)>,
}

/// Response direction of one remote channel. Ready beats queue per source
/// unit; a round-robin pointer picks one beat per cycle.
#[derive(Debug, Default)]
pub(crate) struct RspLane {
    pub sources: BTreeMap<u32, VecDeque<Beat>>,
    pub rr_last: u32,
    pub in_flight: VecDeque<(u64, Beat)>,
}

impl RspLane {
    pub fn push_ready(&mut self, beat: Beat) {
        self.sources.entry(beat.src_unit).or_default().push_back(beat);
    }

    /// Round-robin grant: first nonempty source after the last granted one.
    pub fn grant(&mut self) -> Option<Beat> {
        let key = self
            .sources
            .range(self.rr_last.wrapping_add(1)..)
            .next()
            .map(|(k, _)| *k)
            .or_else(|| self.sources.keys().next().copied())?;
        let queue = self.sources.get_mut(&key).expect("key just found");
        let beat = queue.pop_front().expect("nonempty by construction");
        if queue.is_empty() {
            self.sources.remove(&key);
        }
        self.rr_last = key;
        Some(beat)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BarrierWait {
    pub id: u32,
    pub arrived: bool,
}

/// One processing element: trace cursor, per-port reorder buffers and the
/// decoupled compute pipeline.
#[derive(Debug)]
pub(crate) struct Pe {
    pub tile: u32,
    pub items: Vec<TraceItem>,
    pub pos: usize,
    /// Remaining (base word, length, is_store) groups of the current item.
    pub groups: VecDeque<(Word, u8, bool)>,
    pub rob: Vec<VecDeque<RobSlot>>,
    pub next_seq: Vec<u64>,
    pub issued_load_words: u64,
    pub retired_load_words: u64,
    /// Compute items passed by the LSU: (flops, load words issued before it).
    pub fpu_queue: VecDeque<(u64, u64)>,
    pub fpu_remaining: Option<u64>,
    pub barrier: Option<BarrierWait>,
    // live counts for stall attribution
    pub pending_req: u64,
    pub waiting_rsp: u64,
    pub bank_pending: u64,
}

impl Pe {
    pub fn new(tile: u32, k_ports: u32, items: Vec<TraceItem>) -> Self {
        Pe {
            tile,
            items,
            pos: 0,
            groups: VecDeque::new(),
            rob: (0..k_ports).map(|_| VecDeque::new()).collect(),
            next_seq: vec![0; k_ports as usize],
            issued_load_words: 0,
            retired_load_words: 0,
            fpu_queue: VecDeque::new(),
            fpu_remaining: None,
            barrier: None,
            pending_req: 0,
            waiting_rsp: 0,
            bank_pending: 0,
        }
    }

    pub fn trace_done(&self) -> bool {
        self.pos >= self.items.len() && self.groups.is_empty()
    }

    pub fn drained(&self) -> bool {
        self.retired_load_words == self.issued_load_words
            && self.fpu_queue.is_empty()
            && self.fpu_remaining.is_none()
    }

    pub fn fully_done(&self) -> bool {
        self.trace_done() && self.drained() && self.barrier.is_none()
    }
}

#[derive(Debug, Default)]
pub(crate) struct BarrierState {
    pub arrived: u32,
    pub first_arrival: u64,
    pub last_arrival: u64,
    pub release_at: Option<u64>,
}
