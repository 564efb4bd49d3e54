//! Cluster shapes: the word-interleaved bank map, the interconnect hierarchy,
//! and the three testbed presets.
//!
//! A cluster is a set of processing elements (PEs, each a scalar core plus a
//! vector unit with `k_ports` 32-bit VLSU ports) grouped into tiles. Every
//! tile owns `ccs_per_tile * banks_per_cc` scratchpad banks; the flat L1
//! address space is word-interleaved across all banks of the cluster. Tiles
//! are nested into hierarchy levels (tile, subgroup, group, cluster) with
//! increasing round-trip latency.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const WORD_BYTES: u64 = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("unknown preset `{0}` (expected mp4spatz4, mp64spatz4 or mp128spatz8)")]
    UnknownPreset(String),
    #[error("address {0:#x} is not word-aligned")]
    Unaligned(u64),
    #[error("address {addr:#x} outside L1 capacity ({capacity} bytes)")]
    OutOfRange { addr: u64, capacity: u64 },
    #[error("tile index {0} out of range (cluster has {1} tiles)")]
    BadTile(u32, u32),
    #[error("no remote port between a tile and itself; local traffic uses the tile crossbar")]
    LocalNotRemote,
}

/// One nesting level of the interconnect, from the tile outward.
///
/// `fanout` counts child units per parent: the innermost (tile) level always
/// has fanout 1, the level above it counts tiles per unit, and so on. The
/// product of all fanouts is the tile count of the cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyLevel {
    pub name: String,
    pub fanout: u32,
    pub round_trip_latency_cycles: u32,
}

impl HierarchyLevel {
    pub fn new(name: &str, fanout: u32, round_trip_latency_cycles: u32) -> Self {
        Self {
            name: name.to_string(),
            fanout,
            round_trip_latency_cycles,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessMode {
    Baseline,
    Burst,
}

impl fmt::Display for AccessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AccessMode::Baseline => write!(f, "baseline"),
            AccessMode::Burst => write!(f, "burst"),
        }
    }
}

impl FromStr for AccessMode {
    type Err = TopologyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(AccessMode::Baseline),
            "burst" => Ok(AccessMode::Burst),
            other => Err(TopologyError::Invalid(format!(
                "unknown access mode `{other}` (expected baseline or burst)"
            ))),
        }
    }
}

/// Full parametric description of one cluster instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Number of vector cores (core complexes).
    pub n_pe: u32,
    /// FPUs per PE; equals the number of 32-bit VLSU request/response ports.
    pub k_ports: u32,
    /// PEs per tile.
    pub ccs_per_tile: u32,
    /// Scratchpad banks per PE (4 in every preset).
    pub banks_per_cc: u32,
    /// 32-bit words per bank (256 words = 1 KiB).
    pub bank_capacity_words: u32,
    /// Hierarchy levels from the tile outward.
    pub levels: Vec<HierarchyLevel>,
    /// Grouping factor: response-channel width in 32-bit words (1 = baseline width).
    pub gf: u32,
    pub mode: AccessMode,
    /// Reorder-buffer entries per VLSU port.
    pub rob_depth: u32,
    /// Maximum vector length in bits.
    pub vlen_bits: u32,
    /// Pending-burst queue entries per burst manager.
    pub burst_fifo_depth: u32,
    /// Remote request/response channel count per hierarchy level above the
    /// tile. `None` derives the count from the level fanouts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote_ports_per_level: Option<Vec<u32>>,
}

/// Decomposition of a word-aligned byte address onto the interleaved banks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BankAddress {
    pub byte_addr: u64,
    pub bank_index: u32,
    pub word_index: u32,
    pub tile_index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Mp4Spatz4,
    Mp64Spatz4,
    Mp128Spatz8,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Mp4Spatz4, Preset::Mp64Spatz4, Preset::Mp128Spatz8];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Mp4Spatz4 => "mp4spatz4",
            Preset::Mp64Spatz4 => "mp64spatz4",
            Preset::Mp128Spatz8 => "mp128spatz8",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = TopologyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mp4spatz4" => Ok(Preset::Mp4Spatz4),
            "mp64spatz4" => Ok(Preset::Mp64Spatz4),
            "mp128spatz8" => Ok(Preset::Mp128Spatz8),
            other => Err(TopologyError::UnknownPreset(other.to_string())),
        }
    }
}

/// Returns the named testbed configuration with mode/gf/rob left at the
/// baseline defaults (callers override them per experiment).
pub fn preset(which: Preset) -> ClusterConfig {
    match which {
        // 16 FPUs. Realized as 4 single-CC tiles of 4 banks each so that
        // remote traffic exists and the 1/4 local-access probability of the
        // closed-form model matches the geometry.
        Preset::Mp4Spatz4 => ClusterConfig {
            n_pe: 4,
            k_ports: 4,
            ccs_per_tile: 1,
            banks_per_cc: 4,
            bank_capacity_words: 256,
            levels: vec![
                HierarchyLevel::new("tile", 1, 1),
                HierarchyLevel::new("cluster", 4, 3),
            ],
            gf: 1,
            mode: AccessMode::Baseline,
            rob_depth: 4,
            vlen_bits: 256,
            burst_fifo_depth: 4,
            remote_ports_per_level: Some(vec![4]),
        },
        // 256 FPUs: 16 tiles of 4 CCs, 4 groups of 4 tiles.
        Preset::Mp64Spatz4 => ClusterConfig {
            n_pe: 64,
            k_ports: 4,
            ccs_per_tile: 4,
            banks_per_cc: 4,
            bank_capacity_words: 256,
            levels: vec![
                HierarchyLevel::new("tile", 1, 1),
                HierarchyLevel::new("group", 4, 3),
                HierarchyLevel::new("cluster", 4, 5),
            ],
            gf: 1,
            mode: AccessMode::Baseline,
            rob_depth: 4,
            vlen_bits: 256,
            burst_fifo_depth: 4,
            remote_ports_per_level: Some(vec![1, 3]),
        },
        // 1024 FPUs: 16 tiles of 8 CCs as 4 groups x 2 subgroups x 2 tiles,
        // keeping all three remote latency classes (3/5/9 cycles). Tiles
        // expose 7 remote ports (1 + 3 + 3); with two subgroups per group
        // only one of the three subgroup-class ports carries traffic.
        Preset::Mp128Spatz8 => ClusterConfig {
            n_pe: 128,
            k_ports: 8,
            ccs_per_tile: 8,
            banks_per_cc: 4,
            bank_capacity_words: 256,
            levels: vec![
                HierarchyLevel::new("tile", 1, 1),
                HierarchyLevel::new("subgroup", 2, 3),
                HierarchyLevel::new("group", 2, 5),
                HierarchyLevel::new("cluster", 4, 9),
            ],
            gf: 1,
            mode: AccessMode::Baseline,
            rob_depth: 4,
            vlen_bits: 512,
            burst_fifo_depth: 4,
            remote_ports_per_level: Some(vec![1, 3, 3]),
        },
    }
}

pub fn preset_by_name(name: &str) -> Result<ClusterConfig, TopologyError> {
    Ok(preset(name.parse()?))
}

impl ClusterConfig {
    pub fn n_tiles(&self) -> u32 {
        self.levels.iter().map(|l| l.fanout).product()
    }

    pub fn banks_per_tile(&self) -> u32 {
        self.ccs_per_tile * self.banks_per_cc
    }

    pub fn total_banks(&self) -> u32 {
        self.n_pe * self.banks_per_cc
    }

    pub fn capacity_words(&self) -> u64 {
        self.total_banks() as u64 * self.bank_capacity_words as u64
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.capacity_words() * WORD_BYTES
    }

    pub fn vlen_words(&self) -> u32 {
        self.vlen_bits / 32
    }

    /// Grouping factor actually applied on the response channels.
    pub fn effective_gf(&self) -> u32 {
        match self.mode {
            AccessMode::Baseline => 1,
            AccessMode::Burst => self.gf,
        }
    }

    pub fn tile_of_pe(&self, pe: u32) -> u32 {
        pe / self.ccs_per_tile
    }

    pub fn n_fpus(&self) -> u32 {
        self.n_pe * self.k_ports
    }

    /// Tiles contained in one unit of hierarchy level `level_idx`.
    pub fn tiles_per_unit(&self, level_idx: usize) -> u32 {
        self.levels[1..=level_idx].iter().map(|l| l.fanout).product()
    }

    /// Remote channel count per level above the tile. Defaults, when not
    /// pinned by the config: a single remote level exposes one port per
    /// sibling tile; deeper hierarchies use one shared port for the innermost
    /// remote level and one port per sibling unit above it.
    pub fn remote_ports_by_level(&self) -> Vec<u32> {
        if let Some(p) = &self.remote_ports_per_level {
            return p.clone();
        }
        let remote = &self.levels[1..];
        match remote.len() {
            0 => Vec::new(),
            1 => vec![remote[0].fanout],
            _ => {
                let mut ports = vec![1];
                ports.extend(remote[1..].iter().map(|l| l.fanout - 1));
                ports
            }
        }
    }

    pub fn ports_per_tile(&self) -> u32 {
        self.remote_ports_by_level().iter().sum()
    }

    pub fn max_round_trip_latency(&self) -> u32 {
        self.levels
            .iter()
            .map(|l| l.round_trip_latency_cycles)
            .max()
            .unwrap_or(1)
    }

    /// Checks every structural invariant, returning the config on success and
    /// the first violated invariant by name otherwise.
    pub fn validate(self) -> Result<ClusterConfig, TopologyError> {
        let err = |m: String| Err(TopologyError::Invalid(m));
        if self.n_pe == 0 {
            return err("n_pe must be at least 1".into());
        }
        if self.k_ports == 0 {
            return err("k_ports must be at least 1".into());
        }
        if self.ccs_per_tile == 0 {
            return err("ccs_per_tile must be at least 1".into());
        }
        if self.banks_per_cc == 0 {
            return err("banks_per_cc must be at least 1".into());
        }
        if self.bank_capacity_words == 0 {
            return err("bank_capacity_words must be at least 1".into());
        }
        if self.n_pe % self.ccs_per_tile != 0 {
            return err(format!(
                "n_pe ({}) not divisible by ccs_per_tile ({})",
                self.n_pe, self.ccs_per_tile
            ));
        }
        if self.levels.is_empty() {
            return err("levels must contain at least the tile level".into());
        }
        if self.levels[0].fanout != 1 {
            return err("innermost (tile) level must have fanout 1".into());
        }
        if self.levels[0].round_trip_latency_cycles != 1 {
            return err("tile level round-trip latency must be 1 cycle".into());
        }
        let mut prev = 0;
        for level in &self.levels {
            if level.fanout == 0 {
                return err(format!("level `{}` has zero fanout", level.name));
            }
            let lat = level.round_trip_latency_cycles;
            if lat % 2 == 0 {
                return err(format!(
                    "level `{}` latency {} is even (must be 1 bank cycle + symmetric traversal)",
                    level.name, lat
                ));
            }
            if lat <= prev {
                return err(format!(
                    "level `{}` latency {} does not increase over inner level ({})",
                    level.name, lat, prev
                ));
            }
            prev = lat;
        }
        if self.n_tiles() * self.ccs_per_tile != self.n_pe {
            return err(format!(
                "product of level fan-outs ({}) x ccs_per_tile ({}) != n_pe ({})",
                self.n_tiles(),
                self.ccs_per_tile,
                self.n_pe
            ));
        }
        if self.gf == 0 {
            return err("gf must be at least 1".into());
        }
        if self.banks_per_tile() % self.gf != 0 {
            return err("gf does not divide banks-per-tile".into());
        }
        if self.vlen_bits % 32 != 0 {
            return err(format!("vlen_bits ({}) not a multiple of 32", self.vlen_bits));
        }
        if self.vlen_words() < self.k_ports {
            return err(format!(
                "vlen ({} words) smaller than k_ports ({})",
                self.vlen_words(),
                self.k_ports
            ));
        }
        if self.rob_depth == 0 {
            return err("rob_depth must be at least 1".into());
        }
        if self.burst_fifo_depth == 0 {
            return err("burst_fifo_depth must be at least 1".into());
        }
        if let Some(ports) = &self.remote_ports_per_level {
            let n_remote = self.levels.len() - 1;
            if ports.len() != n_remote {
                return err(format!(
                    "remote_ports_per_level has {} entries for {} remote levels",
                    ports.len(),
                    n_remote
                ));
            }
            for (i, (&p, level)) in ports.iter().zip(&self.levels[1..]).enumerate() {
                let needed = if n_remote == 1 {
                    level.fanout
                } else if i == 0 {
                    1
                } else {
                    level.fanout - 1
                };
                if p < needed {
                    return err(format!(
                        "level `{}` needs at least {} remote ports, got {}",
                        level.name, needed, p
                    ));
                }
            }
        }
        Ok(self)
    }

    /// Maps a word-aligned byte address onto (bank, word, tile).
    pub fn bank_of(&self, byte_addr: u64) -> Result<BankAddress, TopologyError> {
        if byte_addr % WORD_BYTES != 0 {
            return Err(TopologyError::Unaligned(byte_addr));
        }
        if byte_addr >= self.capacity_bytes() {
            return Err(TopologyError::OutOfRange {
                addr: byte_addr,
                capacity: self.capacity_bytes(),
            });
        }
        let word = byte_addr / WORD_BYTES;
        let bank_index = (word % self.total_banks() as u64) as u32;
        let word_index = (word / self.total_banks() as u64) as u32;
        Ok(BankAddress {
            byte_addr,
            bank_index,
            word_index,
            tile_index: bank_index / self.banks_per_tile(),
        })
    }

    /// Innermost hierarchy level whose subtree contains both tiles.
    pub fn level_between(&self, src_tile: u32, dst_tile: u32) -> Result<&HierarchyLevel, TopologyError> {
        let n_tiles = self.n_tiles();
        if src_tile >= n_tiles {
            return Err(TopologyError::BadTile(src_tile, n_tiles));
        }
        if dst_tile >= n_tiles {
            return Err(TopologyError::BadTile(dst_tile, n_tiles));
        }
        for (i, level) in self.levels.iter().enumerate() {
            let tpu = self.tiles_per_unit(i);
            if src_tile / tpu == dst_tile / tpu {
                return Ok(level);
            }
        }
        unreachable!("outermost level spans the whole cluster");
    }

    pub(crate) fn level_index_between(&self, src_tile: u32, dst_tile: u32) -> usize {
        (0..self.levels.len())
            .find(|&i| {
                let tpu = self.tiles_per_unit(i);
                src_tile / tpu == dst_tile / tpu
            })
            .expect("outermost level spans the whole cluster")
    }

    /// Round-trip latency between two tiles (1 for the tile itself).
    pub fn round_trip_between(&self, src_tile: u32, dst_tile: u32) -> Result<u32, TopologyError> {
        Ok(self.level_between(src_tile, dst_tile)?.round_trip_latency_cycles)
    }

    /// Deterministic remote port index used by traffic from `src_tile` to
    /// `dst_tile`. All destinations behind one level-specific port share the
    /// index; assignment is static by destination subtree.
    pub fn remote_port_of(&self, src_tile: u32, dst_tile: u32) -> Result<u32, TopologyError> {
        let n_tiles = self.n_tiles();
        if src_tile >= n_tiles {
            return Err(TopologyError::BadTile(src_tile, n_tiles));
        }
        if dst_tile >= n_tiles {
            return Err(TopologyError::BadTile(dst_tile, n_tiles));
        }
        if src_tile == dst_tile {
            return Err(TopologyError::LocalNotRemote);
        }
        let ports = self.remote_ports_by_level();
        let level = self.level_index_between(src_tile, dst_tile);
        debug_assert!(level >= 1);
        if ports.len() == 1 {
            // Single remote level: one port per sibling tile (own index unused).
            return Ok(dst_tile % self.levels[1].fanout);
        }
        let base: u32 = ports[..level - 1].iter().sum();
        if level == 1 {
            // Innermost remote level: one shared port for all sibling tiles.
            return Ok(base);
        }
        // One port per sibling subtree at this level, skipping our own.
        let child_tpu = self.tiles_per_unit(level - 1);
        let fanout = self.levels[level].fanout;
        let dst_child = (dst_tile / child_tpu) % fanout;
        let src_child = (src_tile / child_tpu) % fanout;
        debug_assert_ne!(dst_child, src_child);
        let rel = if dst_child > src_child { dst_child - 1 } else { dst_child };
        Ok(base + rel)
    }
}
