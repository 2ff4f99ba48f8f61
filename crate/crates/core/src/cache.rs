//! Set-associative LRU cache model.
//!
//! One instruction cache and one data cache are owned by every virtual core.
//! Writes are ordinary accesses (write-allocate, no write-back penalty).

use crate::frontend::BasicBlockRecord;
use crate::target::CacheGeometry;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct CacheStats {
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
}

impl std::ops::AddAssign for CacheStats {
    fn add_assign(&mut self, rhs: Self) {
        self.accesses += rhs.accesses;
        self.hits += rhs.hits;
        self.misses += rhs.misses;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessResult {
    pub hit: bool,
    /// Tag pushed out of a full set on a miss.
    pub evicted_tag: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheState {
    geometry: CacheGeometry,
    set_count: u64,
    /// Per set, tags ordered most- to least-recently used.
    sets: Vec<Vec<u64>>,
    stats: CacheStats,
}

impl CacheState {
    /// Creates a cold cache. The geometry must already be validated.
    pub fn new(geometry: CacheGeometry) -> Self {
        let set_count = geometry.set_count();
        assert!(set_count > 0, "cache geometry not validated: {geometry:?}");
        let ways = geometry.associativity as usize;
        Self {
            geometry,
            set_count,
            sets: (0..set_count).map(|_| Vec::with_capacity(ways)).collect(),
            stats: CacheStats::default(),
        }
    }

    pub fn geometry(&self) -> CacheGeometry {
        self.geometry
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    pub fn set_count(&self) -> u64 {
        self.set_count
    }

    /// Tags resident in `set`, most-recently used first.
    pub fn set_contents(&self, set: usize) -> &[u64] {
        &self.sets[set]
    }

    pub fn access(&mut self, address: u64) -> AccessResult {
        let line = address / self.geometry.line_bytes;
        let set_idx = (line % self.set_count) as usize;
        let tag = line / self.set_count;
        let ways = self.geometry.associativity as usize;
        let set = &mut self.sets[set_idx];
        self.stats.accesses += 1;
        if let Some(pos) = set.iter().position(|&t| t == tag) {
            set[..=pos].rotate_right(1);
            self.stats.hits += 1;
            return AccessResult { hit: true, evicted_tag: None };
        }
        self.stats.misses += 1;
        let evicted_tag = if set.len() == ways { set.pop() } else { None };
        set.insert(0, tag);
        AccessResult { hit: false, evicted_tag }
    }

    /// Fetches the code of one basic block: one access per line spanned by
    /// `[code_addr, code_addr + code_len_bytes)`. Returns the miss count.
    pub fn block_fetch(&mut self, record: &BasicBlockRecord) -> u64 {
        self.fetch_range(record.code_addr, record.code_len_bytes)
    }

    pub fn fetch_range(&mut self, addr: u64, len: u64) -> u64 {
        if len == 0 {
            return 0;
        }
        let line_bytes = self.geometry.line_bytes;
        let first = addr / line_bytes;
        let last = (addr + len - 1) / line_bytes;
        (first..=last).filter(|line| !self.access(line * line_bytes).hit).count() as u64
    }

    /// Empties every set and zeroes the statistics.
    pub fn reset(&mut self) {
        self.sets.iter_mut().for_each(Vec::clear);
        self.stats = CacheStats::default();
    }
}
