use crate::frontend::{Cfg, Placement, VarId, VarKind};

pub const SHARED_BASE: u64 = 0x2000_0000;
pub const PRIVATE_BASE: u64 = 0x4000_0000;
/// Distance between the private regions of consecutive cores.
pub const PRIVATE_STRIDE: u64 = 0x0100_0000;
pub const WORD_BYTES: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarLoc {
    pub placement: Placement,
    /// Word offset inside the shared region or inside each private region.
    pub word: usize,
}

/// Static addresses of every variable with storage. Array parameters have
/// none; they alias the caller's argument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryLayout {
    locs: Vec<Option<VarLoc>>,
    pub shared_words: usize,
    pub private_words: usize,
}

impl MemoryLayout {
    pub fn new(cfg: &Cfg) -> Result<Self, String> {
        let mut shared_words = 0;
        let mut private_words = 0;
        let mut locs = Vec::with_capacity(cfg.vars.len());
        for v in &cfg.vars {
            if v.kind == VarKind::ArrayParam {
                locs.push(None);
                continue;
            }
            let next = match v.placement {
                Placement::Shared => &mut shared_words,
                Placement::Private => &mut private_words,
            };
            locs.push(Some(VarLoc { placement: v.placement, word: *next }));
            *next += v.words().max(1) as usize;
        }
        if private_words as u64 * WORD_BYTES > PRIVATE_STRIDE {
            return Err(format!("private data needs {} bytes, more than the {PRIVATE_STRIDE} available per core", private_words as u64 * WORD_BYTES));
        }
        if SHARED_BASE + shared_words as u64 * WORD_BYTES > PRIVATE_BASE {
            return Err(format!("shared data needs {} bytes, more than fits below private memory", shared_words as u64 * WORD_BYTES));
        }
        Ok(Self { locs, shared_words, private_words })
    }

    pub fn loc(&self, var: VarId) -> Option<VarLoc> {
        self.locs.get(var as usize).copied().flatten()
    }

    /// Target address of word `word` in `placement` memory as seen by `core`.
    pub fn address(placement: Placement, word: usize, core: u32) -> u64 {
        match placement {
            Placement::Shared => SHARED_BASE + word as u64 * WORD_BYTES,
            Placement::Private => PRIVATE_BASE + core as u64 * PRIVATE_STRIDE + word as u64 * WORD_BYTES,
        }
    }

    /// Base address of a variable as seen by `core`.
    pub fn address_of(&self, var: VarId, core: u32) -> Option<u64> {
        self.loc(var).map(|l| Self::address(l.placement, l.word, core))
    }
}
