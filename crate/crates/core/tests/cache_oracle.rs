use natsim::cache::CacheState;
use natsim::target::CacheGeometry;
use proptest::prelude::*;

/// Reference LRU: every resident line carries the time of its last use and
/// the victim is the resident line of the set with the oldest stamp.
struct StampLru {
    line_bytes: u64,
    sets: u64,
    ways: usize,
    resident: Vec<(u64, u64)>,
    now: u64,
}

impl StampLru {
    fn access(&mut self, addr: u64) -> bool {
        self.now += 1;
        let line = addr / self.line_bytes;
        if let Some(r) = self.resident.iter_mut().find(|r| r.0 == line) {
            r.1 = self.now;
            return true;
        }
        let set = line % self.sets;
        let in_set: Vec<usize> = (0..self.resident.len()).filter(|&i| self.resident[i].0 % self.sets == set).collect();
        if in_set.len() == self.ways {
            let victim = *in_set.iter().min_by_key(|&&i| self.resident[i].1).unwrap();
            self.resident.swap_remove(victim);
        }
        self.resident.push((line, self.now));
        false
    }
}

fn case() -> impl Strategy<Value = (CacheGeometry, Vec<u64>)> {
    (1u64..=4, 1u64..=64, prop::sample::select(vec![4u64, 8, 16, 32, 64])).prop_flat_map(|(ways, sets, line)| {
        let geometry = CacheGeometry::new(ways * sets * line, line, ways);
        // Three times the capacity keeps both hits and evictions common.
        let span = 3 * geometry.total_bytes;
        (Just(geometry), prop::collection::vec(0..span, 0..=10_000))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn matches_reference_lru((geometry, addrs) in case()) {
        let mut cache = CacheState::new(geometry);
        let mut oracle = StampLru {
            line_bytes: geometry.line_bytes,
            sets: geometry.set_count(),
            ways: geometry.associativity as usize,
            resident: Vec::new(),
            now: 0,
        };
        let mut hits = 0;
        for (i, &a) in addrs.iter().enumerate() {
            let expect = oracle.access(a);
            prop_assert_eq!(cache.access(a).hit, expect, "access {} to {:#x}", i, a);
            hits += expect as u64;
        }
        let stats = cache.stats();
        prop_assert_eq!(stats.accesses, addrs.len() as u64);
        prop_assert_eq!(stats.hits, hits);
        prop_assert_eq!(stats.misses, addrs.len() as u64 - hits);
    }
}

#[test]
fn direct_mapped_thrash() {
    let mut c = CacheState::new(CacheGeometry::new(64, 16, 1));
    // 0x00 and 0x40 map to set 0 and evict each other.
    let hits: Vec<bool> = [0x00, 0x40, 0x00, 0x04, 0x40].iter().map(|&a| c.access(a).hit).collect();
    assert_eq!(hits, [false, false, false, true, false]);
}
