//! Target-platform parameters and virtual-time arithmetic.
//!
//! Every timing constant the simulator consumes lives in [`TargetConfig`].
//! Cycle costs are exact rationals so that block times can be recomputed
//! bit-for-bit from logged counters; virtual time itself is an integer
//! cycle counter.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use thiserror::Error;

/// Non-negative rational cycle cost (e.g. `1.2` or `6/5` cycles).
pub type Cost = Ratio<u64>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, reason: reason.into() }
}

/// Geometry of one cache: capacity, line size and associativity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheGeometry {
    pub total_bytes: u64,
    pub line_bytes: u64,
    pub associativity: u64,
}

impl CacheGeometry {
    pub const fn new(total_bytes: u64, line_bytes: u64, associativity: u64) -> Self {
        Self { total_bytes, line_bytes, associativity }
    }

    /// Number of sets. Only meaningful on a validated geometry.
    pub fn set_count(&self) -> u64 {
        self.total_bytes / (self.line_bytes * self.associativity)
    }

    fn check(&self, total: &'static str, line: &'static str, assoc: &'static str) -> Result<(), ConfigError> {
        if self.total_bytes == 0 {
            return Err(invalid(total, "must be positive"));
        }
        if self.line_bytes == 0 || !self.line_bytes.is_power_of_two() {
            return Err(invalid(line, format!("{} is not a positive power of two", self.line_bytes)));
        }
        if self.associativity == 0 {
            return Err(invalid(assoc, "must be positive"));
        }
        let way_bytes = self.line_bytes * self.associativity;
        if self.total_bytes % way_bytes != 0 {
            return Err(invalid(
                total,
                format!(
                    "{} is not divisible by line_bytes x associativity = {}",
                    self.total_bytes, way_bytes
                ),
            ));
        }
        Ok(())
    }
}

/// Largest supported core count.
pub const MAX_CORES: u32 = 64;

/// All timing parameters of the simulated platform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetConfig {
    pub core_count: u32,
    pub clock_hz: u64,
    /// Mean cycles per instruction (Tm).
    pub mean_instr_cycles: Cost,
    /// Cycles per instruction-cache miss.
    pub imiss_cycles: Cost,
    /// Cycles per data-cache miss.
    pub dmiss_cycles: Cost,
    pub icache: CacheGeometry,
    pub dcache: CacheGeometry,
    /// Extra cycles per access to data placed in shared memory.
    pub shared_mem_extra_cycles: Cost,
    /// Cycles every participating core spends entering a parallel region.
    pub fork_overhead_cycles: u64,
    /// Cycles every participating core spends at the closing barrier.
    pub join_overhead_cycles: u64,
}

impl Default for TargetConfig {
    /// A 16-core arm926-class platform at 470 MHz.
    fn default() -> Self {
        Self {
            core_count: 16,
            clock_hz: 470_000_000,
            mean_instr_cycles: Ratio::new(6, 5),
            imiss_cycles: Ratio::from_integer(24),
            dmiss_cycles: Ratio::from_integer(24),
            icache: CacheGeometry::new(16 * 1024, 32, 4),
            dcache: CacheGeometry::new(16 * 1024, 32, 4),
            shared_mem_extra_cycles: Ratio::from_integer(2),
            fork_overhead_cycles: 0,
            join_overhead_cycles: 0,
        }
    }
}

impl TargetConfig {
    /// Returns the configuration unchanged if every invariant holds,
    /// otherwise the first violation, naming the offending field.
    pub fn validate(self) -> Result<Self, ConfigError> {
        if self.core_count == 0 || self.core_count > MAX_CORES {
            return Err(invalid("core_count", format!("must be between 1 and {MAX_CORES}")));
        }
        if self.clock_hz == 0 {
            return Err(invalid("clock_hz", "must be positive"));
        }
        for (field, cost) in [
            ("mean_instr_cycles", &self.mean_instr_cycles),
            ("imiss_cycles", &self.imiss_cycles),
            ("dmiss_cycles", &self.dmiss_cycles),
            ("shared_mem_extra_cycles", &self.shared_mem_extra_cycles),
        ] {
            if *cost.denom() == 0 {
                return Err(invalid(field, "zero denominator"));
            }
        }
        self.icache.check("icache_total_bytes", "icache_line_bytes", "icache_associativity")?;
        self.dcache.check("dcache_total_bytes", "dcache_line_bytes", "dcache_associativity")?;
        Ok(self)
    }

    pub fn with_cores(mut self, core_count: u32) -> Self {
        self.core_count = core_count;
        self
    }

    /// Parses the `key = value` configuration format. Keys not present keep
    /// their [`Default`] value; unknown keys are rejected. The result is
    /// validated.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                reason: format!("expected `key = value`, found `{content}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let syntax = |reason: String| ConfigError::Syntax { line, reason };
            let int = |v: &str| -> Result<u64, ConfigError> {
                v.parse::<u64>().map_err(|_| syntax(format!("`{key}` expects a non-negative integer, found `{v}`")))
            };
            let cost = |v: &str| -> Result<Cost, ConfigError> {
                parse_cost(v).map_err(|_| syntax(format!("`{key}` expects a non-negative number, found `{v}`")))
            };
            match key {
                "core_count" => {
                    cfg.core_count = u32::try_from(int(value)?).map_err(|_| syntax("core_count out of range".into()))?
                }
                "clock_hz" => cfg.clock_hz = int(value)?,
                "mean_instr_cycles" => cfg.mean_instr_cycles = cost(value)?,
                "imiss_cycles" => cfg.imiss_cycles = cost(value)?,
                "dmiss_cycles" => cfg.dmiss_cycles = cost(value)?,
                "shared_mem_extra_cycles" => cfg.shared_mem_extra_cycles = cost(value)?,
                "fork_overhead_cycles" => cfg.fork_overhead_cycles = int(value)?,
                "join_overhead_cycles" => cfg.join_overhead_cycles = int(value)?,
                "icache_total_bytes" => cfg.icache.total_bytes = int(value)?,
                "icache_line_bytes" => cfg.icache.line_bytes = int(value)?,
                "icache_associativity" => cfg.icache.associativity = int(value)?,
                "dcache_total_bytes" => cfg.dcache.total_bytes = int(value)?,
                "dcache_line_bytes" => cfg.dcache.line_bytes = int(value)?,
                "dcache_associativity" => cfg.dcache.associativity = int(value)?,
                _ => return Err(ConfigError::UnknownKey { line, key: key.to_string() }),
            }
        }
        cfg.validate()
    }
}

impl fmt::Display for TargetConfig {
    /// Writes the configuration in the same format [`TargetConfig::parse`] reads.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "core_count = {}", self.core_count)?;
        writeln!(f, "clock_hz = {}", self.clock_hz)?;
        writeln!(f, "mean_instr_cycles = {}", self.mean_instr_cycles)?;
        writeln!(f, "imiss_cycles = {}", self.imiss_cycles)?;
        writeln!(f, "dmiss_cycles = {}", self.dmiss_cycles)?;
        writeln!(f, "shared_mem_extra_cycles = {}", self.shared_mem_extra_cycles)?;
        writeln!(f, "fork_overhead_cycles = {}", self.fork_overhead_cycles)?;
        writeln!(f, "join_overhead_cycles = {}", self.join_overhead_cycles)?;
        for (prefix, g) in [("icache", &self.icache), ("dcache", &self.dcache)] {
            writeln!(f, "{prefix}_total_bytes = {}", g.total_bytes)?;
            writeln!(f, "{prefix}_line_bytes = {}", g.line_bytes)?;
            writeln!(f, "{prefix}_associativity = {}", g.associativity)?;
        }
        Ok(())
    }
}

/// Parses `3`, `1.25` or `5/4` into an exact rational.
pub fn parse_cost(s: &str) -> Result<Cost, String> {
    let s = s.trim();
    if s.contains('/') {
        let r = Ratio::<u64>::from_str(s).map_err(|e| e.to_string())?;
        return Ok(r);
    }
    let (int_part, frac_part) = s.split_once('.').unwrap_or((s, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err("empty number".into());
    }
    let digits_ok = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    if !digits_ok(int_part) || !digits_ok(frac_part) || frac_part.len() > 9 {
        return Err(format!("malformed number `{s}`"));
    }
    let den = 10u64.pow(frac_part.len() as u32);
    let whole: u64 = if int_part.is_empty() { 0 } else { int_part.parse().map_err(|_| "overflow")? };
    let frac: u64 = if frac_part.is_empty() { 0 } else { frac_part.parse().map_err(|_| "overflow")? };
    let num = whole.checked_mul(den).and_then(|w| w.checked_add(frac)).ok_or("overflow")?;
    Ok(Ratio::new(num, den))
}

/// A point in target time, counted in clock cycles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VirtualTime(pub u64);

impl VirtualTime {
    pub fn cycles(self) -> u64 {
        self.0
    }

    pub fn to_ns(self, config: &TargetConfig) -> u64 {
        cycles_to_ns(self.0, config.clock_hz)
    }
}

/// `cycles * 1e9 / clock_hz`, rounded half-up to an integer nanosecond.
pub fn cycles_to_ns(cycles: u64, clock_hz: u64) -> u64 {
    let num = cycles as u128 * 1_000_000_000u128;
    let den = clock_hz as u128;
    ((2 * num + den) / (2 * den)) as u64
}

/// Rounds a non-negative rational half-up to the nearest integer.
pub fn round_half_up(numer: u128, denom: u128) -> u64 {
    ((2 * numer + denom) / (2 * denom)) as u64
}

/// `round(C*Tm + Timiss*ICmisses + Tdmiss*DCmisses)` in cycles.
pub fn block_time_cycles(config: &TargetConfig, instr_count: u64, ic_misses: u64, dc_misses: u64) -> u64 {
    let terms = [
        (&config.mean_instr_cycles, instr_count),
        (&config.imiss_cycles, ic_misses),
        (&config.dmiss_cycles, dc_misses),
    ];
    let (numer, denom) = sum_scaled(&terms);
    round_half_up(numer, denom)
}

/// `round(cost * count)` in cycles.
pub fn scaled_cycles(cost: &Cost, count: u64) -> u64 {
    let (numer, denom) = sum_scaled(&[(cost, count)]);
    round_half_up(numer, denom)
}

fn sum_scaled(terms: &[(&Cost, u64)]) -> (u128, u128) {
    let denom: u128 = terms.iter().fold(1u128, |acc, (c, _)| lcm(acc, *c.denom() as u128));
    let numer = terms
        .iter()
        .map(|(c, n)| *c.numer() as u128 * (denom / *c.denom() as u128) * *n as u128)
        .sum();
    (numer, denom)
}

fn lcm(a: u128, b: u128) -> u128 {
    fn gcd(mut a: u128, mut b: u128) -> u128 {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    }
    a / gcd(a, b) * b
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_platform_is_valid() {
        let cfg = TargetConfig::default();
        assert_eq!(cfg.core_count, 16);
        assert_eq!(cfg.clock_hz, 470_000_000);
        assert_eq!(cfg.clone().validate(), Ok(cfg));
    }

    #[test]
    fn zero_cores_rejected() {
        let err = TargetConfig::default().with_cores(0).validate().unwrap_err();
        assert!(err.to_string().contains("core_count"), "{err}");
    }

    #[test]
    fn indivisible_cache_rejected() {
        let mut cfg = TargetConfig::default();
        cfg.icache = CacheGeometry::new(1024, 64, 3);
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("icache_total_bytes"), "{err}");
    }

    #[test]
    fn non_power_of_two_line_rejected() {
        let mut cfg = TargetConfig::default();
        cfg.dcache = CacheGeometry::new(960, 48, 1);
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid { field: "dcache_line_bytes", .. })));
    }

    #[test]
    fn ns_conversion() {
        assert_eq!(cycles_to_ns(470, 470_000_000), 1000);
        assert_eq!(cycles_to_ns(0, 470_000_000), 0);
        assert_eq!(cycles_to_ns(1, 1_000_000_000), 1);
        // 1 cycle at 3 GHz is 0.333 ns; 2 cycles is 0.667 ns.
        assert_eq!(cycles_to_ns(1, 3_000_000_000), 0);
        assert_eq!(cycles_to_ns(2, 3_000_000_000), 1);
        // exact half rounds up: 1 cycle at 2 GHz = 0.5 ns
        assert_eq!(cycles_to_ns(1, 2_000_000_000), 1);
    }

    #[test]
    fn block_equation() {
        let mut cfg = TargetConfig::default();
        cfg.mean_instr_cycles = Ratio::from_integer(2);
        cfg.imiss_cycles = Ratio::from_integer(10);
        cfg.dmiss_cycles = Ratio::from_integer(20);
        assert_eq!(block_time_cycles(&cfg, 100, 3, 1), 250);
        cfg.mean_instr_cycles = Ratio::from_integer(1);
        assert_eq!(block_time_cycles(&cfg, 50, 0, 0), 50);
        // 5 * 1.3 = 6.5 rounds up to 7
        cfg.mean_instr_cycles = Ratio::new(13, 10);
        assert_eq!(block_time_cycles(&cfg, 5, 0, 0), 7);
    }

    #[test]
    fn parse_round_trip_and_errors() {
        let text = "# reference platform\ncore_count = 4\nclock_hz = 100000000\nmean_instr_cycles = 1.25\nimiss_cycles = 3/2\n";
        let cfg = TargetConfig::parse(text).unwrap();
        assert_eq!(cfg.core_count, 4);
        assert_eq!(cfg.mean_instr_cycles, Ratio::new(5, 4));
        assert_eq!(cfg.imiss_cycles, Ratio::new(3, 2));
        assert_eq!(TargetConfig::parse(&cfg.to_string()).unwrap(), cfg);

        assert!(matches!(TargetConfig::parse("cores = 4"), Err(ConfigError::UnknownKey { line: 1, .. })));
        assert!(matches!(TargetConfig::parse("\ncore_count 4"), Err(ConfigError::Syntax { line: 2, .. })));
        assert!(matches!(TargetConfig::parse("core_count = 0"), Err(ConfigError::Invalid { field: "core_count", .. })));
        assert!(TargetConfig::parse("imiss_cycles = -1").is_err());
    }

    proptest! {
        #[test]
        fn ns_monotone(a in 0u64..1 << 40, b in 0u64..1 << 40, hz in 1u64..5_000_000_000) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(cycles_to_ns(lo, hz) <= cycles_to_ns(hi, hz));
        }

        #[test]
        fn validate_idempotent(cores in 0u32..64, total_kb in 0u64..64, line_shift in 0u32..8, assoc in 0u64..9) {
            let mut cfg = TargetConfig::default().with_cores(cores);
            cfg.icache = CacheGeometry::new(total_kb * 1024, 1 << line_shift, assoc);
            match cfg.clone().validate() {
                Ok(v) => {
                    prop_assert_eq!(&v, &cfg);
                    prop_assert_eq!(v.clone().validate(), Ok(v));
                }
                Err(e) => prop_assert_eq!(cfg.validate(), Err(e)),
            }
        }
    }
}
