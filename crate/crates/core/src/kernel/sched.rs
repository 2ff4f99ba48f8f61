use crate::frontend::LockId;

use super::{CoreState, CoreStatus};

/// Lock of one critical-section name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VirtualLock {
    pub holder: Option<u32>,
    /// Time the current holder acquired the lock.
    pub acquired_at: u64,
    /// `(arrival time, core)`; served in ascending order.
    pub wait_queue: Vec<(u64, u32)>,
}

impl VirtualLock {
    /// Removes and returns the next waiter: earliest arrival, then lowest
    /// core id.
    pub fn pop_waiter(&mut self) -> Option<(u64, u32)> {
        let (i, _) = self.wait_queue.iter().enumerate().min_by_key(|(_, w)| **w)?;
        Some(self.wait_queue.remove(i))
    }
}

/// Every non-idle core is blocked on a lock.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deadlock {
    /// `(waiting core, lock)` pairs, ascending core id.
    pub waiting: Vec<(u32, LockId)>,
}

/// Picks the runnable core with the smallest clock, lowest id on ties.
/// `Ok(None)` when every core is idle.
pub fn step_scheduler(cores: &[CoreState]) -> Result<Option<usize>, Deadlock> {
    let next = cores
        .iter()
        .enumerate()
        .filter(|(_, c)| c.status == CoreStatus::Running)
        .min_by_key(|(i, c)| (c.clock, *i))
        .map(|(i, _)| i);
    if next.is_some() {
        return Ok(next);
    }
    let waiting: Vec<(u32, LockId)> = cores
        .iter()
        .filter_map(|c| match c.status {
            CoreStatus::Waiting(l) => Some((c.core_id, l)),
            _ => None,
        })
        .collect();
    if waiting.is_empty() {
        Ok(None)
    } else {
        Err(Deadlock { waiting })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::TargetConfig;

    fn cores(clocks: &[(u64, CoreStatus)]) -> Vec<CoreState> {
        let cfg = TargetConfig::default();
        clocks
            .iter()
            .enumerate()
            .map(|(i, &(clock, status))| {
                let mut c = CoreState::new(i as u32, &cfg);
                c.clock = clock;
                c.status = status;
                c
            })
            .collect()
    }

    #[test]
    fn picks_min_clock_then_lowest_id() {
        let r = CoreStatus::Running;
        assert_eq!(step_scheduler(&cores(&[(100, r), (90, r)])), Ok(Some(1)));
        assert_eq!(step_scheduler(&cores(&[(50, r), (50, r)])), Ok(Some(0)));
        assert_eq!(step_scheduler(&cores(&[(10, CoreStatus::Idle), (50, r)])), Ok(Some(1)));
        assert_eq!(step_scheduler(&cores(&[(10, CoreStatus::Idle)])), Ok(None));
    }

    #[test]
    fn all_waiting_is_deadlock() {
        let w = CoreStatus::Waiting(0);
        let err = step_scheduler(&cores(&[(5, w), (7, w), (9, CoreStatus::Idle)])).unwrap_err();
        assert_eq!(err.waiting, vec![(0, 0), (1, 0)]);
    }

    #[test]
    fn waiters_fifo_by_arrival_then_core() {
        let mut l = VirtualLock { holder: Some(3), acquired_at: 0, wait_queue: vec![(10, 0), (5, 2), (5, 1)] };
        assert_eq!(l.pop_waiter(), Some((5, 1)));
        assert_eq!(l.pop_waiter(), Some((5, 2)));
        assert_eq!(l.pop_waiter(), Some((10, 0)));
        assert_eq!(l.pop_waiter(), None);
    }
}
