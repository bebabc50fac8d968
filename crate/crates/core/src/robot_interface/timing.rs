use std::sync::Mutex;

use serde::{Deserialize, Serialize};

/// Frame deadline, microseconds. A frame of exactly this length is on time.
pub const DEADLINE_US: f64 = 1000.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub frames: usize,
    pub mean_us: f64,
    pub max_us: f64,
    /// Nearest-rank 99th percentile.
    pub p99_us: f64,
    pub missed_deadlines: usize,
}

#[derive(Debug, Default)]
struct Inner {
    durations: Vec<f64>,
    sum: f64,
    max: f64,
    missed: usize,
}

/// Frame-duration statistics, shareable between the control loop and a
/// reader thread.
#[derive(Debug, Default)]
pub struct TimingMonitor {
    inner: Mutex<Inner>,
}

impl TimingMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    /// # Panics
    /// On a negative or non-finite duration.
    pub fn record(&self, duration_us: f64) {
        assert!(duration_us >= 0.0 && duration_us.is_finite(), "frame duration must be a non-negative number");
        let mut g = self.inner.lock().expect("timing monitor poisoned");
        g.durations.push(duration_us);
        g.sum += duration_us;
        g.max = g.max.max(duration_us);
        if duration_us > DEADLINE_US {
            g.missed += 1;
        }
    }

    pub fn summary(&self) -> TimingSummary {
        let g = self.inner.lock().expect("timing monitor poisoned");
        let n = g.durations.len();
        if n == 0 {
            return TimingSummary::default();
        }
        let mut sorted = g.durations.clone();
        sorted.sort_by(f64::total_cmp);
        let rank = ((0.99 * n as f64).ceil() as usize).clamp(1, n);
        TimingSummary { frames: n, mean_us: g.sum / n as f64, max_us: g.max, p99_us: sorted[rank - 1], missed_deadlines: g.missed }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_arithmetic() {
        let m = TimingMonitor::new();
        for d in [100.0, 200.0, 300.0] {
            m.record(d);
        }
        let s = m.summary();
        assert_eq!((s.mean_us, s.max_us, s.missed_deadlines, s.p99_us), (200.0, 300.0, 0, 300.0));
    }

    #[test]
    fn deadline_is_inclusive() {
        let m = TimingMonitor::new();
        m.record(1000.0);
        assert_eq!(m.summary().missed_deadlines, 0);
        m.record(1500.0);
        assert_eq!(m.summary().missed_deadlines, 1);
    }

    #[test]
    fn p99_nearest_rank() {
        let m = TimingMonitor::new();
        for d in 1..=200 {
            m.record(d as f64);
        }
        assert_eq!(m.summary().p99_us, 198.0);
    }

    #[test]
    fn concurrent_recording() {
        let m = std::sync::Arc::new(TimingMonitor::new());
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let m = m.clone();
                std::thread::spawn(move || (0..250).for_each(|_| m.record(10.0)))
            })
            .collect();
        handles.into_iter().for_each(|h| h.join().unwrap());
        assert_eq!(m.summary().frames, 1000);
    }
}
