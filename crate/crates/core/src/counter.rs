use std::sync::atomic::{AtomicU64, Ordering};

/// Exact tally of objective forward and backward passes.
#[derive(Debug, Default)]
pub struct EvalCounter {
    forwards: AtomicU64,
    backwards: AtomicU64,
}

/// Point-in-time copy of an [`EvalCounter`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CounterSnapshot {
    pub forwards: u64,
    pub backwards: u64,
}

impl CounterSnapshot {
    pub fn since(self, earlier: CounterSnapshot) -> CounterSnapshot {
        CounterSnapshot {
            forwards: self.forwards - earlier.forwards,
            backwards: self.backwards - earlier.backwards,
        }
    }
}

impl EvalCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_forward(&self) {
        self.forwards.fetch_add(1, Ordering::Relaxed);
    }

    pub fn add_backward(&self) {
        self.backwards.fetch_add(1, Ordering::Relaxed);
    }

    pub fn forwards(&self) -> u64 {
        self.forwards.load(Ordering::Relaxed)
    }

    pub fn backwards(&self) -> u64 {
        self.backwards.load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            forwards: self.forwards(),
            backwards: self.backwards(),
        }
    }
}
