//! Single-slot snapshot mailbox: writers replace the value atomically,
//! readers get a shared snapshot and never see a partial update.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

#[derive(Debug)]
pub struct Mailbox<T> {
    slot: Mutex<Option<(u64, Arc<T>)>>,
    version: AtomicU64,
}

impl<T> Default for Mailbox<T> {
    fn default() -> Self {
        Self {
            slot: Mutex::new(None),
            version: AtomicU64::new(0),
        }
    }
}

impl<T> Mailbox<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replaces the value and returns its version (starting at 1).
    pub fn publish(&self, value: T) -> u64 {
        let value = Arc::new(value);
        let mut slot = self.slot.lock().unwrap_or_else(|e| e.into_inner());
        let version = self.version.load(Ordering::Relaxed) + 1;
        *slot = Some((version, value));
        self.version.store(version, Ordering::Release);
        version
    }

    /// Version of the latest value, 0 when empty.
    pub fn version(&self) -> u64 {
        self.version.load(Ordering::Acquire)
    }

    pub fn latest(&self) -> Option<(u64, Arc<T>)> {
        self.slot
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .as_ref()
            .map(|(v, x)| (*v, Arc::clone(x)))
    }
}
