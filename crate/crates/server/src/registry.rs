//! In-memory handle registry with idle expiry.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

struct Slot<T> {
    value: Arc<T>,
    touched: Instant,
}

pub struct Store<T> {
    ttl: Duration,
    slots: Mutex<HashMap<String, Slot<T>>>,
}

impl<T> Store<T> {
    pub fn new(ttl: Duration) -> Self {
        Self {
            ttl,
            slots: Mutex::new(HashMap::new()),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, Slot<T>>> {
        // A panic while holding the lock cannot leave a slot half-written.
        self.slots.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Stores `value` under a fresh id, evicting expired entries first.
    pub fn insert(&self, value: T) -> String {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let now = Instant::now();
        let mut slots = self.lock();
        slots.retain(|_, s| now.duration_since(s.touched) < self.ttl);
        slots.insert(
            id.clone(),
            Slot {
                value: Arc::new(value),
                touched: now,
            },
        );
        id
    }

    /// Swaps the value behind an existing id. Readers keep the old value.
    pub fn replace(&self, id: &str, value: T) -> bool {
        let mut slots = self.lock();
        match slots.get_mut(id) {
            Some(slot) => {
                slot.value = Arc::new(value);
                slot.touched = Instant::now();
                true
            }
            None => false,
        }
    }

    /// Looks up a live entry and refreshes its idle timer. Expired entries
    /// are removed on the spot.
    pub fn get(&self, id: &str) -> Option<Arc<T>> {
        let now = Instant::now();
        let mut slots = self.lock();
        let expired = now.duration_since(slots.get(id)?.touched) >= self.ttl;
        if expired {
            slots.remove(id);
            return None;
        }
        let slot = slots.get_mut(id)?;
        slot.touched = now;
        Some(slot.value.clone())
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
