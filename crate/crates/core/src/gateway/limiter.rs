use std::sync::{Condvar, Mutex};

/// Counting semaphore bounding in-flight live requests.
pub struct RateLimiter {
    available: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a RateLimiter,
}

impl RateLimiter {
    pub fn new(max_in_flight: usize) -> Self {
        Self {
            available: Mutex::new(max_in_flight.max(1)),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().expect("limiter lock poisoned");
        while *n == 0 {
            n = self.freed.wait(n).expect("limiter lock poisoned");
        }
        *n -= 1;
        Permit { limiter: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.limiter.available.lock().expect("limiter lock poisoned") += 1;
        self.limiter.freed.notify_one();
    }
}
