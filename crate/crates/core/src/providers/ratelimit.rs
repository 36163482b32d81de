use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

/// Spaces request starts at least `1/rate` seconds apart and caps the
/// number of requests in flight.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Option<Instant>>,
    in_flight: Mutex<usize>,
    max_in_flight: usize,
    freed: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a RateLimiter,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.limiter.in_flight.lock().expect("limiter poisoned");
        *n -= 1;
        self.limiter.freed.notify_one();
    }
}

impl RateLimiter {
    /// `rate` is requests per second; non-positive or non-finite means unlimited.
    pub fn new(rate: f64, max_in_flight: usize) -> Self {
        let interval = if rate.is_finite() && rate > 0.0 { Duration::from_secs_f64(1.0 / rate) } else { Duration::ZERO };
        RateLimiter {
            interval,
            next_slot: Mutex::new(None),
            in_flight: Mutex::new(0),
            max_in_flight: max_in_flight.max(1),
            freed: Condvar::new(),
        }
    }

    /// Blocks until both a concurrency slot and a rate slot are free.
    pub fn acquire(&self) -> Permit<'_> {
        {
            let mut n = self.in_flight.lock().expect("limiter poisoned");
            while *n >= self.max_in_flight {
                n = self.freed.wait(n).expect("limiter poisoned");
            }
            *n += 1;
        }
        let slot = {
            let mut next = self.next_slot.lock().expect("limiter poisoned");
            let now = Instant::now();
            let slot = match *next {
                Some(t) if t > now => t,
                _ => now,
            };
            *next = Some(slot + self.interval);
            slot
        };
        let now = Instant::now();
        if slot > now {
            thread::sleep(slot - now);
        }
        Permit { limiter: self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn starts_are_spaced() {
        let lim = RateLimiter::new(50.0, 8);
        let times = Mutex::new(Vec::new());
        thread::scope(|s| {
            for _ in 0..4 {
                s.spawn(|| {
                    for _ in 0..5 {
                        let _p = lim.acquire();
                        times.lock().unwrap().push(Instant::now());
                    }
                });
            }
        });
        let mut t = times.into_inner().unwrap();
        t.sort();
        let span = t[t.len() - 1] - t[0];
        // 20 starts at 50/s need at least 19 intervals of 20ms
        assert!(span >= Duration::from_millis(19 * 20 - 5), "{span:?}");
    }

    #[test]
    fn in_flight_is_bounded() {
        let lim = RateLimiter::new(0.0, 2);
        let current = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        thread::scope(|s| {
            for _ in 0..6 {
                s.spawn(|| {
                    let _p = lim.acquire();
                    let now = current.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    thread::sleep(Duration::from_millis(10));
                    current.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
