use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Blocking token bucket. A rate of zero or less disables limiting.
#[derive(Debug)]
pub struct TokenBucket {
    rate: f64,
    burst: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(rate_per_sec: f64, burst: u32) -> Self {
        let burst = f64::from(burst.max(1));
        Self {
            rate: rate_per_sec,
            burst,
            state: Mutex::new((burst, Instant::now())),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(0.0, 1)
    }

    pub fn is_unlimited(&self) -> bool {
        !(self.rate > 0.0 && self.rate.is_finite())
    }

    /// Takes one token, sleeping until one is available.
    pub fn acquire(&self) {
        if self.is_unlimited() {
            return;
        }
        loop {
            let wait = {
                let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
                let now = Instant::now();
                let elapsed = now.duration_since(st.1).as_secs_f64();
                st.0 = (st.0 + elapsed * self.rate).min(self.burst);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                (1.0 - st.0) / self.rate
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burst_then_throttle() {
        let b = TokenBucket::new(50.0, 2);
        let t0 = Instant::now();
        b.acquire();
        b.acquire();
        assert!(t0.elapsed() < Duration::from_millis(15));
        b.acquire();
        b.acquire();
        // Two extra tokens at 50/s need about 40 ms.
        assert!(t0.elapsed() >= Duration::from_millis(30));
    }

    #[test]
    fn unlimited_never_blocks() {
        let b = TokenBucket::unlimited();
        let t0 = Instant::now();
        for _ in 0..1000 {
            b.acquire();
        }
        assert!(t0.elapsed() < Duration::from_millis(50));
    }
}
