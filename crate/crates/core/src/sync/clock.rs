use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockMode {
    /// Real time; ticks are scheduled against monotonic deadlines.
    Wall,
    /// Simulated time; advances only through [`Clock::tick`].
    Virtual,
}

/// The server's authoritative frame clock.
#[derive(Debug, Clone)]
pub struct Clock {
    mode: ClockMode,
    tick_hz: f64,
    ticks: u64,
    start: Instant,
    now: f64,
}

impl Clock {
    pub fn new(mode: ClockMode, tick_hz: f64) -> Self {
        Self {
            mode,
            tick_hz,
            ticks: 0,
            start: Instant::now(),
            now: 0.0,
        }
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    pub fn tick_interval(&self) -> f64 {
        1.0 / self.tick_hz
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// Time of the most recent tick, seconds since start.
    pub fn now(&self) -> f64 {
        self.now
    }

    /// Seconds since the clock was created, on the wall.
    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    /// Advances to the next tick and returns its time.
    ///
    /// Virtual mode returns `ticks / tick_hz` immediately. Wall mode sleeps
    /// until the next deadline and returns the measured time, which never
    /// decreases.
    pub fn tick(&mut self) -> f64 {
        self.ticks += 1;
        let scheduled = self.ticks as f64 / self.tick_hz;
        self.now = match self.mode {
            ClockMode::Virtual => scheduled,
            ClockMode::Wall => {
                let deadline = self.start + Duration::from_secs_f64(scheduled);
                let now = Instant::now();
                if deadline > now {
                    std::thread::sleep(deadline - now);
                }
                self.elapsed().max(self.now)
            }
        };
        self.now
    }
}
