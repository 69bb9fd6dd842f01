/// Simulated time in seconds. Only moves forward.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VirtualClock {
    now: f64,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn advance(&mut self, dt: f64) {
        assert!(dt >= 0.0 && dt.is_finite(), "clock cannot move by {dt}");
        self.now += dt;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advances() {
        let mut c = VirtualClock::new();
        c.advance(1.5);
        c.advance(0.0);
        assert_eq!(c.now(), 1.5);
    }

    #[test]
    #[should_panic]
    fn refuses_to_rewind() {
        VirtualClock::new().advance(-1.0);
    }
}
