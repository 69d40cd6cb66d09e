/// Outcome of feeding one epoch's monitored loss to [`EarlyStopping`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Stops once the monitored loss has gone `patience` epochs without
/// dropping at least `min_delta` below the best value seen.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: Option<f64>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: None,
            stale: 0,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn observe(&mut self, loss: f64) -> Verdict {
        match self.best {
            Some(b) if loss > b - self.min_delta => {
                self.stale += 1;
                if self.stale >= self.patience {
                    Verdict::Stop
                } else {
                    Verdict::Continue
                }
            }
            _ => {
                self.best = Some(loss);
                self.stale = 0;
                Verdict::Improved
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_loss_stops_after_patience_plus_one() {
        let mut es = EarlyStopping::new(5, 1e-5);
        let mut epochs = 0;
        loop {
            epochs += 1;
            if es.observe(-0.5) == Verdict::Stop {
                break;
            }
        }
        assert_eq!(epochs, 6);
    }

    #[test]
    fn improving_loss_never_stops() {
        let mut es = EarlyStopping::new(1, 1e-5);
        for i in 0..100 {
            assert_eq!(es.observe(-(i as f64) * 1e-3), Verdict::Improved);
        }
    }

    #[test]
    fn tiny_improvements_do_not_count() {
        let mut es = EarlyStopping::new(2, 1e-5);
        es.observe(1.0);
        assert_eq!(es.observe(1.0 - 1e-6), Verdict::Continue);
        assert_eq!(es.observe(1.0 - 2e-6), Verdict::Stop);
        assert_eq!(es.best(), Some(1.0));
    }
}
