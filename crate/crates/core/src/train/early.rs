/// Validation-loss early stopping: training halts once `patience` epochs
/// pass without strict improvement over the best loss seen so far.
#[derive(Clone, Debug)]
pub struct EarlyStopper {
    patience: usize,
    best_loss: f64,
    best_epoch: usize,
    epochs_since_best: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            epochs_since_best: 0,
        }
    }

    /// Record one epoch's validation loss. Returns (improved, stop).
    pub fn observe(&mut self, epoch: usize, loss: f64) -> (bool, bool) {
        let improved = loss < self.best_loss;
        if improved {
            self.best_loss = loss;
            self.best_epoch = epoch;
            self.epochs_since_best = 0;
        } else {
            self.epochs_since_best += 1;
        }
        (improved, self.epochs_since_best >= self.patience)
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(patience: usize, losses: &[f64]) -> (usize, usize) {
        // Returns (epochs run, best epoch).
        let mut stopper = EarlyStopper::new(patience);
        for (epoch, &loss) in losses.iter().enumerate() {
            let (_, stop) = stopper.observe(epoch, loss);
            if stop {
                return (epoch + 1, stopper.best_epoch());
            }
        }
        (losses.len(), stopper.best_epoch())
    }

    #[test]
    fn zero_patience_stops_after_first_epoch() {
        let (epochs, best) = run(0, &[5.0, 4.0, 3.0]);
        assert_eq!(epochs, 1);
        assert_eq!(best, 0);
    }

    #[test]
    fn stops_exactly_patience_epochs_after_minimum() {
        // Minimum at epoch 2; with patience 3 the run ends at epoch 5.
        let losses = [5.0, 4.0, 1.0, 2.0, 2.0, 2.0, 0.5];
        let (epochs, best) = run(3, &losses);
        assert_eq!(epochs, 6);
        assert_eq!(best, 2);
    }

    #[test]
    fn plateau_counts_as_no_improvement() {
        let losses = [3.0, 3.0, 3.0, 3.0];
        let (epochs, best) = run(2, &losses);
        assert_eq!(epochs, 3);
        assert_eq!(best, 0);
    }

    #[test]
    fn improvement_resets_the_counter() {
        let losses = [5.0, 4.9, 4.8, 4.7, 4.6, 4.5];
        let (epochs, best) = run(2, &losses);
        assert_eq!(epochs, losses.len());
        assert_eq!(best, 5);
    }
}
