use std::fmt;

use crate::error::Result;
use crate::nn::{Grads, LayerStack};
use crate::par::{self, Execution};

/// Per-batch chunk size. Fixed so that gradient sums happen in the same
/// order whatever the thread count.
const CHUNK: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    /// Regime-specific: class accuracy (group), pair accuracy at 0.5
    /// (Siamese), candidate-match accuracy (contrastive).
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    /// Number of training pairs or samples seen this epoch.
    pub examples: usize,
    /// Set when hard mining found fewer candidates than requested.
    pub mining_shortfall: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub regime: &'static str,
    pub epochs: Vec<EpochStats>,
    pub seconds: f64,
}

impl TrainReport {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

impl fmt::Display for TrainReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "regime={} epochs={} seconds={:.1}",
            self.regime,
            self.epochs.len(),
            self.seconds
        )?;
        for e in &self.epochs {
            write!(
                f,
                "\nepoch={} train_loss={:.5} train_acc={:.4}",
                e.epoch, e.train_loss, e.train_accuracy
            )?;
            if let Some(v) = e.val_loss {
                write!(f, " val_loss={v:.5}")?;
            }
            if let Some(v) = e.val_accuracy {
                write!(f, " val_acc={v:.4}")?;
            }
            if e.mining_shortfall {
                f.write_str(" mining_shortfall")?;
            }
        }
        Ok(())
    }
}

/// Gradient and metric accumulator for one batch.
#[derive(Clone, Debug)]
pub(crate) struct BatchAcc {
    pub net: Grads,
    pub head: Option<Grads>,
    pub loss: f64,
    pub correct: usize,
    pub count: usize,
}

impl BatchAcc {
    pub fn zero(net: &LayerStack, head: Option<&LayerStack>) -> Self {
        BatchAcc {
            net: net.zero_grads(),
            head: head.map(LayerStack::zero_grads),
            loss: 0.0,
            correct: 0,
            count: 0,
        }
    }

    fn merge(&mut self, other: &BatchAcc) {
        self.net.add_assign(&other.net);
        if let (Some(a), Some(b)) = (&mut self.head, &other.head) {
            a.add_assign(b);
        }
        self.loss += other.loss;
        self.correct += other.correct;
        self.count += other.count;
    }

    /// Turns gradient sums into batch means.
    pub fn average(&mut self) {
        if self.count > 0 {
            let s = 1.0 / self.count as f64;
            self.net.scale(s);
            if let Some(h) = &mut self.head {
                h.scale(s);
            }
        }
    }
}

/// Runs `f` over every item, accumulating into per-chunk buffers that are
/// then summed in chunk order.
pub(crate) fn accumulate<T, F>(
    exec: Execution,
    items: &[T],
    net: &LayerStack,
    head: Option<&LayerStack>,
    f: F,
) -> Result<BatchAcc>
where
    T: Sync,
    F: Fn(&T, &mut BatchAcc) -> Result<()> + Sync + Send,
{
    let parts = par::map_chunks(exec, items, CHUNK, |chunk| {
        let mut acc = BatchAcc::zero(net, head);
        for item in chunk {
            f(item, &mut acc)?;
        }
        Ok::<_, crate::error::Error>(acc)
    });
    let mut total = BatchAcc::zero(net, head);
    for part in parts {
        total.merge(&part?);
    }
    Ok(total)
}
