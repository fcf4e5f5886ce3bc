use std::path::{Path, PathBuf};

use crate::dataset::{apply_preprocess, KeyValues, SyntheticSpec};
use crate::error::{Error, Result};
use crate::eval::PairClassifierConfig;
use crate::models::{ContrastiveConfig, Preset};
use crate::nn::SgdConfig;
use crate::preprocess::PreprocessConfig;

use super::Method;

/// Group-atomic split fractions; the remainder is the test split.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train: 0.6,
            val: 0.2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    /// Positive test pairs (as many negatives are added).
    pub pairs: usize,
    /// Positive validation pairs used to fit the pair classifier.
    pub classifier_pairs: usize,
    pub seed: u64,
    pub classifier: PairClassifierConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            pairs: 500,
            classifier_pairs: 1000,
            seed: 0,
            classifier: PairClassifierConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub batch: usize,
    pub repetitions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            batch: 32,
            repetitions: 10,
        }
    }
}

/// Every tunable of the pipeline. One `key=value` file may carry all
/// namespaces; each command reads what it needs.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub synthetic: SyntheticSpec,
    pub preprocess: PreprocessConfig,
    pub split: SplitConfig,
    /// Preprocessed dataset directory used by `train`.
    pub data_dir: Option<PathBuf>,
    pub preset: Preset,
    pub sgd: SgdConfig,
    pub descriptor_dim: usize,
    /// Overrides the per-method dropout default.
    pub dropout: Option<f64>,
    pub min_group_size: usize,
    pub siamese_pairs: usize,
    pub siamese_val_pairs: usize,
    pub contrastive: ContrastiveConfig,
    pub eval: EvalConfig,
    pub bench: BenchConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            synthetic: SyntheticSpec::default(),
            preprocess: PreprocessConfig::default(),
            split: SplitConfig::default(),
            data_dir: None,
            preset: Preset::Default,
            sgd: SgdConfig::default(),
            descriptor_dim: 64,
            dropout: None,
            min_group_size: 8,
            siamese_pairs: 1000,
            siamese_val_pairs: 200,
            contrastive: ContrastiveConfig::default(),
            eval: EvalConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn dropout_for(&self, method: Method) -> f64 {
        self.dropout.unwrap_or(match method {
            Method::Siamese => 0.3,
            _ => 0.2,
        })
    }

    /// Defaults overridden by every key in `kv`. Unknown keys are errors.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut c = PipelineConfig::default();
        c.synthetic.apply(kv)?;
        apply_preprocess(&mut c.preprocess, kv)?;
        kv.set("split.train", &mut c.split.train)?;
        kv.set("split.val", &mut c.split.val)?;
        kv.set("split.seed", &mut c.split.seed)?;
        if let Some(d) = kv.raw("data.dir") {
            // Relative to the config file.
            let base = Path::new(kv.path()).parent().unwrap_or(Path::new(""));
            c.data_dir = Some(base.join(d));
        }
        kv.set("net.preset", &mut c.preset)?;
        kv.set("net.descriptor_dim", &mut c.descriptor_dim)?;
        c.dropout = kv.get("net.dropout")?;
        kv.set("train.epochs", &mut c.sgd.epochs)?;
        kv.set("train.learning_rate", &mut c.sgd.learning_rate)?;
        kv.set("train.momentum", &mut c.sgd.momentum)?;
        kv.set("train.batch_size", &mut c.sgd.batch_size)?;
        kv.set("train.seed", &mut c.sgd.seed)?;
        kv.set("group.min_group_size", &mut c.min_group_size)?;
        kv.set("siamese.pairs", &mut c.siamese_pairs)?;
        kv.set("siamese.val_pairs", &mut c.siamese_val_pairs)?;
        kv.set("contrastive.margin", &mut c.contrastive.margin)?;
        kv.set("contrastive.initial_positives", &mut c.contrastive.initial_positives)?;
        kv.set("contrastive.random_positives", &mut c.contrastive.random_positives)?;
        c.contrastive.mining.k_hard = 4 * c.sgd.batch_size;
        kv.set("contrastive.k_hard", &mut c.contrastive.mining.k_hard)?;
        kv.set("contrastive.subsample_ratio", &mut c.contrastive.mining.subsample_ratio)?;
        c.contrastive.mining.seed = c.sgd.seed;
        kv.set("eval.pairs", &mut c.eval.pairs)?;
        kv.set("eval.classifier_pairs", &mut c.eval.classifier_pairs)?;
        kv.set("eval.seed", &mut c.eval.seed)?;
        kv.set("pairclf.hidden", &mut c.eval.classifier.hidden)?;
        kv.set("pairclf.epochs", &mut c.eval.classifier.sgd.epochs)?;
        kv.set("pairclf.learning_rate", &mut c.eval.classifier.sgd.learning_rate)?;
        kv.set("pairclf.momentum", &mut c.eval.classifier.sgd.momentum)?;
        kv.set("pairclf.batch_size", &mut c.eval.classifier.sgd.batch_size)?;
        kv.set("pairclf.seed", &mut c.eval.classifier.sgd.seed)?;
        kv.set("bench.batch", &mut c.bench.batch)?;
        kv.set("bench.repetitions", &mut c.bench.repetitions)?;
        kv.finish()?;
        c.validate()?;
        Ok(c)
    }

    pub fn parse(text: &str, path: &str) -> Result<Self> {
        Self::from_kv(&KeyValues::parse(text, path)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(&KeyValues::read(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic.validate()?;
        self.preprocess.validate()?;
        self.sgd.validate()?;
        self.contrastive.mining.validate()?;
        if self.descriptor_dim == 0 {
            return Err(Error::config("net.descriptor_dim", "must be positive"));
        }
        if let Some(p) = self.dropout {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::config("net.dropout", "must lie in [0, 1)"));
            }
        }
        if self.eval.pairs == 0 || self.eval.classifier_pairs == 0 {
            return Err(Error::config("eval.pairs", "must be positive"));
        }
        if self.bench.batch == 0 {
            return Err(Error::config("bench.batch", "must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_override_defaults_and_unknown_keys_fail() {
        let c = PipelineConfig::parse(
            "train.epochs=3\ntrain.batch_size=8\nnet.dropout=0.1\npreprocess.grid=20,20,10\nsynthetic.n_groups=12\n",
            "c",
        )
        .unwrap();
        assert_eq!(c.sgd.epochs, 3);
        assert_eq!(c.contrastive.mining.k_hard, 32);
        assert_eq!(c.dropout_for(Method::Siamese), 0.1);
        assert_eq!(c.preprocess.grid.dims, [20, 20, 10]);
        assert_eq!(c.synthetic.n_groups, 12);
        assert_eq!(PipelineConfig::default().dropout_for(Method::Siamese), 0.3);
        assert!(matches!(
            PipelineConfig::parse("bench.batch=2\nbench.batch=3\n", "c"),
            Err(Error::Format { line: 2, .. })
        ));
        assert!(matches!(
            PipelineConfig::parse("train.epoch=3\n", "c"),
            Err(Error::Format { line: 1, .. })
        ));
    }
}
