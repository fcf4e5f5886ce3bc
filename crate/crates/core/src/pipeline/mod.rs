//! The stages behind the command-line tool: generate, preprocess, train,
//! extract, evaluate and bench. Every stage is a plain function so the
//! same pipeline runs from the CLI, tests and benches.

mod config;
mod prep;
mod run;

pub use config::{BenchConfig, EvalConfig, PipelineConfig, SplitConfig};
pub use prep::{
    generate, normalized_samples, preprocess_records, write_preprocessed, PreparedData, Preprocessed, MANIFEST_FILE,
    SEGMENTS_FILE, STATS_FILE,
};
pub use run::{
    bench_batch, bench_presets, descriptors_csv, eigen_index, evaluate_eigen, evaluate_indices, evaluate_model,
    index_of, train_method, train_on_sets, LoadedModel,
};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Group,
    Siamese,
    Contrastive,
    /// The eigenvalue-feature baseline.
    Eigen,
}

impl Method {
    pub const LEARNED: [Method; 3] = [Method::Group, Method::Siamese, Method::Contrastive];

    pub fn name(self) -> &'static str {
        match self {
            Method::Group => "group",
            Method::Siamese => "siamese",
            Method::Contrastive => "contrastive",
            Method::Eigen => "eigen",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Method::Group, Method::Siamese, Method::Contrastive, Method::Eigen]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config("method", format!("unknown method `{s}`")))
    }
}
