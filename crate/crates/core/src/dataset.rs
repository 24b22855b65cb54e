//! Synthetic dataset assembly and JSON persistence.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError, GraphPair, GraphRecord};
use crate::seeded_rng;
use crate::synthetic::{
    gen_synthetic_pair, gen_template, gen_training_graph, ClassTemplate, SyntheticConfig, SyntheticError,
};

pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed dataset file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("dataset schema version {found}, expected {expected}")]
    Version { found: u64, expected: u32 },
    #[error("missing or invalid version field")]
    MissingVersion,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub split: Split,
    pub pair: GraphPair<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassData {
    pub class_id: usize,
    pub template: ClassTemplate,
    pub train: Vec<Graph<f64>>,
    pub pairs: Vec<LabeledPair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: SyntheticConfig,
    pub classes: Vec<ClassData>,
}

impl Dataset {
    pub fn empty(config: SyntheticConfig) -> Self {
        Self {
            config,
            classes: Vec::new(),
        }
    }

    pub fn train_graphs(&self) -> Vec<Graph<f64>> {
        self.classes.iter().flat_map(|c| c.train.iter().cloned()).collect()
    }

    pub fn pairs(&self, split: Split) -> Vec<GraphPair<f64>> {
        self.classes
            .iter()
            .flat_map(|c| c.pairs.iter())
            .filter(|p| p.split == split)
            .map(|p| p.pair.clone())
            .collect()
    }

    pub fn num_pairs(&self) -> usize {
        self.classes.iter().map(|c| c.pairs.len()).sum()
    }
}

/// Builds the full dataset. Every graph is a pure function of
/// `(seed, class, split, index)`.
pub fn generate(cfg: &SyntheticConfig) -> Result<Dataset, DatasetError> {
    cfg.validate()?;
    let mut classes = Vec::with_capacity(cfg.n_classes);
    for class in 0..cfg.n_classes {
        let c = class as u64;
        let template = gen_template(cfg, &mut seeded_rng(cfg.seed, &[c, 0]))?;
        let train = (0..cfg.train_graphs_per_class)
            .map(|i| {
                gen_training_graph(cfg, &template, &mut seeded_rng(cfg.seed, &[c, 1, i as u64]))
                    .map(|g| g.with_id(format!("c{class}-train{i}"), class))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut pairs = Vec::new();
        for (split, stream, count) in [
            (Split::Val, 2u64, cfg.val_pairs_per_class),
            (Split::Test, 3u64, cfg.pairs_per_class),
        ] {
            for i in 0..count {
                let mut rng = seeded_rng(cfg.seed, &[c, stream, i as u64]);
                let mut pair = gen_synthetic_pair(cfg, &template, &mut rng)?;
                let tag = if split == Split::Val { "val" } else { "test" };
                pair.source = pair.source.with_id(format!("c{class}-{tag}{i}-src"), class);
                pair.target = pair.target.with_id(format!("c{class}-{tag}{i}-tgt"), class);
                pairs.push(LabeledPair { split, pair });
            }
        }
        classes.push(ClassData {
            class_id: class,
            template,
            train,
            pairs,
        });
    }
    Ok(Dataset {
        config: cfg.clone(),
        classes,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRecord {
    split: Split,
    source: GraphRecord,
    target: GraphRecord,
    gt: Vec<[usize; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassRecord {
    class_id: usize,
    template: ClassTemplate,
    train: Vec<GraphRecord>,
    pairs: Vec<PairRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetFile {
    version: u32,
    config: SyntheticConfig,
    classes: Vec<ClassRecord>,
}

pub fn to_json(ds: &Dataset) -> String {
    let file = DatasetFile {
        version: DATASET_VERSION,
        config: ds.config.clone(),
        classes: ds
            .classes
            .iter()
            .map(|c| ClassRecord {
                class_id: c.class_id,
                template: c.template.clone(),
                train: c.train.iter().map(GraphRecord::from).collect(),
                pairs: c
                    .pairs
                    .iter()
                    .map(|p| PairRecord {
                        split: p.split,
                        source: GraphRecord::from(&p.pair.source),
                        target: GraphRecord::from(&p.pair.target),
                        gt: p.pair.gt_matching.iter().map(|&(s, t)| [s, t]).collect(),
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("dataset serializes")
}

pub fn from_json(text: &str) -> Result<Dataset, DatasetError> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let found = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or(DatasetError::MissingVersion)?;
    if found != u64::from(DATASET_VERSION) {
        return Err(DatasetError::Version {
            found,
            expected: DATASET_VERSION,
        });
    }
    let file: DatasetFile = serde_json::from_value(value)?;
    let mut classes = Vec::with_capacity(file.classes.len());
    for c in file.classes {
        let train = c
            .train
            .iter()
            .map(GraphRecord::to_graph)
            .collect::<Result<Vec<_>, _>>()?;
        let pairs = c
            .pairs
            .iter()
            .map(|p| {
                let gt = p.gt.iter().map(|e| (e[0], e[1])).collect();
                Ok(LabeledPair {
                    split: p.split,
                    pair: GraphPair::new(p.source.to_graph()?, p.target.to_graph()?, gt)?,
                })
            })
            .collect::<Result<Vec<_>, GraphError>>()?;
        classes.push(ClassData {
            class_id: c.class_id,
            template: c.template,
            train,
            pairs,
        });
    }
    Ok(Dataset {
        config: file.config,
        classes,
    })
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<(), DatasetError> {
    fs::write(path, to_json(ds)).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_json(&text)
}
