//! Synthetic keypoint-graph generation.
//!
//! Each class owns a template of `n_inliers` random unit-square points with
//! standard-normal descriptors. Pair sources are the exact template plus
//! fresh outliers; targets jitter the template (coordinates clamped to the
//! unit square, features with additive noise) plus their own outliers. Every
//! graph is triangulated independently.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delaunay::{triangulate, DelaunayError};
use crate::graph::{Graph, GraphError, GraphPair};

/// Redraws allowed before a degenerate point set is reported.
pub const MAX_ATTEMPTS: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyntheticError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("triangulation failed after {MAX_ATTEMPTS} attempts: {0}")]
    Triangulation(#[from] DelaunayError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_inliers: usize,
    pub n_outliers_source: usize,
    pub n_outliers_target: usize,
    pub feature_dim: usize,
    pub coord_noise_sigma: f64,
    pub feature_noise_sigma: f64,
    pub n_classes: usize,
    /// Evaluation pairs per class.
    pub pairs_per_class: usize,
    /// Validation pairs per class, used only for model selection.
    pub val_pairs_per_class: usize,
    /// Unlabeled training graphs per class.
    pub train_graphs_per_class: usize,
    /// Append the 2D coordinates to every node's feature vector.
    pub coords_in_features: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_inliers: 10,
            n_outliers_source: 2,
            n_outliers_target: 2,
            feature_dim: 16,
            coord_noise_sigma: 0.05,
            feature_noise_sigma: 0.5,
            n_classes: 20,
            pairs_per_class: 20,
            val_pairs_per_class: 5,
            train_graphs_per_class: 50,
            coords_in_features: false,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: &str| Err(SyntheticError::InvalidConfig(m.to_string()));
        if self.n_inliers < 3 {
            return bad("n_inliers must be at least 3");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive");
        }
        if !(self.coord_noise_sigma >= 0.0) || !(self.feature_noise_sigma >= 0.0) {
            return bad("noise sigmas must be non-negative");
        }
        if self.n_classes == 0 {
            return bad("n_classes must be positive");
        }
        Ok(())
    }

    /// Width of the node feature vectors produced under this config.
    pub fn node_feature_dim(&self) -> usize {
        self.feature_dim + if self.coords_in_features { 2 } else { 0 }
    }
}

/// Shared inlier geometry and descriptors of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTemplate {
    pub coords: Vec<[f64; 2]>,
    pub features: Vec<Vec<f64>>,
}

fn uniform_point(rng: &mut impl Rng) -> [f64; 2] {
    [rng.random::<f64>(), rng.random::<f64>()]
}

fn normal_vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn gen_template(cfg: &SyntheticConfig, rng: &mut impl Rng) -> Result<ClassTemplate, SyntheticError> {
    cfg.validate()?;
    let mut last = DelaunayError::CollinearInput;
    for _ in 0..MAX_ATTEMPTS {
        let coords: Vec<[f64; 2]> = (0..cfg.n_inliers).map(|_| uniform_point(rng)).collect();
        match triangulate(&coords) {
            Ok(_) => {
                let features = (0..cfg.n_inliers).map(|_| normal_vec(rng, cfg.feature_dim)).collect();
                return Ok(ClassTemplate { coords, features });
            }
            Err(e) => last = e,
        }
    }
    Err(last.into())
}

fn build_graph(
    cfg: &SyntheticConfig,
    coords: Vec<[f64; 2]>,
    features: Vec<Vec<f64>>,
) -> Result<Graph<f64>, SyntheticError> {
    let adjacency = triangulate(&coords)?;
    let dim = cfg.node_feature_dim();
    let mut x = Array2::zeros((coords.len(), dim));
    for (v, (f, c)) in features.iter().zip(&coords).enumerate() {
        for (d, &val) in f.iter().enumerate() {
            x[[v, d]] = val;
        }
        if cfg.coords_in_features {
            x[[v, cfg.feature_dim]] = c[0];
            x[[v, cfg.feature_dim + 1]] = c[1];
        }
    }
    Ok(Graph::new(x, adjacency, Some(coords))?)
}

/// Template inliers jittered by coordinate and feature noise, followed by
/// `n_outliers` fresh points. Inliers keep template order.
fn perturbed_nodes(
    cfg: &SyntheticConfig,
    template: &ClassTemplate,
    n_outliers: usize,
    rng: &mut impl Rng,
) -> (Vec<[f64; 2]>, Vec<Vec<f64>>) {
    let coord_noise = Normal::new(0.0, cfg.coord_noise_sigma).expect("sigma validated");
    let feat_noise = Normal::new(0.0, cfg.feature_noise_sigma).expect("sigma validated");
    let mut coords = Vec::with_capacity(template.coords.len() + n_outliers);
    let mut features = Vec::with_capacity(coords.capacity());
    for (c, f) in template.coords.iter().zip(&template.features) {
        let jitter = |x: f64, rng: &mut _| (x + coord_noise.sample(rng)).clamp(0.0, 1.0);
        coords.push([jitter(c[0], rng), jitter(c[1], rng)]);
        features.push(f.iter().map(|&x| x + feat_noise.sample(rng)).collect());
    }
    for _ in 0..n_outliers {
        coords.push(uniform_point(rng));
        features.push(normal_vec(rng, cfg.feature_dim));
    }
    (coords, features)
}

pub fn gen_synthetic_pair(
    cfg: &SyntheticConfig,
    template: &ClassTemplate,
    rng: &mut impl Rng,
) -> Result<GraphPair<f64>, SyntheticError> {
    cfg.validate()?;
    let mut last = DelaunayError::CollinearInput;
    for _ in 0..MAX_ATTEMPTS {
        let mut src_coords = template.coords.clone();
        let mut src_feats = template.features.clone();
        for _ in 0..cfg.n_outliers_source {
            src_coords.push(uniform_point(rng));
            src_feats.push(normal_vec(rng, cfg.feature_dim));
        }
        let (tgt_coords, tgt_feats) = perturbed_nodes(cfg, template, cfg.n_outliers_target, rng);
        let source = match build_graph(cfg, src_coords, src_feats) {
            Ok(g) => g,
            Err(SyntheticError::Triangulation(e)) => {
                last = e;
                continue;
            }
            Err(e) => return Err(e),
        };
        let target = match build_graph(cfg, tgt_coords, tgt_feats) {
            Ok(g) => g,
            Err(SyntheticError::Triangulation(e)) => {
                last = e;
                continue;
            }
            Err(e) => return Err(e),
        };
        let gt = (0..cfg.n_inliers).map(|i| (i, i)).collect();
        return Ok(GraphPair::new(source, target, gt)?);
    }
    Err(last.into())
}

/// One unlabeled training graph drawn like a pair target.
pub fn gen_training_graph(
    cfg: &SyntheticConfig,
    template: &ClassTemplate,
    rng: &mut impl Rng,
) -> Result<Graph<f64>, SyntheticError> {
    cfg.validate()?;
    let mut last = DelaunayError::CollinearInput;
    for _ in 0..MAX_ATTEMPTS {
        let (coords, feats) = perturbed_nodes(cfg, template, cfg.n_outliers_target, rng);
        match build_graph(cfg, coords, feats) {
            Ok(g) => return Ok(g),
            Err(SyntheticError::Triangulation(e)) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn template(cfg: &SyntheticConfig, seed: u64) -> ClassTemplate {
        gen_template(cfg, &mut seeded_rng(seed, &[])).unwrap()
    }

    #[test]
    fn zero_noise_pair_is_identical() {
        let cfg = SyntheticConfig {
            n_outliers_source: 0,
            n_outliers_target: 0,
            coord_noise_sigma: 0.0,
            feature_noise_sigma: 0.0,
            ..Default::default()
        };
        let t = template(&cfg, 1);
        let pair = gen_synthetic_pair(&cfg, &t, &mut seeded_rng(2, &[])).unwrap();
        assert_eq!(pair.source, pair.target);
        assert_eq!(pair.gt_matching, (0..10).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn outlier_counts() {
        let cfg = SyntheticConfig {
            n_inliers: 10,
            n_outliers_source: 0,
            n_outliers_target: 4,
            ..Default::default()
        };
        let t = template(&cfg, 3);
        let pair = gen_synthetic_pair(&cfg, &t, &mut seeded_rng(4, &[])).unwrap();
        assert_eq!(pair.source.num_nodes(), 10);
        assert_eq!(pair.target.num_nodes(), 14);
        assert_eq!(pair.gt_matching.len(), 10);
    }

    #[test]
    fn jittered_coords_stay_in_unit_square() {
        let cfg = SyntheticConfig {
            coord_noise_sigma: 0.05,
            ..Default::default()
        };
        let t = template(&cfg, 5);
        let mut rng = seeded_rng(6, &[]);
        for _ in 0..1000 {
            let pair = gen_synthetic_pair(&cfg, &t, &mut rng).unwrap();
            let coords = pair.target.coords.as_ref().unwrap();
            for c in &coords[..cfg.n_inliers] {
                assert!((0.0..=1.0).contains(&c[0]) && (0.0..=1.0).contains(&c[1]));
            }
            assert_eq!(pair.gt_matching.len(), cfg.n_inliers);
        }
    }

    #[test]
    fn coords_can_be_appended_to_features() {
        let cfg = SyntheticConfig {
            coords_in_features: true,
            feature_dim: 4,
            ..Default::default()
        };
        let t = template(&cfg, 7);
        let g = gen_training_graph(&cfg, &t, &mut seeded_rng(8, &[])).unwrap();
        assert_eq!(g.feature_dim(), 6);
        let c = g.coords.as_ref().unwrap()[0];
        assert_eq!(g.node_features[[0, 4]], c[0]);
        assert_eq!(g.node_features[[0, 5]], c[1]);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = SyntheticConfig {
            n_inliers: 2,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(SyntheticError::InvalidConfig(_))));
        let cfg = SyntheticConfig {
            coord_noise_sigma: -1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
