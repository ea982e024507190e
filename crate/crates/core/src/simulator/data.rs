use std::path::PathBuf;

use rand::seq::index;

use super::config::DataConfig;
use crate::error::{Error, Result};
use crate::io::read_array;
use crate::matrix::FeatureMatrix;
use crate::rng::stream;
use crate::synth::{generate, generate_balanced_test};

/// All rows of an experiment: the active-learning pool followed by the
/// test rows.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: FeatureMatrix,
    pub labels: Vec<u32>,
    pub num_classes: usize,
    pub test_idx: Vec<usize>,
}

impl Dataset {
    pub fn non_test_rows(&self) -> usize {
        self.labels.len() - self.test_idx.len()
    }

    pub fn load(cfg: &DataConfig) -> Result<Self> {
        match cfg {
            DataConfig::Synth { .. } => {
                let (spec, per_class) = cfg.synth_spec().expect("synth");
                let pool = generate(&spec)?;
                let (test_x, test_y) = generate_balanced_test(&spec, &pool.means, per_class)?;
                let n = pool.labels.len();
                let features = pool.features.concat(&test_x)?;
                let mut labels = pool.labels;
                labels.extend_from_slice(&test_y);
                Ok(Dataset {
                    test_idx: (n..labels.len()).collect(),
                    features,
                    labels,
                    num_classes: spec.num_classes,
                })
            }
            DataConfig::Files {
                features,
                labels,
                test_features,
                test_labels,
                test_frac,
                num_classes,
            } => {
                let missing: Vec<PathBuf> = [Some(features), Some(labels), test_features.as_ref(), test_labels.as_ref()]
                    .into_iter()
                    .flatten()
                    .filter(|p| !p.is_file())
                    .cloned()
                    .collect();
                if !missing.is_empty() {
                    return Err(Error::MissingFiles(missing));
                }
                let (mut x, mut y) = read_pair(features, labels)?;
                let test_idx = match (test_features, test_labels) {
                    (Some(tf), Some(tl)) => {
                        let (tx, ty) = read_pair(tf, tl)?;
                        let n = y.len();
                        x = x.concat(&tx)?;
                        y.extend_from_slice(&ty);
                        (n..y.len()).collect()
                    }
                    _ => {
                        let frac = test_frac.ok_or_else(|| Error::Config("data needs test files or test_frac".into()))?;
                        let m = (frac * y.len() as f64).round() as usize;
                        if m == 0 || m >= y.len() {
                            return Err(Error::Config(format!("test_frac {frac} leaves no test or no training rows")));
                        }
                        // fixed across run seeds so every run scores on the same rows
                        let mut idx = index::sample(&mut stream(0, "test-split"), y.len(), m).into_vec();
                        idx.sort_unstable();
                        idx
                    }
                };
                let observed = y.iter().copied().max().map_or(0, |m| m as usize + 1);
                let num_classes = match *num_classes {
                    Some(c) if c < observed => {
                        return Err(Error::Shape(format!("label {} outside num_classes = {c}", observed - 1)))
                    }
                    Some(c) => c,
                    None => observed,
                };
                Ok(Dataset {
                    features: x,
                    labels: y,
                    num_classes,
                    test_idx,
                })
            }
        }
    }
}

fn read_pair(features: &PathBuf, labels: &PathBuf) -> Result<(FeatureMatrix, Vec<u32>)> {
    let x = read_array(features)?.to_features()?;
    let y = read_array(labels)?.to_labels()?;
    if x.rows() != y.len() {
        return Err(Error::Shape(format!(
            "{} has {} rows but {} has {} labels",
            features.display(),
            x.rows(),
            labels.display(),
            y.len()
        )));
    }
    Ok((x, y))
}
