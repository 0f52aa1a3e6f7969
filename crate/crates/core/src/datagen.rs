//! Synthetic, seeded generators for pairwise (or window-`v`) Markov networks
//! and multi-class classification.
//!
//! A teacher `w°` is drawn uniformly on the sphere of radius `teacher_norm`;
//! inputs have i.i.d. unit-sphere contexts; labels are the teacher's MAP
//! decode, with each node independently resampled uniformly with probability
//! `noise`. The teacher comes from stream 0 of the seed, and example `i` from
//! stream `i` of a child seed, so any prefix of a dataset is stable under
//! growing `m`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{invalid_param, Result};
use crate::graph::{FactorGraph, LabelAssignment, DEFAULT_ENUMERATION_CAP};
use crate::inference::{decode, MethodChoice};
use crate::rng::{self, StreamRng};
use crate::scoring::{FeatureMap, Featurizer, StructuredExample, StructuredInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// Chain of `l` nodes, window `v`, alphabet `c`, context dimension `n`.
    ChainMarkovNet { l: usize, c: usize, v: usize, n: usize },
    /// Single node with `c` classes and `n`-dimensional inputs.
    MultiClass { c: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub scenario: Scenario,
    pub noise: f64,
    pub teacher_norm: f64,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.noise) {
            return Err(invalid_param("noise", format!("must lie in [0, 1), got {}", self.noise)));
        }
        if self.teacher_norm.is_nan() || self.teacher_norm <= 0.0 {
            return Err(invalid_param("teacher_norm", "must be positive"));
        }
        match self.scenario {
            Scenario::ChainMarkovNet { n, .. } | Scenario::MultiClass { n, .. } if n == 0 => {
                Err(invalid_param("n", "context dimension must be positive"))
            }
            Scenario::MultiClass { c, .. } if c < 2 => {
                Err(invalid_param("c", "need at least two classes"))
            }
            _ => Ok(()),
        }
    }
}

/// A teacher together with the structure it labels; draws i.i.d. examples.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub map: FeatureMap,
    pub teacher: Vec<f64>,
    pub noise: f64,
    scenario: Scenario,
}

impl Generator {
    pub fn new(config: &GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let map = match config.scenario {
            Scenario::ChainMarkovNet { l, c, v, n } => {
                FeatureMap::new(FactorGraph::chain(l, v, c)?, Featurizer::ChainCrf { n })?
            }
            Scenario::MultiClass { c, n } => {
                FeatureMap::new(FactorGraph::single_node(c)?, Featurizer::Tables { dim: n * c })?
            }
        };
        let mut r = rng::stream(config.seed, 0);
        let teacher = rng::sphere_vec(&mut r, map.dim(), config.teacher_norm);
        Ok(Generator {
            map,
            teacher,
            noise: config.noise,
            scenario: config.scenario,
        })
    }

    /// Same structure and noise, different teacher.
    pub fn with_teacher(&self, teacher: Vec<f64>) -> Result<Self> {
        self.map.check_weights(&teacher)?;
        Ok(Generator {
            teacher,
            ..self.clone()
        })
    }

    pub fn sample_input(&self, r: &mut StreamRng) -> StructuredInput {
        match self.scenario {
            Scenario::ChainMarkovNet { l, n, .. } => {
                StructuredInput::Contexts((0..l).map(|_| rng::sphere_vec(r, n, 1.0)).collect())
            }
            Scenario::MultiClass { c, n } => {
                let x = rng::sphere_vec(r, n, 1.0);
                let rows = (0..c)
                    .map(|a| {
                        let mut v = vec![0.0; n * c];
                        v[a * n..(a + 1) * n].copy_from_slice(&x);
                        v
                    })
                    .collect();
                StructuredInput::Tables(vec![rows])
            }
        }
    }

    pub fn sample(&self, r: &mut StreamRng) -> StructuredExample {
        let x = self.sample_input(r);
        let decoded = decode(
            &self.map,
            &self.teacher,
            &x,
            MethodChoice::Auto,
            DEFAULT_ENUMERATION_CAP,
        )
        .expect("generator structure is decodable")
        .assignment;
        let sizes = self.map.graph().alphabet_sizes();
        let labels = decoded
            .0
            .iter()
            .zip(sizes)
            .map(|(&a, &c)| {
                if self.noise > 0.0 && r.random::<f64>() < self.noise {
                    r.random_range(0..c)
                } else {
                    a
                }
            })
            .collect();
        StructuredExample {
            x,
            y: LabelAssignment(labels),
        }
    }

    /// `m` examples; example `i` uses stream `i` of `seed`.
    pub fn dataset(&self, m: usize, seed: u64) -> Dataset {
        let examples = (0..m)
            .map(|i| self.sample(&mut rng::stream(seed, i as u64)))
            .collect();
        Dataset {
            map: self.map.clone(),
            examples,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub dataset: Dataset,
    pub teacher: Vec<f64>,
}

fn generate(config: &GeneratorConfig, m: usize) -> Result<Generated> {
    let gen = Generator::new(config)?;
    let dataset = gen.dataset(m, rng::child_seed(config.seed, 1));
    Ok(Generated {
        dataset,
        teacher: gen.teacher,
    })
}

/// Realizable (up to label noise) chain data with ChainCRF features.
pub fn gen_chain_dataset(config: &GeneratorConfig, m: usize) -> Result<Generated> {
    if !matches!(config.scenario, Scenario::ChainMarkovNet { .. }) {
        return Err(invalid_param("scenario", "expected a chain scenario"));
    }
    generate(config, m)
}

/// Single-factor multi-class data: `Ψ(x, a)` places `x` in block `a`, `D = n·c`.
pub fn gen_multiclass(config: &GeneratorConfig, m: usize) -> Result<Generated> {
    if !matches!(config.scenario, Scenario::MultiClass { .. }) {
        return Err(invalid_param("scenario", "expected a multi-class scenario"));
    }
    generate(config, m)
}

/// Dispatches on the configured scenario.
pub fn generate_dataset(config: &GeneratorConfig, m: usize) -> Result<Generated> {
    generate(config, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::TaskLoss;
    use crate::scoring::compute_kappa;

    fn chain_cfg(noise: f64, seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            scenario: Scenario::ChainMarkovNet { l: 4, c: 3, v: 2, n: 5 },
            noise,
            teacher_norm: 3.0,
            seed,
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = gen_chain_dataset(&chain_cfg(0.1, 5), 20).unwrap();
        let b = gen_chain_dataset(&chain_cfg(0.1, 5), 20).unwrap();
        assert_eq!(a, b);
        let c = gen_chain_dataset(&chain_cfg(0.1, 6), 20).unwrap();
        assert_ne!(a.teacher, c.teacher);
        // prefix stability
        let d = gen_chain_dataset(&chain_cfg(0.1, 5), 10).unwrap();
        assert_eq!(d.dataset.examples[..], a.dataset.examples[..10]);
    }

    #[test]
    fn noiseless_chain_is_realizable() {
        let g = gen_chain_dataset(&chain_cfg(0.0, 1), 100).unwrap();
        let map = &g.dataset.map;
        for ex in &g.dataset.examples {
            let y = decode(map, &g.teacher, &ex.x, MethodChoice::Auto, 1000).unwrap();
            assert_eq!(TaskLoss::HammingUnnormalized.eval(&y.assignment, &ex.y).unwrap(), 0.0);
        }
        assert!((crate::scoring::l2_norm(&g.teacher) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn chain_kappa_within_sphere_envelope() {
        // ‖Ψ‖² ≤ (Σ‖x^k‖)² + (l−1)² when every node shares a label.
        let g = gen_chain_dataset(&chain_cfg(0.0, 2), 100).unwrap();
        let k = compute_kappa(&g.dataset.examples, &g.dataset.map, 1_000).unwrap();
        assert!(k.exact);
        assert!(k.value <= (16.0f64 + 9.0).sqrt());
        assert!(k.value >= 1.0);
    }

    #[test]
    fn multiclass_structure() {
        let cfg = GeneratorConfig {
            scenario: Scenario::MultiClass { c: 2, n: 3 },
            noise: 0.0,
            teacher_norm: 1.0,
            seed: 3,
        };
        let g = gen_multiclass(&cfg, 50).unwrap();
        assert_eq!(g.dataset.graph().d(), 2);
        assert_eq!(g.dataset.graph().num_factors(), 1);
        for ex in &g.dataset.examples {
            let y = decode(&g.dataset.map, &g.teacher, &ex.x, MethodChoice::Auto, 10).unwrap();
            assert_eq!(y.assignment, ex.y);
        }
        assert!(gen_chain_dataset(&cfg, 1).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(Generator::new(&chain_cfg(1.0, 0)).is_err());
        assert!(Generator::new(&GeneratorConfig {
            teacher_norm: 0.0,
            ..chain_cfg(0.0, 0)
        })
        .is_err());
    }
}
