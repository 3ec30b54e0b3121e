//! Classical agent-based opinion models, updated one agent at a time.
//!
//! Every model reads the last committed column and writes a fresh one, so
//! the update is order-independent in its result while still executing as a
//! plain sequential loop over agents.

mod bench;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use bench::{bench_sequential, BenchReport, BenchRow};

use crate::error::{Error, Result};
use crate::model::{clamp_opinion, OpinionState, SocialGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbmModel {
    /// Hegselmann–Krause bounded confidence.
    Hk,
    /// Relative agreement.
    Ra,
    /// Two-threshold assimilation/contrast.
    Lorenz,
}

impl std::str::FromStr for AbmModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hk" => Ok(AbmModel::Hk),
            "ra" => Ok(AbmModel::Ra),
            "lorenz" => Ok(AbmModel::Lorenz),
            other => Err(Error::Config(format!("unknown ABM model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    /// Neighbours closer than this pull the agent in.
    pub assimilation_threshold: f64,
    pub assimilation_strength: f64,
    /// Neighbours farther than this push the agent away.
    pub contrast_threshold: f64,
    pub contrast_strength: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        LorenzParams {
            assimilation_threshold: 0.5,
            assimilation_strength: 0.3,
            contrast_threshold: 1.2,
            contrast_strength: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbmConfig {
    pub model: AbmModel,
    pub confidence_epsilon: f64,
    pub uncertainty: f64,
    pub convergence_mu: f64,
    pub lorenz: LorenzParams,
}

impl AbmConfig {
    pub fn new(model: AbmModel) -> Self {
        AbmConfig {
            model,
            confidence_epsilon: 0.5,
            uncertainty: 0.4,
            convergence_mu: 0.3,
            lorenz: LorenzParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.confidence_epsilon > 0.0 && self.confidence_epsilon <= 2.0) {
            return Err(Error::Config(
                "confidence_epsilon must lie in (0, 2]".into(),
            ));
        }
        if !(self.convergence_mu > 0.0 && self.convergence_mu <= 0.5) {
            return Err(Error::Config("convergence_mu must lie in (0, 0.5]".into()));
        }
        if !(self.uncertainty > 0.0) {
            return Err(Error::Config("uncertainty must be positive".into()));
        }
        Ok(())
    }
}

/// Next opinion column for every agent.
pub fn abm_step<R: Rng + ?Sized>(
    config: &AbmConfig,
    state: &OpinionState,
    graph: &SocialGraph,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if state.step() == 0 {
        return Err(Error::Precondition(
            "ABM step needs a committed column".into(),
        ));
    }
    let prev: Vec<f64> = state.last_column().to_vec();
    Ok(abm_update(config, &prev, graph, rng))
}

pub(crate) fn abm_update<R: Rng + ?Sized>(
    config: &AbmConfig,
    prev: &[f64],
    graph: &SocialGraph,
    rng: &mut R,
) -> Vec<f64> {
    let mut next = vec![0.0; prev.len()];
    match config.model {
        AbmModel::Hk => {
            let eps = config.confidence_epsilon;
            for i in 0..prev.len() {
                let x = prev[i];
                let (mut sum, mut count) = (x, 1usize);
                for &j in graph.neighbors(i) {
                    if (prev[j] - x).abs() <= eps {
                        sum += prev[j];
                        count += 1;
                    }
                }
                next[i] = clamp_opinion(sum / count as f64);
            }
        }
        AbmModel::Ra => {
            let u = config.uncertainty;
            for i in 0..prev.len() {
                let x = prev[i];
                let nbrs = graph.neighbors(i);
                next[i] = if nbrs.is_empty() {
                    x
                } else {
                    let y = prev[nbrs[rng.random_range(0..nbrs.len())]];
                    let overlap = (x + u).min(y + u) - (x - u).max(y - u);
                    if overlap > u {
                        clamp_opinion(x + config.convergence_mu * (overlap / u - 1.0) * (y - x))
                    } else {
                        x
                    }
                };
            }
        }
        AbmModel::Lorenz => {
            let p = config.lorenz;
            for i in 0..prev.len() {
                let x = prev[i];
                let nbrs = graph.neighbors(i);
                if nbrs.is_empty() {
                    next[i] = x;
                    continue;
                }
                let mut shift = 0.0;
                for &j in nbrs {
                    let d = prev[j] - x;
                    if d.abs() < p.assimilation_threshold {
                        shift += p.assimilation_strength * d;
                    } else if d.abs() > p.contrast_threshold {
                        shift -= p.contrast_strength * d;
                    }
                }
                next[i] = clamp_opinion(x + shift / nbrs.len() as f64);
            }
        }
    }
    next
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::rng::seeded_rng;

    fn pair() -> SocialGraph {
        SocialGraph::new(2, vec![], vec![(0, 1, 1.0)]).unwrap()
    }

    #[test]
    fn hk_fixed_point_and_hand_cases() {
        let cfg = AbmConfig::new(AbmModel::Hk);
        let mut rng = seeded_rng(1);
        let g = SocialGraph::new(3, vec![], vec![(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let s = OpinionState::new(&[0.3, 0.3, 0.3]);
        assert_eq!(
            abm_step(&cfg, &s, &g, &mut rng).unwrap(),
            vec![0.3, 0.3, 0.3]
        );

        let s = OpinionState::new(&[-0.1, 0.1]);
        assert_eq!(
            abm_step(&cfg, &s, &pair(), &mut rng).unwrap(),
            vec![0.0, 0.0]
        );

        let s = OpinionState::new(&[-0.9, 0.9]);
        assert_eq!(
            abm_step(&cfg, &s, &pair(), &mut rng).unwrap(),
            vec![-0.9, 0.9]
        );
    }

    #[test]
    fn hk_wide_confidence_reaches_consensus_on_complete_graph() {
        let n = 50;
        let edges = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j, 1.0)))
            .collect();
        let g = SocialGraph::new(n, vec![], edges).unwrap();
        let init: Vec<f64> = (0..n)
            .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
            .collect();
        let mut s = OpinionState::new(&init);
        let cfg = AbmConfig {
            confidence_epsilon: 2.0,
            ..AbmConfig::new(AbmModel::Hk)
        };
        let mut rng = seeded_rng(0);
        let mut done = false;
        for _ in 0..10 {
            let next = abm_step(&cfg, &s, &g, &mut rng).unwrap();
            s.push_column(&next).unwrap();
            let (lo, hi) = next
                .iter()
                .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
            if hi - lo <= 1e-9 {
                done = true;
                break;
            }
        }
        assert!(done);
    }

    #[test]
    fn ra_moves_towards_overlapping_neighbour() {
        let cfg = AbmConfig::new(AbmModel::Ra);
        let s = OpinionState::new(&[0.0, 0.2]);
        let next = abm_step(&cfg, &s, &pair(), &mut seeded_rng(3)).unwrap();
        assert!(next[0] > 0.0 && next[0] < 0.2);
        assert!(next[1] < 0.2 && next[1] > 0.0);
    }

    #[test]
    fn lorenz_repels_distant_neighbours() {
        let cfg = AbmConfig::new(AbmModel::Lorenz);
        let s = OpinionState::new(&[-0.7, 0.7]);
        let next = abm_step(&cfg, &s, &pair(), &mut seeded_rng(3)).unwrap();
        assert!(next[0] < -0.7 && next[1] > 0.7);
        let s = OpinionState::new(&[0.0, 0.2]);
        let next = abm_step(&cfg, &s, &pair(), &mut seeded_rng(3)).unwrap();
        assert!(next[0] > 0.0 && next[1] < 0.2);
    }

    #[test]
    fn config_bounds() {
        let mut c = AbmConfig::new(AbmModel::Hk);
        c.confidence_epsilon = 2.5;
        assert!(c.validate().is_err());
        let mut c = AbmConfig::new(AbmModel::Ra);
        c.convergence_mu = 0.7;
        assert!(c.validate().is_err());
        assert!("Lorenz".parse::<AbmModel>().is_ok());
        assert!("sod".parse::<AbmModel>().is_err());
    }

    proptest! {
        #[test]
        fn outputs_stay_in_range(init in proptest::collection::vec(-1.0f64..=1.0, 6), model in 0usize..3, seed in any::<u64>()) {
            let edges = vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (4, 5, 1.0), (0, 5, 1.0), (0, 3, 1.0)];
            let g = SocialGraph::new(6, vec![], edges).unwrap();
            let model = [AbmModel::Hk, AbmModel::Ra, AbmModel::Lorenz][model];
            let cfg = AbmConfig { lorenz: LorenzParams { contrast_strength: 2.0, ..LorenzParams::default() }, ..AbmConfig::new(model) };
            let mut s = OpinionState::new(&init);
            let mut rng = seeded_rng(seed);
            for _ in 0..5 {
                let next = abm_step(&cfg, &s, &g, &mut rng).unwrap();
                prop_assert!(next.iter().all(|v| (-1.0..=1.0).contains(v)));
                s.push_column(&next).unwrap();
            }
        }
    }
}
