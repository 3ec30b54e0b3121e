//! Synthetic follow networks with a long-tailed in-degree distribution.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::SocialGraph;

/// Size of the fully connected seed.
pub const SEED_CLIQUE: usize = 11;
/// Accounts each newcomer follows, chosen preferentially by in-degree.
pub const FOLLOWEES_PER_NODE: usize = 9;
/// Existing accounts that follow each newcomer, chosen uniformly.
pub const FOLLOWERS_PER_NODE: usize = 10;

/// Grows a follow network from an 11-node clique. Every newcomer follows 9
/// distinct accounts with probability proportional to in-degree + 1 and is
/// followed by 10 distinct uniformly chosen accounts, so every in-degree is
/// at least 10 and the mean approaches 19. Interaction edges are the
/// symmetrised follow edges with weight 1.
pub fn generate_network<R: Rng + ?Sized>(n_agents: usize, rng: &mut R) -> Result<SocialGraph> {
    if n_agents < SEED_CLIQUE {
        return Err(Error::Precondition(format!(
            "network generation needs at least {SEED_CLIQUE} agents, got {n_agents}"
        )));
    }
    let mut follows = Vec::with_capacity(n_agents * (FOLLOWEES_PER_NODE + FOLLOWERS_PER_NODE));
    // One entry per node plus one per follower received.
    let mut urn: Vec<usize> =
        Vec::with_capacity(n_agents * (1 + FOLLOWEES_PER_NODE + FOLLOWERS_PER_NODE));
    for i in 0..SEED_CLIQUE {
        urn.push(i);
        for j in 0..SEED_CLIQUE {
            if i != j {
                follows.push((i, j));
                urn.push(j);
            }
        }
    }
    let mut picked = Vec::with_capacity(FOLLOWEES_PER_NODE);
    for v in SEED_CLIQUE..n_agents {
        picked.clear();
        while picked.len() < FOLLOWEES_PER_NODE {
            let u = urn[rng.random_range(0..urn.len())];
            if !picked.contains(&u) {
                picked.push(u);
            }
        }
        for &u in &picked {
            follows.push((v, u));
            urn.push(u);
        }
        urn.push(v);
        for u in sample(rng, v, FOLLOWERS_PER_NODE) {
            follows.push((u, v));
            urn.push(v);
        }
    }
    SocialGraph::from_follow_edges(n_agents, follows)
}

/// Summary of an in-degree distribution.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DegreeStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub median: f64,
    pub p99: f64,
}

/// Linear-interpolated percentile of `sorted` (ascending), `q ∈ [0, 100]`.
pub fn percentile(sorted: &[usize], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] as f64 + (sorted[hi] as f64 - sorted[lo] as f64) * frac
}

pub fn degree_stats(degrees: &[usize]) -> DegreeStats {
    let mut s = degrees.to_vec();
    s.sort_unstable();
    DegreeStats {
        min: s.first().copied().unwrap_or(0),
        max: s.last().copied().unwrap_or(0),
        mean: if s.is_empty() {
            0.0
        } else {
            s.iter().sum::<usize>() as f64 / s.len() as f64
        },
        median: percentile(&s, 50.0),
        p99: percentile(&s, 99.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    #[test]
    fn small_networks_have_min_in_degree_ten() {
        let g = generate_network(200, &mut seeded_rng(3)).unwrap();
        let stats = degree_stats(&g.in_degrees());
        assert!(stats.min >= 10);
        assert!(g
            .interaction_edges()
            .iter()
            .all(|(i, j, w)| i != j && *w == 1.0));
        assert!(generate_network(10, &mut seeded_rng(3)).is_err());
    }

    #[test]
    fn clique_only() {
        let g = generate_network(11, &mut seeded_rng(0)).unwrap();
        assert_eq!(g.follow_edges().len(), 110);
        assert_eq!(g.interaction_edges().len(), 55);
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[1, 2, 3, 4, 5], 50.0), 3.0);
        assert_eq!(percentile(&[0, 10], 40.0), 4.0);
    }
}
