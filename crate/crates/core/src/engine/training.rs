//! Turns a dataset into the virtual-agent training population.

use ndarray::{Array2, Axis};

use super::dataset::Dataset;
use super::network::{generate_network, SEED_CLIQUE};
use crate::config::{GmpConfig, TrainingConfig};
use crate::error::{Error, Result};
use crate::gmp::{cluster_users, interpolate_trajectories, merge_observations, TrainingSet};
use crate::model::SocialGraph;
use crate::providers::Embedder;
use crate::rng::{derive_rng, stream};

/// Every agent follows every other.
pub fn complete_graph(n: usize) -> Result<SocialGraph> {
    let edges = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    SocialGraph::from_follow_edges(n, edges)
}

/// Clusters dataset users by profile embedding into at most
/// `n_virtual_agents` virtual agents, interpolates their merged observations
/// over the first `train_window` windows and wires them into a generated
/// network (a complete graph when there are too few for the generator).
/// Users without observations inside the window are left out, as are
/// clusters that end up with no members.
pub fn build_training_set(
    dataset: &Dataset,
    training: &TrainingConfig,
    gmp: &GmpConfig,
    embedder: &dyn Embedder,
) -> Result<TrainingSet> {
    let t_train = training.train_window.min(dataset.t_max());
    if t_train < 2 {
        return Err(Error::Precondition(format!(
            "training needs at least 2 windows, got {t_train}"
        )));
    }
    if embedder.profile_dim() != gmp.profile_dim {
        return Err(Error::Dimension {
            expected: gmp.profile_dim,
            actual: embedder.profile_dim(),
        });
    }
    let mut observations = Vec::new();
    let mut descriptions = Vec::new();
    for user in dataset.users() {
        let obs: Vec<(usize, f64)> = user
            .observations
            .into_iter()
            .filter(|(t, _)| *t < t_train)
            .collect();
        if !obs.is_empty() {
            observations.push(obs);
            descriptions.push(user.description);
        }
    }
    if observations.is_empty() {
        return Err(Error::Precondition(
            "no user has observations inside the training window".into(),
        ));
    }
    let mut points = Array2::zeros((descriptions.len(), gmp.profile_dim));
    for (i, d) in descriptions.iter().enumerate() {
        let e = embedder.embed_profile(d);
        for (j, v) in e.into_iter().enumerate() {
            points[[i, j]] = v;
        }
    }
    let k = training.n_virtual_agents.min(descriptions.len());
    let clustering = cluster_users(
        points.view(),
        k,
        &mut derive_rng(training.seed, stream::CLUSTERING),
    )?;
    // Duplicate profiles can leave clusters empty; those give no agent.
    let (keep, merged): (Vec<usize>, Vec<_>) =
        merge_observations(&clustering.assignment, k, &observations)
            .into_iter()
            .enumerate()
            .filter(|(_, obs)| !obs.is_empty())
            .unzip();
    let k = keep.len();
    let centroids = clustering.centroids.select(Axis(0), &keep);
    let truth = interpolate_trajectories(
        &merged,
        t_train,
        &mut derive_rng(training.seed, stream::INTERPOLATION),
    )?;
    let graph = if k >= SEED_CLIQUE {
        generate_network(k, &mut derive_rng(training.seed, stream::NETWORK))?
    } else {
        complete_graph(k)?
    };
    TrainingSet::new(truth, centroids, graph)
}
