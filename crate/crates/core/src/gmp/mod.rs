//! Batched opinion updates for ordinary agents: opinion-history features,
//! two projection MLPs and a graph attention stack, with hand-written
//! reverse-mode gradients.

mod checkpoint;
mod features;
mod network;
mod params;
mod runtime;
mod train;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, read_tensors, save_checkpoint, write_checkpoint,
};
pub use features::{
    build_neighbor_tensor, dynamic_features, individual_features, neighbor_features,
    neighbor_features_graph, NeighborTensor, DYNAMIC_DIM, INDIVIDUAL_DIM, NEIGHBOR_DIM,
};
pub use network::{
    backward, backward_and_step, forward, gat_forward, mlp_forward, project_features,
    project_static, static_backward, ForwardCache, GatForward, LayerCache, MlpCache,
};
pub use params::{GatLayer, GmpParams, Mlp};
pub use runtime::{rollout, GmpRuntime};
pub use train::{
    cluster_users, column_means, gmp_loss, gmp_loss_grad, interpolate_trajectories,
    loss_and_gradient, merge_observations, teacher_forced_loss, train, Clustering, TrainingSet,
    KMEANS_MAX_ITERS,
};
