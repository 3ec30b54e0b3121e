//! The simulation loop and everything it reads and writes.

mod centrality;
mod dataset;
mod network;
mod simulation;
mod training;

pub use centrality::{
    centrality_table, core_centrality_report, CentralityRow, CentralityTable, SAMPLED_STEPS,
};
pub use dataset::{load_dataset, read_records, write_dataset, Dataset, DatasetRecord, UserHistory};
pub use network::{
    degree_stats, generate_network, percentile, DegreeStats, FOLLOWEES_PER_NODE,
    FOLLOWERS_PER_NODE, SEED_CLIQUE,
};
pub use simulation::{
    core_agent_step, initial_params, keyword_index, read_curve, run_simulation, write_curve,
    CoreContext, CoreOutcome, PartitionSummary, RetrievalStats, Simulation, SimulationReport,
};
pub use training::{build_training_set, complete_graph};
