//! Where the entropy-selected core agents sit in the follower distribution.

use serde::{Deserialize, Serialize};

use super::network::percentile;
use crate::edg::Partition;
use crate::model::SocialGraph;

/// Steps at which the table is sampled, when available.
pub const SAMPLED_STEPS: [usize; 7] = [1, 5, 10, 15, 20, 25, 30];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityRow {
    pub step: usize,
    /// In-degree at or above the 80th percentile.
    pub at_least_p80: usize,
    pub p60_to_p80: usize,
    pub p40_to_p60: usize,
    pub below_p40: usize,
    /// `at_least_p80 / K`.
    pub top20_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityTable {
    /// In-degree thresholds `[p40, p60, p80]`.
    pub thresholds: [f64; 3],
    pub rows: Vec<CentralityRow>,
    /// Mean of `top20_share` over the rows; 0 with no rows.
    pub mean_top20_share: f64,
}

/// Counts core agents per in-degree band at every step in `steps` for which
/// a partition is supplied.
pub fn centrality_table(
    partitions: &[(usize, Partition)],
    in_degrees: &[usize],
    steps: &[usize],
) -> CentralityTable {
    let mut sorted = in_degrees.to_vec();
    sorted.sort_unstable();
    let thresholds = [
        percentile(&sorted, 40.0),
        percentile(&sorted, 60.0),
        percentile(&sorted, 80.0),
    ];
    let mut rows = Vec::new();
    for &(step, ref partition) in partitions {
        if !steps.contains(&step) {
            continue;
        }
        let mut row = CentralityRow {
            step,
            at_least_p80: 0,
            p60_to_p80: 0,
            p40_to_p60: 0,
            below_p40: 0,
            top20_share: 0.0,
        };
        for &a in &partition.core_ids {
            let d = in_degrees[a] as f64;
            if d >= thresholds[2] {
                row.at_least_p80 += 1;
            } else if d >= thresholds[1] {
                row.p60_to_p80 += 1;
            } else if d >= thresholds[0] {
                row.p40_to_p60 += 1;
            } else {
                row.below_p40 += 1;
            }
        }
        let k = partition.core_ids.len();
        row.top20_share = if k == 0 {
            0.0
        } else {
            row.at_least_p80 as f64 / k as f64
        };
        rows.push(row);
    }
    let mean_top20_share = if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|r| r.top20_share).sum::<f64>() / rows.len() as f64
    };
    CentralityTable {
        thresholds,
        rows,
        mean_top20_share,
    }
}

/// [`centrality_table`] at the standard sampled steps using follower counts
/// from `graph`.
pub fn core_centrality_report(
    partitions: &[(usize, Partition)],
    graph: &SocialGraph,
) -> CentralityTable {
    centrality_table(partitions, &graph.in_degrees(), &SAMPLED_STEPS)
}
