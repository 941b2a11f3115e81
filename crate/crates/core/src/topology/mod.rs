//! Degree distributions, power-law fits and connected components.

mod alternatives;
mod components;
mod optimize;
mod powerlaw;
mod zeta;

use serde::{Deserialize, Serialize};

use crate::network::WeightedDiGraph;

pub use alternatives::{compare_distributions, likelihood_ratio, Alternative, LRComparison, LRStats};
pub use components::{
    component_protocol_matrix, connected_components, ComponentMatrix, ComponentMode, ComponentReport,
};
pub use optimize::{golden_section, nelder_mead, Minimum};
pub use powerlaw::{
    bootstrap_gof, ccdf_rows, fit_power_law, fit_power_law_at, DiscretePowerLaw, GoFResult, PowerLawFit,
    PowerLawSampler, DEFAULT_BOOTSTRAP, DEFAULT_SEED, MIN_TAIL,
};
pub use zeta::hurwitz_zeta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegreeMode {
    In,
    Out,
    Total,
}

impl DegreeMode {
    pub const ALL: [DegreeMode; 3] = [DegreeMode::In, DegreeMode::Out, DegreeMode::Total];

    pub fn as_str(self) -> &'static str {
        match self {
            DegreeMode::In => "in",
            DegreeMode::Out => "out",
            DegreeMode::Total => "total",
        }
    }
}

/// Per-node degree counting distinct edges, ignoring weights.
/// A self-loop adds one to both the in- and the out-degree.
pub fn degree_sequence(g: &WeightedDiGraph, mode: DegreeMode) -> Vec<u64> {
    let mut deg = vec![0u64; g.node_count()];
    for (s, d, _) in g.edges() {
        if matches!(mode, DegreeMode::Out | DegreeMode::Total) {
            deg[s] += 1;
        }
        if matches!(mode, DegreeMode::In | DegreeMode::Total) {
            deg[d] += 1;
        }
    }
    deg
}
