//! Latent tree structure recovery over discrete observed variables using
//! nuclear-norm quartet tests on 4th-order tensor unfoldings.

pub mod builder;
pub mod cli;
pub mod error;
pub mod metrics;
pub mod model;
pub mod modelfile;
pub mod newick;
pub mod nj;
pub mod quartet;
pub mod synth;
pub mod tensor;
pub mod tree;

pub use builder::{build_tree, choose_balanced_root, insert_leaf, BuildTrace};
pub use error::{Error, Result};
pub use metrics::{bipartitions, robinson_foulds, BipartitionSet};
pub use model::{Cpt, Parameters, SampleSet};
pub use modelfile::{parse_model, write_model};
pub use newick::{from_newick, to_newick};
pub use nj::{additive_distance, neighbor_join, DistanceMatrix};
pub use quartet::{
    resolve_nuclear, resolve_oracle, resolve_spectral_k, PairwiseTables, QuartetSource,
    QuartetVerdict,
};
pub use synth::{
    diagnostics, random_topology, run_quartet_experiment, run_tree_experiment, Method,
    QuartetExperimentConfig, RecoveryDiagnostics, ResultTable, TreeExperimentConfig,
};
pub use tensor::{JointTensor4, Matrix, QuartetRelation, SpectralSummary, TensorKind};
pub use tree::{LatentTree, NodeId, NodeKind};
