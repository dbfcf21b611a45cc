//! Seeded synthetic experiments: designs, linkage errors, λ calibration and
//! replication runs.

mod calibrate;
mod generate;
mod records;
mod run;

pub use calibrate::{deviance_between_means, lambda_base, lambda_grid, sigma_y_data, sigma_y_known};
pub use generate::{
    generate_beta, generate_design, generate_permutation_blocks, generate_permutation_ksparse, sample_response, Design,
};
pub use records::{from_records, read_ndtext, to_records, write_ndtext, Record, SCHEMA_VERSION};
pub use run::{
    replication_rng, run_replications, simulate_data, spearman, Method, MethodOutcome, PermutationScheme,
    ReplicationResult, SigmaMode, SimulatedData, SimulationScenario,
};
