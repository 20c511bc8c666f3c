//! Environment ensembles for the annealed analysis: event classification,
//! closed-form Brownian laws and the averaged on-diagonal decay.

pub mod closed_form;
pub mod ensemble;
pub mod events;

pub use closed_form::closed_form_oracle;
pub use ensemble::{
    annealed_diag, oracle_validation, oracle_validation_with, quenched_growth_stats, AnnealedParams, AnnealedReport,
    GrowthReport, OracleConfig, OracleReport,
};
pub use events::{classify_events, EventFlags, EventParams, SideEvents};
