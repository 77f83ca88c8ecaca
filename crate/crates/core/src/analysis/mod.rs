//! Spectral diagnostics, low-rank audits of `A⁺` tiles and report aggregation.

mod audit;
mod report;
mod spectrum;

pub use audit::{rank_audit, required_rank, truncation_error, AuditRow, RankAudit, TileRank, DEFAULT_EPS};
pub use report::{aggregate_reports, to_csv_string, write_csv, write_json, SummaryRow};
pub use spectrum::{
    dense_preconditioner, precond_spectrum, pseudo_inverse, Deflation, SpectrumContext, SpectrumReport, SpectrumRow,
    ANALYSIS_CAP,
};
