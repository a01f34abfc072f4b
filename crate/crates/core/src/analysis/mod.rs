//! Retention and interaction analyses over a role-labeled corpus.

mod discourse;
mod output;
mod retention;
mod stats;

pub use discourse::{
    compare_group_scalar, md_given_seeker_position, ps_first_response_quartiles, quartile_buckets,
    response_time_ratio, seeker_position, thread_response_ratio, PositionRow, QuartileRow, RatioSummary,
    ScalarComparison, ScalarField,
};
pub use output::{
    position_long_rows, quartile_long_rows, retention_long_rows, write_long_csv, write_positions_csv,
    write_quartiles_csv, write_retention_csv, LongRow,
};
pub use retention::{
    first_threads, group_key, peer_supporter_retention, retention, seeker_retention, FirstThread, GroupBy,
    RetentionOptions, RetentionRole, RetentionRow, RetentionTable,
};
pub use stats::{
    bootstrap_ci, bootstrap_mean_ci, welch_t_test, BootstrapConfig, WelchResult, DEFAULT_LEVEL, DEFAULT_N_BOOT,
};
