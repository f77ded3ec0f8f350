//! Generators, error measurement, experiment sweeps and file formats.

pub mod generators;
pub mod io;
pub mod measure;

pub use generators::{
    gen_cone, gen_dataset, gen_marginals2, gen_random_sphere, gen_thresholds, DatasetMode,
    DEFAULT_CONE_DENSITY, DEFAULT_MARGINALS_CAP,
};
pub use io::{atomic_write, bench_csv, load_universe, read_universe_csv, save_universe, universe_to_csv, write_universe_csv};
pub use measure::{
    bench_sweep, bound_summary, errors, measure_error, measure_with, BenchRow, BoundSummary,
    ErrorSummary, MechanismSpec, Measurement, RunConfig, RunReport, Timing, TrialFailure,
    TrialRecord, BENCH_HEADER,
};
