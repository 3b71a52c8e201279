//! Closed-loop protocols: power and pressure sweeps through the whole
//! thermometry chain, particle preselection, pump-down, stability maps, plus
//! the TOML configuration and the files they write.

pub mod config;
pub mod output;
pub mod svg;
pub mod sweep;
pub mod trap;

pub use config::{OnsetMethod, ProtocolConfig, Scenario};
pub use output::{run_to_dir, write_atomic, Format, Manifest, MANIFEST};
pub use sweep::{run_power_sweep, run_pressure_sweep, SweepRow, SweepTable, SWEEP_HEADER};
pub use trap::{
    run_preselection, run_pumpdown, run_stability_map, MapPoint, PreselectionResult, PumpdownResult, PumpdownRow, RampRow,
};

/// Map over `xs` with the index, in parallel when the `parallel` feature is
/// on. Output order always follows the input.
pub(crate) fn par_map<T: Sync, U: Send>(xs: &[T], f: impl Fn(usize, &T) -> U + Sync + Send) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        xs.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        xs.iter().enumerate().map(|(i, x)| f(i, x)).collect()
    }
}
