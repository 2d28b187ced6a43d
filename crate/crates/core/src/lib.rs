//! Simulation and empirical verification toolkit for critical rank-2
//! multiplicative random graphs: finite-n sampling of the two-type model,
//! the exploration processes that encode component masses, the limiting
//! thinned Levy processes of the three critical regimes, and statistical
//! comparison of component masses against limit excursion lengths.

pub mod cadlag;
pub mod exploration;
pub mod graphgen;
pub mod harness;
pub mod levy;
pub mod parallel;
pub mod params;
pub mod rng;
pub mod sizebias;
pub mod stats;

/// Sizes the global worker pool (no-op without the `parallel` feature).
#[cfg(feature = "parallel")]
pub fn init_thread_pool(threads: usize) -> Result<(), String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

#[cfg(not(feature = "parallel"))]
pub fn init_thread_pool(_threads: usize) -> Result<(), String> {
    Ok(())
}
