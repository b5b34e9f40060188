//! Benchmarking toolkit for stochastic Ising spin-glass solvers on Chimera
//! graphs: instance generation, exact ground states, simulated annealing,
//! simulated quantum annealing, and time-to-solution and speedup statistics.

pub mod exact;
pub mod instances;
pub mod rng;
pub mod sa;
pub mod speedup;
pub mod sqa;
pub mod topology;
pub mod tts;

pub use exact::{ground_energy_bruteforce, ground_energy_dp, GroundTruth, Method};
pub use instances::{
    generate_instance, random_gauge, CouplingTable, Energy, Gauge, ProblemInstance, SpinConfig,
};
pub use topology::ChimeraGraph;
