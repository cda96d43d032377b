//! Simulation of networks of spiking neurons with memory of variable
//! length, and identification of their synaptic graph from spike trains.
//!
//! * [`model`]: networks, rate functions and the constants derived from them.
//! * [`simulator`]: exact thinning simulation and short-window sampling.
//! * [`estimator`]: slot statistics, stopped ratios and pair classification.
//! * [`analysis`]: Monte Carlo checks, binomial tails and failure bounds.
//! * [`io`]: spike files, candidate logs, configuration and reports.
//! * [`cli`]: the `spikegraph` command line.

pub mod analysis;
pub mod cli;
pub mod estimator;
pub mod io;
pub mod model;
pub mod rng;
pub mod simulator;

pub use model::{Network, NetworkSpec, NeuronId, RateFunction};
pub use simulator::{simulate, SimulationConfig, SpikeRecording};
