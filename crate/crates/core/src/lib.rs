//! Double-replicated regenerating codes workbench.
//!
//! * [`gf256`]: field arithmetic for the global parities.
//! * [`codes`]: schemes, layouts, encode/decode, repair and degraded-read plans.
//! * [`blockstore`]: a directory-per-node store with fault injection and repair.
//! * [`reliability`]: MTTDL from an absorbing Markov chain and from simulation.
//! * [`mapsched`]: map-task locality under delay, peeling and matching schedulers.
//! * [`report`]: CSV output shared by the campaigns.

pub mod blockstore;
pub mod codes;
pub mod gf256;
pub mod mapsched;
pub mod reliability;
pub mod report;
