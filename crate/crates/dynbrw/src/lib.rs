//! Exact computation and event-driven simulation of dynamical branching
//! random walks on Cayley graphs.
//!
//! The pieces fit together as follows: [`group`] provides group arithmetic,
//! step laws and exact n-step return probabilities for the supported Cayley
//! graph families; [`spectral`] turns return-probability sequences into
//! spectral-radius estimates and the recurrence/transience classification;
//! [`gw`] samples (static and dynamical) Galton--Watson trees; [`dynamics`]
//! holds the Poisson-refresh label machinery; [`engine`] runs the
//! tree-indexed walk itself together with the embedded and inf-processes;
//! [`config`] and [`run`] back the `dynbrw` command line tool.

pub mod config;
pub mod dynamics;
pub mod engine;
mod error;
pub mod group;
pub mod gw;
pub mod run;
pub mod spectral;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
