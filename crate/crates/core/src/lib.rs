//! Atomic packet routing games with FIFO point queues on linear multigraphs.
//!
//! The crate loads strategy profiles over discrete time, builds and checks
//! uniformly-fastest-route equilibria, computes optimal states through
//! temporally repeated path decompositions, and generates the lower-bound
//! instance family together with exact closed forms.

pub mod equilibria;
pub mod error;
pub mod extensions;
pub mod instances;
pub mod loading;
pub mod model;
pub mod optimum;

pub use error::{Error, Result};
pub use loading::{load, load_with, LoadingResult, Stepping};
pub use model::{
    kth_cheapest_path, path_length, validate_game, Edge, Game, LinearMultigraph, PathChoice, State,
    Time, Violation,
};
