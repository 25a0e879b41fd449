pub mod cli;
pub mod error;
pub mod fluctuation;
pub mod io;
pub mod numeric;
pub mod pump;
pub mod rate_model;
pub mod specfit;
pub mod spectrum;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
