pub mod autodiff;
mod binio;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod evolvement;
pub mod losses;
pub mod models;
pub mod optim;
pub mod pipeline;
pub mod tensor;

#[cfg(test)]
pub(crate) mod testing;

pub use autodiff::{Gradients, Graph, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
