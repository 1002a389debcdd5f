pub mod error;
pub mod filters;
pub mod grid;
pub mod linalg;
pub mod transform1d;
pub mod dtcwt2d;
pub mod masking;
pub mod codec;
pub mod field;
pub mod render;
pub mod scenes;
pub mod model;
pub mod optim;

pub use error::{CodecError, Error, Result};
pub use grid::Grid;
