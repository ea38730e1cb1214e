pub mod dynamics;
pub mod error;
pub mod grassmann;
pub mod linalg;
pub mod tensor;
pub mod dataset;
pub mod skeleton;
pub mod experiment;
pub mod synthetic;
