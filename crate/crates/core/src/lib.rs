pub mod error;
pub mod frac_oracle;
pub mod forward;
pub mod geometry;
pub mod identity;
pub mod inverse;
pub mod kernels;
pub mod operators;
pub mod quadrature;
pub mod response;
