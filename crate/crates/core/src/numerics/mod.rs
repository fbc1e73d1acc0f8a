//! Small numerical kernels shared by the optical models.

pub mod optimize;
pub mod quadrature;
pub mod special;
