pub mod dynamics;
pub mod energy;
pub mod error;
pub mod harness;
pub mod history;
pub mod kernels;
pub mod probe;
pub mod quadrature;
pub mod singular_limit;
pub mod spectral;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/history.md")]
    mod history {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/energy.md")]
    mod energy {}
    #[doc = include_str!("../../../book/src/singular_limit.md")]
    mod singular_limit {}
    #[doc = include_str!("../../../book/src/probe.md")]
    mod probe {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
