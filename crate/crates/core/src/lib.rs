pub mod error;
pub mod priors;
pub mod quadrature;
pub mod simplex;
pub mod special;

pub use error::{Error, Result};
pub mod bernstein;
pub mod posterior;
pub mod bounds;
pub mod simulate;
pub mod cli;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/priors.md")]
    mod priors {}
    #[doc = include_str!("../../../book/src/gamma.md")]
    mod gamma {}
    #[doc = include_str!("../../../book/src/posterior.md")]
    mod posterior {}
    #[doc = include_str!("../../../book/src/thresholds.md")]
    mod thresholds {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
