pub mod dataset;
pub mod ecm;
pub mod features;
pub mod gpc;
pub mod gpr;
pub mod harness;
mod optim;
pub mod simgen;

// The book's code blocks run as doctests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/ecm.md")]
    mod ecm {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/gpr.md")]
    mod gpr {}
    #[doc = include_str!("../../../book/src/gpc.md")]
    mod gpc {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
