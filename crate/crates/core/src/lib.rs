pub mod backbone;
pub mod downstream;
pub mod error;
pub mod fingerprint;
pub mod nn;
pub mod relations;
pub mod seed;
pub mod shots;
pub mod train;
pub mod video;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/shots.md")]
    mod shots {}
    #[doc = include_str!("../../../book/src/relations.md")]
    mod relations {}
    #[doc = include_str!("../../../book/src/backbones.md")]
    mod backbones {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/downstream.md")]
    mod downstream {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
