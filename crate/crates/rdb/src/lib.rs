//! Modular multi-agent trajectory prediction.
//!
//! Three learned components cooperate to predict agent motion in video
//! scenes:
//!
//! * an unsupervised **spatial encoder** that compresses each scene image
//!   into a latent vector, trained with a reconstruction + maximum mean
//!   discrepancy objective ([`encoder`]);
//! * a recurrent **global dynamics** model that predicts a mixture density
//!   over the next latent, conditioned on all agents' positions, and exposes
//!   a hidden summary of scene motion ([`dynamics`]);
//! * a per-agent **local predictor** that emits a correlated bivariate
//!   Gaussian over the agent's next position, optionally consuming the
//!   latent and the dynamics summary ([`predictor`]).
//!
//! Around the models sit dataset ingestion and windowing ([`data`]), image
//! preprocessing ([`frame`]), staged training ([`train`]), ADE/FDE evaluation
//! and cross-task transfer ([`eval`]), and deterministic synthetic scene
//! generators for desk-scale experiments ([`synth`]).
//!
//! See the book under `book/` for a guided tour; its code snippets compile
//! as doc-tests of this crate.

pub mod data;
pub mod dynamics;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod frame;
pub mod nn;
pub mod plot;
pub mod predictor;
pub mod rng;
pub mod scene;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use rng::SeedRng;

#[cfg(doctest)]
mod book_doctests {
    macro_rules! book_chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            pub struct $name;
        };
    }

    book_chapter!(Introduction, "../../../book/src/introduction.md");
    book_chapter!(DataModel, "../../../book/src/data-model.md");
    book_chapter!(SceneImages, "../../../book/src/scene-images.md");
    book_chapter!(SpatialEncoder, "../../../book/src/spatial-encoder.md");
    book_chapter!(GlobalDynamics, "../../../book/src/global-dynamics.md");
    book_chapter!(LocalPredictor, "../../../book/src/local-predictor.md");
    book_chapter!(Training, "../../../book/src/training.md");
    book_chapter!(Evaluation, "../../../book/src/evaluation.md");
    book_chapter!(SyntheticWorlds, "../../../book/src/synthetic-worlds.md");
    book_chapter!(Transfer, "../../../book/src/transfer.md");
}
