//! HRR-based classification for subitizing experiments.
//!
//! The crate bundles the pieces needed to run numerosity generalization
//! studies end to end:
//!
//! - [`hrr`]: circular-convolution binding, inverses and projection.
//! - [`loss`]: the class codebook, the bound-target loss, cosine decoding
//!   and a softmax cross-entropy baseline.
//! - [`nn`]: a small CNN and a tiny ViT with hand-written backprop.
//! - [`datagen`]: the synthetic circle/shape benchmark and its variants.
//! - [`saliency`]: vanilla input-gradient maps.
//!
//! Every stochastic step draws from [`rng::CounterRng`], so runs are
//! reproducible bit for bit from their seeds.

pub mod datagen;
pub mod gradcheck;
pub mod hrr;
pub mod kv;
pub mod loss;
pub mod nn;
pub mod parallel;
pub mod rng;
pub mod saliency;
