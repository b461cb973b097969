//! Per-view features and the cross-view consistency losses built on them.
//!
//! Every training photo gets a fixed unit-norm 8-channel feature map. The
//! primitives carry their own feature vectors, rendered like color and
//! distilled towards those maps. Rendered depth drives warps between views,
//! which give a round-trip confidence mask and the pseudo-view and
//! train-view alignment losses.

mod extract;
mod losses;
mod pseudo;
mod warp;

pub use extract::{extract_features, normalize_pixels, FeatureBackend};
pub use losses::{
    cosine, cosine_loss, cosine_with_grad, distill_loss, pseudo_consistency, pseudo_loss, roundtrip_mask,
    train_align_loss, PseudoTerms,
};
pub use pseudo::{interpolate_view, sample_pseudo_view, PseudoView};
pub use warp::{roundtrip_displacement, warp, WarpField};
