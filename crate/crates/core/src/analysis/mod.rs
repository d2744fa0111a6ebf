//! Post-hoc interpretation: attention traces, latent/channel cosine
//! matching and 2-D latent projections.

mod projection;
mod similarity;
mod trace;

pub use projection::{dispersion, project_latents_2d, write_projection_csv, ProjectedPoint, Projection};
pub use similarity::{cosine, latent_channel_similarity, write_similarity_csv, ChannelScore, SimilarityTable};
pub use trace::{dump_attention, mass_inside_span, read_attention, trace_activations, ActivationTrace, TraceFiles};
