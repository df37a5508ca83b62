//! Encoders, decoders, feature fusion and training losses.

mod encoders;
mod fit;
mod fusion;
mod losses;
mod sis;
#[cfg(test)]
mod tests;

pub use encoders::{
    new_local_encoder, GlobalEncoder, GlobalFeature, GlobalGrads, GLOBAL_CHANNELS, LATENT_WIDTH,
    LOCAL_HIDDEN,
};
pub use fit::{fit_single_mesh, FitConfig, FittedMesh};
pub use fusion::{
    coarse_feature, decoder_rows, decoder_rows_backward, encode_local_features, fuse_feature,
    fused_width, local_encoder_input, CoarseFeature, FusedFeature, LocalFeatureField, Located,
};
pub use losses::{
    loss_laplacian, loss_reconstruction, loss_total, loss_total_masked, LossConfig, LossPlan,
    LossValue,
};
pub use sis::{
    decoder_dims, ModelKind, PartQuery, PartTemplate, SisGrads, SisModel, DECODER_LAYERS,
    DECODER_SKIP, DECODER_WIDTH,
};
