//! Corruption masks, coil sensitivities, and linear operators.

mod coils;
mod linop;
mod mask;

pub use coils::{make_coil_maps, CoilMaps};
pub use linop::{
    adjoint_check, compose, downsample_operator, gaussian_cs_operator, inpaint_operator,
    mri_forward_operator, mri_operator, LinearOp, RealViewOp,
};
pub use mask::{
    acs_range, further_corrupt, lines_at_acceleration, make_kspace_mask, make_pixel_mask,
    CorruptionPolicy, MaskKind, MaskSpec,
};

pub use mask::parse_shape;

pub(crate) use mask::join_usize;
