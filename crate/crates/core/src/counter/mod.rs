//! Rudin-Shapiro polynomials, Dirichlet blocks, the convolution operator whose
//! `L^p -> L^1` norms blow up below `r`, and a gallery of instances on which
//! disentanglement must fail.

mod gallery;
mod trig;

pub use gallery::{
    check_gallery, gallery, homogeneity_instance, identity_constant, identity_required_cap, log_grid, power_profile, GalleryCheck, GalleryInstance, GalleryKind,
    GalleryParams, Verdict, BEYOND_RANGE_LEVELS, HOMOGENEITY_LEVELS, MAX_ATOMS, MAX_HOMOGENEITY_AXIS,
};
pub use trig::{
    default_grid, dirichlet, dirichlet_block_convolution, ftp_growth_experiment, modulated_dirichlet, modulated_rs,
    rudin_shapiro, trig_poly_norm, verify_rs_properties, ConvolutionReport, FtpRow, FtpTable, NormEstimate,
    NormMethod, RsReport, TrigPolynomial, MAX_CHECK_DEGREE, MAX_RS_DEGREE,
};
