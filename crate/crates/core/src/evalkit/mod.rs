//! Inversion quality metrics and figure emission.

mod figures;
mod metrics;

pub use figures::{emit_figures, FigureIndex, ResultSet, SweepChart};
pub use metrics::{
    compute_report, pcc, psnr, reconstruction_check, rre, ssim, MetricReport, PSNR_CAP_DB,
    REPORT_FORMAT,
};
