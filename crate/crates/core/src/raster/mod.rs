//! Raster and 2D vector kernels shared by the detection stages.

pub mod contour;
pub mod histogram;
pub mod mask;
pub mod merge;
pub mod simplify;

pub use contour::{trace_contours, Contour};
pub use histogram::{histogram_1d, histogram_2d, histogram_2d_padded, DensityGrid, Histogram1D};
pub use mask::{binarize, close_cells, dilate, dilate_cells, erode, erode_cells, BinaryMask};
pub use merge::{explode, merge_collinear, merge_collinear_with};
pub use simplify::simplify;
