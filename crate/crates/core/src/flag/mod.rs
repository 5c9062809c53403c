//! Two-dimensional extensions that turn a ribbon algorithm into a flag
//! algorithm on an `a × b` grid.
//!
//! Grid naming: `a` is the number of columns (the flag width, along which
//! the stripes are laid out) and `b` the number of rows. Every row runs the
//! ribbon along the width; columns must end monochromatic.

pub mod boost;
pub mod up_down;

pub use boost::{winner_threshold, Boost};
pub use up_down::UpDown;
