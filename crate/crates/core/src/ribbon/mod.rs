//! One-dimensional message-passing ribbon algorithms.

pub mod approx_count;
pub mod bubble_sort;
pub mod exact_count;
pub mod silent_count;

pub use approx_count::ApproxCount;
pub use bubble_sort::BubbleSort;
pub use exact_count::ExactCount;
pub use silent_count::SilentCount;

/// Color of an agent with `n_left` agents to its left and `n_right` to its right.
pub fn color_from_counts(n_left: u64, n_right: u64, k: u8) -> u8 {
    let n = n_left + n_right + 1;
    (n_left * u64::from(k) / n) as u8 + 1
}
