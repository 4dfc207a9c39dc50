//! Fixtures shared by the benchmarks.

use tsseg::{generate, LatentDesign, TimeSeriesMatrix};

/// Mixed latent block series from the six-dimensional design.
pub fn example5(n: usize) -> TimeSeriesMatrix {
    generate(&LatentDesign::example5(), n, 7).expect("valid design").y
}

/// Mixed latent block series from the twenty-dimensional design.
pub fn example6(n: usize) -> TimeSeriesMatrix {
    generate(&LatentDesign::example6(), n, 7).expect("valid design").y
}
