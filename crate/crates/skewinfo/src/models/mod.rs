//! Model registry: centrally symmetric kernels, skewing functions, and the
//! standardization rules that pin the kernel's scale.

mod kernels;
mod skewers;
mod standardize;

pub use kernels::SymmetricKernel;
pub use skewers::{normal_cdf, Outer, SkewerShape, SkewingFunction};

/// How a kernel's free scale is pinned down.
///
/// `UnitVariance` calibrates each coordinate's marginal to variance one.
/// `MedianOfSquares` calibrates the marginal so that its squared value has
/// median one, that is, P(Z_1 <= 1) = 0.75.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    UnitVariance,
    MedianOfSquares,
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::UnitVariance => "unit_variance",
            Rule::MedianOfSquares => "median_of_squares",
        }
    }
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
