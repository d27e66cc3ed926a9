//! Model zoos shared across the test suites.

use std::sync::Arc;

use crate::density::SkewModel;
use crate::models::{Outer, Rule, SkewingFunction, SymmetricKernel};

/// One representative per univariate kernel family, each with a different
/// skewer and a mix of standardization rules.
pub(crate) fn registry_1d() -> Vec<SkewModel> {
    vec![
        SkewModel::new(
            SymmetricKernel::gaussian(1, Rule::UnitVariance).unwrap(),
            SkewingFunction::linear(Outer::NormalCdf),
        )
        .unwrap(),
        SkewModel::new(
            SymmetricKernel::laplace(Rule::UnitVariance).unwrap(),
            SkewingFunction::linear(Outer::LogisticCdf),
        )
        .unwrap(),
        SkewModel::new(
            SymmetricKernel::logistic(Rule::MedianOfSquares).unwrap(),
            SkewingFunction::power(2.5, Outer::NormalCdf).unwrap(),
        )
        .unwrap(),
        SkewModel::new(
            SymmetricKernel::exponential_power(1.5, Rule::UnitVariance).unwrap(),
            SkewingFunction::score_composed(
                Arc::new(SymmetricKernel::exponential_power(1.5, Rule::UnitVariance).unwrap()),
                Outer::NormalCdf,
            ),
        )
        .unwrap(),
        SkewModel::new(
            SymmetricKernel::student(1, 1.0, Rule::MedianOfSquares).unwrap(),
            SkewingFunction::sine(Outer::NormalCdf),
        )
        .unwrap(),
        SkewModel::new(
            SymmetricKernel::student(1, 5.0, Rule::UnitVariance).unwrap(),
            SkewingFunction::t_type(5.0, Outer::NormalCdf).unwrap(),
        )
        .unwrap(),
    ]
}

/// Bivariate pairs covering elliptical and product kernels.
pub(crate) fn registry_2d() -> Vec<SkewModel> {
    vec![
        SkewModel::new(
            SymmetricKernel::gaussian(2, Rule::UnitVariance).unwrap(),
            SkewingFunction::linear(Outer::NormalCdf),
        )
        .unwrap(),
        SkewModel::new(
            SymmetricKernel::gaussian(2, Rule::UnitVariance).unwrap(),
            SkewingFunction::sine(Outer::NormalCdf),
        )
        .unwrap(),
        SkewModel::new(
            SymmetricKernel::product(vec![
                SymmetricKernel::gaussian(1, Rule::UnitVariance).unwrap(),
                SymmetricKernel::logistic(Rule::UnitVariance).unwrap(),
            ])
            .unwrap(),
            SkewingFunction::linear(Outer::NormalCdf),
        )
        .unwrap(),
        SkewModel::new(
            SymmetricKernel::student(2, 3.0, Rule::UnitVariance).unwrap(),
            SkewingFunction::t_type(3.0, Outer::NormalCdf).unwrap(),
        )
        .unwrap(),
        SkewModel::new(
            SymmetricKernel::student(2, 5.0, Rule::UnitVariance).unwrap(),
            SkewingFunction::t_type(5.0, Outer::NormalCdf).unwrap(),
        )
        .unwrap(),
    ]
}
