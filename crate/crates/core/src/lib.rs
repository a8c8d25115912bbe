//! Adaptive multivariate density estimation by Fourier inversion of the
//! thresholded empirical characteristic function.
//!
//! The frequency-domain pieces ([`fourier`], [`threshold`], [`estimator`]) are
//! generic over the [`Scalar`] type; the aliases below fix it to `f64`.
//! Target models, samplers and the benchmark work in `f64`.
//!
//! ```
//! use ecf_density::{ecf_evaluate, make_grid, select_kappa, KappaScan, RuleKind, SampleSet};
//!
//! let samples = SampleSet::new(vec![0.1, -0.4, 0.3, 0.9, -1.2, 0.0], 1).unwrap();
//! let grid = make_grid(&[6.0], &[61]).unwrap();
//! let ecf = ecf_evaluate(&samples, &grid).unwrap();
//! assert_eq!(ecf.value_at_origin().re, 1.0);
//! let sel = select_kappa(&ecf, samples.n(), RuleKind::SqrtLog, &KappaScan::default()).unwrap();
//! assert!(sel.selected_kappa > 0.0);
//! ```

pub mod bench;
pub mod error;
pub mod estimator;
pub mod fourier;
pub mod pipeline;
pub mod quadrature;
pub mod scalar;
pub mod sim;
pub mod special;
pub mod targets;
pub mod threshold;

pub use error::{Error, Result};
pub use estimator::{
    boundary_clearance, dn_volume, dn_volume_asymptotic, invert_real_part, invert_to_density, is_in_class_a,
    l2_risk_fourier, sobolev_rate, BoundaryClearance, DomainKind, IntegrationDomain, RiskBreakdown, SobolevRate,
    SobolevSpec,
};
pub use fourier::{cf_evaluate, ecf_evaluate, make_grid};
pub use scalar::{KahanSum, Scalar};
pub use sim::{ChainConfig, ChainKind, RngStream};
pub use targets::{by_name, GammaConvention, ModelParams, TargetModel};
pub use threshold::{
    apply_threshold, euler_characteristic, select_kappa, threshold_mask, KappaScan, RuleKind, StabilizationStep,
};

pub type SampleSet = fourier::SampleSet<f64>;
pub type FrequencyGrid = fourier::FrequencyGrid<f64>;
pub type GridField = fourier::GridField<f64>;
pub type ThresholdRule = threshold::ThresholdRule<f64>;
pub type BinaryMask = threshold::BinaryMask<f64>;
pub type KappaSelection = threshold::KappaSelection<f64>;
pub type SpatialGrid = estimator::SpatialGrid<f64>;
pub type DensityEstimate = estimator::DensityEstimate<f64>;
