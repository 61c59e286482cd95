//! Guidance engine and simulation harness for audio-only pedestrian navigation.
//!
//! The geometry ([`geo`]), beacon rendering ([`beacon`]) and descriptive statistics
//! ([`stats`]) are written against any [`Scalar`] (f32 or f64). Everything that
//! touches routes, logs and sessions works in `f64` through the aliases below.

pub mod beacon;
pub mod engine;
pub mod fixtures;
pub mod geo;
pub mod instructor;
pub mod metrics;
pub mod prompting;
pub mod route;
pub mod scalar;
pub mod simkit;
pub mod stats;
pub mod tracking;

pub use scalar::Scalar;

pub type GeoPoint = geo::GeoPoint<f64>;
pub type HeadingDeg = geo::HeadingDeg<f64>;
pub type AngleDelta = geo::AngleDelta<f64>;
pub type LocalXY = geo::LocalXY<f64>;
pub type BeaconConfig = beacon::BeaconConfig<f64>;
pub type BeaconState = beacon::BeaconState<f64>;
pub type RenderParams = beacon::RenderParams<f64>;

pub type GeoPoint32 = geo::GeoPoint<f32>;
pub type HeadingDeg32 = geo::HeadingDeg<f32>;
pub type AngleDelta32 = geo::AngleDelta<f32>;
