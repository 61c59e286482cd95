//! Geodesic and angular primitives.
//!
//! Everything here works on a sphere of radius [`EARTH_RADIUS_M`]. Route scale is
//! well under a kilometre, so the ellipsoid is not worth the extra machinery.
//! Headings are degrees clockwise from true north in `[0, 360)`; angle deltas are
//! signed degrees in `(-180, 180]` with positive meaning "to the right".

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Mean earth radius used by every distance computation, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Largest distance from the origin accepted by [`project_local`].
pub const LOCAL_PATCH_RADIUS_M: f64 = 10_000.0;

/// Coordinates closer than this (degrees, per axis) have no defined bearing.
const DEGENERATE_EPS_DEG: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("invalid coordinate lat={lat} lon={lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("bearing is undefined between coincident points")]
    DegenerateBearing,
    #[error("point is {distance_m:.1} m from the projection origin (limit {LOCAL_PATCH_RADIUS_M} m)")]
    OutOfPatch { distance_m: f64 },
}

/// A position on the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint<T> {
    #[serde(rename = "lat")]
    pub lat_deg: T,
    #[serde(rename = "lon")]
    pub lon_deg: T,
}

impl<T: Scalar> GeoPoint<T> {
    /// Builds a validated point: finite, latitude in `[-90, 90]`, longitude in `(-180, 180]`.
    pub fn new(lat_deg: T, lon_deg: T) -> Result<Self, GeoError> {
        let p = Self { lat_deg, lon_deg };
        if p.is_valid() {
            Ok(p)
        } else {
            Err(GeoError::InvalidCoordinate {
                lat: lat_deg.to_f64().unwrap_or(f64::NAN),
                lon: lon_deg.to_f64().unwrap_or(f64::NAN),
            })
        }
    }

    pub fn is_valid(&self) -> bool {
        let (lat, lon) = (self.lat_deg, self.lon_deg);
        lat.is_finite()
            && lon.is_finite()
            && lat >= T::lit(-90.0)
            && lat <= T::lit(90.0)
            && lon > T::lit(-180.0)
            && lon <= T::lit(180.0)
    }
}

/// Wraps any angle into `[0, 360)`.
#[inline]
pub fn wrap_360<T: Scalar>(deg: T) -> T {
    let full = T::lit(360.0);
    let mut r = deg % full;
    if r < T::zero() {
        r = r + full;
    }
    // -1e-17 % 360 + 360 rounds to exactly 360
    if r >= full {
        r = r - full;
    }
    r
}

/// Wraps any angle into `(-180, 180]`; exactly ±180 maps to +180.
#[inline]
pub fn wrap_180<T: Scalar>(deg: T) -> T {
    if deg > -T::lit(180.0) && deg <= T::lit(180.0) {
        return deg;
    }
    let d = wrap_360(deg);
    if d > T::lit(180.0) {
        d - T::lit(360.0)
    } else {
        d
    }
}

/// Compass heading, degrees clockwise from true north, always in `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HeadingDeg<T>(T);

impl<T: Scalar> HeadingDeg<T> {
    pub fn new(deg: T) -> Self {
        Self(wrap_360(deg))
    }

    #[inline]
    pub fn value(self) -> T {
        self.0
    }

    /// Rotates by a signed delta, staying normalized.
    pub fn rotate(self, delta: AngleDelta<T>) -> Self {
        Self::new(self.0 + delta.value())
    }

    /// Rotates by an arbitrary number of degrees.
    pub fn offset(self, deg: T) -> Self {
        Self::new(self.0 + deg)
    }
}

/// Signed rotation in `(-180, 180]`; positive means the target lies to the right.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AngleDelta<T>(T);

impl<T: Scalar> AngleDelta<T> {
    pub fn new(deg: T) -> Self {
        Self(wrap_180(deg))
    }

    #[inline]
    pub fn value(self) -> T {
        self.0
    }

    #[inline]
    pub fn abs(self) -> T {
        self.0.abs()
    }
}

/// Great-circle (haversine) distance in meters.
pub fn distance_m<T: Scalar>(a: GeoPoint<T>, b: GeoPoint<T>) -> T {
    let lat1 = a.lat_deg.to_radians();
    let lat2 = b.lat_deg.to_radians();
    let dlat = lat2 - lat1;
    let dlon = wrap_180(b.lon_deg - a.lon_deg).to_radians();
    let two = T::lit(2.0);
    let s_lat = (dlat / two).sin();
    let s_lon = (dlon / two).sin();
    let h = (s_lat * s_lat + lat1.cos() * lat2.cos() * s_lon * s_lon).max(T::zero()).min(T::one());
    T::lit(EARTH_RADIUS_M) * two * h.sqrt().atan2((T::one() - h).sqrt())
}

/// Initial great-circle bearing from `from` towards `to`.
pub fn bearing_deg<T: Scalar>(from: GeoPoint<T>, to: GeoPoint<T>) -> Result<HeadingDeg<T>, GeoError> {
    let eps = T::lit(DEGENERATE_EPS_DEG);
    if (from.lat_deg - to.lat_deg).abs() < eps && wrap_180(from.lon_deg - to.lon_deg).abs() < eps {
        return Err(GeoError::DegenerateBearing);
    }
    let lat1 = from.lat_deg.to_radians();
    let lat2 = to.lat_deg.to_radians();
    let dlon = wrap_180(to.lon_deg - from.lon_deg).to_radians();
    let y = dlon.sin() * lat2.cos();
    let x = lat1.cos() * lat2.sin() - lat1.sin() * lat2.cos() * dlon.cos();
    Ok(HeadingDeg::new(y.atan2(x).to_degrees()))
}

/// Minimal signed rotation that turns `heading` onto `target_bearing`.
///
/// Exactly opposite directions resolve to +180.
pub fn signed_delta<T: Scalar>(heading: HeadingDeg<T>, target_bearing: HeadingDeg<T>) -> AngleDelta<T> {
    AngleDelta::new(target_bearing.value() - heading.value())
}

/// Planar offset in meters from a projection origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalXY<T> {
    pub east_m: T,
    pub north_m: T,
}

impl<T: Scalar> LocalXY<T> {
    pub fn new(east_m: T, north_m: T) -> Self {
        Self { east_m, north_m }
    }

    pub fn norm(self) -> T {
        self.east_m.hypot(self.north_m)
    }

    /// Planar heading of this vector, degrees clockwise from north.
    pub fn heading(self) -> HeadingDeg<T> {
        HeadingDeg::new(self.east_m.atan2(self.north_m).to_degrees())
    }

    /// Unit-length vector pointing along `heading`, scaled by `len`.
    pub fn along(heading: HeadingDeg<T>, len: T) -> Self {
        let r = heading.value().to_radians();
        Self::new(r.sin() * len, r.cos() * len)
    }
}

impl<T: Scalar> std::ops::Add for LocalXY<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.east_m + o.east_m, self.north_m + o.north_m)
    }
}

impl<T: Scalar> std::ops::Sub for LocalXY<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.east_m - o.east_m, self.north_m - o.north_m)
    }
}

impl<T: Scalar> std::ops::Mul<T> for LocalXY<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        Self::new(self.east_m * k, self.north_m * k)
    }
}

/// Equirectangular projection of `p` around `origin`.
///
/// `east = R·Δλ·cos φ₀`, `north = R·Δφ`. Exactly inverted by [`unproject_local`].
pub fn project_local<T: Scalar>(origin: GeoPoint<T>, p: GeoPoint<T>) -> Result<LocalXY<T>, GeoError> {
    let d = distance_m(origin, p);
    if d > T::lit(LOCAL_PATCH_RADIUS_M) {
        return Err(GeoError::OutOfPatch { distance_m: d.to_f64().unwrap_or(f64::INFINITY) });
    }
    Ok(project_unchecked(origin, p))
}

/// [`project_local`] without the patch-size check, for hot loops over points already
/// known to be nearby.
#[inline]
pub fn project_unchecked<T: Scalar>(origin: GeoPoint<T>, p: GeoPoint<T>) -> LocalXY<T> {
    let r = T::lit(EARTH_RADIUS_M);
    let dlat = (p.lat_deg - origin.lat_deg).to_radians();
    let dlon = wrap_180(p.lon_deg - origin.lon_deg).to_radians();
    LocalXY::new(r * dlon * origin.lat_deg.to_radians().cos(), r * dlat)
}

/// Inverse of [`project_local`].
pub fn unproject_local<T: Scalar>(origin: GeoPoint<T>, xy: LocalXY<T>) -> GeoPoint<T> {
    let r = T::lit(EARTH_RADIUS_M);
    let lat = origin.lat_deg + (xy.north_m / r).to_degrees();
    let lon = origin.lon_deg + (xy.east_m / (r * origin.lat_deg.to_radians().cos())).to_degrees();
    GeoPoint { lat_deg: lat, lon_deg: wrap_180(lon) }
}

/// Closest point on segment `a..b` to `p`: returns (distance, parameter in `[0, 1]`).
pub fn point_segment_distance<T: Scalar>(p: LocalXY<T>, a: LocalXY<T>, b: LocalXY<T>) -> (T, T) {
    let ab = b - a;
    let len2 = ab.east_m * ab.east_m + ab.north_m * ab.north_m;
    let t = if len2 <= T::zero() {
        T::zero()
    } else {
        let ap = p - a;
        ((ap.east_m * ab.east_m + ap.north_m * ab.north_m) / len2).max(T::zero()).min(T::one())
    };
    let closest = a + ab * t;
    ((p - closest).norm(), t)
}
