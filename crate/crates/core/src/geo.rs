//! Geodetic coordinate pipeline.
//!
//! WGS-84 latitude/longitude/altitude is converted to Earth-centered,
//! Earth-fixed (ECEF) coordinates, translated to a local origin and finally
//! rotated into the ego scene frame with
//!
//! ```text
//! R = Rx(lat0) · Ry(lon0) · Rz(gamma)
//! ```
//!
//! where `Rx`, `Ry`, `Rz` are the canonical right-handed rotations about the
//! coordinate axes. Angles are stored in radians everywhere; degrees only
//! appear at I/O boundaries.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference ellipsoid given by its semi-axes in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    semi_major_a: f64,
    semi_minor_b: f64,
}

impl Ellipsoid {
    /// WGS-84 defining values.
    pub const WGS84: Ellipsoid = Ellipsoid {
        semi_major_a: 6_378_137.0,
        semi_minor_b: 6_356_752.314245,
    };

    pub fn new(semi_major_a: f64, semi_minor_b: f64) -> Result<Self> {
        if !(semi_minor_b > 0.0 && semi_major_a >= semi_minor_b && semi_major_a.is_finite()) {
            return Err(Error::Validation(format!(
                "ellipsoid requires a >= b > 0, got a={semi_major_a}, b={semi_minor_b}"
            )));
        }
        Ok(Self {
            semi_major_a,
            semi_minor_b,
        })
    }

    pub fn a(&self) -> f64 {
        self.semi_major_a
    }

    pub fn b(&self) -> f64 {
        self.semi_minor_b
    }

    /// First eccentricity squared, `1 - b²/a²`.
    pub fn eccentricity_sq(&self) -> f64 {
        1.0 - (self.semi_minor_b * self.semi_minor_b) / (self.semi_major_a * self.semi_major_a)
    }
}

impl Default for Ellipsoid {
    fn default() -> Self {
        Self::WGS84
    }
}

/// Latitude, longitude and altitude above the ellipsoid.
///
/// Latitude lies in `[-π/2, π/2]`, longitude is normalized into `(-π, π]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeodeticPosition {
    latitude_rad: f64,
    longitude_rad: f64,
    altitude_m: f64,
}

impl GeodeticPosition {
    pub fn new(latitude_rad: f64, longitude_rad: f64, altitude_m: f64) -> Result<Self> {
        if !(latitude_rad.is_finite() && longitude_rad.is_finite() && altitude_m.is_finite()) {
            return Err(Error::Validation("geodetic position must be finite".into()));
        }
        if !(-FRAC_PI_2..=FRAC_PI_2).contains(&latitude_rad) {
            return Err(Error::Validation(format!(
                "latitude {latitude_rad} rad outside [-pi/2, pi/2]"
            )));
        }
        Ok(Self {
            latitude_rad,
            longitude_rad: normalize_longitude(longitude_rad),
            altitude_m,
        })
    }

    pub fn from_degrees(lat_deg: f64, lon_deg: f64, altitude_m: f64) -> Result<Self> {
        Self::new(lat_deg.to_radians(), lon_deg.to_radians(), altitude_m)
    }

    pub fn latitude_rad(&self) -> f64 {
        self.latitude_rad
    }

    pub fn longitude_rad(&self) -> f64 {
        self.longitude_rad
    }

    pub fn altitude_m(&self) -> f64 {
        self.altitude_m
    }
}

/// Wraps a longitude into `(-π, π]`.
pub fn normalize_longitude(lon: f64) -> f64 {
    let mut l = lon.rem_euclid(2.0 * PI);
    if l > PI {
        l -= 2.0 * PI;
    }
    l
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcefPosition {
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
}

impl EcefPosition {
    pub fn new(x_m: f64, y_m: f64, z_m: f64) -> Self {
        Self { x_m, y_m, z_m }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x_m, self.y_m, self.z_m)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

/// Position in the ego scene frame, meters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenePosition {
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
}

impl ScenePosition {
    pub fn new(x_m: f64, y_m: f64, z_m: f64) -> Self {
        Self { x_m, y_m, z_m }
    }

    pub fn planar(x_m: f64, y_m: f64) -> Self {
        Self::new(x_m, y_m, 0.0)
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x_m, self.y_m, self.z_m)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn distance_xy(&self, other: &ScenePosition) -> f64 {
        (self.x_m - other.x_m).hypot(self.y_m - other.y_m)
    }
}

/// Radius of curvature in the prime vertical, `N(lat)`.
pub fn prime_vertical_radius(lat: f64, e: &Ellipsoid) -> f64 {
    let (a, b) = (e.a(), e.b());
    let (s, c) = lat.sin_cos();
    a * a / (a * a * c * c + b * b * s * s).sqrt()
}

pub fn geodetic_to_ecef(g: &GeodeticPosition, e: &Ellipsoid) -> EcefPosition {
    let (a, b) = (e.a(), e.b());
    let n = prime_vertical_radius(g.latitude_rad, e);
    let h = g.altitude_m;
    let (sin_lat, cos_lat) = g.latitude_rad.sin_cos();
    let (sin_lon, cos_lon) = g.longitude_rad.sin_cos();
    EcefPosition {
        x_m: (n + h) * cos_lat * cos_lon,
        y_m: (n + h) * cos_lat * sin_lon,
        z_m: ((b * b) / (a * a) * n + h) * sin_lat,
    }
}

/// Translates an ECEF point so that `origin` becomes `(0, 0, 0)`.
pub fn ecef_to_local(p: &EcefPosition, origin: &EcefPosition) -> Vector3<f64> {
    Vector3::new(p.x_m - origin.x_m, p.y_m - origin.y_m, p.z_m - origin.z_m)
}

pub fn rotation_x(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rotation_y(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rotation_z(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Local Cartesian frame anchored at a geodetic origin.
///
/// The origin's ECEF coordinates and the composed rotation are cached at
/// construction; the value is immutable afterwards.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneFrame {
    origin_geodetic: GeodeticPosition,
    origin_ecef: EcefPosition,
    gamma_rad: f64,
    rotation: Matrix3<f64>,
    ellipsoid: Ellipsoid,
}

impl SceneFrame {
    pub fn origin_geodetic(&self) -> &GeodeticPosition {
        &self.origin_geodetic
    }

    pub fn origin_ecef(&self) -> &EcefPosition {
        &self.origin_ecef
    }

    pub fn gamma_rad(&self) -> f64 {
        self.gamma_rad
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn ellipsoid(&self) -> &Ellipsoid {
        &self.ellipsoid
    }

    /// Inverse of the translate-and-rotate step: scene point back to ECEF.
    pub fn scene_to_ecef(&self, p: &ScenePosition) -> EcefPosition {
        let local = self.rotation.transpose() * p.to_vector();
        EcefPosition::from_vector(&(self.origin_ecef.to_vector() + local))
    }

    /// Rotates an ECEF direction (no translation) into the scene frame.
    pub fn rotate_to_scene(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Rotates a scene-frame direction back to ECEF.
    pub fn rotate_to_ecef(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * v
    }
}

pub fn build_scene_frame(origin: GeodeticPosition, gamma: f64, e: &Ellipsoid) -> SceneFrame {
    let rotation = rotation_x(origin.latitude_rad) * rotation_y(origin.longitude_rad) * rotation_z(gamma);
    SceneFrame {
        origin_geodetic: origin,
        origin_ecef: geodetic_to_ecef(&origin, e),
        gamma_rad: gamma,
        rotation,
        ellipsoid: *e,
    }
}

pub fn geodetic_to_scene(g: &GeodeticPosition, f: &SceneFrame, e: &Ellipsoid) -> ScenePosition {
    let local = ecef_to_local(&geodetic_to_ecef(g, e), &f.origin_ecef);
    ScenePosition::from_vector(&(f.rotation * local))
}
