//! Equirectangular local tangent plane.
//!
//! Deployments cover at most a few hundred kilometres, so a flat projection
//! about a fixed origin with constant metres-per-degree is adequate:
//!
//! ```text
//! x = (lon - lon0) · cos(lat0) · 111320
//! y = (lat - lat0) · 110574
//! ```

use crate::error::{Error, Result};
use crate::flow_field::Vec2;

/// Metres per degree of longitude at the equator.
pub const METERS_PER_DEG_LON_EQUATOR: f64 = 111_320.0;
/// Metres per degree of latitude.
pub const METERS_PER_DEG_LAT: f64 = 110_574.0;
/// Projection is refused poleward of this latitude.
pub const MAX_ABS_LATITUDE: f64 = 85.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    pub origin_lat: f64,
    pub origin_lon: f64,
    meters_per_deg_lon: f64,
    meters_per_deg_lat: f64,
}

impl LocalFrame {
    pub fn new(origin_lat: f64, origin_lon: f64) -> Result<Self> {
        check_lat_lon(origin_lat, origin_lon)?;
        Ok(Self {
            origin_lat,
            origin_lon,
            meters_per_deg_lon: origin_lat.to_radians().cos() * METERS_PER_DEG_LON_EQUATOR,
            meters_per_deg_lat: METERS_PER_DEG_LAT,
        })
    }

    pub fn meters_per_degree(&self) -> (f64, f64) {
        (self.meters_per_deg_lon, self.meters_per_deg_lat)
    }

    /// Geodetic degrees to local east/north metres.
    pub fn project(&self, lat: f64, lon: f64) -> Result<Vec2> {
        check_lat_lon(lat, lon)?;
        Ok(Vec2::new(
            (lon - self.origin_lon) * self.meters_per_deg_lon,
            (lat - self.origin_lat) * self.meters_per_deg_lat,
        ))
    }

    /// Inverse of [`LocalFrame::project`]; returns `(lat, lon)`.
    pub fn unproject(&self, p: &Vec2) -> Result<(f64, f64)> {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(Error::Domain("non-finite local coordinates".into()));
        }
        let lat = self.origin_lat + p.y / self.meters_per_deg_lat;
        let lon = self.origin_lon + p.x / self.meters_per_deg_lon;
        check_lat_lon(lat, lon)?;
        Ok((lat, lon))
    }
}

fn check_lat_lon(lat: f64, lon: f64) -> Result<()> {
    if !(lat.is_finite() && lon.is_finite()) {
        return Err(Error::Domain("non-finite latitude/longitude".into()));
    }
    if lat.abs() > MAX_ABS_LATITUDE {
        return Err(Error::UnsupportedRegion(format!(
            "latitude {lat} is beyond ±{MAX_ABS_LATITUDE}°"
        )));
    }
    if lon.abs() > 180.0 {
        return Err(Error::Domain(format!("longitude {lon} outside [-180, 180]")));
    }
    Ok(())
}
