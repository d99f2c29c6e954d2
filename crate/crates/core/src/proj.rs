//! Transverse Mercator projection and UTM zone selection.
//!
//! Implements the forward/inverse mapping with the Krüger series in terms of
//! the third flattening (JHS formulation, four series terms), which keeps the
//! error below a millimeter within ±6° of the central meridian. One UTM zone
//! is selected per run from the bounding-box centroid; no external projection
//! database is involved.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{BoundingBox, LonLat, XY};

#[derive(Debug, Error)]
pub enum ProjError {
    #[error("latitude {0}° outside the projection domain (±84°)")]
    LatitudeOutOfDomain(f64),
    #[error("longitude {0}° is not finite")]
    BadCoordinate(f64),
}

/// WGS84 semi-major axis, meters.
const WGS84_A: f64 = 6_378_137.0;
/// WGS84 inverse flattening.
const WGS84_INV_F: f64 = 298.257_223_563;

const UTM_SCALE: f64 = 0.9996;
const UTM_FALSE_EASTING: f64 = 500_000.0;
const UTM_FALSE_NORTHING_SOUTH: f64 = 10_000_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hemisphere {
    North,
    South,
}

/// The working metric CRS of a run: one UTM zone on WGS84.
#[derive(Debug, Clone, Copy)]
pub struct MetricCrs {
    pub utm_zone: u8,
    pub hemisphere: Hemisphere,
    tm: TransverseMercator,
}

impl MetricCrs {
    pub fn new(utm_zone: u8, hemisphere: Hemisphere) -> Self {
        debug_assert!((1..=60).contains(&utm_zone));
        let lon0 = f64::from(utm_zone) * 6.0 - 183.0;
        let false_northing = match hemisphere {
            Hemisphere::North => 0.0,
            Hemisphere::South => UTM_FALSE_NORTHING_SOUTH,
        };
        MetricCrs {
            utm_zone,
            hemisphere,
            tm: TransverseMercator::wgs84(lon0, 0.0, UTM_SCALE, UTM_FALSE_EASTING, false_northing),
        }
    }

    /// Central meridian of the zone, degrees.
    pub fn central_meridian_deg(&self) -> f64 {
        f64::from(self.utm_zone) * 6.0 - 183.0
    }

    pub fn to_metric(&self, p: &LonLat) -> Result<XY, ProjError> {
        if (p.lon - self.central_meridian_deg()).abs() > 6.0 {
            log::warn!(
                "longitude {}° is more than 6° from the zone {} central meridian; \
                 accuracy degrades",
                p.lon,
                self.utm_zone
            );
        }
        self.tm.forward(p)
    }

    pub fn from_metric(&self, p: &XY) -> Result<LonLat, ProjError> {
        self.tm.inverse(p)
    }

    /// Project a batch of coordinates.
    pub fn to_metric_all(&self, coords: &[LonLat]) -> Result<Vec<XY>, ProjError> {
        coords.iter().map(|c| self.to_metric(c)).collect()
    }
}

/// Zone containing the bbox centroid; hemisphere from the centroid latitude
/// sign. Total over valid bounding boxes.
pub fn select_metric_crs(bbox: &BoundingBox) -> MetricCrs {
    let c = bbox.centroid();
    let mut zone = ((c.lon + 180.0) / 6.0).floor() as i32 + 1;
    if zone > 60 {
        zone = 1; // lon = +180 wraps to zone 1
    }
    if zone < 1 {
        zone = 1;
    }
    let hemisphere = if c.lat >= 0.0 {
        Hemisphere::North
    } else {
        Hemisphere::South
    };
    MetricCrs::new(zone as u8, hemisphere)
}

/// Transverse Mercator on an ellipsoid, Krüger series in the third
/// flattening n, four terms each way.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransverseMercator {
    e: f64,
    lon0_rad: f64,
    k0: f64,
    false_easting: f64,
    false_northing: f64,
    /// Rectifying radius.
    b: f64,
    h: [f64; 4],
    h_inv: [f64; 4],
    /// Meridional offset of the latitude of origin.
    m0: f64,
}

impl TransverseMercator {
    pub fn wgs84(lon0_deg: f64, lat0_deg: f64, k0: f64, fe: f64, fn_: f64) -> Self {
        Self::new(WGS84_A, 1.0 / WGS84_INV_F, lon0_deg, lat0_deg, k0, fe, fn_)
    }

    pub fn new(
        a: f64,
        f: f64,
        lon0_deg: f64,
        lat0_deg: f64,
        k0: f64,
        false_easting: f64,
        false_northing: f64,
    ) -> Self {
        let e = (f * (2.0 - f)).sqrt();
        let n = f / (2.0 - f);
        let n2 = n * n;
        let n3 = n2 * n;
        let n4 = n2 * n2;
        let b = a / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0);

        let h = [
            n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0 + 41.0 * n4 / 180.0,
            13.0 * n2 / 48.0 - 3.0 * n3 / 5.0 + 557.0 * n4 / 1440.0,
            61.0 * n3 / 240.0 - 103.0 * n4 / 140.0,
            49561.0 * n4 / 161280.0,
        ];
        let h_inv = [
            n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0 - n4 / 360.0,
            n2 / 48.0 + n3 / 15.0 - 437.0 * n4 / 1440.0,
            17.0 * n3 / 480.0 - 37.0 * n4 / 840.0,
            4397.0 * n4 / 161280.0,
        ];

        let m0 = if lat0_deg == 0.0 {
            0.0
        } else {
            let lat0 = lat0_deg.to_radians();
            let q0 = lat0.tan().asinh() - e * (e * lat0.sin()).atanh();
            let beta0 = q0.sinh().atan();
            let xi: f64 = beta0
                + h.iter()
                    .enumerate()
                    .map(|(i, hi)| hi * (2.0 * (i + 1) as f64 * beta0).sin())
                    .sum::<f64>();
            b * xi
        };

        TransverseMercator {
            e,
            lon0_rad: lon0_deg.to_radians(),
            k0,
            false_easting,
            false_northing,
            b,
            h,
            h_inv,
            m0,
        }
    }

    pub fn forward(&self, p: &LonLat) -> Result<XY, ProjError> {
        if !p.lon.is_finite() || !p.lat.is_finite() {
            return Err(ProjError::BadCoordinate(if p.lon.is_finite() {
                p.lat
            } else {
                p.lon
            }));
        }
        if p.lat.abs() > 84.0 {
            return Err(ProjError::LatitudeOutOfDomain(p.lat));
        }
        let lat = p.lat.to_radians();
        let dlon = p.lon.to_radians() - self.lon0_rad;

        let q = lat.tan().asinh() - self.e * (self.e * lat.sin()).atanh();
        let beta = q.sinh().atan();
        let eta0 = (beta.cos() * dlon.sin()).atanh();
        let xi0 = (beta.sin() * eta0.cosh()).asin();

        let mut xi = xi0;
        let mut eta = eta0;
        for (i, hi) in self.h.iter().enumerate() {
            let k = 2.0 * (i + 1) as f64;
            xi += hi * (k * xi0).sin() * (k * eta0).cosh();
            eta += hi * (k * xi0).cos() * (k * eta0).sinh();
        }

        Ok(XY::new(
            self.false_easting + self.k0 * self.b * eta,
            self.false_northing + self.k0 * (self.b * xi - self.m0),
        ))
    }

    pub fn inverse(&self, p: &XY) -> Result<LonLat, ProjError> {
        let eta_p = (p.x - self.false_easting) / (self.b * self.k0);
        let xi_p = (p.y - self.false_northing + self.k0 * self.m0) / (self.b * self.k0);

        let mut xi0 = xi_p;
        let mut eta0 = eta_p;
        for (i, hi) in self.h_inv.iter().enumerate() {
            let k = 2.0 * (i + 1) as f64;
            xi0 -= hi * (k * xi_p).sin() * (k * eta_p).cosh();
            eta0 -= hi * (k * xi_p).cos() * (k * eta_p).sinh();
        }

        let beta = (xi0.sin() / eta0.cosh()).asin();
        let q_p = beta.tan().asinh();

        // fixed-point recovery of the isometric latitude
        let mut q = q_p;
        for _ in 0..32 {
            let next = q_p + self.e * (self.e * q.tanh()).atanh();
            if (next - q).abs() < 1e-15 {
                q = next;
                break;
            }
            q = next;
        }

        let lat = q.sinh().atan();
        let lon = self.lon0_rad + (eta0.tanh() / beta.cos()).asin();
        Ok(LonLat::new(lon.to_degrees(), lat.to_degrees()))
    }
}
