use serde::Serialize;

use super::geo::GeoLocation;
use super::EnrichError;

pub const EARTH_RADIUS_KM: f64 = 6371.0;
/// Speed of light in vacuum.
pub const C0_KM_PER_S: f64 = 299_792.458;

/// Great-circle distance between two (latitude, longitude) points in degrees.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((lat2 - lat1) / 2.0).sin().powi(2)
        + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Time light needs to cover `km` in vacuum, in µs.
pub fn light_time_us(km: f64) -> f64 {
    km / C0_KM_PER_S * 1e6
}

/// Smallest RTT for a link whose endpoints are `distance_km` apart
/// (there and back).
pub fn min_rtt_us(distance_km: f64) -> f64 {
    light_time_us(2.0 * distance_km)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Plausibility {
    Plausible,
    /// The observed RTT increase is below what light needs.
    Implausible {
        min_rtt_us: f64,
    },
}

impl Plausibility {
    pub fn is_plausible(self) -> bool {
        self == Plausibility::Plausible
    }
}

/// Verdict for a link spanning `distance_km` whose RTT grew by
/// `observed_increase_us`.
pub fn plausibility_for_distance(distance_km: f64, observed_increase_us: f64) -> Plausibility {
    let min_rtt_us = min_rtt_us(distance_km);
    if observed_increase_us < min_rtt_us {
        Plausibility::Implausible { min_rtt_us }
    } else {
        Plausibility::Plausible
    }
}

/// Speed-of-light check for a link between two located routers.
pub fn plausibility_filter(
    from: Option<&GeoLocation>,
    to: Option<&GeoLocation>,
    observed_increase_us: f64,
) -> Result<Plausibility, EnrichError> {
    let (Some(from), Some(to)) = (from, to) else {
        return Err(EnrichError::Unlocatable);
    };
    Ok(plausibility_for_distance(
        haversine_km(from.coordinates(), to.coordinates()),
        observed_increase_us,
    ))
}
