use crate::math::{asin, atan2, cos, sin, sqrt};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Great-circle distance in meters between two (lat, lon) points in degrees.
pub fn haversine_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let s1 = sin(dlat / 2.0);
    let s2 = sin(dlon / 2.0);
    let h = s1 * s1 + cos(lat1) * cos(lat2) * s2 * s2;
    2.0 * EARTH_RADIUS_M * asin(sqrt(h.clamp(0.0, 1.0)))
}

/// Initial great-circle bearing from `a` to `b`, degrees in [0, 360).
pub fn bearing_deg(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlon = lon2 - lon1;
    let y = sin(dlon) * cos(lat2);
    let x = cos(lat1) * sin(lat2) - sin(lat1) * cos(lat2) * cos(dlon);
    let deg = atan2(y, x).to_degrees();
    if deg < 0.0 {
        deg + 360.0
    } else {
        deg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_degree_on_equator() {
        let expected = EARTH_RADIUS_M * core::f64::consts::PI / 180.0;
        assert!((expected - 111_194.93).abs() < 0.01);
        let d = haversine_m((0.0, 0.0), (0.0, 1.0));
        assert!((d - 111_195.0).abs() < 1.0, "{d}");
        assert!((d - expected).abs() < 1e-6);
        assert_eq!(haversine_m((34.05, -118.25), (34.05, -118.25)), 0.0);
    }

    #[test]
    fn bearings() {
        assert!((bearing_deg((0.0, 0.0), (1.0, 0.0)) - 0.0).abs() < 1e-9);
        assert!((bearing_deg((0.0, 0.0), (0.0, 1.0)) - 90.0).abs() < 1e-9);
        assert!((bearing_deg((0.0, 0.0), (-1.0, 0.0)) - 180.0).abs() < 1e-9);
        assert!((bearing_deg((0.0, 0.0), (0.0, -1.0)) - 270.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn symmetric_and_non_negative(
            lat1 in -90.0f64..=90.0, lon1 in -180.0f64..=180.0,
            lat2 in -90.0f64..=90.0, lon2 in -180.0f64..=180.0,
        ) {
            let d1 = haversine_m((lat1, lon1), (lat2, lon2));
            let d2 = haversine_m((lat2, lon2), (lat1, lon1));
            prop_assert!(d1 >= 0.0);
            prop_assert_eq!(d1, d2);
            prop_assert!(d1 <= EARTH_RADIUS_M * core::f64::consts::PI + 1e-6);
        }
    }
}
