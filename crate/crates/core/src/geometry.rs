//! Planar coordinate handling. Distances and bearings are computed in
//! standardized coordinate space so kernel bandwidths are unitless.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A location: longitude/latitude in degrees or abstract x/y.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coordinates {
    pub lon: f64,
    pub lat: f64,
}

impl Coordinates {
    pub fn new(lon: f64, lat: f64) -> Self {
        Self { lon, lat }
    }
}

/// Per-axis affine transform produced by [`standardize_coords`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordTransform {
    pub lon_mean: f64,
    pub lon_scale: f64,
    pub lat_mean: f64,
    pub lat_scale: f64,
}

impl CoordTransform {
    pub fn apply(&self, p: Coordinates) -> Coordinates {
        Coordinates {
            lon: (p.lon - self.lon_mean) / self.lon_scale,
            lat: (p.lat - self.lat_mean) / self.lat_scale,
        }
    }
}

/// Edge geometry fed into the attention score: bearing and distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionalAnnotation {
    pub cos_theta: f64,
    pub sin_theta: f64,
    pub distance: f64,
}

impl DirectionalAnnotation {
    /// Annotation for a self-loop or coincident pair.
    pub const COINCIDENT: Self = Self {
        cos_theta: 1.0,
        sin_theta: 0.0,
        distance: 0.0,
    };

    /// Annotation of the directed pair `from → to`.
    pub fn between(from: Coordinates, to: Coordinates) -> Self {
        let distance = euclid_dist(from, to);
        if distance == 0.0 {
            return Self::COINCIDENT;
        }
        let (cos_theta, sin_theta) = bearing(from, to);
        Self {
            cos_theta,
            sin_theta,
            distance,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.cos_theta, self.sin_theta, self.distance]
    }
}

fn mean_and_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Shifts and scales each axis to zero mean and unit (population) variance.
pub fn standardize_coords(coords: &[Coordinates]) -> Result<(Vec<Coordinates>, CoordTransform)> {
    if coords.len() < 2 {
        return Err(Error::Geometry(format!(
            "need at least 2 points, got {}",
            coords.len()
        )));
    }
    let (lon_mean, lon_scale) = mean_and_sd(coords.iter().map(|p| p.lon));
    let (lat_mean, lat_scale) = mean_and_sd(coords.iter().map(|p| p.lat));
    for (axis, scale) in [("longitude", lon_scale), ("latitude", lat_scale)] {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Geometry(format!("{} axis has zero variance", axis)));
        }
    }
    let t = CoordTransform {
        lon_mean,
        lon_scale,
        lat_mean,
        lat_scale,
    };
    Ok((coords.iter().map(|&p| t.apply(p)).collect(), t))
}

/// `(cos θ, sin θ)` with `θ = atan2(Δlat, Δlon)` for the direction `p_i → p_j`.
/// Coincident points return `(1, 0)`.
pub fn bearing(p_i: Coordinates, p_j: Coordinates) -> (f64, f64) {
    let dx = p_j.lon - p_i.lon;
    let dy = p_j.lat - p_i.lat;
    if dx == 0.0 && dy == 0.0 {
        return (1.0, 0.0);
    }
    let theta = dy.atan2(dx);
    (theta.cos(), theta.sin())
}

pub fn euclid_dist(p_i: Coordinates, p_j: Coordinates) -> f64 {
    (p_j.lon - p_i.lon).hypot(p_j.lat - p_i.lat)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn c(lon: f64, lat: f64) -> Coordinates {
        Coordinates::new(lon, lat)
    }

    #[test]
    fn standardize_square() {
        let pts = [c(0.0, 0.0), c(2.0, 0.0), c(0.0, 2.0), c(2.0, 2.0)];
        let (s, _) = standardize_coords(&pts).unwrap();
        let (m, sd) = mean_and_sd(s.iter().map(|p| p.lon));
        assert!(m.abs() < 1e-15 && (sd - 1.0).abs() < 1e-15);
        let (m, sd) = mean_and_sd(s.iter().map(|p| p.lat));
        assert!(m.abs() < 1e-15 && (sd - 1.0).abs() < 1e-15);

        let (again, _) = standardize_coords(&s).unwrap();
        for (a, b) in s.iter().zip(&again) {
            assert!((a.lon - b.lon).abs() < 1e-12 && (a.lat - b.lat).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_axis_is_degenerate() {
        let err = standardize_coords(&[c(10.0, 5.0), c(20.0, 5.0)]).unwrap_err();
        assert!(matches!(err, Error::Geometry(ref m) if m.contains("latitude")));
        assert!(standardize_coords(&[c(1.0, 1.0)]).is_err());
    }

    #[test]
    fn bearing_cases() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let (cs, sn) = bearing(c(0.0, 0.0), c(1.0, 1.0));
        assert!((cs - h).abs() < 1e-15 && (sn - h).abs() < 1e-15);
        let (cs, sn) = bearing(c(0.0, 0.0), c(-1.0, 0.0));
        assert!((cs + 1.0).abs() < 1e-15 && sn.abs() < 1e-15);
        let (cs, sn) = bearing(c(0.0, 0.0), c(3.0, 4.0));
        assert!((cs - 0.6).abs() < 1e-15 && (sn - 0.8).abs() < 1e-15);
        assert_eq!(bearing(c(2.0, 2.0), c(2.0, 2.0)), (1.0, 0.0));
    }

    #[test]
    fn distance_cases() {
        assert_eq!(euclid_dist(c(0.0, 0.0), c(0.0, 0.0)), 0.0);
        assert_eq!(euclid_dist(c(0.0, 0.0), c(3.0, 4.0)), 5.0);
        assert_eq!(
            DirectionalAnnotation::between(c(1.0, 1.0), c(1.0, 1.0)),
            DirectionalAnnotation::COINCIDENT
        );
    }

    fn pt() -> impl Strategy<Value = Coordinates> {
        (-100.0f64..100.0, -100.0f64..100.0).prop_map(|(a, b)| c(a, b))
    }

    proptest! {
        #[test]
        fn triangle_inequality(a in pt(), b in pt(), q in pt()) {
            prop_assert!(euclid_dist(a, b) <= euclid_dist(a, q) + euclid_dist(q, b) + 1e-9);
            prop_assert_eq!(euclid_dist(a, b), euclid_dist(b, a));
        }

        #[test]
        fn bearing_antisymmetric_and_unit(a in pt(), b in pt()) {
            prop_assume!(euclid_dist(a, b) > 1e-9);
            let (c1, s1) = bearing(a, b);
            let (c2, s2) = bearing(b, a);
            prop_assert!((c1 + c2).abs() < 1e-12 && (s1 + s2).abs() < 1e-12);
            prop_assert!((c1 * c1 + s1 * s1 - 1.0).abs() < 1e-9);
        }

        #[test]
        fn translation_invariance(a in pt(), b in pt(), t in pt()) {
            prop_assume!(euclid_dist(a, b) > 1e-6);
            let (a2, b2) = (c(a.lon + t.lon, a.lat + t.lat), c(b.lon + t.lon, b.lat + t.lat));
            prop_assert!((euclid_dist(a, b) - euclid_dist(a2, b2)).abs() < 1e-9);
            let (c1, s1) = bearing(a, b);
            let (c2, s2) = bearing(a2, b2);
            prop_assert!((c1 - c2).abs() < 1e-7 && (s1 - s2).abs() < 1e-7);
        }

        #[test]
        fn standardized_distance_ignores_affine_shift(
            pts in proptest::collection::vec(pt(), 3..12),
            shift in pt(),
        ) {
            let shifted: Vec<_> = pts.iter().map(|p| c(p.lon + shift.lon, p.lat + shift.lat)).collect();
            let (Ok((s1, _)), Ok((s2, _))) = (standardize_coords(&pts), standardize_coords(&shifted)) else {
                return Ok(());
            };
            for i in 0..s1.len() {
                for j in 0..s1.len() {
                    prop_assert!((euclid_dist(s1[i], s1[j]) - euclid_dist(s2[i], s2[j])).abs() < 1e-8);
                }
            }
        }
    }
}
