//! Synthetic anisotropic fluoride/fluorosis fields on the unit square.
//!
//! The fluoride field is a background level plus three elongated Gaussian
//! plumes whose long axis points along `bearing_deg` (counter-clockwise from
//! the +lon axis, the same convention as edge bearings). The severity index is
//!
//! ```text
//! dfi = 0.8·F + 0.3·relu(7 − pH) + 0.4·G + N(0, noise_sd²),  clipped to [0, 4]
//! ```
//!
//! where `F` is fluoride in mg/L and `G = len_along · (u · ∇F)` is the
//! dimensionless slope of the fluoride field along the plume axis `u`. `G`
//! is only recoverable from how fluoride changes between neighbors in a
//! particular direction.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::NodeTable;
use crate::error::{Error, Result};
use crate::geometry::Coordinates;
use crate::rng::{rng_for, stream};

pub const SOIL_TYPES: [&str; 3] = ["clay", "loam", "sand"];

const N_PLUMES: usize = 3;
const N_PH_BUMPS: usize = 4;
const FLUORIDE_BACKGROUND: f64 = 0.2;
const FLUORIDE_PEAK: f64 = 2.3;
const PH_BUMP_WIDTH: f64 = 0.2;
const PH_BUMP_HEIGHT: f64 = 0.8;
const SOIL_DOMINANCE: f64 = 0.7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_nodes: usize,
    pub bearing_deg: f64,
    pub len_along: f64,
    pub len_across: f64,
    pub noise_sd: f64,
    pub n_regions: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_nodes: 1000,
            bearing_deg: 35.0,
            len_along: 0.4,
            len_across: 0.05,
            noise_sd: 0.05,
            n_regions: 3,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 10 {
            return Err(Error::Config(format!("n_nodes must be >= 10, got {}", self.n_nodes)));
        }
        if !(self.len_across > 0.0 && self.len_along > self.len_across) {
            return Err(Error::Config(format!(
                "need len_along > len_across > 0, got {} and {}",
                self.len_along, self.len_across
            )));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::Config(format!("noise_sd must be >= 0, got {}", self.noise_sd)));
        }
        if self.n_regions < 1 || self.n_regions > self.n_nodes {
            return Err(Error::Config(format!(
                "n_regions must be in 1..={}, got {}",
                self.n_nodes, self.n_regions
            )));
        }
        if !self.bearing_deg.is_finite() {
            return Err(Error::Config("bearing must be finite".into()));
        }
        Ok(())
    }

    /// Unit vector of the plume axis.
    pub fn axis(&self) -> (f64, f64) {
        let b = self.bearing_deg.to_radians();
        (b.cos(), b.sin())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plume {
    pub center: Coordinates,
    pub amplitude: f64,
}

/// Latent generator state, exposed for checking the generated columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub plumes: Vec<Plume>,
    /// Along-axis fluoride slope `G` per node.
    pub gradient: Vec<f64>,
    /// Node indices seeding the region Voronoi cells.
    pub region_seeds: Vec<usize>,
}

struct Field<'a> {
    spec: &'a SyntheticSpec,
    plumes: &'a [Plume],
}

impl Field<'_> {
    /// Fluoride (mg/L) and its gradient at `p`.
    fn fluoride(&self, p: Coordinates) -> (f64, (f64, f64)) {
        let (ux, uy) = self.spec.axis();
        let (la2, lc2) = (self.spec.len_along.powi(2), self.spec.len_across.powi(2));
        let mut value = FLUORIDE_BACKGROUND;
        let (mut gx, mut gy) = (0.0, 0.0);
        for pl in self.plumes {
            let (dx, dy) = (p.lon - pl.center.lon, p.lat - pl.center.lat);
            let s = dx * ux + dy * uy;
            let t = -dx * uy + dy * ux;
            let k = FLUORIDE_PEAK * pl.amplitude * (-0.5 * (s * s / la2 + t * t / lc2)).exp();
            value += k;
            // ∂k/∂s = −s/la²·k, ∂k/∂t = −t/lc²·k; rotate back to (x, y)
            let (ds, dt) = (-s / la2 * k, -t / lc2 * k);
            gx += ds * ux - dt * uy;
            gy += ds * uy + dt * ux;
        }
        (value, (gx, gy))
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<NodeTable> {
    generate_synthetic_with_truth(spec).map(|(t, _)| t)
}

pub fn generate_synthetic_with_truth(spec: &SyntheticSpec) -> Result<(NodeTable, SyntheticTruth)> {
    spec.validate()?;
    let mut rng = rng_for(spec.seed, stream::SYNTH);
    let n = spec.n_nodes;

    let coords: Vec<Coordinates> = (0..n)
        .map(|_| Coordinates::new(rng.random::<f64>(), rng.random::<f64>()))
        .collect();
    let plumes: Vec<Plume> = (0..N_PLUMES)
        .map(|_| Plume {
            center: Coordinates::new(rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)),
            amplitude: rng.random_range(0.6..1.0),
        })
        .collect();
    let bumps: Vec<(Coordinates, f64)> = (0..N_PH_BUMPS)
        .map(|_| {
            let c = Coordinates::new(rng.random::<f64>(), rng.random::<f64>());
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            (c, sign)
        })
        .collect();
    let region_seeds = rand::seq::index::sample(&mut rng, n, spec.n_regions).into_vec();

    let field = Field { spec, plumes: &plumes };
    let (ux, uy) = spec.axis();
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::Config(e.to_string()))?;

    let mut numeric = Vec::with_capacity(n);
    let mut soil = Vec::with_capacity(n);
    let mut dfi = Vec::with_capacity(n);
    let mut region = Vec::with_capacity(n);
    let mut gradient = Vec::with_capacity(n);
    for &p in &coords {
        let (fl, (gx, gy)) = field.fluoride(p);
        let ph = 7.0
            + bumps
                .iter()
                .map(|(c, s)| {
                    let d2 = (p.lon - c.lon).powi(2) + (p.lat - c.lat).powi(2);
                    s * PH_BUMP_HEIGHT * (-d2 / (2.0 * PH_BUMP_WIDTH * PH_BUMP_WIDTH)).exp()
                })
                .sum::<f64>();
        let r = region_seeds
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = crate::geometry::euclid_dist(p, coords[*a.1]);
                let db = crate::geometry::euclid_dist(p, coords[*b.1]);
                da.total_cmp(&db).then(a.0.cmp(&b.0))
            })
            .map(|(k, _)| k)
            .expect("at least one region");
        let soil_type = if rng.random_bool(SOIL_DOMINANCE) {
            SOIL_TYPES[r % SOIL_TYPES.len()]
        } else {
            SOIL_TYPES[rng.random_range(0..SOIL_TYPES.len())]
        };
        let detection = rng.random::<f64>();
        let g = spec.len_along * (ux * gx + uy * gy);
        let eps = if spec.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        let y = (0.8 * fl + 0.3 * (7.0 - ph).max(0.0) + 0.4 * g + eps).clamp(0.0, 4.0);

        numeric.push([fl, ph, detection]);
        soil.push(soil_type.to_string());
        dfi.push(y);
        region.push(r as u32);
        gradient.push(g);
    }
    let ids = (0..n).map(|i| format!("s{:05}", i)).collect();
    let table = NodeTable::from_columns(ids, coords, numeric, soil, dfi, region)?;
    Ok((
        table,
        SyntheticTruth {
            plumes,
            gradient,
            region_seeds,
        },
    ))
}
