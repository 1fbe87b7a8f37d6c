//! Synthetic city generator with ground-truth latent factors.
//!
//! Every observation is a linear mix of three latents plus noise:
//!
//! ```text
//! obs = A z_loc + B z_area + C z_dyn + eps
//! ```
//!
//! `z_loc` is fixed per location (static built environment), `z_area` per
//! area (neighborhood ambiance), `z_dyn` per capture (transient content).
//! The per-area indicator is the noiseless functional `y_area = w . z_area`,
//! and each capture carries a perception-style score on a 0-10 scale driven
//! by `u . z_dyn`. Areas are disjoint squares at least 300 m apart and
//! locations within an area are 10 m apart, so temporal (5 m) and spatial
//! constraints never collide.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{Area, AreaSet, GeoPoint, ImageRecord, METERS_PER_DEG_LAT};
use crate::io::{save_matrix, save_metadata, IdMatrix};

/// Meters between neighboring locations inside an area.
const LOCATION_SPACING_M: f64 = 10.0;
/// Minimum edge-to-edge gap between areas.
const AREA_GAP_M: f64 = 300.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_areas: usize,
    pub locations_per_area: usize,
    pub captures_per_location: usize,
    pub d_static: usize,
    pub d_area: usize,
    pub d_dyn: usize,
    pub obs_dim: usize,
    /// Scale of the per-location static latent.
    pub static_scale: f64,
    /// Scale of the per-area ambiance latent.
    pub area_scale: f64,
    /// Scale of the per-capture dynamic latent.
    pub dyn_scale: f64,
    /// Scale of the additive observation noise.
    pub noise_scale: f64,
    /// First capture year; captures at a location get consecutive years.
    pub first_year: i32,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_areas: 10,
            locations_per_area: 20,
            captures_per_location: 4,
            d_static: 8,
            d_area: 4,
            d_dyn: 4,
            obs_dim: 32,
            static_scale: 1.0,
            area_scale: 1.0,
            dyn_scale: 1.0,
            noise_scale: 0.05,
            first_year: 2015,
            origin_lat: 0.0,
            origin_lon: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_areas == 0 || self.locations_per_area == 0 || self.captures_per_location == 0 {
            return Err(Error::InvalidInput("synth counts must be >= 1".into()));
        }
        if self.d_static == 0 || self.d_area == 0 || self.d_dyn == 0 || self.obs_dim == 0 {
            return Err(Error::InvalidInput("synth dims must be >= 1".into()));
        }
        if self.captures_per_location > 50 {
            return Err(Error::InvalidInput("captures_per_location must be <= 50".into()));
        }
        Ok(())
    }
}

/// Ground truth kept out of the observation files; serialized to JSON for
/// test and evaluation use only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    /// Noiseless area indicator `w . z_area`.
    pub y_area: BTreeMap<String, f64>,
    /// Per-capture perception score on a 0-10 scale (mean 5, sd 1.5),
    /// driven by the dynamic latent.
    pub capture_score: BTreeMap<String, f64>,
    pub z_static: BTreeMap<String, Vec<f64>>,
    pub z_area: BTreeMap<String, Vec<f64>>,
    pub z_dyn: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SynthCity {
    pub records: Vec<ImageRecord>,
    pub observations: IdMatrix,
    pub truth: SynthTruth,
    /// The square area polygons, usable with [`crate::geo::assign_area`].
    pub areas: Vec<Area>,
    mixing_static: Array2<f64>,
    mixing_area: Array2<f64>,
    mixing_dyn: Array2<f64>,
    noise: Array2<f64>,
    location_of: BTreeMap<String, String>,
    area_of: BTreeMap<String, String>,
}

fn draw_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            scale * v
        })
        .collect()
}

fn draw_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let scale = 1.0 / (cols as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| {
        let v: f64 = StandardNormal.sample(rng);
        scale * v
    })
}

/// Generate a city. Deterministic per seed: the RNG stream is consumed in
/// a fixed documented order (mixing maps, indicator weights, then areas ->
/// locations -> captures).
pub fn generate_city(cfg: &SynthConfig) -> Result<SynthCity> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mixing_static = draw_matrix(&mut rng, cfg.obs_dim, cfg.d_static);
    let mixing_area = draw_matrix(&mut rng, cfg.obs_dim, cfg.d_area);
    let mixing_dyn = draw_matrix(&mut rng, cfg.obs_dim, cfg.d_dyn);
    let w_area: Array1<f64> =
        Array1::from_vec((0..cfg.d_area).map(|_| StandardNormal.sample(&mut rng)).collect());
    let u_dyn: Array1<f64> =
        Array1::from_vec((0..cfg.d_dyn).map(|_| StandardNormal.sample(&mut rng)).collect());
    let u_norm = u_dyn.dot(&u_dyn).sqrt().max(1e-12);

    // Area layout: k x k grid of squares.
    let grid_side = (cfg.n_areas as f64).sqrt().ceil() as usize;
    let loc_side = (cfg.locations_per_area as f64).sqrt().ceil() as usize;
    let area_side_m = (loc_side.max(2) - 1) as f64 * LOCATION_SPACING_M;
    let pitch_m = area_side_m + AREA_GAP_M + 100.0;
    let deg_per_m_lat = 1.0 / METERS_PER_DEG_LAT;
    let cos_lat = cfg.origin_lat.to_radians().cos().max(1e-6);
    let deg_per_m_lon = deg_per_m_lat / cos_lat;

    let n_records = cfg.n_areas * cfg.locations_per_area * cfg.captures_per_location;
    let mut records = Vec::with_capacity(n_records);
    let mut obs = Array2::zeros((n_records, cfg.obs_dim));
    let mut noise = Array2::zeros((n_records, cfg.obs_dim));
    let mut truth = SynthTruth {
        y_area: BTreeMap::new(),
        capture_score: BTreeMap::new(),
        z_static: BTreeMap::new(),
        z_area: BTreeMap::new(),
        z_dyn: BTreeMap::new(),
    };
    let mut areas = Vec::with_capacity(cfg.n_areas);
    let mut location_of = BTreeMap::new();
    let mut area_of = BTreeMap::new();

    let headings = [0.0, 90.0, 180.0, 270.0];
    let mut row = 0usize;
    for area_idx in 0..cfg.n_areas {
        let area_id = format!("area{area_idx:03}");
        let ax = (area_idx % grid_side) as f64 * pitch_m;
        let ay = (area_idx / grid_side) as f64 * pitch_m;
        let margin = LOCATION_SPACING_M / 2.0;
        let ring = vec![
            GeoPoint::new(
                cfg.origin_lat + (ay - margin) * deg_per_m_lat,
                cfg.origin_lon + (ax - margin) * deg_per_m_lon,
            )?,
            GeoPoint::new(
                cfg.origin_lat + (ay + area_side_m + margin) * deg_per_m_lat,
                cfg.origin_lon + (ax - margin) * deg_per_m_lon,
            )?,
            GeoPoint::new(
                cfg.origin_lat + (ay + area_side_m + margin) * deg_per_m_lat,
                cfg.origin_lon + (ax + area_side_m + margin) * deg_per_m_lon,
            )?,
            GeoPoint::new(
                cfg.origin_lat + (ay - margin) * deg_per_m_lat,
                cfg.origin_lon + (ax + area_side_m + margin) * deg_per_m_lon,
            )?,
        ];
        areas.push(Area { id: area_id.clone(), ring });

        let z_area = Array1::from_vec(draw_vec(&mut rng, cfg.d_area, cfg.area_scale));
        truth.y_area.insert(area_id.clone(), w_area.dot(&z_area));
        truth.z_area.insert(area_id.clone(), z_area.to_vec());
        let area_term = mixing_area.dot(&z_area);

        for loc_idx in 0..cfg.locations_per_area {
            let loc_key = format!("a{area_idx:03}_l{loc_idx:03}");
            let lx = ax + (loc_idx % loc_side) as f64 * LOCATION_SPACING_M;
            let ly = ay + (loc_idx / loc_side) as f64 * LOCATION_SPACING_M;
            let pos = GeoPoint::new(
                cfg.origin_lat + ly * deg_per_m_lat,
                cfg.origin_lon + lx * deg_per_m_lon,
            )?;
            let z_loc = Array1::from_vec(draw_vec(&mut rng, cfg.d_static, cfg.static_scale));
            truth.z_static.insert(loc_key.clone(), z_loc.to_vec());
            let static_term = mixing_static.dot(&z_loc);
            let heading = headings[rng.random_range(0..headings.len())];

            for cap_idx in 0..cfg.captures_per_location {
                let id = format!("{loc_key}_c{cap_idx:02}");
                let z_dyn = Array1::from_vec(draw_vec(&mut rng, cfg.d_dyn, cfg.dyn_scale));
                let dyn_term = mixing_dyn.dot(&z_dyn);
                let eps =
                    Array1::from_vec(draw_vec(&mut rng, cfg.obs_dim, cfg.noise_scale));
                let x = &static_term + &area_term + &dyn_term + &eps;
                obs.row_mut(row).assign(&x);
                noise.row_mut(row).assign(&eps);
                truth.capture_score.insert(id.clone(), 5.0 + 1.5 * u_dyn.dot(&z_dyn) / u_norm);
                truth.z_dyn.insert(id.clone(), z_dyn.to_vec());
                location_of.insert(id.clone(), loc_key.clone());
                area_of.insert(id.clone(), area_id.clone());
                records.push(ImageRecord {
                    id,
                    pos,
                    heading_deg: heading,
                    capture_year: cfg.first_year + cap_idx as i32,
                    capture_month: 6,
                    city: "synthville".into(),
                    area_id: Some(area_id.clone()),
                });
                row += 1;
            }
        }
    }

    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let observations = IdMatrix::new(ids, obs)?;
    Ok(SynthCity {
        records,
        observations,
        truth,
        areas,
        mixing_static,
        mixing_area,
        mixing_dyn,
        noise,
        location_of,
        area_of,
    })
}

impl SynthCity {
    /// Location key (shared by all captures at one position) of a record.
    pub fn location_of(&self, record_id: &str) -> Option<&str> {
        self.location_of.get(record_id).map(|s| s.as_str())
    }

    /// Area id of a record.
    pub fn area_of(&self, record_id: &str) -> Option<&str> {
        self.area_of.get(record_id).map(|s| s.as_str())
    }

    /// Re-render the observation of `record_id` from its stored latents and
    /// noise, verifying it matches the stored matrix row exactly.
    pub fn render_observation(&self, record_id: &str) -> Result<Array1<f64>> {
        let slot = self
            .observations
            .position(record_id)
            .ok_or_else(|| Error::UnknownId(record_id.to_string()))?;
        let loc_key = &self.location_of[record_id];
        let area_key = &self.area_of[record_id];
        let z_loc = Array1::from_vec(self.truth.z_static[loc_key].clone());
        let z_area = Array1::from_vec(self.truth.z_area[area_key].clone());
        let z_dyn = Array1::from_vec(self.truth.z_dyn[record_id].clone());
        let rendered = self.mixing_static.dot(&z_loc)
            + self.mixing_area.dot(&z_area)
            + self.mixing_dyn.dot(&z_dyn)
            + self.noise.row(slot).to_owned();
        let stored = self.observations.data.row(slot);
        let max_diff = rendered
            .iter()
            .zip(stored.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if max_diff > 1e-12 {
            return Err(Error::Degenerate(format!(
                "mixing verification failed for `{record_id}`: max deviation {max_diff}"
            )));
        }
        Ok(rendered)
    }

    /// The polygon areas as an [`AreaSet`].
    pub fn area_set(&self) -> Result<AreaSet> {
        AreaSet::polygons(self.areas.clone())
    }

    /// Write metadata CSV, the observation matrix, the truth JSON, and the
    /// area polygons into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        save_metadata(&self.records, &dir.join("metadata.csv"))?;
        save_matrix(&self.observations, &dir.join("observations.bin"))?;
        std::fs::write(dir.join("truth.json"), serde_json::to_string_pretty(&self.truth)?)?;
        std::fs::write(dir.join("areas.json"), self.area_set()?.to_json()?)?;
        Ok(())
    }
}
