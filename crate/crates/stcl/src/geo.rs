//! Geospatial primitives: great-circle distance, a uniform grid index for
//! exact radius queries, and point-to-area assignment.
//!
//! Distances use the haversine formula on a sphere of radius
//! [`EARTH_RADIUS_M`]. Radius queries are exact: candidate buckets are
//! over-scanned and every candidate is refined with the true distance.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Meters per degree of latitude on the reference sphere.
pub const METERS_PER_DEG_LAT: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

/// Default grid cell size in degrees (~550 m at the equator), small enough
/// that a 100 m query touches only a handful of cells.
pub const DEFAULT_CELL_SIZE_DEG: f64 = 0.005;

/// A latitude/longitude position in degrees.
///
/// Latitude is validated to [-90, 90]; longitude is wrapped into [-180, 180).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::InvalidInput(format!("latitude {lat} out of [-90, 90]")));
        }
        if !lon.is_finite() {
            return Err(Error::InvalidInput(format!("longitude {lon} is not finite")));
        }
        Ok(Self { lat, lon: wrap_lon(lon) })
    }
}

/// Wrap a longitude into [-180, 180).
pub fn wrap_lon(lon: f64) -> f64 {
    let w = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if w == 180.0 {
        -180.0
    } else {
        w
    }
}

/// One street-view capture's metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub pos: GeoPoint,
    /// Camera heading in degrees, [0, 360).
    pub heading_deg: f64,
    pub capture_year: i32,
    /// Month in [1, 12].
    pub capture_month: u8,
    pub city: String,
    pub area_id: Option<String>,
}

impl ImageRecord {
    /// (year, month) capture time at the granularity pairs are compared at.
    pub fn capture_ym(&self) -> (i32, u8) {
        (self.capture_year, self.capture_month)
    }

    /// Heading rounded to integer degrees, wrapped to [0, 360).
    pub fn heading_rounded(&self) -> i64 {
        (self.heading_deg.round() as i64).rem_euclid(360)
    }
}

/// Great-circle distance in meters between two points (haversine).
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let lat_a = a.lat.to_radians();
    let lat_b = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat_a.cos() * lat_b.cos() * (dlon / 2.0).sin().powi(2);
    let h = h.clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_M * h.sqrt().atan2((1.0 - h).sqrt())
}

/// Uniform lat/lon grid over record positions supporting exact radius queries.
///
/// Buckets are keyed by integer cell coordinates; longitude cells wrap at the
/// antimeridian. The index is immutable after construction and safe to query
/// concurrently.
#[derive(Debug, Clone)]
pub struct GridIndex {
    cell_size_deg: f64,
    n_lon_cells: i64,
    n_lat_cells: i64,
    buckets: HashMap<(i64, i64), Vec<u32>>,
    ids: Vec<String>,
    positions: Vec<GeoPoint>,
}

impl GridIndex {
    /// Build an index over `records` with the given cell size.
    ///
    /// Rejects duplicate ids, naming the offending id.
    pub fn build(records: &[ImageRecord], cell_size_deg: f64) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidInput("cannot index an empty record list".into()));
        }
        if !(cell_size_deg > 0.0) || cell_size_deg > 90.0 {
            return Err(Error::InvalidInput(format!(
                "cell_size_deg {cell_size_deg} out of (0, 90]"
            )));
        }
        let n_lon_cells = (360.0 / cell_size_deg).ceil() as i64;
        let n_lat_cells = (180.0 / cell_size_deg).ceil() as i64;
        let mut index = Self {
            cell_size_deg,
            n_lon_cells,
            n_lat_cells,
            buckets: HashMap::new(),
            ids: Vec::with_capacity(records.len()),
            positions: Vec::with_capacity(records.len()),
        };
        let mut seen: HashMap<&str, ()> = HashMap::with_capacity(records.len());
        for rec in records {
            if seen.insert(&rec.id, ()).is_some() {
                return Err(Error::DuplicateId(rec.id.clone()));
            }
            let slot = index.ids.len() as u32;
            let cell = index.cell_of(rec.pos);
            index.buckets.entry(cell).or_default().push(slot);
            index.ids.push(rec.id.clone());
            index.positions.push(rec.pos);
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn cell_size_deg(&self) -> f64 {
        self.cell_size_deg
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    fn cell_of(&self, p: GeoPoint) -> (i64, i64) {
        let x = (((p.lon + 180.0) / self.cell_size_deg).floor() as i64).clamp(0, self.n_lon_cells - 1);
        let y = (((p.lat + 90.0) / self.cell_size_deg).floor() as i64).clamp(0, self.n_lat_cells - 1);
        (x, y)
    }

    /// Ids of all records within `radius_m` of `center`, sorted by distance
    /// then id. Exact: no false positives or negatives.
    pub fn radius_query(&self, center: GeoPoint, radius_m: f64) -> Result<Vec<String>> {
        Ok(self
            .radius_query_with_distance(center, radius_m)?
            .into_iter()
            .map(|(id, _)| id)
            .collect())
    }

    /// Like [`radius_query`](Self::radius_query) but also returns distances.
    pub fn radius_query_with_distance(
        &self,
        center: GeoPoint,
        radius_m: f64,
    ) -> Result<Vec<(String, f64)>> {
        if !(radius_m > 0.0) {
            return Err(Error::InvalidInput(format!("radius_m {radius_m} must be > 0")));
        }
        let mut hits: Vec<(String, f64)> = Vec::new();
        for slot in self.candidate_slots(center, radius_m) {
            let d = haversine_m(center, self.positions[slot as usize]);
            if d <= radius_m {
                hits.push((self.ids[slot as usize].clone(), d));
            }
        }
        hits.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        Ok(hits)
    }

    /// Candidate record slots from every cell intersecting a conservative
    /// bounding box around the query disc, with longitude wrap.
    fn candidate_slots(&self, center: GeoPoint, radius_m: f64) -> Vec<u32> {
        let ang = radius_m / EARTH_RADIUS_M;
        let dlat_deg = ang.to_degrees();
        let lat_min = (center.lat - dlat_deg).max(-90.0);
        let lat_max = (center.lat + dlat_deg).min(90.0);

        // Widest |cos(lat)| shrink inside the latitude band decides the
        // longitude half-width; a band touching a pole needs every cell.
        let extreme_lat = lat_min.abs().max(lat_max.abs());
        let touches_pole = center.lat - dlat_deg < -90.0 + 1e-12
            || center.lat + dlat_deg > 90.0 - 1e-12
            || extreme_lat >= 90.0 - 1e-9;
        let cos_min = extreme_lat.to_radians().cos();
        let all_lons = touches_pole || {
            let s = ang.sin() / cos_min.max(1e-12);
            s >= 1.0
        };

        let y_min = (((lat_min + 90.0) / self.cell_size_deg).floor() as i64 - 1).max(0);
        let y_max =
            (((lat_max + 90.0) / self.cell_size_deg).floor() as i64 + 1).min(self.n_lat_cells - 1);

        let mut xs: Vec<i64> = Vec::new();
        if all_lons {
            xs.extend(0..self.n_lon_cells);
        } else {
            let dlon_deg = (ang.sin() / cos_min.max(1e-12)).asin().to_degrees();
            let x_lo = ((center.lon - dlon_deg + 180.0) / self.cell_size_deg).floor() as i64 - 1;
            let x_hi = ((center.lon + dlon_deg + 180.0) / self.cell_size_deg).floor() as i64 + 1;
            if x_hi - x_lo + 1 >= self.n_lon_cells {
                xs.extend(0..self.n_lon_cells);
            } else {
                for raw in x_lo..=x_hi {
                    xs.push(raw.rem_euclid(self.n_lon_cells));
                }
            }
        }

        let mut out = Vec::new();
        for &x in &xs {
            for y in y_min..=y_max {
                if let Some(slots) = self.buckets.get(&(x, y)) {
                    out.extend_from_slice(slots);
                }
            }
        }
        out
    }
}

/// A set of named urban areas: explicit polygons, or buffer discs around
/// centers. In buffer mode without explicit centers, centers are derived
/// from the records being assigned (greedy lowest-id clustering).
#[derive(Debug, Clone)]
pub enum AreaSet {
    Polygons(Vec<Area>),
    Buffer { radius_m: f64, centers: Option<Vec<(String, GeoPoint)>> },
}

/// One polygon area: a closed, non-self-intersecting lat/lon vertex ring.
#[derive(Debug, Clone)]
pub struct Area {
    pub id: String,
    pub ring: Vec<GeoPoint>,
}

#[derive(Serialize, Deserialize)]
struct AreaSetJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    areas: Option<Vec<AreaJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    buffer_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    centers: Option<Vec<CenterJson>>,
}

#[derive(Serialize, Deserialize)]
struct AreaJson {
    id: String,
    ring: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct CenterJson {
    id: String,
    lat: f64,
    lon: f64,
}

impl AreaSet {
    /// Parse the JSON area format: `{"areas":[{"id":..,"ring":[[lat,lon],..]}]}`
    /// or `{"buffer_m":100.0}` with optional explicit `centers`.
    pub fn from_json(text: &str) -> Result<Self> {
        let parsed: AreaSetJson = serde_json::from_str(text)?;
        match (parsed.areas, parsed.buffer_m) {
            (Some(_), Some(_)) => Err(Error::InvalidInput(
                "area set cannot define both `areas` and `buffer_m`".into(),
            )),
            (Some(areas), None) => {
                let mut out = Vec::with_capacity(areas.len());
                for a in areas {
                    let ring = a
                        .ring
                        .iter()
                        .map(|v| GeoPoint::new(v[0], v[1]))
                        .collect::<Result<Vec<_>>>()
                        .map_err(|e| Error::MalformedArea { id: a.id.clone(), reason: e.to_string() })?;
                    let area = Area { id: a.id, ring };
                    validate_ring(&area)?;
                    out.push(area);
                }
                Ok(AreaSet::Polygons(out))
            }
            (None, Some(radius_m)) => {
                if !(radius_m > 0.0) {
                    return Err(Error::InvalidInput(format!("buffer_m {radius_m} must be > 0")));
                }
                let centers = match parsed.centers {
                    Some(cs) => Some(
                        cs.into_iter()
                            .map(|c| Ok((c.id, GeoPoint::new(c.lat, c.lon)?)))
                            .collect::<Result<Vec<_>>>()?,
                    ),
                    None => None,
                };
                Ok(AreaSet::Buffer { radius_m, centers })
            }
            (None, None) => Err(Error::InvalidInput(
                "area set must define either `areas` or `buffer_m`".into(),
            )),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = match self {
            AreaSet::Polygons(areas) => AreaSetJson {
                areas: Some(
                    areas
                        .iter()
                        .map(|a| AreaJson {
                            id: a.id.clone(),
                            ring: a.ring.iter().map(|p| [p.lat, p.lon]).collect(),
                        })
                        .collect(),
                ),
                buffer_m: None,
                centers: None,
            },
            AreaSet::Buffer { radius_m, centers } => AreaSetJson {
                areas: None,
                buffer_m: Some(*radius_m),
                centers: centers.as_ref().map(|cs| {
                    cs.iter()
                        .map(|(id, p)| CenterJson { id: id.clone(), lat: p.lat, lon: p.lon })
                        .collect()
                }),
            },
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn polygons(areas: Vec<Area>) -> Result<Self> {
        for a in &areas {
            validate_ring(a)?;
        }
        Ok(AreaSet::Polygons(areas))
    }
}

/// Ring sanity: at least 3 distinct vertices, closed (an explicit closing
/// vertex is tolerated and dropped), and no self-intersection.
fn validate_ring(area: &Area) -> Result<()> {
    let mut ring = area.ring.clone();
    if ring.len() >= 2 && ring.first() == ring.last() {
        ring.pop();
    }
    if ring.len() < 3 {
        return Err(Error::MalformedArea {
            id: area.id.clone(),
            reason: format!("ring has {} distinct vertices, need >= 3", ring.len()),
        });
    }
    for w in ring.windows(2) {
        if w[0] == w[1] {
            return Err(Error::MalformedArea {
                id: area.id.clone(),
                reason: "ring contains consecutive duplicate vertices".into(),
            });
        }
    }
    let n = ring.len();
    for i in 0..n {
        let a1 = ring[i];
        let a2 = ring[(i + 1) % n];
        for j in (i + 1)..n {
            // Adjacent edges share an endpoint; skip them (and the wrap pair).
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let b1 = ring[j];
            let b2 = ring[(j + 1) % n];
            if segments_properly_intersect(a1, a2, b1, b2) {
                return Err(Error::MalformedArea {
                    id: area.id.clone(),
                    reason: format!("edges {i} and {j} intersect"),
                });
            }
        }
    }
    Ok(())
}

fn cross(o: GeoPoint, a: GeoPoint, b: GeoPoint) -> f64 {
    (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon)
}

fn segments_properly_intersect(a1: GeoPoint, a2: GeoPoint, b1: GeoPoint, b2: GeoPoint) -> bool {
    let d1 = cross(a1, a2, b1);
    let d2 = cross(a1, a2, b2);
    let d3 = cross(b1, b2, a1);
    let d4 = cross(b1, b2, a2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    point_on_segment(b1, a1, a2)
        || point_on_segment(b2, a1, a2)
        || point_on_segment(a1, b1, b2)
        || point_on_segment(a2, b1, b2)
}

/// Whether `p` lies on segment [a, b] in the lat/lon plane.
fn point_on_segment(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> bool {
    let c = cross(a, b, p);
    let scale = (b.lon - a.lon).abs().max((b.lat - a.lat).abs()).max(1.0);
    if c.abs() > 1e-12 * scale * scale {
        return false;
    }
    let dot = (p.lon - a.lon) * (b.lon - a.lon) + (p.lat - a.lat) * (b.lat - a.lat);
    let len2 = (b.lon - a.lon).powi(2) + (b.lat - a.lat).powi(2);
    (-1e-12 * len2..=len2 * (1.0 + 1e-12)).contains(&dot)
}

/// Even-odd point-in-polygon in the lat/lon plane; boundary points count
/// as inside. Rings are treated as planar, which is adequate at the
/// block-group scales this toolkit targets.
pub fn point_in_ring(p: GeoPoint, ring: &[GeoPoint]) -> bool {
    let mut ring_v: Vec<GeoPoint> = ring.to_vec();
    if ring_v.len() >= 2 && ring_v.first() == ring_v.last() {
        ring_v.pop();
    }
    let n = ring_v.len();
    for i in 0..n {
        if point_on_segment(p, ring_v[i], ring_v[(i + 1) % n]) {
            return true;
        }
    }
    let mut inside = false;
    let (px, py) = (p.lon, p.lat);
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (ring_v[i].lon, ring_v[i].lat);
        let (xj, yj) = (ring_v[j].lon, ring_v[j].lat);
        if ((yi > py) != (yj > py)) && (px < (xj - xi) * (py - yi) / (yj - yi) + xi) {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Assign each record an `area_id` from `areas`; records matching no area
/// get `None`. Idempotent: the assignment depends only on positions.
///
/// Polygon mode tests even-odd containment (boundary inclusive), taking the
/// lexicographically smallest area id when areas overlap. Buffer mode with
/// explicit centers picks the nearest center within the radius. Implicit
/// buffer mode derives centers from the records themselves: scanning ids in
/// ascending order, each not-yet-covered record anchors a new buffer and
/// covers everything within the radius; derived area ids are `buf:<anchor id>`.
pub fn assign_area(records: &[ImageRecord], areas: &AreaSet) -> Result<Vec<ImageRecord>> {
    let mut out = records.to_vec();
    match areas {
        AreaSet::Polygons(polys) => {
            for a in polys {
                validate_ring(a)?;
            }
            let mut sorted: Vec<&Area> = polys.iter().collect();
            sorted.sort_by(|a, b| a.id.cmp(&b.id));
            for rec in &mut out {
                rec.area_id = sorted
                    .iter()
                    .find(|a| point_in_ring(rec.pos, &a.ring))
                    .map(|a| a.id.clone());
            }
        }
        AreaSet::Buffer { radius_m, centers: Some(centers) } => {
            for rec in &mut out {
                let mut best: Option<(f64, &str)> = None;
                for (cid, cpos) in centers {
                    let d = haversine_m(rec.pos, *cpos);
                    if d <= *radius_m {
                        let better = match best {
                            None => true,
                            Some((bd, bid)) => d < bd || (d == bd && cid.as_str() < bid),
                        };
                        if better {
                            best = Some((d, cid));
                        }
                    }
                }
                rec.area_id = best.map(|(_, cid)| cid.to_string());
            }
        }
        AreaSet::Buffer { radius_m, centers: None } => {
            let index = GridIndex::build(records, DEFAULT_CELL_SIZE_DEG)?;
            let mut order: Vec<usize> = (0..out.len()).collect();
            order.sort_by(|&a, &b| out[a].id.cmp(&out[b].id));
            let by_id: BTreeMap<String, usize> =
                out.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
            let mut assigned: Vec<Option<String>> = vec![None; out.len()];
            for &i in &order {
                if assigned[i].is_some() {
                    continue;
                }
                let label = format!("buf:{}", out[i].id);
                for hit in index.radius_query(out[i].pos, *radius_m)? {
                    let slot = by_id[&hit];
                    if assigned[slot].is_none() {
                        assigned[slot] = Some(label.clone());
                    }
                }
                assigned[i] = Some(label);
            }
            for (rec, a) in out.iter_mut().zip(assigned) {
                rec.area_id = a;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rec(id: &str, lat: f64, lon: f64) -> ImageRecord {
        ImageRecord {
            id: id.into(),
            pos: GeoPoint::new(lat, lon).unwrap(),
            heading_deg: 0.0,
            capture_year: 2020,
            capture_month: 6,
            city: "t".into(),
            area_id: None,
        }
    }

    fn brute_force_radius(records: &[ImageRecord], center: GeoPoint, radius_m: f64) -> Vec<String> {
        let mut hits: Vec<(String, f64)> = records
            .iter()
            .map(|r| (r.id.clone(), haversine_m(center, r.pos)))
            .filter(|(_, d)| *d <= radius_m)
            .collect();
        hits.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        hits.into_iter().map(|(id, _)| id).collect()
    }

    #[test]
    fn haversine_identity_is_zero() {
        let p = GeoPoint::new(10.0, 20.0).unwrap();
        assert_eq!(haversine_m(p, p), 0.0);
    }

    #[test]
    fn haversine_quarter_great_circle() {
        let a = GeoPoint::new(0.0, 0.0).unwrap();
        let b = GeoPoint::new(90.0, 0.0).unwrap();
        let expect = std::f64::consts::PI * EARTH_RADIUS_M / 2.0;
        assert!((haversine_m(a, b) - expect).abs() < 0.1);
        assert!((haversine_m(a, b) - 10_007_543.4).abs() < 0.1);
    }

    #[test]
    fn haversine_small_arc() {
        let a = GeoPoint::new(0.0, 0.0).unwrap();
        let b = GeoPoint::new(0.001, 0.0).unwrap();
        let expect = 0.001 * METERS_PER_DEG_LAT;
        assert!((haversine_m(a, b) - expect).abs() < 0.01);
        assert!((haversine_m(a, b) - 111.19).abs() < 0.01);
    }

    #[test]
    fn geopoint_bounds_and_wrap() {
        assert!(GeoPoint::new(90.5, 0.0).is_err());
        assert!(GeoPoint::new(-91.0, 0.0).is_err());
        assert_eq!(GeoPoint::new(0.0, 180.0).unwrap().lon, -180.0);
        assert_eq!(GeoPoint::new(0.0, 190.0).unwrap().lon, -170.0);
        assert_eq!(GeoPoint::new(0.0, -190.0).unwrap().lon, 170.0);
    }

    #[test]
    fn single_record_index() {
        let records = vec![rec("a", 1.0, 2.0)];
        let idx = GridIndex::build(&records, DEFAULT_CELL_SIZE_DEG).unwrap();
        assert_eq!(idx.len(), 1);
        assert_eq!(idx.bucket_count(), 1);
        let hits = idx.radius_query(records[0].pos, 1.0).unwrap();
        assert_eq!(hits, vec!["a".to_string()]);
    }

    #[test]
    fn duplicate_id_rejected() {
        let records = vec![rec("a", 1.0, 2.0), rec("a", 1.1, 2.0)];
        match GridIndex::build(&records, DEFAULT_CELL_SIZE_DEG) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "a"),
            other => panic!("expected DuplicateId, got {other:?}"),
        }
    }

    #[test]
    fn empty_result_when_radius_too_small() {
        let records = vec![rec("a", 0.0, 0.0), rec("b", 0.01, 0.0)];
        let idx = GridIndex::build(&records, DEFAULT_CELL_SIZE_DEG).unwrap();
        let probe = GeoPoint::new(0.005, 0.0).unwrap();
        assert!(idx.radius_query(probe, 10.0).unwrap().is_empty());
    }

    #[test]
    fn radius_query_matches_brute_force_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let records: Vec<ImageRecord> = (0..1000)
            .map(|i| {
                rec(
                    &format!("r{i:04}"),
                    rng.random_range(-0.05..0.05),
                    rng.random_range(-0.05..0.05),
                )
            })
            .collect();
        let idx = GridIndex::build(&records, DEFAULT_CELL_SIZE_DEG).unwrap();
        for _ in 0..100 {
            let center = GeoPoint::new(
                rng.random_range(-0.05..0.05),
                rng.random_range(-0.05..0.05),
            )
            .unwrap();
            let radius = rng.random_range(10.0..2000.0);
            assert_eq!(
                idx.radius_query(center, radius).unwrap(),
                brute_force_radius(&records, center, radius)
            );
        }
    }

    #[test]
    fn radius_query_across_antimeridian() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let records: Vec<ImageRecord> = (0..200)
            .map(|i| {
                let lon = if i % 2 == 0 {
                    179.99 + rng.random_range(0.0..0.01)
                } else {
                    -180.0 + rng.random_range(0.0..0.01)
                };
                rec(&format!("r{i:03}"), rng.random_range(-0.01..0.01), lon)
            })
            .collect();
        let idx = GridIndex::build(&records, DEFAULT_CELL_SIZE_DEG).unwrap();
        for probe_lon in [179.995, -179.995] {
            let center = GeoPoint::new(0.0, probe_lon).unwrap();
            for radius in [100.0, 500.0, 1500.0] {
                assert_eq!(
                    idx.radius_query(center, radius).unwrap(),
                    brute_force_radius(&records, center, radius),
                    "lon {probe_lon} radius {radius}"
                );
            }
        }
    }

    #[test]
    fn radius_query_near_pole() {
        let records: Vec<ImageRecord> = (0..36)
            .map(|i| rec(&format!("p{i:02}"), 89.9999, -180.0 + 10.0 * i as f64))
            .collect();
        let idx = GridIndex::build(&records, DEFAULT_CELL_SIZE_DEG).unwrap();
        let center = GeoPoint::new(89.9999, 0.0).unwrap();
        assert_eq!(
            idx.radius_query(center, 200.0).unwrap(),
            brute_force_radius(&records, center, 200.0)
        );
    }

    fn square(id: &str, lat0: f64, lon0: f64, side: f64) -> Area {
        Area {
            id: id.into(),
            ring: vec![
                GeoPoint::new(lat0, lon0).unwrap(),
                GeoPoint::new(lat0 + side, lon0).unwrap(),
                GeoPoint::new(lat0 + side, lon0 + side).unwrap(),
                GeoPoint::new(lat0, lon0 + side).unwrap(),
            ],
        }
    }

    #[test]
    fn centroid_inside_square() {
        let areas = AreaSet::polygons(vec![square("sq", 0.0, 0.0, 0.01)]).unwrap();
        let recs = vec![rec("a", 0.005, 0.005)];
        let out = assign_area(&recs, &areas).unwrap();
        assert_eq!(out[0].area_id.as_deref(), Some("sq"));
    }

    #[test]
    fn outside_all_areas_is_none() {
        let areas = AreaSet::polygons(vec![square("sq", 0.0, 0.0, 0.01)]).unwrap();
        let recs = vec![rec("a", 0.5, 0.5)];
        let out = assign_area(&recs, &areas).unwrap();
        assert_eq!(out[0].area_id, None);
    }

    #[test]
    fn boundary_point_counts_inside() {
        let areas = AreaSet::polygons(vec![square("sq", 0.0, 0.0, 0.01)]).unwrap();
        let recs = vec![rec("edge", 0.0, 0.005), rec("corner", 0.0, 0.0)];
        let out = assign_area(&recs, &areas).unwrap();
        assert_eq!(out[0].area_id.as_deref(), Some("sq"));
        assert_eq!(out[1].area_id.as_deref(), Some("sq"));
    }

    #[test]
    fn self_intersecting_ring_rejected() {
        let bowtie = Area {
            id: "bow".into(),
            ring: vec![
                GeoPoint::new(0.0, 0.0).unwrap(),
                GeoPoint::new(1.0, 1.0).unwrap(),
                GeoPoint::new(1.0, 0.0).unwrap(),
                GeoPoint::new(0.0, 1.0).unwrap(),
            ],
        };
        match AreaSet::polygons(vec![bowtie]) {
            Err(Error::MalformedArea { id, .. }) => assert_eq!(id, "bow"),
            other => panic!("expected MalformedArea, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_ring_rejected() {
        let line = Area {
            id: "line".into(),
            ring: vec![GeoPoint::new(0.0, 0.0).unwrap(), GeoPoint::new(1.0, 1.0).unwrap()],
        };
        assert!(AreaSet::polygons(vec![line]).is_err());
    }

    /// Winding-number containment, an independent check for convex rings.
    fn winding_inside(p: GeoPoint, ring: &[GeoPoint]) -> bool {
        let n = ring.len();
        let mut winding = 0i32;
        for i in 0..n {
            let a = ring[i];
            let b = ring[(i + 1) % n];
            if a.lat <= p.lat {
                if b.lat > p.lat && cross(a, b, p) > 0.0 {
                    winding += 1;
                }
            } else if b.lat <= p.lat && cross(a, b, p) < 0.0 {
                winding -= 1;
            }
        }
        winding != 0
    }

    #[test]
    fn polygon_assignment_matches_winding_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // Random convex polygons: points on a circle, sorted by angle.
        let mut areas = Vec::new();
        for a in 0..10 {
            let c_lat = rng.random_range(-5.0..5.0);
            let c_lon = rng.random_range(-5.0..5.0);
            let r = rng.random_range(0.2..0.8);
            let k = rng.random_range(3..8usize);
            let mut angles: Vec<f64> =
                (0..k).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
            angles.sort_by(|x, y| x.partial_cmp(y).unwrap());
            if angles.windows(2).any(|w| (w[1] - w[0]).abs() < 1e-3) {
                continue;
            }
            let ring: Vec<GeoPoint> = angles
                .iter()
                .map(|t| GeoPoint::new(c_lat + r * t.sin(), c_lon + r * t.cos()).unwrap())
                .collect();
            areas.push(Area { id: format!("a{a}"), ring });
        }
        let set = AreaSet::polygons(areas.clone()).unwrap();
        let recs: Vec<ImageRecord> = (0..200)
            .map(|i| {
                rec(&format!("p{i:03}"), rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0))
            })
            .collect();
        let out = assign_area(&recs, &set).unwrap();
        let mut sorted: Vec<&Area> = areas.iter().collect();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));
        for (r, o) in recs.iter().zip(&out) {
            let expect = sorted.iter().find(|a| winding_inside(r.pos, &a.ring)).map(|a| a.id.clone());
            assert_eq!(o.area_id, expect, "record {}", r.id);
        }
    }

    #[test]
    fn assign_area_idempotent() {
        let areas = AreaSet::polygons(vec![square("sq", 0.0, 0.0, 0.01)]).unwrap();
        let recs = vec![rec("a", 0.005, 0.005), rec("b", 0.5, 0.5)];
        let once = assign_area(&recs, &areas).unwrap();
        let twice = assign_area(&once, &areas).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn buffer_mode_explicit_centers() {
        let set = AreaSet::Buffer {
            radius_m: 100.0,
            centers: Some(vec![
                ("c1".into(), GeoPoint::new(0.0, 0.0).unwrap()),
                ("c2".into(), GeoPoint::new(0.01, 0.0).unwrap()),
            ]),
        };
        let recs = vec![rec("a", 0.0001, 0.0), rec("b", 0.0099, 0.0), rec("c", 0.5, 0.5)];
        let out = assign_area(&recs, &set).unwrap();
        assert_eq!(out[0].area_id.as_deref(), Some("c1"));
        assert_eq!(out[1].area_id.as_deref(), Some("c2"));
        assert_eq!(out[2].area_id, None);
    }

    #[test]
    fn buffer_mode_implicit_clusters_by_lowest_id() {
        // Two tight clusters 1 km apart; anchors are a0 and b0.
        let recs = vec![
            rec("a0", 0.0, 0.0),
            rec("a1", 0.00002, 0.0),
            rec("b0", 0.01, 0.0),
            rec("b1", 0.01002, 0.0),
        ];
        let set = AreaSet::Buffer { radius_m: 100.0, centers: None };
        let out = assign_area(&recs, &set).unwrap();
        assert_eq!(out[0].area_id.as_deref(), Some("buf:a0"));
        assert_eq!(out[1].area_id.as_deref(), Some("buf:a0"));
        assert_eq!(out[2].area_id.as_deref(), Some("buf:b0"));
        assert_eq!(out[3].area_id.as_deref(), Some("buf:b0"));
    }

    #[test]
    fn areaset_json_round_trip() {
        let set = AreaSet::polygons(vec![square("sq", 0.0, 0.0, 0.01)]).unwrap();
        let text = set.to_json().unwrap();
        match AreaSet::from_json(&text).unwrap() {
            AreaSet::Polygons(a) => {
                assert_eq!(a.len(), 1);
                assert_eq!(a[0].id, "sq");
            }
            _ => panic!("expected polygons"),
        }
        match AreaSet::from_json(r#"{"buffer_m":100}"#).unwrap() {
            AreaSet::Buffer { radius_m, centers } => {
                assert_eq!(radius_m, 100.0);
                assert!(centers.is_none());
            }
            _ => panic!("expected buffer"),
        }
    }
}
