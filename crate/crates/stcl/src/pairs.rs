//! Positive-pair mining: self, temporal, and spatial manifests.
//!
//! Temporal positives are captures within `max_dist_m` (default 5 m) of each
//! other, with the same shooting angle and distinct (year, month). Spatial
//! positives are two records drawn from one urban area, with no heading
//! constraint. Self positives pair a record with itself; the two views are
//! produced by augmentation at training time.
//!
//! Mining is reproducible: every sampling group (a location cluster or an
//! area) draws from its own RNG stream derived from the manifest seed and
//! the group key, so parallel mining and re-runs produce identical
//! manifests. Groups are emitted in ascending key order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geo::{assign_area, haversine_m, AreaSet, GridIndex, ImageRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairType {
    #[serde(rename = "self")]
    SelfPair,
    Temporal,
    Spatial,
}

impl fmt::Display for PairType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairType::SelfPair => write!(f, "self"),
            PairType::Temporal => write!(f, "temporal"),
            PairType::Spatial => write!(f, "spatial"),
        }
    }
}

impl std::str::FromStr for PairType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "self" => Ok(PairType::SelfPair),
            "temporal" => Ok(PairType::Temporal),
            "spatial" => Ok(PairType::Spatial),
            other => Err(Error::Format(format!("unknown pair type `{other}`"))),
        }
    }
}

/// One positive pair with the provenance fields the manifest CSV carries.
#[derive(Debug, Clone, PartialEq)]
pub struct PosPair {
    pub pair_type: PairType,
    pub id_a: String,
    pub id_b: String,
    pub dist_m: f64,
    pub year_a: i32,
    pub year_b: i32,
    pub heading_a: f64,
    pub heading_b: f64,
}

impl PosPair {
    /// Whether the two headings agree after integer rounding, within
    /// `tol_deg` of circular distance.
    pub fn same_heading(&self, tol_deg: f64) -> bool {
        circular_heading_distance(self.heading_a, self.heading_b) <= tol_deg
    }
}

/// Circular distance between two headings after rounding to integer degrees.
pub fn circular_heading_distance(a_deg: f64, b_deg: f64) -> f64 {
    let a = (a_deg.round() as i64).rem_euclid(360);
    let b = (b_deg.round() as i64).rem_euclid(360);
    let d = (a - b).rem_euclid(360);
    d.min(360 - d) as f64
}

/// Echo of the thresholds a manifest was mined with.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintEcho {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_dist_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heading_tol_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs_per_location: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs_per_area: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_year_gap: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_count: Option<usize>,
}

/// Groups seen and groups that emitted nothing (too few distinct captures,
/// under-populated areas, or every candidate filtered out).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningSummary {
    pub groups_total: usize,
    pub groups_skipped: usize,
}

/// An ordered list of positive pairs plus the provenance needed to
/// reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct PairManifest {
    pub pairs: Vec<PosPair>,
    pub seed: u64,
    pub source_dataset: String,
    pub constraints: ConstraintEcho,
    pub summary: MiningSummary,
}

impl PairManifest {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Reject duplicate unordered pairs of the same type.
    pub fn validate_unique(&self) -> Result<()> {
        let mut seen: HashSet<(PairType, &str, &str)> = HashSet::with_capacity(self.pairs.len());
        for p in &self.pairs {
            let key = if p.id_a <= p.id_b {
                (p.pair_type, p.id_a.as_str(), p.id_b.as_str())
            } else {
                (p.pair_type, p.id_b.as_str(), p.id_a.as_str())
            };
            if !seen.insert(key) {
                return Err(Error::InvalidInput(format!(
                    "duplicate {} pair ({}, {})",
                    p.pair_type, p.id_a, p.id_b
                )));
            }
        }
        Ok(())
    }
}

/// Derive the RNG stream for one sampling group from the manifest seed.
/// Part of the manifest reproducibility contract: any reimplementation that
/// enumerates the same candidates and draws from this stream reproduces the
/// manifest exactly.
pub fn group_rng(seed: u64, kind: &str, group_key: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(kind.as_bytes());
    hasher.update([0u8]);
    hasher.update(group_key.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Sample `amount` indices without replacement, in draw order.
fn sample_indices(rng: &mut ChaCha8Rng, len: usize, amount: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, len, amount).into_vec()
}

fn make_pair(pair_type: PairType, a: &ImageRecord, b: &ImageRecord) -> PosPair {
    PosPair {
        pair_type,
        id_a: a.id.clone(),
        id_b: b.id.clone(),
        dist_m: haversine_m(a.pos, b.pos),
        year_a: a.capture_year,
        year_b: b.capture_year,
        heading_a: a.heading_deg,
        heading_b: b.heading_deg,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TemporalMineParams {
    pub max_dist_m: f64,
    pub pairs_per_location: usize,
    pub heading_tol_deg: f64,
}

impl Default for TemporalMineParams {
    fn default() -> Self {
        Self { max_dist_m: 5.0, pairs_per_location: 1, heading_tol_deg: 0.0 }
    }
}

/// Location clusters: scanning ids in ascending order, each unassigned
/// record anchors a cluster holding every unassigned record within
/// `max_dist_m` of it.
pub fn cluster_locations(
    records: &[ImageRecord],
    index: &GridIndex,
    max_dist_m: f64,
) -> Result<Vec<Vec<usize>>> {
    let by_id: HashMap<&str, usize> =
        records.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].id.cmp(&records[b].id));
    let mut assigned = vec![false; records.len()];
    let mut clusters = Vec::new();
    for &i in &order {
        if assigned[i] {
            continue;
        }
        let mut members = Vec::new();
        for hit in index.radius_query(records[i].pos, max_dist_m)? {
            let slot = *by_id
                .get(hit.as_str())
                .ok_or_else(|| Error::UnknownId(hit.clone()))?;
            if !assigned[slot] {
                assigned[slot] = true;
                members.push(slot);
            }
        }
        if !assigned[i] {
            assigned[i] = true;
            members.push(i);
        }
        members.sort_by(|&a, &b| records[a].id.cmp(&records[b].id));
        clusters.push(members);
    }
    Ok(clusters)
}

/// Split a cluster into shooting-angle groups: members sorted by rounded
/// heading then id; each unclaimed member anchors a group collecting every
/// member within `tol_deg` circular distance of its rounded heading.
fn heading_groups(records: &[ImageRecord], cluster: &[usize], tol_deg: f64) -> Vec<Vec<usize>> {
    let mut members: Vec<usize> = cluster.to_vec();
    members.sort_by(|&a, &b| {
        records[a]
            .heading_rounded()
            .cmp(&records[b].heading_rounded())
            .then_with(|| records[a].id.cmp(&records[b].id))
    });
    let mut taken = vec![false; members.len()];
    let mut groups = Vec::new();
    for i in 0..members.len() {
        if taken[i] {
            continue;
        }
        let anchor = records[members[i]].heading_deg;
        let mut group = Vec::new();
        for (j, &slot) in members.iter().enumerate() {
            if !taken[j] && circular_heading_distance(records[slot].heading_deg, anchor) <= tol_deg
            {
                taken[j] = true;
                group.push(slot);
            }
        }
        group.sort_by(|&a, &b| records[a].id.cmp(&records[b].id));
        groups.push(group);
    }
    groups
}

/// Mine temporal positives: same location (within `max_dist_m`), same
/// shooting angle, distinct (year, month). Per qualifying group,
/// `pairs_per_location` pairs are drawn uniformly without replacement from
/// the valid combinations (all of them when fewer exist).
pub fn mine_temporal_pairs(
    records: &[ImageRecord],
    index: &GridIndex,
    params: &TemporalMineParams,
    seed: u64,
    source_dataset: &str,
) -> Result<PairManifest> {
    let clusters = cluster_locations(records, index, params.max_dist_m)?;

    // (group key, member slots); key = anchor id + heading anchor.
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for cluster in &clusters {
        for group in heading_groups(records, cluster, params.heading_tol_deg) {
            let anchor = group[0];
            let key = format!("{}|{}", records[anchor].id, records[anchor].heading_rounded());
            groups.push((key, group));
        }
    }
    groups.sort_by(|a, b| a.0.cmp(&b.0));

    let per_group: Vec<Vec<PosPair>> = groups
        .par_iter()
        .map(|(key, members)| {
            let mut candidates = Vec::new();
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    let (ra, rb) = (&records[a], &records[b]);
                    if ra.capture_ym() != rb.capture_ym()
                        && haversine_m(ra.pos, rb.pos) <= params.max_dist_m
                    {
                        candidates.push(make_pair(PairType::Temporal, ra, rb));
                    }
                }
            }
            if candidates.is_empty() {
                return Vec::new();
            }
            let mut rng = group_rng(seed, "temporal", key);
            let take = params.pairs_per_location.min(candidates.len());
            sample_indices(&mut rng, candidates.len(), take)
                .into_iter()
                .map(|i| candidates[i].clone())
                .collect()
        })
        .collect();

    let mut pairs = Vec::new();
    let mut skipped = 0usize;
    for chosen in per_group {
        if chosen.is_empty() {
            skipped += 1;
        }
        pairs.extend(chosen);
    }
    let manifest = PairManifest {
        pairs,
        seed,
        source_dataset: source_dataset.to_string(),
        constraints: ConstraintEcho {
            max_dist_m: Some(params.max_dist_m),
            heading_tol_deg: Some(params.heading_tol_deg),
            pairs_per_location: Some(params.pairs_per_location),
            ..Default::default()
        },
        summary: MiningSummary { groups_total: groups.len(), groups_skipped: skipped },
    };
    manifest.validate_unique()?;
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SpatialMineParams {
    pub pairs_per_area: usize,
    pub max_year_gap: Option<i32>,
}

impl SpatialMineParams {
    pub fn new(pairs_per_area: usize) -> Self {
        Self { pairs_per_area, max_year_gap: None }
    }
}

/// Mine spatial positives: two records from one urban area, headings
/// unconstrained. With `areas` given, membership is (re)derived via
/// [`assign_area`]; otherwise the records' own `area_id` fields are used.
pub fn mine_spatial_pairs(
    records: &[ImageRecord],
    areas: Option<&AreaSet>,
    params: &SpatialMineParams,
    seed: u64,
    source_dataset: &str,
) -> Result<PairManifest> {
    let assigned_storage;
    let assigned: &[ImageRecord] = match areas {
        Some(set) => {
            assigned_storage = assign_area(records, set)?;
            &assigned_storage
        }
        None => records,
    };
    let mut by_area: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in assigned.iter().enumerate() {
        if let Some(area) = &r.area_id {
            by_area.entry(area.as_str()).or_default().push(i);
        }
    }
    for members in by_area.values_mut() {
        members.sort_by(|&a, &b| assigned[a].id.cmp(&assigned[b].id));
    }

    let groups: Vec<(&str, &Vec<usize>)> = by_area.iter().map(|(k, v)| (*k, v)).collect();
    let per_group: Vec<Vec<PosPair>> = groups
        .par_iter()
        .map(|(area, members)| {
            let mut candidates = Vec::new();
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    let (ra, rb) = (&assigned[a], &assigned[b]);
                    if let Some(gap) = params.max_year_gap {
                        if (ra.capture_year - rb.capture_year).abs() > gap {
                            continue;
                        }
                    }
                    candidates.push(make_pair(PairType::Spatial, ra, rb));
                }
            }
            if candidates.is_empty() {
                return Vec::new();
            }
            let mut rng = group_rng(seed, "spatial", area);
            let take = params.pairs_per_area.min(candidates.len());
            sample_indices(&mut rng, candidates.len(), take)
                .into_iter()
                .map(|i| candidates[i].clone())
                .collect()
        })
        .collect();

    let mut pairs = Vec::new();
    let mut skipped = 0usize;
    for chosen in per_group {
        if chosen.is_empty() {
            skipped += 1;
        }
        pairs.extend(chosen);
    }
    let manifest = PairManifest {
        pairs,
        seed,
        source_dataset: source_dataset.to_string(),
        constraints: ConstraintEcho {
            pairs_per_area: Some(params.pairs_per_area),
            max_year_gap: params.max_year_gap,
            ..Default::default()
        },
        summary: MiningSummary { groups_total: by_area.len(), groups_skipped: skipped },
    };
    manifest.validate_unique()?;
    Ok(manifest)
}

/// Mine self positives: a seeded uniform sample of `count` records, each
/// paired with itself. Augmentation creates the two views downstream.
pub fn mine_self_pairs(
    records: &[ImageRecord],
    count: usize,
    seed: u64,
    source_dataset: &str,
) -> Result<PairManifest> {
    if count > records.len() {
        return Err(Error::InvalidInput(format!(
            "self-pair count {count} exceeds dataset size {}",
            records.len()
        )));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].id.cmp(&records[b].id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = sample_indices(&mut rng, order.len(), count)
        .into_iter()
        .map(|i| {
            let r = &records[order[i]];
            make_pair(PairType::SelfPair, r, r)
        })
        .collect();
    let manifest = PairManifest {
        pairs,
        seed,
        source_dataset: source_dataset.to_string(),
        constraints: ConstraintEcho { count: Some(count), ..Default::default() },
        summary: MiningSummary { groups_total: records.len(), groups_skipped: 0 },
    };
    manifest.validate_unique()?;
    Ok(manifest)
}

/// Uniform seeded subsample of a manifest without replacement. Constraint
/// echoes are preserved; `target_count` records the subsample size.
pub fn subsample_pairs(
    manifest: &PairManifest,
    target_count: usize,
    seed: u64,
) -> Result<PairManifest> {
    if target_count > manifest.pairs.len() {
        return Err(Error::InvalidInput(format!(
            "target {target_count} exceeds manifest size {}",
            manifest.pairs.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = sample_indices(&mut rng, manifest.pairs.len(), target_count)
        .into_iter()
        .map(|i| manifest.pairs[i].clone())
        .collect();
    Ok(PairManifest {
        pairs,
        seed,
        source_dataset: manifest.source_dataset.clone(),
        constraints: ConstraintEcho {
            target_count: Some(target_count),
            ..manifest.constraints.clone()
        },
        summary: manifest.summary,
    })
}

/// One constraint violation found by [`audit_manifest`].
#[derive(Debug, Clone, Serialize)]
pub struct AuditViolation {
    pub pair_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub pairs_checked: usize,
    pub violations: Vec<AuditViolation>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-check every pair against the raw records, not trusting the miner:
/// temporal pairs must be within the echoed distance with matching heading
/// and distinct (year, month); spatial pairs must share an area; self pairs
/// must be reflexive. Also flags duplicate unordered pairs.
pub fn audit_manifest(manifest: &PairManifest, records: &[ImageRecord]) -> AuditReport {
    let by_id: HashMap<&str, &ImageRecord> =
        records.iter().map(|r| (r.id.as_str(), r)).collect();
    let max_dist = manifest.constraints.max_dist_m.unwrap_or(5.0);
    let tol = manifest.constraints.heading_tol_deg.unwrap_or(0.0);
    let mut violations = Vec::new();
    let mut seen: HashSet<(PairType, &str, &str)> = HashSet::new();
    for (i, p) in manifest.pairs.iter().enumerate() {
        let key = if p.id_a <= p.id_b {
            (p.pair_type, p.id_a.as_str(), p.id_b.as_str())
        } else {
            (p.pair_type, p.id_b.as_str(), p.id_a.as_str())
        };
        if !seen.insert(key) {
            violations.push(AuditViolation {
                pair_index: i,
                reason: format!("duplicate pair ({}, {})", p.id_a, p.id_b),
            });
        }
        let (ra, rb) = match (by_id.get(p.id_a.as_str()), by_id.get(p.id_b.as_str())) {
            (Some(a), Some(b)) => (*a, *b),
            _ => {
                violations.push(AuditViolation {
                    pair_index: i,
                    reason: format!("pair references unknown record ({}, {})", p.id_a, p.id_b),
                });
                continue;
            }
        };
        match p.pair_type {
            PairType::SelfPair => {
                if p.id_a != p.id_b {
                    violations.push(AuditViolation {
                        pair_index: i,
                        reason: format!("self pair ids differ: {} vs {}", p.id_a, p.id_b),
                    });
                }
            }
            PairType::Temporal => {
                let d = haversine_m(ra.pos, rb.pos);
                if d > max_dist {
                    violations.push(AuditViolation {
                        pair_index: i,
                        reason: format!("temporal pair {d:.3} m apart exceeds {max_dist} m"),
                    });
                }
                if circular_heading_distance(ra.heading_deg, rb.heading_deg) > tol {
                    violations.push(AuditViolation {
                        pair_index: i,
                        reason: format!(
                            "temporal pair headings differ: {} vs {}",
                            ra.heading_deg, rb.heading_deg
                        ),
                    });
                }
                if ra.capture_ym() == rb.capture_ym() {
                    violations.push(AuditViolation {
                        pair_index: i,
                        reason: format!("temporal pair shares capture time {:?}", ra.capture_ym()),
                    });
                }
            }
            PairType::Spatial => {
                match (&ra.area_id, &rb.area_id) {
                    (Some(a), Some(b)) if a == b => {}
                    _ => violations.push(AuditViolation {
                        pair_index: i,
                        reason: format!(
                            "spatial pair areas differ or are missing: {:?} vs {:?}",
                            ra.area_id, rb.area_id
                        ),
                    }),
                }
                if let Some(gap) = manifest.constraints.max_year_gap {
                    if (ra.capture_year - rb.capture_year).abs() > gap {
                        violations.push(AuditViolation {
                            pair_index: i,
                            reason: format!(
                                "spatial pair year gap {} exceeds {gap}",
                                (ra.capture_year - rb.capture_year).abs()
                            ),
                        });
                    }
                }
            }
        }
    }
    AuditReport { pairs_checked: manifest.pairs.len(), violations }
}

pub const MANIFEST_HEADER: [&str; 8] =
    ["pair_type", "id_a", "id_b", "dist_m", "year_a", "year_b", "heading_a", "heading_b"];

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(Serialize, Deserialize)]
struct ManifestSidecar {
    seed: u64,
    source_dataset: String,
    constraints: ConstraintEcho,
    summary: MiningSummary,
}

/// Write the manifest CSV plus a `<path>.json` sidecar with seed and
/// constraint echo.
pub fn save_manifest(manifest: &PairManifest, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(MANIFEST_HEADER)?;
    for p in &manifest.pairs {
        w.write_record([
            p.pair_type.to_string(),
            p.id_a.clone(),
            p.id_b.clone(),
            p.dist_m.to_string(),
            p.year_a.to_string(),
            p.year_b.to_string(),
            p.heading_a.to_string(),
            p.heading_b.to_string(),
        ])?;
    }
    w.flush()?;
    let sidecar = ManifestSidecar {
        seed: manifest.seed,
        source_dataset: manifest.source_dataset.clone(),
        constraints: manifest.constraints.clone(),
        summary: manifest.summary,
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<PairManifest> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != MANIFEST_HEADER {
        return Err(Error::Format(format!(
            "bad manifest header: expected {:?}, got {:?}",
            MANIFEST_HEADER.join(","),
            got.join(",")
        )));
    }
    let mut pairs = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = i + 2;
        let get = |idx: usize| -> Result<&str> {
            row.get(idx).ok_or_else(|| Error::Format(format!("manifest row {row_no}: short row")))
        };
        let numf = |idx: usize| -> Result<f64> {
            get(idx)?.parse().map_err(|_| {
                Error::Format(format!("manifest row {row_no}: bad number `{}`", row.get(idx).unwrap_or("")))
            })
        };
        let numi = |idx: usize| -> Result<i32> {
            get(idx)?.parse().map_err(|_| {
                Error::Format(format!("manifest row {row_no}: bad integer `{}`", row.get(idx).unwrap_or("")))
            })
        };
        pairs.push(PosPair {
            pair_type: get(0)?.parse()?,
            id_a: get(1)?.to_string(),
            id_b: get(2)?.to_string(),
            dist_m: numf(3)?,
            year_a: numi(4)?,
            year_b: numi(5)?,
            heading_a: numf(6)?,
            heading_b: numf(7)?,
        });
    }
    let sidecar_file = sidecar_path(path);
    let sidecar: ManifestSidecar = serde_json::from_str(
        &std::fs::read_to_string(&sidecar_file)
            .map_err(|e| Error::Format(format!("{}: {}", sidecar_file.display(), e)))?,
    )?;
    Ok(PairManifest {
        pairs,
        seed: sidecar.seed,
        source_dataset: sidecar.source_dataset,
        constraints: sidecar.constraints,
        summary: sidecar.summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{GeoPoint, DEFAULT_CELL_SIZE_DEG};

    fn rec(id: &str, lat: f64, lon: f64, heading: f64, year: i32, month: u8) -> ImageRecord {
        ImageRecord {
            id: id.into(),
            pos: GeoPoint::new(lat, lon).unwrap(),
            heading_deg: heading,
            capture_year: year,
            capture_month: month,
            city: "t".into(),
            area_id: None,
        }
    }

    fn index(records: &[ImageRecord]) -> GridIndex {
        GridIndex::build(records, DEFAULT_CELL_SIZE_DEG).unwrap()
    }

    #[test]
    fn two_captures_same_point_one_pair() {
        let records =
            vec![rec("a", 0.0, 0.0, 90.0, 2018, 6), rec("b", 0.0, 0.0, 90.0, 2020, 6)];
        let m = mine_temporal_pairs(
            &records,
            &index(&records),
            &TemporalMineParams::default(),
            7,
            "t",
        )
        .unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].id_a, "a");
        assert_eq!(m.pairs[0].id_b, "b");
        assert!(m.pairs[0].same_heading(0.0));
    }

    #[test]
    fn six_meters_apart_no_pair() {
        // ~6 m north.
        let records =
            vec![rec("a", 0.0, 0.0, 90.0, 2018, 6), rec("b", 0.000054, 0.0, 90.0, 2020, 6)];
        let m = mine_temporal_pairs(
            &records,
            &index(&records),
            &TemporalMineParams::default(),
            7,
            "t",
        )
        .unwrap();
        assert!(m.pairs.is_empty());
        assert!(m.summary.groups_skipped >= 1);
    }

    #[test]
    fn same_year_month_no_pair() {
        let records =
            vec![rec("a", 0.0, 0.0, 90.0, 2018, 6), rec("b", 0.0, 0.0, 90.0, 2018, 6)];
        let m = mine_temporal_pairs(
            &records,
            &index(&records),
            &TemporalMineParams::default(),
            7,
            "t",
        )
        .unwrap();
        assert!(m.pairs.is_empty());
    }

    #[test]
    fn different_heading_no_pair() {
        let records =
            vec![rec("a", 0.0, 0.0, 90.0, 2018, 6), rec("b", 0.0, 0.0, 180.0, 2020, 6)];
        let m = mine_temporal_pairs(
            &records,
            &index(&records),
            &TemporalMineParams::default(),
            7,
            "t",
        )
        .unwrap();
        assert!(m.pairs.is_empty());
    }

    #[test]
    fn heading_tolerance_admits_near_angles() {
        let records =
            vec![rec("a", 0.0, 0.0, 89.0, 2018, 6), rec("b", 0.0, 0.0, 91.0, 2020, 6)];
        let strict = TemporalMineParams::default();
        let loose = TemporalMineParams { heading_tol_deg: 2.0, ..Default::default() };
        assert!(mine_temporal_pairs(&records, &index(&records), &strict, 7, "t")
            .unwrap()
            .pairs
            .is_empty());
        assert_eq!(
            mine_temporal_pairs(&records, &index(&records), &loose, 7, "t").unwrap().pairs.len(),
            1
        );
    }

    /// Brute-force reimplementation: O(n^2) clustering and candidate
    /// enumeration with no grid index, then the same seeded draw.
    fn brute_force_temporal(
        records: &[ImageRecord],
        params: &TemporalMineParams,
        seed: u64,
    ) -> Vec<PosPair> {
        let mut order: Vec<usize> = (0..records.len()).collect();
        order.sort_by(|&a, &b| records[a].id.cmp(&records[b].id));
        let mut assigned = vec![false; records.len()];
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        for &i in &order {
            if assigned[i] {
                continue;
            }
            let mut members: Vec<usize> = order
                .iter()
                .copied()
                .filter(|&j| {
                    !assigned[j] && haversine_m(records[i].pos, records[j].pos) <= params.max_dist_m
                })
                .collect();
            for &j in &members {
                assigned[j] = true;
            }
            members.sort_by(|&a, &b| records[a].id.cmp(&records[b].id));
            clusters.push(members);
        }
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        for cluster in &clusters {
            for group in heading_groups(records, cluster, params.heading_tol_deg) {
                let anchor = group[0];
                let key =
                    format!("{}|{}", records[anchor].id, records[anchor].heading_rounded());
                groups.push((key, group));
            }
        }
        groups.sort_by(|a, b| a.0.cmp(&b.0));
        let mut pairs = Vec::new();
        for (key, members) in &groups {
            let mut candidates = Vec::new();
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    let (ra, rb) = (&records[a], &records[b]);
                    if ra.capture_ym() != rb.capture_ym()
                        && haversine_m(ra.pos, rb.pos) <= params.max_dist_m
                    {
                        candidates.push(make_pair(PairType::Temporal, ra, rb));
                    }
                }
            }
            if candidates.is_empty() {
                continue;
            }
            let mut rng = group_rng(seed, "temporal", key);
            let take = params.pairs_per_location.min(candidates.len());
            for i in sample_indices(&mut rng, candidates.len(), take) {
                pairs.push(candidates[i].clone());
            }
        }
        pairs
    }

    #[test]
    fn temporal_matches_brute_force_on_cluster_set() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        // 10 well-separated locations (~1 km apart), 5 captures each with
        // jitter < 2 m and a couple of heading values.
        let mut records = Vec::new();
        for loc in 0..10 {
            let lat = 0.01 * loc as f64;
            for cap in 0..5 {
                let jitter = rng.random_range(-0.00001..0.00001);
                records.push(rec(
                    &format!("r{loc:02}{cap}"),
                    lat + jitter,
                    0.0,
                    if cap % 2 == 0 { 90.0 } else { 270.0 },
                    2015 + cap as i32,
                    6,
                ));
            }
        }
        let params = TemporalMineParams { pairs_per_location: 2, ..Default::default() };
        let mined =
            mine_temporal_pairs(&records, &index(&records), &params, 99, "t").unwrap();
        let brute = brute_force_temporal(&records, &params, 99);
        assert_eq!(mined.pairs, brute);
        assert!(!mined.pairs.is_empty());
        assert!(audit_manifest(&mined, &records).passed());
    }

    fn area_rec(id: &str, area: &str, lat: f64, year: i32) -> ImageRecord {
        ImageRecord {
            id: id.into(),
            pos: GeoPoint::new(lat, 0.0).unwrap(),
            heading_deg: 0.0,
            capture_year: year,
            capture_month: 6,
            city: "t".into(),
            area_id: Some(area.into()),
        }
    }

    #[test]
    fn area_with_two_records_yields_that_pair() {
        let records = vec![area_rec("a", "z1", 0.0, 2018), area_rec("b", "z1", 0.0001, 2019)];
        let m =
            mine_spatial_pairs(&records, None, &SpatialMineParams::new(1), 5, "t").unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!((m.pairs[0].id_a.as_str(), m.pairs[0].id_b.as_str()), ("a", "b"));
    }

    #[test]
    fn area_with_one_record_skipped() {
        let records = vec![area_rec("a", "z1", 0.0, 2018)];
        let m =
            mine_spatial_pairs(&records, None, &SpatialMineParams::new(1), 5, "t").unwrap();
        assert!(m.pairs.is_empty());
        assert_eq!(m.summary.groups_skipped, 1);
    }

    #[test]
    fn year_gap_filter_applies() {
        let records = vec![area_rec("a", "z1", 0.0, 2010), area_rec("b", "z1", 0.0001, 2020)];
        let params = SpatialMineParams { pairs_per_area: 1, max_year_gap: Some(5) };
        let m = mine_spatial_pairs(&records, None, &params, 5, "t").unwrap();
        assert!(m.pairs.is_empty());
    }

    #[test]
    fn spatial_matches_independent_sampling_oracle() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut records = Vec::new();
        for area in 0..10 {
            for i in 0..20 {
                records.push(area_rec(
                    &format!("a{area:02}r{i:02}"),
                    &format!("z{area:02}"),
                    0.01 * area as f64 + 0.00001 * i as f64,
                    2015 + rng.random_range(0..6),
                ));
            }
        }
        let params = SpatialMineParams::new(3);
        let mined = mine_spatial_pairs(&records, None, &params, 123, "t").unwrap();

        // Independent reimplementation of the enumeration + draw.
        let mut expected = Vec::new();
        let mut by_area: BTreeMap<&str, Vec<&ImageRecord>> = BTreeMap::new();
        for r in &records {
            by_area.entry(r.area_id.as_deref().unwrap()).or_default().push(r);
        }
        for (area, mut members) in by_area {
            members.sort_by(|a, b| a.id.cmp(&b.id));
            let mut candidates = Vec::new();
            for i in 0..members.len() {
                for j in i + 1..members.len() {
                    candidates.push(make_pair(PairType::Spatial, members[i], members[j]));
                }
            }
            let mut rng = group_rng(123, "spatial", area);
            for k in sample_indices(&mut rng, candidates.len(), 3) {
                expected.push(candidates[k].clone());
            }
        }
        assert_eq!(mined.pairs, expected);
        assert_eq!(mined.pairs.len(), 30);
        assert!(audit_manifest(&mined, &records).passed());
    }

    #[test]
    fn self_pairs_full_count_covers_every_record() {
        let records: Vec<ImageRecord> =
            (0..20).map(|i| rec(&format!("r{i:02}"), 0.0, 0.0, 0.0, 2018, 6)).collect();
        let m = mine_self_pairs(&records, 20, 3, "t").unwrap();
        assert_eq!(m.pairs.len(), 20);
        let ids: HashSet<&str> = m.pairs.iter().map(|p| p.id_a.as_str()).collect();
        assert_eq!(ids.len(), 20);
        assert!(m.pairs.iter().all(|p| p.id_a == p.id_b && p.dist_m == 0.0));
    }

    #[test]
    fn self_pairs_zero_count_empty() {
        let records = vec![rec("a", 0.0, 0.0, 0.0, 2018, 6)];
        assert!(mine_self_pairs(&records, 0, 3, "t").unwrap().pairs.is_empty());
    }

    #[test]
    fn self_pairs_count_too_large_rejected() {
        let records = vec![rec("a", 0.0, 0.0, 0.0, 2018, 6)];
        assert!(mine_self_pairs(&records, 2, 3, "t").is_err());
    }

    #[test]
    fn self_pairs_seed_determinism() {
        let records: Vec<ImageRecord> =
            (0..100).map(|i| rec(&format!("r{i:03}"), 0.0, 0.0, 0.0, 2018, 6)).collect();
        let a = mine_self_pairs(&records, 50, 9, "t").unwrap();
        let b = mine_self_pairs(&records, 50, 9, "t").unwrap();
        let c = mine_self_pairs(&records, 50, 10, "t").unwrap();
        assert_eq!(a.pairs, b.pairs);
        assert_ne!(a.pairs, c.pairs);
    }

    #[test]
    fn subsample_full_size_is_permutation() {
        let records: Vec<ImageRecord> =
            (0..30).map(|i| rec(&format!("r{i:02}"), 0.0, 0.0, 0.0, 2018, 6)).collect();
        let m = mine_self_pairs(&records, 30, 1, "t").unwrap();
        let s = subsample_pairs(&m, 30, 2).unwrap();
        assert_eq!(s.pairs.len(), 30);
        let mut a: Vec<&str> = m.pairs.iter().map(|p| p.id_a.as_str()).collect();
        let mut b: Vec<&str> = s.pairs.iter().map(|p| p.id_a.as_str()).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn subsample_too_large_rejected() {
        let records = vec![rec("a", 0.0, 0.0, 0.0, 2018, 6)];
        let m = mine_self_pairs(&records, 1, 1, "t").unwrap();
        assert!(subsample_pairs(&m, 2, 1).is_err());
    }

    #[test]
    fn subsample_inclusion_rate_is_uniform() {
        // 10k of 100k over 50 seeds: per-pair inclusion rate 0.1 +/- 0.01.
        let n = 100_000usize;
        let target = 10_000usize;
        let mut counts = vec![0u32; n];
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in sample_indices(&mut rng, n, target) {
                counts[i] += 1;
            }
        }
        let mean_rate =
            counts.iter().map(|&c| c as f64 / 50.0).sum::<f64>() / n as f64;
        assert!((mean_rate - 0.1).abs() < 1e-9, "mass conservation");
        // Rate averaged over pairs in equal-size blocks stays near 0.1.
        for block in counts.chunks(10_000) {
            let rate = block.iter().map(|&c| c as f64 / 50.0).sum::<f64>() / block.len() as f64;
            assert!((rate - 0.1).abs() < 0.01, "block rate {rate}");
        }
    }

    #[test]
    fn manifest_save_load_round_trip() {
        let records =
            vec![rec("a", 0.0, 0.0, 90.0, 2018, 6), rec("b", 0.0, 0.0, 90.0, 2020, 6)];
        let m = mine_temporal_pairs(
            &records,
            &index(&records),
            &TemporalMineParams::default(),
            7,
            "unit",
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        save_manifest(&m, &p).unwrap();
        let loaded = load_manifest(&p).unwrap();
        assert_eq!(m, loaded);
        // Re-saving produces identical bytes.
        let p2 = dir.path().join("m2.csv");
        save_manifest(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn audit_catches_planted_violation() {
        let records =
            vec![rec("a", 0.0, 0.0, 90.0, 2018, 6), rec("b", 0.0, 0.0, 90.0, 2020, 6)];
        let mut m = mine_temporal_pairs(
            &records,
            &index(&records),
            &TemporalMineParams::default(),
            7,
            "t",
        )
        .unwrap();
        m.pairs[0].pair_type = PairType::Spatial;
        let report = audit_manifest(&m, &records);
        assert!(!report.passed());
    }
}
