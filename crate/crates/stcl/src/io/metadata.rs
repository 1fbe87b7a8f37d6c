//! Metadata CSV: `id,lat,lon,heading_deg,capture_year,capture_month,city,area_id`.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, ImageRecord};

pub const METADATA_HEADER: [&str; 8] =
    ["id", "lat", "lon", "heading_deg", "capture_year", "capture_month", "city", "area_id"];

/// Load and validate image records. Errors carry the 1-based CSV row number
/// (the header is row 1).
pub fn load_metadata(path: &Path) -> Result<Vec<ImageRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != METADATA_HEADER {
        return Err(Error::Format(format!(
            "bad metadata header: expected {:?}, got {:?}",
            METADATA_HEADER.join(","),
            got.join(",")
        )));
    }
    let mut out = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 2;
        let row = row?;
        let rec = parse_row(&row, row_no)?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::MetadataRow {
                row: row_no,
                reason: format!("duplicate id `{}`", rec.id),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

fn parse_row(row: &csv::StringRecord, row_no: usize) -> Result<ImageRecord> {
    let field = |idx: usize, name: &str| -> Result<&str> {
        row.get(idx).ok_or_else(|| Error::MetadataRow {
            row: row_no,
            reason: format!("missing field `{name}`"),
        })
    };
    let num = |idx: usize, name: &str| -> Result<f64> {
        field(idx, name)?.trim().parse::<f64>().map_err(|_| Error::MetadataRow {
            row: row_no,
            reason: format!("field `{name}` is not a number: `{}`", row.get(idx).unwrap_or("")),
        })
    };
    let id = field(0, "id")?.to_string();
    if id.is_empty() {
        return Err(Error::MetadataRow { row: row_no, reason: "empty id".into() });
    }
    let lat = num(1, "lat")?;
    let lon = num(2, "lon")?;
    if !(-90.0..=90.0).contains(&lat) {
        return Err(Error::MetadataRow { row: row_no, reason: format!("lat {lat} out of [-90, 90]") });
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(Error::MetadataRow {
            row: row_no,
            reason: format!("lon {lon} out of [-180, 180]"),
        });
    }
    let heading = num(3, "heading_deg")?;
    if !(0.0..360.0).contains(&heading) {
        return Err(Error::MetadataRow {
            row: row_no,
            reason: format!("heading_deg {heading} out of [0, 360)"),
        });
    }
    let year = num(4, "capture_year")? as i32;
    let month = num(5, "capture_month")?;
    if month.fract() != 0.0 || !(1.0..=12.0).contains(&month) {
        return Err(Error::MetadataRow {
            row: row_no,
            reason: format!("capture_month {month} out of [1, 12]"),
        });
    }
    let city = field(6, "city")?.to_string();
    let area = field(7, "area_id")?;
    let pos = GeoPoint::new(lat, lon)
        .map_err(|e| Error::MetadataRow { row: row_no, reason: e.to_string() })?;
    Ok(ImageRecord {
        id,
        pos,
        heading_deg: heading,
        capture_year: year,
        capture_month: month as u8,
        city,
        area_id: if area.is_empty() { None } else { Some(area.to_string()) },
    })
}

/// Write records in the documented column order. Floats use the shortest
/// round-trip representation so save/load is lossless.
pub fn save_metadata(records: &[ImageRecord], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(METADATA_HEADER)?;
    for r in records {
        w.write_record([
            r.id.as_str(),
            &r.pos.lat.to_string(),
            &r.pos.lon.to_string(),
            &r.heading_deg.to_string(),
            &r.capture_year.to_string(),
            &r.capture_month.to_string(),
            r.city.as_str(),
            r.area_id.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn well_formed_file_loads() {
        let f = write_tmp(
            "id,lat,lon,heading_deg,capture_year,capture_month,city,area_id\n\
             a,1.5,2.5,90,2018,6,chicago,bg1\n\
             b,1.6,2.5,180,2020,7,chicago,\n\
             c,-1.0,-2.0,0,2019,1,boston,bg2\n",
        );
        let recs = load_metadata(f.path()).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].area_id.as_deref(), Some("bg1"));
        assert_eq!(recs[1].area_id, None);
        assert_eq!(recs[2].capture_month, 1);
    }

    #[test]
    fn heading_360_rejected_with_row() {
        let f = write_tmp(
            "id,lat,lon,heading_deg,capture_year,capture_month,city,area_id\n\
             a,1.5,2.5,90,2018,6,chicago,\n\
             b,1.6,2.5,360.0,2020,7,chicago,\n",
        );
        match load_metadata(f.path()) {
            Err(Error::MetadataRow { row, reason }) => {
                assert_eq!(row, 3);
                assert!(reason.contains("heading"), "{reason}");
            }
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn bad_header_rejected() {
        let f = write_tmp("id,lat,lon\na,1,2\n");
        assert!(matches!(load_metadata(f.path()), Err(Error::Format(_))));
    }

    #[test]
    fn duplicate_id_rejected_with_row() {
        let f = write_tmp(
            "id,lat,lon,heading_deg,capture_year,capture_month,city,area_id\n\
             a,1.5,2.5,90,2018,6,chicago,\n\
             a,1.6,2.5,91,2020,7,chicago,\n",
        );
        match load_metadata(f.path()) {
            Err(Error::MetadataRow { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_lat_rejected() {
        let f = write_tmp(
            "id,lat,lon,heading_deg,capture_year,capture_month,city,area_id\n\
             a,95.0,2.5,90,2018,6,chicago,\n",
        );
        match load_metadata(f.path()) {
            Err(Error::MetadataRow { row, reason }) => {
                assert_eq!(row, 2);
                assert!(reason.contains("lat"));
            }
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn save_load_round_trip() {
        let recs = vec![
            ImageRecord {
                id: "r1".into(),
                pos: GeoPoint::new(41.8781, -87.6298).unwrap(),
                heading_deg: 90.25,
                capture_year: 2018,
                capture_month: 6,
                city: "chicago".into(),
                area_id: Some("bg7".into()),
            },
            ImageRecord {
                id: "r2".into(),
                pos: GeoPoint::new(-0.00012345, 179.9999999).unwrap(),
                heading_deg: 359.75,
                capture_year: 2021,
                capture_month: 12,
                city: "x".into(),
                area_id: None,
            },
        ];
        let f = tempfile::NamedTempFile::new().unwrap();
        save_metadata(&recs, f.path()).unwrap();
        let loaded = load_metadata(f.path()).unwrap();
        assert_eq!(recs, loaded);
    }
}
