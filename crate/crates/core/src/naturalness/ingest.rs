use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrajectoryPoint;
use crate::error::{Error, Result};

const FEET_TO_M: f64 = 0.3048;

/// Column mapping for trajectory CSV files. The default is the public NGSIM
/// layout in feet at 10 Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub vehicle_id: String,
    pub frame: String,
    pub lateral: String,
    pub longitudinal: String,
    pub speed: String,
    pub lane: String,
    pub preceding: String,
    pub following: String,
    pub frame_rate_hz: f64,
    pub feet: bool,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            vehicle_id: "Vehicle_ID".into(),
            frame: "Frame_ID".into(),
            lateral: "Local_X".into(),
            longitudinal: "Local_Y".into(),
            speed: "v_Vel".into(),
            lane: "Lane_ID".into(),
            preceding: "Preceding".into(),
            following: "Following".into(),
            frame_rate_hz: 10.0,
            feet: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ingested {
    pub points: Vec<TrajectoryPoint>,
    pub skipped: usize,
}

pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Ingested> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, schema)
}

/// Parses trajectory rows, sorted by (vehicle, time). Rows with a field
/// that does not parse are skipped and counted; a neighbor id of 0 means
/// none.
pub fn ingest_reader(reader: impl Read, schema: &CsvSchema) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Empty("trajectory file has no header".into()));
    }
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let col = |name: &str| index.get(name).copied().ok_or_else(|| Error::Schema(name.to_string()));
    let c_id = col(&schema.vehicle_id)?;
    let c_frame = col(&schema.frame)?;
    let c_lat = col(&schema.lateral)?;
    let c_long = col(&schema.longitudinal)?;
    let c_speed = col(&schema.speed)?;
    let c_lane = col(&schema.lane)?;
    let c_prec = col(&schema.preceding)?;
    let c_foll = col(&schema.following)?;
    let scale = if schema.feet { FEET_TO_M } else { 1.0 };

    let mut out = Ingested::default();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(_) => {
                out.skipped += 1;
                continue;
            }
        };
        let f = |i: usize| row.get(i).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite());
        let id = |i: usize| row.get(i).and_then(|s| s.parse::<u64>().ok());
        let parsed = (|| {
            let speed = f(c_speed)? * scale;
            let frame = f(c_frame)?;
            if speed < 0.0 || frame < 0.0 {
                return None;
            }
            let neighbor = |i| id(i).map(|v| (v != 0).then_some(v));
            Some(TrajectoryPoint {
                vehicle_id: id(c_id)?,
                time: frame / schema.frame_rate_hz,
                coords: [f(c_long)? * scale, f(c_lat)? * scale],
                speed,
                lane: row.get(c_lane)?.parse().ok()?,
                front_id: neighbor(c_prec)?,
                rear_id: neighbor(c_foll)?,
            })
        })();
        match parsed {
            Some(p) => out.points.push(p),
            None => out.skipped += 1,
        }
    }
    if out.points.is_empty() && out.skipped == 0 {
        return Err(Error::Empty("trajectory file has no rows".into()));
    }
    out.points
        .sort_by(|a, b| a.vehicle_id.cmp(&b.vehicle_id).then(a.time.total_cmp(&b.time)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "Vehicle_ID,Frame_ID,Total_Frames,Local_X,Local_Y,v_Vel,Lane_ID,Preceding,Following\n";

    fn parse(body: &str) -> Result<Ingested> {
        ingest_reader(format!("{HEADER}{body}").as_bytes(), &CsvSchema::default())
    }

    #[test]
    fn well_formed_rows() {
        let got = parse("1,10,3,6.0,100.0,30.0,2,0,5\n1,11,3,6.0,103.0,30.0,2,0,5\n1,12,3,6.1,106.0,30.0,2,0,5\n").unwrap();
        assert_eq!(got.points.len(), 3);
        assert_eq!(got.skipped, 0);
        let p = &got.points[0];
        assert_eq!(p.vehicle_id, 1);
        assert!((p.time - 1.0).abs() < 1e-12);
        assert!((p.coords[0] - 30.48).abs() < 1e-9);
        assert!((p.coords[1] - 1.8288).abs() < 1e-9);
        assert!((p.speed - 9.144).abs() < 1e-9);
        assert_eq!(p.lane, 2);
        assert_eq!(p.front_id, None);
        assert_eq!(p.rear_id, Some(5));
    }

    #[test]
    fn corrupt_speed_is_skipped() {
        let got = parse("1,10,3,6.0,100.0,30.0,2,0,5\n1,11,3,6.0,103.0,fast,2,0,5\n1,12,3,6.1,106.0,30.0,2,0,5\n").unwrap();
        assert_eq!(got.points.len(), 2);
        assert_eq!(got.skipped, 1);
    }

    #[test]
    fn metric_schema() {
        let schema = CsvSchema { feet: false, frame_rate_hz: 25.0, ..CsvSchema::default() };
        let got = ingest_reader(format!("{HEADER}7,50,1,1.0,2.0,3.0,1,0,0\n").as_bytes(), &schema).unwrap();
        assert_eq!(got.points[0].coords, [2.0, 1.0]);
        assert!((got.points[0].time - 2.0).abs() < 1e-12);
    }

    #[test]
    fn missing_column() {
        let err = ingest_reader("Vehicle_ID,Frame_ID\n1,2\n".as_bytes(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, Error::Schema(ref c) if c == "Local_X"), "{err}");
    }

    #[test]
    fn empty_file() {
        assert!(matches!(ingest_reader("".as_bytes(), &CsvSchema::default()), Err(Error::Empty(_))));
        assert!(matches!(parse(""), Err(Error::Empty(_))));
    }

    #[test]
    fn rows_sorted_by_vehicle_then_time() {
        let got = parse("2,11,1,0,0,1,1,0,0\n1,12,1,0,0,1,1,0,0\n1,11,1,0,0,1,1,0,0\n").unwrap();
        let keys: Vec<_> = got.points.iter().map(|p| (p.vehicle_id, p.time)).collect();
        assert_eq!(keys, vec![(1, 1.1), (1, 1.2), (2, 1.1)]);
    }
}
