//! Sticker registry: ids, floor positions and payload lookup.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point2;
use thiserror::Error;

use crate::sticker::{parse_payload, payloads, StickerPlacement, MAX_STICKER_ID};

/// Above this pitch neighbouring stickers can leave gaps in coverage.
pub const MAX_RECOMMENDED_PITCH_M: f64 = 2.0;
pub const DEFAULT_CANDIDATE_RADIUS_M: f64 = 3.0;
const HEADER: &str = "id,x_m,y_m,yaw_rad";

#[derive(Debug, Error)]
pub enum MapError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: duplicate sticker id {id}")]
    DuplicateId { line: usize, id: u32 },
    #[error("sticker id {0} exceeds the payload range")]
    IdOutOfRange(u32),
    #[error("grid must have at least one row and one column")]
    EmptyGrid,
    #[error("payload not registered")]
    NotFound,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StickerSpec {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl StickerSpec {
    pub fn payloads(&self) -> [String; 4] {
        payloads(self.id)
    }

    pub fn placement(&self) -> StickerPlacement {
        StickerPlacement { x: self.x, y: self.y, yaw: self.yaw }
    }

    pub fn position(&self) -> Point2<f64> {
        Point2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Default)]
pub struct WarehouseMap {
    stickers: Vec<StickerSpec>,
    by_id: HashMap<u32, usize>,
    /// Non-fatal issues noticed while building the map.
    pub warnings: Vec<String>,
}

impl PartialEq for WarehouseMap {
    fn eq(&self, other: &Self) -> bool {
        self.stickers == other.stickers
    }
}

impl WarehouseMap {
    pub fn new(stickers: Vec<StickerSpec>) -> Result<Self, MapError> {
        let mut map = Self::default();
        for (i, s) in stickers.into_iter().enumerate() {
            map.insert(s).map_err(|e| match e {
                MapError::DuplicateId { id, .. } => MapError::DuplicateId { line: i + 1, id },
                other => other,
            })?;
        }
        Ok(map)
    }

    fn insert(&mut self, s: StickerSpec) -> Result<(), MapError> {
        if s.id > MAX_STICKER_ID {
            return Err(MapError::IdOutOfRange(s.id));
        }
        if self.by_id.contains_key(&s.id) {
            return Err(MapError::DuplicateId { line: 0, id: s.id });
        }
        self.by_id.insert(s.id, self.stickers.len());
        self.stickers.push(s);
        Ok(())
    }

    pub fn stickers(&self) -> &[StickerSpec] {
        &self.stickers
    }

    pub fn len(&self) -> usize {
        self.stickers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stickers.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&StickerSpec> {
        self.by_id.get(&id).map(|&i| &self.stickers[i])
    }

    pub fn parse_csv(text: &str) -> Result<Self, MapError> {
        let mut map = Self::default();
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == HEADER => {}
            Some((_, h)) => return Err(MapError::Parse { line: 1, msg: format!("expected header `{HEADER}`, got `{}`", h.trim()) }),
            None => return Err(MapError::Parse { line: 1, msg: "missing header".into() }),
        }
        for (i, raw) in lines {
            let line = i + 1;
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(MapError::Parse { line, msg: format!("expected 4 fields, got {}", fields.len()) });
            }
            let err = |what: &str, e: String| MapError::Parse { line, msg: format!("{what}: {e}") };
            let id: u32 = fields[0].parse().map_err(|e: std::num::ParseIntError| err("id", e.to_string()))?;
            let num = |k: usize, what: &str| fields[k].parse::<f64>().map_err(|e| err(what, e.to_string()));
            let spec = StickerSpec { id, x: num(1, "x_m")?, y: num(2, "y_m")?, yaw: num(3, "yaw_rad")? };
            if !(spec.x.is_finite() && spec.y.is_finite() && spec.yaw.is_finite()) {
                return Err(MapError::Parse { line, msg: "non-finite coordinate".into() });
            }
            map.insert(spec).map_err(|e| match e {
                MapError::DuplicateId { id, .. } => MapError::DuplicateId { line, id },
                MapError::IdOutOfRange(id) => MapError::Parse { line, msg: format!("id {id} exceeds {MAX_STICKER_ID}") },
                other => other,
            })?;
        }
        Ok(map)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(HEADER);
        s.push('\n');
        for st in &self.stickers {
            let _ = writeln!(s, "{},{},{},{}", st.id, st.x, st.y, st.yaw);
        }
        s
    }

    /// The sticker owning `payload`, if registered.
    pub fn lookup_by_payload(&self, payload: &[u8]) -> Result<&StickerSpec, MapError> {
        let (id, _) = parse_payload(payload).ok_or(MapError::NotFound)?;
        self.get(id).ok_or(MapError::NotFound)
    }

    /// Ids within `radius_m` of `last`, nearest first (ties by id); every
    /// sticker when there is no last position.
    pub fn candidate_stickers(&self, last: Option<Point2<f64>>, radius_m: f64) -> Vec<u32> {
        let Some(p) = last else {
            let mut ids: Vec<u32> = self.stickers.iter().map(|s| s.id).collect();
            ids.sort_unstable();
            return ids;
        };
        let mut near: Vec<(f64, u32)> = self.stickers.iter().map(|s| ((s.position() - p).norm(), s.id)).filter(|&(d, _)| d <= radius_m).collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        near.into_iter().map(|(_, id)| id).collect()
    }
}

pub fn load_map(path: impl AsRef<Path>) -> Result<WarehouseMap, MapError> {
    WarehouseMap::parse_csv(&std::fs::read_to_string(path)?)
}

pub fn save_map(map: &WarehouseMap, path: impl AsRef<Path>) -> Result<(), MapError> {
    std::fs::write(path, map.to_csv())?;
    Ok(())
}

/// `rows × cols` stickers at `(i·pitch, j·pitch)` with sequential ids,
/// row index along x. Pitches above 2 m are accepted with a warning.
pub fn generate_grid_map(rows: usize, cols: usize, pitch_m: f64) -> Result<WarehouseMap, MapError> {
    if rows == 0 || cols == 0 {
        return Err(MapError::EmptyGrid);
    }
    let mut stickers = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            stickers.push(StickerSpec { id: (i * cols + j) as u32, x: i as f64 * pitch_m, y: j as f64 * pitch_m, yaw: 0.0 });
        }
    }
    let mut map = WarehouseMap::new(stickers)?;
    if pitch_m > MAX_RECOMMENDED_PITCH_M {
        let msg = format!("pitch {pitch_m} m exceeds the recommended {MAX_RECOMMENDED_PITCH_M} m");
        log::warn!("{msg}");
        map.warnings.push(msg);
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sticker::payload;

    #[test]
    fn header_only_is_empty() {
        assert!(WarehouseMap::parse_csv("id,x_m,y_m,yaw_rad\n").unwrap().is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let mut map = generate_grid_map(10, 10, 1.3).unwrap();
        map.stickers[3].yaw = 0.123456789;
        let back = WarehouseMap::parse_csv(&map.to_csv()).unwrap();
        assert_eq!(back, map);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.csv");
        let map = generate_grid_map(2, 3, 1.0).unwrap();
        save_map(&map, &path).unwrap();
        assert_eq!(load_map(&path).unwrap(), map);
    }

    #[test]
    fn duplicate_id_names_line() {
        let text = "id,x_m,y_m,yaw_rad\n1,0,0,0\n2,1,0,0\n1,2,0,0\n";
        match WarehouseMap::parse_csv(text) {
            Err(e @ MapError::DuplicateId { line: 4, id: 1 }) => assert!(e.to_string().contains("line 4")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_name_line() {
        assert!(matches!(WarehouseMap::parse_csv("id,x_m,y_m,yaw_rad\n1,0,zero,0\n"), Err(MapError::Parse { line: 2, .. })));
        assert!(matches!(WarehouseMap::parse_csv("id,x,y\n"), Err(MapError::Parse { line: 1, .. })));
        assert!(matches!(WarehouseMap::parse_csv("id,x_m,y_m,yaw_rad\n1,0,0\n"), Err(MapError::Parse { line: 2, .. })));
    }

    #[test]
    fn grid_layout() {
        let one = generate_grid_map(1, 1, 1.0).unwrap();
        assert_eq!(one.stickers(), &[StickerSpec { id: 0, x: 0.0, y: 0.0, yaw: 0.0 }]);
        let g = generate_grid_map(3, 3, 1.5).unwrap();
        assert_eq!(g.len(), 9);
        let max = g.stickers().iter().map(|s| s.x.max(s.y)).fold(0.0, f64::max);
        assert_eq!(max, 3.0);
        assert!(g.warnings.is_empty());
        let wide = generate_grid_map(2, 2, 2.5).unwrap();
        assert_eq!(wide.warnings.len(), 1);
        assert!(matches!(generate_grid_map(0, 3, 1.0), Err(MapError::EmptyGrid)));
    }

    #[test]
    fn payload_lookup() {
        let g = generate_grid_map(3, 3, 1.0).unwrap();
        assert_eq!(g.lookup_by_payload(payload(7, 2).as_bytes()).unwrap().id, 7);
        for p in g.get(5).unwrap().payloads() {
            assert_eq!(g.lookup_by_payload(p.as_bytes()).unwrap().id, 5);
        }
        assert!(matches!(g.lookup_by_payload(payload(42, 0).as_bytes()), Err(MapError::NotFound)));
        assert!(matches!(g.lookup_by_payload(b"hello"), Err(MapError::NotFound)));
    }

    #[test]
    fn candidates() {
        let g = generate_grid_map(10, 10, 1.0).unwrap();
        assert_eq!(g.candidate_stickers(Some(Point2::new(2.0, 3.0)), 0.4), vec![23]);
        assert_eq!(g.candidate_stickers(Some(Point2::new(0.5, 0.0)), 0.6), vec![0, 10]);
        assert_eq!(g.candidate_stickers(None, 1.0).len(), 100);

        let centre = Point2::new(4.5, 4.5);
        let radius = 2.1;
        let got = g.candidate_stickers(Some(centre), radius);
        let mut brute: Vec<(f64, u32)> = g
            .stickers()
            .iter()
            .filter_map(|s| {
                let d = ((s.x - centre.x).powi(2) + (s.y - centre.y).powi(2)).sqrt();
                (d <= radius).then_some((d, s.id))
            })
            .collect();
        brute.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, brute.iter().map(|b| b.1).collect::<Vec<_>>());
        let d: Vec<f64> = got.iter().map(|id| (g.get(*id).unwrap().position() - centre).norm()).collect();
        assert!(d.windows(2).all(|w| w[0] <= w[1]));
    }
}
