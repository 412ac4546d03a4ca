//! DOTA-style annotation text: `x1 y1 x2 y2 x3 y3 x4 y4 class difficulty`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{polygon_area, Point, RotatedBox};

use super::polygon::polygon_to_rotated;

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    /// Corners in file order, pixel coordinates.
    pub polygon: [Point<f64>; 4],
    pub class_name: String,
    pub difficulty: u32,
}

impl AnnotationRecord {
    pub fn is_difficult(&self) -> bool {
        self.difficulty != 0
    }

    pub fn rotated(&self) -> Result<RotatedBox<f64>> {
        polygon_to_rotated(&self.polygon)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            polygon: self.polygon.map(|p| Point::new(p.x + dx, p.y + dy)),
            ..self.clone()
        }
    }
}

/// A rejected line, 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl LineError {
    pub fn into_error(self, path: &str) -> Error {
        Error::Parse {
            path: path.to_owned(),
            line: self.line,
            message: self.message,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedAnnotations {
    pub records: Vec<AnnotationRecord>,
    pub errors: Vec<LineError>,
}

fn parse_line(line: &str) -> std::result::Result<AnnotationRecord, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let coords = fields
        .iter()
        .take_while(|f| f.parse::<f64>().is_ok())
        .map(|f| f.parse::<f64>().unwrap())
        .collect::<Vec<_>>();
    if coords.len() < 8 {
        return Err(format!("expected 8 coordinates, found {}", coords.len()));
    }
    if coords.len() > 8 {
        return Err("class name must not be numeric".into());
    }
    if coords.iter().any(|c| !c.is_finite()) {
        return Err("non-finite coordinate".into());
    }
    let class_name = fields.get(8).ok_or("missing class name")?.to_string();
    let difficulty = match fields.get(9) {
        None => 0,
        Some(d) => d.parse::<u32>().map_err(|_| format!("bad difficulty {d:?}"))?,
    };
    if fields.len() > 10 {
        return Err(format!("{} trailing fields", fields.len() - 10));
    }
    let polygon = [0, 1, 2, 3].map(|i| Point::new(coords[2 * i], coords[2 * i + 1]));
    for i in 0..4 {
        for j in i + 1..4 {
            if polygon[i] == polygon[j] {
                return Err(format!("corners {} and {} coincide", i + 1, j + 1));
            }
        }
    }
    if polygon_area(&polygon).abs() <= 0.0 {
        return Err("polygon has zero area".into());
    }
    Ok(AnnotationRecord {
        polygon,
        class_name,
        difficulty,
    })
}

/// Parses every line, collecting bad lines instead of stopping at them.
///
/// Blank lines and `imagesource:` / `gsd:` headers are skipped.
pub fn parse_dota(text: &str) -> ParsedAnnotations {
    let mut out = ParsedAnnotations::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with("imagesource") || line.starts_with("gsd") {
            continue;
        }
        match parse_line(line) {
            Ok(r) => out.records.push(r),
            Err(message) => out.errors.push(LineError { line: i + 1, message }),
        }
    }
    out
}

pub fn format_dota(records: &[AnnotationRecord]) -> String {
    let mut s = String::new();
    for r in records {
        for p in &r.polygon {
            write!(s, "{} {} ", p.x, p.y).unwrap();
        }
        writeln!(s, "{} {}", r.class_name, r.difficulty).unwrap();
    }
    s
}
