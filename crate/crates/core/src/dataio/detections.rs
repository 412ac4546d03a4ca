//! Detection lines: `source_id class score x y h w theta_deg`, six decimals.

use std::io::Write;

use crate::error::{contract, Error, Result};
use crate::geometry::RotatedBox;

/// A class-labelled box in source-image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub source_id: String,
    pub class: String,
    pub score: f64,
    pub rbox: RotatedBox<f64>,
}

pub fn format_detection(d: &Detection) -> String {
    let b = &d.rbox;
    format!(
        "{} {} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
        d.source_id,
        d.class,
        d.score,
        b.x,
        b.y,
        b.h,
        b.w,
        b.theta.to_degrees()
    )
}

fn token_ok(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

pub fn write_detections(dets: &[Detection], mut sink: impl Write) -> Result<()> {
    for d in dets {
        contract!(
            token_ok(&d.source_id) && token_ok(&d.class),
            "source id {:?} and class {:?} must be non-empty and free of whitespace",
            d.source_id,
            d.class
        );
        writeln!(sink, "{}", format_detection(d)).map_err(|e| Error::io("<detections>", e))?;
    }
    Ok(())
}

fn parse_line(line: &str) -> std::result::Result<Detection, String> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != 8 {
        return Err(format!("expected 8 fields, found {}", f.len()));
    }
    let mut nums = [0.0; 6];
    for (i, s) in f[2..].iter().enumerate() {
        nums[i] = s.parse::<f64>().map_err(|_| format!("field {} is not a number: {s:?}", i + 3))?;
        if !nums[i].is_finite() {
            return Err(format!("field {} is not finite", i + 3));
        }
    }
    let [score, x, y, h, w, deg] = nums;
    if !(0.0..=1.0).contains(&score) {
        return Err(format!("score {score} outside [0, 1]"));
    }
    let rbox = RotatedBox::try_new(x, y, h, w, deg.to_radians()).map_err(|e| e.to_string())?;
    Ok(Detection {
        source_id: f[0].to_owned(),
        class: f[1].to_owned(),
        score,
        rbox,
    })
}

/// Parses detection lines; `origin` names the source in error messages.
pub fn read_detections(text: &str, origin: &str) -> Result<Vec<Detection>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_line(l).map_err(|message| Error::Parse {
                path: origin.to_owned(),
                line: i + 1,
                message,
            })
        })
        .collect()
}
