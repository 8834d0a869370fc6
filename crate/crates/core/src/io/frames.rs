//! Keypoint-frame CSV.
//!
//! Header: `subject,frame,is_neutral,x0,y0,...,x67,y67` (139 columns).
//! Missing keypoints are written as empty cells; on read, an empty or
//! non-finite cell in either coordinate marks the whole keypoint invalid.
//! Coordinates are written with the shortest representation that parses back
//! to the identical `f64`, so save/load round-trips exactly.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::IoError;
use crate::geometry::RawFrame;
use crate::KEYPOINT_COUNT;

/// The exact expected header row.
pub fn frame_header() -> Vec<String> {
    let mut h = vec!["subject".to_string(), "frame".to_string(), "is_neutral".to_string()];
    for i in 0..KEYPOINT_COUNT {
        h.push(format!("x{i}"));
        h.push(format!("y{i}"));
    }
    h
}

pub fn load_frames(path: impl AsRef<Path>) -> Result<Vec<RawFrame>, IoError> {
    read_frames(File::open(path)?)
}

pub fn read_frames<R: Read>(reader: R) -> Result<Vec<RawFrame>, IoError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let expected = frame_header();
    let headers = csv_reader.headers()?.clone();
    if headers.len() != expected.len() {
        return Err(IoError::BadHeader(format!(
            "{} columns, expected {}",
            headers.len(),
            expected.len()
        )));
    }
    for (got, want) in headers.iter().zip(&expected) {
        if got.trim() != want {
            return Err(IoError::BadHeader(format!(
                "column named {got:?}, expected {want:?}"
            )));
        }
    }

    let mut frames = Vec::new();
    for (row_idx, record) in csv_reader.records().enumerate() {
        let record = record?;
        let row = row_idx + 2; // 1-based, after the header line
        let subject = record.get(0).unwrap_or("").trim().to_string();
        if subject.is_empty() {
            return Err(IoError::BadField {
                row,
                field: 1,
                message: "empty subject id".into(),
            });
        }
        let frame_index: u32 = record
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| IoError::BadField {
                row,
                field: 2,
                message: format!("bad frame index: {e}"),
            })?;
        let is_neutral = parse_bool(record.get(2).unwrap_or("")).ok_or(IoError::BadField {
            row,
            field: 3,
            message: "is_neutral must be 0/1 or true/false".into(),
        })?;

        let mut coords = [[0.0f64; 2]; KEYPOINT_COUNT];
        let mut validity = [false; KEYPOINT_COUNT];
        for i in 0..KEYPOINT_COUNT {
            let fx = 3 + 2 * i;
            let x = parse_coord(record.get(fx).unwrap_or(""), row, fx + 1)?;
            let y = parse_coord(record.get(fx + 1).unwrap_or(""), row, fx + 2)?;
            if let (Some(x), Some(y)) = (x, y) {
                // a literal (0, 0) is the common missing-keypoint sentinel
                if x != 0.0 || y != 0.0 {
                    coords[i] = [x, y];
                    validity[i] = true;
                }
            }
        }
        frames.push(RawFrame::new(subject, frame_index, is_neutral, coords, validity));
    }
    Ok(frames)
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim() {
        "0" | "false" => Some(false),
        "1" | "true" => Some(true),
        _ => None,
    }
}

/// An empty cell is a missing coordinate; a present cell must be a finite
/// number (a literal NaN also counts as missing, matching exporters that
/// write NaN for undetected keypoints).
fn parse_coord(s: &str, row: usize, field: usize) -> Result<Option<f64>, IoError> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    let value: f64 = s.parse().map_err(|e| IoError::BadField {
        row,
        field,
        message: format!("bad coordinate: {e}"),
    })?;
    if value.is_finite() {
        Ok(Some(value))
    } else {
        Ok(None)
    }
}

pub fn save_frames(path: impl AsRef<Path>, frames: &[RawFrame]) -> Result<(), IoError> {
    write_frames(File::create(path)?, frames)
}

pub fn write_frames<W: Write>(writer: W, frames: &[RawFrame]) -> Result<(), IoError> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    csv_writer.write_record(frame_header())?;
    for f in frames {
        let mut record = Vec::with_capacity(3 + 2 * KEYPOINT_COUNT);
        record.push(f.subject_id.clone());
        record.push(f.frame_index.to_string());
        record.push(if f.is_neutral { "1" } else { "0" }.to_string());
        for i in 0..KEYPOINT_COUNT {
            if f.is_valid(i) {
                let [x, y] = f.point(i);
                record.push(format!("{x}"));
                record.push(format!("{y}"));
            } else {
                record.push(String::new());
                record.push(String::new());
            }
        }
        csv_writer.write_record(&record)?;
    }
    csv_writer.flush()?;
    Ok(())
}
