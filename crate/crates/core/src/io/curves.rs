//! Delimited-text export for tradeoff curves.

use std::fs::File;
use std::path::Path;

use super::IoError;
use crate::eval::VarianceCurve;

/// `axis,mean_ve,sample_count` rows, one per curve point.
pub fn curve_to_delimited(curve: &VarianceCurve) -> String {
    let mut out = String::from("axis,mean_ve,sample_count\n");
    for (a, v) in curve.axis.iter().zip(&curve.ve) {
        out.push_str(&format!("{a},{v},{}\n", curve.sample_count));
    }
    out
}

pub fn write_curve(path: impl AsRef<Path>, curve: &VarianceCurve) -> Result<(), IoError> {
    use std::io::Write;
    let mut f = File::create(path)?;
    f.write_all(curve_to_delimited(curve).as_bytes())?;
    Ok(())
}
