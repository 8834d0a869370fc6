//! The model archive: a line-oriented text format carrying the fitted
//! factors, the standardization template, the grid-search summaries, and an
//! integrity checksum.
//!
//! Layout (all floats use the shortest exact representation):
//!
//! ```text
//! dfecs-model 1
//! layout interleaved-xy-68
//! beta <f> seed <u> ve-train <f>
//! anchors <default|no-jawline|none>
//! part <name> k <u> alpha <f> ve <f> exhausted <0|1>   (one per part)
//! hier q <u> alpha-a <f> alpha-b <f> ve <f> exhausted <0|1>
//! matrix U <rows> <cols>      followed by <rows> data lines
//! matrix A ...  matrix B ...  matrix UPRIME ...
//! template <68|none>          followed by lines `x y <0|1>`
//! checksum <sha256 hex of every preceding byte>
//! ```
//!
//! Loading re-verifies the checksum and the identity `UPRIME = U * A`.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use super::IoError;
use crate::ffm::{FullFaceModel, HierSummary, PartSummary};
use crate::geometry::{AnchorChoice, Template};
use crate::kpm::FacePart;
use crate::{COORD_LAYOUT_TAG, KEYPOINT_COUNT};

const MAGIC: &str = "dfecs-model";
const VERSION: &str = "1";
/// `UPRIME` is recomputed from the parsed `U` and `A`; since the stored
/// floats round-trip exactly, the product must match to the last bit apart
/// from summation order.
const UPRIME_TOL: f64 = 1e-12;

pub fn save_model(path: impl AsRef<Path>, model: &FullFaceModel) -> Result<(), IoError> {
    write_model(File::create(path)?, model)
}

pub fn write_model<W: Write>(mut writer: W, model: &FullFaceModel) -> Result<(), IoError> {
    let mut body = String::new();
    body.push_str(&format!("{MAGIC} {VERSION}\n"));
    body.push_str(&format!("layout {COORD_LAYOUT_TAG}\n"));
    body.push_str(&format!(
        "beta {} seed {} ve-train {}\n",
        model.beta, model.seed, model.ve_train
    ));
    match model.anchor_choice {
        Some(c) => body.push_str(&format!("anchors {}\n", c.name())),
        None => body.push_str("anchors none\n"),
    }
    for p in &model.parts {
        body.push_str(&format!(
            "part {} k {} alpha {} ve {} exhausted {}\n",
            p.part.name(),
            p.k,
            p.alpha,
            p.ve,
            p.grid_exhausted as u8
        ));
    }
    body.push_str(&format!(
        "hier q {} alpha-a {} alpha-b {} ve {} exhausted {}\n",
        model.hier.q,
        model.hier.alpha_a,
        model.hier.alpha_b,
        model.hier.ve,
        model.hier.grid_exhausted as u8
    ));
    push_matrix(&mut body, "U", &model.u);
    push_matrix(&mut body, "A", &model.a);
    push_matrix(&mut body, "B", &model.b);
    push_matrix(&mut body, "UPRIME", &model.u_prime);
    match &model.template {
        Some(t) => {
            body.push_str(&format!("template {KEYPOINT_COUNT}\n"));
            for i in 0..KEYPOINT_COUNT {
                let [x, y] = t.coords[i];
                body.push_str(&format!("{x} {y} {}\n", t.validity[i] as u8));
            }
        }
        None => body.push_str("template none\n"),
    }
    let digest = hex(&Sha256::digest(body.as_bytes()));
    body.push_str(&format!("checksum {digest}\n"));
    writer.write_all(body.as_bytes())?;
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn push_matrix(body: &mut String, name: &str, m: &DMatrix<f64>) {
    body.push_str(&format!("matrix {name} {} {}\n", m.nrows(), m.ncols()));
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                body.push(' ');
            }
            body.push_str(&format!("{}", m[(r, c)]));
        }
        body.push('\n');
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FullFaceModel, IoError> {
    read_model(BufReader::new(File::open(path)?))
}

fn read_model<R: Read>(mut reader: R) -> Result<FullFaceModel, IoError> {
    let mut raw = String::new();
    reader.read_to_string(&mut raw)?;

    // split off and verify the trailing checksum line
    let trimmed = raw.trim_end_matches('\n');
    let (body_end, checksum_line) = match trimmed.rfind('\n') {
        Some(pos) => (pos + 1, &trimmed[pos + 1..]),
        None => return Err(IoError::Inconsistent("truncated archive".into())),
    };
    let expected = checksum_line
        .strip_prefix("checksum ")
        .ok_or(IoError::Inconsistent("missing checksum line".into()))?;
    let digest = hex(&Sha256::digest(raw[..body_end].as_bytes()));
    if digest != expected.trim() {
        return Err(IoError::ChecksumMismatch);
    }

    let mut lines = BufReader::new(raw[..body_end].as_bytes()).lines();
    let mut next = |what: &str| -> Result<String, IoError> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| IoError::Inconsistent(format!("archive ends before {what}")))
    };

    let magic = next("magic")?;
    let mut it = magic.split_whitespace();
    if it.next() != Some(MAGIC) {
        return Err(IoError::Inconsistent("not a model archive".into()));
    }
    let version = it.next().unwrap_or("").to_string();
    if version != VERSION {
        return Err(IoError::UnsupportedVersion(version));
    }

    let layout_line = next("layout")?;
    let layout = layout_line
        .strip_prefix("layout ")
        .ok_or(IoError::Inconsistent("missing layout line".into()))?;
    if layout != COORD_LAYOUT_TAG {
        return Err(IoError::LayoutMismatch(layout.to_string()));
    }

    let meta = next("metadata")?;
    let kv = parse_kv(&meta)?;
    let beta: f64 = take(&kv, "beta")?;
    let seed: u64 = take(&kv, "seed")?;
    let ve_train: f64 = take(&kv, "ve-train")?;

    let anchors_line = next("anchors")?;
    let anchors = anchors_line
        .strip_prefix("anchors ")
        .ok_or(IoError::Inconsistent("missing anchors line".into()))?;
    let anchor_choice = match anchors {
        "none" => None,
        other => Some(
            AnchorChoice::from_name(other)
                .ok_or_else(|| IoError::Inconsistent(format!("unknown anchors {other:?}")))?,
        ),
    };

    let mut parts = Vec::new();
    let mut line = next("part or hier")?;
    while let Some(rest) = line.strip_prefix("part ") {
        let mut words = rest.split_whitespace();
        let name = words
            .next()
            .ok_or(IoError::Inconsistent("part line missing name".into()))?;
        let part = FacePart::from_name(name)
            .ok_or_else(|| IoError::Inconsistent(format!("unknown part {name:?}")))?;
        let kv = parse_kv(&words.collect::<Vec<_>>().join(" "))?;
        parts.push(PartSummary {
            part,
            k: take(&kv, "k")?,
            alpha: take(&kv, "alpha")?,
            ve: take(&kv, "ve")?,
            grid_exhausted: take::<u8>(&kv, "exhausted")? != 0,
        });
        line = next("part or hier")?;
    }
    let hier_rest = line
        .strip_prefix("hier ")
        .ok_or(IoError::Inconsistent("missing hier line".into()))?;
    let kv = parse_kv(hier_rest)?;
    let hier = HierSummary {
        q: take(&kv, "q")?,
        alpha_a: take(&kv, "alpha-a")?,
        alpha_b: take(&kv, "alpha-b")?,
        ve: take(&kv, "ve")?,
        grid_exhausted: take::<u8>(&kv, "exhausted")? != 0,
    };

    let mut read_matrix = |expected_name: &str| -> Result<DMatrix<f64>, IoError> {
        let header = next(&format!("matrix {expected_name}"))?;
        let mut words = header.split_whitespace();
        if words.next() != Some("matrix") || words.next() != Some(expected_name) {
            return Err(IoError::Inconsistent(format!(
                "expected matrix {expected_name}, got {header:?}"
            )));
        }
        let rows: usize = parse_word(words.next(), "matrix rows")?;
        let cols: usize = parse_word(words.next(), "matrix cols")?;
        let mut m = DMatrix::zeros(rows, cols);
        for r in 0..rows {
            let data = next("matrix row")?;
            let mut entries = data.split_whitespace();
            for c in 0..cols {
                m[(r, c)] = parse_word(entries.next(), "matrix entry")?;
            }
            if entries.next().is_some() {
                return Err(IoError::BadShape(format!(
                    "matrix {expected_name} row {r} has extra entries"
                )));
            }
        }
        Ok(m)
    };

    let u = read_matrix("U")?;
    let a = read_matrix("A")?;
    let b = read_matrix("B")?;
    let u_prime = read_matrix("UPRIME")?;

    if u.nrows() != crate::KPM_DIM || u_prime.nrows() != crate::KPM_DIM {
        return Err(IoError::BadShape(format!(
            "dictionary has {} rows, expected {}",
            u.nrows(),
            crate::KPM_DIM
        )));
    }
    if u.ncols() != a.nrows() || a.ncols() != b.nrows() || a.ncols() != u_prime.ncols() {
        return Err(IoError::BadShape("factor shapes disagree".into()));
    }
    let recomputed = &u * &a;
    let max_diff = (&recomputed - &u_prime)
        .iter()
        .fold(0.0f64, |acc, &d| acc.max(d.abs()));
    if max_diff > UPRIME_TOL {
        return Err(IoError::Inconsistent(format!(
            "UPRIME differs from U*A by {max_diff:e}"
        )));
    }

    let template_line = next("template")?;
    let template = match template_line
        .strip_prefix("template ")
        .ok_or(IoError::Inconsistent("missing template line".into()))?
    {
        "none" => None,
        count => {
            let n: usize = count
                .parse()
                .map_err(|_| IoError::Inconsistent("bad template count".into()))?;
            if n != KEYPOINT_COUNT {
                return Err(IoError::BadShape(format!(
                    "template has {n} keypoints, expected {KEYPOINT_COUNT}"
                )));
            }
            let mut coords = [[0.0f64; 2]; KEYPOINT_COUNT];
            let mut validity = [false; KEYPOINT_COUNT];
            for i in 0..KEYPOINT_COUNT {
                let data = next("template point")?;
                let mut words = data.split_whitespace();
                coords[i][0] = parse_word(words.next(), "template x")?;
                coords[i][1] = parse_word(words.next(), "template y")?;
                validity[i] = parse_word::<u8>(words.next(), "template validity")? != 0;
            }
            Some(Template { coords, validity })
        }
    };

    Ok(FullFaceModel {
        u,
        a,
        b,
        u_prime,
        beta,
        parts,
        hier,
        ve_train,
        seed,
        template,
        anchor_choice,
    })
}

/// `key value key value ...` pairs on one line.
fn parse_kv(line: &str) -> Result<Vec<(String, String)>, IoError> {
    let words: Vec<&str> = line.split_whitespace().collect();
    if words.len() % 2 != 0 {
        return Err(IoError::Inconsistent(format!("odd key-value line {line:?}")));
    }
    Ok(words
        .chunks(2)
        .map(|c| (c[0].to_string(), c[1].to_string()))
        .collect())
}

fn take<T: std::str::FromStr>(kv: &[(String, String)], key: &str) -> Result<T, IoError> {
    let raw = kv
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| IoError::Inconsistent(format!("missing key {key:?}")))?;
    raw.parse()
        .map_err(|_| IoError::Inconsistent(format!("bad value for {key:?}: {raw:?}")))
}

fn parse_word<T: std::str::FromStr>(word: Option<&str>, what: &str) -> Result<T, IoError> {
    word.ok_or_else(|| IoError::Inconsistent(format!("missing {what}")))?
        .parse()
        .map_err(|_| IoError::Inconsistent(format!("bad {what}")))
}
