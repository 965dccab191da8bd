//! Raw volume file format.
//!
//! A `.v4d` file is a single UTF-8 header line
//!
//! ```text
//! V4D <C> <D> <H> <W> <spacing_mm>\n
//! ```
//!
//! followed by exactly `C * D * H * W` little-endian IEEE-754 64-bit floats
//! in row-major (C, D, H, W) order. Readers reject files whose payload
//! length disagrees with the header, in either direction.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::volume::{ThicknessMeta, Volume4D, VolumeError};

const MAGIC: &str = "V4D";
// Generous cap for "<C> <D> <H> <W> <spacing>" in decimal.
const MAX_HEADER_LEN: usize = 256;

#[derive(Debug, Error)]
pub enum V4dError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed V4D header: {0}")]
    BadHeader(String),
    #[error("payload ends after {got} of {expected} values")]
    PayloadTooShort { expected: usize, got: usize },
    #[error("payload has trailing bytes beyond {expected} values")]
    PayloadTooLong { expected: usize },
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Writes a volume and its spacing in the V4D format.
pub fn write_v4d<W: Write>(
    mut out: W,
    volume: &Volume4D,
    thickness: ThicknessMeta,
) -> Result<(), V4dError> {
    let [c, d, h, w] = volume.dims();
    // f64 Display is shortest round-trip, so read(write(x)) == x.
    writeln!(out, "{MAGIC} {c} {d} {h} {w} {}", thickness.spacing_mm())?;
    for value in volume.as_slice() {
        out.write_all(&value.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a volume and its spacing from the V4D format.
pub fn read_v4d<R: Read>(mut input: R) -> Result<(Volume4D, ThicknessMeta), V4dError> {
    let header = read_header_line(&mut input)?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != MAGIC {
        return Err(V4dError::BadHeader(format!(
            "expected `{MAGIC} <C> <D> <H> <W> <spacing_mm>`, got {header:?}"
        )));
    }
    let dim = |s: &str| -> Result<usize, V4dError> {
        s.parse()
            .map_err(|_| V4dError::BadHeader(format!("bad dimension {s:?}")))
    };
    let (c, d, h, w) = (dim(fields[1])?, dim(fields[2])?, dim(fields[3])?, dim(fields[4])?);
    let spacing: f64 = fields[5]
        .parse()
        .map_err(|_| V4dError::BadHeader(format!("bad spacing {:?}", fields[5])))?;
    let thickness = ThicknessMeta::new(spacing)?;

    // Validate dims before trusting them for an allocation size.
    let probe = Volume4D::new(c, d, h, w, 0.0)?;
    let expected = probe.len();
    drop(probe);

    let mut data = Vec::with_capacity(expected);
    let mut buf = [0u8; 8];
    for i in 0..expected {
        input
            .read_exact(&mut buf)
            .map_err(|_| V4dError::PayloadTooShort { expected, got: i })?;
        data.push(f64::from_le_bytes(buf));
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(V4dError::PayloadTooLong { expected });
    }
    Ok((Volume4D::from_vec(c, d, h, w, data)?, thickness))
}

pub fn save_v4d<P: AsRef<Path>>(
    path: P,
    volume: &Volume4D,
    thickness: ThicknessMeta,
) -> Result<(), V4dError> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    write_v4d(&mut writer, volume, thickness)?;
    writer.flush()?;
    Ok(())
}

pub fn load_v4d<P: AsRef<Path>>(path: P) -> Result<(Volume4D, ThicknessMeta), V4dError> {
    read_v4d(BufReader::new(File::open(path)?))
}

fn read_header_line<R: Read>(input: &mut R) -> Result<String, V4dError> {
    let mut bytes = Vec::new();
    let mut one = [0u8; 1];
    loop {
        if input.read(&mut one)? == 0 {
            return Err(V4dError::BadHeader("missing newline".into()));
        }
        if one[0] == b'\n' {
            break;
        }
        bytes.push(one[0]);
        if bytes.len() > MAX_HEADER_LEN {
            return Err(V4dError::BadHeader("header line too long".into()));
        }
    }
    String::from_utf8(bytes).map_err(|_| V4dError::BadHeader("header is not UTF-8".into()))
}
