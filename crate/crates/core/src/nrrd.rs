//! Reader and writer for the strict NRRD subset used for label masks:
//! 3D `uint8` data, diagonal `space directions`, raw or gzip encoding,
//! attached or detached (`data file`).

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::volume::{LabelMap, LabeledVolume};

/// Payload encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Encoding {
    #[default]
    Raw,
    Gzip,
}

/// Fields that carry no information for a uint8 label grid and are accepted
/// silently.
const IGNORED_FIELDS: &[&str] = &["space", "endian", "kinds", "content"];

#[derive(Debug, Default)]
struct Header {
    sizes: Option<[usize; 3]>,
    spacing: Option<[f64; 3]>,
    origin: Option<[f64; 3]>,
    encoding: Option<Encoding>,
    data_file: Option<String>,
    saw_type: bool,
    saw_dimension: bool,
}

fn nrrd_err(msg: impl Into<String>) -> Error {
    Error::Nrrd(msg.into())
}

fn parse_vector(text: &str, field: &str) -> Result<[f64; 3]> {
    let t = text.trim();
    let inner = t
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| nrrd_err(format!("field '{field}': expected '(a,b,c)', got '{t}'")))?;
    let parts: Vec<f64> = inner
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| nrrd_err(format!("field '{field}': non-numeric component in '{t}'")))?;
    if parts.len() != 3 {
        return Err(nrrd_err(format!(
            "field '{field}': expected 3 components, got {}",
            parts.len()
        )));
    }
    Ok([parts[0], parts[1], parts[2]])
}

fn parse_space_directions(value: &str) -> Result<[f64; 3]> {
    let mut vectors = Vec::new();
    let mut rest = value.trim();
    while !rest.is_empty() {
        if rest.starts_with("none") {
            return Err(nrrd_err(
                "field 'space directions': 'none' entries are not supported",
            ));
        }
        let end = rest
            .find(')')
            .ok_or_else(|| nrrd_err("field 'space directions': unbalanced parentheses"))?;
        vectors.push(parse_vector(&rest[..=end], "space directions")?);
        rest = rest[end + 1..].trim_start();
    }
    if vectors.len() != 3 {
        return Err(nrrd_err(format!(
            "field 'space directions': expected 3 vectors, got {}",
            vectors.len()
        )));
    }
    let mut spacing = [0.0; 3];
    for (axis, v) in vectors.iter().enumerate() {
        for (c, &x) in v.iter().enumerate() {
            if c != axis && x != 0.0 {
                return Err(nrrd_err(
                    "field 'space directions': only diagonal orientation is supported",
                ));
            }
        }
        if !(v[axis] > 0.0) || !v[axis].is_finite() {
            return Err(nrrd_err(format!(
                "field 'space directions': axis {axis} spacing must be positive, got {}",
                v[axis]
            )));
        }
        spacing[axis] = v[axis];
    }
    Ok(spacing)
}

fn parse_field(header: &mut Header, key: &str, value: &str) -> Result<()> {
    let value = value.trim();
    match key {
        "type" => {
            if !matches!(value, "uint8" | "uchar" | "unsigned char" | "uint8_t") {
                return Err(nrrd_err(format!(
                    "field 'type': unsupported type '{value}' (only uint8)"
                )));
            }
            header.saw_type = true;
        }
        "dimension" => {
            let d: usize = value
                .parse()
                .map_err(|_| nrrd_err(format!("field 'dimension': not an integer: '{value}'")))?;
            if d != 3 {
                return Err(nrrd_err(format!(
                    "field 'dimension': dimension ≠ 3 (got {d})"
                )));
            }
            header.saw_dimension = true;
        }
        "sizes" => {
            let sizes: Vec<usize> = value
                .split_whitespace()
                .map(|s| s.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| nrrd_err(format!("field 'sizes': not integers: '{value}'")))?;
            if sizes.len() != 3 {
                return Err(nrrd_err(format!(
                    "field 'sizes': dimension ≠ 3 ({} sizes)",
                    sizes.len()
                )));
            }
            header.sizes = Some([sizes[0], sizes[1], sizes[2]]);
        }
        "space directions" => header.spacing = Some(parse_space_directions(value)?),
        "space origin" => header.origin = Some(parse_vector(value, "space origin")?),
        "encoding" => {
            header.encoding = Some(match value {
                "raw" => Encoding::Raw,
                "gzip" | "gz" => Encoding::Gzip,
                other => {
                    return Err(nrrd_err(format!(
                        "field 'encoding': unsupported encoding '{other}'"
                    )))
                }
            })
        }
        "data file" | "datafile" => {
            if value.starts_with("LIST") || value.split_whitespace().count() > 1 {
                return Err(nrrd_err(
                    "field 'data file': multi-file data is not supported",
                ));
            }
            header.data_file = Some(value.to_string());
        }
        k if IGNORED_FIELDS.contains(&k) => {}
        other => return Err(nrrd_err(format!("unsupported field '{other}'"))),
    }
    Ok(())
}

/// Splits the file into header lines and the attached payload.
fn split_header(bytes: &[u8]) -> Result<(Vec<String>, &[u8])> {
    let mut lines = Vec::new();
    let mut pos = 0;
    loop {
        if pos >= bytes.len() {
            break;
        }
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|e| pos + e);
        let (line_bytes, next) = match end {
            Some(e) => (&bytes[pos..e], e + 1),
            None => (&bytes[pos..], bytes.len()),
        };
        let line = std::str::from_utf8(line_bytes)
            .map_err(|_| nrrd_err("header is not valid UTF-8"))?
            .trim_end_matches('\r');
        pos = next;
        if line.is_empty() {
            return Ok((lines, &bytes[pos..]));
        }
        lines.push(line.to_string());
    }
    Ok((lines, &bytes[bytes.len()..]))
}

fn decode(payload: &[u8], encoding: Encoding, expected: usize) -> Result<Vec<u8>> {
    let data = match encoding {
        Encoding::Raw => payload.to_vec(),
        Encoding::Gzip => {
            let mut out = Vec::with_capacity(expected);
            GzDecoder::new(payload)
                .read_to_end(&mut out)
                .map_err(|e| nrrd_err(format!("gzip payload: {e}")))?;
            out
        }
    };
    if data.len() < expected {
        return Err(nrrd_err(format!(
            "payload too short: expected {expected} bytes, got {}",
            data.len()
        )));
    }
    if data.len() > expected && encoding == Encoding::Gzip {
        return Err(nrrd_err(format!(
            "payload too long: expected {expected} bytes, got {}",
            data.len()
        )));
    }
    // Raw attached payloads may carry trailing padding; only the grid is read.
    Ok(data[..expected].to_vec())
}

/// Loads a label mask with the default 1/2/3 label convention.
pub fn load_mask(path: impl AsRef<Path>) -> Result<LabeledVolume> {
    load_mask_with_map(path, &LabelMap::default())
}

/// Loads a label mask whose structure codes are given by `map`.
pub fn load_mask_with_map(path: impl AsRef<Path>, map: &LabelMap) -> Result<LabeledVolume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (lines, attached) = split_header(&bytes)?;
    let mut iter = lines.iter();
    let magic = iter.next().ok_or_else(|| nrrd_err("empty file"))?;
    if !(magic.starts_with("NRRD000") && magic.len() == 8) {
        return Err(nrrd_err(format!("bad magic line '{magic}'")));
    }
    let mut header = Header::default();
    for line in iter {
        if line.starts_with('#') {
            continue;
        }
        if line.contains(":=") {
            return Err(nrrd_err(format!("unsupported key/value line '{line}'")));
        }
        let (key, value) = line
            .split_once(": ")
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| nrrd_err(format!("malformed header line '{line}'")))?;
        parse_field(&mut header, key.trim(), value)?;
    }
    if !header.saw_type {
        return Err(nrrd_err("missing field 'type'"));
    }
    if !header.saw_dimension {
        return Err(nrrd_err("missing field 'dimension'"));
    }
    let dims = header
        .sizes
        .ok_or_else(|| nrrd_err("missing field 'sizes'"))?;
    let spacing = header
        .spacing
        .ok_or_else(|| nrrd_err("missing field 'space directions'"))?;
    let encoding = header
        .encoding
        .ok_or_else(|| nrrd_err("missing field 'encoding'"))?;
    let origin = header.origin.unwrap_or([0.0; 3]);
    let expected = dims.iter().product::<usize>();

    let raw = match &header.data_file {
        Some(name) => {
            let data_path: PathBuf = match path.parent() {
                Some(dir) if !Path::new(name).is_absolute() => dir.join(name),
                _ => PathBuf::from(name),
            };
            let payload = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
            decode(&payload, encoding, expected)?
        }
        None => decode(attached, encoding, expected)?,
    };
    LabeledVolume::from_raw(
        dims,
        spacing,
        Point::new(origin[0], origin[1], origin[2]),
        raw,
        map,
    )
}

/// Writes an attached, raw-encoded mask.
pub fn save_mask(volume: &LabeledVolume, path: impl AsRef<Path>) -> Result<()> {
    save_mask_with(volume, path, Encoding::Raw)
}

/// Writes an attached mask with the given encoding.
pub fn save_mask_with(
    volume: &LabeledVolume,
    path: impl AsRef<Path>,
    encoding: Encoding,
) -> Result<()> {
    let path = path.as_ref();
    if !volume.is_axis_aligned() {
        return Err(Error::InvalidInput(
            "only axis-aligned volumes can be written as NRRD".into(),
        ));
    }
    let [nx, ny, nz] = volume.dims();
    let [sx, sy, sz] = volume.spacing();
    let o = volume.origin();
    let mut header = String::new();
    header.push_str("NRRD0004\n");
    header.push_str("type: uint8\n");
    header.push_str("dimension: 3\n");
    header.push_str("space: left-posterior-superior\n");
    header.push_str(&format!("sizes: {nx} {ny} {nz}\n"));
    header.push_str(&format!(
        "space directions: ({sx},0,0) (0,{sy},0) (0,0,{sz})\n"
    ));
    header.push_str(&format!("space origin: ({},{},{})\n", o.x, o.y, o.z));
    header.push_str(match encoding {
        Encoding::Raw => "encoding: raw\n",
        Encoding::Gzip => "encoding: gzip\n",
    });
    header.push('\n');

    let mut bytes = header.into_bytes();
    match encoding {
        Encoding::Raw => bytes.extend_from_slice(volume.labels()),
        Encoding::Gzip => {
            let mut enc = GzEncoder::new(Vec::new(), Compression::default());
            enc.write_all(volume.labels())
                .map_err(|e| Error::io(path, e))?;
            bytes.extend(enc.finish().map_err(|e| Error::io(path, e))?);
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
