//! File formats: PFM and CSV depth maps, PGM/PPM guidance images, CSV sparse
//! samples. All writers replace the target atomically.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Anchor, DepthMap, Image, SparseDepthMap};

/// Writes `bytes` to a temporary file beside `path`, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Whitespace-separated header tokens of the netpbm family, `#` comments allowed.
struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        HeaderCursor { bytes, pos: 0 }
    }

    fn token(&mut self) -> Result<&'a str> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse("truncated header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| Error::parse("non-ASCII header"))
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let t = self.token()?;
        t.parse().map_err(|_| Error::parse(format!("invalid {what} `{t}`")))
    }

    /// Consumes the single whitespace byte that ends the header.
    fn payload(mut self) -> Result<&'a [u8]> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => self.pos += 1,
            _ => return Err(Error::parse("missing separator before raster")),
        }
        Ok(&self.bytes[self.pos..])
    }
}

/// Encodes a depth map as a little-endian grayscale PFM (`Pf`).
///
/// Values are stored as 32-bit floats, bottom row first.
pub fn encode_pfm(depth: &DepthMap) -> Vec<u8> {
    let (h, w) = depth.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(h * w * 4);
    for r in (0..h).rev() {
        for c in 0..w {
            out.extend_from_slice(&(depth.get(r, c) as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<DepthMap> {
    let mut cur = HeaderCursor::new(bytes);
    let channels = match cur.token()? {
        "Pf" => 1,
        "PF" => return Err(Error::parse("color PFM cannot hold a depth map")),
        other => return Err(Error::parse(format!("not a PFM file (magic `{other}`)"))),
    };
    let w: usize = cur.number("width")?;
    let h: usize = cur.number("height")?;
    let scale: f32 = cur.number("scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::parse("PFM scale must be nonzero"));
    }
    let data = cur.payload()?;
    let need = w * h * channels * 4;
    if data.len() < need {
        return Err(Error::parse(format!(
            "PFM raster has {} bytes, expected {need}",
            data.len()
        )));
    }
    let mut values = vec![0.0; w * h];
    for (k, chunk) in data[..need].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (file_row, c) = (k / w, k % w);
        values[(h - 1 - file_row) * w + c] = v as f64;
    }
    DepthMap::new(h, w, values)
}

/// One CSV row per grid row, values printed with round-trip precision.
pub fn encode_depth_csv(depth: &DepthMap) -> String {
    let mut s = String::new();
    for r in 0..depth.height() {
        for c in 0..depth.width() {
            if c > 0 {
                s.push(',');
            }
            let _ = write!(s, "{}", depth.get(r, c));
        }
        s.push('\n');
    }
    s
}

pub fn decode_depth_csv(text: &str) -> Result<DepthMap> {
    let mut values = Vec::new();
    let mut width = None;
    let mut height = 0;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(format!("line {}: invalid number `{}`", ln + 1, t.trim())))
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::parse(format!(
                    "line {}: expected {w} values, got {}",
                    ln + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        values.extend(row);
        height += 1;
    }
    DepthMap::new(height, width.unwrap_or(0), values)
}

fn is_csv(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("csv") | Some("txt")
    )
}

/// Reads a depth map; `.csv`/`.txt` as CSV, anything else as PFM.
pub fn read_depth(path: &Path) -> Result<DepthMap> {
    if is_csv(path) {
        decode_depth_csv(&fs::read_to_string(path)?)
    } else {
        decode_pfm(&fs::read(path)?)
    }
}

pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    if is_csv(path) {
        write_atomic(path, encode_depth_csv(depth).as_bytes())
    } else {
        write_atomic(path, &encode_pfm(depth))
    }
}

/// Decodes binary (`P5`/`P6`) or ASCII (`P2`/`P3`) netpbm images into `[0, 1]`.
pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let mut cur = HeaderCursor::new(bytes);
    let magic = cur.token()?;
    let (channels, binary) = match magic {
        "P5" => (1, true),
        "P6" => (3, true),
        "P2" => (1, false),
        "P3" => (3, false),
        other => return Err(Error::parse(format!("unsupported image magic `{other}`"))),
    };
    let w: usize = cur.number("width")?;
    let h: usize = cur.number("height")?;
    let maxval: u32 = cur.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(format!("maxval {maxval} out of range")));
    }
    let n = w * h * channels;
    let maxval_f = maxval as f64;
    let mut values = Vec::with_capacity(n);
    if binary {
        let data = cur.payload()?;
        let bps = if maxval < 256 { 1 } else { 2 };
        if data.len() < n * bps {
            return Err(Error::parse("image raster truncated"));
        }
        for k in 0..n {
            let raw = if bps == 1 {
                data[k] as u32
            } else {
                u16::from_be_bytes([data[2 * k], data[2 * k + 1]]) as u32
            };
            if raw > maxval {
                return Err(Error::parse(format!("sample {raw} above maxval {maxval}")));
            }
            values.push(raw as f64 / maxval_f);
        }
    } else {
        for _ in 0..n {
            let raw: u32 = cur.number("sample")?;
            if raw > maxval {
                return Err(Error::parse(format!("sample {raw} above maxval {maxval}")));
            }
            values.push(raw as f64 / maxval_f);
        }
    }
    Image::new(h, w, channels, values)
}

/// Encodes an image as 8-bit binary PGM or PPM.
pub fn encode_pnm(image: &Image) -> Vec<u8> {
    let magic = if image.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.as_slice().iter().map(|v| (v * 255.0).round() as u8));
    out
}

pub fn read_image(path: &Path) -> Result<Image> {
    decode_pnm(&fs::read(path)?)
}

pub fn write_image(path: &Path, image: &Image) -> Result<()> {
    write_atomic(path, &encode_pnm(image))
}

/// `row,col,depth` lines. A `row,col,depth` header, blank lines and `#`
/// comments are skipped.
pub fn decode_sparse_csv(text: &str, height: usize, width: usize) -> Result<SparseDepthMap> {
    let mut anchors = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.eq_ignore_ascii_case("row,col,depth") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::parse(format!("line {}: expected row,col,depth", ln + 1)));
        }
        let bad = |what: &str| Error::parse(format!("line {}: invalid {what}", ln + 1));
        anchors.push(Anchor {
            row: fields[0].parse().map_err(|_| bad("row"))?,
            col: fields[1].parse().map_err(|_| bad("col"))?,
            depth: fields[2].parse().map_err(|_| bad("depth"))?,
        });
    }
    SparseDepthMap::new(height, width, anchors)
}

pub fn encode_sparse_csv(sparse: &SparseDepthMap) -> String {
    let mut s = String::new();
    for a in sparse.anchors() {
        let _ = writeln!(s, "{},{},{}", a.row, a.col, a.depth);
    }
    s
}

pub fn read_sparse(path: &Path, height: usize, width: usize) -> Result<SparseDepthMap> {
    decode_sparse_csv(&fs::read_to_string(path)?, height, width)
}

pub fn write_sparse(path: &Path, sparse: &SparseDepthMap) -> Result<()> {
    write_atomic(path, encode_sparse_csv(sparse).as_bytes())
}
