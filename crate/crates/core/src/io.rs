//! File formats: the cube container, SRF tables and error-map images.
//!
//! A cube file is the four bytes `HSRC`, one line of JSON
//!
//! ```text
//! {"bands":31,"height":64,"width":64,"dtype":"f64","layout":"band-major"}
//! ```
//!
//! terminated by `\n`, then the raw little-endian samples in band-major order.
//! An optional `"scale":[lo,hi]` records the value range of the data; it is
//! carried through but not applied.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cube::HsiCube;
use crate::degradation::SpectralResponse;
use crate::error::{HsError, Result};

pub const MAGIC: &[u8; 4] = b"HSRC";
pub const LAYOUT: &str = "band-major";
pub const DEFAULT_MAX_ERROR: f64 = 0.1;
const MAX_HEADER_BYTES: usize = 64 * 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "f32" => Some(Dtype::F32),
            "f64" => Some(Dtype::F64),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeHeader {
    pub bands: usize,
    pub height: usize,
    pub width: usize,
    pub dtype: String,
    pub layout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<[f64; 2]>,
}

impl CubeHeader {
    pub fn payload_bytes(&self, dtype: Dtype) -> u64 {
        (self.bands * self.height * self.width * dtype.size()) as u64
    }
}

pub fn save_cube(path: impl AsRef<Path>, cube: &HsiCube, dtype: Dtype) -> Result<()> {
    save_cube_with_scale(path, cube, dtype, None)
}

pub fn save_cube_with_scale(
    path: impl AsRef<Path>,
    cube: &HsiCube,
    dtype: Dtype,
    scale: Option<[f64; 2]>,
) -> Result<()> {
    let path = path.as_ref();
    let header = CubeHeader {
        bands: cube.bands(),
        height: cube.height(),
        width: cube.width(),
        dtype: dtype.name().to_string(),
        layout: LAYOUT.to_string(),
        scale,
    };
    let json = serde_json::to_string(&header).expect("header serializes");
    let mut buf =
        Vec::with_capacity(MAGIC.len() + json.len() + 1 + cube.data().len() * dtype.size());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(json.as_bytes());
    buf.push(b'\n');
    match dtype {
        Dtype::F64 => cube
            .data()
            .iter()
            .for_each(|v| buf.extend_from_slice(&v.to_le_bytes())),
        Dtype::F32 => cube
            .data()
            .iter()
            .for_each(|v| buf.extend_from_slice(&(*v as f32).to_le_bytes())),
    }
    let mut f = fs::File::create(path).map_err(|e| HsError::io(path, e))?;
    f.write_all(&buf).map_err(|e| HsError::io(path, e))?;
    Ok(())
}

pub fn load_cube(path: impl AsRef<Path>) -> Result<HsiCube> {
    Ok(load_cube_with_header(path)?.0)
}

pub fn load_cube_with_header(path: impl AsRef<Path>) -> Result<(HsiCube, CubeHeader)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| HsError::io(path, e))?;
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(HsError::BadMagic { path: path.into() });
    }
    let rest = &bytes[MAGIC.len()..];
    let header_err = |reason: String| HsError::Header {
        path: path.into(),
        reason,
    };
    let nl = rest
        .iter()
        .take(MAX_HEADER_BYTES)
        .position(|&b| b == b'\n')
        .ok_or_else(|| header_err("no newline-terminated header".into()))?;
    let text = std::str::from_utf8(&rest[..nl]).map_err(|e| header_err(e.to_string()))?;
    let header: CubeHeader = serde_json::from_str(text).map_err(|e| header_err(e.to_string()))?;
    let dtype = Dtype::parse(&header.dtype).ok_or_else(|| HsError::UnknownDtype {
        path: path.into(),
        dtype: header.dtype.clone(),
    })?;
    if header.layout != LAYOUT {
        return Err(header_err(format!(
            "unsupported layout {:?}",
            header.layout
        )));
    }
    if header.bands == 0 || header.height == 0 || header.width == 0 {
        return Err(header_err("zero-sized dimension".into()));
    }

    let payload = &rest[nl + 1..];
    let expected = header.payload_bytes(dtype);
    let found = payload.len() as u64;
    if found < expected {
        return Err(HsError::Truncated {
            path: path.into(),
            expected,
            found,
        });
    }
    if found > expected {
        return Err(HsError::TrailingData {
            path: path.into(),
            extra: found - expected,
        });
    }
    let data: Vec<f64> = match dtype {
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    let cube = HsiCube::from_vec(header.bands, header.height, header.width, data)?;
    Ok((cube, header))
}

/// Reads a spectral response table: a header `band,<name0>,...`, then one
/// row per hyperspectral band holding that band's weight in every colour
/// channel. The first column is a label and is ignored. Rows of `R` are
/// normalized to sum 1.
pub fn load_srf_csv(path: impl AsRef<Path>) -> Result<SpectralResponse> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| HsError::io(path, e))?;
    let csv_err = |line: usize, reason: String| HsError::Csv {
        path: path.into(),
        line,
        reason,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| csv_err(1, "empty file".into()))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    if names.len() < 2 || !names[0].eq_ignore_ascii_case("band") {
        return Err(csv_err(hline, "header must be `band,<channel>,...`".into()));
    }
    let channels = names.len() - 1;
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); channels];
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != names.len() {
            return Err(csv_err(
                lineno,
                format!("expected {} fields, got {}", names.len(), fields.len()),
            ));
        }
        for (c, f) in fields[1..].iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| csv_err(lineno, format!("not a number: {f:?}")))?;
            columns[c].push(v);
        }
    }
    let bands = columns[0].len();
    if bands == 0 {
        return Err(csv_err(hline, "no data rows".into()));
    }
    SpectralResponse::new(channels, bands, columns.concat())
}

/// Writes `srf` in the layout read by [`load_srf_csv`], labelling rows with
/// their band index.
pub fn save_srf_csv(path: impl AsRef<Path>, srf: &SpectralResponse, names: &[&str]) -> Result<()> {
    let path = path.as_ref();
    if names.len() != srf.out_bands() {
        return Err(HsError::InvalidParameter(format!(
            "{} channel names for {} channels",
            names.len(),
            srf.out_bands()
        )));
    }
    let mut out = format!("band,{}\n", names.join(","));
    for b in 0..srf.in_bands() {
        out.push_str(&b.to_string());
        for c in 0..srf.out_bands() {
            out.push_str(&format!(",{}", srf.at(c, b)));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| HsError::io(path, e))
}

/// Grey levels of `|x_hat - x_ref|` in one band: `floor(255 * d / max_error + 0.5)`
/// clamped to 255.
pub fn error_map_levels(
    x_hat: &HsiCube,
    x_ref: &HsiCube,
    band: usize,
    max_error: f64,
) -> Result<Vec<u8>> {
    x_hat.check_same(x_ref)?;
    if band >= x_ref.bands() {
        return Err(HsError::InvalidParameter(format!(
            "band {band} out of range for {} bands",
            x_ref.bands()
        )));
    }
    if !(max_error > 0.0 && max_error.is_finite()) {
        return Err(HsError::InvalidParameter(format!(
            "max error must be > 0, got {max_error}"
        )));
    }
    Ok(x_hat
        .band(band)
        .iter()
        .zip(x_ref.band(band))
        .map(|(a, b)| {
            let level = ((a - b).abs() / max_error * 255.0 + 0.5).floor();
            level.min(255.0) as u8
        })
        .collect())
}

/// Writes the error map of one band as a binary (P5) graymap.
pub fn export_error_map(
    x_hat: &HsiCube,
    x_ref: &HsiCube,
    band: usize,
    path: impl AsRef<Path>,
    max_error: f64,
) -> Result<()> {
    let path = path.as_ref();
    let levels = error_map_levels(x_hat, x_ref, band, max_error)?;
    let mut buf = format!("P5\n{} {}\n255\n", x_ref.width(), x_ref.height()).into_bytes();
    buf.extend_from_slice(&levels);
    fs::write(path, buf).map_err(|e| HsError::io(path, e))
}

/// Zero-based index of the band whose center is nearest to `wavelength` on
/// `bands` channels evenly spaced over `lo..=hi`.
pub fn band_for_wavelength(wavelength: f64, bands: usize, lo: f64, hi: f64) -> Result<usize> {
    if bands == 0 || !(hi > lo) {
        return Err(HsError::InvalidParameter(format!(
            "bad wavelength grid {lo}..{hi} with {bands} bands"
        )));
    }
    if bands == 1 {
        return Ok(0);
    }
    let step = (hi - lo) / (bands - 1) as f64;
    let t = (wavelength - lo) / step;
    if !(-0.5..=(bands as f64 - 0.5)).contains(&t) {
        return Err(HsError::InvalidParameter(format!(
            "wavelength {wavelength} nm is outside {lo}..{hi} nm"
        )));
    }
    Ok((t.round() as usize).min(bands - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degradation::band_wavelengths;
    use crate::oracle;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn f64_round_trip_is_bit_identical() {
        let d = tmp();
        let p = d.path().join("a.hsrc");
        let x = oracle::random_cube(3, 5, 7, 1).map(|v| v * 1e-3 + std::f64::consts::PI);
        save_cube(&p, &x, Dtype::F64).unwrap();
        let y = load_cube(&p).unwrap();
        assert!(x
            .data()
            .iter()
            .zip(y.data())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn f32_round_trip_and_file_size() {
        let d = tmp();
        let p = d.path().join("a.hsrc");
        let x = oracle::random_unit_cube(31, 16, 16, 2).map(|v| v + 0.5);
        save_cube(&p, &x, Dtype::F32).unwrap();
        let y = load_cube(&p).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() <= 1e-7 * a.abs());
        }
        let header = r#"{"bands":31,"height":16,"width":16,"dtype":"f32","layout":"band-major"}"#;
        let len = fs::metadata(&p).unwrap().len();
        assert_eq!(len, 4 + header.len() as u64 + 1 + 31 * 16 * 16 * 4);
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[4..4 + header.len()], header.as_bytes());
    }

    #[test]
    fn scale_is_carried() {
        let d = tmp();
        let p = d.path().join("a.hsrc");
        let x = HsiCube::new(1, 2, 2, 0.5).unwrap();
        save_cube_with_scale(&p, &x, Dtype::F64, Some([0.0, 4095.0])).unwrap();
        let (_, h) = load_cube_with_header(&p).unwrap();
        assert_eq!(h.scale, Some([0.0, 4095.0]));
    }

    #[test]
    fn distinct_errors() {
        let d = tmp();
        let p = d.path().join("a.hsrc");
        let x = HsiCube::new(2, 3, 3, 0.25).unwrap();
        save_cube(&p, &x, Dtype::F64).unwrap();
        let good = fs::read(&p).unwrap();

        fs::write(&p, &good[..good.len() - 1]).unwrap();
        assert!(matches!(
            load_cube(&p),
            Err(HsError::Truncated {
                expected: 144,
                found: 143,
                ..
            })
        ));

        let mut extra = good.clone();
        extra.push(0);
        fs::write(&p, &extra).unwrap();
        assert!(matches!(
            load_cube(&p),
            Err(HsError::TrailingData { extra: 1, .. })
        ));

        let mut bad = good.clone();
        bad[0] = b'X';
        fs::write(&p, &bad).unwrap();
        assert!(matches!(load_cube(&p), Err(HsError::BadMagic { .. })));

        let text = String::from_utf8_lossy(&good).replace("\"f64\"", "\"i16\"");
        fs::write(&p, text.as_bytes()).unwrap();
        assert!(matches!(load_cube(&p), Err(HsError::UnknownDtype { .. })));

        fs::write(&p, b"HSRC{\"bands\":1} junk\n").unwrap();
        assert!(matches!(load_cube(&p), Err(HsError::Header { .. })));

        fs::write(&p, b"HSRC{\"bands\":1,\"height\":1,\"width\":1,\"dtype\":\"f64\",\"layout\":\"band-major\"} x\n").unwrap();
        assert!(matches!(load_cube(&p), Err(HsError::Header { .. })));

        let err = load_cube(d.path().join("missing.hsrc")).unwrap_err();
        assert!(matches!(err, HsError::Io { .. }));
        assert!(err.to_string().contains("missing.hsrc"));
    }

    #[test]
    fn srf_csv_round_trip_and_normalization() {
        let d = tmp();
        let p = d.path().join("srf.csv");
        fs::write(&p, "band,r,g,b\n0,2,0,1\n1,2,1,1\n2,0,1,2\n3,0,2,0\n").unwrap();
        let srf = load_srf_csv(&p).unwrap();
        assert_eq!((srf.out_bands(), srf.in_bands()), (3, 4));
        assert_eq!(srf.at(0, 0), 0.5);
        assert_eq!(srf.at(1, 3), 0.5);
        assert_eq!(srf.at(2, 2), 0.5);

        let q = d.path().join("srf2.csv");
        let rgb = SpectralResponse::default_rgb(31).unwrap();
        save_srf_csv(&q, &rgb, &["r", "g", "b"]).unwrap();
        let back = load_srf_csv(&q).unwrap();
        for (a, b) in rgb.matrix().iter().zip(back.matrix()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn srf_csv_errors_name_the_line() {
        let d = tmp();
        let p = d.path().join("srf.csv");
        fs::write(&p, "band,r,g,b\n0,1,1,1\n1,1,x,1\n").unwrap();
        assert!(matches!(
            load_srf_csv(&p),
            Err(HsError::Csv { line: 3, .. })
        ));
        fs::write(&p, "band,r,g,b\n0,1,1\n").unwrap();
        assert!(matches!(
            load_srf_csv(&p),
            Err(HsError::Csv { line: 2, .. })
        ));
        fs::write(&p, "wl,r\n0,1\n").unwrap();
        assert!(matches!(
            load_srf_csv(&p),
            Err(HsError::Csv { line: 1, .. })
        ));
        fs::write(&p, "band,r,g,b\n0,1,-1,1\n1,1,1,1\n2,1,1,1\n3,1,1,1\n").unwrap();
        assert!(matches!(load_srf_csv(&p), Err(HsError::InvalidSrf(_))));
    }

    #[test]
    fn error_map_levels_and_file() {
        let x = HsiCube::new(2, 3, 4, 0.2).unwrap();
        assert!(error_map_levels(&x, &x, 1, 0.1)
            .unwrap()
            .iter()
            .all(|&v| v == 0));

        let xh = x.map(|v| v + 0.05);
        let lv = error_map_levels(&xh, &x, 0, DEFAULT_MAX_ERROR).unwrap();
        assert!(lv.iter().all(|&v| v == 127 || v == 128));
        let exact = HsiCube::new(1, 1, 1, 0.0).unwrap();
        let half = HsiCube::new(1, 1, 1, 0.05).unwrap();
        assert_eq!(error_map_levels(&half, &exact, 0, 0.1).unwrap(), vec![128]);
        let big = HsiCube::new(1, 1, 1, 3.0).unwrap();
        assert_eq!(error_map_levels(&big, &exact, 0, 0.1).unwrap(), vec![255]);

        let d = tmp();
        let p = d.path().join("e.pgm");
        export_error_map(&xh, &x, 0, &p, 0.1).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5\n4 3\n255\n"));
        assert_eq!(bytes.len(), 11 + 12);
        let q = d.path().join("f.pgm");
        export_error_map(&xh, &x, 0, &q, 0.1).unwrap();
        assert_eq!(bytes, fs::read(&q).unwrap());

        assert!(export_error_map(&xh, &x, 2, &p, 0.1).is_err());
        assert!(export_error_map(&xh, &x, 0, &p, 0.0).is_err());
    }

    #[test]
    fn wavelength_to_band() {
        assert_eq!(band_for_wavelength(540.0, 31, 400.0, 700.0).unwrap(), 14);
        assert_eq!(band_for_wavelength(400.0, 31, 400.0, 700.0).unwrap(), 0);
        assert_eq!(band_for_wavelength(704.0, 31, 400.0, 700.0).unwrap(), 30);
        assert_eq!(band_for_wavelength(544.9, 31, 400.0, 700.0).unwrap(), 14);
        assert!(band_for_wavelength(710.0, 31, 400.0, 700.0).is_err());
        let wl = band_wavelengths(31, 400.0, 700.0);
        assert_eq!(wl[14], 540.0);
    }
}
