//! Hyperspectral cube type and the HSRC container format.
//!
//! HSRC layout (all little-endian): magic `HSRC`, u32 version, u32 W,
//! u32 H, u32 L, L×f32 wavelengths, then L·H·W f32 samples band-sequential.
//! RGB images reuse the container with L=3 and channel indices 0,1,2 in
//! place of wavelengths, or arrive as 8-bit binary PPM with values divided
//! by 255.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const HSRC_MAGIC: &[u8; 4] = b"HSRC";
pub const HSRC_VERSION: u32 = 1;

/// An L-band image cube with wavelengths, values in [0,1], band-sequential
/// storage (`data[band·H·W + row·W + col]`).
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    width: usize,
    height: usize,
    wavelengths: Vec<f32>,
    data: Vec<f32>,
}

impl HsiCube {
    pub fn new(
        width: usize,
        height: usize,
        wavelengths: Vec<f32>,
        data: Vec<f32>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || wavelengths.is_empty() {
            return Err(Error::Input(format!(
                "cube dimensions must be positive: {width}×{height}, {} bands",
                wavelengths.len()
            )));
        }
        if wavelengths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Input(
                "wavelengths must be strictly increasing".to_string(),
            ));
        }
        let expected = wavelengths.len() * width * height;
        if data.len() != expected {
            return Err(Error::dimension(
                "HsiCube::new",
                format!("{expected} samples"),
                format!("{}", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::Input(
                "cube samples must be finite and within [0,1]".to_string(),
            ));
        }
        Ok(HsiCube {
            width,
            height,
            wavelengths,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn wavelengths(&self) -> &[f32] {
        &self.wavelengths
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn band(&self, b: usize) -> Result<&[f32]> {
        if b >= self.bands() {
            return Err(Error::Index(format!(
                "band {b} out of range for {} bands",
                self.bands()
            )));
        }
        let plane = self.width * self.height;
        Ok(&self.data[b * plane..(b + 1) * plane])
    }

    pub fn sample(&self, band: usize, row: usize, col: usize) -> f32 {
        self.data[band * self.width * self.height + row * self.width + col]
    }

    /// Spectrum at one pixel, in band order.
    pub fn spectrum(&self, row: usize, col: usize) -> Vec<f32> {
        let plane = self.width * self.height;
        (0..self.bands())
            .map(|b| self.data[b * plane + row * self.width + col])
            .collect()
    }
}

pub fn save_cube(cube: &HsiCube, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(HSRC_MAGIC)?;
    w.write_u32::<LittleEndian>(HSRC_VERSION)?;
    w.write_u32::<LittleEndian>(cube.width as u32)?;
    w.write_u32::<LittleEndian>(cube.height as u32)?;
    w.write_u32::<LittleEndian>(cube.bands() as u32)?;
    for &wl in &cube.wavelengths {
        w.write_f32::<LittleEndian>(wl)?;
    }
    for &v in &cube.data {
        w.write_f32::<LittleEndian>(v)?;
    }
    w.flush()?;
    Ok(())
}

struct CountingReader<R: Read> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn format_err(&self, message: impl Into<String>) -> Error {
        Error::Format {
            offset: self.offset,
            message: message.into(),
        }
    }
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.offset += n as u64;
        Ok(n)
    }
}

pub fn load_cube(path: &Path) -> Result<HsiCube> {
    let mut r = CountingReader {
        inner: BufReader::new(File::open(path)?),
        offset: 0,
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| r.format_err("file too short for HSRC magic"))?;
    if &magic != HSRC_MAGIC {
        return Err(r.format_err(format!("bad magic {magic:?}, expected \"HSRC\"")));
    }
    let version = r
        .read_u32::<LittleEndian>()
        .map_err(|_| r.format_err("truncated version field"))?;
    if version != HSRC_VERSION {
        return Err(r.format_err(format!(
            "unsupported HSRC version {version}, expected {HSRC_VERSION}"
        )));
    }
    let width = r
        .read_u32::<LittleEndian>()
        .map_err(|_| r.format_err("truncated width field"))? as usize;
    let height = r
        .read_u32::<LittleEndian>()
        .map_err(|_| r.format_err("truncated height field"))? as usize;
    let bands = r
        .read_u32::<LittleEndian>()
        .map_err(|_| r.format_err("truncated band-count field"))? as usize;
    if width == 0 || height == 0 || bands == 0 {
        return Err(r.format_err(format!("degenerate dimensions {width}×{height}×{bands}")));
    }
    let mut wavelengths = Vec::with_capacity(bands);
    for i in 0..bands {
        wavelengths.push(
            r.read_f32::<LittleEndian>()
                .map_err(|_| r.format_err(format!("truncated wavelength {i}")))?,
        );
    }
    let count = bands * width * height;
    let mut data = Vec::with_capacity(count);
    for i in 0..count {
        data.push(
            r.read_f32::<LittleEndian>()
                .map_err(|_| r.format_err(format!("truncated payload at sample {i}")))?,
        );
    }
    let mut probe = [0u8; 1];
    if r.inner.read(&mut probe)? != 0 {
        return Err(r.format_err("trailing bytes after payload"));
    }
    HsiCube::new(width, height, wavelengths, data)
}

/// Save an RGB `[3 × H × W]` tensor as an HSRC file with L=3 and channel
/// indices as pseudo-wavelengths.
pub fn save_rgb(rgb: &Tensor<f32>, path: &Path) -> Result<()> {
    let s = rgb.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::dimension(
            "save_rgb",
            "[3×H×W]".to_string(),
            format!("{s:?}"),
        ));
    }
    let cube = HsiCube::new(s[2], s[1], vec![0.0, 1.0, 2.0], rgb.data().to_vec())?;
    save_cube(&cube, path)
}

/// Load an RGB image as a `[3 × H × W]` tensor. Accepts an HSRC file with
/// L=3 or an 8-bit binary PPM (values divided by 255).
pub fn load_rgb(path: &Path) -> Result<Tensor<f32>> {
    let mut head = [0u8; 2];
    {
        let mut f = File::open(path)?;
        f.read_exact(&mut head).map_err(|_| Error::Format {
            offset: 0,
            message: "file too short to identify".to_string(),
        })?;
    }
    if &head == b"P6" {
        return load_ppm(path);
    }
    let cube = load_cube(path)?;
    if cube.bands() != 3 {
        return Err(Error::Input(format!(
            "RGB input must have 3 bands, file has {}",
            cube.bands()
        )));
    }
    Tensor::from_vec(
        vec![3, cube.height(), cube.width()],
        cube.data().to_vec(),
    )
}

fn load_ppm(path: &Path) -> Result<Tensor<f32>> {
    let bytes = std::fs::read(path)?;
    let mut pos = 0usize;
    let mut fields = Vec::new();
    // header: "P6", width, height, maxval as whitespace-separated tokens,
    // with '#' comments running to end of line
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !(bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format {
                offset: pos as u64,
                message: "truncated PPM header".to_string(),
            });
        }
        fields.push(
            std::str::from_utf8(&bytes[start..pos])
                .map_err(|_| Error::Format {
                    offset: start as u64,
                    message: "non-UTF8 PPM header token".to_string(),
                })?
                .to_string(),
        );
    }
    if fields[0] != "P6" {
        return Err(Error::Format {
            offset: 0,
            message: format!("expected P6 pixmap, found {}", fields[0]),
        });
    }
    let w: usize = fields[1].parse().map_err(|_| Error::Format {
        offset: 2,
        message: "bad PPM width".to_string(),
    })?;
    let h: usize = fields[2].parse().map_err(|_| Error::Format {
        offset: 2,
        message: "bad PPM height".to_string(),
    })?;
    let maxval: usize = fields[3].parse().map_err(|_| Error::Format {
        offset: 2,
        message: "bad PPM maxval".to_string(),
    })?;
    if maxval != 255 {
        return Err(Error::Format {
            offset: pos as u64,
            message: format!("only 8-bit PPM supported, maxval {maxval}"),
        });
    }
    pos += 1; // single whitespace after maxval
    let needed = 3 * w * h;
    if bytes.len() < pos + needed {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            message: format!("PPM payload truncated: need {needed} bytes"),
        });
    }
    // interleaved RGB bytes -> planar [3,H,W] floats
    let mut data = vec![0f32; needed];
    for p in 0..w * h {
        for c in 0..3 {
            data[c * w * h + p] = bytes[pos + 3 * p + c] as f32 / 255.0;
        }
    }
    Tensor::from_vec(vec![3, h, w], data)
}

/// Write one grayscale image as an 8-bit binary PGM, with the value scale
/// recorded in a header comment. `data` is row-major in [0, max]; values are
/// mapped linearly onto 0..=255 (an all-zero image keeps scale max=0).
pub fn write_pgm(data: &[f32], width: usize, height: usize, max: f32, path: &Path) -> Result<()> {
    if data.len() != width * height {
        return Err(Error::dimension(
            "write_pgm",
            format!("{} samples", width * height),
            format!("{}", data.len()),
        ));
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "P5")?;
    writeln!(w, "# scale max={max}")?;
    writeln!(w, "{width} {height}")?;
    writeln!(w, "255")?;
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let bytes: Vec<u8> = data
        .iter()
        .map(|&v| (v * scale).round().clamp(0.0, 255.0) as u8)
        .collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}
