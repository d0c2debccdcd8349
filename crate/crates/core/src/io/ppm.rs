//! Binary PPM (P6, maxval 255) frames and clip loading.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::transformer::ModelConfig;

/// An 8-bit RGB image, row-major, 3 bytes per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height * 3],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn decode_ppm(buf: &[u8]) -> Result<RgbImage> {
    if buf.len() < 2 || &buf[..2] != b"P6" {
        let tag = String::from_utf8_lossy(&buf[..buf.len().min(2)]).into_owned();
        return Err(Error::UnsupportedPpm(format!("magic {tag:?}, only P6 is supported")));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Whitespace and comments may separate header fields.
        loop {
            match buf.get(pos) {
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while buf.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while buf.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::UnsupportedPpm(format!("malformed header at byte {start}")));
        }
        *field = std::str::from_utf8(&buf[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::UnsupportedPpm("header value out of range".into()))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedPpm(format!("maxval {maxval}, only 255 is supported")));
    }
    if width == 0 || height == 0 {
        return Err(Error::UnsupportedPpm("zero-sized image".into()));
    }
    if !buf.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::UnsupportedPpm("missing whitespace after maxval".into()));
    }
    pos += 1;
    let need = width * height * 3;
    let pixels = buf
        .get(pos..pos + need)
        .ok_or_else(|| Error::Truncated(format!("ppm raster needs {need} bytes")))?
        .to_vec();
    Ok(RgbImage {
        width,
        height,
        pixels,
    })
}

pub fn write_ppm(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(img)).map_err(|e| Error::io(path, e))
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    decode_ppm(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Center-crops to a square, then nearest-neighbor resizes to `size`.
/// Each output pixel samples the source pixel under its center.
pub fn crop_resize(img: &RgbImage, size: usize) -> RgbImage {
    let side = img.width.min(img.height);
    let (x0, y0) = ((img.width - side) / 2, (img.height - side) / 2);
    let mut out = RgbImage::new(size, size);
    for y in 0..size {
        let sy = y0 + (2 * y + 1) * side / (2 * size);
        for x in 0..size {
            let sx = x0 + (2 * x + 1) * side / (2 * size);
            out.put(x, y, img.get(sx, sy));
        }
    }
    out
}

/// Loads the first `cfg.frames` `.ppm` files of `dir` (lexicographic
/// order) into a `[F, image_size, image_size, 3]` tensor scaled to [0, 1].
pub fn load_video_ppm(dir: impl AsRef<Path>, cfg: &ModelConfig) -> Result<Tensor> {
    let dir = dir.as_ref();
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ppm")))
        .collect();
    files.sort();
    if files.len() < cfg.frames {
        return Err(Error::TooFewFrames {
            dir: dir.to_path_buf(),
            needed: cfg.frames,
            found: files.len(),
        });
    }
    let size = cfg.image_size;
    let mut data = Vec::with_capacity(cfg.frames * size * size * 3);
    let mut first_dims = None;
    for path in &files[..cfg.frames] {
        let img = read_ppm(path)?;
        match first_dims {
            None => first_dims = Some((img.width, img.height)),
            Some(d) if d != (img.width, img.height) => {
                return Err(Error::InconsistentFrames(format!(
                    "{} is {}x{}, first frame is {}x{}",
                    path.display(),
                    img.width,
                    img.height,
                    d.0,
                    d.1
                )))
            }
            Some(_) => {}
        }
        let img = if img.width == size && img.height == size {
            img
        } else {
            crop_resize(&img, size)
        };
        data.extend(img.pixels.iter().map(|&b| b as f32 / 255.0));
    }
    Tensor::new(vec![cfg.frames, size, size, 3], data)
}

/// Writes a `[F, H, W, 3]` tensor in [0, 1] as numbered PPM frames.
pub fn save_video_ppm(dir: impl AsRef<Path>, video: &Tensor) -> Result<()> {
    let dir = dir.as_ref();
    let [f, h, w, c] = match video.dims() {
        &[f, h, w, c] => [f, h, w, c],
        other => return Err(Error::Shape(format!("video must be [F, H, W, 3], got {other:?}"))),
    };
    if c != 3 {
        return Err(Error::Shape(format!("video has {c} channels")));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for i in 0..f {
        let px = &video.data()[i * h * w * 3..(i + 1) * h * w * 3];
        let img = RgbImage {
            width: w,
            height: h,
            pixels: px.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect(),
        };
        write_ppm(dir.join(format!("frame_{i:04}.ppm")), &img)?;
    }
    Ok(())
}
