use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use super::SyntheticScene;
use crate::error::{Error, Result};
use crate::maps::{ConfidenceMap, DisparityMap, Image};

/// Fixed-point scale of 16-bit disparity PNGs.
pub const DISPARITY_SCALE: f64 = 256.0;

/// Stored value of a disparity: `round(d·256)`, at least 1 so that a valid
/// zero disparity is not confused with the invalid marker 0.
pub fn encode_disparity(d: f64) -> u16 {
    (d * DISPARITY_SCALE).round().clamp(1.0, u16::MAX as f64) as u16
}

pub fn write_disparity_png(path: impl AsRef<Path>, map: &DisparityMap) -> Result<()> {
    let mut buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::new(map.width as u32, map.height as u32);
    for (i, px) in buf.pixels_mut().enumerate() {
        px.0[0] = if map.valid[i] { encode_disparity(map.data[i]) } else { 0 };
    }
    buf.save(path)?;
    Ok(())
}

pub fn read_disparity_png(path: impl AsRef<Path>) -> Result<DisparityMap> {
    let img = image::open(path)?;
    let buf = match img {
        DynamicImage::ImageLuma16(b) => b,
        other => {
            return Err(Error::Format(format!(
                "disparity PNG must be 16-bit grayscale, got {:?}",
                other.color()
            )))
        }
    };
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let mut map = DisparityMap::new(h, w);
    for (i, px) in buf.pixels().enumerate() {
        let v = px.0[0];
        map.valid[i] = v != 0;
        map.data[i] = v as f64 / DISPARITY_SCALE;
    }
    Ok(map)
}

/// Read a PFM disparity file (first channel of color files); non-finite
/// values are marked invalid.
pub fn read_pfm(path: impl AsRef<Path>) -> Result<DisparityMap> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Format("truncated PFM header".into()));
        }
        tokens.extend(line.split_whitespace().map(str::to_owned));
    }
    let channels = match tokens[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        t => return Err(Error::Format(format!("not a PFM file (magic {t:?})"))),
    };
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PFM size {s:?}")))
    };
    let (w, h) = (parse(&tokens[1])?, parse(&tokens[2])?);
    let scale: f64 = tokens[3]
        .parse()
        .map_err(|_| Error::Format(format!("bad PFM scale {:?}", tokens[3])))?;
    let mut raw = vec![0u8; w * h * channels * 4];
    r.read_exact(&mut raw)
        .map_err(|_| Error::Format("truncated PFM data".into()))?;
    let mut map = DisparityMap::new(h, w);
    for row in 0..h {
        // rows are stored bottom to top
        let y = h - 1 - row;
        for x in 0..w {
            let o = ((row * w + x) * channels) * 4;
            let b = [raw[o], raw[o + 1], raw[o + 2], raw[o + 3]];
            let v = if scale < 0.0 {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            } as f64;
            let i = y * w + x;
            map.valid[i] = v.is_finite();
            map.data[i] = if v.is_finite() { v } else { 0.0 };
        }
    }
    Ok(map)
}

/// 8-bit grayscale or RGB image scaled to `[0, 1]`.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let img = image::open(path)?;
    let gray = matches!(
        img,
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_)
    );
    if gray {
        let b = img.to_luma8();
        let (w, h) = (b.width() as usize, b.height() as usize);
        Image::new(1, h, w, b.pixels().map(|p| p.0[0] as f64 / 255.0).collect())
    } else {
        let b = img.to_rgb8();
        let (w, h) = (b.width() as usize, b.height() as usize);
        let mut out = Image::zeros(3, h, w);
        for (x, y, p) in b.enumerate_pixels() {
            for c in 0..3 {
                out.set(c, y as usize, x as usize, p.0[c] as f64 / 255.0);
            }
        }
        Ok(out)
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let (w, h) = (img.width as u32, img.height as u32);
    match img.channels {
        1 => GrayImage::from_fn(w, h, |x, y| Luma([to_u8(img.at(0, y as usize, x as usize))])).save(path)?,
        3 => RgbImage::from_fn(w, h, |x, y| {
            let p = |c| to_u8(img.at(c, y as usize, x as usize));
            Rgb([p(0), p(1), p(2)])
        })
        .save(path)?,
        c => return Err(Error::Input(format!("cannot save a {c}-channel image"))),
    }
    Ok(())
}

/// Raw 8-bit gray levels, row-major.
pub fn write_gray(path: impl AsRef<Path>, height: usize, width: usize, levels: &[u8]) -> Result<()> {
    if levels.len() != height * width {
        return Err(Error::Input("gray buffer does not match its extent".into()));
    }
    GrayImage::from_raw(width as u32, height as u32, levels.to_vec())
        .expect("length checked")
        .save(path)?;
    Ok(())
}

/// Confidence in `[0, 1]` as an 8-bit image.
pub fn write_confidence_png(path: impl AsRef<Path>, map: &ConfidenceMap) -> Result<()> {
    let levels: Vec<u8> = map.data.iter().map(|&v| to_u8(v)).collect();
    write_gray(path, map.height, map.width, &levels)
}

/// Ground truth from a 16-bit PNG or a PFM file, by extension.
pub fn read_disparity(path: impl AsRef<Path>) -> Result<DisparityMap> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => read_pfm(path),
        _ => read_disparity_png(path),
    }
}

/// Store a scene as `left.png`, `right.png`, `gt.png` and `occ.png`
/// (255 marks occluded pixels) inside `dir`.
pub fn write_scene(dir: impl AsRef<Path>, scene: &SyntheticScene) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_image(dir.join("left.png"), &scene.left)?;
    write_image(dir.join("right.png"), &scene.right)?;
    write_disparity_png(dir.join("gt.png"), &scene.gt)?;
    let occ: Vec<u8> = scene.occluded.iter().map(|&o| if o { 255 } else { 0 }).collect();
    write_gray(dir.join("occ.png"), scene.gt.height, scene.gt.width, &occ)
}

/// Load a pair directory written by [`write_scene`]. `gt.png` (or
/// `gt.pfm`) and `occ.png` are optional; without ground truth every pixel
/// is invalid.
pub fn read_scene(dir: impl AsRef<Path>) -> Result<SyntheticScene> {
    let dir = dir.as_ref();
    let left = read_image(dir.join("left.png"))?;
    let right = read_image(dir.join("right.png"))?;
    if !left.same_extent(&right) || left.channels != right.channels {
        return Err(Error::Input(format!(
            "{}: left and right images differ in shape",
            dir.display()
        )));
    }
    let (h, w) = (left.height, left.width);
    let gt = if dir.join("gt.png").exists() {
        read_disparity_png(dir.join("gt.png"))?
    } else if dir.join("gt.pfm").exists() {
        read_pfm(dir.join("gt.pfm"))?
    } else {
        let mut g = DisparityMap::new(h, w);
        g.valid.fill(false);
        g
    };
    if (gt.height, gt.width) != (h, w) {
        return Err(Error::Input(format!(
            "{}: ground truth size differs from the images",
            dir.display()
        )));
    }
    let occluded = if dir.join("occ.png").exists() {
        let m = read_image(dir.join("occ.png"))?;
        m.plane(0).iter().map(|&v| v > 0.5).collect()
    } else {
        vec![false; h * w]
    };
    Ok(SyntheticScene {
        left,
        right,
        gt,
        occluded,
        reflective: vec![false; h * w],
    })
}
