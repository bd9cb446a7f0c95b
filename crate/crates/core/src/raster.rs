//! Rendering pen-down trajectories into grayscale images.
//!
//! Points are mapped with one isotropic scale into the margin box, centred,
//! and consecutive samples of a stroke are joined with Bresenham lines drawn
//! with a square brush. Strokes are not connected across pen lifts. The
//! trace is binary: 0 is ink, 255 is background.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{segment_strokes, HandwritingRecord};

pub const INK: u8 = 0;
pub const BACKGROUND: u8 = 255;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    /// Row-major intensities.
    pub pixels: Vec<u8>,
}

impl RasterImage {
    pub fn blank(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "image must be nonempty");
        RasterImage {
            width,
            height,
            pixels: vec![BACKGROUND; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn is_ink(&self, col: usize, row: usize) -> bool {
        self.get(col, row) < 128
    }

    pub fn ink_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p < 128).count()
    }

    fn stamp(&mut self, col: i64, row: i64, brush: usize) {
        let back = ((brush - 1) / 2) as i64;
        for dr in 0..brush as i64 {
            for dc in 0..brush as i64 {
                let (c, r) = (col - back + dc, row - back + dr);
                if c >= 0 && r >= 0 && (c as usize) < self.width && (r as usize) < self.height {
                    self.pixels[r as usize * self.width + c as usize] = INK;
                }
            }
        }
    }

    fn line(&mut self, from: (i64, i64), to: (i64, i64), brush: usize) {
        let (mut x0, mut y0) = from;
        let (x1, y1) = to;
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.stamp(x0, y0, brush);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterConfig {
    pub canvas: usize,
    pub margin_frac: f64,
    pub stroke_width: usize,
    pub flip_y: bool,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            canvas: 256,
            margin_frac: 0.08,
            stroke_width: 2,
            flip_y: true,
        }
    }
}

impl RasterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.canvas == 0 {
            return Err(Error::InvalidConfig("canvas must be positive".into()));
        }
        if !(0.0..=0.4).contains(&self.margin_frac) {
            return Err(Error::InvalidConfig("margin_frac must lie in [0, 0.4]".into()));
        }
        if self.stroke_width == 0 || self.stroke_width > self.canvas {
            return Err(Error::InvalidConfig("stroke_width out of range".into()));
        }
        Ok(())
    }

    /// Inclusive pixel range (per axis) that ink may occupy.
    pub fn margin_box(&self) -> (usize, usize) {
        let m = self.margin_frac * self.canvas as f64;
        let lo = m.floor() as usize;
        let hi = ((self.canvas as f64 - m).ceil() as usize).min(self.canvas) - 1;
        (lo, hi)
    }
}

pub fn rasterize(record: &HandwritingRecord, config: &RasterConfig) -> Result<RasterImage> {
    config.validate()?;
    let seg = segment_strokes(record);
    if seg.strokes.is_empty() {
        return Err(Error::NoInk(record.sample_id.clone()));
    }
    let points = seg.strokes.iter().flat_map(|s| &s.samples);
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
    for p in points {
        min_x = min_x.min(p.x);
        max_x = max_x.max(p.x);
        min_y = min_y.min(p.y);
        max_y = max_y.max(p.y);
    }
    let extent = (max_x - min_x).max(max_y - min_y);

    let mut img = RasterImage::blank(config.canvas, config.canvas);
    let brush = config.stroke_width;
    if extent == 0 {
        let c = (config.canvas / 2) as i64;
        img.stamp(c, c, brush);
        return Ok(img);
    }

    let (lo, hi) = config.margin_box();
    let back = (brush - 1) / 2;
    // pixel positions available to brush anchors so the brush stays inside the box
    let span = (hi - lo).saturating_sub(brush - 1) as f64;
    let scale = span / extent as f64;
    let centre = (lo + back) as f64 + span / 2.0;
    // doubled midpoints keep the offsets integral, hence exact under translation
    let mid2_x = min_x + max_x;
    let mid2_y = min_y + max_y;
    let map = |x: i64, y: i64| -> (i64, i64) {
        let ox = (2 * x - mid2_x) as f64 * 0.5 * scale;
        let oy = (2 * y - mid2_y) as f64 * 0.5 * scale;
        let col = (centre + ox + 0.5).floor() as i64;
        let row = if config.flip_y {
            (centre - oy + 0.5).floor() as i64
        } else {
            (centre + oy + 0.5).floor() as i64
        };
        (col, row)
    };

    for stroke in &seg.strokes {
        let mapped: Vec<(i64, i64)> = stroke.samples.iter().map(|s| map(s.x, s.y)).collect();
        if mapped.len() == 1 {
            img.stamp(mapped[0].0, mapped[0].1, brush);
        }
        for w in mapped.windows(2) {
            img.line(w[0], w[1], brush);
        }
    }
    Ok(img)
}

pub fn write_png(image: &RasterImage, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), image.width as u32, image.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
    let mut writer = enc.write_header().map_err(to_io)?;
    writer.write_image_data(&image.pixels).map_err(to_io)?;
    writer.finish().map_err(to_io)
}

pub fn read_png(path: &Path) -> Result<RasterImage> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let to_io = |e: png::DecodingError| Error::io(path, std::io::Error::other(e));
    let mut reader = png::Decoder::new(std::io::BufReader::new(file))
        .read_info()
        .map_err(to_io)?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(to_io)?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::io(
            path,
            std::io::Error::other("expected 8-bit grayscale PNG"),
        ));
    }
    buf.truncate(info.buffer_size());
    Ok(RasterImage {
        width: info.width as usize,
        height: info.height as usize,
        pixels: buf,
    })
}

/// Sidecar metadata written next to each image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterSidecar {
    pub sample_id: String,
    pub config: RasterConfig,
}

pub fn write_sidecar(sample_id: &str, config: &RasterConfig, path: &Path) -> Result<()> {
    let side = RasterSidecar {
        sample_id: sample_id.to_string(),
        config: config.clone(),
    };
    let text = serde_json::to_string_pretty(&side).expect("sidecar serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Label, PenSample, Task};

    fn rec(points: &[(i64, i64, bool)]) -> HandwritingRecord {
        HandwritingRecord {
            subject_id: "s".into(),
            task: Task::Word,
            label: Label::Td,
            samples: points
                .iter()
                .enumerate()
                .map(|(i, &(x, y, on))| PenSample {
                    x,
                    y,
                    t: i as i64,
                    on_surface: on,
                    azimuth: 0,
                    altitude: 0,
                    pressure: 1,
                })
                .collect(),
            sample_id: "r".into(),
        }
    }

    #[test]
    fn single_point_stamp() {
        for w in 1..=4 {
            let cfg = RasterConfig {
                stroke_width: w,
                ..Default::default()
            };
            let img = rasterize(&rec(&[(5, 5, true)]), &cfg).unwrap();
            assert_eq!(img.ink_count(), w * w);
            assert!(img.is_ink(128, 128));
        }
    }

    #[test]
    fn no_ink_is_error() {
        let r = rec(&[(5, 5, false)]);
        assert!(matches!(
            rasterize(&r, &RasterConfig::default()),
            Err(Error::NoInk(_))
        ));
    }

    #[test]
    fn horizontal_line_run_length() {
        let cfg = RasterConfig {
            stroke_width: 1,
            ..Default::default()
        };
        let img = rasterize(&rec(&[(0, 0, true), (10, 0, true)]), &cfg).unwrap();
        let expected = (256.0f64 * 0.84).ceil() as i64;
        let rows: Vec<usize> = (0..256)
            .filter(|&r| (0..256).any(|c| img.is_ink(c, r)))
            .collect();
        assert_eq!(rows.len(), 1);
        assert!((rows[0] as i64 - 128).abs() <= 1);
        let run = (0..256).filter(|&c| img.is_ink(c, rows[0])).count() as i64;
        assert!((run - expected).abs() <= 1, "run {run}");
    }

    #[test]
    fn margin_box_respected() {
        let cfg = RasterConfig::default();
        let img = rasterize(
            &rec(&[(0, 0, true), (100, 37, true), (3, 90, true), (77, 2, true)]),
            &cfg,
        )
        .unwrap();
        let (lo, hi) = cfg.margin_box();
        for r in 0..256 {
            for c in 0..256 {
                if img.is_ink(c, r) {
                    assert!((lo..=hi).contains(&r) && (lo..=hi).contains(&c));
                }
            }
        }
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = RasterConfig {
            margin_frac: 0.5,
            ..Default::default()
        };
        assert!(rasterize(&rec(&[(0, 0, true)]), &cfg).is_err());
    }

    #[test]
    fn png_round_trip_and_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = RasterImage {
            width: 2,
            height: 2,
            pixels: vec![0, 255, 255, 0],
        };
        let p = dir.path().join("a.png");
        write_png(&img, &p).unwrap();
        assert_eq!(read_png(&p).unwrap(), img);

        let bad = dir.path().join("missing").join("x.png");
        assert!(matches!(write_png(&img, &bad), Err(Error::Io { .. })));
    }
}
