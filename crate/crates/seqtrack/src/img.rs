//! 8-bit RGB frames, crop-and-resample, and tensor conversion.

use std::path::Path;

use ndarray::Array3;

use crate::boxgeom::CropSpec;
use crate::Result;

/// Row-major RGB8 frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub w: usize,
    pub h: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(w: usize, h: usize) -> Self {
        Self {
            w,
            h,
            data: vec![0; w * h * 3],
        }
    }

    pub fn filled(w: usize, h: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(w * h * 3);
        for _ in 0..w * h {
            data.extend_from_slice(&rgb);
        }
        Self { w, h, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.w + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.w + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Mean color over all pixels, per channel.
    pub fn mean_color(&self) -> [f64; 3] {
        let mut acc = [0.0f64; 3];
        for px in self.data.chunks_exact(3) {
            for c in 0..3 {
                acc[c] += px[c] as f64;
            }
        }
        let n = (self.w * self.h) as f64;
        acc.map(|v| v / n)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let buf: image::RgbImage =
            image::ImageBuffer::from_raw(self.w as u32, self.h as u32, self.data.clone())
                .expect("buffer size matches dimensions");
        buf.save(path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)?.into_rgb8();
        Ok(Self {
            w: img.width() as usize,
            h: img.height() as usize,
            data: img.into_raw(),
        })
    }
}

/// Resample the crop window described by `spec` to `spec.output_resolution`
/// square pixels. Bilinear interpolation; samples falling outside the frame
/// take the frame's mean color.
pub fn crop_resize(src: &Image, spec: &CropSpec) -> Image {
    let res = spec.output_resolution;
    let mut out = Image::new(res, res);
    let fill = src.mean_color();
    let sample = |xi: i64, yi: i64| -> [f64; 3] {
        if xi < 0 || yi < 0 || xi >= src.w as i64 || yi >= src.h as i64 {
            fill
        } else {
            src.get(xi as usize, yi as usize).map(|v| v as f64)
        }
    };
    for oy in 0..res {
        for ox in 0..res {
            // Pixel centers map through the crop's affine; -0.5 converts to
            // the source's sample lattice.
            let (fx, fy) = spec.crop_to_frame((ox as f64 + 0.5, oy as f64 + 0.5));
            let sx = fx - 0.5;
            let sy = fy - 0.5;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let tx = sx - x0;
            let ty = sy - y0;
            let (x0, y0) = (x0 as i64, y0 as i64);
            let (p00, p10) = (sample(x0, y0), sample(x0 + 1, y0));
            let (p01, p11) = (sample(x0, y0 + 1), sample(x0 + 1, y0 + 1));
            let mut px = [0u8; 3];
            for (c, slot) in px.iter_mut().enumerate() {
                let v = p00[c] * (1.0 - tx) * (1.0 - ty)
                    + p10[c] * tx * (1.0 - ty)
                    + p01[c] * (1.0 - tx) * ty
                    + p11[c] * tx * ty;
                *slot = v.round().clamp(0.0, 255.0) as u8;
            }
            out.put(ox, oy, px);
        }
    }
    out
}

/// CHW tensor in [0, 1].
pub fn to_tensor(img: &Image) -> Array3<f64> {
    let mut t = Array3::zeros((3, img.h, img.w));
    for y in 0..img.h {
        for x in 0..img.w {
            let px = img.get(x, y);
            for c in 0..3 {
                t[[c, y, x]] = px[c] as f64 / 255.0;
            }
        }
    }
    t
}
