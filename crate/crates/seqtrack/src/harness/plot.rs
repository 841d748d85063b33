//! Minimal success-plot rendering to PNG: axes, gridlines, one polyline
//! per model, and a color-swatch legend. Tick labels use a tiny built-in
//! digit font; no text shaping dependencies.

use std::path::Path;

use crate::img::Image;
use crate::Result;

const WIDTH: usize = 720;
const HEIGHT: usize = 540;
const MARGIN_L: usize = 60;
const MARGIN_R: usize = 20;
const MARGIN_T: usize = 20;
const MARGIN_B: usize = 50;

const PALETTE: [[u8; 3]; 6] = [
    [214, 69, 65],
    [31, 119, 180],
    [44, 160, 44],
    [148, 103, 189],
    [255, 127, 14],
    [23, 190, 207],
];

// 3x5 digit glyphs plus '.' and '%', row-major bitmasks.
const GLYPHS: [(char, [u8; 5]); 12] = [
    ('0', [0b111, 0b101, 0b101, 0b101, 0b111]),
    ('1', [0b010, 0b110, 0b010, 0b010, 0b111]),
    ('2', [0b111, 0b001, 0b111, 0b100, 0b111]),
    ('3', [0b111, 0b001, 0b111, 0b001, 0b111]),
    ('4', [0b101, 0b101, 0b111, 0b001, 0b001]),
    ('5', [0b111, 0b100, 0b111, 0b001, 0b111]),
    ('6', [0b111, 0b100, 0b111, 0b101, 0b111]),
    ('7', [0b111, 0b001, 0b010, 0b010, 0b010]),
    ('8', [0b111, 0b101, 0b111, 0b101, 0b111]),
    ('9', [0b111, 0b101, 0b111, 0b001, 0b111]),
    ('.', [0b000, 0b000, 0b000, 0b000, 0b010]),
    ('%', [0b101, 0b001, 0b010, 0b100, 0b101]),
];

fn draw_glyph(img: &mut Image, ch: char, x0: usize, y0: usize, color: [u8; 3]) {
    if let Some((_, rows)) = GLYPHS.iter().find(|(c, _)| *c == ch) {
        for (dy, row) in rows.iter().enumerate() {
            for dx in 0..3 {
                if row & (0b100 >> dx) != 0 {
                    let (x, y) = (x0 + dx, y0 + dy);
                    if x < img.w && y < img.h {
                        img.put(x, y, color);
                    }
                }
            }
        }
    }
}

fn draw_text(img: &mut Image, text: &str, x0: usize, y0: usize, color: [u8; 3]) {
    for (i, ch) in text.chars().enumerate() {
        draw_glyph(img, ch, x0 + i * 4, y0, color);
    }
}

fn draw_line(img: &mut Image, x0: f64, y0: f64, x1: f64, y1: f64, color: [u8; 3]) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = x0 + (x1 - x0) * t;
        let y = y0 + (y1 - y0) * t;
        if x >= 0.0 && y >= 0.0 && (x as usize) < img.w && (y as usize) < img.h {
            img.put(x as usize, y as usize, color);
        }
    }
}

/// A named curve of (x, y) points with x in [0, 1] and y in [0, 1].
pub type Curve = (String, Vec<(f64, f64)>);

/// Render success curves (success rate vs. overlap threshold) to a PNG.
pub fn save_success_plot(path: &Path, curves: &[Curve]) -> Result<()> {
    let mut img = Image::filled(WIDTH, HEIGHT, [255, 255, 255]);
    let plot_w = (WIDTH - MARGIN_L - MARGIN_R) as f64;
    let plot_h = (HEIGHT - MARGIN_T - MARGIN_B) as f64;
    let to_px = |x: f64, y: f64| {
        (
            MARGIN_L as f64 + x.clamp(0.0, 1.0) * plot_w,
            MARGIN_T as f64 + (1.0 - y.clamp(0.0, 1.0)) * plot_h,
        )
    };

    let grid = [150, 150, 150];
    let axis = [30, 30, 30];
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let (x0, y0) = to_px(0.0, v);
        let (x1, _) = to_px(1.0, v);
        draw_line(&mut img, x0, y0, x1, y0, grid);
        let (xv, yv) = to_px(v, 0.0);
        draw_line(&mut img, xv, to_px(0.0, 1.0).1, xv, yv, grid);
        // Tick labels.
        let label = format!("{v:.1}");
        draw_text(&mut img, &label, xv as usize - 5, HEIGHT - MARGIN_B + 8, axis);
        draw_text(&mut img, &label, MARGIN_L - 24, y0 as usize - 2, axis);
    }
    // Axis frame.
    let (ox, oy) = to_px(0.0, 0.0);
    let (fx, fy) = to_px(1.0, 1.0);
    draw_line(&mut img, ox, oy, fx, oy, axis);
    draw_line(&mut img, ox, oy, ox, fy, axis);

    for (ci, (_, points)) in curves.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        for pair in points.windows(2) {
            let (x0, y0) = to_px(pair[0].0, pair[0].1);
            let (x1, y1) = to_px(pair[1].0, pair[1].1);
            draw_line(&mut img, x0, y0, x1, y1, color);
            draw_line(&mut img, x0, y0 + 1.0, x1, y1 + 1.0, color);
        }
    }

    // Legend: swatch plus the curve's terminal AUC-ish label position.
    for (ci, (name, _)) in curves.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        let y = MARGIN_T + 10 + ci * 14;
        for dy in 0..8 {
            for dx in 0..18 {
                img.put(MARGIN_L + 10 + dx, y + dy, color);
            }
        }
        // Digits in the name (e.g. interval numbers) are renderable.
        let printable: String = name.chars().filter(|c| GLYPHS.iter().any(|(g, _)| g == c)).collect();
        draw_text(&mut img, &printable, MARGIN_L + 34, y, axis);
    }

    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    img.save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_a_png_with_expected_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plot.png");
        let curve: Vec<(f64, f64)> = (0..=20)
            .map(|i| {
                let x = i as f64 / 20.0;
                (x, (1.0 - x).powi(2))
            })
            .collect();
        save_success_plot(&path, &[("model 1".to_string(), curve)]).unwrap();
        let back = Image::load(&path).unwrap();
        assert_eq!((back.w, back.h), (WIDTH, HEIGHT));
        // Some red curve pixels landed inside the plot area.
        let red = PALETTE[0];
        assert!(back.data.chunks_exact(3).any(|p| p == red));
    }
}
