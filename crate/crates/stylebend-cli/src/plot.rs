//! Minimal raster line plots for training metrics: white canvas, light grid,
//! one polyline. No text is drawn; the output file name carries the metric
//! name.

use image::{Rgb, RgbImage};

const BG: Rgb<u8> = Rgb([255, 255, 255]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);
const AXIS: Rgb<u8> = Rgb([80, 80, 80]);
const LINE: Rgb<u8> = Rgb([31, 119, 180]);

const MARGIN_LEFT: u32 = 12;
const MARGIN_RIGHT: u32 = 8;
const MARGIN_TOP: u32 = 8;
const MARGIN_BOTTOM: u32 = 12;

fn draw_segment(img: &mut RgbImage, a: (i64, i64), b: (i64, i64), color: Rgb<u8>) {
    // Integer Bresenham over the clipped canvas.
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            img.put_pixel(x as u32, y as u32, color);
        }
        if x == b.0 && y == b.1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Renders one metric series as a line plot. Points are `(step, value)`
/// pairs in step order; the canvas autoscales to their bounds.
pub fn render_series(points: &[(u64, f64)], width: u32, height: u32) -> RgbImage {
    let width = width.max(64);
    let height = height.max(64);
    let mut img = RgbImage::from_pixel(width, height, BG);

    let x0 = MARGIN_LEFT as i64;
    let x1 = (width - 1 - MARGIN_RIGHT) as i64;
    let y0 = MARGIN_TOP as i64;
    let y1 = (height - 1 - MARGIN_BOTTOM) as i64;

    // Horizontal gridlines.
    for k in 1..4 {
        let y = y0 + (y1 - y0) * k / 4;
        draw_segment(&mut img, (x0, y), (x1, y), GRID);
    }
    // Axes (left and bottom edges of the plot area).
    draw_segment(&mut img, (x0, y0), (x0, y1), AXIS);
    draw_segment(&mut img, (x0, y1), (x1, y1), AXIS);

    if points.is_empty() {
        return img;
    }

    let sx0 = points.first().unwrap().0 as f64;
    let sx1 = points.last().unwrap().0 as f64;
    let span_x = if sx1 > sx0 { sx1 - sx0 } else { 1.0 };
    let mut vmin = f64::INFINITY;
    let mut vmax = f64::NEG_INFINITY;
    for &(_, v) in points {
        vmin = vmin.min(v);
        vmax = vmax.max(v);
    }
    let pad = 0.05 * (vmax - vmin);
    let (vmin, vmax) = if vmax > vmin {
        (vmin - pad, vmax + pad)
    } else {
        (vmin - 0.5, vmax + 0.5)
    };
    let span_v = vmax - vmin;

    let to_px = |(s, v): (u64, f64)| -> (i64, i64) {
        let fx = (s as f64 - sx0) / span_x;
        let fy = (v - vmin) / span_v;
        (
            x0 + (fx * (x1 - x0) as f64).round() as i64,
            y1 - (fy * (y1 - y0) as f64).round() as i64,
        )
    };

    let px: Vec<(i64, i64)> = points.iter().map(|&p| to_px(p)).collect();
    for pair in px.windows(2) {
        draw_segment(&mut img, pair[0], pair[1], LINE);
    }
    if px.len() == 1 {
        draw_segment(&mut img, px[0], px[0], LINE);
    }
    // Small markers when the series is sparse.
    if px.len() <= 40 {
        for &(x, y) in &px {
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let (mx, my) = (x + dx, y + dy);
                if (0..width as i64).contains(&mx) && (0..height as i64).contains(&my) {
                    img.put_pixel(mx as u32, my as u32, LINE);
                }
            }
        }
    }
    img
}
