//! Minimal raster line plots: no fonts, axes with tick marks only.

use super::report::CellSummary;
use crate::error::{Error, Result};
use image::{Rgb, RgbImage};
use std::path::Path;

const W: u32 = 640;
const H: u32 = 420;
const MARGIN: f64 = 40.0;
const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);

fn series_color(name: &str) -> Rgb<u8> {
    match name {
        "cpc" => Rgb([31, 119, 180]),
        "wpc" => Rgb([255, 127, 14]),
        "wdm_dual" => Rgb([44, 160, 44]),
        _ => Rgb([110, 110, 110]),
    }
}

fn blend(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>, alpha: f64) {
    if x < 0 || y < 0 || x >= W as i64 || y >= H as i64 {
        return;
    }
    let p = img.get_pixel_mut(x as u32, y as u32);
    for k in 0..3 {
        p.0[k] = (p.0[k] as f64 * (1.0 - alpha) + c.0[k] as f64 * alpha).round() as u8;
    }
}

fn line(img: &mut RgbImage, (x0, y0): (f64, f64), (x1, y1): (f64, f64), c: Rgb<u8>, width: i64) {
    let n = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for i in 0..=n {
        let t = i as f64 / n as f64;
        let (x, y) = ((x0 + t * (x1 - x0)).round() as i64, (y0 + t * (y1 - y0)).round() as i64);
        for dx in -(width / 2)..=(width / 2) {
            for dy in -(width / 2)..=(width / 2) {
                blend(img, x + dx, y + dy, c, 1.0);
            }
        }
    }
}

/// Axis value against mean probe accuracy, one line per objective with a
/// ±1 std band across seeds. Axis values are spaced evenly by rank.
pub fn accuracy_plot(cells: &[CellSummary], path: &Path) -> Result<()> {
    let mut xs: Vec<usize> = cells.iter().map(|c| c.axis).collect();
    xs.sort_unstable();
    xs.dedup();
    let mut img = RgbImage::from_pixel(W, H, WHITE);
    let (left, right, top, bottom) = (MARGIN, W as f64 - MARGIN / 2.0, MARGIN / 2.0, H as f64 - MARGIN);
    let px = |axis: usize| {
        let i = xs.iter().position(|&v| v == axis).unwrap_or(0) as f64;
        let span = (xs.len().max(2) - 1) as f64;
        if xs.len() < 2 {
            (left + right) / 2.0
        } else {
            left + i / span * (right - left)
        }
    };
    let py = |acc: f64| bottom - acc.clamp(0.0, 1.0) * (bottom - top);

    for q in 0..=4 {
        let y = py(q as f64 / 4.0);
        line(&mut img, (left, y), (right, y), GRID, 1);
        line(&mut img, (left - 5.0, y), (left, y), BLACK, 1);
    }
    for &x in &xs {
        line(&mut img, (px(x), bottom), (px(x), bottom + 5.0), BLACK, 1);
    }
    line(&mut img, (left, top), (left, bottom), BLACK, 1);
    line(&mut img, (left, bottom), (right, bottom), BLACK, 1);

    let mut names: Vec<&str> = cells.iter().map(|c| c.objective.as_str()).collect();
    names.dedup();
    let mut seen = Vec::new();
    for name in names {
        if seen.contains(&name) {
            continue;
        }
        seen.push(name);
        let mut pts: Vec<&CellSummary> = cells.iter().filter(|c| c.objective == name).collect();
        pts.sort_by_key(|c| c.axis);
        let color = series_color(name);
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (xa, xb) = (px(a.axis), px(b.axis));
            for x in xa.round() as i64..=xb.round() as i64 {
                let t = if xb > xa { (x as f64 - xa) / (xb - xa) } else { 0.0 };
                let m = a.mean_accuracy + t * (b.mean_accuracy - a.mean_accuracy);
                let s = a.std_accuracy + t * (b.std_accuracy - a.std_accuracy);
                for y in py(m + s).round() as i64..=py(m - s).round() as i64 {
                    blend(&mut img, x, y, color, 0.2);
                }
            }
            line(&mut img, (xa, py(a.mean_accuracy)), (xb, py(b.mean_accuracy)), color, 3);
        }
        for c in &pts {
            let (x, y) = (px(c.axis), py(c.mean_accuracy));
            line(&mut img, (x - 4.0, y), (x + 4.0, y), color, 5);
        }
    }
    img.save(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
