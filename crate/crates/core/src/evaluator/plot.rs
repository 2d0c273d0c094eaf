//! Minimal deterministic raster plotting: line charts and the annotated
//! confusion-matrix figure, drawn pixel by pixel with an embedded 5x7 font.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::evaluator::ConfusionMatrix;

pub type Color = [u8; 3];

pub const BLACK: Color = [20, 20, 20];
pub const WHITE: Color = [255, 255, 255];
pub const GREY: Color = [170, 170, 170];
pub const BLUE: Color = [31, 119, 180];
pub const ORANGE: Color = [255, 127, 14];

// 5x7 glyphs, one u8 per row, bit 4 leftmost
fn glyph(c: char) -> [u8; 7] {
    match c.to_ascii_uppercase() {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        ':' => [0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00],
        '%' => [0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03],
        '/' => [0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10],
        '_' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F],
        _ => [0x00; 7],
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Color) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(color));
    }
}

pub fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, color: Color, scale: i64) {
    let mut cx = x;
    for c in text.chars() {
        let rows = glyph(c);
        for (ry, row) in rows.iter().enumerate() {
            for rx in 0..5 {
                if row & (0x10 >> rx) != 0 {
                    for sy in 0..scale {
                        for sx in 0..scale {
                            put(
                                img,
                                cx + rx as i64 * scale + sx,
                                y + ry as i64 * scale + sy,
                                color,
                            );
                        }
                    }
                }
            }
        }
        cx += 6 * scale;
    }
}

pub fn text_width(text: &str, scale: i64) -> i64 {
    text.chars().count() as i64 * 6 * scale
}

fn draw_line(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, color: Color) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y) = (x0, y0);
    let mut err = dx + dy;
    loop {
        put(img, x, y, color);
        put(img, x + 1, y, color);
        put(img, x, y + 1, color);
        if x == x1 && y == y1 {
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

fn fmt_tick(v: f64, span: f64) -> String {
    if span >= 50.0 {
        format!("{v:.0}")
    } else if span >= 2.0 {
        format!("{v:.1}")
    } else if span >= 0.02 {
        format!("{v:.3}")
    } else {
        format!("{v:.5}")
    }
}

/// Renders one or more series over a shared x axis to a PNG file.
pub fn line_chart(
    title: &str,
    xs: &[f64],
    series: &[(&str, Color, &[f64])],
    path: &Path,
) -> Result<(), String> {
    let (w, h) = (640i64, 480i64);
    let (ml, mr, mt, mb) = (70i64, 20i64, 40i64, 50i64);
    let mut img = RgbImage::from_pixel(w as u32, h as u32, Rgb(WHITE));

    let mut x_min = f64::MAX;
    let mut x_max = f64::MIN;
    for &x in xs {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
    }
    let mut y_min = f64::MAX;
    let mut y_max = f64::MIN;
    for (_, _, ys) in series {
        for &y in *ys {
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !x_min.is_finite() || !y_min.is_finite() {
        return Err("no finite data to plot".into());
    }
    if (x_max - x_min).abs() < 1e-12 {
        x_min -= 0.5;
        x_max += 0.5;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad = (y_max - y_min) * 0.05;
    y_min -= pad;
    y_max += pad;

    let px = |x: f64| ml + ((x - x_min) / (x_max - x_min) * (w - ml - mr) as f64) as i64;
    let py = |y: f64| h - mb - ((y - y_min) / (y_max - y_min) * (h - mt - mb) as f64) as i64;

    // axes and ticks
    draw_line(&mut img, ml, mt, ml, h - mb, BLACK);
    draw_line(&mut img, ml, h - mb, w - mr, h - mb, BLACK);
    for i in 0..=4 {
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        let yy = py(fy);
        draw_line(&mut img, ml - 4, yy, ml, yy, BLACK);
        draw_line(&mut img, ml, yy, w - mr, yy, GREY);
        let label = fmt_tick(fy, y_max - y_min);
        draw_text(&mut img, ml - 8 - text_width(&label, 1), yy - 3, &label, BLACK, 1);

        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let xx = px(fx);
        draw_line(&mut img, xx, h - mb, xx, h - mb + 4, BLACK);
        let label = fmt_tick(fx, x_max - x_min);
        draw_text(&mut img, xx - text_width(&label, 1) / 2, h - mb + 8, &label, BLACK, 1);
    }
    draw_text(&mut img, (w - text_width(title, 2)) / 2, 10, title, BLACK, 2);
    draw_text(&mut img, (w - text_width("EPOCH", 1)) / 2, h - 18, "EPOCH", BLACK, 1);

    // series and legend
    let mut legend_y = mt + 6;
    for (label, color, ys) in series {
        for k in 1..xs.len().min(ys.len()) {
            draw_line(
                &mut img,
                px(xs[k - 1]),
                py(ys[k - 1]),
                px(xs[k]),
                py(ys[k]),
                *color,
            );
        }
        if xs.len() == 1 && !ys.is_empty() {
            put(&mut img, px(xs[0]), py(ys[0]), *color);
        }
        let lx = w - mr - 120;
        for dy in 0..8 {
            for dx in 0..8 {
                put(&mut img, lx + dx, legend_y + dy, *color);
            }
        }
        draw_text(&mut img, lx + 12, legend_y, label, BLACK, 1);
        legend_y += 14;
    }

    img.save(path).map_err(|e| e.to_string())
}

/// 2x2 confusion-matrix heat figure with counts annotated in each cell.
pub fn confusion_figure(matrix: &ConfusionMatrix, path: &Path) -> Result<(), String> {
    let (w, h) = (440i64, 400i64);
    let mut img = RgbImage::from_pixel(w as u32, h as u32, Rgb(WHITE));
    let cell = 140i64;
    let (ox, oy) = (120i64, 100i64);

    // row = truth (real, fake), column = prediction (real, fake)
    let cells = [
        [(matrix.tn, "TN"), (matrix.fp, "FP")],
        [(matrix.fn_, "FN"), (matrix.tp, "TP")],
    ];
    let max = matrix.total().max(1);

    for (r, row) in cells.iter().enumerate() {
        for (c, &(count, tag)) in row.iter().enumerate() {
            let x0 = ox + c as i64 * cell;
            let y0 = oy + r as i64 * cell;
            let t = count as f64 / max as f64;
            let shade = |base: u8| (255.0 - (255 - base) as f64 * t) as u8;
            let color = [shade(BLUE[0]), shade(BLUE[1]), shade(BLUE[2])];
            for y in y0..y0 + cell {
                for x in x0..x0 + cell {
                    put(&mut img, x, y, color);
                }
            }
            for k in 0..=1 {
                draw_line(&mut img, x0, y0 + k * cell, x0 + cell, y0 + k * cell, BLACK);
                draw_line(&mut img, x0 + k * cell, y0, x0 + k * cell, y0 + cell, BLACK);
            }
            let ink = if t > 0.5 { WHITE } else { BLACK };
            let text = format!("{tag}:{count}");
            draw_text(
                &mut img,
                x0 + (cell - text_width(&text, 2)) / 2,
                y0 + cell / 2 - 7,
                &text,
                ink,
                2,
            );
        }
    }

    draw_text(&mut img, (w - text_width("CONFUSION MATRIX", 2)) / 2, 16, "CONFUSION MATRIX", BLACK, 2);
    draw_text(&mut img, ox + cell - text_width("PREDICTED", 1) / 2 - 70, oy - 30, "PREDICTED", BLACK, 1);
    for (c, label) in ["REAL", "FAKE"].iter().enumerate() {
        let x = ox + c as i64 * cell + (cell - text_width(label, 1)) / 2;
        draw_text(&mut img, x, oy - 14, label, BLACK, 1);
    }
    for (r, label) in ["REAL", "FAKE"].iter().enumerate() {
        let y = oy + r as i64 * cell + cell / 2 - 3;
        draw_text(&mut img, ox - 12 - text_width(label, 1), y, label, BLACK, 1);
    }
    draw_text(&mut img, 8, oy + cell - text_width("", 1) / 2, "TRUE", BLACK, 1);

    img.save(path).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_render_and_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let xs: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 / x).collect();
        let p1 = dir.path().join("a.png");
        let p2 = dir.path().join("b.png");
        line_chart("TEST", &xs, &[("Y", BLUE, &ys)], &p1).unwrap();
        line_chart("TEST", &xs, &[("Y", BLUE, &ys)], &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn confusion_figure_renders() {
        let dir = tempfile::tempdir().unwrap();
        let m = ConfusionMatrix {
            tp: 90,
            tn: 80,
            fp: 3,
            fn_: 7,
        };
        let path = dir.path().join("cm.png");
        confusion_figure(&m, &path).unwrap();
        assert!(path.is_file());
    }
}
