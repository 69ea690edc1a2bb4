use serde::{Deserialize, Serialize};

use super::RegionMask;
use crate::mesh_io::{BitDepth, TextureError, TextureMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mark {
    pub label: u32,
    /// Pixel (x, y) at which the numeral is centred.
    pub anchor: (usize, usize),
}

/// A rendered view with numeric region marks burned in.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    pub view_id: usize,
    pub image: TextureMap,
    pub marks: Vec<Mark>,
}

impl AnnotatedImage {
    pub fn legend(&self) -> Vec<u32> {
        self.marks.iter().map(|m| m.label).collect()
    }

    /// 8-bit PNG bytes; these are exactly what is sent to the vision model.
    pub fn to_png(&self) -> Result<Vec<u8>, TextureError> {
        self.image.encode_png(BitDepth::Eight)
    }
}

const INF: f64 = 1e20;

/// Exact 1-D squared distance transform of a sampled function (lower envelope of parabolas).
fn dt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0f64; n + 1];
    let mut k = 0usize;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64);
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates everywhere.
                v[0] = q;
                z[0] = -INF;
                z[1] = INF;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = INF;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared Euclidean distance from each mask pixel to the nearest pixel outside the mask.
/// The image border counts as outside. Zero for pixels not in the mask.
pub fn distance_to_boundary_sq(mask: &[bool], width: usize, height: usize) -> Vec<f64> {
    assert_eq!(mask.len(), width * height);
    let (pw, ph) = (width + 2, height + 2);
    let mut grid = vec![0f64; pw * ph];
    for y in 0..height {
        for x in 0..width {
            if mask[y * width + x] {
                grid[(y + 1) * pw + x + 1] = INF;
            }
        }
    }
    let mut col = vec![0f64; ph];
    let mut col_out = vec![0f64; ph];
    for x in 0..pw {
        for y in 0..ph {
            col[y] = grid[y * pw + x];
        }
        dt_1d(&col, &mut col_out);
        for y in 0..ph {
            grid[y * pw + x] = col_out[y];
        }
    }
    let mut row_out = vec![0f64; pw];
    for y in 0..ph {
        dt_1d(&grid[y * pw..(y + 1) * pw], &mut row_out);
        grid[y * pw..(y + 1) * pw].copy_from_slice(&row_out);
    }
    let mut out = vec![0f64; width * height];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = grid[(y + 1) * pw + x + 1];
        }
    }
    out
}

/// Mask pixel farthest from the mask boundary; ties resolved to the lowest row, then column.
pub fn pole_of_inaccessibility(mask: &[bool], width: usize, height: usize) -> Option<(usize, usize)> {
    let d = distance_to_boundary_sq(mask, width, height);
    let mut best: Option<(usize, f64)> = None;
    for (i, &on) in mask.iter().enumerate() {
        if on && best.is_none_or(|(_, b)| d[i] > b) {
            best = Some((i, d[i]));
        }
    }
    best.map(|(i, _)| (i % width, i / width))
}

const GLYPHS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

fn draw_label(img: &mut TextureMap, label: u32, anchor: (usize, usize), scale: usize) {
    let digits: Vec<usize> = label.to_string().bytes().map(|b| (b - b'0') as usize).collect();
    let pad = scale;
    let text_w = digits.len() * 4 * scale - scale;
    let box_w = text_w + 2 * pad;
    let box_h = 5 * scale + 2 * pad;
    let x0 = anchor.0 as isize - box_w as isize / 2;
    let y0 = anchor.1 as isize - box_h as isize / 2;
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut put = |x: isize, y: isize, v: f32| {
        if x >= 0 && y >= 0 && x < w && y < h {
            img.pixel_mut((y * w + x) as usize).fill(v);
        }
    };
    for dy in 0..box_h as isize {
        for dx in 0..box_w as isize {
            put(x0 + dx, y0 + dy, 0.0);
        }
    }
    for (k, &d) in digits.iter().enumerate() {
        let gx = x0 + (pad + k * 4 * scale) as isize;
        let gy = y0 + pad as isize;
        for (row, bits) in GLYPHS[d].iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) != 0 {
                    for sy in 0..scale {
                        for sx in 0..scale {
                            put(
                                gx + (col * scale + sx) as isize,
                                gy + (row * scale + sy) as isize,
                                1.0,
                            );
                        }
                    }
                }
            }
        }
    }
}

/// Burns one white-on-black numeral per mask at its pole of inaccessibility,
/// in ascending label order.
pub fn annotate_som(render_color: &TextureMap, masks: &[RegionMask]) -> AnnotatedImage {
    let (w, h) = render_color.dims();
    let mut order: Vec<&RegionMask> = masks.iter().collect();
    order.sort_by_key(|m| m.label);
    let scale = (w.min(h) / 128).max(1);
    let mut image = render_color.clone();
    let mut marks = Vec::new();
    for m in order {
        if let Some(anchor) = pole_of_inaccessibility(&m.mask, w, h) {
            draw_label(&mut image, m.label, anchor, scale);
            marks.push(Mark {
                label: m.label,
                anchor,
            });
        }
    }
    AnnotatedImage {
        view_id: masks.first().map_or(0, |m| m.view_id),
        image,
        marks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_io::Role;

    fn brute_force(mask: &[bool], w: usize, h: usize) -> Vec<f64> {
        let outside: Vec<(isize, isize)> = (-1..=h as isize)
            .flat_map(|y| (-1..=w as isize).map(move |x| (x, y)))
            .filter(|&(x, y)| {
                x < 0 || y < 0 || x >= w as isize || y >= h as isize || !mask[y as usize * w + x as usize]
            })
            .collect();
        (0..w * h)
            .map(|i| {
                if !mask[i] {
                    return 0.0;
                }
                let (x, y) = ((i % w) as isize, (i / w) as isize);
                outside
                    .iter()
                    .map(|&(ox, oy)| ((ox - x).pow(2) + (oy - y).pow(2)) as f64)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn edt_matches_brute_force_on_l_shape() {
        let (w, h) = (23, 17);
        let mask: Vec<bool> = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                (x >= 2 && x < 8 && y >= 1 && y < 16) || (x >= 2 && x < 21 && y >= 10 && y < 16)
            })
            .collect();
        let fast = distance_to_boundary_sq(&mask, w, h);
        let slow = brute_force(&mask, w, h);
        assert_eq!(fast, slow);
        let (bx, by) = pole_of_inaccessibility(&mask, w, h).unwrap();
        let best = slow.iter().cloned().fold(0.0, f64::max);
        let first = slow.iter().position(|&d| d == best).unwrap();
        assert_eq!((bx, by), (first % w, first / w));
        assert!(mask[by * w + bx]);
    }

    #[test]
    fn side_by_side_squares_anchor_at_centres() {
        let (w, h) = (40, 20);
        let c = TextureMap::filled(w, h, Role::Diffuse, &[0.5; 3]);
        let sq = |x0: usize| -> Vec<bool> {
            (0..w * h)
                .map(|i| {
                    let (x, y) = (i % w, i / w);
                    x >= x0 && x < x0 + 15 && y >= 2 && y < 17
                })
                .collect()
        };
        let masks = vec![
            RegionMask::new(0, 1, sq(2), &c),
            RegionMask::new(0, 2, sq(22), &c),
        ];
        let a = annotate_som(&c, &masks);
        assert_eq!(a.marks[0].anchor, (9, 9));
        assert_eq!(a.marks[1].anchor, (29, 9));
        assert_eq!(a.legend(), vec![1, 2]);
        // Box corner is black, numeral stroke is white.
        assert_eq!(a.image.get(9, 9), &[1.0, 1.0, 1.0]);
        assert_eq!(a.image.get(7, 6), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn full_mask_single_mark() {
        let (w, h) = (9, 9);
        let c = TextureMap::filled(w, h, Role::Diffuse, &[0.2; 3]);
        let m = RegionMask::new(3, 1, vec![true; w * h], &c);
        let a = annotate_som(&c, &[m]);
        assert_eq!(a.view_id, 3);
        assert_eq!(a.marks, vec![Mark { label: 1, anchor: (4, 4) }]);
        assert!(!a.to_png().unwrap().is_empty());
    }

    #[test]
    fn multi_digit_labels_render() {
        let c = TextureMap::filled(64, 64, Role::Diffuse, &[0.5; 3]);
        let mut img = c.clone();
        draw_label(&mut img, 12, (32, 32), 2);
        assert_ne!(img, c);
    }
}
