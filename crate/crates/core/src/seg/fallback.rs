//! Deterministic color-clustering segmenter used when no external masks exist.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::RegionMask;
use crate::render::RenderOutput;

#[derive(Debug, Clone, PartialEq)]
pub struct FallbackParams {
    pub k_max: usize,
    pub seed: u64,
    /// Components smaller than this fraction of the foreground are merged away.
    pub merge_fraction: f64,
    /// Stop adding clusters once the marginal inertia gain drops below this
    /// fraction of the single-cluster inertia.
    pub elbow_gain: f64,
    /// ... or once the inertia itself is below this fraction of it.
    pub elbow_floor: f64,
    /// Clustering runs on at most this many foreground samples.
    pub max_samples: usize,
    /// Colors are box-filtered over the foreground before clustering, with a radius of
    /// this fraction of the shorter image side, so fine texture does not fragment regions.
    /// Zero clusters raw colors.
    pub smooth_fraction: f64,
}

impl Default for FallbackParams {
    fn default() -> Self {
        Self {
            k_max: 6,
            seed: 0,
            merge_fraction: 0.005,
            elbow_gain: 0.1,
            elbow_floor: 0.02,
            max_samples: 20_000,
            smooth_fraction: 1.0 / 48.0,
        }
    }
}

fn dist2(a: [f32; 3], b: [f32; 3]) -> f64 {
    let mut s = 0.0;
    for k in 0..3 {
        let d = a[k] as f64 - b[k] as f64;
        s += d * d;
    }
    s
}

fn nearest(centers: &[[f32; 3]], p: [f32; 3]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = dist2(*c, p);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn kmeans_pp_init(points: &[[f32; 3]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f32; 3]> {
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(*p, centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = points.len() - 1;
        for (i, d) in d2.iter().enumerate() {
            if target < *d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = points[pick];
        centers.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(*p, c));
        }
    }
    centers
}

/// Lloyd iterations from a k-means++ start. Returns centers and inertia.
fn kmeans(points: &[[f32; 3]], k: usize, seed: u64) -> (Vec<[f32; 3]>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut centers = kmeans_pp_init(points, k, &mut rng);
    let mut inertia = f64::INFINITY;
    for _ in 0..50 {
        let mut sums = vec![[0f64; 3]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        let mut total = 0.0;
        for p in points {
            let (c, d) = nearest(&centers, *p);
            total += d;
            counts[c] += 1;
            for k in 0..3 {
                sums[c][k] += p[k] as f64;
            }
        }
        let mut moved = false;
        for (i, c) in centers.iter_mut().enumerate() {
            if counts[i] == 0 {
                continue;
            }
            let next = sums[i].map(|s| (s / counts[i] as f64) as f32);
            if next != *c {
                moved = true;
                *c = next;
            }
        }
        inertia = total;
        if !moved {
            break;
        }
    }
    (centers, inertia)
}

/// Mean color over the foreground pixels of a `(2r+1)^2` window around each foreground pixel.
fn box_filter_foreground(render: &RenderOutput, fg: &[usize], radius: usize) -> Vec<[f32; 3]> {
    let g = &render.gbuffer;
    let (w, h) = (g.width, g.height);
    let stride = w + 1;
    // Summed-area tables of color and foreground count.
    let mut sat = vec![[0f64; 4]; stride * (h + 1)];
    for y in 0..h {
        let mut row = [0f64; 4];
        for x in 0..w {
            let i = y * w + x;
            if g.is_covered(i) {
                let c = render.color.rgb(i);
                row[0] += c[0] as f64;
                row[1] += c[1] as f64;
                row[2] += c[2] as f64;
                row[3] += 1.0;
            }
            let above = sat[y * stride + x + 1];
            sat[(y + 1) * stride + x + 1] = [0, 1, 2, 3].map(|k| above[k] + row[k]);
        }
    }
    fg.iter()
        .map(|&i| {
            let (x, y) = (i % w, i / w);
            let (x0, y0) = (x.saturating_sub(radius), y.saturating_sub(radius));
            let (x1, y1) = ((x + radius + 1).min(w), (y + radius + 1).min(h));
            let s = [0, 1, 2, 3].map(|k| {
                sat[y1 * stride + x1][k] - sat[y0 * stride + x1][k] - sat[y1 * stride + x0][k] + sat[y0 * stride + x0][k]
            });
            [0, 1, 2].map(|k| (s[k] / s[3]) as f32)
        })
        .collect()
}

struct Component {
    pixels: Vec<usize>,
    sum: [f64; 3],
    first: usize,
}

impl Component {
    fn mean(&self) -> [f32; 3] {
        let n = self.pixels.len() as f64;
        self.sum.map(|s| (s / n) as f32)
    }
}

/// k-means over foreground colors (k by elbow rule, capped at `k_max`), split into
/// 4-connected components, with small components merged into the neighbouring
/// region of nearest mean color.
pub fn fallback_segment(render: &RenderOutput, view_id: usize, params: &FallbackParams) -> Vec<RegionMask> {
    let g = &render.gbuffer;
    let (w, h) = (g.width, g.height);
    let fg: Vec<usize> = (0..w * h).filter(|&i| g.is_covered(i)).collect();
    if fg.is_empty() {
        return Vec::new();
    }
    let radius = (w.min(h) as f64 * params.smooth_fraction).round() as usize;
    let colors: Vec<[f32; 3]> = if radius == 0 {
        fg.iter().map(|&i| render.color.rgb(i)).collect()
    } else {
        box_filter_foreground(render, &fg, radius)
    };
    let stride = colors.len().div_ceil(params.max_samples.max(1));
    let sample: Vec<[f32; 3]> = colors.iter().step_by(stride).copied().collect();

    let k_max = params.k_max.max(1);
    let mut runs: Vec<(Vec<[f32; 3]>, f64)> = Vec::new();
    let mut chosen = 0;
    for k in 1..=k_max {
        runs.push(kmeans(&sample, k, params.seed));
        let base = runs[0].1;
        if base <= 1e-12 {
            break;
        }
        if k >= 2 {
            let prev = runs[k - 2].1;
            let cur = runs[k - 1].1;
            if prev - cur < params.elbow_gain * base {
                break;
            }
            chosen = k - 1;
            if cur <= params.elbow_floor * base {
                break;
            }
        }
    }
    let centers = &runs[chosen].0;

    // Cluster id per pixel (usize::MAX on background).
    let mut cluster = vec![usize::MAX; w * h];
    for (&i, c) in fg.iter().zip(&colors) {
        cluster[i] = nearest(centers, *c).0;
    }

    // 4-connected components within each cluster.
    let mut comp_of = vec![usize::MAX; w * h];
    let mut comps: Vec<Component> = Vec::new();
    let mut stack = Vec::new();
    for &start in &fg {
        if comp_of[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut comp = Component {
            pixels: Vec::new(),
            sum: [0.0; 3],
            first: start,
        };
        comp_of[start] = id;
        stack.push(start);
        while let Some(p) = stack.pop() {
            comp.pixels.push(p);
            let c = render.color.rgb(p);
            for k in 0..3 {
                comp.sum[k] += c[k] as f64;
            }
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if comp_of[q] == usize::MAX && cluster[q] == cluster[start] {
                    comp_of[q] = id;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        comps.push(comp);
    }

    let min_size = params.merge_fraction * fg.len() as f64;
    let mut alive: Vec<bool> = vec![true; comps.len()];
    loop {
        let live = alive.iter().filter(|&&a| a).count();
        if live <= 1 {
            break;
        }
        let victim = (0..comps.len())
            .filter(|&c| alive[c] && (comps[c].pixels.len() as f64) < min_size)
            .min_by_key(|&c| (comps[c].pixels.len(), comps[c].first));
        let Some(v) = victim else { break };
        let mut neighbours: Vec<usize> = Vec::new();
        for &p in &comps[v].pixels {
            let (x, y) = (p % w, p / w);
            let mut cand = Vec::with_capacity(4);
            if x > 0 {
                cand.push(p - 1);
            }
            if x + 1 < w {
                cand.push(p + 1);
            }
            if y > 0 {
                cand.push(p - w);
            }
            if y + 1 < h {
                cand.push(p + w);
            }
            for q in cand {
                let c = comp_of[q];
                if c != usize::MAX && c != v && !neighbours.contains(&c) {
                    neighbours.push(c);
                }
            }
        }
        if neighbours.is_empty() {
            neighbours = (0..comps.len()).filter(|&c| alive[c] && c != v).collect();
        }
        let mean = comps[v].mean();
        let target = neighbours
            .into_iter()
            .min_by(|&a, &b| {
                dist2(comps[a].mean(), mean)
                    .total_cmp(&dist2(comps[b].mean(), mean))
                    .then(comps[a].first.cmp(&comps[b].first))
            })
            .expect("at least one other live component");
        let moved = std::mem::take(&mut comps[v].pixels);
        for &p in &moved {
            comp_of[p] = target;
        }
        let (vs, vf) = (comps[v].sum, comps[v].first);
        let t = &mut comps[target];
        for k in 0..3 {
            t.sum[k] += vs[k];
        }
        t.first = t.first.min(vf);
        t.pixels.extend(moved);
        alive[v] = false;
    }

    let mut order: Vec<usize> = (0..comps.len()).filter(|&c| alive[c]).collect();
    order.sort_by_key(|&c| comps[c].first);
    order
        .iter()
        .enumerate()
        .map(|(rank, &c)| {
            let mut mask = vec![false; w * h];
            for &p in &comps[c].pixels {
                mask[p] = true;
            }
            RegionMask::new(view_id, rank as u32 + 1, mask, &render.color)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use crate::mesh_io::{Role, TextureMap};
    use crate::render::{Camera, GBuffer};

    fn synthetic(w: usize, h: usize, color: impl Fn(usize, usize) -> Option<[f32; 3]>) -> RenderOutput {
        let mut g = GBuffer::background(w, h);
        let mut tex = TextureMap::filled(w, h, Role::Diffuse, &[1.0; 3]);
        for y in 0..h {
            for x in 0..w {
                if let Some(c) = color(x, y) {
                    g.face_id[y * w + x] = 0;
                    g.depth[y * w + x] = 1.0;
                    tex.pixel_mut(y * w + x).copy_from_slice(&c);
                }
            }
        }
        RenderOutput {
            color: tex,
            gbuffer: g,
            camera: Camera {
                eye: Vec3::new(0.0, 0.0, 1.0),
                target: Vec3::ZERO,
                up: Vec3::Y,
                fov_y: 1.0,
                width: w,
                height: h,
                near: 0.1,
                far: 2.0,
            },
        }
    }

    fn disc(x: usize, y: usize) -> bool {
        let (dx, dy) = (x as f64 - 31.5, y as f64 - 31.5);
        dx * dx + dy * dy < 28.0 * 28.0
    }

    #[test]
    fn uniform_object_is_one_region() {
        let r = synthetic(64, 64, |x, y| disc(x, y).then_some([0.3, 0.6, 0.2]));
        let regions = fallback_segment(&r, 0, &FallbackParams::default());
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].pixel_count, r.gbuffer.coverage());
    }

    #[test]
    fn two_tone_object_splits_by_color() {
        let r = synthetic(64, 64, |x, y| {
            disc(x, y).then_some(if y < 32 { [1.0, 0.0, 0.0] } else { [0.0, 0.0, 1.0] })
        });
        let regions = fallback_segment(&r, 0, &FallbackParams::default());
        assert_eq!(regions.len(), 2);
        let red = regions[0].mean_diffuse_rgb;
        let blue = regions[1].mean_diffuse_rgb;
        for k in 0..3 {
            assert!((red[k] - [1.0, 0.0, 0.0][k]).abs() < 1e-3);
            assert!((blue[k] - [0.0, 0.0, 1.0][k]).abs() < 1e-3);
        }
    }

    #[test]
    fn k_max_one_caps() {
        let r = synthetic(64, 64, |x, y| {
            disc(x, y).then_some(if y < 32 { [1.0, 0.0, 0.0] } else { [0.0, 0.0, 1.0] })
        });
        let p = FallbackParams {
            k_max: 1,
            ..Default::default()
        };
        assert_eq!(fallback_segment(&r, 0, &p).len(), 1);
    }

    #[test]
    fn speckles_merge_into_surroundings() {
        let r = synthetic(64, 64, |x, y| {
            if !disc(x, y) {
                None
            } else if (x == 20 && y == 20) || (x == 40 && y == 41) {
                Some([0.0, 1.0, 0.0])
            } else if x < 32 {
                Some([1.0, 0.0, 0.0])
            } else {
                Some([0.0, 0.0, 1.0])
            }
        });
        let regions = fallback_segment(&r, 0, &FallbackParams::default());
        assert_eq!(regions.len(), 2);
        let total: usize = regions.iter().map(|m| m.pixel_count).sum();
        assert_eq!(total, r.gbuffer.coverage());
    }

    #[test]
    fn deterministic() {
        let r = synthetic(48, 48, |x, y| {
            let n = crate::fixtures::hash_noise(x, y, 3);
            Some([n, 1.0 - n, (x as f32) / 48.0])
        });
        let p = FallbackParams::default();
        assert_eq!(fallback_segment(&r, 2, &p), fallback_segment(&r, 2, &p));
    }
}
