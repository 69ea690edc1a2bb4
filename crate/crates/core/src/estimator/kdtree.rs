//! Exact nearest-neighbour index over the RGB values of a key diffuse map.
//!
//! Duplicate colors are collapsed to their smallest linear pixel index before
//! the tree is built, so a query returns the global argmin of squared
//! Euclidean distance with ties resolved to the smallest pixel index.

use crate::mesh_io::TextureMap;

pub const DEFAULT_LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: f32, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelIndex {
    points: Vec<[f32; 3]>,
    /// Smallest linear key-pixel index holding `points[i]`.
    pixel: Vec<u32>,
    nodes: Vec<Node>,
    leaf_size: usize,
    pixel_count: usize,
}

/// Squared Euclidean distance, accumulated in f64 in channel order.
#[inline]
pub fn dist2(a: [f32; 3], b: [f32; 3]) -> f64 {
    let dx = a[0] as f64 - b[0] as f64;
    let dy = a[1] as f64 - b[1] as f64;
    let dz = a[2] as f64 - b[2] as f64;
    dx * dx + dy * dy + dz * dz
}

fn cmp_rgb(a: &[f32; 3], b: &[f32; 3]) -> std::cmp::Ordering {
    a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])).then(a[2].total_cmp(&b[2]))
}

pub fn build_pixel_index(key_diffuse: &TextureMap) -> PixelIndex {
    build_pixel_index_with(key_diffuse, DEFAULT_LEAF_SIZE)
}

pub fn build_pixel_index_with(key_diffuse: &TextureMap, leaf_size: usize) -> PixelIndex {
    assert_eq!(key_diffuse.channels(), 3, "key diffuse must be RGB");
    let n = key_diffuse.len_pixels();
    let mut order: Vec<(u32, [f32; 3])> = (0..n).map(|i| (i as u32, key_diffuse.rgb(i))).collect();
    order.sort_unstable_by(|a, b| cmp_rgb(&a.1, &b.1).then(a.0.cmp(&b.0)));
    order.dedup_by(|later, first| later.1 == first.1);
    let mut idx = PixelIndex {
        points: order.iter().map(|p| p.1).collect(),
        pixel: order.iter().map(|p| p.0).collect(),
        nodes: Vec::new(),
        leaf_size: leaf_size.max(1),
        pixel_count: n,
    };
    let len = idx.points.len();
    idx.build(0, len);
    idx
}

impl PixelIndex {
    /// Number of key pixels indexed (before colour deduplication).
    pub fn len(&self) -> usize {
        self.pixel_count
    }

    pub fn is_empty(&self) -> bool {
        self.pixel_count == 0
    }

    pub fn unique_colors(&self) -> usize {
        self.points.len()
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    fn build(&mut self, start: usize, end: usize) -> u32 {
        let id = self.nodes.len() as u32;
        if end - start <= self.leaf_size {
            self.nodes.push(Node::Leaf {
                start: start as u32,
                end: end as u32,
            });
            return id;
        }
        let mut lo = [f32::INFINITY; 3];
        let mut hi = [f32::NEG_INFINITY; 3];
        for p in &self.points[start..end] {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a))).unwrap();
        let mid = start + (end - start) / 2;
        // Reorder the point and pixel arrays together around the median.
        let mut pairs: Vec<([f32; 3], u32)> = self.points[start..end]
            .iter()
            .copied()
            .zip(self.pixel[start..end].iter().copied())
            .collect();
        pairs.select_nth_unstable_by(mid - start, |a, b| a.0[axis].total_cmp(&b.0[axis]));
        for (k, (p, i)) in pairs.into_iter().enumerate() {
            self.points[start + k] = p;
            self.pixel[start + k] = i;
        }
        let value = self.points[mid][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id as usize] = Node::Split {
            axis: axis as u8,
            value,
            left,
            right,
        };
        id
    }

    /// Key pixel index of the nearest colour.
    pub fn nearest(&self, q: [f32; 3]) -> usize {
        let mut best_d = f64::INFINITY;
        let mut best_i = u32::MAX;
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        stack.push((0, 0.0));
        while let Some((node, plane_d2)) = stack.pop() {
            if plane_d2 > best_d {
                continue;
            }
            match self.nodes[node as usize] {
                Node::Leaf { start, end } => {
                    for k in start as usize..end as usize {
                        let d = dist2(q, self.points[k]);
                        if d < best_d || (d == best_d && self.pixel[k] < best_i) {
                            best_d = d;
                            best_i = self.pixel[k];
                        }
                    }
                }
                Node::Split { axis, value, left, right } => {
                    let diff = q[axis as usize] as f64 - value as f64;
                    let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                    stack.push((far, diff * diff));
                    stack.push((near, 0.0));
                }
            }
        }
        best_i as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_io::Role;

    #[test]
    fn single_pixel_key() {
        let key = TextureMap::filled(1, 1, Role::Diffuse, &[0.3, 0.2, 0.1]);
        let idx = build_pixel_index(&key);
        assert_eq!(idx.nearest([0.9, 0.9, 0.9]), 0);
        assert_eq!(idx.nearest([0.0, 0.0, 0.0]), 0);
    }

    #[test]
    fn constant_key_returns_first_pixel() {
        let key = TextureMap::filled(40, 40, Role::Diffuse, &[0.5; 3]);
        let idx = build_pixel_index(&key);
        assert_eq!(idx.unique_colors(), 1);
        assert_eq!(idx.nearest([0.1, 0.7, 0.2]), 0);
    }

    #[test]
    fn equidistant_colours_pick_smaller_index() {
        let key = TextureMap::from_fn(2, 1, Role::Diffuse, |x, _| vec![if x == 0 { 0.75 } else { 0.25 }, 0.0, 0.0]);
        let idx = build_pixel_index(&key);
        assert_eq!(idx.nearest([0.5, 0.0, 0.0]), 0);
    }
}
