use serde::{Deserialize, Serialize};

use super::RenderError;
use crate::math::Vec3;
use crate::mesh_io::Mesh;

/// Pinhole camera looking from `eye` at `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub eye: Vec3,
    pub target: Vec3,
    pub up: Vec3,
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

/// Orthonormal view frame: x right, y up, z forward (into the scene).
#[derive(Debug, Clone, Copy)]
pub struct ViewFrame {
    pub right: Vec3,
    pub up: Vec3,
    pub forward: Vec3,
}

impl Camera {
    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: &str| Err(RenderError::InvalidCamera(m.to_string()));
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return bad("fov must lie in (0, pi)");
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return bad("need 0 < near < far");
        }
        if self.width == 0 || self.height == 0 {
            return bad("empty image");
        }
        let forward = self.target - self.eye;
        if forward.length() == 0.0 {
            return bad("eye coincides with target");
        }
        if forward.normalized().cross(self.up.normalized()).length() < 1e-9 {
            return bad("up is parallel to the view direction");
        }
        Ok(())
    }

    pub fn frame(&self) -> ViewFrame {
        let forward = (self.target - self.eye).normalized();
        let right = forward.cross(self.up).normalized();
        let up = right.cross(forward);
        ViewFrame { right, up, forward }
    }

    pub fn to_view(&self, frame: &ViewFrame, p: Vec3) -> Vec3 {
        let d = p - self.eye;
        Vec3::new(d.dot(frame.right), d.dot(frame.up), d.dot(frame.forward))
    }

    /// Screen position (pixels, y down) of a view-space point with positive depth.
    pub fn view_to_screen(&self, v: Vec3) -> (f64, f64) {
        let t = (self.fov_y * 0.5).tan();
        let aspect = self.width as f64 / self.height as f64;
        let nx = v.x / (v.z * t * aspect);
        let ny = v.y / (v.z * t);
        (
            (nx + 1.0) * 0.5 * self.width as f64,
            (1.0 - ny) * 0.5 * self.height as f64,
        )
    }

    /// Projects a world point to (x, y, depth); `None` behind the eye.
    pub fn project(&self, p: Vec3) -> Option<[f64; 3]> {
        let frame = self.frame();
        let v = self.to_view(&frame, p);
        if v.z <= 0.0 {
            return None;
        }
        let (x, y) = self.view_to_screen(v);
        Some([x, y, v.z])
    }
}

/// Placement parameters for a ring of cameras around a mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingSpec {
    pub views: usize,
    pub width: usize,
    pub height: usize,
    /// Elevation above the horizontal plane, radians.
    pub elevation: f64,
    pub fov_y: f64,
    /// Fraction of the vertical fov subtended by the bounding sphere.
    pub fill: f64,
}

impl Default for RingSpec {
    fn default() -> Self {
        Self {
            views: 3,
            width: 512,
            height: 512,
            elevation: 20f64.to_radians(),
            fov_y: 45f64.to_radians(),
            fill: 0.8,
        }
    }
}

/// Center of the bounding box and the largest vertex distance from it.
pub fn bounding_sphere(mesh: &Mesh) -> (Vec3, f64) {
    let (lo, hi) = mesh.bounds();
    let center = (Vec3::from_f32(lo) + Vec3::from_f32(hi)) * 0.5;
    let radius = mesh
        .positions
        .iter()
        .map(|p| (Vec3::from_f32(*p) - center).length())
        .fold(0.0, f64::max);
    (center, radius)
}

fn framing(mesh: &Mesh, spec: &RingSpec) -> Result<(Vec3, f64, f64), RenderError> {
    let (center, radius) = bounding_sphere(mesh);
    if !(radius > 0.0) {
        return Err(RenderError::DegenerateMesh);
    }
    let distance = radius / (spec.fill * spec.fov_y * 0.5).sin();
    Ok((center, radius, distance))
}

fn clip_planes(distance: f64, radius: f64) -> (f64, f64) {
    let near = ((distance - radius) * 0.5).max(distance * 1e-3);
    (near, distance + 2.0 * radius)
}

/// Cameras on a circle around the bounding-sphere center, azimuths `2*pi*k/n`
/// starting at +Z, all looking at the center.
pub fn make_camera_ring(mesh: &Mesh, spec: &RingSpec) -> Result<Vec<Camera>, RenderError> {
    if spec.views == 0 {
        return Err(RenderError::InvalidCamera("need at least one view".into()));
    }
    let (center, radius, distance) = framing(mesh, spec)?;
    let (near, far) = clip_planes(distance, radius);
    let cams = (0..spec.views)
        .map(|k| {
            let azimuth = std::f64::consts::TAU * k as f64 / spec.views as f64;
            let dir = Vec3::new(
                spec.elevation.cos() * azimuth.sin(),
                spec.elevation.sin(),
                spec.elevation.cos() * azimuth.cos(),
            );
            Camera {
                eye: center + dir * distance,
                target: center,
                up: Vec3::Y,
                fov_y: spec.fov_y,
                width: spec.width,
                height: spec.height,
                near,
                far,
            }
        })
        .collect::<Vec<_>>();
    for c in &cams {
        c.validate()?;
    }
    Ok(cams)
}

/// Straight-down view, used as the optional extra view.
pub fn make_top_camera(mesh: &Mesh, spec: &RingSpec) -> Result<Camera, RenderError> {
    let (center, radius, distance) = framing(mesh, spec)?;
    let (near, far) = clip_planes(distance, radius);
    let cam = Camera {
        eye: center + Vec3::Y * distance,
        target: center,
        up: Vec3::new(0.0, 0.0, -1.0),
        fov_y: spec.fov_y,
        width: spec.width,
        height: spec.height,
        near,
        far,
    };
    cam.validate()?;
    Ok(cam)
}
