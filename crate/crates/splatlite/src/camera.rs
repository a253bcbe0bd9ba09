//! Pinhole camera with a world-to-camera rigid pose.

use glam::{DMat3, DVec3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// World-to-camera rotation, row-major rows.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub near: f64,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidParameter("focal lengths must be > 0".into()));
        }
        if self.width < 1 || self.height < 1 {
            return Err(Error::InvalidParameter("image must be at least 1x1".into()));
        }
        let r = self.rotation_matrix();
        let rrt = r * r.transpose();
        for c in 0..3 {
            for row in 0..3 {
                let expect = if c == row { 1.0 } else { 0.0 };
                if (rrt.col(c)[row] - expect).abs() > 1e-8 {
                    return Err(Error::InvalidParameter(
                        "camera rotation is not orthonormal".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// World-to-camera rotation as a matrix.
    pub fn rotation_matrix(&self) -> DMat3 {
        DMat3::from_cols(
            DVec3::new(self.rotation[0][0], self.rotation[1][0], self.rotation[2][0]),
            DVec3::new(self.rotation[0][1], self.rotation[1][1], self.rotation[2][1]),
            DVec3::new(self.rotation[0][2], self.rotation[1][2], self.rotation[2][2]),
        )
    }

    pub fn translation_vec(&self) -> DVec3 {
        DVec3::from_array(self.translation)
    }

    pub fn world_to_camera(&self, p: DVec3) -> DVec3 {
        self.rotation_matrix() * p + self.translation_vec()
    }

    /// Camera center in world coordinates.
    pub fn position(&self) -> DVec3 {
        -(self.rotation_matrix().transpose() * self.translation_vec())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Camera on a ring looking at `target`, +z forward, y-down image plane.
    pub fn look_at(
        eye: DVec3,
        target: DVec3,
        up_hint: DVec3,
        fx: f64,
        fy: f64,
        width: usize,
        height: usize,
        near: f64,
    ) -> Camera {
        let forward = (target - eye).normalize();
        let right = forward.cross(up_hint).normalize();
        let down = forward.cross(right).normalize();
        // rows of the world-to-camera rotation
        let rows = [right, down, forward];
        let rotation = [rows[0].to_array(), rows[1].to_array(), rows[2].to_array()];
        let r = DMat3::from_cols(
            DVec3::new(rows[0].x, rows[1].x, rows[2].x),
            DVec3::new(rows[0].y, rows[1].y, rows[2].y),
            DVec3::new(rows[0].z, rows[1].z, rows[2].z),
        );
        let translation = (-(r * eye)).to_array();
        Camera {
            fx,
            fy,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            width,
            height,
            rotation,
            translation,
            near,
        }
    }
}
