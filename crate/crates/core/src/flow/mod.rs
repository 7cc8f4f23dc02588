//! Dense optical flow between consecutive frames and the first-order kinematic
//! fields (divergence, curl, hyperbolic terms, shear) derived from it.

mod farneback;
mod kinematics;

pub use farneback::{
    estimate_flow, estimate_flow_planes, estimate_flow_sequence, flow_between, ExpandedFrame,
    FlowParams,
};
pub use kinematics::{kinematic_maps, KinematicMaps};

use crate::imgproc::Plane;
use crate::scalar::Real;

/// Per-pixel displacement from one frame to the next, in pixels per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField<T> {
    pub width: usize,
    pub height: usize,
    pub u: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Real> FlowField<T> {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            u: vec![T::zero(); width * height],
            v: vec![T::zero(); width * height],
        }
    }

    /// Builds a field by evaluating `f(x, y) -> (u, v)` at every pixel.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> (T, T)) -> Self {
        let mut flow = Self::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                let (u, v) = f(x, y);
                flow.u[y * width + x] = u;
                flow.v[y * width + x] = v;
            }
        }
        flow
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (T, T) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    pub(crate) fn from_planes(u: Plane<T>, v: Plane<T>) -> Self {
        FlowField {
            width: u.width,
            height: u.height,
            u: u.data,
            v: v.data,
        }
    }
}
