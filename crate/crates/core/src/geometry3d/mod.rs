//! Plane fitting, planar convex hulls and the distance queries built on them.

mod distance;
mod hull;
mod plane;

pub use distance::{
    closest_point_on_triangle, point_triangle_sq_dist, segment_segment_sq_dist, triangle_triangle_sq_dist,
};
pub use hull::{convex_hull_2d, hull_hull_min_sq_dist, point_hull_sq_dist, PlanarHull, PlaneFrame};
pub use plane::{choose_plane_type, point_plane_sq_dist, FitSums, Plane, PlaneType};

pub type Vec3 = nalgebra::Vector3<f64>;
