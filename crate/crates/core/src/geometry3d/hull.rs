use serde::{Deserialize, Serialize};

use super::distance::{point_triangle_sq_dist, triangle_triangle_sq_dist};
use super::{Plane, Vec3};
use crate::{Error, Result};

/// Andrew's monotone chain. Returns indices of the strict hull vertices in
/// counter-clockwise order, or an empty vector if fewer than three
/// non-collinear points exist.
pub fn convex_hull_2d(points: &[[f64; 2]]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (points[i], points[j]);
        a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])).then(i.cmp(&j))
    });
    order.dedup_by(|a, b| points[*a] == points[*b]);
    if order.len() < 3 {
        return Vec::new();
    }
    let cross = |o: usize, a: usize, b: usize| {
        let (o, a, b) = (points[o], points[a], points[b]);
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<usize> = Vec::with_capacity(2 * order.len());
    for &i in &order {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], i) <= 0.0 {
            hull.pop();
        }
        hull.push(i);
    }
    let lower_len = hull.len() + 1;
    for &i in order.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], i) <= 0.0 {
            hull.pop();
        }
        hull.push(i);
    }
    hull.pop();
    if hull.len() < 3 {
        return Vec::new();
    }
    hull
}

/// Orthonormal in-plane frame used to map 3D points to plane coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneFrame {
    pub origin: Vec3,
    pub axis_u: Vec3,
    pub axis_v: Vec3,
    pub normal: Vec3,
    pub offset: f64,
}

impl PlaneFrame {
    pub fn new(plane: &Plane) -> PlaneFrame {
        let normal = plane.normal();
        let offset = plane.offset();
        // Seed axis: the world axis least aligned with the normal.
        let helper = if normal.x.abs() <= normal.y.abs() && normal.x.abs() <= normal.z.abs() {
            Vec3::x()
        } else if normal.y.abs() <= normal.z.abs() {
            Vec3::y()
        } else {
            Vec3::z()
        };
        let axis_u = normal.cross(&helper).normalize();
        let axis_v = normal.cross(&axis_u);
        PlaneFrame {
            origin: -normal * offset,
            axis_u,
            axis_v,
            normal,
            offset,
        }
    }

    pub fn to_2d(&self, p: &Vec3) -> [f64; 2] {
        let r = p - self.origin;
        [r.dot(&self.axis_u), r.dot(&self.axis_v)]
    }

    pub fn to_3d(&self, q: [f64; 2]) -> Vec3 {
        self.origin + self.axis_u * q[0] + self.axis_v * q[1]
    }

    pub fn sq_dist(&self, p: &Vec3) -> f64 {
        let s = self.normal.dot(p) + self.offset;
        s * s
    }
}

/// Convex boundary of a planar patch. Vertices lie on the plane the hull was
/// built against and are ordered counter-clockwise in that plane's frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarHull {
    vertices: Vec<Vec3>,
    polygon: Vec<[f64; 2]>,
    frame: PlaneFrame,
}

impl PlanarHull {
    /// Projects `points` onto `plane` and takes the 2D convex hull.
    pub fn build(plane: &Plane, points: &[Vec3]) -> Result<PlanarHull> {
        let frame = PlaneFrame::new(plane);
        let flat: Vec<[f64; 2]> = points.iter().map(|p| frame.to_2d(p)).collect();
        let idx = convex_hull_2d(&flat);
        if idx.len() < 3 {
            return Err(Error::DegenerateHull);
        }
        let polygon: Vec<[f64; 2]> = idx.iter().map(|&i| flat[i]).collect();
        let vertices = polygon.iter().map(|&q| frame.to_3d(q)).collect();
        Ok(PlanarHull {
            vertices,
            polygon,
            frame,
        })
    }

    /// Hull after `new_points` joined `members` (which already contains them).
    ///
    /// When the plane is unchanged and every new point projects inside the
    /// current polygon the hull is returned as is; otherwise it is rebuilt
    /// from all members projected onto the current plane.
    pub fn update(&self, plane: &Plane, members: &[Vec3], new_points: &[Vec3]) -> Result<PlanarHull> {
        let unchanged = self.frame.normal == plane.normal() && self.frame.offset == plane.offset();
        if unchanged && new_points.iter().all(|p| self.contains_projection(p)) {
            return Ok(self.clone());
        }
        PlanarHull::build(plane, members)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn polygon(&self) -> &[[f64; 2]] {
        &self.polygon
    }

    pub fn frame(&self) -> &PlaneFrame {
        &self.frame
    }

    pub fn centroid(&self) -> Vec3 {
        self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
    }

    /// Whether the orthogonal projection of `p` lies in the closed polygon,
    /// i.e. `p` is in the half-space slab over the patch.
    pub fn contains_projection(&self, p: &Vec3) -> bool {
        point_in_convex_polygon(&self.polygon, self.frame.to_2d(p))
    }

    /// Fan triangulation from vertex 0.
    pub fn triangles(&self) -> impl Iterator<Item = [&Vec3; 3]> + '_ {
        let v = &self.vertices;
        (1..v.len() - 1).map(move |i| [&v[0], &v[i], &v[i + 1]])
    }

    /// Sum of fan-triangle areas.
    pub fn area(&self) -> f64 {
        self.triangles()
            .map(|[a, b, c]| 0.5 * (b - a).cross(&(c - a)).norm())
            .sum()
    }

    /// Whether consecutive edge cross products in plane coordinates never
    /// turn clockwise.
    pub fn is_convex(&self) -> bool {
        let n = self.polygon.len();
        n >= 3
            && (0..n).all(|i| {
                let (o, a, b) = (self.polygon[i], self.polygon[(i + 1) % n], self.polygon[(i + 2) % n]);
                (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]) > 0.0
            })
    }
}

fn point_in_convex_polygon(polygon: &[[f64; 2]], q: [f64; 2]) -> bool {
    let n = polygon.len();
    (0..n).all(|i| {
        let (a, b) = (polygon[i], polygon[(i + 1) % n]);
        (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0]) >= 0.0
    })
}

/// Squared distance from `p` to the solid hull polygon.
///
/// If `p` projects inside the polygon this is exactly the squared plane
/// distance; otherwise the minimum over the fan triangles.
pub fn point_hull_sq_dist(hull: &PlanarHull, p: &Vec3) -> f64 {
    if hull.contains_projection(p) {
        return hull.frame.sq_dist(p);
    }
    hull.triangles()
        .map(|[a, b, c]| point_triangle_sq_dist(p, a, b, c))
        .fold(f64::INFINITY, f64::min)
}

/// Minimum squared distance between two hull polygons over all fan triangle
/// pairs.
pub fn hull_hull_min_sq_dist(h1: &PlanarHull, h2: &PlanarHull) -> f64 {
    let mut best = f64::INFINITY;
    for t1 in h1.triangles() {
        for t2 in h2.triangles() {
            best = best.min(triangle_triangle_sq_dist(t1, t2));
            if best == 0.0 {
                return 0.0;
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry3d::PlaneType;
    use approx::assert_abs_diff_eq;

    fn unit_square(z: f64) -> (Plane, Vec<Vec3>) {
        let pts = vec![
            Vec3::new(0.0, 0.0, z),
            Vec3::new(1.0, 0.0, z),
            Vec3::new(1.0, 1.0, z),
            Vec3::new(0.0, 1.0, z),
        ];
        (Plane::fit(&pts, PlaneType::Z).unwrap(), pts)
    }

    #[test]
    fn monotone_chain_square_with_interior() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.5, 0.5], [1.0, 1.0], [0.0, 1.0], [0.5, 0.0]];
        let hull = convex_hull_2d(&pts);
        assert_eq!(hull, vec![0, 1, 3, 4]);
        assert!(convex_hull_2d(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).is_empty());
    }

    #[test]
    fn square_hull_distances() {
        let (plane, pts) = unit_square(0.0);
        let hull = PlanarHull::build(&plane, &pts).unwrap();
        assert_eq!(hull.vertices().len(), 4);
        assert!(hull.is_convex());
        assert_abs_diff_eq!(hull.area(), 1.0, epsilon = 1e-12);
        for p in &pts {
            assert!(point_hull_sq_dist(&hull, p) < 1e-24);
        }
        assert_abs_diff_eq!(
            point_hull_sq_dist(&hull, &Vec3::new(0.5, 0.5, 1.0)),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            point_hull_sq_dist(&hull, &Vec3::new(2.0, 0.5, 1.0)),
            2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn stacked_squares() {
        let (p0, s0) = unit_square(0.0);
        let (p3, s3) = unit_square(3.0);
        let h0 = PlanarHull::build(&p0, &s0).unwrap();
        let h3 = PlanarHull::build(&p3, &s3).unwrap();
        assert_abs_diff_eq!(hull_hull_min_sq_dist(&h0, &h3), 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hull_hull_min_sq_dist(&h3, &h0), 9.0, epsilon = 1e-12);
        assert_eq!(hull_hull_min_sq_dist(&h0, &h0), 0.0);
    }

    #[test]
    fn update_keeps_hull_for_interior_point() {
        let (plane, mut pts) = unit_square(0.0);
        let hull = PlanarHull::build(&plane, &pts).unwrap();
        let inner = Vec3::new(0.3, 0.6, 0.0);
        pts.push(inner);
        let plane2 = plane.update_fit(&inner).unwrap();
        let updated = hull.update(&plane2, &pts, &[inner]).unwrap();
        assert_eq!(updated.vertices(), hull.vertices());

        let outer = Vec3::new(2.0, 2.0, 0.0);
        pts.push(outer);
        let plane3 = plane2.update_fit(&outer).unwrap();
        let grown = updated.update(&plane3, &pts, &[outer]).unwrap();
        assert!(grown.vertices().iter().any(|v| (v - outer).norm() < 1e-12));
        for v in hull.vertices() {
            assert!(grown.contains_projection(v));
        }
    }

    #[test]
    fn degenerate_hull() {
        let pts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
        ];
        let plane = Plane::from_slope(PlaneType::Z, [0.0, 0.0, 0.0]);
        assert_eq!(PlanarHull::build(&plane, &pts), Err(Error::DegenerateHull));
    }
}
