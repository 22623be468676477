use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::{Error, Result};

/// Which coordinate is treated as the dependent variable of the
/// slope-intercept parameterisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlaneType {
    /// `Z = a·X + b·Y + d`
    #[serde(rename = "Z-form")]
    Z,
    /// `X = b·Y + c·Z + d`
    #[serde(rename = "X-form")]
    X,
    /// `Y = a·X + c·Z + d`
    #[serde(rename = "Y-form")]
    Y,
}

impl PlaneType {
    /// Axis indices `(u, v, dependent)`.
    pub fn axes(self) -> (usize, usize, usize) {
        match self {
            PlaneType::Z => (0, 1, 2),
            PlaneType::X => (1, 2, 0),
            PlaneType::Y => (0, 2, 1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PlaneType::Z => "Z-form",
            PlaneType::X => "X-form",
            PlaneType::Y => "Y-form",
        }
    }
}

/// Picks the form whose dependent axis has the smallest coordinate range.
///
/// Ties prefer Z, then Y, then X.
pub fn choose_plane_type(points: &[Vec3]) -> Result<PlaneType> {
    if points.len() < 3 || !spans_plane(points) {
        return Err(Error::DegenerateCluster);
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let range = |k: usize| hi[k] - lo[k];
    let mut best = PlaneType::Z;
    for candidate in [PlaneType::Y, PlaneType::X] {
        if range(candidate.axes().2) < range(best.axes().2) {
            best = candidate;
        }
    }
    Ok(best)
}

/// True when the points are neither coincident nor collinear.
fn spans_plane(points: &[Vec3]) -> bool {
    let origin = points[0];
    let scale = points.iter().map(|p| (p - origin).norm()).fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return false;
    }
    let far = points
        .iter()
        .copied()
        .max_by(|a, b| (a - origin).norm().total_cmp(&(b - origin).norm()))
        .unwrap();
    let dir = (far - origin) / scale;
    points.iter().any(|p| (p - origin).cross(&dir).norm() > 1e-9 * scale)
}

/// Running sums of the 3×3 normal equations, expressed in the plane type's
/// `(u, v, w)` axes where `w` is the dependent coordinate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FitSums {
    pub uu: f64,
    pub uv: f64,
    pub u: f64,
    pub vv: f64,
    pub v: f64,
    pub n: f64,
    pub uw: f64,
    pub vw: f64,
    pub w: f64,
}

impl FitSums {
    pub fn add(&mut self, plane_type: PlaneType, p: &Vec3) {
        let (iu, iv, iw) = plane_type.axes();
        let (u, v, w) = (p[iu], p[iv], p[iw]);
        self.uu += u * u;
        self.uv += u * v;
        self.u += u;
        self.vv += v * v;
        self.v += v;
        self.n += 1.0;
        self.uw += u * w;
        self.vw += v * w;
        self.w += w;
    }

    /// Solves the normal equations by explicit adjugate inversion.
    pub fn solve(&self) -> Result<[f64; 3]> {
        let m = [
            [self.uu, self.uv, self.u],
            [self.uv, self.vv, self.v],
            [self.u, self.v, self.n],
        ];
        let rhs = [self.uw, self.vw, self.w];
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        // adj(M) for a symmetric matrix is symmetric.
        let a00 = cof(1, 2, 1, 2);
        let a01 = -cof(0, 2, 1, 2);
        let a02 = cof(0, 1, 1, 2);
        let a11 = cof(0, 2, 0, 2);
        let a12 = -cof(0, 1, 0, 2);
        let a22 = cof(0, 1, 0, 1);
        let det = m[0][0] * a00 + m[0][1] * a01 + m[0][2] * a02;
        let scale = self.uu * self.vv * self.n;
        if !det.is_finite() || scale <= 0.0 || det.abs() <= 1e-12 * scale {
            return Err(Error::RankDeficientFit);
        }
        let adj = [[a00, a01, a02], [a01, a11, a12], [a02, a12, a22]];
        let mut out = [0.0; 3];
        for (r, row) in adj.iter().enumerate() {
            out[r] = (row[0] * rhs[0] + row[1] * rhs[1] + row[2] * rhs[2]) / det;
        }
        Ok(out)
    }
}

/// A plane fitted in slope-intercept form, together with its normalised
/// implicit form `A·X + B·Y + C·Z + D = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    plane_type: PlaneType,
    slope_coeffs: [f64; 3],
    implicit: [f64; 4],
    sums: FitSums,
}

impl Plane {
    /// Least-squares fit minimising residuals along the dependent axis.
    pub fn fit(points: &[Vec3], plane_type: PlaneType) -> Result<Plane> {
        if points.len() < 3 {
            return Err(Error::RankDeficientFit);
        }
        let mut sums = FitSums::default();
        for p in points {
            sums.add(plane_type, p);
        }
        Plane::from_sums(plane_type, sums)
    }

    /// Runs the slope test, then fits.
    pub fn fit_auto(points: &[Vec3]) -> Result<Plane> {
        let plane_type = choose_plane_type(points)?;
        Plane::fit(points, plane_type)
    }

    pub fn from_sums(plane_type: PlaneType, sums: FitSums) -> Result<Plane> {
        let slope_coeffs = sums.solve()?;
        Ok(Plane {
            plane_type,
            slope_coeffs,
            implicit: implicit_from_slope(plane_type, slope_coeffs),
            sums,
        })
    }

    /// Builds a plane directly from slope-intercept coefficients, with empty
    /// fit sums.
    pub fn from_slope(plane_type: PlaneType, slope_coeffs: [f64; 3]) -> Plane {
        Plane {
            plane_type,
            slope_coeffs,
            implicit: implicit_from_slope(plane_type, slope_coeffs),
            sums: FitSums::default(),
        }
    }

    /// Returns the plane refitted with one more point.
    pub fn update_fit(&self, p: &Vec3) -> Result<Plane> {
        let mut sums = self.sums;
        sums.add(self.plane_type, p);
        Plane::from_sums(self.plane_type, sums)
    }

    /// In-place variant of [`Plane::update_fit`] for a batch of points. On
    /// error the plane is left untouched.
    pub fn extend<'a>(&mut self, points: impl IntoIterator<Item = &'a Vec3>) -> Result<()> {
        let mut sums = self.sums;
        for p in points {
            sums.add(self.plane_type, p);
        }
        *self = Plane::from_sums(self.plane_type, sums)?;
        Ok(())
    }

    pub fn plane_type(&self) -> PlaneType {
        self.plane_type
    }

    pub fn slope_coeffs(&self) -> [f64; 3] {
        self.slope_coeffs
    }

    /// `(A, B, C, D)` with `A² + B² + C² = 1`.
    pub fn implicit(&self) -> [f64; 4] {
        self.implicit
    }

    pub fn sums(&self) -> &FitSums {
        &self.sums
    }

    pub fn n_points(&self) -> usize {
        self.sums.n as usize
    }

    pub fn normal(&self) -> Vec3 {
        Vec3::new(self.implicit[0], self.implicit[1], self.implicit[2])
    }

    pub fn offset(&self) -> f64 {
        self.implicit[3]
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal().dot(p) + self.offset()
    }

    /// Squared perpendicular distance `(A·X + B·Y + C·Z + D)²`.
    pub fn sq_dist(&self, p: &Vec3) -> f64 {
        let s = self.signed_distance(p);
        s * s
    }

    /// Orthogonal projection onto the plane.
    pub fn project(&self, p: &Vec3) -> Vec3 {
        p - self.normal() * self.signed_distance(p)
    }

    /// Residual along the dependent axis: `predicted - observed`.
    pub fn axis_residual(&self, p: &Vec3) -> f64 {
        let (iu, iv, iw) = self.plane_type.axes();
        let [s0, s1, s2] = self.slope_coeffs;
        s0 * p[iu] + s1 * p[iv] + s2 - p[iw]
    }
}

pub fn point_plane_sq_dist(plane: &Plane, p: &Vec3) -> f64 {
    plane.sq_dist(p)
}

fn implicit_from_slope(plane_type: PlaneType, s: [f64; 3]) -> [f64; 4] {
    let (iu, iv, iw) = plane_type.axes();
    let lead = 1.0 / (1.0 + s[0] * s[0] + s[1] * s[1]).sqrt();
    let mut implicit = [0.0; 4];
    implicit[iw] = lead;
    implicit[iu] = -lead * s[0];
    implicit[iv] = -lead * s[1];
    implicit[3] = -lead * s[2];
    implicit
}
