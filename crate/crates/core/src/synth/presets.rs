use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Face;
use crate::geometry3d::Vec3;
use crate::Error;

/// Built-in scenes. Coordinates are metres in the first camera's frame:
/// +Z forward, +Y down, second camera at `x = baseline`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    RandomPlanes,
    Path,
    Chessboard,
    Indoors,
    House,
    TwoPlane,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::RandomPlanes,
        Preset::Path,
        Preset::Chessboard,
        Preset::Indoors,
        Preset::House,
        Preset::TwoPlane,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::RandomPlanes => "random-planes",
            Preset::Path => "path",
            Preset::Chessboard => "chessboard",
            Preset::Indoors => "indoors",
            Preset::House => "house",
            Preset::TwoPlane => "two-plane",
        }
    }

    /// Faces of the preset. Only `random-planes` depends on `seed`.
    pub fn faces(self, seed: u64) -> Vec<Face> {
        let v = Vec3::new;
        match self {
            Preset::TwoPlane => vec![
                Face::quad("floor", v(-2.0, 1.5, 4.0), v(4.0, 0.0, 0.0), v(0.0, 0.0, 3.0), 0.3),
                Face::quad("wall", v(-2.0, -1.5, 7.0), v(4.0, 0.0, 0.0), v(0.0, 3.0, 0.0), 0.7),
            ],
            Preset::Path => vec![
                Face::quad("ground", v(-1.5, 1.5, 4.0), v(3.0, 0.0, 0.0), v(0.0, 0.0, 6.0), 0.2),
                Face::quad("left", v(-1.5, -1.0, 4.0), v(0.0, 0.0, 6.0), v(0.0, 2.5, 0.0), 0.5),
                Face::quad("right", v(1.5, -1.0, 4.0), v(0.0, 0.0, 6.0), v(0.0, 2.5, 0.0), 0.8),
                Face::quad("back", v(-1.5, -1.0, 10.0), v(3.0, 0.0, 0.0), v(0.0, 2.5, 0.0), 0.35),
            ],
            Preset::Chessboard => {
                // 4 × 2 squares with 0.1 gaps on a board tilted about both
                // image axes.
                let origin = v(-2.0, -1.0, 6.0);
                let ex = v(1.0, 0.0, 0.2);
                let ey = v(0.0, 1.0, 0.4);
                let mut faces = Vec::new();
                for row in 0..2 {
                    for col in 0..4 {
                        let corner = origin + ex * (col as f64 + 0.05) + ey * (row as f64 + 0.05);
                        let intensity = if (row + col) % 2 == 0 { 0.2 } else { 0.8 };
                        faces.push(Face::quad(
                            &format!("square{row}{col}"),
                            corner,
                            ex * 0.9,
                            ey * 0.9,
                            intensity,
                        ));
                    }
                }
                faces
            }
            Preset::Indoors => vec![
                Face::quad("floor", v(-2.5, 1.5, 4.0), v(5.0, 0.0, 0.0), v(0.0, 0.0, 6.0), 0.25),
                Face::quad("ceiling", v(-2.5, -1.5, 4.0), v(5.0, 0.0, 0.0), v(0.0, 0.0, 6.0), 0.9),
                Face::quad("left", v(-2.5, -1.5, 6.0), v(0.0, 0.0, 4.0), v(0.0, 3.0, 0.0), 0.55),
                Face::quad("right", v(2.5, -1.5, 6.0), v(0.0, 0.0, 4.0), v(0.0, 3.0, 0.0), 0.65),
                Face::quad("back", v(-2.5, -1.5, 10.0), v(5.0, 0.0, 0.0), v(0.0, 3.0, 0.0), 0.45),
                Face::quad("table", v(-1.2, 0.7, 6.0), v(1.5, 0.0, 0.0), v(0.0, 0.0, 1.5), 0.05),
                Face::quad("cabinet", v(1.0, 0.0, 8.0), v(1.0, 0.0, 0.0), v(0.0, 1.5, 0.0), 0.75),
            ],
            Preset::House => vec![
                Face::quad("ground", v(-3.0, 1.5, 5.0), v(6.0, 0.0, 0.0), v(0.0, 0.0, 6.0), 0.3),
                Face::quad("front", v(-1.5, -0.5, 8.0), v(3.0, 0.0, 0.0), v(0.0, 2.0, 0.0), 0.8),
                Face::quad("side", v(1.5, -0.5, 8.0), v(0.0, 0.0, 2.0), v(0.0, 2.0, 0.0), 0.6),
                Face::quad("roof", v(-1.5, -0.5, 8.0), v(3.0, 0.0, 0.0), v(0.0, -1.0, 1.0), 0.1),
            ],
            Preset::RandomPlanes => random_planes(seed),
        }
    }
}

/// Seven tilted rectangles on a loose grid of depths.
fn random_planes(seed: u64) -> Vec<Face> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_face);
    let slots = [
        (-2.0, -1.1),
        (0.0, -1.1),
        (2.0, -1.1),
        (-2.0, 1.1),
        (0.0, 1.1),
        (2.0, 1.1),
        (0.0, 0.0),
    ];
    slots
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            let z = if i == 6 { 5.5 } else { rng.random_range(7.0..9.0) };
            let (yaw, pitch) = (rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
            let e1 = Vec3::new(f64::cos(yaw), 0.0, f64::sin(yaw)) * 1.4;
            let e2 = Vec3::new(0.0, f64::cos(pitch), f64::sin(pitch)) * 1.0;
            let centre = Vec3::new(x, y, z);
            let intensity = ((i as f64 * 0.13) + 0.1) % 1.0;
            Face::quad(&format!("plane{i}"), centre - (e1 + e2) * 0.5, e1, e2, intensity)
        })
        .collect()
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Preset, Error> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
            Error::InvalidParameter(format!("unknown preset '{s}'; expected one of {}", names.join(", ")))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for p in Preset::ALL {
            let faces = p.faces(0);
            assert!(!faces.is_empty());
            for f in &faces {
                f.validate().unwrap();
            }
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert_eq!(Preset::Chessboard.faces(0).len(), 8);
        assert!("nope".parse::<Preset>().is_err());
    }
}
