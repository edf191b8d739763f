use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::geometry::norm;

/// Rectangular room with one reflection coefficient per surface class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoomConfig {
    /// meters, `[x, y, z]`; the floor is `z = 0`
    pub dimensions: [f64; 3],
    pub wall_reflection: f64,
    pub floor_reflection: f64,
    pub ceiling_reflection: f64,
    /// m/s
    pub sound_speed: f64,
    pub max_image_order: u32,
}

impl Default for RoomConfig {
    /// 20 m cube, every surface 0.5, c0 = 345 m/s, images up to order 2.
    fn default() -> Self {
        Self {
            dimensions: [20.0; 3],
            wall_reflection: 0.5,
            floor_reflection: 0.5,
            ceiling_reflection: 0.5,
            sound_speed: 345.0,
            max_image_order: 2,
        }
    }
}

impl RoomConfig {
    pub fn validate(&self) -> Result<()> {
        for &d in &self.dimensions {
            ensure_positive("room dimension", d)?;
        }
        for (name, r) in [
            ("wall_reflection", self.wall_reflection),
            ("floor_reflection", self.floor_reflection),
            ("ceiling_reflection", self.ceiling_reflection),
        ] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must lie in [0, 1), got {r}"),
                });
            }
        }
        ensure_positive("sound_speed", self.sound_speed)
    }

    pub fn center(&self) -> [f64; 3] {
        self.dimensions.map(|d| 0.5 * d)
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        p.iter()
            .zip(self.dimensions)
            .all(|(&c, d)| c > 0.0 && c < d)
    }

    fn coefficients(&self, axis: usize) -> (f64, f64) {
        match axis {
            2 => (self.floor_reflection, self.ceiling_reflection),
            _ => (self.wall_reflection, self.wall_reflection),
        }
    }
}

/// A mirror image of the source and the product of the reflection coefficients
/// along its path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSource {
    pub position: [f64; 3],
    pub reflection: f64,
    pub order: u32,
}

/// Delay and amplitude of one propagation path at a receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationPath {
    /// seconds
    pub delay: f64,
    pub gain: f64,
    pub order: u32,
}

/// Image index `j` along one axis: `|j|` reflections, split between the low
/// (coordinate 0) and high wall.
fn axis_image(x: f64, len: f64, j: i32) -> (f64, u32, u32) {
    let pos = if j % 2 == 0 {
        j as f64 * len + x
    } else {
        (j + 1) as f64 * len - x
    };
    let m = j.unsigned_abs();
    let (low, high) = if j >= 0 {
        (m / 2, m - m / 2)
    } else {
        (m - m / 2, m / 2)
    };
    (pos, low, high)
}

/// All image sources with reflection order `<= order`, direct path first.
pub fn image_sources(room: &RoomConfig, src: [f64; 3], order: u32) -> Result<Vec<ImageSource>> {
    room.validate()?;
    if !room.contains(src) {
        return Err(Error::SourceOutsideRoom(src));
    }
    if order > room.max_image_order {
        return Err(Error::InvalidParameter {
            name: "image order",
            reason: format!("{order} exceeds max_image_order {}", room.max_image_order),
        });
    }
    let n = order as i32;
    let mut out = Vec::new();
    for jx in -n..=n {
        for jy in -(n - jx.abs())..=(n - jx.abs()) {
            let rest = n - jx.abs() - jy.abs();
            for jz in -rest..=rest {
                let mut position = [0.0; 3];
                let mut reflection = 1.0;
                for (axis, j) in [jx, jy, jz].into_iter().enumerate() {
                    let (p, low, high) = axis_image(src[axis], room.dimensions[axis], j);
                    let (r_low, r_high) = room.coefficients(axis);
                    position[axis] = p;
                    reflection *= r_low.powi(low as i32) * r_high.powi(high as i32);
                }
                out.push(ImageSource {
                    position,
                    reflection,
                    order: (jx.abs() + jy.abs() + jz.abs()) as u32,
                });
            }
        }
    }
    out.sort_by_key(|i| i.order);
    Ok(out)
}

/// Delays and `reflection / distance` gains of every image at a receiver.
pub fn image_paths(
    room: &RoomConfig,
    src: [f64; 3],
    receiver: [f64; 3],
    order: u32,
) -> Result<Vec<PropagationPath>> {
    Ok(image_sources(room, src, order)?
        .into_iter()
        .map(|img| paths_from(&img, receiver, room.sound_speed))
        .collect())
}

pub(crate) fn paths_from(img: &ImageSource, receiver: [f64; 3], c0: f64) -> PropagationPath {
    let r = norm([
        img.position[0] - receiver[0],
        img.position[1] - receiver[1],
        img.position[2] - receiver[2],
    ]);
    PropagationPath {
        delay: r / c0,
        gain: img.reflection / r,
        order: img.order,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::collections::HashMap;

    /// Brute-force construction: repeatedly mirror every known image across
    /// each of the six surfaces.
    fn mirror_enumeration(room: &RoomConfig, src: [f64; 3], order: u32) -> Vec<ImageSource> {
        let key = |p: [f64; 3]| p.map(|c| (c * 1e6).round() as i64);
        let mut seen: HashMap<[i64; 3], ImageSource> = HashMap::new();
        let first = ImageSource {
            position: src,
            reflection: 1.0,
            order: 0,
        };
        seen.insert(key(src), first);
        let mut frontier = vec![first];
        for _ in 0..order {
            let mut next = Vec::new();
            for img in &frontier {
                for axis in 0..3 {
                    let (r_low, r_high) = room.coefficients(axis);
                    for (plane, r) in [(0.0, r_low), (room.dimensions[axis], r_high)] {
                        let mut p = img.position;
                        p[axis] = 2.0 * plane - p[axis];
                        let cand = ImageSource {
                            position: p,
                            reflection: img.reflection * r,
                            order: img.order + 1,
                        };
                        if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(key(p)) {
                            e.insert(cand);
                            next.push(cand);
                        }
                    }
                }
            }
            frontier = next;
        }
        seen.into_values().collect()
    }

    fn unequal_room() -> RoomConfig {
        RoomConfig {
            dimensions: [7.0, 5.0, 3.0],
            wall_reflection: 0.7,
            floor_reflection: 0.3,
            ceiling_reflection: 0.9,
            max_image_order: 4,
            ..RoomConfig::default()
        }
    }

    #[test]
    fn order_zero_is_the_direct_path() {
        let room = RoomConfig::default();
        let src = [15.0, 10.0, 10.0];
        let mic = [10.0, 10.0, 10.0];
        let paths = image_paths(&room, src, mic, 0).unwrap();
        assert_eq!(paths.len(), 1);
        assert_abs_diff_eq!(paths[0].delay, 5.0 / 345.0, epsilon = 1e-15);
        assert_abs_diff_eq!(paths[0].gain, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn order_one_has_six_images() {
        let room = RoomConfig::default();
        let imgs = image_sources(&room, [3.0, 4.0, 5.0], 1).unwrap();
        assert_eq!(imgs.len(), 7);
        assert_eq!(imgs.iter().filter(|i| i.order == 1).count(), 6);
    }

    #[test]
    fn floor_image_gain_by_mirror_construction() {
        // Robot at the room center, source 5 m ahead on the same height.
        let room = RoomConfig::default();
        let mic = [10.0, 10.0, 10.0];
        let src = [15.0, 10.0, 10.0];
        let floor_img = [15.0, 10.0, -10.0];
        let r_img = ((5.0f64).powi(2) + 20.0f64.powi(2)).sqrt();
        let imgs = image_sources(&room, src, 1).unwrap();
        let hit = imgs
            .iter()
            .find(|i| (i.position[2] - floor_img[2]).abs() < 1e-12 && i.position[0] == 15.0)
            .expect("floor image");
        let p = paths_from(hit, mic, room.sound_speed);
        assert_abs_diff_eq!(p.gain, 0.5 / r_img, epsilon = 1e-15);
    }

    #[test]
    fn matches_brute_force_enumeration() {
        let room = unequal_room();
        let src = [1.3, 3.1, 0.7];
        for order in 0..=4 {
            let mut ours = image_sources(&room, src, order).unwrap();
            let mut brute = mirror_enumeration(&room, src, order);
            assert_eq!(ours.len(), brute.len(), "order {order}");
            let k = |i: &ImageSource| i.position.map(|c| (c * 1e6).round() as i64);
            ours.sort_by_key(k);
            brute.sort_by_key(k);
            for (a, b) in ours.iter().zip(&brute) {
                assert_eq!(a.order, b.order);
                assert_abs_diff_eq!(a.reflection, b.reflection, epsilon = 1e-12);
                for c in 0..3 {
                    assert_abs_diff_eq!(a.position[c], b.position[c], epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn reflections_carry_less_energy_than_the_direct_path() {
        let room = RoomConfig::default();
        let src = [12.0, 13.0, 11.0];
        let mic = room.center();
        let paths = image_paths(&room, src, mic, 2).unwrap();
        let direct = paths[0];
        assert_eq!(direct.order, 0);
        for p in &paths[1..] {
            assert!(p.delay > direct.delay);
            assert!(p.gain.powi(2) < direct.gain.powi(2));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let room = RoomConfig::default();
        assert!(matches!(
            image_sources(&room, [25.0, 1.0, 1.0], 0),
            Err(Error::SourceOutsideRoom(_))
        ));
        assert!(image_sources(&room, [1.0, 1.0, 1.0], 3).is_err());
        let bad = RoomConfig {
            wall_reflection: 1.0,
            ..room
        };
        assert!(bad.validate().is_err());
        let bad = RoomConfig {
            dimensions: [0.0, 1.0, 1.0],
            ..room
        };
        assert!(bad.validate().is_err());
    }
}
