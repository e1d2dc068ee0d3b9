//! Egocentric bird's-eye rasterisation of the world for one agent.
//!
//! The image is 84x84 RGB with the observing vehicle at pixel (row 70,
//! column 42) and its heading pointing to the top of the image. In
//! `Lite21` mode the scene is sampled on a 21x21 grid and each sample is
//! replicated into a 4x4 block, so the logical image is still 84x84.

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::world::WorldState;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const IMAGE_SIZE: usize = 84;
pub const CHANNELS: usize = 3;
pub const ANCHOR_ROW: usize = 70;
pub const ANCHOR_COL: usize = 42;
const LITE_SIZE: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObsMode {
    Full84,
    Lite21,
}

impl ObsMode {
    /// Side length of the grid the scene is actually sampled on.
    pub fn native_size(self) -> usize {
        match self {
            ObsMode::Full84 => IMAGE_SIZE,
            ObsMode::Lite21 => LITE_SIZE,
        }
    }
}

impl fmt::Display for ObsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObsMode::Full84 => "full84",
            ObsMode::Lite21 => "lite21",
        })
    }
}

impl FromStr for ObsMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full84" => Ok(ObsMode::Full84),
            "lite21" => Ok(ObsMode::Lite21),
            other => Err(format!("unknown observation mode `{other}` (full84 | lite21)")),
        }
    }
}

pub type Rgb = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Palette {
    pub offroad: Rgb,
    pub road: Rgb,
    pub marking: Rgb,
    pub goal: Rgb,
    pub other_vehicle: Rgb,
    pub own_vehicle: Rgb,
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            offroad: [0.05, 0.25, 0.05],
            road: [0.4, 0.4, 0.4],
            marking: [1.0, 1.0, 1.0],
            goal: [0.1, 0.3, 1.0],
            other_vehicle: [1.0, 0.1, 0.1],
            own_vehicle: [0.1, 1.0, 0.2],
        }
    }
}

impl Palette {
    fn all(&self) -> [Rgb; 6] {
        [
            self.offroad,
            self.road,
            self.marking,
            self.goal,
            self.other_vehicle,
            self.own_vehicle,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterConfig {
    /// Metres visible ahead of the vehicle, mapped onto the 70 rows above it.
    pub view_ahead: f64,
    /// Metres visible to each side, mapped onto 42 columns.
    pub view_side: f64,
    pub goal_radius: f64,
    pub marking_half_width: f64,
    pub palette: Palette,
    pub resolution_mode: ObsMode,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            view_ahead: 40.0,
            view_side: 20.0,
            goal_radius: 1.5,
            marking_half_width: 0.3,
            palette: Palette::default(),
            resolution_mode: ObsMode::Full84,
        }
    }
}

impl RasterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.view_ahead > 0.0 && self.view_side > 0.0) {
            return Err(Error::Config(
                "raster.view_ahead and raster.view_side must be positive".into(),
            ));
        }
        let colors = self.palette.all();
        for c in colors.iter().flatten() {
            if !(0.0..=1.0).contains(c) {
                return Err(Error::Config("raster.palette values must lie in [0, 1]".into()));
            }
        }
        for i in 0..colors.len() {
            for j in i + 1..colors.len() {
                if colors[i] == colors[j] {
                    return Err(Error::Config("raster.palette classes must be distinct".into()));
                }
            }
        }
        Ok(())
    }

    /// Metres per image row.
    pub fn row_scale(&self) -> f64 {
        self.view_ahead / ANCHOR_ROW as f64
    }

    /// Metres per image column.
    pub fn col_scale(&self) -> f64 {
        self.view_side / ANCHOR_COL as f64
    }
}

/// One agent's rendered observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationImage {
    pub agent_id: String,
    pub tick: u64,
    mode: ObsMode,
    /// Row-major, channel-interleaved samples on the native grid.
    native: Vec<f64>,
}

impl ObservationImage {
    pub fn from_native(agent_id: &str, tick: u64, mode: ObsMode, native: Vec<f64>) -> Result<Self> {
        let n = mode.native_size();
        if native.len() != n * n * CHANNELS {
            return Err(Error::Contract(format!(
                "observation needs {} values for {mode}, got {}",
                n * n * CHANNELS,
                native.len()
            )));
        }
        Ok(Self {
            agent_id: agent_id.to_string(),
            tick,
            mode,
            native,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (IMAGE_SIZE, IMAGE_SIZE, CHANNELS)
    }

    pub fn mode(&self) -> ObsMode {
        self.mode
    }

    pub fn native(&self) -> &[f64] {
        &self.native
    }

    /// Value at full-resolution coordinates.
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        let f = IMAGE_SIZE / self.mode.native_size();
        let n = self.mode.native_size();
        self.native[((row / f) * n + col / f) * CHANNELS + ch]
    }

    pub fn pixel(&self, row: usize, col: usize) -> Rgb {
        [self.get(row, col, 0), self.get(row, col, 1), self.get(row, col, 2)]
    }

    /// The 84x84x3 array, row-major with interleaved channels.
    pub fn to_full(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(IMAGE_SIZE * IMAGE_SIZE * CHANNELS);
        for r in 0..IMAGE_SIZE {
            for c in 0..IMAGE_SIZE {
                out.extend_from_slice(&self.pixel(r, c));
            }
        }
        out
    }

    /// Channel-first samples on a `size` x `size` grid, where `size` divides 84.
    /// Sampling picks the top-left pixel of each block, which inverts block replication.
    pub fn planar(&self, size: usize) -> Result<Vec<f64>> {
        if size == 0 || !IMAGE_SIZE.is_multiple_of(size) {
            return Err(Error::Contract(format!(
                "cannot sample an {IMAGE_SIZE}x{IMAGE_SIZE} observation on a {size}x{size} grid"
            )));
        }
        let stride = IMAGE_SIZE / size;
        let mut out = vec![0.0; CHANNELS * size * size];
        for r in 0..size {
            for c in 0..size {
                let px = self.pixel(r * stride, c * stride);
                for ch in 0..CHANNELS {
                    out[(ch * size + r) * size + c] = px[ch];
                }
            }
        }
        Ok(out)
    }

    /// Binary portable pixmap (P6) of the full-resolution image.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{IMAGE_SIZE} {IMAGE_SIZE}\n255\n").into_bytes();
        for r in 0..IMAGE_SIZE {
            for c in 0..IMAGE_SIZE {
                for v in self.pixel(r, c) {
                    out.push((v * 255.0).round() as u8);
                }
            }
        }
        out
    }

    pub fn count_color(&self, color: Rgb) -> usize {
        (0..IMAGE_SIZE)
            .flat_map(|r| (0..IMAGE_SIZE).map(move |c| (r, c)))
            .filter(|&(r, c)| self.pixel(r, c) == color)
            .count()
    }
}

/// World position seen at continuous image coordinates `(row, col)`, where
/// the anchor pixel's centre is `(70.5, 42.5)`.
fn image_to_world(cfg: &RasterConfig, origin: Vec2, heading: f64, row: f64, col: f64) -> Vec2 {
    let forward = (ANCHOR_ROW as f64 + 0.5 - row) * cfg.row_scale();
    let right = (col - ANCHOR_COL as f64 - 0.5) * cfg.col_scale();
    let (s, c) = heading.sin_cos();
    origin + Vec2::new(c, s) * forward + Vec2::new(s, -c) * right
}

/// Renders `agent_id`'s view of `world`.
pub fn render(world: &WorldState, agent_id: &str, cfg: &RasterConfig) -> Result<ObservationImage> {
    let own = world
        .vehicle(agent_id)
        .ok_or_else(|| Error::Contract(format!("unknown agent `{agent_id}`")))?;
    let own_box = own.footprint();
    let others: Vec<_> = world
        .agents
        .iter()
        .filter(|(id, _)| id.as_str() != agent_id)
        .map(|(_, b)| b.state.footprint())
        .collect();
    let pal = &cfg.palette;
    let n = cfg.resolution_mode.native_size();
    let block = (IMAGE_SIZE / n) as f64;
    let mut native = Vec::with_capacity(n * n * CHANNELS);
    for r in 0..n {
        for c in 0..n {
            let p = image_to_world(
                cfg,
                own.position,
                own.heading,
                (r as f64 + 0.5) * block,
                (c as f64 + 0.5) * block,
            );
            let color = if own_box.contains(p) {
                pal.own_vehicle
            } else if others.iter().any(|b| b.contains(p)) {
                pal.other_vehicle
            } else if p.distance(own.goal) <= cfg.goal_radius {
                pal.goal
            } else if !world.map.is_drivable(p) {
                pal.offroad
            } else if world
                .map
                .markings
                .iter()
                .any(|m| m.distance(p) <= cfg.marking_half_width.max(0.5 * block * cfg.col_scale()))
            {
                pal.marking
            } else {
                pal.road
            };
            native.extend_from_slice(&color);
        }
    }
    ObservationImage::from_native(agent_id, world.tick, cfg.resolution_mode, native)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{AgentSpec, ScenarioConfig, VICTIM_1, VICTIM_2};
    use crate::world::VehicleState;

    fn two_car_corridor() -> WorldState {
        let mut sc = ScenarioConfig::corridor();
        sc.agents.push(AgentSpec {
            id: VICTIM_2.into(),
            spawn: [10.0, 0.0],
            goal: [60.0, 0.0],
            ..sc.agents[0].clone()
        });
        WorldState::new(&sc, 0).unwrap()
    }

    #[test]
    fn lone_agent_sees_no_other_vehicle() {
        let w = WorldState::new(&ScenarioConfig::corridor(), 0).unwrap();
        let cfg = RasterConfig::default();
        let img = render(&w, VICTIM_1, &cfg).unwrap();
        assert_eq!(img.shape(), (84, 84, 3));
        assert_eq!(img.count_color(cfg.palette.other_vehicle), 0);
        assert_eq!(img.pixel(ANCHOR_ROW, ANCHOR_COL), cfg.palette.own_vehicle);
        assert!(img.to_full().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn vehicle_ahead_lands_on_expected_pixel() {
        let w = two_car_corridor();
        let cfg = RasterConfig::default();
        let img = render(&w, VICTIM_1, &cfg).unwrap();
        let color = cfg.palette.other_vehicle;
        let (mut rs, mut cs, mut k) = (0.0, 0.0, 0.0);
        for r in 0..IMAGE_SIZE {
            for c in 0..IMAGE_SIZE {
                if img.pixel(r, c) == color {
                    rs += r as f64;
                    cs += c as f64;
                    k += 1.0;
                }
            }
        }
        assert!(k > 0.0);
        // 10 m ahead at 40/70 m per row sits 17.5 rows above the anchor.
        let expected_row = ANCHOR_ROW as f64 - 10.0 / cfg.row_scale();
        assert!((cs / k - ANCHOR_COL as f64).abs() <= 2.0);
        assert!((rs / k - expected_row).abs() <= 2.0, "{} vs {expected_row}", rs / k);
    }

    #[test]
    fn lite_mode_replicates_blocks() {
        let w = two_car_corridor();
        let cfg = RasterConfig {
            resolution_mode: ObsMode::Lite21,
            ..RasterConfig::default()
        };
        let img = render(&w, VICTIM_1, &cfg).unwrap();
        assert_eq!(img.native().len(), 21 * 21 * 3);
        for r in 0..IMAGE_SIZE {
            for c in 0..IMAGE_SIZE {
                assert_eq!(img.pixel(r, c), img.pixel(r / 4 * 4, c / 4 * 4));
            }
        }
        let planar = img.planar(21).unwrap();
        assert_eq!(planar.len(), 3 * 21 * 21);
        assert_eq!(planar[5 * 21 + 7], img.native()[(5 * 21 + 7) * 3]);
        assert!(img.planar(25).is_err());
    }

    #[test]
    fn out_of_window_vehicle_is_invisible() {
        let mut w = two_car_corridor();
        let cfg = RasterConfig::default();
        let far = |x: f64| VehicleState {
            position: Vec2::new(x, 0.0),
            heading: 0.0,
            speed: 0.0,
            goal: Vec2::new(60.0, 0.0),
        };
        w.set_vehicle(VICTIM_2, far(70.0)).unwrap();
        let a = render(&w, VICTIM_1, &cfg).unwrap();
        w.set_vehicle(VICTIM_2, far(90.0)).unwrap();
        let b = render(&w, VICTIM_1, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ppm_header_and_size() {
        let w = WorldState::new(&ScenarioConfig::corridor(), 0).unwrap();
        let img = render(&w, VICTIM_1, &RasterConfig::default()).unwrap();
        let ppm = img.to_ppm();
        assert!(ppm.starts_with(b"P6\n84 84\n255\n"));
        assert_eq!(ppm.len(), 13 + 84 * 84 * 3);
    }

    #[test]
    fn palette_must_be_distinct() {
        let mut cfg = RasterConfig::default();
        cfg.palette.goal = cfg.palette.road;
        assert!(cfg.validate().is_err());
        assert!(RasterConfig::default().validate().is_ok());
    }
}
