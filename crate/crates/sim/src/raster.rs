//! Virtual surround-view sensor: renders the world into six egocentric
//! occupancy rasters, one per camera sector.
//!
//! Each raster is a `C×S×S` grid over the view frame (x forward along the
//! sector axis in `[0, R]`, y left in `[−R/2, R/2]`). A cell is painted only
//! when its center's ego-frame bearing belongs to this view's sector, so
//! across all six rasters every point within sensing range contributes to
//! exactly one view.

use serde::{Deserialize, Serialize};

use crate::route::RoutePlan;
use crate::types::{CameraViewId, EgoState, NUM_VIEWS};
use crate::world::{AgentKind, AgentSnapshot, LightPhase, StaticMap, LANE_WIDTH_M};

/// Raster side length in cells.
pub const RASTER_SIZE: usize = 32;
/// Number of channels per raster.
pub const RASTER_CHANNELS: usize = 5;
/// Sensing range, meters.
pub const RASTER_RANGE_M: f64 = 40.0;

/// Channel indices.
pub const CH_DRIVABLE: usize = 0;
pub const CH_MARKING: usize = 1;
pub const CH_AGENTS: usize = 2;
pub const CH_ROUTE: usize = 3;
pub const CH_SIGNAL: usize = 4;

/// Intensity codes for the agent channel.
const AGENT_INTENSITY_VEHICLE: f64 = 1.0;
const AGENT_INTENSITY_PEDESTRIAN: f64 = 0.9;
const AGENT_INTENSITY_OBSTACLE: f64 = 0.7;

/// Intensity codes for the signal channel.
const SIGNAL_RED: f64 = 1.0;
const SIGNAL_YELLOW: f64 = 0.6;
const SIGNAL_GREEN: f64 = 0.3;
const SIGNAL_STOP_SIGN: f64 = 0.8;
const SIGNAL_EMERGENCY_BEACON: f64 = 0.9;

/// One camera view's egocentric observation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRaster {
    pub view: CameraViewId,
    /// Channel-major grid, length `RASTER_CHANNELS * RASTER_SIZE^2`.
    pub grid: Vec<f64>,
}

impl ViewRaster {
    fn zeros(view: CameraViewId) -> Self {
        Self { view, grid: vec![0.0; RASTER_CHANNELS * RASTER_SIZE * RASTER_SIZE] }
    }

    #[inline]
    fn idx(channel: usize, row: usize, col: usize) -> usize {
        (channel * RASTER_SIZE + row) * RASTER_SIZE + col
    }

    pub fn at(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.grid[Self::idx(channel, row, col)]
    }

    fn paint_max(&mut self, channel: usize, row: usize, col: usize, value: f64) {
        let i = Self::idx(channel, row, col);
        if value > self.grid[i] {
            self.grid[i] = value;
        }
    }

    /// Sum of a channel's cells; handy in tests.
    pub fn channel_sum(&self, channel: usize) -> f64 {
        let s2 = RASTER_SIZE * RASTER_SIZE;
        self.grid[channel * s2..(channel + 1) * s2].iter().sum()
    }

    /// View-frame center of a cell: x forward along the sector axis, y left.
    pub fn cell_center(row: usize, col: usize) -> (f64, f64) {
        let cell = RASTER_RANGE_M / RASTER_SIZE as f64;
        let x = (row as f64 + 0.5) * cell;
        let y = RASTER_RANGE_M / 2.0 - (col as f64 + 0.5) * cell;
        (x, y)
    }
}

fn agent_intensity(kind: AgentKind) -> f64 {
    match kind {
        AgentKind::Vehicle => AGENT_INTENSITY_VEHICLE,
        AgentKind::Pedestrian => AGENT_INTENSITY_PEDESTRIAN,
        AgentKind::Obstacle => AGENT_INTENSITY_OBSTACLE,
    }
}

fn phase_intensity(phase: LightPhase) -> f64 {
    match phase {
        LightPhase::Red => SIGNAL_RED,
        LightPhase::Yellow => SIGNAL_YELLOW,
        LightPhase::Green => SIGNAL_GREEN,
    }
}

/// Whether a world point lies inside an agent's oriented footprint.
fn inside_footprint(agent: &AgentSnapshot, wx: f64, wy: f64) -> bool {
    let dx = wx - agent.x;
    let dy = wy - agent.y;
    let (c, s) = (agent.heading.cos(), agent.heading.sin());
    let local_x = c * dx + s * dy;
    let local_y = -s * dx + c * dy;
    local_x.abs() <= agent.length / 2.0 && local_y.abs() <= agent.width / 2.0
}

/// Distance from a point to a road's nearest lane-boundary line, if the
/// point projects onto the segment at all.
fn marking_distance(map: &StaticMap, wx: f64, wy: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for road in &map.roads {
        let len = road.length();
        let (s, lateral) = road.project(wx, wy);
        if s <= 0.0 || s >= len {
            continue;
        }
        let left = road.lanes_backward as f64 * LANE_WIDTH_M;
        let right = road.lanes_forward as f64 * LANE_WIDTH_M;
        if lateral > left + 1.0 || lateral < -(right + 1.0) {
            continue;
        }
        let mut k = -(road.lanes_forward as i64);
        while k <= road.lanes_backward as i64 {
            let d = (lateral - k as f64 * LANE_WIDTH_M).abs();
            if best.map_or(true, |b| d < b) {
                best = Some(d);
            }
            k += 1;
        }
    }
    best
}

/// Render all six camera views.
///
/// `time` selects traffic-light phases. Static channels are pure functions
/// of cell-center position; the agent channel paints each footprint only in
/// the view owning the agent's center bearing, so a boundary agent appears
/// in exactly one raster.
pub fn render_views(
    map: &StaticMap,
    route: &RoutePlan,
    agents: &[AgentSnapshot],
    time: f64,
    ego: &EgoState,
) -> Vec<ViewRaster> {
    let mut rasters: Vec<ViewRaster> =
        CameraViewId::ALL.iter().map(|&v| ViewRaster::zeros(v)).collect();

    // Precompute which view owns each agent (by center bearing) and each
    // signal blob, so boundary content lands in exactly one raster.
    let agent_owner: Vec<Option<CameraViewId>> = agents
        .iter()
        .map(|a| {
            let (ex, ey) = ego.world_to_ego(a.x, a.y);
            let r = (ex * ex + ey * ey).sqrt();
            if r <= RASTER_RANGE_M {
                Some(CameraViewId::containing(ey.atan2(ex)))
            } else {
                None
            }
        })
        .collect();

    for (vi, raster) in rasters.iter_mut().enumerate() {
        let view = CameraViewId::ALL[vi];
        let yaw = view.sector_yaw();
        let (cy, sy) = (yaw.cos(), yaw.sin());
        for row in 0..RASTER_SIZE {
            for col in 0..RASTER_SIZE {
                let (xv, yv) = ViewRaster::cell_center(row, col);
                // View frame -> ego frame.
                let xe = xv * cy - yv * sy;
                let ye = xv * sy + yv * cy;
                let radius = (xe * xe + ye * ye).sqrt();
                if radius > RASTER_RANGE_M || radius < 1e-9 {
                    continue;
                }
                if CameraViewId::containing(ye.atan2(xe)) != view {
                    continue; // outside this view's sector
                }
                let (wx, wy) = ego.ego_to_world(xe, ye);

                if map.is_drivable(wx, wy) {
                    raster.paint_max(CH_DRIVABLE, row, col, 1.0);
                }
                let in_junction = map.junctions.iter().any(|j| j.contains(wx, wy));
                if !in_junction {
                    if let Some(d) = marking_distance(map, wx, wy) {
                        if d <= 0.25 {
                            raster.paint_max(CH_MARKING, row, col, 1.0);
                        }
                    }
                }
                {
                    let (_, lateral) = route.project(wx, wy);
                    if lateral.abs() <= LANE_WIDTH_M / 2.0 {
                        raster.paint_max(CH_ROUTE, row, col, 1.0);
                    }
                }
                for (ai, agent) in agents.iter().enumerate() {
                    if agent_owner[ai] != Some(view) {
                        continue;
                    }
                    if inside_footprint(agent, wx, wy) {
                        raster.paint_max(CH_AGENTS, row, col, agent_intensity(agent.kind));
                        if agent.is_emergency {
                            raster.paint_max(CH_SIGNAL, row, col, SIGNAL_EMERGENCY_BEACON);
                        }
                    }
                }
                for light in &map.lights {
                    let d = ((wx - light.x).powi(2) + (wy - light.y).powi(2)).sqrt();
                    if d <= 1.5 {
                        raster.paint_max(
                            CH_SIGNAL,
                            row,
                            col,
                            phase_intensity(light.phase_at(time)),
                        );
                    }
                }
                for sign in &map.stop_signs {
                    let d = ((wx - sign.x).powi(2) + (wy - sign.y).powi(2)).sqrt();
                    if d <= 1.5 {
                        raster.paint_max(CH_SIGNAL, row, col, SIGNAL_STOP_SIGN);
                    }
                }
            }
        }
    }
    debug_assert_eq!(rasters.len(), NUM_VIEWS);
    rasters
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::EgoRecord;
    use crate::world::{JunctionBox, RoadSegment, StopSign, TrafficLight};

    fn ego_at_origin() -> EgoState {
        EgoState::initial(EgoRecord { x: 0.0, y: 0.0, heading: 0.0, speed: 5.0, accel: 0.0 })
    }

    fn east_map() -> StaticMap {
        StaticMap {
            roads: vec![RoadSegment {
                start: [-100.0, 1.75],
                end: [200.0, 1.75],
                lanes_forward: 1,
                lanes_backward: 1,
            }],
            junctions: vec![],
            lights: vec![],
            stop_signs: vec![],
            speed_limit: 8.0,
        }
    }

    fn east_route() -> RoutePlan {
        RoutePlan::new(vec![[-100.0, 0.0], [200.0, 0.0]], vec![])
    }

    fn vehicle_at(x: f64, y: f64) -> AgentSnapshot {
        AgentSnapshot {
            kind: AgentKind::Vehicle,
            x,
            y,
            heading: 0.0,
            speed: 0.0,
            length: 4.5,
            width: 2.0,
            is_emergency: false,
        }
    }

    #[test]
    fn empty_world_has_zero_agent_channel_everywhere() {
        let rasters = render_views(&east_map(), &east_route(), &[], 0.0, &ego_at_origin());
        for r in &rasters {
            assert_eq!(r.channel_sum(CH_AGENTS), 0.0);
        }
    }

    #[test]
    fn agent_directly_ahead_lands_only_in_the_front_view() {
        let agents = [vehicle_at(10.0, 0.0)];
        let rasters = render_views(&east_map(), &east_route(), &agents, 0.0, &ego_at_origin());
        for r in &rasters {
            let sum = r.channel_sum(CH_AGENTS);
            if r.view == CameraViewId::Front {
                assert!(sum > 0.0, "front view should see the agent");
                // Vehicle intensity code.
                assert!(r.grid.iter().any(|&v| v == 1.0));
            } else {
                assert_eq!(sum, 0.0, "view {:?} should not see the agent", r.view);
            }
        }
    }

    #[test]
    fn boundary_agent_appears_in_exactly_one_view() {
        // Center bearing exactly +30 deg: the front/front-left boundary.
        let b = 30.0_f64.to_radians();
        let d = 12.0;
        let agents = [vehicle_at(d * b.cos(), d * b.sin())];
        let rasters = render_views(&east_map(), &east_route(), &agents, 0.0, &ego_at_origin());
        let occupied: Vec<CameraViewId> = rasters
            .iter()
            .filter(|r| r.channel_sum(CH_AGENTS) > 0.0)
            .map(|r| r.view)
            .collect();
        assert_eq!(occupied, vec![CameraViewId::Front], "tie must break to the lower view index");
    }

    #[test]
    fn cells_outside_the_sector_stay_zero() {
        // A cell in the front raster's far corner has bearing > 30 deg and
        // must stay zero in every channel even over drivable ground.
        let map = StaticMap {
            roads: vec![RoadSegment {
                start: [-100.0, -100.0],
                end: [-100.0, 100.0],
                lanes_forward: 30,
                lanes_backward: 30,
            }],
            junctions: vec![JunctionBox { min: [-60.0, -60.0], max: [60.0, 60.0] }],
            lights: vec![],
            stop_signs: vec![],
            speed_limit: 8.0,
        };
        let rasters = render_views(&map, &east_route(), &[], 0.0, &ego_at_origin());
        let front = &rasters[0];
        // Row 0 (x_v ~ 0.6 m), col 0 (y_v ~ +19.4 m): bearing ~ 88 deg.
        for ch in 0..RASTER_CHANNELS {
            assert_eq!(front.at(ch, 0, 0), 0.0);
        }
        // Straight ahead over the junction box the drivable channel paints.
        assert!(front.channel_sum(CH_DRIVABLE) > 0.0);
    }

    #[test]
    fn light_phase_drives_signal_intensity() {
        let mut map = east_map();
        map.lights.push(TrafficLight {
            x: 15.0,
            y: 0.0,
            stop_line_s: 115.0,
            green_s: 5.0,
            yellow_s: 2.0,
            red_s: 5.0,
            offset_s: 0.0,
        });
        let ego = ego_at_origin();
        let green = render_views(&map, &east_route(), &[], 0.0, &ego);
        let red = render_views(&map, &east_route(), &[], 8.0, &ego);
        let g = green[0].channel_sum(CH_SIGNAL);
        let r = red[0].channel_sum(CH_SIGNAL);
        assert!(g > 0.0 && r > 0.0);
        // Same painted cells, different intensity code: red cells are 1.0,
        // green cells 0.3.
        assert!(red[0].grid.iter().any(|&v| v == 1.0));
        assert!(green[0].grid.iter().any(|&v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn stop_sign_paints_its_code() {
        let mut map = east_map();
        map.stop_signs.push(StopSign { x: 12.0, y: 0.0, stop_line_s: 112.0 });
        let rasters = render_views(&map, &east_route(), &[], 0.0, &ego_at_origin());
        assert!(rasters[0].grid.iter().any(|&v| (v - 0.8).abs() < 1e-12));
    }

    #[test]
    fn route_channel_traces_the_route_ahead() {
        let rasters = render_views(&east_map(), &east_route(), &[], 0.0, &ego_at_origin());
        assert!(rasters[0].channel_sum(CH_ROUTE) > 0.0);
        // All values stay within [0, 1].
        for r in &rasters {
            assert!(r.grid.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let agents = [vehicle_at(10.0, 2.0), vehicle_at(-8.0, -2.0)];
        let a = render_views(&east_map(), &east_route(), &agents, 3.0, &ego_at_origin());
        let b = render_views(&east_map(), &east_route(), &agents, 3.0, &ego_at_origin());
        assert_eq!(a, b);
    }

    #[test]
    fn emergency_vehicle_paints_a_beacon_in_the_signal_channel() {
        let mut agent = vehicle_at(-10.0, 0.0);
        agent.is_emergency = true;
        let rasters = render_views(&east_map(), &east_route(), &[agent], 0.0, &ego_at_origin());
        let back = rasters.iter().find(|r| r.view == CameraViewId::Back).unwrap();
        assert!(back.grid.iter().any(|&v| (v - 0.9).abs() < 1e-12));
    }
}
