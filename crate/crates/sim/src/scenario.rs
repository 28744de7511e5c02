//! Procedural scenario generators: one episode blueprint per supported
//! scenario name, materialized deterministically from a seed.

use serde::{Deserialize, Serialize};

use expertdrive_numerics::DetRng;

use crate::error::{Result, SimError};
use crate::route::{CommandSpan, RoutePlan};
use crate::types::{EgoRecord, EgoState, ManeuverCommand};
use crate::world::{
    Agent, AgentKind, BehaviorScript, JunctionBox, RoadSegment, StaticMap, StopSign,
    TrafficLight, WorldState,
};

/// Version stamp for serialized scenario specs.
pub const SCENARIO_SPEC_VERSION: u32 = 1;

/// Posted speed limit shared by all generated maps, m/s.
pub const SPEED_LIMIT: f64 = 8.0;

/// A fully materialized episode blueprint. Serializes to versioned JSON;
/// spawning it twice yields bit-identical worlds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub version: u32,
    pub scenario_id: String,
    pub variant: u32,
    pub seed: u64,
    /// Whether the episode legitimately requires driving against traffic
    /// (suppresses the wrong-lane infraction).
    pub allows_opposing_lane: bool,
    /// Episode time budget, seconds.
    pub time_budget_s: f64,
    pub route_points: Vec<[f64; 2]>,
    pub command_spans: Vec<CommandSpan>,
    pub map: StaticMap,
    pub ego: EgoRecord,
    pub actors: Vec<Agent>,
}

impl ScenarioSpec {
    pub fn route(&self) -> RoutePlan {
        RoutePlan::new(self.route_points.clone(), self.command_spans.clone())
    }
}

/// Materialize the world described by a spec.
pub fn spawn_scenario(spec: &ScenarioSpec) -> WorldState {
    WorldState::new(EgoState::initial(spec.ego), spec.actors.clone(), spec.map.clone(), spec.route())
}

/// Scenario names with generators, grouped for readability by skill family.
pub const GENERATED_SCENARIOS: &[&str] = &[
    // Merging family (+ parking exit)
    "HighwayCutIn",
    "MergeIntoSlowTraffic",
    "MergerIntoSlowTrafficV2",
    "LaneChange",
    "ParkingExit",
    // Overtaking family
    "Accident",
    "AccidentTwoWays",
    "ConstructionObstacle",
    "ConstructionObstacleTwoWays",
    // Emergency-brake family
    "DynamicObjectCrossing",
    "PedestrianCrossing",
    "HardBreakRoute",
    "StaticCutIn",
    // Give-way family
    "InvadingTurn",
    "YieldToEmergencyVehicle",
    // Traffic-sign family
    "VanillaSignalizedTurnEncounterRedLight",
    "VanillaSignalizedTurnEncounterGreenLight",
    "VanillaNonSignalizedTurnEncounterStopsign",
    "TJunction",
];

/// Number of layout variants each generator offers.
pub const VARIANTS_PER_SCENARIO: u32 = 2;

fn fold_name(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Straight east-bound map with the given lane counts.
fn straight_map(x0: f64, x1: f64, lanes_forward: u32, lanes_backward: u32) -> StaticMap {
    StaticMap {
        roads: vec![RoadSegment { start: [x0, 0.0], end: [x1, 0.0], lanes_forward, lanes_backward }],
        junctions: vec![],
        lights: vec![],
        stop_signs: vec![],
        speed_limit: SPEED_LIMIT,
    }
}

fn ego_east(x: f64, y: f64, speed: f64) -> EgoRecord {
    EgoRecord { x, y, heading: 0.0, speed, accel: 0.0 }
}

/// Mirror helper: variant 1 of two-forward-lane layouts swaps which lane
/// the ego occupies.
fn fwd_lane_pair(variant: u32) -> (f64, f64) {
    // (ego lane center, adjacent lane center); negative y is right of the
    // road centerline.
    if variant == 0 {
        (-5.25, -1.75)
    } else {
        (-1.75, -5.25)
    }
}

struct Blueprint {
    allows_opposing_lane: bool,
    time_budget_s: f64,
    route_points: Vec<[f64; 2]>,
    command_spans: Vec<CommandSpan>,
    map: StaticMap,
    ego: EgoRecord,
    actors: Vec<Agent>,
}

fn highway_cut_in(variant: u32, rng: &mut DetRng) -> Blueprint {
    let (ego_y, other_y) = fwd_lane_pair(variant);
    let cut_x = 28.0 + rng.uniform_in(-4.0, 4.0);
    let offset = ego_y - other_y; // shift from the adjacent lane into the ego lane
    let cutter = Agent::new(
        1,
        AgentKind::Vehicle,
        cut_x,
        other_y,
        0.0,
        BehaviorScript::TriggeredLaneShift {
            trigger_range: 22.0,
            pre_speed: 3.5,
            post_speed: 5.5 + rng.uniform_in(-0.3, 0.3),
            lateral_rate: 1.2,
            target_offset: offset,
        },
    );
    Blueprint {
        allows_opposing_lane: false,
        time_budget_s: 45.0,
        route_points: vec![[0.0, ego_y], [200.0, ego_y]],
        command_spans: vec![],
        map: straight_map(-50.0, 250.0, 2, 0),
        ego: ego_east(0.0, ego_y, 6.0),
        actors: vec![cutter],
    }
}

fn merge_into_slow_traffic(variant: u32, rng: &mut DetRng, dense: bool) -> Blueprint {
    let (ego_y, target_y) = fwd_lane_pair(variant);
    let command = if target_y > ego_y {
        ManeuverCommand::ChangeLeft
    } else {
        ManeuverCommand::ChangeRight
    };
    let (merge_start, merge_end) = if dense { (18.0, 38.0) } else { (25.0, 45.0) };
    let mut actors = Vec::new();
    // Slow traffic sits past the merge end so the diagonal never sweeps
    // through an occupied slot.
    let slots: &[f64] = if dense { &[42.0, 54.0, 66.0] } else { &[50.0, 64.0] };
    let slow = if dense { 1.5 } else { 1.8 };
    for (i, &x) in slots.iter().enumerate() {
        actors.push(
            Agent::new(
                1 + i as u32,
                AgentKind::Vehicle,
                x + rng.uniform_in(-2.0, 2.0),
                ego_y,
                0.0,
                BehaviorScript::Cruise { speed: slow },
            ),
        );
    }
    actors.push(Agent::new(
        9,
        AgentKind::Vehicle,
        -18.0 + rng.uniform_in(-3.0, 3.0),
        target_y,
        0.0,
        BehaviorScript::Cruise { speed: if dense { 3.5 } else { 4.0 } },
    ));
    Blueprint {
        allows_opposing_lane: false,
        time_budget_s: 50.0,
        route_points: vec![[0.0, ego_y], [merge_start, ego_y], [merge_end, target_y], [200.0, target_y]],
        command_spans: vec![CommandSpan { from_s: merge_start - 15.0, to_s: merge_end, command }],
        map: straight_map(-50.0, 250.0, 2, 0),
        ego: ego_east(0.0, ego_y, 5.0),
        actors,
    }
}

fn lane_change(variant: u32, rng: &mut DetRng) -> Blueprint {
    let (ego_y, target_y) = fwd_lane_pair(variant);
    let command = if target_y > ego_y {
        ManeuverCommand::ChangeLeft
    } else {
        ManeuverCommand::ChangeRight
    };
    let slow_x = 95.0 + rng.uniform_in(-5.0, 5.0);
    Blueprint {
        allows_opposing_lane: false,
        time_budget_s: 45.0,
        route_points: vec![[0.0, ego_y], [60.0, ego_y], [80.0, target_y], [200.0, target_y]],
        command_spans: vec![CommandSpan { from_s: 45.0, to_s: 80.0, command }],
        map: straight_map(-50.0, 250.0, 2, 0),
        ego: ego_east(0.0, ego_y, 6.0),
        actors: vec![Agent::new(
            1,
            AgentKind::Vehicle,
            slow_x,
            ego_y,
            0.0,
            BehaviorScript::Cruise { speed: 3.0 },
        )],
    }
}

fn parking_exit(variant: u32, rng: &mut DetRng) -> Blueprint {
    // Parking strip south of a two-way road; the ego pulls out between two
    // parked cars and merges into the east-bound lane.
    let bay_y = -7.0;
    let lane_y = -1.75;
    let front_gap = 18.0 + rng.uniform_in(-1.0, 1.0);
    let mut map = straight_map(-50.0, 200.0, 1, 1);
    map.roads.push(RoadSegment {
        start: [-20.0, -5.25],
        end: [50.0, -5.25],
        lanes_forward: 1,
        lanes_backward: 0,
    });
    let traffic_speed = if variant == 0 { 4.0 } else { 3.0 };
    Blueprint {
        allows_opposing_lane: false,
        time_budget_s: 40.0,
        route_points: vec![[0.0, bay_y], [3.0, bay_y], [11.0, -4.0], [19.0, lane_y], [200.0, lane_y]],
        command_spans: vec![CommandSpan {
            from_s: 0.0,
            to_s: 22.0,
            command: ManeuverCommand::ChangeLeft,
        }],
        map,
        ego: ego_east(0.0, bay_y, 0.0),
        actors: vec![
            Agent::new(1, AgentKind::Vehicle, -8.0, bay_y, 0.0, BehaviorScript::Static),
            Agent::new(2, AgentKind::Vehicle, front_gap, bay_y, 0.0, BehaviorScript::Static),
            Agent::new(
                3,
                AgentKind::Vehicle,
                -48.0,
                lane_y,
                0.0,
                BehaviorScript::Cruise { speed: traffic_speed },
            ),
        ],
    }
}

fn blockage_overtake(
    variant: u32,
    rng: &mut DetRng,
    two_ways: bool,
    cones: bool,
) -> Blueprint {
    let base_x = 60.0 + rng.uniform_in(-4.0, 4.0);
    let (ego_y, pass_y, map) = if two_ways {
        (-1.75, 1.75, straight_map(-50.0, 250.0, 1, 1))
    } else {
        let (ego_y, pass_y) = fwd_lane_pair(if cones { variant } else { 0 });
        (ego_y, pass_y, straight_map(-50.0, 250.0, 2, 0))
    };
    let mut actors = Vec::new();
    if cones {
        for (i, (dx, dy)) in [(-4.0, -0.6), (0.0, 0.0), (4.0, 0.6)].iter().enumerate() {
            actors.push(Agent::new(
                1 + i as u32,
                AgentKind::Obstacle,
                base_x + dx,
                ego_y + dy,
                0.0,
                BehaviorScript::Static,
            ));
        }
    } else {
        let skew = if variant == 0 { 0.3 } else { -0.3 };
        actors.push(Agent::new(1, AgentKind::Vehicle, base_x, ego_y, skew, BehaviorScript::Static));
        actors.push(Agent::new(
            2,
            AgentKind::Vehicle,
            base_x + 6.0,
            ego_y + 0.25 * skew.signum(),
            -skew,
            BehaviorScript::Static,
        ));
    }
    if two_ways {
        // Oncoming traffic with a gap the ego can use.
        actors.push(Agent::new(
            8,
            AgentKind::Vehicle,
            170.0 + rng.uniform_in(-10.0, 10.0),
            pass_y,
            std::f64::consts::PI,
            BehaviorScript::Cruise { speed: 4.0 },
        ));
    }
    let swerve_out = base_x - 18.0;
    let swerve_back = base_x + 16.0;
    Blueprint {
        allows_opposing_lane: two_ways,
        time_budget_s: if two_ways { 55.0 } else { 50.0 },
        route_points: vec![
            [0.0, ego_y],
            [swerve_out, ego_y],
            [swerve_out + 10.0, pass_y],
            [swerve_back, pass_y],
            [swerve_back + 10.0, ego_y],
            [250.0, ego_y],
        ],
        command_spans: vec![],
        map,
        ego: ego_east(0.0, ego_y, 6.0),
        actors,
    }
}

fn crossing(variant: u32, rng: &mut DetRng, walk_speed: f64, trigger: f64) -> Blueprint {
    let cross_x = 56.0 + rng.uniform_in(-4.0, 4.0);
    // Variant 0 enters from the right shoulder, variant 1 from the left
    // (closer in and triggered earlier so it still cuts across the ego's
    // path rather than crossing behind it).
    let (start_y, heading, trigger) = if variant == 0 {
        (-7.5, std::f64::consts::FRAC_PI_2, trigger)
    } else {
        (5.0, -std::f64::consts::FRAC_PI_2, trigger + 7.0)
    };
    Blueprint {
        allows_opposing_lane: false,
        time_budget_s: 45.0,
        route_points: vec![[0.0, -1.75], [200.0, -1.75]],
        command_spans: vec![],
        map: straight_map(-50.0, 250.0, 1, 1),
        ego: ego_east(0.0, -1.75, 6.0),
        actors: vec![Agent::new(
            1,
            AgentKind::Pedestrian,
            cross_x,
            start_y,
            heading,
            BehaviorScript::TriggeredCross { trigger_range: trigger, speed: walk_speed },
        )],
    }
}

fn hard_brake_route(variant: u32, rng: &mut DetRng) -> Blueprint {
    let lead_x = 25.0 + rng.uniform_in(-3.0, 3.0);
    let (trigger, decel) = if variant == 0 { (22.0, 5.5) } else { (18.0, 4.5) };
    Blueprint {
        allows_opposing_lane: false,
        time_budget_s: 60.0,
        route_points: vec![[0.0, -1.75], [200.0, -1.75]],
        command_spans: vec![],
        map: straight_map(-50.0, 250.0, 1, 1),
        ego: ego_east(0.0, -1.75, 6.0),
        actors: vec![Agent::new(
            1,
            AgentKind::Vehicle,
            lead_x,
            -1.75,
            0.0,
            BehaviorScript::TriggeredBrake {
                trigger_range: trigger,
                cruise_speed: 5.0,
                decel,
                hold_s: 4.0,
            },
        )],
    }
}

fn static_cut_in(variant: u32, rng: &mut DetRng) -> Blueprint {
    let park_x = 42.0 + rng.uniform_in(-4.0, 4.0);
    let post_speed = if variant == 0 { 4.5 } else { 4.0 };
    Blueprint {
        allows_opposing_lane: false,
        time_budget_s: 60.0,
        route_points: vec![[0.0, -1.75], [200.0, -1.75]],
        command_spans: vec![],
        map: straight_map(-50.0, 250.0, 1, 1),
        ego: ego_east(0.0, -1.75, 6.0),
        actors: vec![Agent::new(
            1,
            AgentKind::Vehicle,
            park_x,
            -5.25,
            0.0,
            BehaviorScript::TriggeredLaneShift {
                trigger_range: 18.0,
                pre_speed: 0.0,
                post_speed,
                lateral_rate: 1.4,
                target_offset: 3.5,
            },
        )],
    }
}

fn invading_turn(variant: u32, rng: &mut DetRng) -> Blueprint {
    let meet_x = 70.0 + rng.uniform_in(-5.0, 5.0);
    let (speed, invasion) = if variant == 0 { (5.2, 1.6) } else { (4.4, 1.8) };
    // The ego squeezes right within its own lane while the oncoming vehicle
    // straddles the centerline. The squeeze zone brackets where the two
    // actually meet (roughly meet_x scaled by the ego's share of the
    // closing speed), not the invader's spawn point.
    let squeeze = -2.8 - 0.2 * (variant as f64);
    Blueprint {
        allows_opposing_lane: false,
        time_budget_s: 45.0,
        route_points: vec![
            [0.0, -1.75],
            [18.0, -1.75],
            [26.0, squeeze],
            [60.0, squeeze],
            [68.0, -1.75],
            [200.0, -1.75],
        ],
        command_spans: vec![],
        map: straight_map(-50.0, 250.0, 1, 1),
        ego: ego_east(0.0, -1.75, 6.0),
        actors: vec![Agent::new(
            1,
            AgentKind::Vehicle,
            meet_x,
            1.75,
            std::f64::consts::PI,
            BehaviorScript::TriggeredLaneShift {
                trigger_range: 35.0,
                pre_speed: speed,
                post_speed: speed,
                lateral_rate: 1.6,
                target_offset: invasion,
            },
        )],
    }
}

fn yield_to_emergency_vehicle(variant: u32, rng: &mut DetRng) -> Blueprint {
    let start_x = -35.0 + rng.uniform_in(-5.0, 5.0);
    let speed = if variant == 0 { 9.5 } else { 8.5 };
    Blueprint {
        allows_opposing_lane: false,
        time_budget_s: 45.0,
        route_points: vec![[0.0, -1.75], [200.0, -1.75]],
        command_spans: vec![],
        map: straight_map(-80.0, 250.0, 1, 1),
        ego: ego_east(0.0, -1.75, 6.0),
        actors: vec![Agent::new(
            1,
            AgentKind::Vehicle,
            start_x,
            -1.75,
            0.0,
            BehaviorScript::TriggeredLaneShift {
                trigger_range: 22.0,
                pre_speed: speed,
                post_speed: speed,
                lateral_rate: 1.8,
                target_offset: 3.5,
            },
        )
        .emergency()],
    }
}

/// Shared junction geometry: an east-bound approach meeting a north-south
/// road at x = 80. Returns the map plus the route for a left or right turn.
fn junction_layout(
    right_turn: bool,
    through_road: bool,
) -> (StaticMap, Vec<[f64; 2]>, Vec<CommandSpan>) {
    let east_end = if through_road { 200.0 } else { 80.0 };
    let map = StaticMap {
        roads: vec![
            RoadSegment {
                start: [-50.0, 0.0],
                end: [east_end, 0.0],
                lanes_forward: 1,
                lanes_backward: 1,
            },
            RoadSegment {
                start: [80.0, -120.0],
                end: [80.0, 120.0],
                lanes_forward: 1,
                lanes_backward: 1,
            },
        ],
        junctions: vec![JunctionBox { min: [73.0, -7.0], max: [87.0, 7.0] }],
        lights: vec![],
        stop_signs: vec![],
        speed_limit: SPEED_LIMIT,
    };
    // Turns follow sampled circular arcs so the tracking controller never
    // has to negotiate a sharp polyline kink (which makes it swing wide
    // across the centerline).  Radii are generous and the left turn exits
    // half a metre wide of the lane centre: the steering integral wound up
    // through a sustained curve unwinds over the next few seconds and pulls
    // the vehicle back toward (and briefly past) the planned line, so the
    // exit line leaves room for that excursion inside the own lane.
    let (route, command) = if right_turn {
        // Arc of radius 6.5 m from east-bound at y = -1.75 into the
        // south-bound lane at x = 78.25; center (71.75, -8.25).
        let mut pts = vec![[0.0, -1.75]];
        let (cx, cy, r) = (71.75, -8.25, 6.5);
        for deg in [90.0f64, 75.0, 60.0, 45.0, 30.0, 15.0, 0.0] {
            let a = deg.to_radians();
            pts.push([cx + r * a.cos(), cy + r * a.sin()]);
        }
        pts.push([78.25, -110.0]);
        (pts, ManeuverCommand::TurnRight)
    } else {
        // Arc of radius 11.75 m from east-bound at y = -1.75 to a line
        // 0.5 m east of the north-bound lane centre; center (70.5, 10.0).
        let mut pts = vec![[0.0, -1.75]];
        let (cx, cy, r) = (70.5, 10.0, 11.75);
        for deg in [-90.0f64, -75.0, -60.0, -45.0, -30.0, -15.0, 0.0] {
            let a = deg.to_radians();
            pts.push([cx + r * a.cos(), cy + r * a.sin()]);
        }
        pts.push([82.0, 25.0]);
        pts.push([81.75, 40.0]);
        pts.push([81.75, 110.0]);
        (pts, ManeuverCommand::TurnLeft)
    };
    let spans = vec![CommandSpan { from_s: 60.0, to_s: 108.0, command }];
    (map, route, spans)
}

fn signalized_turn(variant: u32, rng: &mut DetRng, red_on_arrival: bool) -> Blueprint {
    let (mut map, route, spans) = junction_layout(variant == 1, true);
    let (green_s, yellow_s, red_s, offset_s) = if red_on_arrival {
        // Red from t = 0 until t = 22 s, then green.
        (6.0, 2.0, 22.0, 8.0)
    } else {
        (1e6, 2.0, 5.0, 0.0)
    };
    map.lights.push(TrafficLight {
        x: 76.0,
        y: -5.0,
        stop_line_s: 70.5,
        green_s,
        yellow_s,
        red_s,
        offset_s,
    });
    let speed = 5.5 + rng.uniform_in(-0.5, 0.5);
    Blueprint {
        allows_opposing_lane: false,
        time_budget_s: if red_on_arrival { 65.0 } else { 55.0 },
        route_points: route,
        command_spans: spans,
        map,
        ego: ego_east(0.0, -1.75, speed),
        actors: vec![],
    }
}

fn stop_sign_turn(variant: u32, rng: &mut DetRng) -> Blueprint {
    let (mut map, route, spans) = junction_layout(variant == 1, true);
    map.stop_signs.push(StopSign { x: 76.0, y: -5.0, stop_line_s: 70.5 });
    let speed = 5.5 + rng.uniform_in(-0.5, 0.5);
    Blueprint {
        allows_opposing_lane: false,
        time_budget_s: 60.0,
        route_points: route,
        command_spans: spans,
        map,
        ego: ego_east(0.0, -1.75, speed),
        actors: vec![],
    }
}

fn t_junction(variant: u32, rng: &mut DetRng) -> Blueprint {
    let (map, route, spans) = junction_layout(variant == 1, false);
    let crosser_y = -55.0 + rng.uniform_in(-8.0, 8.0);
    Blueprint {
        allows_opposing_lane: false,
        time_budget_s: 55.0,
        route_points: route,
        command_spans: spans,
        map,
        ego: ego_east(0.0, -1.75, 5.5),
        actors: vec![Agent::new(
            1,
            AgentKind::Vehicle,
            81.75,
            crosser_y,
            std::f64::consts::FRAC_PI_2,
            BehaviorScript::Cruise { speed: 4.0 },
        )],
    }
}

/// Build the blueprint for a scenario name, variant, and seed.
pub fn build_scenario(scenario_id: &str, variant: u32, seed: u64) -> Result<ScenarioSpec> {
    if variant >= VARIANTS_PER_SCENARIO {
        return Err(SimError::UnknownVariant { id: scenario_id.to_string(), variant });
    }
    let mut rng = DetRng::derive(seed, &[fold_name(scenario_id), variant as u64]);
    let bp = match scenario_id {
        "HighwayCutIn" => highway_cut_in(variant, &mut rng),
        "MergeIntoSlowTraffic" => merge_into_slow_traffic(variant, &mut rng, false),
        "MergerIntoSlowTrafficV2" => merge_into_slow_traffic(variant, &mut rng, true),
        "LaneChange" => lane_change(variant, &mut rng),
        "ParkingExit" => parking_exit(variant, &mut rng),
        "Accident" => blockage_overtake(variant, &mut rng, false, false),
        "AccidentTwoWays" => blockage_overtake(variant, &mut rng, true, false),
        "ConstructionObstacle" => blockage_overtake(variant, &mut rng, false, true),
        "ConstructionObstacleTwoWays" => blockage_overtake(variant, &mut rng, true, true),
        "DynamicObjectCrossing" => crossing(variant, &mut rng, 2.4, 20.0),
        "PedestrianCrossing" => crossing(variant, &mut rng, 1.1, 25.0),
        "HardBreakRoute" => hard_brake_route(variant, &mut rng),
        "StaticCutIn" => static_cut_in(variant, &mut rng),
        "InvadingTurn" => invading_turn(variant, &mut rng),
        "YieldToEmergencyVehicle" => yield_to_emergency_vehicle(variant, &mut rng),
        "VanillaSignalizedTurnEncounterRedLight" => signalized_turn(variant, &mut rng, true),
        "VanillaSignalizedTurnEncounterGreenLight" => signalized_turn(variant, &mut rng, false),
        "VanillaNonSignalizedTurnEncounterStopsign" => stop_sign_turn(variant, &mut rng),
        "TJunction" => t_junction(variant, &mut rng),
        other => return Err(SimError::UnknownScenario { id: other.to_string() }),
    };
    assert!(bp.route_points.len() >= 2, "generated route must be non-degenerate");
    Ok(ScenarioSpec {
        version: SCENARIO_SPEC_VERSION,
        scenario_id: scenario_id.to_string(),
        variant,
        seed,
        allows_opposing_lane: bp.allows_opposing_lane,
        time_budget_s: bp.time_budget_s,
        route_points: bp.route_points,
        command_spans: bp.command_spans,
        map: bp.map,
        ego: bp.ego,
        actors: bp.actors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::annotate_skill;
    use crate::types::VehicleControls;
    use crate::world::SIM_DT_S;

    #[test]
    fn same_spec_spawns_bit_identical_worlds() {
        for &id in GENERATED_SCENARIOS {
            let spec = build_scenario(id, 0, 42).unwrap();
            let mut a = spawn_scenario(&spec);
            let mut b = spawn_scenario(&spec);
            for _ in 0..20 {
                let c = VehicleControls { steer: 0.01, throttle: 0.3, brake: 0.0 };
                a.step(c, SIM_DT_S);
                b.step(c, SIM_DT_S);
            }
            assert_eq!(a.ego.current.x.to_bits(), b.ego.current.x.to_bits(), "{id}");
            for (x, y) in a.agents.iter().zip(&b.agents) {
                assert_eq!(x.x.to_bits(), y.x.to_bits(), "{id}");
                assert_eq!(x.y.to_bits(), y.y.to_bits(), "{id}");
            }
        }
    }

    #[test]
    fn different_seeds_vary_the_layout() {
        let a = build_scenario("HighwayCutIn", 0, 1).unwrap();
        let b = build_scenario("HighwayCutIn", 0, 2).unwrap();
        assert_ne!(a.actors[0].x, b.actors[0].x);
    }

    #[test]
    fn unknown_scenario_and_variant_are_errors() {
        assert!(matches!(
            build_scenario("HoverboardChase", 0, 1),
            Err(SimError::UnknownScenario { .. })
        ));
        assert!(matches!(
            build_scenario("HighwayCutIn", 99, 1),
            Err(SimError::UnknownVariant { .. })
        ));
    }

    #[test]
    fn every_generated_scenario_is_in_the_skill_catalogue() {
        for &id in GENERATED_SCENARIOS {
            annotate_skill(id, true).unwrap_or_else(|_| panic!("{id} missing from catalogue"));
        }
    }

    #[test]
    fn each_skill_family_has_at_least_two_generators() {
        let mut counts = [0usize; 5];
        for &id in GENERATED_SCENARIOS {
            let label = annotate_skill(id, false).unwrap();
            counts[label.index()] += 1;
        }
        for (i, &n) in counts.iter().enumerate() {
            assert!(n >= 2, "skill family {i} has only {n} generators");
        }
    }

    #[test]
    fn emergency_brake_generator_contains_a_crossing_trigger_agent() {
        let spec = build_scenario("DynamicObjectCrossing", 0, 7).unwrap();
        let crossers: Vec<&Agent> = spec
            .actors
            .iter()
            .filter(|a| matches!(a.behavior, BehaviorScript::TriggeredCross { .. }))
            .collect();
        assert_eq!(crossers.len(), 1);
        // Its heading is perpendicular to the east-bound route, so its path
        // crosses the route line y = -1.75.
        let c = crossers[0];
        assert!(c.heading.sin().abs() > 0.9, "crosser moves across the road");
        let crosses = (c.y < -1.75) == (c.heading.sin() > 0.0);
        assert!(crosses, "crosser starts on the far side and walks toward the route");
    }

    #[test]
    fn give_way_generator_has_a_fast_agent_approaching_from_behind() {
        let spec = build_scenario("YieldToEmergencyVehicle", 0, 7).unwrap();
        let chaser = &spec.actors[0];
        assert!(chaser.is_emergency);
        assert!(chaser.x < spec.ego.x, "starts behind the ego");
        assert!(chaser.speed > spec.ego.speed, "closes in from behind");
    }

    #[test]
    fn two_way_overtakes_allow_the_opposing_lane_and_one_way_ones_do_not() {
        assert!(build_scenario("AccidentTwoWays", 0, 1).unwrap().allows_opposing_lane);
        assert!(build_scenario("ConstructionObstacleTwoWays", 0, 1).unwrap().allows_opposing_lane);
        assert!(!build_scenario("Accident", 0, 1).unwrap().allows_opposing_lane);
        assert!(!build_scenario("HighwayCutIn", 0, 1).unwrap().allows_opposing_lane);
    }

    #[test]
    fn specs_round_trip_through_json() {
        let spec = build_scenario("VanillaSignalizedTurnEncounterRedLight", 1, 5).unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        let back: ScenarioSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back.version, SCENARIO_SPEC_VERSION);
        assert_eq!(back.scenario_id, spec.scenario_id);
        assert_eq!(back.route_points, spec.route_points);
        let a = spawn_scenario(&spec);
        let b = spawn_scenario(&back);
        assert_eq!(a.ego.current.x.to_bits(), b.ego.current.x.to_bits());
    }

    #[test]
    fn red_light_scenario_is_red_on_arrival_green_variant_is_not() {
        let red = build_scenario("VanillaSignalizedTurnEncounterRedLight", 0, 3).unwrap();
        let light = red.map.lights[0];
        // Red throughout a plausible approach window.
        assert_eq!(light.phase_at(10.0), crate::world::LightPhase::Red);
        assert_eq!(light.phase_at(14.0), crate::world::LightPhase::Red);
        // Eventually turns green so the episode can finish.
        assert_eq!(light.phase_at(23.0), crate::world::LightPhase::Green);

        let green = build_scenario("VanillaSignalizedTurnEncounterGreenLight", 0, 3).unwrap();
        assert_eq!(green.map.lights[0].phase_at(12.0), crate::world::LightPhase::Green);
    }
}
