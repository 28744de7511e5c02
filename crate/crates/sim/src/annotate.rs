//! Label generators for the two routers: a rule-based camera-view
//! annotator over per-frame context, and a catalogue lookup mapping
//! scenario names to driving-skill labels.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::types::{CameraViewId, ManeuverCommand};

/// Distance ahead within which an obstacle justifies an evasive lane
/// change, meters.
pub const OBSTACLE_AHEAD_THRESHOLD_M: f64 = 25.0;

/// Which side an adjacent-lane maneuver targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneSide {
    Left,
    Right,
}

/// Per-frame situation summary consumed by the camera annotator. Built by
/// the privileged driver from ground-truth world state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameContext {
    pub is_in_junction: bool,
    pub command: ManeuverCommand,
    /// Distance to the nearest blocking agent ahead in the ego lane, if any.
    pub obstacle_ahead_m: Option<f64>,
    /// Side of an intended lane change, when one is intended.
    pub target_lane_side: Option<LaneSide>,
    /// Whether the target lane carries opposing traffic.
    pub target_lane_opposing: bool,
    /// Side from which another vehicle is merging toward the ego lane.
    pub merging_side: Option<LaneSide>,
    /// View containing an active emergency vehicle, if one is approaching.
    pub emergency_vehicle_bearing: Option<CameraViewId>,
}

impl FrameContext {
    /// A quiet frame: following the route with nothing special happening.
    pub fn nominal(command: ManeuverCommand) -> Self {
        Self {
            is_in_junction: false,
            command,
            obstacle_ahead_m: None,
            target_lane_side: None,
            target_lane_opposing: false,
            merging_side: None,
            emergency_vehicle_bearing: None,
        }
    }
}

/// Select the camera view a frame's attention label should point at.
///
/// Rules apply in fixed priority order; the first match wins:
/// 1. an approaching emergency vehicle labels the view at its bearing;
/// 2. turning inside a junction labels the front-side view of the turn;
/// 3. a same-direction lane change labels the rear-side view of its side;
/// 4. a lane change into opposing traffic labels the front-side view;
/// 5. a vehicle merging toward the ego labels the front-side view facing
///    the merge;
/// 6. otherwise the rear view.
pub fn annotate_camera(ctx: &FrameContext) -> CameraViewId {
    if let Some(view) = ctx.emergency_vehicle_bearing {
        return view;
    }
    if ctx.is_in_junction {
        match ctx.command {
            ManeuverCommand::TurnLeft => return CameraViewId::FrontLeft,
            ManeuverCommand::TurnRight => return CameraViewId::FrontRight,
            _ => {}
        }
    }
    let change_side = match ctx.command {
        ManeuverCommand::ChangeLeft => Some(LaneSide::Left),
        ManeuverCommand::ChangeRight => Some(LaneSide::Right),
        _ => ctx
            .target_lane_side
            .filter(|_| ctx.obstacle_ahead_m.is_some_and(|d| d <= OBSTACLE_AHEAD_THRESHOLD_M)),
    };
    if let Some(side) = change_side {
        return match (ctx.target_lane_opposing, side) {
            (false, LaneSide::Left) => CameraViewId::BackLeft,
            (false, LaneSide::Right) => CameraViewId::BackRight,
            (true, LaneSide::Left) => CameraViewId::FrontLeft,
            (true, LaneSide::Right) => CameraViewId::FrontRight,
        };
    }
    if let Some(side) = ctx.merging_side {
        return match side {
            LaneSide::Left => CameraViewId::FrontLeft,
            LaneSide::Right => CameraViewId::FrontRight,
        };
    }
    CameraViewId::Back
}

/// Driving-skill label attached to every frame of a scenario. The optional
/// sixth label exists only when the expert bank dedicates an expert to
/// parking exits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillLabel {
    Merging = 0,
    Overtaking = 1,
    EmergencyBrake = 2,
    GiveWay = 3,
    TrafficSign = 4,
    ParkingExit = 5,
}

impl SkillLabel {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        use SkillLabel::*;
        [Merging, Overtaking, EmergencyBrake, GiveWay, TrafficSign, ParkingExit]
            .get(i)
            .copied()
    }
}

/// Skill rows of the scenario catalogue, in resolution order: a scenario
/// listed under several skills takes the first row that contains it.
const SKILL_ROWS: [(SkillLabel, &[&str]); 5] = [
    (
        SkillLabel::Merging,
        &[
            "CrossingBicycleFlow",
            "EnterActorFlow",
            "HighwayExit",
            "InterurbanActorFlow",
            "HighwayCutIn",
            "InterurbanAdvancedActorFlow",
            "MergerIntoSlowTrafficV2",
            "MergeIntoSlowTraffic",
            "NonSignalizedJunctionLeftTurn",
            "NonSignalizedJunctionRightTurn",
            "NonSignalizedJunctionLeftTurnEnterFlow",
            "ParkingExit",
            "LaneChange",
            "SignalizedJunctionLeftTurn",
            "SignalizedJunctionRightTurn",
            "SignalizedJunctionLeftTurnEnterFlow",
        ],
    ),
    (
        SkillLabel::Overtaking,
        &[
            "Accident",
            "AccidentTwoWays",
            "ConstructionObstacle",
            "ConstructionObstacleTwoWays",
            "HazardAtSideLaneTwoWays",
            "HazardAtSideLane",
            "ParkedObstacleTwoWays",
            "ParkedObstacle",
            "VehicleOpenDoorTwoWays",
        ],
    ),
    (
        SkillLabel::EmergencyBrake,
        &[
            "BlockedIntersection",
            "DynamicObjectCrossing",
            "HardBreakRoute",
            "OppositeVehicleTakingPriority",
            "OppositeVehicleRunningRedLight",
            "ParkingCutIn",
            "PedestrianCrossing",
            "ParkingCrossingPedestrian",
            "StaticCutIn",
            "VehicleTurningRoute",
            "VehicleTurningRoutePedestrian",
            "ControlLoss",
        ],
    ),
    (SkillLabel::GiveWay, &["InvadingTurn", "YieldToEmergencyVehicle"]),
    (
        SkillLabel::TrafficSign,
        &[
            "EnterActorFlow",
            "CrossingBicycleFlow",
            "NonSignalizedJunctionLeftTurn",
            "NonSignalizedJunctionRightTurn",
            "NonSignalizedJunctionLeftTurnEnterFlow",
            "OppositeVehicleTakingPriority",
            "OppositeVehicleRunningRedLight",
            "PedestrianCrossing",
            "SignalizedJunctionLeftTurn",
            "SignalizedJunctionRightTurn",
            "SignalizedJunctionLeftTurnEnterFlow",
            "TJunction",
            "VanillaNonSignalizedTurn",
            "VanillaSignalizedTurnEncounterGreenLight",
            "VanillaSignalizedTurnEncounterRedLight",
            "VanillaNonSignalizedTurnEncounterStopsign",
            "VehicleTurningRoute",
            "VehicleTurningRoutePedestrian",
        ],
    ),
];

/// All distinct scenario names across the catalogue.
pub fn scenario_catalogue() -> Vec<&'static str> {
    let mut seen = Vec::new();
    for (_, row) in SKILL_ROWS.iter() {
        for &name in *row {
            if !seen.contains(&name) {
                seen.push(name);
            }
        }
    }
    seen
}

/// Map a scenario name to its skill label.
///
/// With `parking_exit_expert` set, the parking-exit scenario takes the
/// dedicated sixth label instead of its merging-row membership.
pub fn annotate_skill(scenario_id: &str, parking_exit_expert: bool) -> Result<SkillLabel> {
    if parking_exit_expert && scenario_id == "ParkingExit" {
        return Ok(SkillLabel::ParkingExit);
    }
    for (label, row) in SKILL_ROWS.iter() {
        if row.contains(&scenario_id) {
            return Ok(*label);
        }
    }
    Err(SimError::UnknownScenario { id: scenario_id.to_string() })
}
