//! Maneuver selection from road context, traffic signals and the lead agent.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::geom::VehicleState;
use crate::routenet::{ReferencePath, RoadClass};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Maneuver {
    LaneKeep,
    FollowLead,
    /// Pass on the side given by the sign of `offset` (left positive).
    Overtake { offset: f64 },
    /// Controlled stop; also used to hold at a red signal's stop line.
    PullOver { offset: f64 },
    EmergencyStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ManeuverKind {
    LaneKeep,
    FollowLead,
    Overtake,
    PullOver,
    EmergencyStop,
}

impl Maneuver {
    pub fn kind(&self) -> ManeuverKind {
        match self {
            Maneuver::LaneKeep => ManeuverKind::LaneKeep,
            Maneuver::FollowLead => ManeuverKind::FollowLead,
            Maneuver::Overtake { .. } => ManeuverKind::Overtake,
            Maneuver::PullOver { .. } => ManeuverKind::PullOver,
            Maneuver::EmergencyStop => ManeuverKind::EmergencyStop,
        }
    }

    /// Lateral target carried by the maneuver, zero when it has none.
    pub fn offset(&self) -> f64 {
        match self {
            Maneuver::Overtake { offset } | Maneuver::PullOver { offset } => *offset,
            _ => 0.0,
        }
    }
}

impl ManeuverKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ManeuverKind::LaneKeep => "LaneKeep",
            ManeuverKind::FollowLead => "FollowLead",
            ManeuverKind::Overtake => "Overtake",
            ManeuverKind::PullOver => "PullOver",
            ManeuverKind::EmergencyStop => "EmergencyStop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalState {
    None,
    Red,
    Green,
}

/// Scripted signal: red during any of `red_windows` (simulated seconds),
/// green otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSignal {
    /// Stop-line station on the reference path.
    pub s: f64,
    pub red_windows: Vec<(f64, f64)>,
}

impl TrafficSignal {
    pub fn state_at(&self, t: f64) -> SignalState {
        if self.red_windows.iter().any(|&(a, b)| t >= a && t < b) {
            SignalState::Red
        } else {
            SignalState::Green
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadContext {
    pub road_class: RoadClass,
    pub traffic_signal: SignalState,
    pub lane_change_allowed: bool,
    pub speed_limit: f64,
    pub lane_width: f64,
    /// Stop line of the governing signal, if one is ahead within range.
    pub stop_line_s: Option<f64>,
    pub distance_to_goal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LeadInfo {
    pub present: bool,
    pub gap: f64,
    pub speed: f64,
}

impl LeadInfo {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn at(gap: f64, speed: f64) -> Self {
        Self {
            present: true,
            gap: gap.max(0.0),
            speed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorConfig {
    /// Time headway under which a lead vehicle is followed.
    pub t_follow: f64,
    /// A lead slower than `v_ref - speed_margin` is a candidate for overtaking.
    pub speed_margin: f64,
    pub hold_time: f64,
    pub signal_lookahead: f64,
    pub pull_over_distance: f64,
    pub overtake_offset: f64,
    pub standstill_gap: f64,
    /// Braking capability used for stopping distances, positive.
    pub decel: f64,
    /// Floor on ego speed when computing the time headway.
    pub headway_speed_floor: f64,
    /// Allow overtaking a stopped obstacle where lane changes are forbidden.
    pub allow_rule_relaxation: bool,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        Self {
            t_follow: 3.0,
            speed_margin: 1.0,
            hold_time: 2.0,
            signal_lookahead: 50.0,
            pull_over_distance: 8.0,
            overtake_offset: 2.0,
            standstill_gap: 2.0,
            decel: 2.0,
            headway_speed_floor: 0.5,
            allow_rule_relaxation: false,
        }
    }
}

/// Road attributes and signal state at station `s`.
pub fn classify_context(
    path: &ReferencePath,
    s: f64,
    signals: &[TrafficSignal],
    clock: f64,
    cfg: &BehaviorConfig,
) -> Result<RoadContext, CoreError> {
    let seg = path.segment_at(s)?;
    let ahead = signals
        .iter()
        .filter(|sig| sig.s >= s && sig.s - s <= cfg.signal_lookahead)
        .min_by(|a, b| a.s.total_cmp(&b.s));
    let (traffic_signal, stop_line_s) = match ahead {
        None => (SignalState::None, None),
        Some(sig) => match sig.state_at(clock) {
            SignalState::Red => (SignalState::Red, Some(sig.s)),
            state => (state, None),
        },
    };
    Ok(RoadContext {
        road_class: seg.road_class,
        traffic_signal,
        lane_change_allowed: seg.overtaking_allowed,
        speed_limit: seg.speed_limit,
        lane_width: seg.lane_width,
        stop_line_s,
        distance_to_goal: path.length() - s,
    })
}

/// Active maneuver with the time it was entered and what preceded it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManeuverState {
    pub maneuver: Maneuver,
    pub since: f64,
    pub came_from: Option<ManeuverKind>,
}

impl ManeuverState {
    pub fn initial(clock: f64) -> Self {
        Self {
            maneuver: Maneuver::LaneKeep,
            since: clock,
            came_from: None,
        }
    }
}

/// Rule table plus hysteresis; a pure function of its inputs.
pub fn decide_maneuver(
    ego: &VehicleState,
    ctx: &RoadContext,
    lead: &LeadInfo,
    adjacent_corridor_free: bool,
    prev: &ManeuverState,
    clock: f64,
    cfg: &BehaviorConfig,
) -> ManeuverState {
    let prev_kind = prev.maneuver.kind();
    let overtaking = prev_kind == ManeuverKind::Overtake;
    let (candidate, urgent) = rule_table(ego, ctx, lead, adjacent_corridor_free, overtaking, cfg);
    if candidate.kind() == prev_kind {
        return ManeuverState {
            maneuver: candidate,
            ..*prev
        };
    }
    let holding = clock - prev.since < cfg.hold_time
        && (matches!(prev_kind, ManeuverKind::Overtake | ManeuverKind::FollowLead)
            || prev.came_from == Some(candidate.kind()));
    if holding && !urgent {
        return *prev;
    }
    ManeuverState {
        maneuver: candidate,
        since: clock,
        came_from: Some(prev_kind),
    }
}

/// Returns the raw maneuver and whether it must bypass the hysteresis hold.
fn rule_table(
    ego: &VehicleState,
    ctx: &RoadContext,
    lead: &LeadInfo,
    adjacent_corridor_free: bool,
    overtaking: bool,
    cfg: &BehaviorConfig,
) -> (Maneuver, bool) {
    let v = ego.speed.max(0.0);
    let v_ref = ctx.speed_limit;
    let lead_stopped = lead.present && lead.speed < 0.1;
    let overtake_permitted =
        adjacent_corridor_free && (ctx.lane_change_allowed || (cfg.allow_rule_relaxation && lead_stopped));

    if lead.present {
        let ego_stop = v * v / (2.0 * cfg.decel);
        let lead_stop = lead.speed.max(0.0).powi(2) / (2.0 * cfg.decel);
        let own_blocked = lead.gap + lead_stop <= ego_stop + cfg.standstill_gap;
        if own_blocked && !overtake_permitted {
            return (Maneuver::EmergencyStop, true);
        }
    }
    if ctx.traffic_signal == SignalState::Red && ctx.stop_line_s.is_some() {
        return (Maneuver::PullOver { offset: 0.0 }, true);
    }
    if ctx.distance_to_goal <= cfg.pull_over_distance {
        return (Maneuver::PullOver { offset: 0.0 }, false);
    }
    if !lead.present {
        return (Maneuver::LaneKeep, false);
    }
    // An overtake under way is finished rather than dropped on headway.
    let headway = lead.gap / v.max(cfg.headway_speed_floor);
    if headway >= cfg.t_follow && !overtaking {
        return (Maneuver::LaneKeep, false);
    }
    if lead.speed < v_ref - cfg.speed_margin && overtake_permitted {
        return (
            Maneuver::Overtake {
                offset: cfg.overtake_offset,
            },
            false,
        );
    }
    (Maneuver::FollowLead, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Pose2D, Vec2};
    use crate::routenet::PathSegment;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ego(speed: f64) -> VehicleState {
        VehicleState {
            speed,
            ..VehicleState::at_rest(Pose2D::new(0.0, 0.0, 0.0), 0.0)
        }
    }

    fn ctx(lane_change_allowed: bool) -> RoadContext {
        RoadContext {
            road_class: RoadClass::UrbanMain,
            traffic_signal: SignalState::Green,
            lane_change_allowed,
            speed_limit: 5.0,
            lane_width: 3.5,
            stop_line_s: None,
            distance_to_goal: 200.0,
        }
    }

    fn decide(ctx: &RoadContext, lead: LeadInfo, free: bool, prev: ManeuverState, clock: f64) -> Maneuver {
        decide_maneuver(&ego(5.0), ctx, &lead, free, &prev, clock, &BehaviorConfig::default()).maneuver
    }

    #[test]
    fn overtake_continues_past_the_headway_threshold() {
        let since = ManeuverState {
            maneuver: Maneuver::Overtake { offset: 2.0 },
            since: -10.0,
            came_from: Some(ManeuverKind::LaneKeep),
        };
        // slowed down alongside: headway 6 s, well above t_follow
        let slow_ego = ego(1.0);
        let cfg = BehaviorConfig::default();
        let next = decide_maneuver(&slow_ego, &ctx(true), &LeadInfo::at(6.0, 0.5), true, &since, 0.0, &cfg);
        assert_eq!(next.maneuver, Maneuver::Overtake { offset: 2.0 });
        let fresh = decide_maneuver(&slow_ego, &ctx(true), &LeadInfo::at(6.0, 0.5), true, &ManeuverState::initial(-10.0), 0.0, &cfg);
        assert_eq!(fresh.maneuver, Maneuver::LaneKeep);
        // the passed obstacle gone: back to the lane
        let done = decide_maneuver(&slow_ego, &ctx(true), &LeadInfo::none(), true, &since, 0.0, &cfg);
        assert_eq!(done.maneuver, Maneuver::LaneKeep);
    }

    #[test]
    fn rule_table_examples() {
        let init = ManeuverState::initial(-10.0);
        assert_eq!(decide(&ctx(true), LeadInfo::none(), true, init, 0.0), Maneuver::LaneKeep);
        assert_eq!(
            decide(&ctx(true), LeadInfo::at(10.0, 1.0), true, init, 0.0),
            Maneuver::Overtake { offset: 2.0 }
        );
        assert_eq!(decide(&ctx(false), LeadInfo::at(10.0, 1.0), true, init, 0.0), Maneuver::FollowLead);
        assert_eq!(decide(&ctx(true), LeadInfo::at(10.0, 4.5), true, init, 0.0), Maneuver::FollowLead);
        assert_eq!(decide(&ctx(true), LeadInfo::at(40.0, 4.5), true, init, 0.0), Maneuver::LaneKeep);
        let near_goal = RoadContext {
            distance_to_goal: 3.0,
            ..ctx(true)
        };
        assert_eq!(
            decide(&near_goal, LeadInfo::none(), true, init, 0.0),
            Maneuver::PullOver { offset: 0.0 }
        );
        let red = RoadContext {
            traffic_signal: SignalState::Red,
            stop_line_s: Some(30.0),
            ..ctx(true)
        };
        assert_eq!(decide(&red, LeadInfo::none(), true, init, 0.0), Maneuver::PullOver { offset: 0.0 });
    }

    #[test]
    fn relaxation_allows_passing_an_accident() {
        let cfg = BehaviorConfig {
            allow_rule_relaxation: true,
            ..BehaviorConfig::default()
        };
        let init = ManeuverState::initial(-10.0);
        let stopped = LeadInfo::at(8.0, 0.0);
        let m = decide_maneuver(&ego(3.0), &ctx(false), &stopped, true, &init, 0.0, &cfg).maneuver;
        assert_eq!(m.kind(), ManeuverKind::Overtake);
        let strict = decide_maneuver(&ego(3.0), &ctx(false), &stopped, true, &init, 0.0, &BehaviorConfig::default());
        assert_eq!(strict.maneuver, Maneuver::FollowLead);
    }

    #[test]
    fn safety_dominates_history() {
        let blocked = LeadInfo::at(1.0, 0.0);
        for prev in [
            Maneuver::LaneKeep,
            Maneuver::FollowLead,
            Maneuver::Overtake { offset: 2.0 },
            Maneuver::PullOver { offset: 0.0 },
        ] {
            let st = ManeuverState {
                maneuver: prev,
                since: 0.0,
                came_from: Some(ManeuverKind::EmergencyStop),
            };
            assert_eq!(decide(&ctx(true), blocked, false, st, 0.1), Maneuver::EmergencyStop);
        }
    }

    #[test]
    fn overtake_is_held_then_released() {
        let st = ManeuverState {
            maneuver: Maneuver::Overtake { offset: 2.0 },
            since: 0.0,
            came_from: Some(ManeuverKind::LaneKeep),
        };
        assert_eq!(decide(&ctx(true), LeadInfo::none(), true, st, 1.0).kind(), ManeuverKind::Overtake);
        assert_eq!(decide(&ctx(true), LeadInfo::none(), true, st, 2.5), Maneuver::LaneKeep);
    }

    fn path() -> ReferencePath {
        let seg = PathSegment {
            s_start: 0.0,
            s_end: 100.0,
            road_class: RoadClass::Residential,
            speed_limit: 4.0,
            lane_width: 3.0,
            overtaking_allowed: false,
        };
        ReferencePath::from_polyline(&[Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0)], 1.0, seg).unwrap()
    }

    #[test]
    fn context_lookup() {
        let p = path();
        let cfg = BehaviorConfig::default();
        let c = classify_context(&p, 10.0, &[], 0.0, &cfg).unwrap();
        assert_eq!(c.road_class, RoadClass::Residential);
        assert_eq!(c.traffic_signal, SignalState::None);
        assert!(classify_context(&p, 100.5, &[], 0.0, &cfg).is_err());

        let signals = [TrafficSignal {
            s: 50.0,
            red_windows: vec![(0.0, 10.0)],
        }];
        // scenario lookup: red if the signal is within lookahead and the clock is in a red window
        for (s, clock) in [(10.0, 5.0), (0.0, 5.0), (45.0, 12.0), (60.0, 5.0), (10.0, 10.0)] {
            let oracle = if (50.0 - s) >= 0.0 && (50.0 - s) <= 50.0 {
                if (0.0..10.0).contains(&clock) {
                    SignalState::Red
                } else {
                    SignalState::Green
                }
            } else {
                SignalState::None
            };
            let got = classify_context(&p, s, &signals, clock, &cfg).unwrap();
            assert_eq!(got.traffic_signal, oracle, "s {s} clock {clock}");
            assert_eq!(got.stop_line_s.is_some(), oracle == SignalState::Red);
        }
    }

    #[test]
    fn hysteresis_blocks_quick_reversals() {
        let cfg = BehaviorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // headway threshold at v = 5 m/s is 15 m; oscillate the gap within +-9 %
        let mut st = ManeuverState::initial(0.0);
        let mut switches: Vec<(f64, ManeuverKind, ManeuverKind)> = Vec::new();
        for k in 0..400 {
            let clock = k as f64 * 0.1;
            let gap = 15.0 * (1.0 + rng.random_range(-0.09..0.09));
            let next = decide_maneuver(&ego(5.0), &ctx(true), &LeadInfo::at(gap, 4.5), true, &st, clock, &cfg);
            if next.maneuver.kind() != st.maneuver.kind() {
                switches.push((clock, st.maneuver.kind(), next.maneuver.kind()));
            }
            st = next;
        }
        assert!(!switches.is_empty());
        for w in switches.windows(2) {
            let ((t1, a, b), (t2, c, d)) = (w[0], w[1]);
            if b == c && d == a {
                assert!(t2 - t1 >= cfg.hold_time - 1e-9, "reversal {a:?}->{b:?}->{a:?} after {}", t2 - t1);
            }
        }
    }

    #[test]
    fn decisions_are_deterministic() {
        let st = ManeuverState::initial(0.0);
        let a = decide_maneuver(&ego(4.0), &ctx(true), &LeadInfo::at(9.0, 1.0), true, &st, 3.0, &BehaviorConfig::default());
        let b = decide_maneuver(&ego(4.0), &ctx(true), &LeadInfo::at(9.0, 1.0), true, &st, 3.0, &BehaviorConfig::default());
        assert_eq!(a, b);
    }
}
