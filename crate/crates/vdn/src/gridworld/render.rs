use super::env::EnvState;
use super::{Cell, Coord, Observation, Task};

/// Fixed RGB palette. Tests pin these bytes; changing them invalidates
/// every trained checkpoint's input distribution.
pub mod palette {
    pub const FLOOR: (u8, u8, u8) = (0, 0, 0);
    pub const WALL: (u8, u8, u8) = (120, 120, 120);
    pub const SELF_AGENT: (u8, u8, u8) = (0, 0, 255);
    pub const TEAMMATE_RED: (u8, u8, u8) = (255, 0, 0);
    pub const TEAMMATE_LIGHTBLUE: (u8, u8, u8) = (0, 160, 255);
    pub const GOAL: (u8, u8, u8) = (0, 255, 0);
    pub const PICKUP: (u8, u8, u8) = (0, 255, 0);
    pub const DROPOFF: (u8, u8, u8) = (255, 255, 0);
    pub const APPLE: (u8, u8, u8) = (0, 255, 0);
    pub const LEMON: (u8, u8, u8) = (255, 160, 0);
    pub const BEAM: (u8, u8, u8) = (255, 255, 0);
}

/// Renders agent `agent`'s egocentric 5×5 window: 4 rows ahead, 2 columns to
/// each side, rotated so "ahead" is up; the agent sits at row 4, column 2.
/// Off-map cells are black. Layering (low to high): floor/wall, task items,
/// beams, teammate, self.
pub fn render_observation(state: &EnvState, agent: usize) -> Observation {
    let mut obs = Observation::black();
    let pose = state.poses[agent];
    let fwd = pose.orient.forward();
    let right = pose.orient.right();
    for r in 0..5i32 {
        for c in 0..5i32 {
            let world = (
                pose.pos.0 + (4 - r) * fwd.0 + (c - 2) * right.0,
                pose.pos.1 + (4 - r) * fwd.1 + (c - 2) * right.1,
            );
            if !state.map.in_bounds(world) {
                continue; // stays black
            }
            let color = if state.map.cell(world) == Cell::Wall {
                palette::WALL
            } else {
                cell_color(state, agent, world)
            };
            obs.set_rgb(r as usize, c as usize, color);
        }
    }
    obs
}

/// Color of one floor cell from `agent`'s point of view.
fn cell_color(state: &EnvState, agent: usize, world: Coord) -> (u8, u8, u8) {
    let mate = 1 - agent;
    if state.poses[agent].pos == world {
        return palette::SELF_AGENT;
    }
    if state.poses[mate].pos == world {
        return match state.map.task {
            Task::Fetch => palette::TEAMMATE_LIGHTBLUE,
            Task::Switch | Task::Checkers => palette::TEAMMATE_RED,
        };
    }
    if state.beams.contains(&world) {
        return palette::BEAM;
    }
    match state.map.task {
        // Each agent sees only its own goal.
        Task::Switch if state.map.goals[agent] == Some(world) => palette::GOAL,
        Task::Fetch if state.map.pickup == Some(world) && state.pickup_available => palette::PICKUP,
        Task::Fetch if state.map.dropoff == Some(world) => palette::DROPOFF,
        Task::Checkers if state.remaining_apples.contains(&world) => palette::APPLE,
        Task::Checkers if state.remaining_lemons.contains(&world) => palette::LEMON,
        _ => palette::FLOOR,
    }
}
