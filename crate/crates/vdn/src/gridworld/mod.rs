//! Deterministic seeded grid-world engine for the three benchmark tasks.
//!
//! Two agents act simultaneously on a small rectangular map. Each receives an
//! egocentric 3×5×5 RGB byte observation (4 cells ahead, 2 to each side) and
//! the team receives a single shared reward. Task rules:
//!
//! * **Switch** — each agent must reach its own goal on the far side (+1 per
//!   goal); when both have reached, the task resets within the episode.
//! * **Fetch** — +3 for picking the item up, +5 for dropping it off; drop-off
//!   re-arms the pickup.
//! * **Checkers** — apples are worth +10 to agent 1 and +1 to agent 2,
//!   lemons −10 / −1; the task resets when the apples are gone.
//!
//! Episodes end only at the step limit (5,000 training / 2,000 testing).

mod env;
mod map;
mod render;

pub use env::{AgentPose, EnvState, EventKind, Mode, RewardEvent, StepResult};
pub use map::{load_map, load_map_file, GridMap, Task, TASK_VARIANTS};
pub use render::{palette, render_observation};

/// Grid coordinate; signed so egocentric window arithmetic can walk off-map.
pub type Coord = (i32, i32);

/// Cell content of the static map layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Floor,
    Wall,
}

/// Facing direction. `N` points toward decreasing y (the top of the map text).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    N,
    E,
    S,
    W,
}

impl Dir {
    pub fn forward(self) -> Coord {
        match self {
            Dir::N => (0, -1),
            Dir::E => (1, 0),
            Dir::S => (0, 1),
            Dir::W => (-1, 0),
        }
    }

    /// Unit vector 90° clockwise from forward.
    pub fn right(self) -> Coord {
        match self {
            Dir::N => (1, 0),
            Dir::E => (0, 1),
            Dir::S => (-1, 0),
            Dir::W => (0, -1),
        }
    }

    pub fn rotate_left(self) -> Dir {
        match self {
            Dir::N => Dir::W,
            Dir::W => Dir::S,
            Dir::S => Dir::E,
            Dir::E => Dir::N,
        }
    }

    pub fn rotate_right(self) -> Dir {
        match self {
            Dir::N => Dir::E,
            Dir::E => Dir::S,
            Dir::S => Dir::W,
            Dir::W => Dir::N,
        }
    }
}

/// The eight per-agent actions, in the fixed index order used everywhere
/// (argmax tie-breaking, replay storage, joint-action encoding).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Action {
    Forward = 0,
    Backward = 1,
    StepLeft = 2,
    StepRight = 3,
    RotateLeft = 4,
    RotateRight = 5,
    UseBeam = 6,
    Stand = 7,
}

impl Action {
    pub const COUNT: usize = 8;

    pub fn from_index(i: usize) -> Action {
        match i {
            0 => Action::Forward,
            1 => Action::Backward,
            2 => Action::StepLeft,
            3 => Action::StepRight,
            4 => Action::RotateLeft,
            5 => Action::RotateRight,
            6 => Action::UseBeam,
            7 => Action::Stand,
            _ => panic!("action index {i} out of range"),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Egocentric observation: channels-first 3×5×5 RGB bytes. The agent's own
/// cell is rendered blue at row 4, column 2 (center of the rear row).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation(pub [u8; 75]);

impl Observation {
    pub const CHANNELS: usize = 3;
    pub const ROWS: usize = 5;
    pub const COLS: usize = 5;

    pub fn black() -> Self {
        Observation([0; 75])
    }

    pub fn get(&self, ch: usize, r: usize, c: usize) -> u8 {
        self.0[ch * 25 + r * 5 + c]
    }

    pub fn set_rgb(&mut self, r: usize, c: usize, rgb: (u8, u8, u8)) {
        self.0[r * 5 + c] = rgb.0;
        self.0[25 + r * 5 + c] = rgb.1;
        self.0[50 + r * 5 + c] = rgb.2;
    }

    pub fn rgb(&self, r: usize, c: usize) -> (u8, u8, u8) {
        (self.get(0, r, c), self.get(1, r, c), self.get(2, r, c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direction_algebra() {
        for d in [Dir::N, Dir::E, Dir::S, Dir::W] {
            assert_eq!(d.rotate_left().rotate_right(), d);
            assert_eq!(d.rotate_right().rotate_right().rotate_right().rotate_right(), d);
            // right = forward rotated clockwise
            let f = d.forward();
            let r = d.right();
            assert_eq!((r.0, r.1), (-f.1, f.0));
        }
    }

    #[test]
    fn action_indices_round_trip() {
        for i in 0..Action::COUNT {
            assert_eq!(Action::from_index(i).index(), i);
        }
    }

    #[test]
    fn observation_layout_is_channels_first() {
        let mut o = Observation::black();
        o.set_rgb(4, 2, (1, 2, 3));
        assert_eq!(o.0[4 * 5 + 2], 1);
        assert_eq!(o.0[25 + 4 * 5 + 2], 2);
        assert_eq!(o.0[50 + 4 * 5 + 2], 3);
        assert_eq!(o.rgb(4, 2), (1, 2, 3));
    }
}
