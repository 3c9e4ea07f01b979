use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::render::render_observation;
use super::{Action, Coord, Dir, GridMap, Observation, Task};
use crate::error::{Result, VdnError};
use crate::util::seeded_rng;

/// Episode step limits: 5,000 in training, 2,000 in testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Test,
}

impl Mode {
    pub fn episode_limit(self) -> u32 {
        match self {
            Mode::Train => 5_000,
            Mode::Test => 2_000,
        }
    }
}

/// Where a reward came from; carried on [`StepResult::events`] for tracing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    SwitchGoal,
    Pickup,
    Dropoff,
    Apple,
    Lemon,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::SwitchGoal => "switch_goal",
            EventKind::Pickup => "pickup",
            EventKind::Dropoff => "dropoff",
            EventKind::Apple => "apple",
            EventKind::Lemon => "lemon",
        }
    }
}

/// One tagged reward event: which agent triggered it and its team value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardEvent {
    pub agent: usize,
    pub kind: EventKind,
    pub amount: f32,
}

/// Pose and task flags of one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentPose {
    pub pos: Coord,
    pub orient: Dir,
    pub carrying: bool,     // Fetch
    pub reached_goal: bool, // Switch
}

/// Output of one simultaneous step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub observations: [Observation; 2],
    pub team_reward: f32,
    pub done: bool,
    pub events: Vec<RewardEvent>,
}

/// Full simulator state. Constructed via [`EnvState::reset`]; deterministic
/// given `(map, seed, action sequence)`.
#[derive(Debug, Clone)]
pub struct EnvState {
    pub map: Arc<GridMap>,
    pub poses: [AgentPose; 2],
    pub pickup_available: bool,
    pub remaining_apples: Vec<Coord>,
    pub remaining_lemons: Vec<Coord>,
    pub beams: Vec<Coord>,
    pub step_count: u32,
    pub episode_limit: u32,
    pub done: bool,
    rng: ChaCha8Rng,
}

impl EnvState {
    /// Fresh episode: agents at seeded spawn choices facing north, items
    /// restored, step counter zeroed. Returns the initial observations.
    pub fn reset(map: Arc<GridMap>, seed: u64, mode: Mode) -> (EnvState, [Observation; 2]) {
        Self::reset_with_limit(map, seed, mode.episode_limit())
    }

    /// [`EnvState::reset`] with an explicit step limit (scaled-down runs).
    pub fn reset_with_limit(
        map: Arc<GridMap>,
        seed: u64,
        episode_limit: u32,
    ) -> (EnvState, [Observation; 2]) {
        let mut state = EnvState {
            poses: [AgentPose {
                pos: (0, 0),
                orient: Dir::N,
                carrying: false,
                reached_goal: false,
            }; 2],
            pickup_available: true,
            remaining_apples: map.apples.clone(),
            remaining_lemons: map.lemons.clone(),
            beams: Vec::new(),
            step_count: 0,
            episode_limit,
            done: false,
            rng: seeded_rng(seed, 0x656e76), // "env"
            map,
        };
        state.respawn_agents();
        let obs = state.observations();
        (state, obs)
    }

    /// Draws spawn cells for both agents (distinct cells) and resets poses.
    fn respawn_agents(&mut self) {
        let map = Arc::clone(&self.map);
        let s0 = map.spawns[0][self.rng.gen_range(0..map.spawns[0].len())];
        let free: Vec<Coord> = map.spawns[1].iter().copied().filter(|&c| c != s0).collect();
        let s1 = free[self.rng.gen_range(0..free.len())];
        for (pose, pos) in self.poses.iter_mut().zip([s0, s1]) {
            pose.pos = pos;
            pose.orient = Dir::N;
            pose.reached_goal = false;
            pose.carrying = false;
        }
    }

    pub fn observations(&self) -> [Observation; 2] {
        [render_observation(self, 0), render_observation(self, 1)]
    }

    /// Advances the world by one simultaneous joint action.
    pub fn step(&mut self, actions: [Action; 2]) -> Result<StepResult> {
        if self.done {
            return Err(VdnError::Usage("step called on a finished episode".into()));
        }
        self.beams.clear();

        // Movement intentions. A Switch agent parked on its goal ignores
        // further movement until the joint reset.
        let mut intents = [self.poses[0].pos, self.poses[1].pos];
        for i in 0..2 {
            let pose = &mut self.poses[i];
            if self.map.task == Task::Switch && pose.reached_goal {
                continue;
            }
            let fwd = pose.orient.forward();
            let right = pose.orient.right();
            match actions[i] {
                Action::Forward => intents[i] = add(pose.pos, fwd),
                Action::Backward => intents[i] = sub(pose.pos, fwd),
                Action::StepLeft => intents[i] = sub(pose.pos, right),
                Action::StepRight => intents[i] = add(pose.pos, right),
                Action::RotateLeft => pose.orient = pose.orient.rotate_left(),
                Action::RotateRight => pose.orient = pose.orient.rotate_right(),
                Action::UseBeam | Action::Stand => {}
            }
        }
        let finals = self.resolve_moves(intents);
        self.poses[0].pos = finals[0];
        self.poses[1].pos = finals[1];

        // Beams fire from the (unmoved) shooter cell along its facing, and
        // light floor cells until the first wall. Purely visual for one step.
        for i in 0..2 {
            if actions[i] == Action::UseBeam
                && !(self.map.task == Task::Switch && self.poses[i].reached_goal)
            {
                let fwd = self.poses[i].orient.forward();
                let mut c = add(self.poses[i].pos, fwd);
                while self.map.is_floor(c) {
                    self.beams.push(c);
                    c = add(c, fwd);
                }
            }
        }

        let events = self.apply_task_rules();

        self.step_count += 1;
        if self.step_count >= self.episode_limit {
            self.done = true;
        }

        let team_reward = events.iter().map(|e| e.amount).sum();
        Ok(StepResult { observations: self.observations(), team_reward, done: self.done, events })
    }

    /// Simultaneous move resolution:
    /// * wall/off-grid targets are cancelled,
    /// * both agents wanting the same cell → seeded coin flip picks the mover,
    /// * position swaps → both stay,
    /// * moving into a cell the other agent vacates this step is allowed.
    fn resolve_moves(&mut self, intents: [Coord; 2]) -> [Coord; 2] {
        let pos = [self.poses[0].pos, self.poses[1].pos];
        let mut t = intents;
        for i in 0..2 {
            if !self.map.is_floor(t[i]) {
                t[i] = pos[i];
            }
        }
        let moving = [t[0] != pos[0], t[1] != pos[1]];
        if t[0] == t[1] {
            if moving[0] && moving[1] {
                let winner = self.rng.gen_range(0..2usize);
                t[1 - winner] = pos[1 - winner];
            } else if moving[0] {
                t[0] = pos[0]; // target occupied by the standing agent 2
            } else if moving[1] {
                t[1] = pos[1];
            }
            return t;
        }
        if moving[0] && moving[1] && t[0] == pos[1] && t[1] == pos[0] {
            return pos; // head-on swap: both blocked
        }
        // Chains: entering the other agent's cell only works if it vacates.
        if t[0] == pos[1] && !moving[1] {
            t[0] = pos[0];
        }
        if t[1] == pos[0] && !moving[0] {
            t[1] = pos[1];
        }
        t
    }

    fn apply_task_rules(&mut self) -> Vec<RewardEvent> {
        let mut events = Vec::new();
        match self.map.task {
            Task::Switch => {
                for i in 0..2 {
                    if !self.poses[i].reached_goal && Some(self.poses[i].pos) == self.map.goals[i] {
                        self.poses[i].reached_goal = true;
                        events.push(RewardEvent { agent: i, kind: EventKind::SwitchGoal, amount: 1.0 });
                    }
                }
                if self.poses.iter().all(|p| p.reached_goal) {
                    self.respawn_agents();
                }
            }
            Task::Fetch => {
                // Drop-offs re-arm the pickup before pickups are evaluated, so
                // a teammate already waiting on the pickup cell collects the
                // new item in the same step.
                for i in 0..2 {
                    if self.poses[i].carrying && Some(self.poses[i].pos) == self.map.dropoff {
                        self.poses[i].carrying = false;
                        self.pickup_available = true;
                        events.push(RewardEvent { agent: i, kind: EventKind::Dropoff, amount: 5.0 });
                    }
                }
                for i in 0..2 {
                    if !self.poses[i].carrying
                        && self.pickup_available
                        && Some(self.poses[i].pos) == self.map.pickup
                    {
                        self.poses[i].carrying = true;
                        self.pickup_available = false;
                        events.push(RewardEvent { agent: i, kind: EventKind::Pickup, amount: 3.0 });
                    }
                }
            }
            Task::Checkers => {
                for i in 0..2 {
                    let pos = self.poses[i].pos;
                    if let Some(idx) = self.remaining_apples.iter().position(|&c| c == pos) {
                        self.remaining_apples.remove(idx);
                        let amount = if i == 0 { 10.0 } else { 1.0 };
                        events.push(RewardEvent { agent: i, kind: EventKind::Apple, amount });
                    } else if let Some(idx) = self.remaining_lemons.iter().position(|&c| c == pos) {
                        self.remaining_lemons.remove(idx);
                        let amount = if i == 0 { -10.0 } else { -1.0 };
                        events.push(RewardEvent { agent: i, kind: EventKind::Lemon, amount });
                    }
                }
                if self.remaining_apples.is_empty() {
                    self.remaining_apples = self.map.apples.clone();
                    self.remaining_lemons = self.map.lemons.clone();
                    self.respawn_agents();
                }
            }
        }
        events
    }
}

fn add(a: Coord, b: Coord) -> Coord {
    (a.0 + b.0, a.1 + b.1)
}

fn sub(a: Coord, b: Coord) -> Coord {
    (a.0 - b.0, a.1 - b.1)
}
