//! The nine benchmark architectures and everything that surrounds a network
//! at act time: observation encoding, additive joint-Q composition, ε-greedy
//! selection, and the agent-invariance checker.
//!
//! The additive decomposition is what makes decentralized greedy acting
//! coincide with a central arbiter: the joint table `Q(a¹,a²) = Q̃₁(a¹) +
//! Q̃₂(a²)` attains its maximum exactly where each component does, so each
//! agent can argmax its own head locally ([`greedy_actions`] vs
//! [`brute_force_joint_argmax`]).

mod network;
mod spec;

pub use network::{BpttCarry, JointHidden, PolicyNetwork, QOut, StepCache, StepInput};
pub use spec::{AgentSpec, PRESETS};

use rand::Rng;

use crate::error::{Result, VdnError};
use crate::gridworld::{Action, Observation};
use crate::neuralcore::{s, Scalar, Tensor};
use crate::{NUM_ACTIONS, NUM_AGENTS, OBS_LEN};

/// Fills `out` (length `spec.input_width()`) with one agent's encoded input:
/// the 75 observation bytes scaled to `[0,1]`, then — for role-informed
/// specs — a d-dim one-hot marking which physical agent this stream is.
pub fn encode_obs_row<S: Scalar>(spec: AgentSpec, obs: &Observation, role: usize, out: &mut [S]) {
    debug_assert_eq!(out.len(), spec.input_width());
    for (o, &byte) in out.iter_mut().zip(&obs.0) {
        *o = s::<S>(byte as f64 / 255.0);
    }
    if spec.role_info {
        debug_assert!(role < NUM_AGENTS);
        for slot in 0..NUM_AGENTS {
            out[OBS_LEN + slot] = if slot == role { S::one() } else { S::zero() };
        }
    }
}

/// Encodes a batch of observation pairs with explicit role assignment:
/// `roles[i]` is the identity fed to slot `i` (the invariance checker swaps
/// these along with the observations; everything else uses [`encode_step`]).
pub fn encode_step_with_roles<S: Scalar>(
    spec: AgentSpec,
    pairs: &[[Observation; 2]],
    roles: [usize; 2],
) -> StepInput<S> {
    let batch = pairs.len();
    let w = spec.input_width();
    let mut rows = [Tensor::zeros(&[batch, w]), Tensor::zeros(&[batch, w])];
    for i in 0..NUM_AGENTS {
        let data = rows[i].data_mut();
        for (b, pair) in pairs.iter().enumerate() {
            encode_obs_row(spec, &pair[i], roles[i], &mut data[b * w..(b + 1) * w]);
        }
    }
    StepInput { rows, batch }
}

/// Standard encoding: slot `i` carries physical agent `i`.
pub fn encode_step<S: Scalar>(spec: AgentSpec, pairs: &[[Observation; 2]]) -> StepInput<S> {
    encode_step_with_roles(spec, pairs, [0, 1])
}

/// Lowest index attaining the maximum (strict `>` keeps the earliest).
fn argmax<S: Scalar>(xs: &[S]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Joint action value for one batch row: the same-order sum `Q̃₁(a¹) + Q̃₂(a²)`
/// for decomposed outputs, or the direct `a¹·8 + a²` table entry for the
/// combinatorial head.
pub fn joint_q<S: Scalar>(out: &QOut<S>, actions: [Action; 2], row: usize) -> S {
    match out {
        QOut::PerAgent(qs) => {
            qs[0].data()[row * NUM_ACTIONS + actions[0].index()]
                + qs[1].data()[row * NUM_ACTIONS + actions[1].index()]
        }
        QOut::Joint(q) => {
            let width = NUM_ACTIONS * NUM_ACTIONS;
            q.data()[row * width + actions[0].index() * NUM_ACTIONS + actions[1].index()]
        }
    }
}

/// Greedy joint action for one batch row: per-agent local argmax for
/// decomposed outputs, joint-table argmax for the combinatorial head. Ties
/// break toward the lowest action index.
pub fn greedy_actions<S: Scalar>(out: &QOut<S>, row: usize) -> [Action; 2] {
    match out {
        QOut::PerAgent(qs) => {
            let pick = |q: &Tensor<S>| {
                Action::from_index(argmax(&q.data()[row * NUM_ACTIONS..(row + 1) * NUM_ACTIONS]))
            };
            [pick(&qs[0]), pick(&qs[1])]
        }
        QOut::Joint(q) => {
            let width = NUM_ACTIONS * NUM_ACTIONS;
            let j = argmax(&q.data()[row * width..(row + 1) * width]);
            [Action::from_index(j / NUM_ACTIONS), Action::from_index(j % NUM_ACTIONS)]
        }
    }
}

/// Exhaustive argmax of [`joint_q`] over all 64 joint actions (lexicographic
/// tie-break). The test oracle that [`greedy_actions`] must agree with on
/// decomposed outputs — the "central arbiter" each agent's local argmax is
/// equivalent to.
pub fn brute_force_joint_argmax<S: Scalar>(out: &QOut<S>, row: usize) -> [Action; 2] {
    let mut best = [Action::from_index(0), Action::from_index(0)];
    let mut best_q = joint_q(out, best, row);
    for j in 1..NUM_ACTIONS * NUM_ACTIONS {
        let pair = [Action::from_index(j / NUM_ACTIONS), Action::from_index(j % NUM_ACTIONS)];
        let q = joint_q(out, pair, row);
        if q > best_q {
            best = pair;
            best_q = q;
        }
    }
    best
}

/// ε-greedy selection on a single-row output. Decomposed outputs draw one
/// explore coin *per agent* (independent exploration); the combinatorial head
/// draws one coin for the whole joint action.
pub fn select_actions<S: Scalar>(out: &QOut<S>, epsilon: f64, rng: &mut impl Rng) -> [Action; 2] {
    debug_assert_eq!(out.batch(), 1);
    match out {
        QOut::PerAgent(_) => {
            let greedy = greedy_actions(out, 0);
            let mut chosen = greedy;
            for (i, slot) in chosen.iter_mut().enumerate() {
                if rng.gen::<f64>() < epsilon {
                    *slot = Action::from_index(rng.gen_range(0..NUM_ACTIONS));
                } else {
                    *slot = greedy[i];
                }
            }
            chosen
        }
        QOut::Joint(_) => {
            if rng.gen::<f64>() < epsilon {
                let j = rng.gen_range(0..NUM_ACTIONS * NUM_ACTIONS);
                [Action::from_index(j / NUM_ACTIONS), Action::from_index(j % NUM_ACTIONS)]
            } else {
                greedy_actions(out, 0)
            }
        }
    }
}

/// Checks the permutation property on a weight-shared network: feeding the
/// agents' observation histories through swapped slots must swap the
/// per-agent Q outputs (within 1e-6 at every step and action). Role-informed
/// networks get the conditional variant — the identity one-hots travel with
/// the observations.
pub fn check_agent_invariance<S: Scalar>(
    net: &PolicyNetwork<S>,
    histories: &[Vec<[Observation; 2]>],
) -> Result<bool> {
    if !net.spec.shared_weights {
        return Err(VdnError::Usage(
            "agent invariance is only defined for weight-shared architectures".into(),
        ));
    }
    let spec = net.spec;
    let tol = s::<S>(1e-6);

    for history in histories {
        let mut hidden_a = JointHidden::zeros(spec, 1);
        let mut hidden_b = JointHidden::zeros(spec, 1);
        for pair in history {
            let (qa, _) = net.forward(encode_step(spec, &[*pair]), &mut hidden_a, false);
            let swapped = [[pair[1], pair[0]]];
            let (qb, _) = net.forward(
                encode_step_with_roles(spec, &swapped, [1, 0]),
                &mut hidden_b,
                false,
            );
            let (QOut::PerAgent(a), QOut::PerAgent(b)) = (&qa, &qb) else {
                unreachable!("weight-shared specs produce per-agent outputs");
            };
            for i in 0..NUM_AGENTS {
                for (&x, &y) in a[i].data().iter().zip(b[1 - i].data()) {
                    if (x - y).abs() > tol {
                        return Ok(false);
                    }
                }
            }
        }
    }
    Ok(true)
}
