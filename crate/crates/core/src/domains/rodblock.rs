//! Rod-and-Block: a rod slides along a finite track between two walls and can
//! be rotated between a downward and an upward pose. Blocks placed along the
//! track impede translation in one pose or both, and nearby obstacles block
//! rotations on the side the rod sweeps through.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domains::oracle::{AbstractGraph, AbstractNode, DomainOracle};
use crate::env::{Environment, ExecOutcome, OptionDescriptor};

pub const GO_LEFT: &str = "GoLeft";
pub const GO_RIGHT: &str = "GoRight";
pub const ROTATE_UP_CW: &str = "RotateUpClockwise";
pub const ROTATE_UP_ACW: &str = "RotateUpAnticlockwise";
pub const ROTATE_DOWN_CW: &str = "RotateDownClockwise";
pub const ROTATE_DOWN_ACW: &str = "RotateDownAnticlockwise";

pub const OPTION_IDS: [&str; 6] = [
    GO_LEFT,
    GO_RIGHT,
    ROTATE_UP_CW,
    ROTATE_UP_ACW,
    ROTATE_DOWN_CW,
    ROTATE_DOWN_ACW,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    /// Impedes translation while the rod hangs down.
    Down,
    /// Impedes translation while the rod points up.
    Up,
    /// Impedes translation in both poses.
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RodBlockTask {
    pub track_len: f64,
    pub blocks: Vec<(f64, BlockKind)>,
    pub rod_len: f64,
    pub motion_noise: f64,
    pub seed: u64,
}

pub const THETA_DOWN: f64 = 0.0;
pub const THETA_UP: f64 = std::f64::consts::PI;
/// Translation halts at this gap from the impeding obstacle; larger than the
/// rod length, so rotating right next to an obstacle stays collision-free.
const HALT_GAP: f64 = 0.75;
/// Obstacles within this distance appear in the observation.
const PROXIMITY: f64 = 1.0;
/// Minimum translation for a Go option to count as executed.
const MIN_MOVE: f64 = 0.3;
/// Minimum spacing between blocks (and from the walls); keeps at most one
/// obstacle in view per side after a halt and keeps distinct halting
/// positions resolvable by the problem-space clustering.
const MIN_SEPARATION: f64 = 4.0;

const THETA_NOISE: f64 = 0.03;
const ONEHOT_NOISE: f64 = 0.02;
const POS_NOISE: f64 = 0.05;

/// left one-hot(5) + right one-hot(5) + angle.
pub const OBS_DIM: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Neighbor {
    None,
    Wall,
    Block(BlockKind),
}

impl Neighbor {
    fn one_hot_index(self) -> usize {
        match self {
            Neighbor::None => 0,
            Neighbor::Wall => 1,
            Neighbor::Block(BlockKind::Down) => 2,
            Neighbor::Block(BlockKind::Up) => 3,
            Neighbor::Block(BlockKind::Both) => 4,
        }
    }
}

pub struct RodBlockEnv {
    task: RodBlockTask,
    task_id: String,
    options: Vec<OptionDescriptor>,
    x: f64,
    theta: f64,
    rng: ChaCha8Rng,
    /// Sorted halting positions (anchors of the abstract graph).
    anchors: Vec<f64>,
}

/// Build a task with `num_blocks` randomly placed blocks of random kinds.
pub fn make_rod_block(num_blocks: usize, seed: u64) -> crate::error::Result<RodBlockEnv> {
    if !(1..=4).contains(&num_blocks) {
        return Err(crate::error::Error::InvalidTask(format!(
            "num_blocks must be in 1..=4, got {num_blocks}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(crate::math::derive_seed(seed, 0x0b10c));
    let track_len = 22.0;
    // Place blocks with guaranteed MIN_SEPARATION gaps (also from the walls)
    // by distributing the leftover slack over sorted uniform draws.
    let lo = MIN_SEPARATION;
    let hi = track_len - MIN_SEPARATION;
    let slack = (hi - lo) - (num_blocks - 1) as f64 * MIN_SEPARATION;
    let mut offsets: Vec<f64> = (0..num_blocks).map(|_| rng.gen_range(0.0..1.0)).collect();
    offsets.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut positions: Vec<f64> = offsets
        .iter()
        .enumerate()
        .map(|(i, u)| lo + i as f64 * MIN_SEPARATION + u * slack)
        .collect();
    positions.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let blocks = positions
        .into_iter()
        .map(|p| {
            let kind = match rng.gen_range(0..3) {
                0 => BlockKind::Down,
                1 => BlockKind::Up,
                _ => BlockKind::Both,
            };
            (p, kind)
        })
        .collect();
    Ok(RodBlockEnv::new(RodBlockTask {
        track_len,
        blocks,
        rod_len: 0.5,
        motion_noise: POS_NOISE,
        seed,
    }))
}

impl RodBlockEnv {
    pub fn new(task: RodBlockTask) -> Self {
        let options = OPTION_IDS
            .iter()
            .map(|o| OptionDescriptor {
                option_id: o.to_string(),
                name: o.to_string(),
            })
            .collect();
        let rng = ChaCha8Rng::seed_from_u64(task.seed);
        let task_id = format!("rodblock(n={};seed={})", task.blocks.len(), task.seed);
        let mut anchors: Vec<f64> = vec![HALT_GAP, task.track_len - HALT_GAP];
        for (p, _) in &task.blocks {
            anchors.push(p - HALT_GAP);
            anchors.push(p + HALT_GAP);
        }
        anchors.sort_by(|a, b| a.partial_cmp(b).unwrap());
        anchors.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        let mut env = RodBlockEnv {
            x: 0.0,
            theta: THETA_DOWN,
            rng,
            options,
            task_id,
            task,
            anchors,
        };
        env.reset();
        env
    }

    pub fn task(&self) -> &RodBlockTask {
        &self.task
    }

    fn pointing_down(&self) -> bool {
        self.theta < std::f64::consts::FRAC_PI_2
    }

    fn impedes(&self, kind: BlockKind, down: bool) -> bool {
        match kind {
            BlockKind::Both => true,
            BlockKind::Down => down,
            BlockKind::Up => !down,
        }
    }

    /// Halting x for a translation from `x` in direction `dir` (+1 right,
    /// -1 left) at pose `down`, before motion noise.
    pub fn halt_target(&self, x: f64, dir: f64, down: bool) -> f64 {
        if dir > 0.0 {
            let mut nearest = self.task.track_len;
            for (p, kind) in &self.task.blocks {
                if *p > x && self.impedes(*kind, down) {
                    nearest = nearest.min(*p);
                    break;
                }
            }
            nearest - HALT_GAP
        } else {
            let mut nearest = 0.0f64;
            for (p, kind) in self.task.blocks.iter().rev() {
                if *p < x && self.impedes(*kind, down) {
                    nearest = nearest.max(*p);
                    break;
                }
            }
            nearest + HALT_GAP
        }
    }

    /// Whether a rotation sweeping through the given side collides. Clockwise
    /// rotations sweep the right half-plane, anticlockwise the left.
    fn rotation_blocked(&self, right_side: bool) -> bool {
        let reach = self.task.rod_len * 0.999;
        let wall_dist = if right_side {
            self.task.track_len - self.x
        } else {
            self.x
        };
        if wall_dist < reach {
            return true;
        }
        self.task.blocks.iter().any(|(p, _)| {
            let d = p - self.x;
            if right_side {
                d > 0.0 && d < reach
            } else {
                d < 0.0 && -d < reach
            }
        })
    }

    fn neighbor(&self, right: bool) -> Neighbor {
        let mut best: Option<(f64, Neighbor)> = None;
        let wall_dist = if right {
            self.task.track_len - self.x
        } else {
            self.x
        };
        if wall_dist <= PROXIMITY {
            best = Some((wall_dist, Neighbor::Wall));
        }
        for (p, kind) in &self.task.blocks {
            let d = p - self.x;
            let d = if right { d } else { -d };
            if d > 0.0 && d <= PROXIMITY && best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, Neighbor::Block(*kind)));
            }
        }
        best.map_or(Neighbor::None, |(_, n)| n)
    }
}

impl Environment for RodBlockEnv {
    fn family(&self) -> &str {
        "rodblock"
    }

    fn task_id(&self) -> &str {
        &self.task_id
    }

    fn options(&self) -> &[OptionDescriptor] {
        &self.options
    }

    fn state(&self) -> Vec<f64> {
        vec![self.x, self.theta]
    }

    fn set_state(&mut self, state: &[f64]) {
        self.x = state[0].clamp(0.0, self.task.track_len);
        self.theta = state[1];
    }

    fn observe(&mut self) -> Vec<f64> {
        let mut obs = vec![0.0; OBS_DIM];
        obs[self.neighbor(false).one_hot_index()] = 1.0;
        obs[5 + self.neighbor(true).one_hot_index()] = 1.0;
        obs[10] = self.theta;
        for (j, item) in obs.iter_mut().enumerate() {
            let n: f64 = self.rng.sample(StandardNormal);
            let sigma = if j == 10 { THETA_NOISE } else { ONEHOT_NOISE };
            *item += n * sigma;
        }
        obs
    }

    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn obs_noise(&self) -> Vec<f64> {
        let mut v = vec![ONEHOT_NOISE; OBS_DIM];
        v[10] = THETA_NOISE;
        v
    }

    fn execute(&mut self, option_id: &str) -> ExecOutcome {
        let down = self.pointing_down();
        match option_id {
            GO_LEFT | GO_RIGHT => {
                let dir = if option_id == GO_RIGHT { 1.0 } else { -1.0 };
                let target = self.halt_target(self.x, dir, down);
                let dist = (target - self.x) * dir;
                if dist < MIN_MOVE {
                    return ExecOutcome::failure();
                }
                let n: f64 = self.rng.sample(StandardNormal);
                self.x = (target + n * self.task.motion_noise)
                    .clamp(HALT_GAP * 0.5, self.task.track_len - HALT_GAP * 0.5);
                ExecOutcome {
                    success: true,
                    duration: dist.ceil().max(1.0) as u32,
                    reward: -0.1 * dist,
                }
            }
            ROTATE_UP_CW | ROTATE_UP_ACW | ROTATE_DOWN_CW | ROTATE_DOWN_ACW => {
                let wants_up = option_id.starts_with("RotateUp");
                if wants_up != down {
                    // Already in the target pose.
                    return ExecOutcome::failure();
                }
                let right_side = option_id.ends_with("Clockwise")
                    && !option_id.ends_with("Anticlockwise");
                if self.rotation_blocked(right_side) {
                    return ExecOutcome::failure();
                }
                let n: f64 = self.rng.sample(StandardNormal);
                self.theta = if wants_up { THETA_UP } else { THETA_DOWN } + n * THETA_NOISE;
                ExecOutcome {
                    success: true,
                    duration: 2,
                    reward: -0.2,
                }
            }
            _ => ExecOutcome::failure(),
        }
    }

    fn reset(&mut self) {
        // Uniform along the track, away from block centers, random pose.
        loop {
            let x = self
                .rng
                .gen_range(self.task.rod_len..self.task.track_len - self.task.rod_len);
            if self
                .task
                .blocks
                .iter()
                .all(|(p, _)| (p - x).abs() > 0.15)
            {
                self.x = x;
                break;
            }
        }
        let up: bool = self.rng.gen();
        let n: f64 = self.rng.sample(StandardNormal);
        self.theta = if up { THETA_UP } else { THETA_DOWN } + n * THETA_NOISE;
    }
}

impl DomainOracle for RodBlockEnv {
    fn abstract_graph(&self) -> AbstractGraph {
        // Anchors: every halting position of either pose, plus pose flips.
        let anchors = &self.anchors;
        let mut graph = AbstractGraph::default();
        for (i, x) in anchors.iter().enumerate() {
            for (pose, theta) in [("down", THETA_DOWN), ("up", THETA_UP)] {
                graph.nodes.push(AbstractNode {
                    name: format!("x{i}-{pose}"),
                    anchor: vec![*x, theta],
                });
            }
        }
        let node_index = |anchors: &[f64], x: f64, down: bool| -> Option<usize> {
            let i = anchors.iter().position(|a| (a - x).abs() < 1e-6)?;
            Some(i * 2 + usize::from(!down))
        };
        for (i, x) in anchors.iter().enumerate() {
            for down in [true, false] {
                let from = i * 2 + usize::from(!down);
                for (option, dir) in [(GO_LEFT, -1.0), (GO_RIGHT, 1.0)] {
                    let target = self.halt_target(*x, dir, down);
                    if (target - x) * dir >= MIN_MOVE {
                        if let Some(to) = node_index(anchors, target, down) {
                            graph.edges.insert((from, option.to_string()), to);
                        }
                    }
                }
                // Rotations never collide from halt anchors: every anchor
                // keeps at least HALT_GAP > rod_len clearance on both sides.
                let (up_target, rotations) = if down {
                    (false, [ROTATE_UP_CW, ROTATE_UP_ACW])
                } else {
                    (true, [ROTATE_DOWN_CW, ROTATE_DOWN_ACW])
                };
                if let Some(to) = node_index(anchors, *x, up_target) {
                    for option in rotations {
                        graph.edges.insert((from, option.to_string()), to);
                    }
                }
            }
        }
        graph
    }

    fn node_of_state(&self, state: &[f64]) -> Option<usize> {
        let down = state[1] < std::f64::consts::FRAC_PI_2;
        let mut best: Option<(f64, usize)> = None;
        for (i, x) in self.anchors.iter().enumerate() {
            let d = (x - state[0]).abs();
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, i * 2 + usize::from(!down)));
            }
        }
        best.and_then(|(d, i)| (d < 0.25).then_some(i))
    }

    fn sample_node_state(&self, node: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let x = self.anchors[node / 2];
        let theta = if node % 2 == 0 { THETA_DOWN } else { THETA_UP };
        let nx: f64 = rng.sample(StandardNormal);
        let nt: f64 = rng.sample(StandardNormal);
        vec![x + nx * self.task.motion_noise, theta + nt * THETA_NOISE]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed_env() -> RodBlockEnv {
        RodBlockEnv::new(RodBlockTask {
            track_len: 10.0,
            blocks: vec![(3.0, BlockKind::Down), (6.5, BlockKind::Up)],
            rod_len: 0.5,
            motion_noise: POS_NOISE,
            seed: 42,
        })
    }

    #[test]
    fn invalid_num_blocks_is_rejected() {
        assert!(make_rod_block(0, 1).is_err());
        assert!(make_rod_block(5, 1).is_err());
        assert!(make_rod_block(3, 1).is_ok());
    }

    #[test]
    fn go_left_at_left_wall_fails() {
        let mut env = fixed_env();
        env.set_state(&[HALT_GAP, THETA_DOWN]);
        let before = env.state();
        assert!(!env.execute(GO_LEFT).success);
        assert_eq!(env.state(), before);
    }

    #[test]
    fn rod_passes_non_impeding_block() {
        // Up pose, block at 3.0 only impedes the down pose: GoRight from the
        // left end must halt at the up-impeding block at 6.5.
        let mut env = fixed_env();
        env.set_state(&[HALT_GAP, THETA_UP]);
        assert!(env.execute(GO_RIGHT).success);
        let expected = 6.5 - HALT_GAP;
        assert!(
            (env.state()[0] - expected).abs() < 5.0 * POS_NOISE,
            "halted at {} expected {expected}",
            env.state()[0]
        );
    }

    #[test]
    fn rotate_up_clockwise_succeeds_adjacent_to_wall() {
        // Adjacent-left of the right wall, facing down.
        let mut env = fixed_env();
        env.set_state(&[10.0 - HALT_GAP, THETA_DOWN]);
        let out = env.execute(ROTATE_UP_CW);
        assert!(out.success);
        assert!((env.state()[1] - THETA_UP).abs() < 5.0 * THETA_NOISE);
        assert!((env.state()[0] - (10.0 - HALT_GAP)).abs() < 1e-9);
    }

    #[test]
    fn rotation_blocked_when_obstacle_in_sweep() {
        let mut env = fixed_env();
        // Block at 3.0, rod at 2.7: obstacle 0.3 to the right, within rod_len.
        env.set_state(&[2.7, THETA_DOWN]);
        assert!(!env.execute(ROTATE_UP_CW).success);
        // Sweeping the other way is clear.
        assert!(env.execute(ROTATE_UP_ACW).success);
    }

    #[test]
    fn abstract_graph_edges_replay_on_env() {
        let env = make_rod_block(3, 7).unwrap();
        let g = env.abstract_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(!g.edges.is_empty());
        for ((from, option), to) in &g.edges {
            let mut probe = make_rod_block(3, 7).unwrap();
            let start = env.sample_node_state(*from, &mut rng);
            probe.set_state(&start);
            let out = probe.execute(option);
            assert!(out.success, "{option} from {from} should succeed");
            assert_eq!(
                probe.node_of_state(&probe.state()),
                Some(*to),
                "{option} from node {from}"
            );
        }
    }

    #[test]
    fn observation_shows_halting_neighbor() {
        let mut env = fixed_env();
        env.set_state(&[HALT_GAP, THETA_DOWN]);
        assert!(env.execute(GO_RIGHT).success); // halts left of block at 3.0
        let obs = env.observe();
        // Right neighbor one-hot should peak at Block(Down) = index 2.
        let right = &obs[5..10];
        let argmax = right
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 2, "right neighbor {right:?}");
    }
}
