//! Ring-corridor navigation: a circular hallway with two diametrically
//! opposite junctions, each opening onto a radial corridor that ends in a
//! dead-end. One junction is flanked by windows, the other by plain walls.
//! The two dead-ends look identical from the inside, which is what makes the
//! `Inward` option appear probabilistic in egocentric space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domains::oracle::{AbstractGraph, AbstractNode, DomainOracle};
use crate::env::{Environment, ExecOutcome, OptionDescriptor};

pub const CLOCKWISE: &str = "Clockwise";
pub const ANTICLOCKWISE: &str = "Anticlockwise";
pub const OUTWARD: &str = "Outward";
pub const INWARD: &str = "Inward";

/// Local appearance of each region class. The three prototypes differ in
/// every coordinate (openness, brightness, wall solidity), so any option's
/// effect rewrites the whole observation vector.
pub const OBS_DIM: usize = 3;
const PROTO_WALL_JUNCTION: [f64; OBS_DIM] = [0.75, 0.6, 0.4];
const PROTO_WINDOW_JUNCTION: [f64; OBS_DIM] = [0.875, 0.9, 0.25];
const PROTO_DEAD_END: [f64; OBS_DIM] = [0.25, 0.2, 0.8];
pub const OBS_NOISE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorTask {
    pub radius: f64,
    /// Angular position of the wall junction; the window junction sits
    /// diametrically opposite.
    pub wall_junction_angle: f64,
    pub corridor_len: f64,
    /// Shift applied to all problem-space coordinates.
    pub offset: [f64; 2],
    pub motion_noise: f64,
    pub seed: u64,
}

impl Default for CorridorTask {
    fn default() -> Self {
        CorridorTask {
            radius: 5.0,
            wall_junction_angle: 0.0,
            corridor_len: 2.0,
            offset: [0.0, 0.0],
            motion_noise: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Region {
    WallJunction,
    WindowJunction,
    WallDeadEnd,
    WindowDeadEnd,
}

impl Region {
    fn is_junction(self) -> bool {
        matches!(self, Region::WallJunction | Region::WindowJunction)
    }
}

pub struct CorridorEnv {
    task: CorridorTask,
    task_id: String,
    options: Vec<OptionDescriptor>,
    region: Region,
    /// Position in canonical (un-offset) coordinates; the offset is applied
    /// only when reporting problem-space state, so observation streams are
    /// bit-identical across translated tasks.
    pos: [f64; 2],
    rng: ChaCha8Rng,
}

pub fn make_corridor(offset: [f64; 2], seed: u64) -> CorridorEnv {
    CorridorEnv::new(CorridorTask {
        offset,
        seed,
        ..CorridorTask::default()
    })
}

impl CorridorEnv {
    pub fn new(task: CorridorTask) -> Self {
        let options = [CLOCKWISE, ANTICLOCKWISE, OUTWARD, INWARD]
            .iter()
            .map(|o| OptionDescriptor {
                option_id: o.to_string(),
                name: o.to_string(),
            })
            .collect();
        let rng = ChaCha8Rng::seed_from_u64(task.seed);
        let task_id = format!(
            "corridor(off={},{};seed={})",
            task.offset[0], task.offset[1], task.seed
        );
        let mut env = CorridorEnv {
            region: Region::WallJunction,
            pos: [0.0, 0.0],
            rng,
            options,
            task_id,
            task,
        };
        env.pos = env.anchor(Region::WallJunction);
        env
    }

    pub fn task(&self) -> &CorridorTask {
        &self.task
    }

    fn anchor(&self, region: Region) -> [f64; 2] {
        let a = self.task.wall_junction_angle;
        let (r, ang) = match region {
            Region::WallJunction => (self.task.radius, a),
            Region::WindowJunction => (self.task.radius, a + std::f64::consts::PI),
            Region::WallDeadEnd => (self.task.radius + self.task.corridor_len, a),
            Region::WindowDeadEnd => (
                self.task.radius + self.task.corridor_len,
                a + std::f64::consts::PI,
            ),
        };
        [r * ang.cos(), r * ang.sin()]
    }

    fn arrive(&mut self, region: Region) {
        let anchor = self.anchor(region);
        let nx: f64 = self.rng.sample(StandardNormal);
        let ny: f64 = self.rng.sample(StandardNormal);
        self.region = region;
        self.pos = [
            anchor[0] + nx * self.task.motion_noise,
            anchor[1] + ny * self.task.motion_noise,
        ];
    }

    fn prototype(&self) -> &'static [f64; OBS_DIM] {
        match self.region {
            Region::WallJunction => &PROTO_WALL_JUNCTION,
            Region::WindowJunction => &PROTO_WINDOW_JUNCTION,
            Region::WallDeadEnd | Region::WindowDeadEnd => &PROTO_DEAD_END,
        }
    }

    /// Noiseless observation prototype for a region class; used by tests to
    /// decode observations back to region names.
    pub fn prototype_of(name: &str) -> &'static [f64; OBS_DIM] {
        match name {
            "wall-junction" => &PROTO_WALL_JUNCTION,
            "window-junction" => &PROTO_WINDOW_JUNCTION,
            "dead-end" => &PROTO_DEAD_END,
            _ => panic!("unknown corridor prototype `{name}`"),
        }
    }

    fn region_of_canonical(&self, canonical: [f64; 2]) -> Region {
        let mut best = Region::WallJunction;
        let mut best_d = f64::INFINITY;
        for region in [
            Region::WallJunction,
            Region::WindowJunction,
            Region::WallDeadEnd,
            Region::WindowDeadEnd,
        ] {
            let a = self.anchor(region);
            let d = (a[0] - canonical[0]).powi(2) + (a[1] - canonical[1]).powi(2);
            if d < best_d {
                best_d = d;
                best = region;
            }
        }
        best
    }
}

impl Environment for CorridorEnv {
    fn family(&self) -> &str {
        "corridor"
    }

    fn task_id(&self) -> &str {
        &self.task_id
    }

    fn options(&self) -> &[OptionDescriptor] {
        &self.options
    }

    fn state(&self) -> Vec<f64> {
        vec![
            self.pos[0] + self.task.offset[0],
            self.pos[1] + self.task.offset[1],
        ]
    }

    fn set_state(&mut self, state: &[f64]) {
        let canonical = [
            state[0] - self.task.offset[0],
            state[1] - self.task.offset[1],
        ];
        self.region = self.region_of_canonical(canonical);
        self.pos = canonical;
    }

    fn observe(&mut self) -> Vec<f64> {
        let proto = self.prototype();
        (0..OBS_DIM)
            .map(|j| {
                let n: f64 = self.rng.sample(StandardNormal);
                proto[j] + n * OBS_NOISE
            })
            .collect()
    }

    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn obs_noise(&self) -> Vec<f64> {
        vec![OBS_NOISE; OBS_DIM]
    }

    fn execute(&mut self, option_id: &str) -> ExecOutcome {
        let target = match (option_id, self.region) {
            (CLOCKWISE | ANTICLOCKWISE, Region::WallJunction) => Region::WindowJunction,
            (CLOCKWISE | ANTICLOCKWISE, Region::WindowJunction) => Region::WallJunction,
            (OUTWARD, Region::WallJunction) => Region::WallDeadEnd,
            (OUTWARD, Region::WindowJunction) => Region::WindowDeadEnd,
            (INWARD, Region::WallDeadEnd) => Region::WallJunction,
            (INWARD, Region::WindowDeadEnd) => Region::WindowJunction,
            _ => return ExecOutcome::failure(),
        };
        let path_len = if self.region.is_junction() && target.is_junction() {
            std::f64::consts::PI * self.task.radius
        } else {
            self.task.corridor_len
        };
        self.arrive(target);
        ExecOutcome {
            success: true,
            duration: path_len.ceil().max(1.0) as u32,
            reward: -0.1 * path_len,
        }
    }

    fn reset(&mut self) {
        let region = match self.rng.gen_range(0..4) {
            0 => Region::WallJunction,
            1 => Region::WindowJunction,
            2 => Region::WallDeadEnd,
            _ => Region::WindowDeadEnd,
        };
        self.arrive(region);
    }
}

impl DomainOracle for CorridorEnv {
    fn abstract_graph(&self) -> AbstractGraph {
        let regions = [
            ("wall-junction", Region::WallJunction),
            ("window-junction", Region::WindowJunction),
            ("wall-dead-end", Region::WallDeadEnd),
            ("window-dead-end", Region::WindowDeadEnd),
        ];
        let mut graph = AbstractGraph::default();
        for (name, region) in regions {
            let a = self.anchor(region);
            graph.nodes.push(AbstractNode {
                name: name.to_string(),
                anchor: vec![a[0] + self.task.offset[0], a[1] + self.task.offset[1]],
            });
        }
        let edge = |o: &str, from: usize, to: usize| ((from, o.to_string()), to);
        graph.edges.extend([
            edge(CLOCKWISE, 0, 1),
            edge(CLOCKWISE, 1, 0),
            edge(ANTICLOCKWISE, 0, 1),
            edge(ANTICLOCKWISE, 1, 0),
            edge(OUTWARD, 0, 2),
            edge(OUTWARD, 1, 3),
            edge(INWARD, 2, 0),
            edge(INWARD, 3, 1),
        ]);
        graph
    }

    fn node_of_state(&self, state: &[f64]) -> Option<usize> {
        let canonical = [
            state[0] - self.task.offset[0],
            state[1] - self.task.offset[1],
        ];
        let region = self.region_of_canonical(canonical);
        let anchor = self.anchor(region);
        let d = ((anchor[0] - canonical[0]).powi(2) + (anchor[1] - canonical[1]).powi(2)).sqrt();
        if d > self.task.corridor_len * 0.45 {
            return None;
        }
        Some(match region {
            Region::WallJunction => 0,
            Region::WindowJunction => 1,
            Region::WallDeadEnd => 2,
            Region::WindowDeadEnd => 3,
        })
    }

    fn sample_node_state(&self, node: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let region = match node {
            0 => Region::WallJunction,
            1 => Region::WindowJunction,
            2 => Region::WallDeadEnd,
            _ => Region::WindowDeadEnd,
        };
        let a = self.anchor(region);
        let s = self.task.motion_noise;
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        vec![
            a[0] + nx * s + self.task.offset[0],
            a[1] + ny * s + self.task.offset[1],
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::collect;

    #[test]
    fn outward_twice_fails_on_second_call() {
        let mut env = make_corridor([0.0, 0.0], 3);
        assert!(env.execute(OUTWARD).success);
        let before = env.state();
        let out = env.execute(OUTWARD);
        assert!(!out.success);
        assert_eq!(env.state(), before);
    }

    #[test]
    fn inward_from_window_dead_end_reaches_window_junction() {
        let mut env = make_corridor([0.0, 0.0], 5);
        assert!(env.execute(CLOCKWISE).success); // wall-junction -> window-junction
        assert!(env.execute(OUTWARD).success); // -> window dead-end
        assert!(env.execute(INWARD).success); // -> window junction
        let obs = env.observe();
        // Decode by nearest prototype.
        let names = ["wall-junction", "window-junction", "dead-end"];
        let decoded = names
            .iter()
            .min_by(|a, b| {
                let da = crate::math::sq_dist(&obs, CorridorEnv::prototype_of(a).as_slice());
                let db = crate::math::sq_dist(&obs, CorridorEnv::prototype_of(b).as_slice());
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        assert_eq!(*decoded, "window-junction");
    }

    #[test]
    fn observation_stream_invariant_to_translation() {
        let mut a = make_corridor([0.0, 0.0], 11);
        let mut b = make_corridor([120.0, -44.0], 11);
        let ds_a = collect(&mut a, 200, 9);
        let ds_b = collect(&mut b, 200, 9);
        for (ta, tb) in ds_a.transitions.iter().zip(&ds_b.transitions) {
            assert_eq!(ta.obs, tb.obs);
            assert_eq!(ta.next_obs, tb.next_obs);
            assert_eq!(ta.option_id, tb.option_id);
            assert_eq!(ta.success, tb.success);
        }
    }

    #[test]
    fn failed_attempts_leave_state_unchanged() {
        let mut env = make_corridor([0.0, 0.0], 7);
        let ds = collect(&mut env, 500, 1);
        for t in &ds.transitions {
            if !t.success {
                assert_eq!(t.state, t.next_state);
                assert_eq!(t.obs, t.next_obs);
            }
        }
    }

    #[test]
    fn successful_inward_starts_only_at_dead_ends() {
        let mut env = make_corridor([0.0, 0.0], 0);
        let ds = collect(&mut env, 1000, 0);
        let check = make_corridor([0.0, 0.0], 0);
        let mut seen = 0;
        for t in &ds.transitions {
            if t.option_id == INWARD && t.success {
                let node = check.node_of_state(&t.state).expect("on-graph state");
                assert!(node == 2 || node == 3, "Inward started at node {node}");
                seen += 1;
            }
        }
        assert!(seen > 20, "expected a healthy number of Inward successes");
    }

    #[test]
    fn abstract_graph_matches_dynamics() {
        let env = make_corridor([2.0, 1.0], 0);
        let g = env.abstract_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for ((from, option), to) in &g.edges {
            let mut probe = make_corridor([2.0, 1.0], 99);
            let start = env.sample_node_state(*from, &mut rng);
            probe.set_state(&start);
            let out = probe.execute(option);
            assert!(out.success, "{option} from node {from} should succeed");
            assert_eq!(probe.node_of_state(&probe.state()), Some(*to));
        }
    }
}
