//! Treasure-Maze: a continuous platformer maze with ladders, doors, levers,
//! a key/lock pair and a treasure. Ten levels of increasing size ship as
//! text maps (see `levels/README.md` for the legend). The discrete cell
//! dynamics are deterministic; positional jitter makes the problem space
//! genuinely continuous.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domains::oracle::{AbstractGraph, AbstractNode, DomainOracle};
use crate::env::{Environment, ExecOutcome, OptionDescriptor};
use crate::error::{Error, Result};

pub const GO_LEFT: &str = "GoLeft";
pub const GO_RIGHT: &str = "GoRight";
pub const UP_LADDER: &str = "UpLadder";
pub const DOWN_LADDER: &str = "DownLadder";
pub const INTERACT: &str = "Interact";

pub const OPTION_IDS: [&str; 5] = [GO_LEFT, GO_RIGHT, UP_LADDER, DOWN_LADDER, INTERACT];

/// 3x3 neighborhood cell codes plus the two bag bits.
pub const OBS_DIM: usize = 11;
pub const OBS_NOISE: f64 = 0.05;
const JITTER: f64 = 0.02;

pub const LEVEL_COUNT: usize = 10;
const LEVELS: [&str; LEVEL_COUNT] = [
    include_str!("../../levels/level0.txt"),
    include_str!("../../levels/level1.txt"),
    include_str!("../../levels/level2.txt"),
    include_str!("../../levels/level3.txt"),
    include_str!("../../levels/level4.txt"),
    include_str!("../../levels/level5.txt"),
    include_str!("../../levels/level6.txt"),
    include_str!("../../levels/level7.txt"),
    include_str!("../../levels/level8.txt"),
    include_str!("../../levels/level9.txt"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cell {
    Empty,
    Platform,
    Ladder,
    Door(u8),
    Lever(u8),
    Lock(u8),
    Key,
    Treasure,
}

/// Observation codes. Out-of-bounds renders as 9.
fn code_of(cell: Cell, open: bool, present: bool) -> f64 {
    match cell {
        Cell::Empty => 0.0,
        Cell::Platform => 1.0,
        Cell::Ladder => 2.0,
        Cell::Door(_) => {
            if open {
                4.0
            } else {
                3.0
            }
        }
        Cell::Lever(_) => 5.0,
        Cell::Key => {
            if present {
                6.0
            } else {
                0.0
            }
        }
        Cell::Lock(_) => 7.0,
        Cell::Treasure => {
            if present {
                8.0
            } else {
                0.0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreasureMazeTask {
    pub level_index: usize,
    pub cols: usize,
    pub rows: usize,
    pub grid: Vec<Cell>,
    pub start: (usize, usize),
    /// Lever order defines the lever-angle layout of the state vector.
    pub levers: Vec<((usize, usize), u8)>,
    pub doors: BTreeMap<u8, (usize, usize)>,
    pub lock: Option<((usize, usize), u8)>,
    pub key: Option<(usize, usize)>,
    pub treasure: (usize, usize),
    pub jitter: f64,
    pub seed: u64,
}

impl TreasureMazeTask {
    pub fn parse(level_index: usize, text: &str, seed: u64) -> Result<Self> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.is_empty() {
            return Err(Error::InvalidTask("empty level map".into()));
        }
        let cols = lines[0].len();
        let rows = lines.len();
        let mut grid = vec![Cell::Empty; cols * rows];
        let mut start = None;
        let mut levers = Vec::new();
        let mut doors = BTreeMap::new();
        let mut lock = None;
        let mut key = None;
        let mut treasure = None;
        for (r, line) in lines.iter().enumerate() {
            if line.len() != cols {
                return Err(Error::InvalidTask(format!(
                    "level row {r} has width {} but row 0 has {cols}",
                    line.len()
                )));
            }
            for (c, ch) in line.chars().enumerate() {
                let cell = match ch {
                    '#' => Cell::Platform,
                    '.' => Cell::Empty,
                    'H' => Cell::Ladder,
                    'S' => {
                        start = Some((c, r));
                        Cell::Empty
                    }
                    'k' => {
                        key = Some((c, r));
                        Cell::Key
                    }
                    'T' => {
                        treasure = Some((c, r));
                        Cell::Treasure
                    }
                    '0'..='2' => {
                        let id = ch as u8 - b'0';
                        doors.insert(id, (c, r));
                        Cell::Door(id)
                    }
                    'a'..='c' => {
                        let id = ch as u8 - b'a';
                        levers.push(((c, r), id));
                        Cell::Lever(id)
                    }
                    'A'..='C' => {
                        let id = ch as u8 - b'A';
                        lock = Some(((c, r), id));
                        Cell::Lock(id)
                    }
                    other => {
                        return Err(Error::InvalidTask(format!(
                            "unknown map character `{other}` at {c},{r}"
                        )))
                    }
                };
                grid[r * cols + c] = cell;
            }
        }
        let start = start.ok_or_else(|| Error::InvalidTask("level has no start `S`".into()))?;
        let treasure =
            treasure.ok_or_else(|| Error::InvalidTask("level has no treasure `T`".into()))?;
        // Every door id must have exactly one opener, and every opener a door.
        let mut openers: BTreeMap<u8, usize> = BTreeMap::new();
        for (_, id) in &levers {
            *openers.entry(*id).or_default() += 1;
        }
        if let Some((_, id)) = lock {
            *openers.entry(id).or_default() += 1;
        }
        for (id, count) in &openers {
            if *count != 1 || !doors.contains_key(id) {
                return Err(Error::InvalidTask(format!(
                    "door {id} needs exactly one opener and one door cell"
                )));
            }
        }
        for id in doors.keys() {
            if !openers.contains_key(id) {
                return Err(Error::InvalidTask(format!("door {id} has no opener")));
            }
        }
        if lock.is_some() && key.is_none() {
            return Err(Error::InvalidTask("lock present but no key".into()));
        }
        Ok(TreasureMazeTask {
            level_index,
            cols,
            rows,
            grid,
            start,
            levers,
            doors,
            lock,
            key,
            treasure,
            jitter: JITTER,
            seed,
        })
    }

    fn cell(&self, c: isize, r: isize) -> Option<Cell> {
        if c < 0 || r < 0 || c as usize >= self.cols || r as usize >= self.rows {
            return None;
        }
        Some(self.grid[r as usize * self.cols + c as usize])
    }

    pub fn state_dim(&self) -> usize {
        // agent xy, key xy, treasure xy, lever angles, lock state
        7 + self.levers.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KeyState {
    Absent,
    OnMap,
    Carried,
    Used,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AbstractState {
    pub agent: (usize, usize),
    pub levers_open: u8,
    pub key: KeyState,
    pub lock_used: bool,
    pub has_treasure: bool,
}

impl AbstractState {
    fn initial(task: &TreasureMazeTask) -> Self {
        AbstractState {
            agent: task.start,
            levers_open: 0,
            key: if task.key.is_some() {
                KeyState::OnMap
            } else {
                KeyState::Absent
            },
            lock_used: false,
            has_treasure: false,
        }
    }

    pub fn lever_open(&self, idx: usize) -> bool {
        self.levers_open & (1 << idx) != 0
    }
}

fn door_open(task: &TreasureMazeTask, st: &AbstractState, id: u8) -> bool {
    if let Some(pos) = task.levers.iter().position(|(_, d)| *d == id) {
        return st.lever_open(pos);
    }
    if let Some((_, lock_id)) = task.lock {
        if lock_id == id {
            return st.lock_used;
        }
    }
    false
}

fn passable(task: &TreasureMazeTask, st: &AbstractState, c: isize, r: isize) -> bool {
    match task.cell(c, r) {
        None | Some(Cell::Platform) => false,
        Some(Cell::Door(id)) => door_open(task, st, id),
        Some(_) => true,
    }
}

fn supported(task: &TreasureMazeTask, st: &AbstractState, c: isize, r: isize) -> bool {
    matches!(
        task.cell(c, r + 1),
        Some(Cell::Platform) | Some(Cell::Ladder)
    ) || matches!(task.cell(c, r + 1), Some(Cell::Door(id)) if !door_open(task, st, id))
}

/// Whether walking stops upon entering this cell.
fn walk_stop(task: &TreasureMazeTask, st: &AbstractState, c: usize, r: usize) -> bool {
    match task.cell(c as isize, r as isize) {
        Some(Cell::Ladder) | Some(Cell::Lever(_)) | Some(Cell::Lock(_)) => true,
        Some(Cell::Key) => st.key == KeyState::OnMap,
        Some(Cell::Treasure) => !st.has_treasure,
        _ => false,
    }
}

/// Deterministic cell-level dynamics shared by the environment and the
/// oracle's reachability search. `None` means the attempt fails.
pub fn abstract_step(
    task: &TreasureMazeTask,
    st: &AbstractState,
    option_id: &str,
) -> Option<AbstractState> {
    let (ac, ar) = (st.agent.0 as isize, st.agent.1 as isize);
    match option_id {
        GO_LEFT | GO_RIGHT => {
            let dc: isize = if option_id == GO_RIGHT { 1 } else { -1 };
            let mut c = ac;
            for _ in 0..task.cols {
                let nc = c + dc;
                if !passable(task, st, nc, ar) || !supported(task, st, nc, ar) {
                    break;
                }
                c = nc;
                if walk_stop(task, st, c as usize, ar as usize) {
                    break;
                }
            }
            (c != ac).then(|| AbstractState {
                agent: (c as usize, ar as usize),
                ..*st
            })
        }
        UP_LADDER => {
            if task.cell(ac, ar) != Some(Cell::Ladder) {
                return None;
            }
            let mut r = ar;
            while task.cell(ac, r) == Some(Cell::Ladder) && passable(task, st, ac, r - 1) {
                r -= 1;
                if task.cell(ac, r) != Some(Cell::Ladder) {
                    break;
                }
            }
            (r != ar).then(|| AbstractState {
                agent: (ac as usize, r as usize),
                ..*st
            })
        }
        DOWN_LADDER => {
            if task.cell(ac, ar + 1) != Some(Cell::Ladder) {
                return None;
            }
            let mut r = ar;
            while task.cell(ac, r + 1) == Some(Cell::Ladder) {
                r += 1;
            }
            (r != ar).then(|| AbstractState {
                agent: (ac as usize, r as usize),
                ..*st
            })
        }
        INTERACT => match task.cell(ac, ar) {
            Some(Cell::Lever(_)) => {
                let idx = task
                    .levers
                    .iter()
                    .position(|((c, r), _)| (*c as isize, *r as isize) == (ac, ar))?;
                Some(AbstractState {
                    levers_open: st.levers_open ^ (1 << idx),
                    ..*st
                })
            }
            Some(Cell::Key) if st.key == KeyState::OnMap => Some(AbstractState {
                key: KeyState::Carried,
                ..*st
            }),
            Some(Cell::Lock(_)) if st.key == KeyState::Carried && !st.lock_used => {
                Some(AbstractState {
                    key: KeyState::Used,
                    lock_used: true,
                    ..*st
                })
            }
            Some(Cell::Treasure) if !st.has_treasure => Some(AbstractState {
                has_treasure: true,
                ..*st
            }),
            _ => None,
        },
        _ => None,
    }
}

pub struct TreasureEnv {
    task: TreasureMazeTask,
    task_id: String,
    options: Vec<OptionDescriptor>,
    abstract_state: AbstractState,
    /// Continuous problem-space coordinates, refreshed with jitter whenever
    /// the abstract state changes.
    continuous: Vec<f64>,
    rng: ChaCha8Rng,
    reach_order: Vec<AbstractState>,
    reach_index: HashMap<AbstractState, usize>,
}

pub fn make_treasure(level_index: usize) -> Result<TreasureEnv> {
    make_treasure_seeded(level_index, 0)
}

pub fn make_treasure_seeded(level_index: usize, seed: u64) -> Result<TreasureEnv> {
    if level_index >= LEVEL_COUNT {
        return Err(Error::InvalidTask(format!(
            "level_index {level_index} out of range; valid levels are 0..{}",
            LEVEL_COUNT - 1
        )));
    }
    let task = TreasureMazeTask::parse(level_index, LEVELS[level_index], seed)?;
    Ok(TreasureEnv::new(task))
}

impl TreasureEnv {
    pub fn new(task: TreasureMazeTask) -> Self {
        let options = OPTION_IDS
            .iter()
            .map(|o| OptionDescriptor {
                option_id: o.to_string(),
                name: o.to_string(),
            })
            .collect();
        let rng = ChaCha8Rng::seed_from_u64(task.seed);
        let task_id = format!("treasure(level={};seed={})", task.level_index, task.seed);
        let abstract_state = AbstractState::initial(&task);
        let (reach_order, reach_index) = reachable_states(&task);
        let mut env = TreasureEnv {
            continuous: vec![0.0; task.state_dim()],
            abstract_state,
            rng,
            options,
            task_id,
            task,
            reach_order,
            reach_index,
        };
        env.render_continuous();
        env
    }

    pub fn task(&self) -> &TreasureMazeTask {
        &self.task
    }

    pub fn abstract_state(&self) -> &AbstractState {
        &self.abstract_state
    }

    fn jit(&mut self) -> f64 {
        let n: f64 = self.rng.sample(StandardNormal);
        n * self.task.jitter
    }

    /// Exact (jitter-free) coordinates of an abstract state.
    fn exact_continuous(task: &TreasureMazeTask, st: &AbstractState) -> Vec<f64> {
        let mut v = Vec::with_capacity(task.state_dim());
        v.push(st.agent.0 as f64);
        v.push(st.agent.1 as f64);
        let key_pos = match st.key {
            KeyState::Absent => (-1.0, -1.0),
            KeyState::OnMap => {
                let (c, r) = task.key.expect("key cell");
                (c as f64, r as f64)
            }
            KeyState::Carried => (-2.0, -2.0),
            KeyState::Used => (-3.0, -3.0),
        };
        v.push(key_pos.0);
        v.push(key_pos.1);
        let tre_pos = if st.has_treasure {
            (-2.0, -2.0)
        } else {
            (task.treasure.0 as f64, task.treasure.1 as f64)
        };
        v.push(tre_pos.0);
        v.push(tre_pos.1);
        for idx in 0..task.levers.len() {
            v.push(if st.lever_open(idx) { 1.0 } else { 0.0 });
        }
        v.push(if st.lock_used { 1.0 } else { 0.0 });
        v
    }

    fn render_continuous(&mut self) {
        let exact = Self::exact_continuous(&self.task, &self.abstract_state);
        self.continuous = exact.into_iter().map(|x| x + self.jit()).collect();
    }

    /// Reconstruct the abstract state from a continuous state vector.
    fn abstract_of(task: &TreasureMazeTask, state: &[f64]) -> AbstractState {
        let cell = |x: f64, y: f64| -> (usize, usize) {
            (
                (x.round().max(0.0) as usize).min(task.cols - 1),
                (y.round().max(0.0) as usize).min(task.rows - 1),
            )
        };
        let agent = cell(state[0], state[1]);
        let key = if task.key.is_none() {
            KeyState::Absent
        } else {
            let kx = state[2].round() as i64;
            match kx {
                -2 => KeyState::Carried,
                -3 => KeyState::Used,
                _ => KeyState::OnMap,
            }
        };
        let has_treasure = state[4].round() as i64 == -2;
        let mut levers_open = 0u8;
        for idx in 0..task.levers.len() {
            if state[6 + idx].round() as i64 == 1 {
                levers_open |= 1 << idx;
            }
        }
        let lock_used = state[6 + task.levers.len()].round() as i64 == 1;
        AbstractState {
            agent,
            levers_open,
            key,
            lock_used,
            has_treasure,
        }
    }

    fn obs_of(task: &TreasureMazeTask, st: &AbstractState) -> Vec<f64> {
        let (ac, ar) = (st.agent.0 as isize, st.agent.1 as isize);
        let mut obs = Vec::with_capacity(OBS_DIM);
        for dr in -1..=1 {
            for dc in -1..=1 {
                let code = match task.cell(ac + dc, ar + dr) {
                    None => 9.0,
                    Some(cell) => {
                        let open = match cell {
                            Cell::Door(id) => door_open(task, st, id),
                            _ => false,
                        };
                        let present = match cell {
                            Cell::Key => st.key == KeyState::OnMap,
                            Cell::Treasure => !st.has_treasure,
                            _ => false,
                        };
                        code_of(cell, open, present)
                    }
                };
                obs.push(code);
            }
        }
        obs.push(if st.key == KeyState::Carried { 1.0 } else { 0.0 });
        obs.push(if st.has_treasure { 1.0 } else { 0.0 });
        obs
    }
}

impl Environment for TreasureEnv {
    fn family(&self) -> &str {
        "treasure"
    }

    fn task_id(&self) -> &str {
        &self.task_id
    }

    fn options(&self) -> &[OptionDescriptor] {
        &self.options
    }

    fn state(&self) -> Vec<f64> {
        self.continuous.clone()
    }

    fn set_state(&mut self, state: &[f64]) {
        self.abstract_state = Self::abstract_of(&self.task, state);
        self.continuous = state.to_vec();
    }

    fn observe(&mut self) -> Vec<f64> {
        let mut obs = Self::obs_of(&self.task, &self.abstract_state);
        for x in obs.iter_mut() {
            let n: f64 = self.rng.sample(StandardNormal);
            *x += n * OBS_NOISE;
        }
        obs
    }

    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn obs_noise(&self) -> Vec<f64> {
        vec![OBS_NOISE; OBS_DIM]
    }

    fn execute(&mut self, option_id: &str) -> ExecOutcome {
        let before = self.abstract_state.agent;
        match abstract_step(&self.task, &self.abstract_state, option_id) {
            Some(next) => {
                let steps = (next.agent.0 as i64 - before.0 as i64).unsigned_abs()
                    + (next.agent.1 as i64 - before.1 as i64).unsigned_abs();
                self.abstract_state = next;
                self.render_continuous();
                ExecOutcome {
                    success: true,
                    duration: steps.max(1) as u32,
                    reward: -0.1 * steps.max(1) as f64
                        + if next.has_treasure { 1.0 } else { 0.0 },
                }
            }
            None => ExecOutcome::failure(),
        }
    }

    fn reset(&mut self) {
        self.abstract_state = AbstractState::initial(&self.task);
        self.render_continuous();
    }
}

fn reachable_states(task: &TreasureMazeTask) -> (Vec<AbstractState>, HashMap<AbstractState, usize>) {
    let initial = AbstractState::initial(task);
    let mut order = vec![initial];
    let mut index = HashMap::from([(initial, 0usize)]);
    let mut queue = VecDeque::from([initial]);
    while let Some(st) = queue.pop_front() {
        for option in OPTION_IDS {
            if let Some(next) = abstract_step(task, &st, option) {
                if !index.contains_key(&next) {
                    index.insert(next, order.len());
                    order.push(next);
                    queue.push_back(next);
                }
            }
        }
    }
    (order, index)
}

impl DomainOracle for TreasureEnv {
    fn abstract_graph(&self) -> AbstractGraph {
        let mut graph = AbstractGraph::default();
        for (i, st) in self.reach_order.iter().enumerate() {
            graph.nodes.push(AbstractNode {
                name: format!(
                    "a{},{}-l{}-k{:?}-t{}",
                    st.agent.0, st.agent.1, st.levers_open, st.key, u8::from(st.has_treasure)
                ),
                anchor: TreasureEnv::exact_continuous(&self.task, st),
            });
            for option in OPTION_IDS {
                if let Some(next) = abstract_step(&self.task, st, option) {
                    graph
                        .edges
                        .insert((i, option.to_string()), self.reach_index[&next]);
                }
            }
        }
        graph
    }

    fn node_of_state(&self, state: &[f64]) -> Option<usize> {
        let st = Self::abstract_of(&self.task, state);
        self.reach_index.get(&st).copied()
    }

    fn sample_node_state(&self, node: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let exact = Self::exact_continuous(&self.task, &self.reach_order[node]);
        exact
            .into_iter()
            .map(|x| {
                let n: f64 = rng.sample(StandardNormal);
                x + n * self.task.jitter
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_level_index_reports_range() {
        let msg = match make_treasure(10) {
            Err(e) => e.to_string(),
            Ok(_) => panic!("level 10 should not exist"),
        };
        assert!(msg.contains("0..9"), "message: {msg}");
    }

    #[test]
    fn down_ladder_descends_to_ladder_base() {
        let mut env = make_treasure(0).unwrap();
        assert!(env.execute(GO_RIGHT).success); // walk to the ladder top
        assert_eq!(env.abstract_state().agent, (3, 1));
        assert!(env.execute(DOWN_LADDER).success);
        assert_eq!(env.abstract_state().agent, (3, 3));
    }

    #[test]
    fn interact_with_empty_surroundings_fails() {
        let mut env = make_treasure(0).unwrap();
        let before = env.state();
        assert!(!env.execute(INTERACT).success);
        assert_eq!(env.state(), before);
    }

    #[test]
    fn scripted_solve_of_level_0_picks_up_treasure() {
        let mut env = make_treasure(0).unwrap();
        for option in [GO_RIGHT, DOWN_LADDER, GO_RIGHT, INTERACT] {
            let out = env.execute(option);
            assert!(out.success, "{option} failed");
        }
        assert!(env.abstract_state().has_treasure);
        let obs = env.observe();
        assert!(obs[10] > 0.5, "has-treasure bit set in obs: {obs:?}");
    }

    #[test]
    fn every_level_reaches_treasure() {
        for level in 0..LEVEL_COUNT {
            let env = make_treasure(level).unwrap();
            let (states, _) = reachable_states(env.task());
            assert!(
                states.iter().any(|s| s.has_treasure),
                "level {level} cannot reach the treasure"
            );
        }
    }

    #[test]
    fn obs_dimension_constant_across_levels() {
        for level in 0..LEVEL_COUNT {
            let mut env = make_treasure(level).unwrap();
            assert_eq!(env.observe().len(), OBS_DIM);
        }
    }

    #[test]
    fn state_round_trips_through_set_state() {
        let mut env = make_treasure(4).unwrap();
        for option in [GO_RIGHT, UP_LADDER, GO_LEFT, INTERACT] {
            env.execute(option);
        }
        let state = env.state();
        let abstract_before = *env.abstract_state();
        let mut other = make_treasure(4).unwrap();
        other.set_state(&state);
        assert_eq!(*other.abstract_state(), abstract_before);
        assert_eq!(other.state(), state);
    }

    #[test]
    fn abstract_graph_edges_replay_on_env() {
        let env = make_treasure(1).unwrap();
        let g = env.abstract_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        for ((from, option), to) in g.edges.iter().take(200) {
            let mut probe = make_treasure(1).unwrap();
            let start = env.sample_node_state(*from, &mut rng);
            probe.set_state(&start);
            let out = probe.execute(option);
            assert!(out.success, "{option} from node {from}");
            assert_eq!(probe.node_of_state(&probe.state()), Some(*to));
            checked += 1;
        }
        assert!(checked > 10);
    }
}
