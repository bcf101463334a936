//! Transition records, dataset collection, and the line-delimited dataset
//! file format.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};

/// One option execution: problem-space state, egocentric observation, option,
/// success flag, successors, SMDP duration, and the (unused) reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub task_id: String,
    pub option_id: String,
    pub success: bool,
    pub duration: u32,
    pub reward: f64,
    pub state: Vec<f64>,
    pub obs: Vec<f64>,
    pub next_state: Vec<f64>,
    pub next_obs: Vec<f64>,
}

/// Ordered collection of transitions from one domain family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub domain_family: String,
    pub rng_seed: u64,
    /// Per-dimension sensor noise scale of the observation space, as declared
    /// by the producing environment (used by the effect-mask rule).
    pub obs_noise: Vec<f64>,
    pub transitions: Vec<Transition>,
}

impl Dataset {
    pub fn new(domain_family: impl Into<String>, rng_seed: u64, obs_noise: Vec<f64>) -> Self {
        Dataset {
            domain_family: domain_family.into(),
            rng_seed,
            obs_noise,
            transitions: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.transitions
            .first()
            .map_or(self.obs_noise.len(), |t| t.obs.len())
    }

    /// Indices of successful transitions for one option.
    pub fn successes_of(&self, option_id: &str) -> Vec<usize> {
        self.transitions
            .iter()
            .enumerate()
            .filter(|(_, t)| t.success && t.option_id == option_id)
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of failed attempts for one option.
    pub fn failures_of(&self, option_id: &str) -> Vec<usize> {
        self.transitions
            .iter()
            .enumerate()
            .filter(|(_, t)| !t.success && t.option_id == option_id)
            .map(|(i, _)| i)
            .collect()
    }

    /// Option ids present in the dataset, in first-appearance order.
    pub fn option_ids(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for t in &self.transitions {
            if !seen.contains(&t.option_id) {
                seen.push(t.option_id.clone());
            }
        }
        seen
    }

    pub fn extend(&mut self, other: Dataset) {
        self.transitions.extend(other.transitions);
    }

    /// A view of this dataset with the problem-space state standing in for
    /// the observation, so the whole learning stack can be run task-
    /// specifically in problem space. The noise declaration is replaced by a
    /// 1%-of-range estimate per state dimension.
    pub fn problem_space_view(&self) -> Dataset {
        let starts: Vec<&[f64]> = self
            .transitions
            .iter()
            .map(|t| t.state.as_slice())
            .collect();
        let noise: Vec<f64> = crate::math::ranges(&starts)
            .iter()
            .map(|r| (0.01 * r).max(1e-6))
            .collect();
        let transitions = self
            .transitions
            .iter()
            .map(|t| Transition {
                task_id: t.task_id.clone(),
                option_id: t.option_id.clone(),
                success: t.success,
                duration: t.duration,
                reward: t.reward,
                state: t.state.clone(),
                obs: t.state.clone(),
                next_state: t.next_state.clone(),
                next_obs: t.next_state.clone(),
            })
            .collect();
        Dataset {
            domain_family: self.domain_family.clone(),
            rng_seed: self.rng_seed,
            obs_noise: noise,
            transitions,
        }
    }
}

/// Gather exactly `budget` transitions by repeatedly sampling an option
/// uniformly from those whose initiation condition holds and attempting it.
/// Failed attempts are recorded with `success = false` and unchanged state;
/// they are the negative examples for precondition learning. If no option is
/// executable the environment resets and collection continues. Deterministic
/// given the environment descriptor and `seed`.
pub fn collect(env: &mut dyn Environment, budget: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = Dataset::new(env.family(), seed, env.obs_noise());
    let mut state = env.state();
    let mut obs = env.observe();
    while ds.transitions.len() < budget {
        let executable = env.executable_options();
        if executable.is_empty() {
            env.reset();
            state = env.state();
            obs = env.observe();
            continue;
        }
        let option_id = executable[rng.gen_range(0..executable.len())].clone();
        let outcome = env.execute(&option_id);
        let (next_state, next_obs) = if outcome.success {
            (env.state(), env.observe())
        } else {
            (state.clone(), obs.clone())
        };
        ds.transitions.push(Transition {
            task_id: env.task_id().to_string(),
            option_id,
            success: outcome.success,
            duration: outcome.duration,
            reward: outcome.reward,
            state: state.clone(),
            obs: obs.clone(),
            next_state: next_state.clone(),
            next_obs: next_obs.clone(),
        });
        state = next_state;
        obs = next_obs;
    }
    ds
}

// -------------------------------------------------------------------------
// File format: one header line, then one whitespace-separated record per
// transition. Floats use Rust's shortest round-trip decimal encoding, so a
// save/load cycle is bit-identical. Column order per record:
//   task_id option_id success duration reward state_dim
//   state[0..sd] obs[0..od] next_state[0..sd] next_obs[0..od]
// where od is declared once in the header (constant per family) and sd may
// vary per record (tasks of one family may differ in state dimension).
// -------------------------------------------------------------------------

const MAGIC: &str = "egosym-dataset";
const VERSION: &str = "v1";

pub fn save(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let noise = ds
        .obs_noise
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",");
    writeln!(
        out,
        "{MAGIC} {VERSION} family={} obs_dim={} seed={} noise={}",
        ds.domain_family,
        ds.obs_dim(),
        ds.rng_seed,
        noise
    )
    .expect("write to string");
    for t in &ds.transitions {
        write!(
            out,
            "{} {} {} {} {} {}",
            t.task_id,
            t.option_id,
            u8::from(t.success),
            t.duration,
            t.reward,
            t.state.len()
        )
        .expect("write to string");
        for v in t
            .state
            .iter()
            .chain(&t.obs)
            .chain(&t.next_state)
            .chain(&t.next_obs)
        {
            write!(out, " {v}").expect("write to string");
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let display = path.display().to_string();
    parse_reader(reader, &display)
}

pub fn parse_str(text: &str, origin: &str) -> Result<Dataset> {
    parse_reader(BufReader::new(text.as_bytes()), origin)
}

fn parse_reader(reader: impl BufRead, origin: &str) -> Result<Dataset> {
    let perr = |line: usize, message: String| Error::DatasetParse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| perr(1, "empty file: missing header".into()))?;
    let header = header.map_err(|e| perr(1, e.to_string()))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() < 2 || head[0] != MAGIC || head[1] != VERSION {
        return Err(perr(
            1,
            format!("expected header `{MAGIC} {VERSION} ...`, found `{header}`"),
        ));
    }
    let mut family = None;
    let mut obs_dim = None;
    let mut seed = 0u64;
    let mut noise: Vec<f64> = Vec::new();
    for kv in &head[2..] {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| perr(1, format!("malformed header field `{kv}`")))?;
        match k {
            "family" => family = Some(v.to_string()),
            "obs_dim" => {
                obs_dim = Some(v.parse::<usize>().map_err(|e| perr(1, e.to_string()))?)
            }
            "seed" => seed = v.parse::<u64>().map_err(|e| perr(1, e.to_string()))?,
            "noise" => {
                if !v.is_empty() {
                    for part in v.split(',') {
                        noise.push(part.parse::<f64>().map_err(|e| perr(1, e.to_string()))?);
                    }
                }
            }
            _ => return Err(perr(1, format!("unknown header field `{k}`"))),
        }
    }
    let family = family.ok_or_else(|| perr(1, "header missing `family`".into()))?;
    let obs_dim = obs_dim.ok_or_else(|| perr(1, "header missing `obs_dim`".into()))?;

    let mut ds = Dataset::new(family, seed, noise);
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| perr(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 6 {
            return Err(perr(
                lineno,
                format!("record needs at least 6 fields, found {}", toks.len()),
            ));
        }
        let success = match toks[2] {
            "0" => false,
            "1" => true,
            other => return Err(perr(lineno, format!("bad success flag `{other}`"))),
        };
        let duration: u32 = toks[3]
            .parse()
            .map_err(|e| perr(lineno, format!("bad duration: {e}")))?;
        let reward: f64 = toks[4]
            .parse()
            .map_err(|e| perr(lineno, format!("bad reward: {e}")))?;
        let sd: usize = toks[5]
            .parse()
            .map_err(|e| perr(lineno, format!("bad state_dim: {e}")))?;
        let expected = 6 + 2 * sd + 2 * obs_dim;
        if toks.len() != expected {
            return Err(Error::DatasetValidation {
                path: origin.to_string(),
                line: lineno,
                message: format!(
                    "expected {expected} fields for state_dim={sd}, obs_dim={obs_dim}; found {}",
                    toks.len()
                ),
            });
        }
        let mut vals = Vec::with_capacity(2 * sd + 2 * obs_dim);
        for tok in &toks[6..] {
            vals.push(
                tok.parse::<f64>()
                    .map_err(|e| perr(lineno, format!("bad float `{tok}`: {e}")))?,
            );
        }
        let state = vals[..sd].to_vec();
        let obs = vals[sd..sd + obs_dim].to_vec();
        let next_state = vals[sd + obs_dim..2 * sd + obs_dim].to_vec();
        let next_obs = vals[2 * sd + obs_dim..].to_vec();
        ds.transitions.push(Transition {
            task_id: toks[0].to_string(),
            option_id: toks[1].to_string(),
            success,
            duration,
            reward,
            state,
            obs,
            next_state,
            next_obs,
        });
    }
    Ok(ds)
}
