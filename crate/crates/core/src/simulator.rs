//! Generative simulator for network evolution under preferential attachment.
//!
//! Each step draws, for every existing vertex, an external, internal and
//! deletion increment with Poisson means `μ·g̃(k)`. External edges come from
//! brand-new vertices, internal edges from existing vertices chosen
//! uniformly, and deletions remove uniformly chosen in-edges.

use std::collections::HashSet;

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preference::{normalized_weights, PreferenceParams};
use crate::store::{Action, Category, EdgeEvent, EvolutionLog};

const SOURCE_RETRIES: usize = 100;

/// Poisson rate and preference function of one increment category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Process {
    pub rate: f64,
    pub params: PreferenceParams<f64>,
}

impl Process {
    pub fn new(rate: f64, params: PreferenceParams<f64>) -> Self {
        Self { rate, params }
    }

    /// A category that never fires.
    pub fn off() -> Self {
        Self { rate: 0.0, params: PreferenceParams::power(1.0, 0.0).expect("valid") }
    }
}

/// Initial graph built at the first snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SeedGraph {
    /// `i -> i+1 (mod n0)`: every seed vertex has in-degree 1.
    Ring,
    /// Vertex `i` links to `min(m, i)` earlier vertices chosen with
    /// probability proportional to in-degree + 1, giving heterogeneous degrees.
    Preferential { edges_per_vertex: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n0: usize,
    pub steps: usize,
    pub external: Process,
    pub internal: Process,
    pub deletion: Process,
    pub seed: u64,
    pub seed_graph: SeedGraph,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
    #[serde(default = "default_dep_type")]
    pub dep_type: String,
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date")
}

fn default_dep_type() -> String {
    "Imports".into()
}

impl SimConfig {
    /// External increments only, from a ring of `n0` vertices.
    pub fn external_only(n0: usize, steps: usize, rate: f64, params: PreferenceParams<f64>, seed: u64) -> Self {
        Self {
            n0,
            steps,
            external: Process::new(rate, params),
            internal: Process::off(),
            deletion: Process::off(),
            seed,
            seed_graph: SeedGraph::Ring,
            start_date: default_start(),
            dep_type: default_dep_type(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n0 < 2 {
            return Err(Error::InvalidConfig("n0 must be at least 2 so seed vertices have edges".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be at least 1".into()));
        }
        for (name, p) in [("external", &self.external), ("internal", &self.internal), ("deletion", &self.deletion)] {
            if !(p.rate >= 0.0 && p.rate.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} rate must be non-negative")));
            }
            p.params.validate()?;
        }
        if let SeedGraph::Preferential { edges_per_vertex: 0 } = self.seed_graph {
            return Err(Error::InvalidConfig("seed graph needs at least one edge per vertex".into()));
        }
        Ok(())
    }
}

/// How a category's total is split across vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Allocation {
    /// Independent Poisson draws with means `μ·g̃_i`.
    IndependentPoisson,
    /// `M ~ Poisson(μ)` then a multinomial split with probabilities `g̃_i`.
    Multinomial,
}

/// Realised increments of the existing vertices at one step with events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepDraws {
    pub date: NaiveDate,
    /// Names of the existing vertices, in the order of the vectors below.
    pub vertices: Vec<String>,
    pub internal: Vec<u32>,
    pub external: Vec<u32>,
    pub deletion: Vec<u32>,
}

impl StepDraws {
    pub fn of(&self, category: Category) -> &[u32] {
        match category {
            Category::Internal => &self.internal,
            Category::External => &self.external,
            Category::Deletion => &self.deletion,
        }
    }
}

/// Incremental simulator; processes can be swapped between steps.
pub struct Simulator {
    cfg: SimConfig,
    allocation: Allocation,
    rng: ChaCha8Rng,
    in_edges: Vec<Vec<u32>>,
    edges: HashSet<(u32, u32)>,
    date: NaiveDate,
    events: Vec<EdgeEvent>,
    draws: Vec<StepDraws>,
}

fn name(v: u32) -> String {
    format!("v{v}")
}

/// Splits a Poisson(`rate`) total over vertices with normalised weights `w`.
pub fn allocate<R: Rng + ?Sized>(rng: &mut R, w: &[f64], rate: f64, allocation: Allocation) -> Vec<u32> {
    if rate <= 0.0 || w.is_empty() {
        return vec![0; w.len()];
    }
    match allocation {
        Allocation::IndependentPoisson => w
            .iter()
            .map(|&wi| {
                let m = rate * wi;
                if m > 0.0 {
                    Poisson::new(m).expect("positive mean").sample(rng) as u32
                } else {
                    0
                }
            })
            .collect(),
        Allocation::Multinomial => {
            let total = Poisson::new(rate).expect("positive mean").sample(rng) as u32;
            let mut out = vec![0; w.len()];
            if total > 0 {
                let idx = WeightedIndex::new(w).expect("weights sum to one");
                for _ in 0..total {
                    out[idx.sample(rng)] += 1;
                }
            }
            out
        }
    }
}

impl Simulator {
    pub fn new(cfg: SimConfig, allocation: Allocation) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let n0 = cfg.n0;
        let mut sim_edges = Vec::new();
        match cfg.seed_graph {
            SeedGraph::Ring => {
                for i in 0..n0 {
                    sim_edges.push((i as u32, ((i + 1) % n0) as u32));
                }
            }
            SeedGraph::Preferential { edges_per_vertex } => {
                let mut indeg = vec![0u32; n0];
                for i in 1..n0 {
                    let mut chosen: Vec<usize> = Vec::new();
                    let m = edges_per_vertex.min(i);
                    while chosen.len() < m {
                        let w: Vec<f64> =
                            (0..i).map(|j| if chosen.contains(&j) { 0.0 } else { indeg[j] as f64 + 1.0 }).collect();
                        let j = WeightedIndex::new(&w).expect("positive weights").sample(&mut rng);
                        chosen.push(j);
                    }
                    for j in chosen {
                        indeg[j] += 1;
                        sim_edges.push((i as u32, j as u32));
                    }
                }
            }
        }

        let start = cfg.start_date;
        let seed_date = start + Days::new(1);
        let mut in_edges = vec![Vec::new(); n0];
        let mut edges = HashSet::new();
        sim_edges.sort_by_key(|&(s, d)| (s.max(d), s.min(d)));
        let mut events = Vec::with_capacity(sim_edges.len());
        for (s, d) in sim_edges {
            in_edges[d as usize].push(s);
            edges.insert((s, d));
            events.push(EdgeEvent::new(name(s), name(d), cfg.dep_type.clone(), Action::Added, start, seed_date));
        }
        Ok(Self { cfg, allocation, rng, in_edges, edges, date: seed_date, events, draws: Vec::new() })
    }

    pub fn num_vertices(&self) -> usize {
        self.in_edges.len()
    }

    pub fn in_degrees(&self) -> Vec<u32> {
        self.in_edges.iter().map(|e| e.len() as u32).collect()
    }

    pub fn set_process(&mut self, category: Category, process: Process) {
        match category {
            Category::Internal => self.cfg.internal = process,
            Category::External => self.cfg.external = process,
            Category::Deletion => self.cfg.deletion = process,
        }
    }

    fn draw(&mut self, process: Process, degrees: &[u32]) -> Result<Vec<u32>> {
        if process.rate <= 0.0 {
            return Ok(vec![0; degrees.len()]);
        }
        let w = normalized_weights(degrees, &process.params)?;
        Ok(allocate(&mut self.rng, &w, process.rate, self.allocation))
    }

    /// Advances one time step.
    pub fn step(&mut self) -> Result<()> {
        let n_prev = self.in_edges.len();
        let degrees = self.in_degrees();
        let prev_date = self.date;
        self.date = self.date + Days::new(1);
        let curr_date = self.date;
        let dep_type = self.cfg.dep_type.clone();
        let mut step_events = Vec::new();
        let mut push = |s: u32, d: u32, action| {
            step_events.push(EdgeEvent::new(name(s), name(d), dep_type.clone(), action, prev_date, curr_date));
        };

        let external = self.draw(self.cfg.external, &degrees)?;
        for (i, &y) in external.iter().enumerate() {
            for _ in 0..y {
                let v = self.in_edges.len() as u32;
                self.in_edges.push(Vec::new());
                self.in_edges[i].push(v);
                self.edges.insert((v, i as u32));
                push(v, i as u32, Action::Added);
            }
        }

        let mut internal = self.draw(self.cfg.internal, &degrees)?;
        for (i, x) in internal.iter_mut().enumerate() {
            let target = i as u32;
            let mut placed = 0;
            for _ in 0..*x {
                let source = (0..SOURCE_RETRIES).find_map(|_| {
                    let u = self.rng.gen_range(0..n_prev) as u32;
                    (u != target && !self.edges.contains(&(u, target))).then_some(u)
                });
                match source {
                    Some(u) => {
                        self.edges.insert((u, target));
                        self.in_edges[i].push(u);
                        push(u, target, Action::Added);
                        placed += 1;
                    }
                    None => log::warn!("dropped internal edge into {} after {SOURCE_RETRIES} retries", name(target)),
                }
            }
            *x = placed;
        }

        let mut deletion = self.draw(self.cfg.deletion, &degrees)?;
        for (i, z) in deletion.iter_mut().enumerate() {
            *z = (*z).min(degrees[i]);
            if *z == 0 {
                continue;
            }
            // Only edges present before this step can be removed.
            let old: Vec<u32> = self.in_edges[i][..degrees[i] as usize].to_vec();
            let removed: Vec<u32> = old.choose_multiple(&mut self.rng, *z as usize).copied().collect();
            self.in_edges[i].retain(|u| !removed.contains(u));
            for u in removed {
                self.edges.remove(&(u, i as u32));
                push(u, i as u32, Action::Removed);
            }
        }

        if !step_events.is_empty() {
            self.events.extend(step_events);
            self.draws.push(StepDraws {
                date: curr_date,
                vertices: (0..n_prev as u32).map(name).collect(),
                internal,
                external,
                deletion,
            });
        }
        Ok(())
    }

    pub fn run(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    pub fn events(&self) -> &[EdgeEvent] {
        &self.events
    }

    /// Finishes the run, returning the log and the realised draws of every
    /// step that produced events.
    pub fn finish(self) -> Result<(EvolutionLog, Vec<StepDraws>)> {
        Ok((EvolutionLog::from_events(self.events)?, self.draws))
    }
}

/// Runs `cfg.steps` steps with independent Poisson increments.
pub fn simulate(cfg: &SimConfig) -> Result<EvolutionLog> {
    simulate_with_draws(cfg, Allocation::IndependentPoisson).map(|(log, _)| log)
}

/// Same as [`simulate`] but splitting a Poisson total multinomially.
pub fn simulate_multinomial(cfg: &SimConfig) -> Result<EvolutionLog> {
    simulate_with_draws(cfg, Allocation::Multinomial).map(|(log, _)| log)
}

pub fn simulate_with_draws(cfg: &SimConfig, allocation: Allocation) -> Result<(EvolutionLog, Vec<StepDraws>)> {
    let mut sim = Simulator::new(cfg.clone(), allocation)?;
    sim.run(cfg.steps)?;
    sim.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::IncrementPanel;

    fn linear() -> PreferenceParams<f64> {
        PreferenceParams::power(1.0, 0.0).unwrap()
    }

    #[test]
    fn zero_rates_give_static_network() {
        let cfg = SimConfig::external_only(5, 10, 0.0, linear(), 1);
        let (log, draws) = simulate_with_draws(&cfg, Allocation::IndependentPoisson).unwrap();
        assert!(draws.is_empty());
        assert_eq!(log.num_steps(), 1);
        assert_eq!(log.num_vertices(), 5);
    }

    #[test]
    fn seed_graphs() {
        let mut cfg = SimConfig::external_only(6, 1, 0.0, linear(), 3);
        let sim = Simulator::new(cfg.clone(), Allocation::IndependentPoisson).unwrap();
        assert_eq!(sim.in_degrees(), vec![1; 6]);
        cfg.seed_graph = SeedGraph::Preferential { edges_per_vertex: 2 };
        let sim = Simulator::new(cfg.clone(), Allocation::IndependentPoisson).unwrap();
        assert_eq!(sim.in_degrees().iter().sum::<u32>(), 1 + 2 * 4);
        cfg.n0 = 1;
        assert!(Simulator::new(cfg, Allocation::IndependentPoisson).is_err());
    }

    #[test]
    fn degenerate_weights_are_reported() {
        let mut cfg = SimConfig::external_only(3, 1, 1.0, linear(), 1);
        cfg.internal = Process::new(1.0, linear());
        let mut sim = Simulator::new(cfg, Allocation::IndependentPoisson).unwrap();
        sim.in_edges.iter_mut().for_each(Vec::clear);
        assert!(matches!(sim.step(), Err(Error::DegenerateWeights)));
    }

    #[test]
    fn equal_weights_split_uniformly() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = vec![0.25; 4];
        let mut sums = [0u64; 4];
        for _ in 0..4000 {
            for (s, v) in sums.iter_mut().zip(allocate(&mut rng, &w, 4.0, Allocation::Multinomial)) {
                *s += v as u64;
            }
        }
        for s in sums {
            // mean 1 per vertex; sd of the sum is sqrt(4000)
            assert!((s as f64 - 4000.0).abs() < 4.0 * 4000f64.sqrt(), "{sums:?}");
        }
        assert_eq!(allocate(&mut rng, &w, 0.0, Allocation::Multinomial), vec![0; 4]);
    }

    #[test]
    fn draws_round_trip_through_the_log() {
        let cfg = SimConfig {
            n0: 8,
            steps: 40,
            external: Process::new(3.0, PreferenceParams::power(1.1, 0.5).unwrap()),
            internal: Process::new(2.0, PreferenceParams::piecewise(0.8, 1.0, 3.0, 1.0).unwrap()),
            deletion: Process::new(1.5, PreferenceParams::power(0.7, 0.0).unwrap()),
            seed: 11,
            seed_graph: SeedGraph::Preferential { edges_per_vertex: 2 },
            start_date: default_start(),
            dep_type: "Imports".into(),
        };
        let (log, draws) = simulate_with_draws(&cfg, Allocation::IndependentPoisson).unwrap();
        let panel = IncrementPanel::extract(&log);
        let mut seen = 0;
        panel.for_each_step(|r| {
            let Some(d) = draws.iter().find(|d| d.date == r.date) else { return };
            seen += 1;
            for (j, v) in d.vertices.iter().enumerate() {
                let id = log.vertex_id(v).unwrap() as usize;
                assert_eq!((r.x[id], r.y[id], r.z[id]), (d.internal[j], d.external[j], d.deletion[j]));
            }
        });
        assert_eq!(seen, draws.len());
        assert!(seen > 30);
    }
}
