use std::collections::BTreeMap;

use chrono::NaiveDate;

use super::event::Action;
use super::log::{EvolutionLog, VertexId};

/// Increments of one existing vertex over one time step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Increment {
    /// New edges from existing vertices.
    pub internal: u32,
    /// New edges from vertices that joined at this step.
    pub external: u32,
    /// Removed edges.
    pub deletion: u32,
}

impl Increment {
    pub fn is_zero(&self) -> bool {
        self.internal == 0 && self.external == 0 && self.deletion == 0
    }
}

#[derive(Debug, Clone)]
struct StepDelta {
    n_prev: usize,
    increments: Vec<(VertexId, Increment)>,
    newcomer_degrees: Vec<u32>,
}

/// Per-step view handed out by [`IncrementPanel::for_each_step`].
///
/// `k_prev`, `x`, `y` and `z` are indexed by the vertices existing at `t - 1`;
/// `k_curr` additionally covers the vertices that joined at `t`.
#[derive(Debug)]
pub struct StepRecord<'a> {
    pub t: usize,
    pub date: NaiveDate,
    pub k_prev: &'a [u32],
    pub x: &'a [u32],
    pub y: &'a [u32],
    pub z: &'a [u32],
    pub k_curr: &'a [u32],
}

impl StepRecord<'_> {
    pub fn n_prev(&self) -> usize {
        self.k_prev.len()
    }
}

/// In-degree increments of every existing vertex at every step, stored sparsely.
#[derive(Debug, Clone)]
pub struct IncrementPanel {
    timeline: Vec<NaiveDate>,
    initial_degrees: Vec<u32>,
    steps: Vec<StepDelta>,
}

impl IncrementPanel {
    /// Splits each step's net edge changes into internal, external and deletion
    /// increments of the vertices that existed at the previous step.
    pub fn extract(log: &EvolutionLog) -> Self {
        let timeline = log.timeline().to_vec();
        if timeline.is_empty() {
            return Self { timeline, initial_degrees: Vec::new(), steps: Vec::new() };
        }

        let mut initial_degrees = vec![0u32; log.vertex_count_at(0)];
        for c in log.changes_at(0) {
            debug_assert_eq!(c.action, Action::Added);
            initial_degrees[c.target as usize] += 1;
        }

        let mut steps = Vec::with_capacity(log.num_steps());
        for t in 1..timeline.len() {
            let n_prev = log.vertex_count_at(t - 1);
            let n_curr = log.vertex_count_at(t);
            let mut incs: BTreeMap<VertexId, Increment> = BTreeMap::new();
            let mut newcomer_degrees = vec![0u32; n_curr - n_prev];
            for c in log.changes_at(t) {
                let target = c.target as usize;
                if target >= n_prev {
                    // Only additions can touch a vertex that did not exist before.
                    newcomer_degrees[target - n_prev] += 1;
                    continue;
                }
                let inc = incs.entry(c.target).or_default();
                match c.action {
                    Action::Removed => inc.deletion += 1,
                    Action::Added if (c.source as usize) < n_prev => inc.internal += 1,
                    Action::Added => inc.external += 1,
                }
            }
            steps.push(StepDelta { n_prev, increments: incs.into_iter().collect(), newcomer_degrees });
        }
        Self { timeline, initial_degrees, steps }
    }

    pub fn timeline(&self) -> &[NaiveDate] {
        &self.timeline
    }

    /// Number of steps `T`.
    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    /// `n_{t-1}` for step `t` (1-based).
    pub fn existing_at_step(&self, t: usize) -> usize {
        self.steps[t - 1].n_prev
    }

    /// Non-zero increments at step `t`, sorted by vertex.
    pub fn increments(&self, t: usize) -> &[(VertexId, Increment)] {
        &self.steps[t - 1].increments
    }

    /// Replays the panel from time 0, calling `f` once per step with the full
    /// per-vertex records of that step.
    pub fn for_each_step(&self, mut f: impl FnMut(&StepRecord<'_>)) {
        let mut k = self.initial_degrees.clone();
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut z = Vec::new();
        for (i, step) in self.steps.iter().enumerate() {
            let n = step.n_prev;
            debug_assert_eq!(k.len(), n);
            for v in [&mut x, &mut y, &mut z] {
                v.clear();
                v.resize(n, 0);
            }
            for &(id, inc) in &step.increments {
                x[id as usize] = inc.internal;
                y[id as usize] = inc.external;
                z[id as usize] = inc.deletion;
            }
            let mut k_curr: Vec<u32> = (0..n).map(|j| k[j] + x[j] + y[j] - z[j]).collect();
            k_curr.extend_from_slice(&step.newcomer_degrees);
            f(&StepRecord {
                t: i + 1,
                date: self.timeline[i + 1],
                k_prev: &k,
                x: &x,
                y: &y,
                z: &z,
                k_curr: &k_curr,
            });
            k = k_curr;
        }
    }
}
