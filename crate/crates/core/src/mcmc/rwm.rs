use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Acceptance rate that the burn-in adaptation aims for.
pub const TARGET_ACCEPTANCE: f64 = 0.44;

const MIN_SCALE: f64 = 1e-6;
const MAX_SCALE: f64 = 1e2;
/// Offset in the gain sequence `(n + A)^-0.6`. Keeps the first updates small
/// so a coordinate with a flat likelihood at the start cannot blow its scale
/// up before the others have moved.
const GAIN_OFFSET: f64 = 100.0;

/// Per-coordinate Gaussian random-walk proposals on an unconstrained scale,
/// with Robbins–Monro scale adaptation that is frozen after burn-in.
#[derive(Debug, Clone)]
pub struct RandomWalk {
    scales: Vec<f64>,
    accepted: Vec<u64>,
    proposed: Vec<u64>,
    burn_accepted: Vec<u64>,
    burn_proposed: Vec<u64>,
    adapting: bool,
    rounds: Vec<u64>,
}

impl RandomWalk {
    pub fn new(scales: Vec<f64>, adapt: bool) -> Self {
        let n = scales.len();
        Self {
            scales,
            accepted: vec![0; n],
            proposed: vec![0; n],
            burn_accepted: vec![0; n],
            burn_proposed: vec![0; n],
            adapting: adapt,
            rounds: vec![0; n],
        }
    }

    /// One Metropolis update of coordinate `i`.
    ///
    /// `current` is the unconstrained value with log target `current_ld`;
    /// `log_target` evaluates the log target (including any Jacobian) at a
    /// proposed value. Returns the new value and its log target.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        i: usize,
        current: f64,
        current_ld: f64,
        in_burn_in: bool,
        mut log_target: impl FnMut(f64) -> f64,
    ) -> (f64, f64) {
        let z: f64 = StandardNormal.sample(rng);
        let proposal = current + self.scales[i] * z;
        let proposal_ld = log_target(proposal);
        let log_ratio = proposal_ld - current_ld;
        let accept_prob = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
        let u: f64 = rng.gen();
        let accept = u < accept_prob;

        if in_burn_in {
            self.burn_proposed[i] += 1;
            if accept {
                self.burn_accepted[i] += 1;
            }
            if self.adapting {
                self.rounds[i] += 1;
                let gain = (self.rounds[i] as f64 + GAIN_OFFSET).powf(-0.6);
                self.scales[i] = (self.scales[i].ln() + gain * (accept_prob - TARGET_ACCEPTANCE))
                    .exp()
                    .clamp(MIN_SCALE, MAX_SCALE);
            }
        } else {
            self.proposed[i] += 1;
            if accept {
                self.accepted[i] += 1;
            }
        }

        if accept {
            (proposal, proposal_ld)
        } else {
            (current, current_ld)
        }
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Post-burn-in acceptance rate of each coordinate.
    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.accepted
            .iter()
            .zip(&self.proposed)
            .map(|(&a, &p)| if p == 0 { f64::NAN } else { a as f64 / p as f64 })
            .collect()
    }

    /// Coordinates that accepted nothing during burn-in.
    pub fn stuck_in_burn_in(&self) -> Vec<usize> {
        self.burn_accepted
            .iter()
            .enumerate()
            .filter(|&(i, &a)| a == 0 && self.burn_proposed[i] > 0)
            .map(|(i, _)| i)
            .collect()
    }
}
