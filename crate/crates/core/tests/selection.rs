use prefattach::mcmc::ChainConfig;
use prefattach::preference::PreferenceParams;
use prefattach::priors::{HyperConfig, PriorScale};
use prefattach::selection::{run_selection, BayesFactor, SelectionPlan};
use prefattach::simulator::{simulate, SeedGraph, SimConfig};
use prefattach::store::{Category, IncrementPanel, SufficientStats};

fn data(params: PreferenceParams<f64>, seed: u64) -> SufficientStats {
    let cfg = SimConfig {
        seed_graph: SeedGraph::Preferential { edges_per_vertex: 10 },
        ..SimConfig::external_only(150, 150, 40.0, params, seed)
    };
    SufficientStats::summarize(&IncrementPanel::extract(&simulate(&cfg).unwrap()), Category::External)
}

fn plan(p: f64, auto_p: bool, seed: u64) -> SelectionPlan {
    SelectionPlan::new(p, auto_p, false, 500, ChainConfig::with_draws(300, 2, 1500, seed))
}

#[test]
fn one_sided_trace_reports_a_bound() {
    let stats = data(PreferenceParams::piecewise(1.4, 1.0, 8.0, 1.0).unwrap(), 1);
    let hyper = HyperConfig::defaults_for(&stats, PriorScale::Natural);
    let run = run_selection(&stats, &plan(0.5, false, 2), &hyper).unwrap();
    let r = &run.result;
    match r.bayes_factor {
        BayesFactor::GreaterThan(b) => {
            assert!(r.r_trace.iter().all(|&x| x == 1));
            assert_eq!(b, (r.r_trace.len() - 1) as f64);
            assert!(r.bayes_factor.to_string().starts_with("greater than"));
        }
        BayesFactor::Estimate(b) => assert!(b > 10.0, "{b}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn prior_odds_change_precision_not_the_estimate() {
    let stats = data(PreferenceParams::power(1.1, 1.0).unwrap(), 3);
    let hyper = HyperConfig::defaults_for(&stats, PriorScale::Natural);
    let runs: Vec<_> = [0.3, 0.7]
        .into_iter()
        .map(|p| run_selection(&stats, &plan(p, false, 4), &hyper).unwrap().result)
        .collect();
    let (lo0, hi0) = runs[0].mc_interval.map(|(l, h)| (l, h.unwrap_or(f64::INFINITY))).unwrap();
    let (lo1, hi1) = runs[1].mc_interval.map(|(l, h)| (l, h.unwrap_or(f64::INFINITY))).unwrap();
    assert!(lo0 <= hi1 && lo1 <= hi0, "[{lo0}, {hi0}] vs [{lo1}, {hi1}]");
    assert_eq!((runs[0].p, runs[1].p), (0.3, 0.7));
}
