//! Scratch probe for the model-comparison study; prints per-replica scores.
//! Not part of the deliverable surface; run with
//! `cargo run -p stppm --release --example sim2_probe -- <rows> <cols> <replicas>`.

use rayon::prelude::*;
use stppm::criteria::fit_report;
use stppm::gibbs::{run_chain, Schedule};
use stppm::graph::{DagOrdering, OrderingRule};
use stppm::partition::CohesionSpec;
use stppm::synth::{comparison_study_scenario, generate};
use stppm::temporal::build_design;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let rows: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(5);
    let cols: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(6);
    let n_rep: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(10);

    let (scenario, hyper) = comparison_study_scenario(rows, cols, 1).unwrap();
    let schedule = Schedule {
        iterations: 15_000,
        burnin: 5_000,
        thin: 10,
    };
    let t_fit = 100usize;

    let rows_out: Vec<String> = (0..n_rep)
        .into_par_iter()
        .map(|r| {
            let seed = 31_000 + r as u64;
            let (panel, _truth) = generate(&scenario, seed).unwrap();
            let fit_panel = panel.head_times(t_fit).unwrap();
            let design = build_design(&fit_panel, &scenario.lag_spec).unwrap();
            let ordering = DagOrdering::new(&scenario.map, OrderingRule::ByIndex).unwrap();
            let fit = |cohesion: CohesionSpec, offset: u64| {
                let mut h = hyper.clone();
                h.cohesion = cohesion;
                let chain = run_chain(
                    &fit_panel,
                    &design,
                    &scenario.map,
                    &ordering,
                    &h,
                    schedule,
                    seed.wrapping_add(offset),
                )
                .unwrap();
                let mean_k: f64 = chain
                    .states
                    .iter()
                    .map(|s| s.n_clusters() as f64)
                    .sum::<f64>()
                    / chain.states.len() as f64;
                let (report, plug) = fit_report(&chain.states, &fit_panel, &design, 8, seed).unwrap();
                (report, plug.partition.n_clusters(), mean_k)
            };
            let (hb, k_hb, mk_hb) = fit(CohesionSpec::Hb { eta: 0.35 }, 101);
            let (dp, k_dp, mk_dp) = fit(CohesionSpec::Dp { mass: 1.0 }, 202);
            format!(
                "rep {r}: HB aic {:.1} ll {:.1} rmse {:.4} k {k_hb} (chain mean {mk_hb:.2}) | DP aic {:.1} ll {:.1} rmse {:.4} k {k_dp} (chain mean {mk_dp:.2}) | HB wins: {}",
                hb.aic, hb.log_likelihood, hb.rmse, dp.aic, dp.log_likelihood, dp.rmse,
                hb.aic <= dp.aic
            )
        })
        .collect();
    for line in rows_out {
        println!("{line}");
    }
}
