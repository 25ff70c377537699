use std::sync::Arc;

use mipbo::benchmarks::{self, gp_prior_sample};
use mipbo::bo::{additive_run, bo_step, bo_step_with, exact_lcb, initial_design, minimize_lcb, run, run_bo, BoConfig, BoTrace, Problem};
use mipbo::exec::Execution;
use mipbo::gp::{Dataset, GpModel, KernelParams};
use mipbo::model::known_violation;
use mipbo::Error;

fn short(iters: usize, seed: u64) -> BoConfig {
    BoConfig { max_iterations: iters, seed, ..BoConfig::default() }
}

fn chain_holds(t: &BoTrace) -> bool {
    t.records.iter().flat_map(|r| &r.groups).all(|g| g.lcb_polished <= g.lcb_pool && g.lcb_pool <= g.lcb_warm)
}

#[test]
fn zero_budget_returns_the_initial_design() {
    let p = benchmarks::get("multimodal").unwrap().problem();
    let t = run_bo(&p, &short(0, 1)).unwrap();
    assert!(t.records.is_empty());
    assert_eq!(t.initial.len(), 10);
    assert!(t.initial.iter().all(|s| p.bounds.contains(&s.x, 0.0)));
    assert_eq!(t.best(), t.initial.iter().map(|s| s.f).fold(f64::INFINITY, f64::min));
}

#[test]
fn multimodal_run_is_deterministic_and_keeps_the_chain() {
    let p = benchmarks::get("multimodal").unwrap().problem();
    let a = run_bo(&p, &short(6, 3)).unwrap();
    let b = run_bo(&p, &BoConfig { execution: Execution::Sequential, ..short(6, 3) }).unwrap();
    assert_eq!(a.records.len(), 6);
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!(x.x, y.x);
        assert_eq!(x.f, y.f);
    }
    assert!(chain_holds(&a));
    // Best-so-far is monotone and the regret is measured against the optimum.
    let opt = p.known_optimum.unwrap();
    for w in a.records.windows(2) {
        assert!(w[1].best <= w[0].best);
    }
    for r in &a.records {
        assert!((r.regret.unwrap() - (r.best - opt)).abs() < 1e-12);
        assert!(p.bounds.contains(&r.x, 1e-12));
    }
}

#[test]
fn constrained_proposals_are_feasible() {
    let b = benchmarks::get("ks224").unwrap();
    let t = run_bo(&b.problem(), &short(5, 2)).unwrap();
    for r in &t.records {
        assert!(known_violation(&b.constraints, &r.x) <= 1e-6, "{:?}", r.x);
    }
    assert!(t.initial.iter().all(|s| known_violation(&b.constraints, &s.x) <= 1e-9));
    assert!(chain_holds(&t));
}

#[test]
fn single_group_additive_run_matches_the_plain_loop() {
    let p = benchmarks::get("multimodal").unwrap().problem();
    let cfg = short(5, 8);
    let plain = run_bo(&p, &cfg).unwrap();
    let one = additive_run(&p, &BoConfig { addgp_groups: Some(vec![vec![0]]), ..cfg.clone() }).unwrap();
    assert_eq!(plain.records.len(), one.records.len());
    for (a, b) in plain.records.iter().zip(&one.records) {
        for (u, v) in a.x.iter().zip(&b.x) {
            assert!((u - v).abs() <= 1e-9);
        }
    }
}

#[test]
fn configuration_errors() {
    let ks = benchmarks::get("ks224").unwrap().problem();
    assert!(matches!(additive_run(&ks, &short(1, 0)), Err(Error::Config(_))));
    let split = BoConfig { addgp_groups: Some(vec![vec![0], vec![1]]), ..short(1, 0) };
    assert!(matches!(run(&ks, &split), Err(Error::Config(_))));
    let tiny = BoConfig { init_samples: Some(1), ..short(1, 0) };
    assert!(run_bo(&ks, &tiny).is_err());
}

#[test]
fn failing_objective_stops_the_run() {
    let inner = benchmarks::get("multimodal").unwrap();
    let f = inner.f;
    let p = Problem {
        objective: Arc::new(move |x: &[f64]| if x[0] > 5.0 { Err("simulated failure".into()) } else { Ok(f(x)) }),
        ..inner.problem()
    };
    let cfg = BoConfig { init_samples: Some(3), ..short(20, 0) };
    let t = run_bo(&p, &cfg).unwrap();
    assert!(t.aborted.as_deref().is_some_and(|m| m.contains("simulated failure")));
    assert!(t.records.len() < 20);
}

#[test]
fn minimize_lcb_stays_in_the_box_and_beats_a_coarse_grid_start() {
    let params = KernelParams::new(1.0, 0.2);
    let gp = GpModel::new(gp_prior_sample(2, 6, &params, 21).unwrap(), params).unwrap();
    let (x, g) = minimize_lcb(&gp, 1.0, &[], &BoConfig::default(), 4).unwrap();
    assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(exact_lcb(&gp, &x, 1.0), g.lcb_polished);
    assert!(g.lcb_polished <= g.lcb_pool && g.lcb_pool <= g.lcb_warm);
    let corner = exact_lcb(&gp, &[0.0, 0.0], 1.0);
    assert!(g.lcb_polished <= corner);
}

#[test]
fn reused_hyperparameters_skip_the_fit() {
    let b = benchmarks::get("branin").unwrap();
    let p = b.problem();
    let xs = initial_design(&p, 8, 1).unwrap();
    let ys = xs.iter().map(|x| b.eval(x).unwrap()).collect();
    let ds = Dataset::new(xs, ys).unwrap();
    let cfg = short(1, 1);
    let fresh = bo_step(&ds, &p, 1, &cfg).unwrap();
    let fixed = [KernelParams::new(0.7, 0.35)];
    let reused = bo_step_with(&ds, &p, 1, &cfg, Some(&fixed)).unwrap();
    assert_eq!(fresh.params.len(), 1);
    assert_eq!(reused.params, fixed.to_vec());
    assert!(p.bounds.contains(&reused.x, 0.0));

    let sparse = run_bo(&p, &BoConfig { refit_every: 3, ..short(4, 1) }).unwrap();
    let dense = run_bo(&p, &short(4, 1)).unwrap();
    assert_eq!(sparse.records[0].x, dense.records[0].x);
    assert_eq!(sparse.records.len(), 4);
    assert!(run_bo(&p, &BoConfig { refit_every: 0, ..short(1, 1) }).is_err());
}
