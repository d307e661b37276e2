// scratch probe for acceptance-level empirical numbers (not shipped)
use ctxzoom_core::env::generators::*;
use ctxzoom_core::harness::{run_experiment, AlgorithmSpec};
use ctxzoom_core::rng::{stream_rng, Stream};
use ctxzoom_core::space::{covering_number, zooming_number};
use std::sync::Arc;
use std::time::Instant;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let what = args.get(1).map(|s| s.as_str()).unwrap_or("all");

    if what == "slope" || what == "all" {
        // criterion 4: tent instance, uniform + zooming, T in {1e3,1e4,1e5}
        let env = Arc::new(make_tilted_tent(65).unwrap());
        for algo in [AlgorithmSpec::Uniform, AlgorithmSpec::Zooming] {
            let mut meds = Vec::new();
            for t in [1_000usize, 10_000, 100_000] {
                let t0 = Instant::now();
                let regrets: Vec<f64> = (0..10u64)
                    .map(|seed| {
                        run_experiment(&env, &algo, t, seed, false)
                            .unwrap()
                            .total_regret
                    })
                    .collect();
                let m = median(regrets);
                println!(
                    "{} T={t}: median_regret={m:.1} ({:?})",
                    algo.label(),
                    t0.elapsed()
                );
                meds.push(m);
            }
            let slope01 = (meds[1].ln() - meds[0].ln()) / (10f64).ln();
            let slope12 = (meds[2].ln() - meds[1].ln()) / (10f64).ln();
            let lsq = {
                // least squares over the three (ln T, ln R) points
                let xs = [1000f64.ln(), 10_000f64.ln(), 100_000f64.ln()];
                let ys = [meds[0].ln(), meds[1].ln(), meds[2].ln()];
                let xm = xs.iter().sum::<f64>() / 3.0;
                let ym = ys.iter().sum::<f64>() / 3.0;
                let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
                let den: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
                num / den
            };
            println!(
                "{}: slopes {slope01:.3} {slope12:.3} lsq={lsq:.3}",
                algo.label()
            );
        }
    }

    if what == "gap" || what == "all" {
        // criterion 5: peaked arms instance, ratio of zooming numbers,
        // then zooming vs uniform at T=1e5
        let env = Arc::new(make_peaked_arms(33, 10).unwrap());
        let product = env.product_space();
        let pairs = env.feasible_pair_points();
        let full = covering_number(product, &pairs, 1.0 / 16.0);
        let z = zooming_number(&env, 1.0 / 16.0).unwrap();
        println!("peaked: zooming_number={z} full_covering={full} ratio={:.3}", z as f64 / full as f64);
        for algo in [AlgorithmSpec::Zooming, AlgorithmSpec::Uniform] {
            let t0 = Instant::now();
            let regrets: Vec<f64> = (0..10u64)
                .map(|seed| run_experiment(&env, &algo, 100_000, seed, false).unwrap().total_regret)
                .collect();
            println!(
                "peaked {} T=1e5: median={:.1} ({:?})",
                algo.label(),
                median(regrets),
                t0.elapsed()
            );
        }
    }

    if what == "drift" || what == "all" {
        // criterion 8: sqrt drift sigma=0.01, k=5, T=5e4
        use ctxzoom_core::space::DriftShape;
        let t0 = Instant::now();
        let mut zoom_avgs = Vec::new();
        let mut ucb_avgs = Vec::new();
        for seed in 0..10u64 {
            let mut rng = stream_rng(1000 + seed, Stream::InstanceGen);
            let env = Arc::new(
                make_drifting_env(5, 0.01, DriftShape::Sqrt, 50_000, &mut rng).unwrap(),
            );
            let z = run_experiment(&env, &AlgorithmSpec::Zooming, 50_000, seed, false)
                .unwrap()
                .average_regret();
            let u = run_experiment(&env, &AlgorithmSpec::Ucb1, 50_000, seed, false)
                .unwrap()
                .average_regret();
            println!("drift seed={seed}: zoom_avg={z:.4} ucb1_avg={u:.4} ratio={:.3}", z / u);
            zoom_avgs.push(z);
            ucb_avgs.push(u);
        }
        println!(
            "drift medians: zoom={:.4} ucb={:.4} ratio={:.3} ({:?})",
            median(zoom_avgs.clone()),
            median(ucb_avgs.clone()),
            median(zoom_avgs) / median(ucb_avgs),
            t0.elapsed()
        );
    }

    if what == "needle" || what == "all" {
        // criterion 6: needle N=16, r=1/8, T=1024
        let threshold = 0.25 * (16.0 / 0.125) * 0.125;
        println!("needle threshold = {threshold}");
        for algo in [
            AlgorithmSpec::Zooming,
            AlgorithmSpec::Uniform,
            AlgorithmSpec::Exp3,
            AlgorithmSpec::Ucb1,
            AlgorithmSpec::Meta {
                c_y: 1.0,
                d_y: 0.0,
                arm_net_radius: 0.125,
                subroutine: ctxzoom_core::meta::SubroutineKind::Exp3,
            },
        ] {
            let mut regrets = Vec::new();
            for a in 0..8u64 {
                let spec = GeneratorSpec::Needle {
                    context_grid: 17,
                    arm_grid: 17,
                    n_x: 4,
                    n_y: 4,
                    r: 0.125,
                    assignment: None,
                };
                let env = Arc::new(spec.build(a).unwrap());
                regrets.push(
                    run_experiment(&env, &algo, 1024, a, false)
                        .unwrap()
                        .total_regret,
                );
            }
            println!("needle {}: median={:.2} all={:?}", algo.label(), median(regrets.clone()), regrets.iter().map(|r| (r * 10.0).round() / 10.0).collect::<Vec<_>>());
        }
        // taxonomy variant: 16 leaves
        let mut regrets = Vec::new();
        for a in 0..8u64 {
            let spec = GeneratorSpec::TaxonomyNeedle { n_arms: 16, r: 0.125 };
            let env = Arc::new(spec.build(a).unwrap());
            let q = ctxzoom_core::taxonomy::true_quality(env.taxonomy.as_ref().unwrap(), &(0..16).map(|i| env.mu(0, 0, i)).collect::<Vec<_>>());
            let algo = AlgorithmSpec::Taxonomy { q_hat: q };
            regrets.push(run_experiment(&env, &algo, 1024, a, false).unwrap().total_regret);
        }
        println!("needle taxonomy: median={:.2}", median(regrets));
    }
}
