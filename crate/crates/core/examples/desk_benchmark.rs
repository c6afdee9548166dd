//! Paired softmax and entropy self-training runs on the synthetic benchmark,
//! plus an entropy-threshold sweep, with optional `key=value` overrides:
//! `seeds sigma blur sigma_scale regions size epochs lr lambda_sl lambda_adv`.
//!
//! Usage: `cargo run --release --example desk_benchmark -- seeds=10 sigma=0.6`

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;

use entroseg::selftrain::{
    run_from_baseline, train_baseline, ExperimentReport, ExtractionMode, SelfTrainPlan,
};
use entroseg::synth::Benchmark;

fn main() -> entroseg::Result<()> {
    let kv: HashMap<String, f64> = std::env::args()
        .skip(1)
        .map(|a| {
            let (k, v) = a.split_once('=').expect("key=value");
            (k.to_string(), v.parse().expect("number"))
        })
        .collect();
    let get = |k: &str| kv.get(k).copied();
    let seeds = get("seeds").unwrap_or(10.0) as u64;
    let start = Instant::now();

    let setup = |seed: u64| -> (Benchmark, SelfTrainPlan) {
        let mut b = Benchmark::default_with_seed(seed);
        if let Some(v) = get("sigma") {
            b.scene.noise_sigma = v;
        }
        if let Some(v) = get("blur") {
            b.scene.boundary_blur = v;
        }
        if let Some(v) = get("sigma_scale") {
            b.shift.sigma_scale = v;
        }
        if let Some(v) = get("regions") {
            b.scene.num_regions = v as usize;
        }
        if let Some(v) = get("size") {
            b.scene.height = v as usize;
            b.scene.width = v as usize;
        }
        let mut plan = SelfTrainPlan::default();
        plan.train.seed = seed;
        if let Some(v) = get("epochs") {
            plan.train.epochs = v as usize;
        }
        if let Some(v) = get("lr") {
            plan.train.lr_f = v;
        }
        if let Some(v) = get("lambda_sl") {
            plan.train.lambda_sl = v;
        }
        if let Some(v) = get("lambda_adv") {
            plan.train.lambda_adv = v;
        }
        (b, plan)
    };

    let miou = |r: &ExperimentReport| r.final_metrics().miou.unwrap_or(f64::NAN);
    let wrong = |r: &ExperimentReport| r.iterations[0].pseudo.incorrect.global.unwrap_or(f64::NAN);
    let cov = |r: &ExperimentReport| r.iterations[0].pseudo.coverage.labeled_fraction;

    let values = [0.05, 0.1, 0.15, 0.2, 0.3];
    println!("seed baseline ssl esl | ssl_wrong esl_wrong | ssl_cov esl_cov | sweep miou/cov (0.05 0.1 0.15 0.2 0.3 median)");
    let (mut sums, mut miou_wins, mut wrong_wins) = ([0.0; 3], 0, 0);
    let mut covs = [0.0; 2];
    let mut totals = [0.0; 6];
    for seed in 0..seeds {
        let (b, mut plan) = setup(seed);
        let data = b.generate()?;
        let baseline = train_baseline(&plan, &data)?;
        plan.mode = ExtractionMode::Ssl;
        let ssl = run_from_baseline(&plan, &data, baseline.clone())?.report;
        plan.mode = ExtractionMode::Esl;
        let sweep: Vec<ExperimentReport> = values
            .iter()
            .map(|v| Some(*v))
            .chain([None])
            .collect::<Vec<_>>()
            .par_iter()
            .map(|v| {
                let mut p = plan.clone();
                match v {
                    Some(v) => p.nu_star = *v,
                    None => p.median_mode = true,
                }
                Ok(run_from_baseline(&p, &data, baseline.clone())?.report)
            })
            .collect::<entroseg::Result<_>>()?;
        let esl = &sweep[1];
        let base = ssl.baseline.metrics.miou.unwrap_or(f64::NAN);
        let row: Vec<String> = sweep
            .iter()
            .map(|r| format!("{:.4}/{:.2}", miou(r), cov(r)))
            .collect();
        println!(
            "{seed:4} {base:.4} {:.4} {:.4} | {:.4} {:.4} | {:.3} {:.3} | {}",
            miou(&ssl),
            miou(esl),
            wrong(&ssl),
            wrong(esl),
            cov(&ssl),
            cov(esl),
            row.join(" ")
        );
        covs[0] += cov(&ssl);
        covs[1] += cov(esl);
        sums[0] += base;
        sums[1] += miou(&ssl);
        sums[2] += miou(esl);
        miou_wins += (miou(esl) > miou(&ssl)) as usize;
        wrong_wins += (wrong(esl) <= wrong(&ssl)) as usize;
        for (t, r) in totals.iter_mut().zip(&sweep) {
            *t += miou(r);
        }
    }
    let n = seeds as f64;
    println!(
        "mean baseline {:.4} ssl {:.4} esl {:.4}; esl miou wins {miou_wins}/{seeds}; esl wrong<=ssl {wrong_wins}/{seeds}; cov ssl {:.3} esl {:.3}",
        sums[0] / n,
        sums[1] / n,
        sums[2] / n,
        covs[0] / n,
        covs[1] / n
    );
    let row: Vec<String> = totals.iter().map(|t| format!("{:.4}", t / n)).collect();
    println!("sweep mean (0.05 0.1 0.15 0.2 0.3 median): {}", row.join(" "));
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
