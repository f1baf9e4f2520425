//! Compares pseudo-label routings on generated data.
//!
//! `cargo run --release --example regimes -- [seeds] [key=value ...]`

use std::time::Instant;

use xdc::config::ExperimentConfig;
use xdc::engine::run_deep_clustering;
use xdc::eval::evaluate_run;
use xdc::synthdata::generate;
use xdc::Regime;

fn main() -> xdc::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().map_or(3, |s| s.parse().expect("seed count"));
    let pairs: Vec<String> = args.collect();
    let base = ExperimentConfig::default().with_overrides(pairs.iter().map(|p| {
        let (k, v) = p.split_once('=').expect("key=value");
        (k, v)
    }))?;
    for regime in [Regime::Sdc, Regime::Mdc, Regime::Cdc, Regime::Xdc] {
        let (mut fc, mut ft, mut rnd, mut pur, mut its) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let t = Instant::now();
        for s in 0..seeds {
            let mut c = base.clone();
            c.regime = regime;
            c.run_seed = s;
            c.data.generator.seed = s;
            let data = generate(&c.data.generator)?;
            let run = run_deep_clustering(&c, &data)?;
            let (m, _) = evaluate_run(&c, &data, &run)?;
            fc += m.fc_only.top1;
            ft += m.full_finetune.top1;
            rnd += m.random_fc_only.top1;
            pur += m.weighted_purity;
            its += m.iterations as f64;
        }
        let n = seeds as f64;
        println!(
            "{regime:>4}: fc {:.3}  ft {:.3}  random-fc {:.3}  purity {:.3}  iters {:.1}  ({:.1?})",
            fc / n,
            ft / n,
            rnd / n,
            pur / n,
            its / n,
            t.elapsed()
        );
    }
    Ok(())
}
