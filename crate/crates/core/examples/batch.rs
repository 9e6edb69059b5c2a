//! Development batch evaluation of the toy protocol across seeds.

use trajseg::config::{MatrixSpec, RunConfig};
use trajseg::data::{count_switches, generate_slds, hamming_error, toy_spec};
use trajseg::gibbs::run_chain;
use trajseg::RngStream;

fn main() {
    let s0: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1e-4);
    let k: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let sticky: bool = std::env::args().nth(3).map(|s| s != "nonsticky").unwrap_or(true);
    let seeds: u64 = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(10);
    let n0: f64 = std::env::args().nth(5).and_then(|s| s.parse().ok()).unwrap_or(4.0);

    println!("S0={s0} K={k} sticky={sticky} n0={n0}");
    let mut pass_h = 0;
    let mut pass_m = 0;
    let mut pass_s = 0;
    for seed in 0..seeds {
        let spec = toy_spec::<f64>(400, None).unwrap();
        let traj = generate_slds(&spec, &mut RngStream::from_seed(1000 + seed)).unwrap();
        let mut cfg = RunConfig {
            seed,
            sticky,
            ..RunConfig::default()
        };
        cfg.mniw.s0 = if s0 > 0.0 { Some(MatrixSpec::Scalar(s0)) } else { None };
        cfg.mniw.k = MatrixSpec::Scalar(k);
        cfg.mniw.n0 = Some(n0);
        let started = std::time::Instant::now();
        let result = run_chain::<f64>(&traj.y, &cfg, &mut RngStream::from_seed(seed)).unwrap();
        let h = hamming_error(&result.best.z, &traj.z_true).unwrap();
        let modes = {
            let mut m = result.best.z.clone();
            m.sort_unstable();
            m.dedup();
            m.len()
        };
        let switches = count_switches(&result.best.z);
        if h <= 0.10 {
            pass_h += 1;
        }
        if (3..=5).contains(&modes) {
            pass_m += 1;
        }
        if switches >= 15 {
            pass_s += 1;
        }
        println!(
            "seed {seed}: hamming={h:.3} modes={modes} switches={switches} best_sweep={} ({:.1}s)",
            result.best_sweep,
            started.elapsed().as_secs_f64()
        );
    }
    println!(
        "hamming<=0.10: {pass_h}/{seeds}  modes in [3,5]: {pass_m}/{seeds}  switches>=15: {pass_s}/{seeds}"
    );
}
