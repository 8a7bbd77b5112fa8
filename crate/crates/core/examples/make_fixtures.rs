//! Regenerates the synthetic data files under `tests/fixtures/`.
//!
//! `cargo run --example make_fixtures` from `crates/core`.

use std::fmt::Write as _;
use std::fs;

use chrono::{Days, NaiveDate};
use coreflow::distributions::{GpdParams, NormalParams};
use coreflow::rng;
use rand::Rng;

/// `n` draws: a Normal body truncated to `[0, splice)` with probability
/// `body_mass`, otherwise `splice` plus a GPD excess.
fn spliced(
    n: usize,
    seed: u64,
    body: NormalParams,
    splice: f64,
    body_mass: f64,
    tail: GpdParams,
) -> Vec<f64> {
    let mut rng = rng::seeded(seed);
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < body_mass {
                loop {
                    let x = body.sample_with(&mut rng, 1)[0];
                    if (0.0..splice).contains(&x) {
                        break x;
                    }
                }
            } else {
                splice + tail.sample_with(&mut rng, 1)[0]
            }
        })
        .collect()
}

const N_HURRICANE: usize = 2000;

fn seed(var: &str, default: u64) -> u64 {
    std::env::var(var)
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(default)
}

fn main() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");
    fs::create_dir_all(dir).unwrap();

    // 476 daily valve-like counts; the tail above 49 follows GPD(0.1215, 22.48).
    let valve = spliced(
        476,
        seed("VALVE_SEED", 9),
        NormalParams::new(30.0, 9.0).unwrap(),
        49.0,
        0.87,
        GpdParams::new(0.1215, 22.48).unwrap(),
    );
    let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
    let mut csv = String::from("date,count\n");
    for (i, x) in valve.iter().enumerate() {
        let count = if *x > 49.0 { x.ceil() } else { x.floor() };
        let day = start.checked_add_days(Days::new(i as u64)).unwrap();
        writeln!(csv, "{},{}", day.format("%Y-%m-%d"), count).unwrap();
    }
    fs::write(format!("{dir}/valve_like.csv"), csv).unwrap();

    // Hurricane-like plain series with a Normal(50, 12) body and a tail above 80.
    let hurricane = spliced(
        N_HURRICANE,
        seed("HURRICANE_SEED", 9),
        NormalParams::new(50.0, 12.0).unwrap(),
        80.0,
        0.85,
        GpdParams::new(0.1215, 22.48).unwrap(),
    );
    let mut plain = String::new();
    for row in hurricane.chunks(8) {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.3}")).collect();
        writeln!(plain, "{}", cells.join(" ")).unwrap();
    }
    fs::write(format!("{dir}/hurricane_like.txt"), plain).unwrap();
}
