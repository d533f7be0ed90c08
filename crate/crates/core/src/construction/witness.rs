//! The non-2-simplicity witness: a schedule whose strands converge to a
//! joining that is far from the product and has fat fibers, yet stays close
//! to the equal mixture of the identity and T.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schedule::{run_schedule, strand_measures, Schedule, ScheduleConfig};
use super::Check;
use crate::error::{Error, Result};
use crate::iet_core::ExactIet;
use crate::joinings::{
    disintegrate, fiber_diameter_stats, kr_bounds, sample_power_mixture, sample_product,
    stratified_points, KrEstimate, KrOptions, TestFunction,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessConfig {
    pub exponents: Vec<i128>,
    pub eps: Vec<f64>,
    pub levels: usize,
    pub n_atoms: usize,
    pub seed: u64,
    /// switch verification samples
    pub samples: usize,
    pub bins: usize,
    pub starts: usize,
    /// orbit times drawn per Birkhoff average
    pub birkhoff_draws: usize,
}

impl WitnessConfig {
    /// Exponents (0, 1), eps = 0.02, 0.01, 0.005, ... halving per level.
    pub fn new(levels: usize, n_atoms: usize, seed: u64) -> Self {
        let eps = (0..levels.max(1))
            .map(|k| 0.02 / f64::powi(2.0, k as i32))
            .collect();
        WitnessConfig {
            exponents: vec![0, 1],
            eps,
            levels,
            n_atoms,
            seed,
            samples: 10_000,
            bins: 128,
            starts: 10,
            birkhoff_draws: 4000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub config: WitnessConfig,
    pub schedule: Schedule,
    pub exponents: Vec<i128>,
    /// max over strands of the KR upper bound between strand and average, per level
    pub divergence: Vec<f64>,
    pub rho_hat: f64,
    pub c_hat: f64,
    pub eps_sum: f64,
    /// C_hat times the sum of eps
    pub budget: f64,
    pub median_step: f64,
    pub keep_away: Check,
    pub product_kr: KrEstimate,
    pub far_from_product: Check,
    pub mixture_kr: KrEstimate,
    pub near_mixture: Check,
    pub fiber_fraction: f64,
    pub fat_fibers: Check,
    pub birkhoff_averages: Vec<Vec<f64>>,
    pub birkhoff: Check,
    pub separation: Check,
    pub witness: bool,
}

fn birkhoff_fns() -> Vec<TestFunction> {
    TestFunction::standard_family()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        0.0
    } else if v.len() % 2 == 1 {
        v[v.len() / 2]
    } else {
        0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
    }
}

/// Time averages along (T^i x, T^{i+n} x) for i drawn uniformly in [0, L).
fn birkhoff_average(
    iet: &ExactIet,
    x: u128,
    n: i128,
    l: u128,
    draws: usize,
    seed: u64,
) -> Vec<f64> {
    let fs = birkhoff_fns();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cache = Vec::new();
    let mut sums = vec![0.0; fs.len()];
    for _ in 0..draws {
        let i = rng.gen_range(0..l);
        let a = iet.pow(i as i128, x);
        let b = iet.pow_cached(n, a, &mut cache);
        let u = 0.5 * (iet.coord(b) - iet.coord(a) + 1.0);
        for (s, f) in sums.iter_mut().zip(&fs) {
            *s += f.eval(u);
        }
    }
    sums.iter().map(|s| s / draws as f64).collect()
}

/// Evaluate the four witness items for a built schedule.
pub fn evaluate_witness(
    iet: &ExactIet,
    schedule: &Schedule,
    cfg: &WitnessConfig,
) -> Result<WitnessReport> {
    if cfg.n_atoms == 0 || cfg.bins == 0 || cfg.starts == 0 || cfg.birkhoff_draws == 0 {
        return Err(Error::InvalidParameters(
            "sample sizes must be positive".into(),
        ));
    }
    let opts = KrOptions::default();
    let xs = stratified_points(iet, cfg.n_atoms, cfg.seed);
    let levels = schedule.levels.len();
    let mut divergence = Vec::with_capacity(levels + 1);
    let mut final_avg = None;
    for k in 0..=levels {
        let (strands, avg) = strand_measures(iet, schedule.exponents_at(k), &xs);
        let mut worst: f64 = 0.0;
        for s in &strands {
            worst = worst.max(kr_bounds(s, &avg, &opts)?.upper);
        }
        divergence.push(worst);
        if k == levels {
            final_avg = Some(avg);
        }
    }
    let avg = final_avg.expect("at least level 0");
    let rho_hat = schedule
        .levels
        .iter()
        .flat_map(|l| l.switches.iter())
        .map(|s| (s.measure_a - s.measure_b).abs() / (s.measure_a + s.measure_b))
        .fold(0.0, f64::max);
    let mut c_hat: f64 = 0.0;
    let mut partial = 0.0;
    for (k, &s) in divergence.iter().enumerate() {
        if k > 0 {
            partial += schedule.eps[k - 1];
        }
        c_hat = c_hat.max(s / (partial + rho_hat.powi(k as i32)));
    }
    let eps_sum: f64 = schedule.eps[..levels].iter().sum();
    let budget = c_hat * eps_sum;
    let steps: Vec<f64> = xs
        .iter()
        .map(|&x| (iet.coord(iet.apply(x)) - iet.coord(x)).abs())
        .collect();
    let median_step = median(steps);
    let keep_away = Check::below(
        "40 C_hat sum(eps) <= median d(x, Tx)",
        40.0 * budget,
        median_step + f64::EPSILON,
    );

    let product = sample_product(iet, cfg.n_atoms, cfg.seed ^ 0x7072_6f64);
    let product_kr = kr_bounds(&avg, &product, &opts)?;
    let far_from_product = Check::at_least(
        "KR to product (lower bound)",
        product_kr.lower,
        4.0 * budget,
    );
    let d = schedule.initial.len() as f64;
    let parts: Vec<(f64, i128)> = schedule.initial.iter().map(|&n| (1.0 / d, n)).collect();
    let mixture = sample_power_mixture(iet, &parts, &xs);
    let mixture_kr = kr_bounds(&avg, &mixture, &opts)?;
    let near_mixture = Check::below(
        "KR to initial mixture (upper bound)",
        mixture_kr.upper,
        budget,
    );

    let dis = disintegrate(&avg, cfg.bins)?;
    let fibers = fiber_diameter_stats(&dis, 0.05, 0.5 * median_step, 1.0 / 256.0);
    let fat_fibers = Check::at_least(
        "fibers wider than half the median step",
        fibers.fraction_above,
        0.7,
    );

    let exps = schedule.exponents().to_vec();
    let r_last = schedule.levels.last().map_or(1, |l| l.r_max);
    let orbit_len = r_last.saturating_mul(64).min(iet.total()).max(1);
    let mut birkhoff_averages = Vec::with_capacity(cfg.starts);
    for i in 0..cfg.starts {
        let x = xs[i * xs.len() / cfg.starts];
        let n = exps[i % exps.len()];
        birkhoff_averages.push(birkhoff_average(
            iet,
            x,
            n,
            orbit_len,
            cfg.birkhoff_draws,
            cfg.seed.wrapping_add(i as u64),
        ));
    }
    let nf = birkhoff_fns().len();
    let spread = (0..nf)
        .map(|j| {
            let col = birkhoff_averages.iter().map(|v| v[j]);
            col.clone().fold(f64::NEG_INFINITY, f64::max) - col.fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    let birkhoff = Check::below("spread of Birkhoff averages", spread, 0.05 + 1e-15);
    let separation = Check::at_least(
        "item (i) exceeds item (ii)",
        product_kr.lower,
        mixture_kr.upper,
    );
    let witness = keep_away.pass
        && far_from_product.pass
        && near_mixture.pass
        && fat_fibers.pass
        && birkhoff.pass
        && separation.pass
        && schedule.failure.is_none();
    Ok(WitnessReport {
        config: cfg.clone(),
        schedule: schedule.clone(),
        exponents: exps,
        divergence,
        rho_hat,
        c_hat,
        eps_sum,
        budget,
        median_step,
        keep_away,
        product_kr,
        far_from_product,
        mixture_kr,
        near_mixture,
        fiber_fraction: fibers.fraction_above,
        fat_fibers,
        birkhoff_averages,
        birkhoff,
        separation,
        witness,
    })
}

/// Run the schedule from the configured exponents and evaluate the witness.
pub fn non_simplicity_witness(iet: &ExactIet, cfg: &WitnessConfig) -> Result<WitnessReport> {
    if cfg.levels < 2 {
        return Err(Error::InvalidParameters(
            "the witness needs at least two levels".into(),
        ));
    }
    let mut sc = ScheduleConfig::new(cfg.exponents.clone(), cfg.eps.clone(), cfg.levels);
    sc.samples = cfg.samples;
    sc.n_atoms = 1;
    sc.seed = cfg.seed;
    let run = run_schedule(iet, &sc)?;
    if let Some(f) = &run.schedule.failure {
        return Err(Error::SearchFailure(f.clone()));
    }
    evaluate_witness(iet, &run.schedule, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_control_is_not_a_witness() {
        let iet = ExactIet::from_decimals(&["0.2", "0.3", "0.5"]).unwrap();
        let p = iet.total() as i128;
        let sched = Schedule {
            d: 2,
            initial: vec![0, p],
            eps: vec![0.02],
            levels: vec![],
            failure: None,
        };
        let mut cfg = WitnessConfig::new(0, 2000, 3);
        cfg.exponents = vec![0, p];
        let rep = evaluate_witness(&iet, &sched, &cfg).unwrap();
        assert!(rep.fiber_fraction < 0.01, "{}", rep.fiber_fraction);
        assert!(!rep.witness);
    }

    #[test]
    fn needs_two_levels() {
        let iet = crate::params::golden_type().iet;
        assert!(non_simplicity_witness(&iet, &WitnessConfig::new(1, 100, 1)).is_err());
    }
}
