//! Iterated switches on d strands of power joinings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::switch::{switch_at, SwitchResult, SwitchSpec, KR_WINDOW_CAP};
use super::Check;
use crate::error::{Error, Result};
use crate::iet_core::ExactIet;
use crate::joinings::{
    kr_distance, sample_power_joining, sample_power_mixture, sampled_orbit_joining,
    stratified_points, DiscreteMeasure2D,
};
use crate::renorm::find_renorm_times;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub exponents: Vec<i128>,
    pub eps: Vec<f64>,
    pub levels: usize,
    pub delta: f64,
    pub t_max: f64,
    /// verification samples per switch
    pub samples: usize,
    /// atoms of the final empirical measures
    pub n_atoms: usize,
    pub seed: u64,
}

impl ScheduleConfig {
    pub fn new(exponents: Vec<i128>, eps: Vec<f64>, levels: usize) -> Self {
        ScheduleConfig {
            exponents,
            eps,
            levels,
            delta: 0.3,
            t_max: 40.0,
            samples: 10_000,
            n_atoms: 10_000,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub k: usize,
    pub epsilon: f64,
    pub t: f64,
    pub q: u128,
    pub exponents_before: Vec<i128>,
    pub exponents: Vec<i128>,
    /// strand l switches toward strand l - 1 (cyclically)
    pub switches: Vec<SwitchResult>,
    pub r_max: u128,
    pub measure_j: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub d: usize,
    pub initial: Vec<i128>,
    pub eps: Vec<f64>,
    pub levels: Vec<Level>,
    /// set when a level could not be built; the levels before it are kept
    pub failure: Option<String>,
}

impl Schedule {
    pub fn exponents(&self) -> &[i128] {
        self.levels.last().map_or(&self.initial, |l| &l.exponents)
    }

    /// Exponents after k levels.
    pub fn exponents_at(&self, k: usize) -> &[i128] {
        if k == 0 {
            &self.initial
        } else {
            &self.levels[k - 1].exponents
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleRun {
    pub schedule: Schedule,
    pub strands: Vec<DiscreteMeasure2D>,
    pub average: DiscreteMeasure2D,
}

fn validate(d: usize, cfg: &ScheduleConfig) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidParameters("need at least two strands".into()));
    }
    if cfg.eps.len() < cfg.levels {
        return Err(Error::InvalidParameters(
            "one epsilon per level is required".into(),
        ));
    }
    if cfg.eps.iter().any(|&e| !(e > 0.0 && e < 0.2)) {
        return Err(Error::InvalidParameters(
            "epsilon values must lie in (0, 0.2)".into(),
        ));
    }
    if cfg.eps.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidParameters(
            "epsilon must be non-increasing".into(),
        ));
    }
    for l in 0..d {
        if cfg.exponents[l] == cfg.exponents[(l + d - 1) % d] {
            return Err(Error::InvalidParameters(
                "consecutive strands must have different exponents".into(),
            ));
        }
    }
    Ok(())
}

/// Strand measures and their average on a common stratified sample.
pub fn strand_measures(
    iet: &ExactIet,
    exponents: &[i128],
    xs: &[u128],
) -> (Vec<DiscreteMeasure2D>, DiscreteMeasure2D) {
    let strands: Vec<DiscreteMeasure2D> = exponents
        .iter()
        .map(|&n| sample_power_mixture(iet, &[(1.0, n)], xs))
        .collect();
    let w = 1.0 / exponents.len() as f64;
    let parts: Vec<(f64, i128)> = exponents.iter().map(|&n| (w, n)).collect();
    (strands, sample_power_mixture(iet, &parts, xs))
}

/// Build the levels one after another. Level k uses the first accepted
/// renormalization time beyond the previous one at which every strand's
/// switch verifies and max r_{k-1} lambda(J_k) < eps_k.
pub fn run_schedule(iet: &ExactIet, cfg: &ScheduleConfig) -> Result<ScheduleRun> {
    let d = cfg.exponents.len();
    validate(d, cfg)?;
    let mut sched = Schedule {
        d,
        initial: cfg.exponents.clone(),
        eps: cfg.eps.clone(),
        levels: Vec::new(),
        failure: None,
    };
    let search = if cfg.levels > 0 {
        find_renorm_times(iet, cfg.delta, cfg.t_max)?.accepted
    } else {
        Vec::new()
    };
    let mut cur = cfg.exponents.clone();
    let mut q_prev = 0u128;
    let mut r_prev = 0u128;
    for k in 1..=cfg.levels {
        let eps = cfg.eps[k - 1];
        let mut built = None;
        for rt in search.iter().filter(|rt| rt.q > q_prev) {
            let mut sw = Vec::with_capacity(d);
            let mut ok = true;
            for l in 0..d {
                let mut spec = SwitchSpec::new(cur[(l + d - 1) % d], cur[l], eps);
                spec.samples = cfg.samples;
                spec.seed = cfg.seed.wrapping_add((k * 1000 + l) as u64);
                match switch_at(iet, rt, &spec) {
                    Ok(res) if res.verified => sw.push(res),
                    Ok(_) | Err(Error::TooCoarse(_)) | Err(Error::SearchFailure(_)) => {
                        ok = false;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            if !ok {
                continue;
            }
            let measure_j = sw.iter().map(|s| s.measure_j()).fold(0.0, f64::max);
            if k > 1 && r_prev as f64 * measure_j >= eps {
                continue;
            }
            built = Some((rt.clone(), sw, measure_j));
            break;
        }
        let Some((rt, sw, measure_j)) = built else {
            sched.failure = Some(format!(
                "level {k}: no accepted renormalization time admits verified switches"
            ));
            break;
        };
        let next: Vec<i128> = sw.iter().map(|s| s.n).collect();
        let r_max = sw.iter().map(|s| s.r).max().unwrap_or(0);
        sched.levels.push(Level {
            k,
            epsilon: eps,
            t: rt.t,
            q: rt.q,
            exponents_before: cur.clone(),
            exponents: next.clone(),
            switches: sw,
            r_max,
            measure_j,
        });
        cur = next;
        q_prev = rt.q;
        r_prev = r_max;
    }
    let xs = stratified_points(iet, cfg.n_atoms, cfg.seed);
    let (strands, average) = strand_measures(iet, sched.exponents(), &xs);
    Ok(ScheduleRun {
        schedule: sched,
        strands,
        average,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsvCondition {
    pub name: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsvReport {
    pub conditions: Vec<KsvCondition>,
    /// largest c with lambda(A_k), lambda(B_k) > c at every level
    pub c_admissible: f64,
    pub pass: bool,
}

fn condition(name: &str, checks: Vec<Check>, note: &str) -> KsvCondition {
    KsvCondition {
        name: name.into(),
        pass: checks.iter().all(|c| c.pass),
        checks,
        note: note.into(),
    }
}

/// Check conditions (a)-(e), (A) and (B) on a built schedule.
pub fn ksv_check(iet: &ExactIet, s: &Schedule, seed: u64) -> Result<KsvReport> {
    let sw = || {
        s.levels
            .iter()
            .flat_map(|l| l.switches.iter().map(move |x| (l, x)))
    };
    let c_admissible = sw()
        .map(|(_, x)| x.measure_a.min(x.measure_b))
        .fold(1.0, f64::min);
    let eps_max = s.eps.iter().copied().fold(0.0, f64::max);
    let mut a_checks = vec![Check::at_least(
        "c > 5 max eps",
        c_admissible,
        5.0 * eps_max,
    )];
    for (l, x) in sw() {
        a_checks.push(Check::at_least(
            &format!("level {} lambda(A)", l.k),
            x.measure_a,
            c_admissible,
        ));
        a_checks.push(Check::at_least(
            &format!("level {} lambda(B)", l.k),
            x.measure_b,
            c_admissible,
        ));
    }
    let b_checks = sw()
        .map(|(l, x)| {
            Check::at_least(
                &format!("level {} return to J", l.k),
                x.report.return_lower as f64,
                1.5 * x.r as f64,
            )
        })
        .collect();
    let c_checks = s
        .levels
        .iter()
        .map(|l| {
            let u = l
                .switches
                .iter()
                .map(|x| x.report.exceptional)
                .fold(0.0, f64::max);
            Check::below(&format!("level {} lambda(U)", l.k), u, l.epsilon)
        })
        .collect();
    let tails: Vec<f64> = (0..s.levels.len())
        .map(|k| {
            s.levels[k].r_max as f64 * s.levels[k + 1..].iter().map(|l| l.measure_j).sum::<f64>()
        })
        .collect();
    let mut d_checks: Vec<Check> = tails
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            Check::below(
                &format!("r_{} tail below r_{} tail", k + 2, k + 1),
                w[1],
                w[0],
            )
        })
        .collect();
    if let Some(&first) = tails.first() {
        d_checks.push(Check::below("r_1 tail", first, 1.0));
    }
    let eps_sum: f64 = s.eps.iter().sum();
    let monotone = s.eps.windows(2).all(|w| w[1] <= w[0]);
    let e_checks = vec![
        Check::below("sum of eps", eps_sum, f64::INFINITY),
        Check::at_least("eps non-increasing", if monotone { 1.0 } else { 0.0 }, 1.0),
    ];
    let cap_a: Vec<Check> = sw()
        .flat_map(|(l, x)| {
            [
                Check::below(
                    &format!("level {} KR on A", l.k),
                    x.report.kr_a_max,
                    x.report.kr_bound,
                ),
                Check::below(
                    &format!("level {} KR on B", l.k),
                    x.report.kr_b_max,
                    x.report.kr_bound,
                ),
            ]
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cap_b = Vec::new();
    let mut sampled = false;
    for k in 0..s.levels.len().saturating_sub(1) {
        let l = (s.levels[k + 1].r_max / 9).max(1);
        let atoms = l.min(KR_WINDOW_CAP) as usize;
        sampled |= l > KR_WINDOW_CAP;
        let bound = s.levels[k].epsilon + 4.0 / (atoms as f64).sqrt();
        for &n in &s.levels[k].exponents {
            let nu = sample_power_joining(iet, n, atoms, seed ^ n as u64);
            let mut worst: f64 = 0.0;
            for i in 0..4 {
                let x = rng.gen_range(0..iet.total());
                let orbit = sampled_orbit_joining(iet, x, n, l, atoms, seed.wrapping_add(i))?;
                worst = worst.max(kr_distance(&orbit, &nu)?);
            }
            cap_b.push(Check::below(
                &format!("level {} Birkhoff n = {n}", k + 1),
                worst,
                bound,
            ));
        }
    }
    let note_b = if sampled {
        format!(
            "L = r_(k+1)/9; orbit measures estimated from {KR_WINDOW_CAP} uniformly drawn times"
        )
    } else {
        String::new()
    };
    let conditions = vec![
        condition("(a) measures of A and B", a_checks, ""),
        condition("(b) minimal return time", b_checks, "certified lower bound"),
        condition(
            "(c) exceptional set",
            c_checks,
            "complement of A and B plus sampled shadowing failures",
        ),
        condition("(d) tail of J measures", d_checks, ""),
        condition("(e) summable eps", e_checks, ""),
        condition(
            "(A) switching",
            cap_a,
            "orbit joinings against the target power joining",
        ),
        condition("(B) Birkhoff", cap_b, &note_b),
    ];
    let pass = conditions.iter().all(|c| c.pass);
    Ok(KsvReport {
        conditions,
        c_admissible,
        pass,
    })
}
