use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ietjoin::construction::{
    build_switch, ksv_check, non_simplicity_witness, run_schedule, strand_measures, ScheduleConfig,
    SwitchSpec, WitnessConfig,
};
use ietjoin::joinings::{
    approx_by_powers, kr_bounds, kr_distance, sample_power_joining, sample_product,
    stratified_points, weak_closure_check, DiscreteMeasure2D, KrOptions, TestFunction,
};
use ietjoin::renorm::find_renorm_times;
use ietjoin::towers::{build_tower, suggest_towers, tower_stats};
use ietjoin::{params, ExactIet, ExactRotation, Iet3, RotationRep};

const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Largest atom count per side for the exact KR solver.
const KR_EXACT_LIMIT: usize = 2500;

#[derive(Parser, Debug)]
#[command(
    name = "ietjoin",
    version,
    about = "Three-interval exchanges and their self-joinings"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Rational,
    F64x,
}

#[derive(Args, Debug, Clone, Serialize)]
struct IetArgs {
    /// lengths l1,l2,l3 (decimals, normalized to sum 1)
    #[arg(long, value_delimiter = ',')]
    l: Option<Vec<String>>,
    #[arg(long)]
    alpha: Option<f64>,
    /// `golden` for the documented golden-type set, or partial quotients a0,a1,...
    #[arg(long = "alpha-cf")]
    alpha_cf: Option<String>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, value_enum, default_value = "rational")]
    mode: Mode,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Common {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// directory for the JSON report and CSV data
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Lengths, rotation parameters and convergents.
    IetInfo {
        #[command(flatten)]
        iet: IetArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Orbit segment of a point.
    Orbit(OrbitArgs),
    /// Accepted renormalization times.
    RenormFind(RenormArgs),
    /// A Rokhlin tower and its statistics, or suggested towers.
    Tower(TowerArgs),
    /// Sample a power joining or the product joining.
    JoiningSample(SampleArgs),
    /// KR distance between two atom files.
    Kr(KrArgs),
    /// Approximate a sampled joining by combinations of powers along a tower.
    ApproxPowers(ApproxArgs),
    /// Search powers whose joining is close to the mixture of the identity and T^k.
    WeakClosure(ClosureArgs),
    /// Build and verify one switch.
    Switch(SwitchArgs),
    /// Run the multi-level switch schedule and check the level conditions.
    Schedule(ScheduleArgs),
    /// Build the non-simplicity witness.
    Witness(WitnessArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct OrbitArgs {
    #[command(flatten)]
    iet: IetArgs,
    #[arg(long, default_value_t = 0.0)]
    x: f64,
    #[arg(long, default_value_t = 100)]
    len: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
struct RenormArgs {
    #[command(flatten)]
    iet: IetArgs,
    #[arg(long, default_value_t = 0.3)]
    delta: f64,
    #[arg(long = "t-max", default_value_t = 40.0)]
    t_max: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
struct TowerArgs {
    #[command(flatten)]
    iet: IetArgs,
    /// base [a, b) in [0, 1) and height n; without them towers are suggested
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    n: Option<u128>,
    #[arg(long, default_value_t = 20)]
    candidates: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SampleArgs {
    #[command(flatten)]
    iet: IetArgs,
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    power: i128,
    #[arg(long)]
    product: bool,
    #[arg(long = "samples", default_value_t = 10_000)]
    samples: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
struct KrArgs {
    #[arg(long)]
    mu: PathBuf,
    #[arg(long)]
    nu: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ApproxArgs {
    #[command(flatten)]
    iet: IetArgs,
    #[arg(long = "samples", default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 256)]
    bins: usize,
    /// towers with at least this coverage are eligible; the most rigid is used
    #[arg(long, default_value_t = 0.95)]
    coverage: f64,
    #[arg(long, default_value_t = 0.1)]
    tol: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ClosureArgs {
    #[command(flatten)]
    iet: IetArgs,
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    k: i128,
    #[arg(long, default_value_t = 1000)]
    horizon: u128,
    #[arg(long = "samples", default_value_t = 100_000)]
    samples: usize,
    /// candidate power always evaluated in full
    #[arg(long, allow_negative_numbers = true)]
    hint: Option<i128>,
    #[arg(long, default_value_t = 0.1)]
    tol: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SwitchArgs {
    #[command(flatten)]
    iet: IetArgs,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    a: i128,
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    b: i128,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    /// renormalization time; the first suitable one when absent
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ScheduleArgs {
    #[command(flatten)]
    iet: IetArgs,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0,1",
        allow_negative_numbers = true
    )]
    exponents: Vec<i128>,
    /// one value per level; halving from 0.02 when absent
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long, default_value_t = 3)]
    levels: usize,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 10_000)]
    atoms: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
struct WitnessArgs {
    #[command(flatten)]
    iet: IetArgs,
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long, default_value_t = 3)]
    levels: usize,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 100_000)]
    atoms: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a C,
    result: R,
}

enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn of(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}
impl std::fmt::Debug for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}
impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

fn default_eps(levels: usize) -> Vec<f64> {
    (0..levels.max(1))
        .map(|k| 0.02 / f64::powi(2.0, k as i32))
        .collect()
}

fn resolve_iet(a: &IetArgs) -> anyhow::Result<ExactIet> {
    let sources = [a.l.is_some(), a.alpha.is_some(), a.alpha_cf.is_some()]
        .iter()
        .filter(|&&x| x)
        .count();
    if sources > 1 {
        return Err(usage("give only one of --l, --alpha, --alpha-cf"));
    }
    if let Some(l) = &a.l {
        if l.len() != 3 {
            return Err(usage("--l needs three lengths"));
        }
        return match a.mode {
            Mode::Rational => {
                let parts: Vec<&str> = l.iter().map(|s| s.trim()).collect();
                Ok(ExactIet::from_decimals(&parts)?)
            }
            Mode::F64x => {
                let v: Vec<f64> = l
                    .iter()
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| usage(format!("--l: {e}")))?;
                let s: f64 = v.iter().sum();
                Ok(ExactIet::from_f64(&Iet3::new(
                    v[0] / s,
                    v[1] / s,
                    v[2] / s,
                )?)?)
            }
        };
    }
    if let Some(alpha) = a.alpha {
        let kappa = a.kappa.ok_or_else(|| usage("--alpha needs --kappa"))?;
        let iet = Iet3::from_rotation(RotationRep { alpha, kappa })?;
        return Ok(ExactIet::from_f64(&iet)?);
    }
    match a.alpha_cf.as_deref() {
        None | Some("golden") => {
            let g = params::golden_type();
            match a.kappa {
                None => Ok(g.iet),
                Some(k) => Ok(params::build(
                    &g.name,
                    g.quotients,
                    k,
                    g.targets,
                    g.tower_index,
                    g.switch_indices,
                )?
                .iet),
            }
        }
        Some(cf) => {
            let qs: Vec<u128> = cf
                .split(',')
                .map(|s| s.trim().parse::<u128>())
                .collect::<Result<_, _>>()
                .map_err(|e| usage(format!("--alpha-cf: {e}")))?;
            let kappa = a
                .kappa
                .ok_or_else(|| usage("--alpha-cf with quotients needs --kappa"))?;
            let (p, d) = params::ratio_of_quotients(&qs)?;
            let n = (kappa * d as f64).round() as u128;
            Ok(ExactIet::from_rotation(ExactRotation { d, p, n })?)
        }
    }
}

fn write_out(dir: &Option<PathBuf>, name: &str, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let p = dir.join(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn emit<C: Serialize, R: Serialize>(
    command: &str,
    config: &C,
    result: R,
    out: &Option<PathBuf>,
) -> anyhow::Result<()> {
    let env = Envelope {
        tool: "ietjoin",
        version: VERSION,
        command,
        config,
        result,
    };
    let mut text = serde_json::to_string_pretty(&env)?;
    text.push('\n');
    write_out(out, &format!("{command}.json"), &text)?;
    print!("{text}");
    Ok(())
}

/// Shortest decimal of v rounded to 12 significant digits.
fn rounded(v: f64) -> f64 {
    format!("{v:.11e}").parse().unwrap_or(v)
}

fn read_measure(p: &Path) -> anyhow::Result<DiscreteMeasure2D> {
    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    DiscreteMeasure2D::from_csv(&text).with_context(|| format!("parsing {}", p.display()))
}

/// The same exchange on a grid refined by a power of ten so that x is a grid point.
fn refine_for(e: &ExactIet, x: f64) -> anyhow::Result<ExactIet> {
    let digits = format!("{x}").split('.').nth(1).map_or(0, |f| f.len()) as u32;
    let f = 10u128
        .checked_pow(digits)
        .ok_or_else(|| usage("--x has too many digits"))?;
    let l = e.l.map(|v| v.checked_mul(f));
    match l {
        [Some(a), Some(b), Some(c)] => Ok(ExactIet::new(a, b, c)?),
        _ => Err(usage("--x needs a grid finer than supported")),
    }
}

fn point_of(iet: &ExactIet, x: f64, flag: &str) -> anyhow::Result<u128> {
    if !(0.0..=1.0).contains(&x) {
        return Err(usage(format!("--{flag} must lie in [0, 1]")));
    }
    Ok(if x >= 1.0 { iet.total() } else { iet.point(x) })
}

#[derive(Serialize)]
struct IetInfo {
    lengths: Iet3,
    alpha: f64,
    kappa: f64,
    discontinuities: [f64; 2],
    exact_lengths: [u128; 3],
    rotation: ExactRotation,
    /// (partial quotient, denominator) of the first convergents
    convergents: Vec<(u128, u128)>,
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.cmd {
        Cmd::IetInfo { iet, common } => {
            let e = resolve_iet(&iet)?;
            let f = e.to_f64();
            let rep = f.to_rotation();
            let rot = e.rotation();
            let info = IetInfo {
                lengths: f,
                alpha: rep.alpha,
                kappa: rep.kappa,
                discontinuities: f.discontinuities(),
                exact_lengths: e.l,
                rotation: rot,
                convergents: rot
                    .convergents()
                    .iter()
                    .take(40)
                    .map(|c| (c.a, c.q))
                    .collect(),
            };
            #[derive(Serialize)]
            struct Cfg<'a> {
                iet: &'a IetArgs,
                seed: u64,
            }
            emit(
                "iet-info",
                &Cfg {
                    iet: &iet,
                    seed: common.seed,
                },
                info,
                &common.out,
            )?;
            Ok(Outcome::Pass)
        }
        Cmd::Orbit(a) => {
            let e = resolve_iet(&a.iet)?;
            let points: Vec<f64> = match a.iet.mode {
                Mode::F64x => e.to_f64().orbit(a.x, a.len)?.points,
                Mode::Rational => {
                    if !(0.0..1.0).contains(&a.x) {
                        return Err(usage("--x must lie in [0, 1)"));
                    }
                    let e = refine_for(&e, a.x)?;
                    let mut y = e.point(a.x);
                    (0..a.len)
                        .map(|_| {
                            let v = e.coord(y);
                            y = e.apply(y);
                            v
                        })
                        .collect()
                }
            };
            let mut csv = String::from("i,x\n");
            for (i, p) in points.iter().enumerate() {
                csv.push_str(&format!("{i},{p:.16e}\n"));
            }
            write_out(&a.common.out, "orbit.csv", &csv)?;
            emit("orbit", &a, &points, &a.common.out)?;
            Ok(Outcome::Pass)
        }
        Cmd::RenormFind(a) => {
            let e = resolve_iet(&a.iet)?;
            let res = find_renorm_times(&e, a.delta, a.t_max)?;
            emit("renorm-find", &a, &res, &a.common.out)?;
            Ok(Outcome::Pass)
        }
        Cmd::Tower(a) => {
            let e = resolve_iet(&a.iet)?;
            match (a.a, a.b, a.n) {
                (Some(x0), Some(x1), Some(n)) => {
                    let t = build_tower(&e, point_of(&e, x0, "a")?, point_of(&e, x1, "b")?, n)?;
                    let stats = tower_stats(&t, &e);
                    write_out(&a.common.out, "tower_levels.csv", &t.levels_csv())?;
                    #[derive(Serialize)]
                    struct R<'a> {
                        tower: &'a ietjoin::towers::Tower,
                        stats: ietjoin::towers::TowerStats,
                    }
                    emit("tower", &a, R { tower: &t, stats }, &a.common.out)?;
                }
                (None, None, None) => {
                    let cands = suggest_towers(&e, a.candidates);
                    emit("tower", &a, &cands, &a.common.out)?;
                }
                _ => return Err(usage("--a, --b and --n go together")),
            }
            Ok(Outcome::Pass)
        }
        Cmd::JoiningSample(a) => {
            let e = resolve_iet(&a.iet)?;
            if a.samples == 0 {
                return Err(usage("--samples must be positive"));
            }
            let m = if a.product {
                sample_product(&e, a.samples, a.common.seed)
            } else {
                sample_power_joining(&e, a.power, a.samples, a.common.seed)
            };
            write_out(&a.common.out, "joining.csv", &m.to_csv())?;
            #[derive(Serialize)]
            struct R {
                atoms: usize,
                mean_x: f64,
                mean_y: f64,
                mean_abs_dy: f64,
            }
            let r = R {
                atoms: m.len(),
                mean_x: m.integrate(|x, _| x),
                mean_y: m.integrate(|_, y| y),
                mean_abs_dy: m.integrate(|x, y| (y - x).abs()),
            };
            emit("joining-sample", &a, r, &a.common.out)?;
            Ok(Outcome::Pass)
        }
        Cmd::Kr(a) => {
            let mu = read_measure(&a.mu)?;
            let nu = read_measure(&a.nu)?;
            #[derive(Serialize)]
            struct R {
                lower: f64,
                upper: f64,
                exact: bool,
            }
            let r = if mu.len().max(nu.len()) <= KR_EXACT_LIMIT {
                let d = kr_distance(&mu, &nu)?;
                println!("{}", rounded(d));
                R {
                    lower: d,
                    upper: d,
                    exact: true,
                }
            } else {
                let b = kr_bounds(&mu, &nu, &KrOptions::default())?;
                println!("{} {}", rounded(b.lower), rounded(b.upper));
                R {
                    lower: b.lower,
                    upper: b.upper,
                    exact: false,
                }
            };
            if a.common.out.is_some() {
                let env = Envelope {
                    tool: "ietjoin",
                    version: VERSION,
                    command: "kr",
                    config: &a,
                    result: r,
                };
                write_out(
                    &a.common.out,
                    "kr.json",
                    &(serde_json::to_string_pretty(&env)? + "\n"),
                )?;
            }
            Ok(Outcome::Pass)
        }
        Cmd::ApproxPowers(a) => {
            let e = resolve_iet(&a.iet)?;
            let cands = suggest_towers(&e, 20);
            let best = cands
                .iter()
                .filter(|c| c.stats.coverage > a.coverage)
                .min_by(|x, y| x.stats.rigidity.total_cmp(&y.stats.rigidity))
                .ok_or_else(|| anyhow!("no suggested tower has coverage above {}", a.coverage))?;
            let tower = build_tower(&e, best.base[0], best.base[1], best.height)?;
            let prod = sample_product(&e, a.samples, a.common.seed);
            let rep = approx_by_powers(&e, &prod, &tower, a.bins, &[TestFunction::Coord])?;
            let worst = rep.l2_errors.iter().map(|x| x.1).fold(0.0, f64::max);
            let pass = worst <= a.tol && rep.coefficients.sum <= 1.0 + 1e-12;
            #[derive(Serialize)]
            struct R<'a> {
                tower: &'a ietjoin::towers::TowerCandidate,
                report: ietjoin::joinings::ApproxReport,
                max_l2_error: f64,
                pass: bool,
            }
            emit(
                "approx-powers",
                &a,
                R {
                    tower: best,
                    report: rep,
                    max_l2_error: worst,
                    pass,
                },
                &a.common.out,
            )?;
            Ok(Outcome::of(pass))
        }
        Cmd::WeakClosure(a) => {
            let e = resolve_iet(&a.iet)?;
            let rep = weak_closure_check(&e, a.k, a.horizon, a.samples, a.common.seed, a.hint)?;
            let pass = rep.kr_error <= a.tol;
            #[derive(Serialize)]
            struct R {
                report: ietjoin::joinings::ClosureReport,
                pass: bool,
            }
            emit("weak-closure", &a, R { report: rep, pass }, &a.common.out)?;
            Ok(Outcome::of(pass))
        }
        Cmd::Switch(a) => {
            let e = resolve_iet(&a.iet)?;
            let mut spec = SwitchSpec::new(a.a, a.b, a.eps);
            spec.t = a.t;
            spec.samples = a.samples;
            spec.seed = a.common.seed;
            let res = build_switch(&e, &spec)?;
            let pass = res.verified;
            emit("switch", &a, &res, &a.common.out)?;
            Ok(Outcome::of(pass))
        }
        Cmd::Schedule(a) => {
            let e = resolve_iet(&a.iet)?;
            let eps = a.eps.clone().unwrap_or_else(|| default_eps(a.levels));
            let mut cfg = ScheduleConfig::new(a.exponents.clone(), eps, a.levels);
            cfg.samples = a.samples;
            cfg.n_atoms = a.atoms;
            cfg.seed = a.common.seed;
            let run = run_schedule(&e, &cfg)?;
            let ksv = ksv_check(&e, &run.schedule, a.common.seed)?;
            let pass = run.schedule.failure.is_none() && ksv.pass;
            for (i, s) in run.strands.iter().enumerate() {
                write_out(&a.common.out, &format!("strand_{i}.csv"), &s.to_csv())?;
            }
            write_out(&a.common.out, "average.csv", &run.average.to_csv())?;
            write_out(
                &a.common.out,
                "schedule_replay.json",
                &(serde_json::to_string_pretty(&run.schedule)? + "\n"),
            )?;
            #[derive(Serialize)]
            struct R<'a> {
                schedule: &'a ietjoin::construction::Schedule,
                ksv: ietjoin::construction::KsvReport,
                pass: bool,
            }
            emit(
                "schedule",
                &a,
                R {
                    schedule: &run.schedule,
                    ksv,
                    pass,
                },
                &a.common.out,
            )?;
            Ok(Outcome::of(pass))
        }
        Cmd::Witness(a) => {
            let e = resolve_iet(&a.iet)?;
            let mut cfg = WitnessConfig::new(a.levels, a.atoms, a.common.seed);
            if let Some(eps) = &a.eps {
                cfg.eps = eps.clone();
            }
            cfg.samples = a.samples;
            let rep = non_simplicity_witness(&e, &cfg)?;
            if a.common.out.is_some() {
                let xs = stratified_points(&e, cfg.n_atoms, cfg.seed);
                let (_, avg) = strand_measures(&e, &rep.exponents, &xs);
                write_out(&a.common.out, "final_joining.csv", &avg.to_csv())?;
                write_out(
                    &a.common.out,
                    "schedule_replay.json",
                    &(serde_json::to_string_pretty(&rep.schedule)? + "\n"),
                )?;
            }
            let pass = rep.witness;
            emit("witness", &a, &rep, &a.common.out)?;
            Ok(Outcome::of(pass))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(2),
        Err(e) => {
            if e.downcast_ref::<Usage>().is_some() {
                eprintln!("error: {e}\n\nFor more information, try '--help'.");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(1)
        }
    }
}
