use clap::{Args, Parser, Subcommand, ValueEnum};
use ionbath::collision_mc::run_ensemble;
use ionbath::config::{KineticsModel, RunConfig, KEY_REFERENCE};
use ionbath::estimate::lm::LmOptions;
use ionbath::estimate::{
    fit_contrast_decay, fit_four_level, fit_fringe, fit_two_level, ContrastOptions, FitResult, FourLevelFitOptions,
    FringeOptions,
};
use ionbath::io::{self, FitReport, Provenance};
use ionbath::physics::constants::joule_to_millikelvin;
use ionbath::ramsey::{synthesize_fringe_scan, RamseySettings};
use ionbath::rate_model::{n_level_evolution, SpinPopulation};
use ionbath::reproduce::{self, Table1Options};
use ionbath::seeding::derive_seed;
use ionbath::{Error, Result};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Simulate and fit a Yb+ ion qubit colliding with spin-polarized 87Rb atoms.
#[derive(Parser)]
#[command(name = "ionbath", version)]
struct Cli {
    /// TOML run configuration (missing keys take the profile defaults).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for ensemble work; outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Print the resolved configuration with a key reference and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Langevin rate, total collision rate and Langevin time.
    Rates,
    /// Forward simulations; CSV curves plus a JSON summary.
    #[command(subcommand)]
    Simulate(Simulate),
    /// Fits of CSV data; writes a FitResult JSON report.
    #[command(subcommand)]
    Fit(Fit),
    /// Computed values against the reference table.
    #[command(subcommand)]
    Reproduce(Reproduce),
}

#[derive(Subcommand)]
enum Simulate {
    /// Spin populations (Monte Carlo and master equation) and synthetic counts.
    Relax,
    /// Ion kinetic energy under elastic cooling and hyperfine-flip heating.
    Energy,
    /// Ramsey contrast decay and a fringe scan.
    Ramsey,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitModel {
    TwoLevel,
    FourLevel,
}

#[derive(Args)]
struct FitRelax {
    /// `t_over_tL,n_trials,n_dark[,readout]`.
    input: PathBuf,
    /// Defaults to the configured kinetics model.
    #[arg(long, value_enum)]
    model: Option<FitModel>,
    /// Four-level fit: pin the steady F = 1 population.
    #[arg(long)]
    steady_upper: Option<f64>,
}

#[derive(Args)]
struct FitFringe {
    /// `detuning_hz,n_trials,n_dark`.
    input: PathBuf,
    /// Hold the wait time at the configured value.
    #[arg(long)]
    fixed_wait_time: bool,
}

#[derive(Args)]
struct FitContrast {
    /// `t_over_tL,contrast,sigma`.
    input: PathBuf,
    /// Hold the initial contrast at this value
    #[arg(long)]
    fix_c0: Option<f64>,
}

#[derive(Subcommand)]
enum Fit {
    /// Two- or four-level relaxation fit.
    Relax(FitRelax),
    /// Ramsey fringe scan.
    Fringe(FitFringe),
    /// Exponential contrast decay.
    Contrast(FitContrast),
}

#[derive(Subcommand)]
enum Reproduce {
    /// Synthetic round trip of every row of the relaxation table.
    Table1 {
        /// Repetitions per row for the interval coverage study.
        #[arg(long, default_value_t = 0)]
        repetitions: usize,
        #[arg(long, default_value_t = 3000)]
        trials: u64,
    },
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    workers: usize,
    prov: Provenance,
}

impl Ctx {
    fn path(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out)?;
        Ok(self.out.join(name))
    }

    fn write_table(&self, name: &str, t: &io::Table) -> Result<()> {
        let p = self.path(name)?;
        t.write_file(&p, &self.prov)?;
        println!("wrote {}", p.display());
        Ok(())
    }

    fn write_json(&self, name: &str, body: serde_json::Value) -> Result<()> {
        let p = self.path(name)?;
        io::write_json(&p, &json!({ "provenance": self.prov, "result": body }))?;
        println!("wrote {}", p.display());
        Ok(())
    }

    fn write_fit(&self, name: &str, input: &Path, fit: FitResult) -> Result<()> {
        print_fit(&fit);
        let p = self.path(name)?;
        let report = FitReport { provenance: self.prov.clone(), input: input.display().to_string(), fit };
        io::write_json(&p, &report)?;
        println!("wrote {}", p.display());
        Ok(())
    }
}

fn print_fit(fit: &FitResult) {
    println!("model {}", fit.model);
    for p in fit.parameters.iter().chain(&fit.derived) {
        println!("  {:<24} {:>14.6e} ± {:.3e}", p.name, p.value, p.sigma);
    }
    println!("  reduced chi-square {:.4}", fit.reduced_chi_square);
    if !fit.flags.is_empty() {
        println!("  flags: {}", fit.flags.join(", "));
    }
}

fn rates(ctx: &Ctx) -> Result<()> {
    let t = ctx.cfg.rate_table()?;
    println!("density n_a          {:.4e} m^-3", t.density_m3);
    println!("gamma_L / n_a        {:.4e} m^3/s", t.gamma_l_over_n);
    println!("gamma_c / n_a        {:.4e} m^3/s  (E = {} mK)", t.gamma_c_over_n, ctx.cfg.pair.collision_energy_mk);
    println!("gamma_c / gamma_L    {:.4}", t.ratio_c_over_l);
    println!("gamma_L              {:.4e} 1/s", t.gamma_l);
    println!("gamma_c              {:.4e} 1/s", t.gamma_c);
    println!("t_L                  {:.2} us", t.langevin_time_s * 1e6);
    Ok(())
}

fn ensemble(ctx: &Ctx) -> Result<ionbath::collision_mc::EnsembleStats> {
    let c = &ctx.cfg;
    let grid = reproduce::time_grid(c);
    run_ensemble(&c.initial_trajectory()?, &c.branching()?, &grid, c.ensemble.size, c.seed, ctx.workers)
}

fn simulate_relax(ctx: &Ctx) -> Result<()> {
    let c = &ctx.cfg;
    let stats = ensemble(ctx)?;
    let rm = c.rate_matrix()?;
    let p0 = SpinPopulation::pure(rm.n_states(), c.initial_trajectory()?.spin);
    let mut max_z: f64 = 0.0;
    let mut ode = io::Table::new(&[]);
    ode.columns = std::iter::once("t_over_tL".to_string())
        .chain(stats.labels.iter().map(|l| format!("p_{}", io::safe_label(l))))
        .collect();
    for (k, &t) in stats.t_over_tl.iter().enumerate() {
        let p = n_level_evolution(&rm, &p0, t)?;
        for i in 0..p.p.len() {
            let se = stats.population_stderr[k][i];
            if se > 0.0 {
                max_z = max_z.max((stats.populations[k][i] - p.p[i]).abs() / se);
            }
        }
        ode.push_f64(&std::iter::once(t).chain(p.p.iter().copied()).collect::<Vec<_>>());
    }
    let dark = reproduce::expected_dark(c, &stats.t_over_tl)?;
    let counts =
        reproduce::sample_counts(&stats.t_over_tl, &dark, c.ensemble.trials_per_point, derive_seed(c.seed, u64::MAX))?;
    ctx.write_table("relax_mc.csv", &io::ensemble_table(&stats))?;
    ctx.write_table("relax_ode.csv", &ode)?;
    ctx.write_table("relax_counts.csv", &io::relaxation_table(&counts))?;
    let ss = rm.steady_state()?;
    ctx.write_json(
        "relax_summary.json",
        json!({
            "labels": stats.labels,
            "n_trajectories": stats.n_trajectories,
            "steady_state": ss.p,
            "max_mc_ode_deviation_in_stderr": max_z,
        }),
    )
}

fn simulate_energy(ctx: &Ctx) -> Result<()> {
    let b = ctx.cfg.branching()?;
    let stats = ensemble(ctx)?;
    let last = stats.t_over_tl.len() - 1;
    ctx.write_table("energy.csv", &io::ensemble_table(&stats))?;
    ctx.write_json(
        "energy_summary.json",
        json!({
            "kappa": b.kappa(),
            "heat_per_flip_mK": joule_to_millikelvin(b.heat_per_flip()),
            "steady_energy_analytic_mK": joule_to_millikelvin(b.steady_energy()),
            "final_mean_mK": joule_to_millikelvin(stats.mean_energy[last]),
            "final_stderr_mK": joule_to_millikelvin(stats.energy_stderr[last]),
            "n_trajectories": stats.n_trajectories,
        }),
    )
}

fn simulate_ramsey(ctx: &Ctx) -> Result<()> {
    let c = &ctx.cfg;
    let (mc, contrast_fit) = reproduce::ramsey_t2(c, c.seed, ctx.workers)?;
    let r = &c.ramsey;
    let n = r.n_detunings;
    let detunings: Vec<f64> =
        (0..n).map(|k| -r.detuning_half_span_hz + 2.0 * r.detuning_half_span_hz * k as f64 / (n - 1) as f64).collect();
    let settings = RamseySettings { wait_time: r.wait_time_s, contrast0: r.contrast0, ..Default::default() };
    let scan = synthesize_fringe_scan(&settings, &detunings, r.trials_per_point, derive_seed(c.seed, u64::MAX))?;
    let fringe_fit = fit_fringe(&scan, &FringeOptions { wait_time: r.wait_time_s, ..Default::default() })?;
    // zero-error points (no decay yet) carry no weight and are left out
    ctx.write_table("ramsey_contrast.csv", &io::contrast_table(&reproduce::mc_contrast_points(&mc)))?;
    ctx.write_table("ramsey_fringe.csv", &io::fringe_table(&scan))?;
    ctx.write_json(
        "ramsey_summary.json",
        json!({
            "superposition_rate": mc.superposition_rate,
            "t2_expected": 1.0 / mc.superposition_rate,
            "n_trajectories": mc.n_trajectories,
            "t_over_tL": mc.t_over_tl,
            "survival": mc.survival,
            "contrast_fit": contrast_fit,
            "fringe_fit": fringe_fit,
        }),
    )
}

fn fit_relax(ctx: &Ctx, a: &FitRelax) -> Result<()> {
    let c = &ctx.cfg;
    let det = c.detection_model()?;
    let series = io::read_relaxation(std::fs::File::open(&a.input)?)?;
    let model = a.model.unwrap_or(match c.kinetics.model {
        KineticsModel::TwoLevel => FitModel::TwoLevel,
        KineticsModel::FourLevel => FitModel::FourLevel,
    });
    let fit = match model {
        FitModel::TwoLevel => {
            if series.len() != 1 {
                return Err(Error::Domain("two-level fit takes a single readout series".into()));
            }
            fit_two_level(&series[0].data, &det, &LmOptions::default())?
        }
        FitModel::FourLevel => {
            let rm = c.rate_matrix()?;
            let init = SpinPopulation::pure(rm.n_states(), c.initial_trajectory()?.spin);
            let mut opts = FourLevelFitOptions::new(c.rules()?, init);
            opts.steady_upper = a.steady_upper;
            fit_four_level(&series, &det, &opts)?
        }
    };
    ctx.write_fit("fit_relax.json", &a.input, fit)
}

fn fit_fringe_cmd(ctx: &Ctx, a: &FitFringe) -> Result<()> {
    let scan = io::read_fringe(std::fs::File::open(&a.input)?)?;
    let opts = FringeOptions {
        wait_time: ctx.cfg.ramsey.wait_time_s,
        fit_wait_time: !a.fixed_wait_time,
        lm: LmOptions::default(),
    };
    ctx.write_fit("fit_fringe.json", &a.input, fit_fringe(&scan, &opts)?)
}

fn fit_contrast_cmd(ctx: &Ctx, a: &FitContrast) -> Result<()> {
    let pts = io::read_contrast(std::fs::File::open(&a.input)?)?;
    let opts = ContrastOptions { fix_c0: a.fix_c0, lm: LmOptions::default() };
    ctx.write_fit("fit_contrast.json", &a.input, fit_contrast_decay(&pts, &opts)?)
}

fn table1(ctx: &Ctx, repetitions: usize, trials: u64) -> Result<()> {
    let opts = Table1Options { trials_per_point: trials, repetitions, seed: ctx.cfg.seed, workers: ctx.workers };
    let report = reproduce::run_table1(&opts)?;
    print!("{}", report.render());
    ctx.write_json("table1.json", serde_json::to_value(&report)?)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::from_toml_str("")?,
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.validate()?;
    }
    if cli.workers == 0 {
        return Err(Error::Config { path: "--workers".into(), message: "must be at least 1".into() });
    }
    if cli.print_config {
        print!("{KEY_REFERENCE}\n{}", cfg.to_toml());
        return Ok(());
    }
    let prov = Provenance::new(&cfg.hash(), cfg.seed);
    let ctx = Ctx { cfg, out: cli.out, workers: cli.workers, prov };
    match cli.command {
        None => Err(Error::Config { path: "<command>".into(), message: "no subcommand given (see --help)".into() }),
        Some(Command::Rates) => rates(&ctx),
        Some(Command::Simulate(Simulate::Relax)) => simulate_relax(&ctx),
        Some(Command::Simulate(Simulate::Energy)) => simulate_energy(&ctx),
        Some(Command::Simulate(Simulate::Ramsey)) => simulate_ramsey(&ctx),
        Some(Command::Fit(Fit::Relax(a))) => fit_relax(&ctx, &a),
        Some(Command::Fit(Fit::Fringe(a))) => fit_fringe_cmd(&ctx, &a),
        Some(Command::Fit(Fit::Contrast(a))) => fit_contrast_cmd(&ctx, &a),
        Some(Command::Reproduce(Reproduce::Table1 { repetitions, trials })) => table1(&ctx, repetitions, trials),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config { .. } => 2,
                Error::NonConvergence { .. } => 3,
                _ => 1,
            })
        }
    }
}
