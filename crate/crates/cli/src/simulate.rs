use std::path::PathBuf;

use dpfc::bounds::{exact_error_for_covariance, exact_steady_state_error, noise_covariance, noise_variances, BoundReport};
use dpfc::config::SigmaSpec;
use dpfc::dynamics::{estimate_from_summary, monte_carlo, SimulationRun};

use crate::format::{csv_writer, exact, output_dir, sig};
use crate::ConfigArg;

#[derive(clap::Args, Debug)]
pub struct Args {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Master seed (overrides the config)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo trials (overrides the config)
    #[arg(long)]
    pub trials: Option<usize>,
    /// Time steps per trial (overrides the config)
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Output directory for trajectory.csv and summary.csv
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Force every noise scale to zero
    #[arg(long)]
    pub noiseless: bool,
}

pub fn run(args: &Args) -> anyhow::Result<()> {
    let mut cfg = args.config.load()?;
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if args.trials.is_some() {
        cfg.trials = args.trials;
    }
    if args.horizon.is_some() {
        cfg.horizon = args.horizon;
    }
    if args.noiseless {
        cfg.sigma = Some(SigmaSpec::Shared(0.0));
    }
    let out = output_dir(
        args.out
            .as_ref()
            .or(cfg.out.as_ref())
            .map(PathBuf::as_path)
            .unwrap_or_else(|| "dpfc-out".as_ref()),
    )?;
    let v = cfg.validate()?;
    let sim = &v.simulation;
    let n = v.graph.node_count();

    println!(
        "agents {n}  dimensions {}  noise {:?}  gamma {}  lambda2 {}  horizon {}  trials {}  seed {}",
        v.formation.dims(),
        sim.noise_model(),
        sig(v.perron.gamma()),
        sig(v.perron.lambda2()),
        sim.horizon(),
        v.trials,
        v.seed
    );
    let sigmas: Vec<String> = v.sigmas.iter().map(|&s| sig(s)).collect();
    println!("noise scales: {}", sigmas.join(" "));

    let report = BoundReport::compute(&v.graph, cfg.gamma, &v.params, None)?;
    let z = noise_variances(&v.perron, &v.sigmas)?;
    let diagonal_ess = exact_steady_state_error(&v.perron, &z)?;
    let cov = noise_covariance(&v.perron, &v.sigmas, sim.noise_model())?;
    let exact_ess = exact_error_for_covariance(&v.perron, &cov)?;
    let bound = report.general_bound;

    let trial0 = sim.run_trial(0)?;
    write_trajectory(&out.join("trajectory.csv"), &trial0)?;
    let summary = monte_carlo(sim, v.trials)?;
    write_summary(&out.join("summary.csv"), &summary.mean, &summary.half_width)?;
    let est = estimate_from_summary(&summary, v.tail_fraction)?;

    println!("error bound per dimension (private noise level): {}", sig(bound));
    println!("exact steady-state error per dimension: {}", sig(exact_ess));
    println!(
        "exact steady-state error with uncorrelated noise diag(s^2): {}",
        sig(diagonal_ess)
    );
    println!(
        "estimated steady-state error per dimension: {} ± {}  (max over steps {}..={}, tail mean {})",
        sig(est.value),
        sig(est.half_width),
        est.tail_start,
        sim.horizon(),
        sig(est.tail_mean)
    );
    println!(
        "estimate within bound: {}",
        if est.value <= bound { "yes" } else { "NO" }
    );
    if !est.mixing_ok {
        println!(
            "warning: tail still trending ({} per 100 steps); increase --horizon",
            sig(est.slope_per_100)
        );
    }

    let steps = trial0.metrics.e_agg_by_dim.iter().flatten().count();
    let above = trial0
        .metrics
        .e_agg_by_dim
        .iter()
        .flatten()
        .filter(|&&e| e > bound)
        .count();
    if above > 0 {
        log::warn!("trial 0 exceeds the bound pointwise at {above} of {steps} (step, dimension) samples");
    }
    println!("trial 0 samples above bound: {above} of {steps}");
    let last = trial0.metrics.errors.last().expect("at least the initial state");
    let residual = last.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
    println!("trial 0 final formation residual: {}", sig(residual));
    println!(
        "wrote {} and {}",
        out.join("trajectory.csv").display(),
        out.join("summary.csv").display()
    );
    Ok(())
}

fn write_trajectory(path: &std::path::Path, run: &SimulationRun) -> anyhow::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["step", "agent", "dimension", "state", "error"])?;
    for (k, (x, e)) in run.states.iter().zip(&run.metrics.errors).enumerate() {
        for i in 0..x.nrows() {
            for l in 0..x.ncols() {
                w.write_record([
                    k.to_string(),
                    (i + 1).to_string(),
                    (l + 1).to_string(),
                    exact(x[(i, l)]),
                    exact(e[(i, l)]),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_summary(path: &std::path::Path, mean: &[f64], half_width: &[f64]) -> anyhow::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["step", "e_agg_mean", "e_agg_ci"])?;
    for (k, (m, h)) in mean.iter().zip(half_width).enumerate() {
        w.write_record([k.to_string(), exact(*m), exact(*h)])?;
    }
    w.flush()?;
    Ok(())
}
