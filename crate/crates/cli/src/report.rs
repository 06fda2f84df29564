use dpfc::bounds::BoundReport;
use dpfc::config::SigmaSpec;

use crate::format::sig;
use crate::ConfigArg;

#[derive(clap::Args, Debug)]
pub struct Args {
    #[command(flatten)]
    pub config: ConfigArg,
}

pub fn run(args: &Args) -> anyhow::Result<()> {
    let cfg = args.config.load()?;
    let graph = cfg.graph.build()?;
    let n = graph.node_count();
    let params = cfg.privacy_params(n)?;
    let sigmas = match &cfg.sigma {
        None => None,
        Some(SigmaSpec::Shared(s)) => Some(vec![*s; n]),
        Some(SigmaSpec::PerAgent(list)) => Some(list.clone()),
    };
    let r = BoundReport::compute(&graph, cfg.gamma, &params, sigmas.as_deref())?;
    let yes = |b: bool| if b { "satisfied" } else { "VIOLATED" };

    println!("agents {}  gamma {}  lambda2 {}", r.node_count, sig(r.gamma), sig(r.lambda2));
    println!(
        "max weighted degree {}  gamma*d_i < 1 at every node: {}  gamma < 1/d_max: {}",
        sig(r.max_degree),
        yes(r.degree_condition),
        yes(r.step_condition)
    );
    let fmt = |v: &[f64]| v.iter().map(|&x| sig(x)).collect::<Vec<_>>().join(" ");
    println!("noise scales: {}", fmt(&r.sigmas));
    println!("per-agent noise variances s_i^2: {}", fmt(&r.noise_variances));
    println!(
        "Kemeny constant of P^2: {}  closed-form range ({}, {}]",
        sig(r.kemeny_squared),
        sig(r.kemeny_lower),
        sig(r.kemeny_upper)
    );
    println!("exact steady-state error, broadcast noise: {}", sig(r.exact_broadcast));
    println!("exact steady-state error, uncorrelated noise diag(s^2): {}", sig(r.exact));
    println!(
        "Kemeny sandwich: [{}, {}]",
        sig(r.sandwich_lower),
        sig(r.sandwich_upper)
    );
    println!("general error bound: {}", sig(r.general_bound));
    match r.homogeneous_bound {
        Some(b) => println!("shared-parameter error bound: {}", sig(b)),
        None => println!("shared-parameter error bound: n/a (agents differ)"),
    }
    Ok(())
}
