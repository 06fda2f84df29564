use dpfc::sensitivity::{compare, Cutoff, SensitivityPoint};

use crate::format::sig;

#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    /// Failure probability; K_δ = Q⁻¹(δ)
    #[arg(long, default_value_t = 0.00135, conflicts_with = "k_delta")]
    pub delta: f64,
    /// Use K_δ directly instead of deriving it from --delta
    #[arg(long)]
    pub k_delta: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Adjacency radius
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda2: f64,
}

pub fn run(args: &Args) -> anyhow::Result<()> {
    let point = match args.k_delta {
        Some(k) => SensitivityPoint::with_k_delta(args.epsilon, k, args.b, args.gamma, args.n, args.lambda2)?,
        None => SensitivityPoint::new(args.epsilon, args.delta, args.b, args.gamma, args.n, args.lambda2)?,
    };
    let r = compare(&point)?;
    println!(
        "epsilon {}  K_delta {}  gamma {}  N {}  b {}  lambda2 {}",
        sig(point.epsilon),
        sig(point.k_delta),
        sig(point.gamma),
        point.n,
        sig(point.b),
        sig(point.lambda2)
    );
    println!("error bound: {}", sig(point.bound()));
    println!("dB/d_epsilon: {}", sig(r.d_epsilon));
    println!("dB/d_lambda2: {}", sig(r.d_lambda2));
    println!("verdict: {}", r.verdict);
    println!(
        "quadratic criterion: {} -> {}{}",
        sig(r.quadratic),
        r.quadratic_verdict,
        if r.quadratic_agrees() { "" } else { "  (disagrees with verdict)" }
    );
    let show = |c: &Cutoff| match c.value {
        Some(v) => sig(v),
        None => format!("none (radicand {})", sig(c.radicand)),
    };
    println!(
        "crossover cutoffs: upper {}  lower {}  (alpha {}, eta1 {}, eta2 {})",
        show(&r.cutoffs.upper),
        show(&r.cutoffs.lower),
        sig(r.cutoffs.alpha),
        sig(r.cutoffs.eta1),
        sig(r.cutoffs.eta2)
    );
    println!(
        "cutoff verdict: {}{}",
        r.cutoff_verdict,
        if r.cutoffs_agree() { "" } else { "  (disagrees with verdict)" }
    );
    let limit = 1.0 / point.gamma;
    if r.in_validity_region {
        println!("validity: lambda2 < 1/gamma = {}; both partials are negative", sig(limit));
    } else {
        println!(
            "validity: lambda2 >= 1/gamma = {}; the lambda2 partial is not negative and the verdicts are outside their validity region",
            sig(limit)
        );
    }
    Ok(())
}
