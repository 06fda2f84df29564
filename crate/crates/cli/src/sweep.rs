use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use dpfc::bounds::{bound_surface, linspace, SurfacePoint};

use crate::format::{csv_writer, exact, output_dir, sig};

#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.02)]
    pub gamma: f64,
    /// Adjacency radius
    #[arg(long, default_value_t = 5.0)]
    pub b: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eps_max: f64,
    #[arg(long, default_value_t = 50)]
    pub eps_steps: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda2_min: f64,
    #[arg(long, default_value_t = 50.0)]
    pub lambda2_max: f64,
    #[arg(long, default_value_t = 50)]
    pub lambda2_steps: usize,
    /// Output directory for surface.csv and surface.dat
    #[arg(long, default_value = "dpfc-out")]
    pub out: PathBuf,
}

pub fn run(args: &Args) -> anyhow::Result<()> {
    let eps = linspace(args.eps_min, args.eps_max, args.eps_steps);
    let l2s = linspace(args.lambda2_min, args.lambda2_max, args.lambda2_steps);
    let surface = bound_surface(&eps, &l2s, args.n, args.delta, args.b, args.gamma)?;
    let dir = output_dir(&args.out)?;

    let csv_path = dir.join("surface.csv");
    let mut w = csv_writer(&csv_path)?;
    w.write_record(["epsilon", "lambda2", "bound"])?;
    for p in &surface {
        w.write_record([exact(p.epsilon), exact(p.lambda2), exact(p.bound)])?;
    }
    w.flush()?;

    // gnuplot `splot` layout: whitespace columns, blank line between ε blocks.
    let dat_path = dir.join("surface.dat");
    let mut dat = std::io::BufWriter::new(
        std::fs::File::create(&dat_path).with_context(|| format!("creating {}", dat_path.display()))?,
    );
    writeln!(dat, "# epsilon lambda2 bound")?;
    let mut prev: Option<f64> = None;
    for p in &surface {
        if prev.is_some_and(|e| e != p.epsilon) {
            writeln!(dat)?;
        }
        writeln!(dat, "{} {} {}", exact(p.epsilon), exact(p.lambda2), exact(p.bound))?;
        prev = Some(p.epsilon);
    }
    dat.flush()?;

    let (eps_viol, l2_viol) = monotonicity_violations(&surface, args.gamma);
    let (lo, hi) = surface
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.bound), hi.max(p.bound)));
    println!(
        "{} grid points  N {}  delta {}  gamma {}  b {}",
        surface.len(),
        args.n,
        sig(args.delta),
        sig(args.gamma),
        sig(args.b)
    );
    println!("bound range [{}, {}]", sig(lo), sig(hi));
    println!("monotonicity violations: {eps_viol} along epsilon, {l2_viol} along lambda2 (on lambda2 <= 1/gamma)");
    println!("wrote {} and {}", csv_path.display(), dat_path.display());
    Ok(())
}

/// Counts adjacent grid pairs where the bound fails to strictly decrease in
/// ε (fixed λ2) or in λ2 (fixed ε, λ2 ≤ 1/γ). Expects the ε-major layout of
/// [`bound_surface`] with both axes increasing.
pub fn monotonicity_violations(surface: &[SurfacePoint], gamma: f64) -> (usize, usize) {
    let Some(first) = surface.first() else {
        return (0, 0);
    };
    let row = surface.iter().take_while(|p| p.epsilon == first.epsilon).count();
    let rows: Vec<&[SurfacePoint]> = surface.chunks(row).collect();
    let l2_viol = rows
        .iter()
        .flat_map(|r| r.windows(2))
        .filter(|w| gamma * w[1].lambda2 <= 1.0 && w[1].bound >= w[0].bound)
        .count();
    let eps_viol = rows
        .windows(2)
        .flat_map(|pair| pair[0].iter().zip(pair[1].iter()))
        .filter(|(a, b)| b.bound >= a.bound)
        .count();
    (eps_viol, l2_viol)
}
