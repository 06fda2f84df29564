use std::path::PathBuf;

use dpfc::bounds::{design_threshold, threshold_table, DesignParams, ThresholdCell, DISCREPANCY_TOL, TABLE_SIZES};
use dpfc::Topology;

use crate::format::{csv_writer, exact, output_dir, percent, sig};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Topology: complete, cycle, line or star
    #[arg(long, default_value = "complete")]
    pub kind: Topology,
    /// Number of agents
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    /// Adjacency radius
    #[arg(long, default_value_t = 5.0)]
    pub b: f64,
    /// Uniform edge weight
    #[arg(long, default_value_t = 1.0)]
    pub w: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub gamma: f64,
    /// Required steady-state error
    #[arg(long = "e-r", default_value_t = 100.0)]
    pub e_r: f64,
    /// Full 4×4 table over N = 10, 100, 1000, 10000
    #[arg(long)]
    pub table1: bool,
    /// Write table1.csv here (with --table1)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &Args) -> anyhow::Result<()> {
    let params = DesignParams {
        delta: args.delta,
        b: args.b,
        w: args.w,
        gamma: args.gamma,
        e_r: args.e_r,
    };
    if args.table1 {
        return table(&params, args.out.as_ref());
    }
    let cell = design_threshold(args.kind, args.n, &params)?;
    println!("topology {}  N {}  lambda2 {}", cell.topology, cell.n, sig(cell.lambda2));
    println!("epsilon threshold (numeric): {}", sig(cell.numeric));
    println!("epsilon threshold (closed form): {}", sig(cell.closed_form));
    println!(
        "deviation: {}{}",
        percent(cell.deviation),
        if cell.is_discrepant() {
            "  (discrepant: closed form differs from the numeric root)"
        } else {
            ""
        }
    );
    Ok(())
}

fn table(params: &DesignParams, out: Option<&PathBuf>) -> anyhow::Result<()> {
    let cells = threshold_table(params, &TABLE_SIZES)?;
    let lookup = |t: Topology, n: usize| -> &ThresholdCell {
        cells
            .iter()
            .find(|c| c.topology == t && c.n == n)
            .expect("table covers every cell")
    };
    for (title, pick) in [
        ("epsilon thresholds (numeric)", (|c: &ThresholdCell| c.numeric) as fn(&ThresholdCell) -> f64),
        ("epsilon thresholds (closed form)", |c: &ThresholdCell| c.closed_form),
    ] {
        println!("{title}");
        print!("{:<10}", "topology");
        for n in TABLE_SIZES {
            print!("{:>16}", format!("N={n}"));
        }
        println!();
        for t in Topology::ALL {
            print!("{:<10}", t.name());
            for n in TABLE_SIZES {
                print!("{:>16}", sig(pick(lookup(t, n))));
            }
            println!();
        }
        println!();
    }
    let discrepant: Vec<&ThresholdCell> = cells.iter().filter(|c| c.is_discrepant()).collect();
    println!(
        "discrepancy report: {} of {} closed-form values deviate from the numeric threshold by more than {}",
        discrepant.len(),
        cells.len(),
        percent(DISCREPANCY_TOL)
    );
    for c in discrepant {
        println!(
            "  {:<8} N={:<6} numeric {:>14}  closed form {:>14}  deviation {}",
            c.topology.name(),
            c.n,
            sig(c.numeric),
            sig(c.closed_form),
            percent(c.deviation)
        );
    }
    if let Some(dir) = out {
        let path = output_dir(dir)?.join("table1.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["topology", "n", "lambda2", "numeric", "closed_form", "deviation", "discrepant"])?;
        for c in &cells {
            w.write_record([
                c.topology.name().to_string(),
                c.n.to_string(),
                exact(c.lambda2),
                exact(c.numeric),
                exact(c.closed_form),
                exact(c.deviation),
                c.is_discrepant().to_string(),
            ])?;
        }
        w.flush()?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
