use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::Context;

/// Nine significant digits, `%g` style: fixed notation for exponents in
/// `[-5, 9)`, scientific otherwise, trailing zeros removed.
pub fn sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        trim_zeros(format!("{:.*}", (8 - exp) as usize, x))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn exact(x: f64) -> String {
    format!("{x:?}")
}

pub fn percent(x: f64) -> String {
    format!("{}%", sig(100.0 * x))
}

pub fn output_dir(dir: &Path) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

pub fn csv_writer(path: &Path) -> anyhow::Result<csv::Writer<File>> {
    csv::Writer::from_path(path).with_context(|| format!("opening {}", path.display()))
}
