//! CSV and JSON writers. Every float is printed the same way on every run.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::Serialize;
use viraldyn::{ModelVariant, Trajectory};

/// Scientific notation with 17 significant digits, enough to round-trip
/// any `f64`.
pub fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

/// C-style `%.{prec}e`: `1.000e-06` rather than Rust's `1.000e-6`.
pub fn c_exp(v: f64, prec: usize) -> String {
    let s = format!("{v:.prec$e}");
    let Some((mantissa, exp)) = s.split_once('e') else {
        return s; // inf / NaN
    };
    let (sign, digits) = match exp.strip_prefix('-') {
        Some(d) => ('-', d),
        None => ('+', exp),
    };
    format!("{mantissa}e{sign}{digits:0>2}")
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let latent = traj.variant == ModelVariant::Latent;
    let mut out = String::from(if latent {
        "t,T,I,V,A,L\n"
    } else {
        "t,T,I,V,A\n"
    });
    for s in &traj.points {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            sci(s.t),
            sci(s.target),
            sci(s.infected),
            sci(s.virus),
            sci(s.antibody)
        );
        if latent {
            let _ = write!(out, ",{}", sci(s.latent.unwrap_or(0.0)));
        }
        out.push('\n');
    }
    for e in &traj.events {
        let _ = writeln!(out, "#event,{},{}", e.kind, sci(e.t));
    }
    out
}

pub fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> io::Result<()> {
    std::fs::write(path, trajectory_csv(traj))
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}
