//! CSV emission with shortest round-trip float formatting.

use std::fmt::Write;

use atomlaser_core::{Spectrum, TimeSeries};

pub const TIMESERIES_HEADER: &str = "t,N_A,N_B,N_C,N_plus,N_minus";
pub const SPECTRUM_HEADER: &str = "omega,raw,density";

/// Shortest decimal string that parses back to the same `f64`.
pub fn float(x: f64) -> String {
    format!("{x:?}")
}

fn push_row(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&float(*v));
    }
    out.push('\n');
}

pub fn manifest_line(hash: &str) -> String {
    format!("# manifest: {hash}\n")
}

pub fn timeseries_csv(hash: &str, s: &TimeSeries) -> String {
    let mut out = manifest_line(hash);
    writeln!(out, "{TIMESERIES_HEADER}").unwrap();
    for i in 0..s.len() {
        push_row(
            &mut out,
            &[
                s.times[i],
                s.n_a[i],
                s.n_b[i],
                s.n_c[i],
                s.n_plus[i],
                s.n_minus[i],
            ],
        );
    }
    out
}

pub fn spectrum_csv(hash: &str, s: &Spectrum) -> String {
    let mut out = manifest_line(hash);
    writeln!(out, "{SPECTRUM_HEADER}").unwrap();
    for i in 0..s.omegas.len() {
        push_row(&mut out, &[s.omegas[i], s.raw[i], s.density[i]]);
    }
    out
}

/// Data rows only, without the manifest reference.
pub fn body(csv: &str) -> &str {
    match csv.strip_prefix("# manifest: ") {
        Some(rest) => rest.split_once('\n').map_or("", |(_, b)| b),
        None => csv,
    }
}
