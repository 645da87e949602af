//! CSV import and export. Floats are written in Rust's shortest round-trip
//! form, so output is bit-exact across reruns.

use crate::distribution::BreakthroughDistribution;
use crate::error::{Error, Result};
use crate::frontier::Frontier;
use crate::mechanism::{Mechanism, PostPromise};
use crate::mixture::{mixture_value, FrontierDistribution, MixtureOptions};
use crate::path::StepPath;
use crate::smoothing::SmoothedPair;
use crate::technology::Technology;
use crate::variational::ResidualPoint;

pub const FRONTIER_HEADER: [&str; 7] = ["u", "F0", "F1", "F0_left", "F0_right", "F1_left", "F1_right"];
pub const MECHANISM_HEADER: [&str; 4] = ["t", "x0", "X0", "X1"];
pub const DISTRIBUTION_HEADER: [&str; 3] = ["t", "atom_mass", "density"];
pub const RESIDUAL_HEADER: [&str; 5] = ["t", "residual", "phi0", "cum_phi1_dG", "one_minus_G"];
pub const SMOOTHING_HEADER: [&str; 5] = ["u", "F0n", "F1n", "dF0n", "dF1n"];

/// Import tolerance on recomputed promises.
pub const PROMISE_TOL: f64 = 1e-9;

fn write_rows<H: AsRef<[u8]>>(header: &[H], rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn frontiers_csv(tech: &Technology, grid: &[f64]) -> String {
    write_rows(
        &FRONTIER_HEADER,
        grid.iter().map(|&u| {
            let (f0, f1) = (&tech.f0, &tech.f1);
            vec![
                u,
                f0.eval(u),
                f1.eval(u),
                f0.left_deriv(u).to_f64(),
                f0.right_deriv(u).to_f64(),
                f1.left_deriv(u).to_f64(),
                f1.right_deriv(u).to_f64(),
            ]
        }),
    )
}

/// `u,F1_mixture,alloc_1..alloc_k`.
pub fn mixture_csv(dist: &FrontierDistribution, opts: MixtureOptions, grid: &[f64]) -> Result<String> {
    let mut header = vec!["u".to_string(), "F1_mixture".to_string()];
    header.extend((1..=dist.len()).map(|i| format!("alloc_{i}")));
    let rows = grid
        .iter()
        .map(|&u| {
            let res = mixture_value(dist, u, opts)?;
            let mut row = vec![u, res.value.to_f64()];
            row.extend(res.alloc.values);
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(write_rows(&header, rows.into_iter()))
}

pub fn mechanism_csv(m: &Mechanism, times: &[f64]) -> String {
    write_rows(
        &MECHANISM_HEADER,
        times.iter().map(|&t| vec![t, m.x0().at(t), m.big_x0(t), m.big_x1(t)]),
    )
}

pub fn distribution_csv(g: &BreakthroughDistribution) -> String {
    write_rows(&DISTRIBUTION_HEADER, g.rows().into_iter().map(|(t, a, d)| vec![t, a, d]))
}

pub fn residuals_csv(points: &[ResidualPoint]) -> String {
    write_rows(
        &RESIDUAL_HEADER,
        points.iter().map(|p| vec![p.t, p.residual, p.phi0, p.cum_phi1_dg, p.one_minus_g]),
    )
}

pub fn smoothing_csv(pair: &SmoothedPair, grid: &[f64]) -> String {
    write_rows(
        &SMOOTHING_HEADER,
        grid.iter()
            .map(|&u| vec![u, pair.f0n.eval(u), pair.f1n.eval(u), pair.f0n.deriv(u), pair.f1n.deriv(u)]),
    )
}

/// Numeric records of a CSV with the expected leading columns; returns
/// `(line, values)` per record.
fn read_rows(text: &str, expected: &[&str], optional: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    let required = expected.len() - optional;
    let got: Vec<&str> = header.iter().collect();
    let ok = got.len() >= required && got.len() <= expected.len() && got.iter().zip(expected).all(|(a, b)| a == b);
    if !ok {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {} (last {optional} optional), got {}", expected.join(","), got.join(",")),
        });
    }
    let width = got.len();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != width {
            return Err(Error::Parse { line, message: format!("expected {width} fields, got {}", rec.len()) });
        }
        let vals = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse { line, message: format!("`{s}` is not a finite number") })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push((line, vals));
    }
    Ok(out)
}

/// Reads `t,atom_mass,density` rows.
pub fn parse_distribution_csv(text: &str) -> Result<BreakthroughDistribution> {
    let rows = read_rows(text, &DISTRIBUTION_HEADER, 0)?;
    let line = rows.last().map_or(1, |r| r.0);
    let triples: Vec<(f64, f64, f64)> = rows.iter().map(|(_, v)| (v[0], v[1], v[2])).collect();
    BreakthroughDistribution::from_rows(&triples).map_err(|e| Error::Parse { line, message: e.to_string() })
}

/// Reads `t,x0` rows (with optional `X0,X1`) into a mechanism whose flow
/// steps at each `t`. Given promise columns must match the recomputed
/// promises within [`PROMISE_TOL`].
pub fn parse_mechanism_csv(text: &str, r: f64, post: PostPromise) -> Result<Mechanism> {
    let rows = read_rows(text, &MECHANISM_HEADER, 2)?;
    let Some(first) = rows.first() else {
        return Err(Error::Parse { line: 1, message: "no rows".into() });
    };
    if first.1[0] != 0.0 {
        return Err(Error::Parse { line: first.0, message: "first time must be 0".into() });
    }
    if let Some(w) = rows.windows(2).find(|w| !(w[1].1[0] > w[0].1[0])) {
        return Err(Error::Parse { line: w[1].0, message: "times must be strictly increasing".into() });
    }
    let times: Vec<f64> = rows.iter().map(|r| r.1[0]).collect();
    let flows: Vec<f64> = rows.iter().map(|r| r.1[1]).collect();
    let path = StepPath::new(times, flows)
        .map_err(|e| Error::Parse { line: first.0, message: e.to_string() })?
        .simplified();
    let m = Mechanism::new(path, post, r).map_err(|e| Error::Parse { line: first.0, message: e.to_string() })?;
    for (line, v) in &rows {
        let t = v[0];
        for (k, name, want) in [(2, "X0", m.big_x0(t)), (3, "X1", m.big_x1(t))] {
            if let Some(&got) = v.get(k) {
                if (got - want).abs() > PROMISE_TOL * (1.0 + want.abs()) {
                    return Err(Error::Parse {
                        line: *line,
                        message: format!("{name} = {got} at t = {t} does not match the recomputed {want}"),
                    });
                }
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::{make_deadline_mechanism, TimeGrid};
    use crate::technology::{make_moral_hazard_technology, MoralHazardPrimitives};
    use crate::ExtReal;

    fn tech() -> Technology {
        make_moral_hazard_technology(&MoralHazardPrimitives::sqrt_quadratic(1.0)).unwrap()
    }

    #[test]
    fn frontier_header_and_empty_grid() {
        let s = frontiers_csv(&tech(), &[]);
        assert_eq!(s, "u,F0,F1,F0_left,F0_right,F1_left,F1_right\n");
        let s = frontiers_csv(&tech(), &[0.0, 0.25]);
        assert_eq!(s.lines().count(), 3);
        assert!(s.lines().nth(1).unwrap().starts_with("0,0,"));
    }

    #[test]
    fn mechanism_round_trip() {
        let t = tech();
        let grid = TimeGrid::new(4.0, 0.5, 1.0).unwrap();
        let m = make_deadline_mechanism(ExtReal::Finite(1.5), &t, &grid);
        let csv = mechanism_csv(&m, &grid.points());
        let back = parse_mechanism_csv(&csv, 1.0, PostPromise::NoDelay { u1: t.u1 }).unwrap();
        assert_eq!(back.x0(), m.x0());
        let mut lines: Vec<String> = csv.lines().map(String::from).collect();
        let mut cols: Vec<String> = lines[1].split(',').map(String::from).collect();
        cols[2] = "0.9".into();
        lines[1] = cols.join(",");
        let tampered = lines.join("\n");
        assert!(matches!(
            parse_mechanism_csv(&tampered, 1.0, PostPromise::NoDelay { u1: t.u1 }),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn distribution_round_trip() {
        let g = BreakthroughDistribution::from_rows(&[(0.0, 0.0, 0.5), (0.5, 0.25, 0.0), (1.0, 0.0, 0.25)]).unwrap();
        let back = parse_distribution_csv(&distribution_csv(&g)).unwrap();
        assert_eq!(back, g);
        assert!(parse_distribution_csv("t,atom,density\n").is_err());
        assert!(matches!(
            parse_distribution_csv("t,atom_mass,density\n0,x,1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
