//! Dataset files: JSON (`DatasetFile` layout) and long-format CSV.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::{Dataset, DatasetFile, Probe, Response};
use crate::error::{input_err, Result};

/// CSV header for `n` dimensions: `t,agent,alpha_1..alpha_N,beta_1..beta_N`.
pub fn csv_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "agent".to_string()];
    h.extend((1..=n).map(|k| format!("alpha_{k}")));
    h.extend((1..=n).map(|k| format!("beta_{k}")));
    h
}

/// One row per `(t, agent)`, both 1-based; probe values repeat across agents.
pub fn write_dataset_csv<W: Write>(d: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(d.n_dims()))?;
    for t in 0..d.horizon() {
        for i in 0..d.n_agents() {
            let mut row = vec![(t + 1).to_string(), (i + 1).to_string()];
            row.extend(d.probe(t).values().iter().map(f64::to_string));
            row.extend(d.response(t, i).iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(input: R) -> Result<Dataset> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.len() < 4 || (header.len() - 2) % 2 != 0 {
        return Err(input_err("CSV header must be t,agent,alpha_1..alpha_N,beta_1..beta_N"));
    }
    let n = (header.len() - 2) / 2;
    let expected = csv_header(n);
    if header.iter().zip(&expected).any(|(a, b)| a.trim() != b) {
        return Err(input_err(format!("unexpected CSV header; expected {}", expected.join(","))));
    }
    let mut rows: Vec<(usize, usize, Vec<f64>, Vec<f64>)> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| -> Result<f64> {
            rec[k].trim().parse::<f64>().map_err(|_| input_err(format!("row {}: field {} is not a number: {:?}", line + 2, expected[k], &rec[k])))
        };
        let index = |k: usize| -> Result<usize> {
            rec[k]
                .trim()
                .parse::<usize>()
                .ok()
                .filter(|v| *v >= 1)
                .ok_or_else(|| input_err(format!("row {}: field {} must be a 1-based index", line + 2, expected[k])))
        };
        let (t, i) = (index(0)?, index(1)?);
        let alpha = (0..n).map(|k| field(2 + k)).collect::<Result<Vec<_>>>()?;
        let beta = (0..n).map(|k| field(2 + n + k)).collect::<Result<Vec<_>>>()?;
        rows.push((t - 1, i - 1, alpha, beta));
    }
    let horizon = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let agents = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if rows.len() != horizon * agents {
        return Err(input_err(format!("expected {} rows for T={horizon}, M={agents}, found {}", horizon * agents, rows.len())));
    }
    let mut probes: Vec<Option<Vec<f64>>> = vec![None; horizon];
    let mut grid: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; agents]; horizon];
    for (t, i, alpha, beta) in rows {
        match &probes[t] {
            Some(p) if *p != alpha => return Err(input_err(format!("probe values differ across agents at t={}", t + 1))),
            _ => probes[t] = Some(alpha),
        }
        if grid[t][i].replace(beta).is_some() {
            return Err(input_err(format!("duplicate row for t={}, agent={}", t + 1, i + 1)));
        }
    }
    let probes = probes.into_iter().map(|p| Probe::new(p.expect("every t has rows"))).collect::<Result<Vec<_>>>()?;
    let responses = grid
        .into_iter()
        .map(|row| row.into_iter().map(|b| Response::new(b.expect("row count checked"))).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(probes, responses)
}

pub fn read_dataset_json<R: Read>(input: R) -> Result<Dataset> {
    let raw: DatasetFile = serde_json::from_reader(input)?;
    Dataset::try_from(raw)
}

pub fn write_dataset_json<W: Write>(d: &Dataset, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, d)?;
    Ok(())
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Loads a dataset, choosing CSV for `.csv` files and JSON otherwise.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let f = BufReader::new(File::open(path)?);
    if is_csv(path) {
        read_dataset_csv(f)
    } else {
        read_dataset_json(f)
    }
}

pub fn save_dataset(d: &Dataset, path: &Path) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    if is_csv(path) {
        write_dataset_csv(d, &mut f)?;
    } else {
        write_dataset_json(d, &mut f)?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{gen_noncoordinating, ScenarioConfig};

    #[test]
    fn csv_round_trip() {
        let d = gen_noncoordinating(&ScenarioConfig::reference(4, 5)).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,agent,alpha_1,alpha_2,beta_1,beta_2\n1,1,"));
        assert_eq!(read_dataset_csv(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn json_round_trip() {
        let d = gen_noncoordinating(&ScenarioConfig::reference(3, 8)).unwrap();
        let mut buf = Vec::new();
        write_dataset_json(&d, &mut buf).unwrap();
        assert_eq!(read_dataset_json(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn csv_errors_name_fields() {
        let bad = "t,agent,alpha_1,beta_1\n1,1,x,0.5\n";
        let err = read_dataset_csv(bad.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("alpha_1"), "{err}");
        let mismatch = "t,agent,alpha_1,beta_1\n1,1,1.0,0.5\n1,2,2.0,0.5\n";
        assert!(read_dataset_csv(mismatch.as_bytes()).is_err());
    }
}
