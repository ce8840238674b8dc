//! Row types for training curves and contract tables, and their one shared
//! CSV reader/writer.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: u64,
    pub seed: u64,
    pub algo: String,
    pub train_reward: f64,
    pub eval_reward: f64,
    pub eval_feasibility: f64,
    pub eval_utility: f64,
    pub eval_oracle_ratio: f64,
}

pub const CURVE_HEADER: [&str; 8] = [
    "step",
    "seed",
    "algo",
    "train_reward",
    "eval_reward",
    "eval_feasibility",
    "eval_utility",
    "eval_oracle_ratio",
];

/// One row per (state, type). Policy columns are empty for oracle-only
/// tables; oracle columns are empty when the oracle was not run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractRow {
    pub state_id: usize,
    pub n: u32,
    pub types: usize,
    pub l_max: f64,
    pub p_q: f64,
    pub theta_q: f64,
    pub q: usize,
    pub latency: Option<f64>,
    pub reward: Option<f64>,
    pub asp_utility: Option<f64>,
    pub client_utility: Option<f64>,
    pub oracle_latency: Option<f64>,
    pub oracle_reward: Option<f64>,
}

pub const CONTRACT_HEADER: [&str; 13] = [
    "state_id",
    "n",
    "types",
    "l_max",
    "p_q",
    "theta_q",
    "q",
    "latency",
    "reward",
    "asp_utility",
    "client_utility",
    "oracle_latency",
    "oracle_reward",
];

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

fn write_rows<W: Write, T: Serialize>(out: W, header: &[&str], rows: &[T]) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(input: R, header: &[&str]) -> csv::Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(csv::Error::from(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("unexpected header {found:?}, expected {header:?}"),
        )));
    }
    r.deserialize().collect()
}

pub fn write_curves<W: Write>(out: W, rows: &[CurveRow]) -> csv::Result<()> {
    write_rows(out, &CURVE_HEADER, rows)
}

pub fn read_curves<R: Read>(input: R) -> csv::Result<Vec<CurveRow>> {
    read_rows(input, &CURVE_HEADER)
}

pub fn write_contracts<W: Write>(out: W, rows: &[ContractRow]) -> csv::Result<()> {
    write_rows(out, &CONTRACT_HEADER, rows)
}

pub fn read_contracts<R: Read>(input: R) -> csv::Result<Vec<ContractRow>> {
    read_rows(input, &CONTRACT_HEADER)
}

/// Sorts by seed, then algorithm, then step.
pub fn sort_curves(rows: &mut [CurveRow]) {
    rows.sort_by(|a, b| (a.seed, &a.algo, a.step).cmp(&(b.seed, &b.algo, b.step)));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64) -> CurveRow {
        CurveRow {
            step,
            seed: 3,
            algo: "diffusion".into(),
            train_reward: -1.25,
            eval_reward: 81234.5,
            eval_feasibility: 0.995,
            eval_utility: 1e-7,
            eval_oracle_ratio: 0.1 + 0.2,
        }
    }

    #[test]
    fn curves_round_trip_exactly() {
        let rows = vec![row(1000), row(2000)];
        let mut buf = Vec::new();
        write_curves(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("step,seed,algo,train_reward,"));
        assert!(!text.contains('\r'));
        assert_eq!(read_curves(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn header_only_is_valid() {
        let mut buf = Vec::new();
        write_curves(&mut buf, &[]).unwrap();
        assert!(read_curves(buf.as_slice()).unwrap().is_empty());
        assert!(read_curves("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn optional_contract_columns() {
        let r = ContractRow {
            state_id: 0,
            n: 50,
            types: 2,
            l_max: 3.5,
            p_q: 0.4,
            theta_q: 20.0,
            q: 1,
            latency: None,
            reward: None,
            asp_utility: None,
            client_utility: None,
            oracle_latency: Some(3.5),
            oracle_reward: Some(0.0),
        };
        let mut buf = Vec::new();
        write_contracts(&mut buf, std::slice::from_ref(&r)).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().contains(",1,,,,,3.5,0.0"));
        assert_eq!(read_contracts(buf.as_slice()).unwrap(), vec![r]);
    }
}
