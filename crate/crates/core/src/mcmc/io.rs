//! On-disk layout of posterior draws: one `chain,iteration,value` CSV per
//! scalar parameter plus `meta.json` listing parameters in order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DrawsMeta, PosteriorDraws};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    file: String,
}

#[derive(Serialize, Deserialize)]
struct MetaFile {
    meta: DrawsMeta,
    parameters: Vec<ParamEntry>,
}

fn file_name(i: usize, name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect();
    format!("{i:05}_{clean}.csv")
}

pub fn write_draws(draws: &PosteriorDraws, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(draws.names().len());
    for (i, name) in draws.names().iter().enumerate() {
        let file = file_name(i, name);
        let path = dir.join(&file);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["chain", "iteration", "value"])?;
        for (c, chain) in draws.by_index(i).iter().enumerate() {
            for (it, v) in chain.iter().enumerate() {
                w.write_record([c.to_string(), it.to_string(), v.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        entries.push(ParamEntry {
            name: name.clone(),
            file,
        });
    }
    let meta = MetaFile {
        meta: draws.meta.clone(),
        parameters: entries,
    };
    let path = dir.join("meta.json");
    fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))
}

pub fn read_draws(dir: &Path) -> Result<PosteriorDraws> {
    let path = dir.join("meta.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: MetaFile = serde_json::from_str(&text)?;
    let (chains, kept) = (meta.meta.chains, meta.meta.kept);
    let mut names = Vec::with_capacity(meta.parameters.len());
    let mut values = Vec::with_capacity(meta.parameters.len());
    for entry in &meta.parameters {
        let p = dir.join(&entry.file);
        let mut rdr = csv::Reader::from_path(&p)?;
        let mut v = vec![vec![f64::NAN; kept]; chains];
        for rec in rdr.records() {
            let rec = rec?;
            let bad = |what: &str| Error::Malformed {
                file: p.display().to_string(),
                line: rec.position().map_or(0, |pos| pos.line()),
                column: what.to_string(),
                message: "unparseable or out of range".into(),
            };
            let c: usize = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("chain"))?;
            let it: usize = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("iteration"))?;
            let x: f64 = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("value"))?;
            *v.get_mut(c).and_then(|ch| ch.get_mut(it)).ok_or_else(|| bad("chain"))? = x;
        }
        names.push(entry.name.clone());
        values.push(v);
    }
    Ok(PosteriorDraws::new(names, values, meta.meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let d = PosteriorDraws::new(
            vec!["a".into(), "delta[UP]".into()],
            vec![
                vec![vec![0.1, 1.0 / 3.0], vec![-2.5, 1e-300]],
                vec![vec![7.0, 8.0], vec![9.0, f64::MAX]],
            ],
            DrawsMeta {
                chains: 2,
                kept: 2,
                seed: 9,
                model: "toy".into(),
                ..DrawsMeta::default()
            },
        );
        let dir = tempfile::tempdir().unwrap();
        write_draws(&d, dir.path()).unwrap();
        assert!(dir.path().join("00001_delta_UP_.csv").exists());
        let back = read_draws(dir.path()).unwrap();
        assert_eq!(back, d);
    }
}
