//! Parameter sweep over a `(h, L, beta)` grid.
//!
//! Each cell becomes one JSON line in the results file. A sidecar index file
//! (`<out>.index`) lists finished cells one per line, so an interrupted run
//! picks up where it stopped. Workers compute cells in parallel; a single
//! collector writes records in grid order.

use std::collections::{BTreeMap, HashSet};
use std::fs::OpenOptions;
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use boltzmann::orbits::{estimate_beta_bar, find_periodic_orbit, BetaBarOptions, OrbitOptions};
use boltzmann::symdyn::all_words;
use boltzmann::{Params, SymbolWord};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::output::SCHEMA_VERSION;

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub h: Vec<f64>,
    pub l: Vec<f64>,
    pub beta: Vec<f64>,
    pub word_length: usize,
    pub symbols: Vec<i64>,
    pub seed: u64,
    pub orbit: OrbitOptions,
    pub beta_bar: BetaBarOptions,
    pub threads: Option<usize>,
    pub max_cells: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub params: Params,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordCountRecord {
    pub n: usize,
    pub attempted: usize,
    pub realized: usize,
    pub failures: Vec<(Vec<i64>, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub schema_version: u32,
    pub cell: usize,
    pub seed: u64,
    pub h: f64,
    pub l: f64,
    pub beta: f64,
    pub beta_bar: Option<f64>,
    pub beta_bar_capped: Option<bool>,
    pub word_counts: Vec<WordCountRecord>,
    pub max_reflection_residual: Option<f64>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepSummary {
    pub total: usize,
    pub already_done: usize,
    pub computed: usize,
    pub remaining: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.h.is_empty() || self.l.is_empty() || self.beta.is_empty() {
            return Err(CliError::Usage("every grid axis needs at least one value".into()));
        }
        for &h in &self.h {
            for &l in &self.l {
                for &b in &self.beta {
                    Params::new(h, l, b).map_err(|e| CliError::Usage(e.to_string()))?;
                }
            }
        }
        if self.symbols.is_empty() || self.symbols.contains(&0) {
            return Err(CliError::Usage("symbols must be a non-empty list of nonzero windings".into()));
        }
        Ok(())
    }

    /// Cells in the order `h`, then `L`, then `beta`.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &h in &self.h {
            for &l in &self.l {
                for &beta in &self.beta {
                    out.push(Cell { index: out.len(), params: Params { h, l, beta } });
                }
            }
        }
        out
    }
}

pub fn run_cell(cell: &Cell, spec: &SweepSpec) -> CellRecord {
    let p = cell.params;
    let mut errors = Vec::new();
    let (beta_bar, capped) = match estimate_beta_bar(&p, &spec.beta_bar) {
        Ok(b) => (Some(b.beta_bar), Some(b.capped)),
        Err(e) => {
            errors.push(format!("beta_bar: {e}"));
            (None, None)
        }
    };
    let mut symbols = spec.symbols.clone();
    symbols.sort_unstable();
    symbols.dedup();
    let mut counts = Vec::new();
    let mut max_res: Option<f64> = None;
    for n in 1..=spec.word_length {
        let words = all_words(n, &symbols);
        let mut failures = Vec::new();
        for w in &words {
            let res = SymbolWord::periodic(w.clone())
                .and_then(|word| find_periodic_orbit(&word, &p, &spec.orbit))
                .and_then(|o| o.certify(&spec.orbit).map(|_| o.max_residual()));
            match res {
                Ok(r) => max_res = Some(max_res.map_or(r, |m| m.max(r))),
                Err(e) => failures.push((w.clone(), e.to_string())),
            }
        }
        counts.push(WordCountRecord { n, attempted: words.len(), realized: words.len() - failures.len(), failures });
    }
    CellRecord {
        schema_version: SCHEMA_VERSION,
        cell: cell.index,
        seed: spec.seed,
        h: p.h,
        l: p.l,
        beta: p.beta,
        beta_bar,
        beta_bar_capped: capped,
        word_counts: counts,
        max_reflection_residual: max_res,
        errors,
    }
}

pub fn index_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".index");
    PathBuf::from(s)
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Complete lines of a file; a trailing fragment without newline is dropped.
fn complete_lines(path: &Path) -> Result<Vec<String>, CliError> {
    let mut text = String::new();
    match std::fs::File::open(path) {
        Ok(mut f) => f.read_to_string(&mut text).map_err(|e| io_err(path, e))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path, e)),
    };
    let mut lines: Vec<String> = text.split_inclusive('\n').map(str::to_owned).collect();
    if lines.last().is_some_and(|l| !l.ends_with('\n')) {
        lines.pop();
    }
    Ok(lines)
}

/// Bring the results file and the index back into agreement: keep the
/// longest prefix of records that are listed in the index and match the
/// grid, truncate the rest and rewrite the index to match.
fn recover(out: &Path, index: &Path, cells: &[Cell]) -> Result<HashSet<usize>, CliError> {
    let listed: HashSet<usize> = complete_lines(index)?.iter().filter_map(|l| l.trim().parse().ok()).collect();
    let mut kept = HashSet::new();
    let mut order = Vec::new();
    let mut keep_bytes = 0u64;
    for line in complete_lines(out)? {
        let Ok(rec) = serde_json::from_str::<CellRecord>(&line) else { break };
        if !listed.contains(&rec.cell) || kept.contains(&rec.cell) {
            break;
        }
        let Some(cell) = cells.get(rec.cell) else {
            return Err(CliError::Usage(format!("{} holds cell {} outside the grid", out.display(), rec.cell)));
        };
        if cell.params != (Params { h: rec.h, l: rec.l, beta: rec.beta }) {
            return Err(CliError::Usage(format!("{} was written for a different grid", out.display())));
        }
        kept.insert(rec.cell);
        order.push(rec.cell);
        keep_bytes += line.len() as u64;
    }
    if out.exists() {
        let f = OpenOptions::new().write(true).open(out).map_err(|e| io_err(out, e))?;
        f.set_len(keep_bytes).map_err(|e| io_err(out, e))?;
    }
    let text: String = order.iter().map(|i| format!("{i}\n")).collect();
    std::fs::write(index, text).map_err(|e| io_err(index, e))?;
    Ok(kept)
}

pub fn run_sweep(spec: &SweepSpec, out: &Path) -> Result<SweepSummary, CliError> {
    spec.validate()?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let cells = spec.cells();
    let index = index_path(out);
    let done = recover(out, &index, &cells)?;
    let pending: Vec<Cell> = cells.iter().filter(|c| !done.contains(&c.index)).copied().collect();
    let batch: Vec<Cell> = pending.iter().take(spec.max_cells.unwrap_or(usize::MAX)).copied().collect();

    let mut results = OpenOptions::new().create(true).append(true).open(out).map_err(|e| io_err(out, e))?;
    results.seek(SeekFrom::End(0)).map_err(|e| io_err(out, e))?;
    let mut idx = OpenOptions::new().create(true).append(true).open(&index).map_err(|e| io_err(&index, e))?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = spec.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(e.to_string()))?;

    let (tx, rx) = mpsc::channel::<(usize, CellRecord)>();
    let mut write_error = None;
    std::thread::scope(|scope| {
        scope.spawn(|| {
            pool.scope(|s| {
                for (slot, cell) in batch.iter().enumerate() {
                    let tx = tx.clone();
                    s.spawn(move |_| {
                        let _ = tx.send((slot, run_cell(cell, spec)));
                    });
                }
            });
            drop(tx);
        });
        // the collector: records go out in grid order
        let mut buffered = BTreeMap::new();
        let mut next = 0;
        for (slot, rec) in rx.iter() {
            buffered.insert(slot, rec);
            while let Some(rec) = buffered.remove(&next) {
                if write_error.is_none() {
                    write_error = append(&mut results, out, &mut idx, &index, &rec).err();
                }
                next += 1;
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    Ok(SweepSummary {
        total: cells.len(),
        already_done: done.len(),
        computed: batch.len(),
        remaining: pending.len() - batch.len(),
    })
}

fn append(
    results: &mut std::fs::File,
    out: &Path,
    idx: &mut std::fs::File,
    index: &Path,
    rec: &CellRecord,
) -> Result<(), CliError> {
    let line = serde_json::to_string(rec).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(results, "{line}").and_then(|_| results.sync_data()).map_err(|e| io_err(out, e))?;
    writeln!(idx, "{}", rec.cell).and_then(|_| idx.sync_data()).map_err(|e| io_err(index, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SweepSpec {
        SweepSpec {
            h: vec![0.5, 1.0],
            l: vec![1.0],
            beta: vec![0.0, 0.01],
            word_length: 1,
            symbols: vec![1],
            seed: 0,
            orbit: OrbitOptions::default(),
            beta_bar: BetaBarOptions { c_points: 50, phi_points: 50, rel_tol: 1e-4 },
            threads: Some(2),
            max_cells: None,
        }
    }

    #[test]
    fn cells_in_grid_order() {
        let c = spec().cells();
        assert_eq!(c.len(), 4);
        assert_eq!(c[1].params, Params { h: 0.5, l: 1.0, beta: 0.01 });
        assert_eq!(c[2].params.h, 1.0);
    }

    #[test]
    fn invalid_grids_are_usage_errors() {
        let mut s = spec();
        s.beta.push(-0.1);
        assert!(matches!(s.validate(), Err(CliError::Usage(_))));
        let mut s = spec();
        s.symbols = vec![1, 0];
        assert!(matches!(s.validate(), Err(CliError::Usage(_))));
    }

    #[test]
    fn truncated_results_are_recovered() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("r.jsonl");
        let s = SweepSpec { max_cells: Some(2), ..spec() };
        run_sweep(&s, &out).unwrap();
        let full = std::fs::read_to_string(&out).unwrap();
        // a record whose index line never made it, plus a torn line
        let extra = full.lines().next().unwrap().replace("\"cell\":0", "\"cell\":2");
        std::fs::write(&out, format!("{full}{extra}\n{{\"cell\"")).unwrap();
        let cells = s.cells();
        let kept = recover(&out, &index_path(&out), &cells).unwrap();
        assert_eq!(kept, HashSet::from([0, 1]));
        assert_eq!(std::fs::read_to_string(&out).unwrap(), full);
    }
}
