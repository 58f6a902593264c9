//! 4 scales x 4 tasks evaluation grids (MM-FID and MM-STD).

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{FeatureSet, Scale, Task};
use super::frechet::{frechet_distance, gaussian_summary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GridKind {
    Fid,
    Std,
}

/// Rows are scales (128..1024), columns are tasks in [`Task::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub kind: GridKind,
    pub scales: Vec<Scale>,
    pub tasks: Vec<Task>,
    pub cells: [[f64; 4]; 4],
    pub normalized: bool,
    pub flags: Vec<String>,
    /// MM-STD only: per-dimension standard deviations behind each cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_dimension_std: Option<Vec<Vec<Vec<f64>>>>,
}

impl EvalGrid {
    pub fn new(kind: GridKind, cells: [[f64; 4]; 4]) -> Self {
        Self {
            kind,
            scales: Scale::ALL.to_vec(),
            tasks: Task::ALL.to_vec(),
            cells,
            normalized: false,
            flags: Vec::new(),
            per_dimension_std: None,
        }
    }

    pub fn cell(&self, scale: Scale, task: Task) -> f64 {
        self.cells[scale.index()][task.index()]
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.cells.iter().flatten().copied()
    }

    /// Mean and sample standard deviation over the 16 cells.
    pub fn cell_mean_std(&self) -> (f64, f64) {
        let n = 16.0;
        let mean = self.values().sum::<f64>() / n;
        let var = self.values().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales != Scale::ALL || self.tasks != Task::ALL {
            return Err(Error::Validation("grid axes must be the 4 standard scales and tasks".into()));
        }
        if self.values().any(|v| !v.is_finite()) {
            return Err(Error::Validation("grid holds non-finite cells".into()));
        }
        if self.normalized && self.values().any(|v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Validation("normalized grid has cells outside [0, 1]".into()));
        }
        if self.kind == GridKind::Fid && self.values().any(|v| v < 0.0) {
            return Err(Error::Validation("FID grid has negative cells".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(text).map_err(|e| Error::Format(format!("grid JSON: {e}")))?;
        g.validate()?;
        Ok(g)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scale");
        for t in &self.tasks {
            out.push(',');
            out.push_str(t.id());
        }
        out.push('\n');
        for (s, row) in self.scales.iter().zip(&self.cells) {
            out.push_str(&s.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

type CellKey = (Scale, Task);

fn index_sets<'a>(label: &str, sets: &'a [FeatureSet]) -> Result<(BTreeMap<CellKey, &'a FeatureSet>, Vec<String>)> {
    let mut map = BTreeMap::new();
    for f in sets {
        if map.insert((f.scale, f.task), f).is_some() {
            return Err(Error::Validation(format!(
                "{label} features contain two sets for cell {}/{}",
                f.scale, f.task
            )));
        }
    }
    let missing = all_cells()
        .filter(|k| !map.contains_key(k))
        .map(|(s, t)| format!("{label} {s}/{t}"))
        .collect();
    Ok((map, missing))
}

fn all_cells() -> impl Iterator<Item = CellKey> {
    Scale::ALL
        .into_iter()
        .flat_map(|s| Task::ALL.into_iter().map(move |t| (s, t)))
}

/// Fréchet distance per (scale, task) cell between real and synthetic features.
pub fn mm_fid(real: &[FeatureSet], synth: &[FeatureSet]) -> Result<EvalGrid> {
    let (real_map, mut missing) = index_sets("real", real)?;
    let (synth_map, synth_missing) = index_sets("synth", synth)?;
    missing.extend(synth_missing);
    if !missing.is_empty() {
        return Err(Error::IncompleteGrid { missing });
    }

    let keys: Vec<CellKey> = all_cells().collect();
    let results = keys
        .par_iter()
        .map(|k| {
            let a = gaussian_summary(real_map[k])?;
            let b = gaussian_summary(synth_map[k])?;
            frechet_distance(&a, &b).map_err(|e| match e {
                Error::Numerical(msg) => Error::Numerical(format!("cell {}/{}: {msg}", k.0, k.1)),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut grid = EvalGrid::new(GridKind::Fid, [[0.0; 4]; 4]);
    for ((s, t), r) in keys.iter().zip(results) {
        grid.cells[s.index()][t.index()] = r.value;
        if r.regularized {
            grid.flags.push(format!("regularized:{s}/{t}"));
        }
    }
    Ok(grid)
}

fn per_dimension_std(f: &FeatureSet) -> Vec<f64> {
    let (n, d) = (f.n(), f.d());
    (0..d)
        .map(|j| {
            let col = (0..n).map(|i| f64::from(f.row(i)[j]));
            let mean = col.clone().sum::<f64>() / n as f64;
            (col.map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
        })
        .collect()
}

/// Mean per-dimension sample standard deviation for each cell.
pub fn mm_std(sets: &[FeatureSet]) -> Result<EvalGrid> {
    let (map, missing) = index_sets("features", sets)?;
    if !missing.is_empty() {
        return Err(Error::IncompleteGrid { missing });
    }
    let keys: Vec<CellKey> = all_cells().collect();
    let stds: Vec<Vec<f64>> = keys.par_iter().map(|k| per_dimension_std(map[k])).collect();

    let mut grid = EvalGrid::new(GridKind::Std, [[0.0; 4]; 4]);
    let mut audit = vec![vec![Vec::new(); 4]; 4];
    for ((s, t), v) in keys.iter().zip(stds) {
        grid.cells[s.index()][t.index()] = v.iter().sum::<f64>() / v.len() as f64;
        audit[s.index()][t.index()] = v;
    }
    grid.per_dimension_std = Some(audit);
    Ok(grid)
}

/// Per-cell min-max normalization across methods. A cell where every method ties maps to 0.
pub fn normalize_grids(grids: &[EvalGrid]) -> Result<Vec<EvalGrid>> {
    if grids.len() < 2 {
        return Err(Error::Parameter(format!(
            "normalization needs at least 2 methods, got {}",
            grids.len()
        )));
    }
    let kind = grids[0].kind;
    if grids.iter().any(|g| g.kind != kind) {
        return Err(Error::Validation("cannot normalize FID and STD grids together".into()));
    }
    for g in grids {
        if g.scales != Scale::ALL || g.tasks != Task::ALL {
            return Err(Error::Validation("grids must share the standard cell layout".into()));
        }
    }
    let mut out: Vec<EvalGrid> = grids.to_vec();
    for i in 0..4 {
        for j in 0..4 {
            let vals = grids.iter().map(|g| g.cells[i][j]);
            let min = vals.clone().fold(f64::INFINITY, f64::min);
            let max = vals.fold(f64::NEG_INFINITY, f64::max);
            for (o, g) in out.iter_mut().zip(grids) {
                o.cells[i][j] = if max > min { (g.cells[i][j] - min) / (max - min) } else { 0.0 };
            }
        }
    }
    for o in &mut out {
        o.normalized = true;
    }
    Ok(out)
}
