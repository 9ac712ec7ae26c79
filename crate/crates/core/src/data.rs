//! Observation pairs: CSV input/output, thresholds, permutations and
//! synthetic Poisson datasets.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{invalid, Error, Result};
use crate::grid::Field;
use crate::rng;

pub const CSV_HEADER: [&str; 2] = ["age", "log10_load"];

/// One observed pair: age in years and log10 viral load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub label: String,
    pub provenance: String,
}

/// A parsed file together with the lines that could not be read.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    pub malformed_lines: Vec<usize>,
}

impl Dataset {
    pub fn new(records: Vec<Record>, label: impl Into<String>, provenance: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if label.is_empty() {
            return Err(invalid("dataset label must not be empty"));
        }
        Ok(Self {
            records,
            label,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Exchanges the roles of x and y in every record.
    pub fn swap_axes(&self) -> Dataset {
        Dataset {
            records: self.records.iter().map(|r| Record { x: r.y, y: r.x }).collect(),
            label: self.label.clone(),
            provenance: format!("{}; axes swapped", self.provenance),
        }
    }
}

fn parse_record(row: &csv::StringRecord) -> Option<Record> {
    if row.len() != 2 {
        return None;
    }
    let x: f64 = row.get(0)?.trim().parse().ok()?;
    let y: f64 = row.get(1)?.trim().parse().ok()?;
    (x.is_finite() && y.is_finite() && x >= 0.0).then_some(Record { x, y })
}

/// Reads a CSV file with header `age,log10_load`; `#` lines are comments.
///
/// Malformed rows are skipped and reported unless `strict` is set, in which
/// case any malformed row is an error listing every offending line.
pub fn load_dataset(path: &Path, strict: bool) -> Result<LoadedDataset> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header_ok = reader
        .headers()
        .map(|h| h.iter().eq(CSV_HEADER.iter().copied()))
        .unwrap_or(false);
    if !header_ok {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            lines: vec![1],
        });
    }
    let mut records = Vec::new();
    let mut malformed = Vec::new();
    for row in reader.records() {
        match row {
            Ok(row) => {
                let line = row.position().map_or(0, |p| p.line() as usize);
                match parse_record(&row) {
                    Some(r) => records.push(r),
                    None => malformed.push(line),
                }
            }
            Err(e) => malformed.push(e.position().map_or(0, |p| p.line() as usize)),
        }
    }
    if strict && !malformed.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            lines: malformed,
        });
    }
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "data".to_owned());
    Ok(LoadedDataset {
        dataset: Dataset {
            records,
            label,
            provenance: format!("loaded from {}", path.display()),
        },
        malformed_lines: malformed,
    })
}

/// Writes the dataset in the same CSV format `load_dataset` reads.
pub fn save_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    writeln!(out, "# {}", data.provenance.replace('\n', " ")).map_err(io_err)?;
    writeln!(out, "{}", CSV_HEADER.join(",")).map_err(io_err)?;
    for r in &data.records {
        writeln!(out, "{},{}", r.x, r.y).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Keeps the records with `y >= y_min`.
pub fn apply_threshold(data: &Dataset, y_min: f64) -> Dataset {
    let records: Vec<Record> = data.records.iter().copied().filter(|r| r.y >= y_min).collect();
    let note = format!("y >= {y_min}");
    let provenance = if data.provenance.ends_with(&note) {
        data.provenance.clone()
    } else {
        format!("{}; {note}", data.provenance)
    };
    Dataset {
        records,
        label: data.label.clone(),
        provenance,
    }
}

/// Pairs every x with the y of a uniformly random other record.
pub fn permute_y(data: &Dataset, seed: u64) -> Result<Dataset> {
    let n = data.len();
    if n < 2 {
        return Err(invalid(format!("permutation needs at least 2 records, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, 0));
    Ok(permute_y_with(data, &order, &format!("y permuted (seed {seed})")))
}

/// Applies an explicit permutation `r`: record `i` receives `y_{r(i)}`.
pub fn permute_y_with(data: &Dataset, order: &[usize], note: &str) -> Dataset {
    let records = data
        .records
        .iter()
        .zip(order)
        .map(|(r, &j)| Record {
            x: r.x,
            y: data.records[j].y,
        })
        .collect();
    Dataset {
        records,
        label: data.label.clone(),
        provenance: format!("{}; {note}", data.provenance),
    }
}

/// Draws Poisson counts `n_ij ~ Poisson(Δx Δy ρ_ij)` from a 2-D density and
/// emits one record per count at the pixel center (or uniformly inside the
/// pixel when `jitter` is set).
pub fn synthesize_counts(joint: &Field, seed: u64, jitter: bool, label: &str) -> Result<Dataset> {
    let axes = joint.axes();
    if axes.len() != 2 {
        return Err(invalid("synthesis needs a 2-D density"));
    }
    let (gx, gy) = (axes[0], axes[1]);
    let vol = joint.pixel_volume();
    let mut counts_rng = rng::stream(seed, 0);
    let mut jitter_rng = rng::stream(seed, 1);
    let mut records = Vec::new();
    for i in 0..gx.n_pixels() {
        for j in 0..gy.n_pixels() {
            let lambda = vol * joint.at(i, j);
            if !(lambda >= 0.0) || !lambda.is_finite() {
                return Err(invalid(format!("invalid expected count {lambda} at ({i}, {j})")));
            }
            if lambda == 0.0 {
                continue;
            }
            let n = Poisson::new(lambda)
                .map_err(|e| invalid(e.to_string()))?
                .sample(&mut counts_rng) as u64;
            for _ in 0..n {
                let (x, y) = if jitter {
                    (
                        gx.start() + (i as f64 + jitter_rng.random::<f64>()) * gx.step(),
                        gy.start() + (j as f64 + jitter_rng.random::<f64>()) * gy.step(),
                    )
                } else {
                    (gx.center(i), gy.center(j))
                };
                records.push(Record { x, y });
            }
        }
    }
    Dataset::new(records, label, format!("synthetic Poisson counts (seed {seed})"))
}
