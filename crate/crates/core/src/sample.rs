use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Tolerance on row norms accepted by [`SphericalSample::new`].
pub const UNIT_NORM_TOL: f64 = 1e-10;

/// `n` points on S^q stored row-major as an `n × (q+1)` array.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalSample {
    q: usize,
    n: usize,
    points: Vec<f64>,
}

impl SphericalSample {
    /// Validates shape and unit norms.
    pub fn new(points: Vec<f64>, q: usize) -> Result<Self> {
        let sample = Self::new_unchecked_norms(points, q)?;
        for (i, row) in sample.rows().enumerate() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL || !norm.is_finite() {
                return Err(Error::domain(
                    "SphericalSample",
                    format!("row {i} has norm {norm}, expected 1 within {UNIT_NORM_TOL:e}"),
                ));
            }
        }
        Ok(sample)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if dim < 3 {
            return Err(Error::domain("SphericalSample", format!("rows must have at least 3 coordinates, got {dim}")));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(Error::domain("SphericalSample", format!("row {i} has {} coordinates, expected {dim}", r.len())));
        }
        Self::new(rows.concat(), dim - 1)
    }

    fn new_unchecked_norms(points: Vec<f64>, q: usize) -> Result<Self> {
        if q < 1 {
            return Err(Error::domain("SphericalSample", "q must be at least 1"));
        }
        let dim = q + 1;
        if points.len() % dim != 0 {
            return Err(Error::domain(
                "SphericalSample",
                format!("{} values do not form rows of length {dim}", points.len()),
            ));
        }
        let n = points.len() / dim;
        if n == 0 {
            return Err(Error::domain("SphericalSample", "sample is empty"));
        }
        Ok(SphericalSample { q, n, points })
    }

    /// Points produced by the samplers, which are unit by construction.
    pub(crate) fn from_generated(points: Vec<f64>, q: usize) -> Self {
        let n = points.len() / (q + 1);
        debug_assert_eq!(n * (q + 1), points.len());
        SphericalSample { q, n, points }
    }

    /// Rescales every row to unit length; returns the sample and the largest
    /// deviation `|‖x‖ - 1|` observed before rescaling.
    pub fn normalized(points: Vec<f64>, q: usize) -> Result<(Self, f64)> {
        let mut sample = Self::new_unchecked_norms(points, q)?;
        let dim = q + 1;
        let mut worst: f64 = 0.0;
        for (i, row) in sample.points.chunks_exact_mut(dim).enumerate() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::domain("SphericalSample", format!("row {i} has norm {norm}")));
            }
            worst = worst.max((norm - 1.0).abs());
            row.iter_mut().for_each(|x| *x /= norm);
        }
        Ok((sample, worst))
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.q + 1
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let dim = self.dim();
        &self.points[i * dim..(i + 1) * dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.dim())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.points
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.points
    }

    /// Rows at the given indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> SphericalSample {
        let mut points = Vec::with_capacity(indices.len() * self.dim());
        for &i in indices {
            points.extend_from_slice(self.row(i));
        }
        SphericalSample {
            q: self.q,
            n: indices.len(),
            points,
        }
    }

    /// Applies `x ↦ M x` to every row; `matrix` is row-major `(q+1) × (q+1)`.
    pub fn transformed(&self, matrix: &[f64]) -> SphericalSample {
        let dim = self.dim();
        assert_eq!(matrix.len(), dim * dim);
        let mut points = Vec::with_capacity(self.points.len());
        for row in self.rows() {
            for r in 0..dim {
                points.push((0..dim).map(|c| matrix[r * dim + c] * row[c]).sum());
            }
        }
        SphericalSample { q: self.q, n: self.n, points }
    }

    /// CSV with a `# q=<q> n=<n> seed=<seed> process=<name>` header and one
    /// row of `q+1` values (17 significant digits) per point.
    pub fn write_csv<W: Write>(&self, mut out: W, seed: u64, process: &str) -> std::io::Result<()> {
        writeln!(out, "# q={} n={} seed={} process={}", self.q, self.n, seed, process)?;
        let mut line = String::new();
        for row in self.rows() {
            line.clear();
            for (j, x) in row.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{x:.16e}"));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Reads comma-separated rows, skipping blank lines and `#` comments.
/// Rows are returned as parsed; norms are not checked.
pub fn read_csv_rows<R: BufRead>(input: R, source: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let row = trimmed
            .split(',')
            .map(|field| {
                let field = field.trim();
                field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    location: format!("{source}:{}", lineno + 1),
                    detail: format!("'{field}' is not a finite number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first().map(Vec::len) {
            if row.len() != first {
                return Err(Error::Parse {
                    location: format!("{source}:{}", lineno + 1),
                    detail: format!("expected {first} columns, found {}", row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            location: source.to_string(),
            detail: "no data rows".into(),
        });
    }
    Ok(rows)
}
