//! The `omega` command: regular-set margins over a two-dimensional slice of
//! the fiber space.

use nalgebra::DVector;

use crate::scene::Built;
use crate::CliError;

/// `lo:hi:n` samples of one slice axis, endpoints included.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisRange {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl AxisRange {
    pub fn parse(s: &str) -> Result<AxisRange, CliError> {
        let bad = || CliError::Usage(format!("range '{s}' is not lo:hi:n"));
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, n] = parts[..] else { return Err(bad()) };
        Ok(AxisRange {
            lo: lo.trim().parse().map_err(|_| bad())?,
            hi: hi.trim().parse().map_err(|_| bad())?,
            n: n.trim().parse().map_err(|_| bad())?,
        })
    }

    pub fn values(&self) -> Vec<f64> {
        match self.n {
            0 => Vec::new(),
            1 => vec![self.lo],
            n => (0..n)
                .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Slice {
    pub axes: [usize; 2],
    pub ranges: [AxisRange; 2],
    /// Values of the remaining fiber coordinates; zero when absent.
    pub fixed: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OmegaRow {
    pub yi: f64,
    pub yj: f64,
    pub margin: f64,
    pub min_singular_value: f64,
}

pub fn sample(built: &Built, slice: &Slice) -> Result<Vec<OmegaRow>, CliError> {
    let t = built
        .tube()
        .ok_or_else(|| CliError::Usage("omega slices need a tube construction".into()))?;
    let s = t.fiber_ambient().dim();
    let [i, j] = slice.axes;
    if i >= s || j >= s || i == j {
        return Err(CliError::Usage(format!("slice axes must be two distinct indices below {s}")));
    }
    if !slice.fixed.is_empty() && slice.fixed.len() != s {
        return Err(CliError::Usage(format!("--fixed needs {s} values")));
    }
    let mut rows = Vec::new();
    for a in slice.ranges[0].values() {
        for b in slice.ranges[1].values() {
            let mut y = if slice.fixed.is_empty() {
                DVector::zeros(s)
            } else {
                DVector::from_row_slice(&slice.fixed)
            };
            y[i] = a;
            y[j] = b;
            let st = t.omega(&y);
            rows.push(OmegaRow {
                yi: a,
                yj: b,
                margin: st.margin,
                min_singular_value: st.min_singular_value,
            });
        }
    }
    Ok(rows)
}

pub fn to_csv(axes: [usize; 2], rows: &[OmegaRow]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = [
        format!("y{}", axes[0]),
        format!("y{}", axes[1]),
        "margin".into(),
        "min_singular_value".into(),
    ];
    let fail = |e: csv::Error| CliError::Usage(e.to_string());
    w.write_record(&header).map_err(fail)?;
    for r in rows {
        w.write_record([r.yi, r.yj, r.margin, r.min_singular_value].map(|x| x.to_string()))
            .map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("ascii csv"))
}
