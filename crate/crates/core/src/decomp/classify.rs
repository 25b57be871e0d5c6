//! Classification of a metric on a product chart as product, warped,
//! quasi-warped or polar, from Christoffel-symbol defects.

use crate::error::Result;
use crate::immersion::chart::metric_character;
use crate::immersion::metric::MetricFn;
use crate::immersion::{Grid, Immersion, ProductChart, SubbundleCharacter};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Verdict {
    None,
    Polar,
    QuasiWarped,
    Warped,
    Product,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::None => "none",
            Verdict::Polar => "polar",
            Verdict::QuasiWarped => "quasi_warped",
            Verdict::Warped => "warped",
            Verdict::Product => "product",
        }
    }

    const LADDER: [Verdict; 5] = [
        Verdict::None,
        Verdict::Polar,
        Verdict::QuasiWarped,
        Verdict::Warped,
        Verdict::Product,
    ];
}

/// Result of [`classify_metric`].
#[derive(Clone, Debug, PartialEq)]
pub struct MetricClass {
    /// `None` when some deciding defect falls in `[tol, 10 tol]`.
    pub verdict: Option<Verdict>,
    /// Per chart block, its subbundle defects.
    pub table: Vec<SubbundleCharacter>,
    /// Largest defect deciding each rung above `None`, in ladder order
    /// (orthogonality, polar, quasi-warped, warped, product).
    pub rungs: [f64; 5],
    pub tol: f64,
}

impl MetricClass {
    /// Whether the metric belongs to `class` with margin.
    pub fn certifies(&self, class: Verdict) -> bool {
        self.verdict.is_some_and(|v| v >= class)
    }

    /// Ratio between the first failing rung and the last passing one.
    pub fn margin(&self) -> f64 {
        let Some(v) = self.verdict else {
            return 1.0;
        };
        let i = Verdict::LADDER.iter().position(|&x| x == v).expect("on ladder");
        let pass = self.rungs[..=i].iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        match self.rungs.get(i + 1) {
            Some(fail) => fail / pass.max(self.tol),
            None => f64::INFINITY,
        }
    }
}

/// Classifies a metric given pointwise on `grid`.
///
/// The ladder is: orthogonal net; polar (`E_a^perp` totally geodesic for
/// every `a >= 1`); quasi-warped (additionally `E_a` umbilical); warped
/// (`E_a` spherical); product (every block totally geodesic). The verdict
/// is the highest rung whose deciding defects are below `tol`, provided the
/// next rung fails by more than `10 tol`.
pub fn classify_metric_fn(
    g: &MetricFn,
    grid: &Grid,
    chart: &ProductChart,
    tol: f64,
    h: f64,
) -> Result<MetricClass> {
    let table: Vec<SubbundleCharacter> = (0..chart.factors())
        .map(|a| metric_character(g, grid, chart, a, h))
        .collect::<Result<_>>()?;
    let rest = &table[1..];
    let max = |f: fn(&SubbundleCharacter) -> f64, rows: &[SubbundleCharacter]| {
        rows.iter().map(f).fold(0.0, f64::max)
    };
    let rungs = [
        max(|c| c.orthogonal_net_defect, &table),
        max(|c| c.complement_totally_geodesic_defect, rest),
        max(|c| c.umbilical_defect, rest),
        max(|c| c.spherical_defect, rest).max(max(|c| c.umbilical_defect, rest)),
        max(|c| c.totally_geodesic_defect, &table),
    ];
    // rungs[i] decides Verdict::LADDER[i] for i >= 1; rungs[0] gates all.
    let mut verdict = None;
    if rungs[0] < tol {
        let mut level = 0;
        while level + 1 < 5 && rungs[level + 1] < tol {
            level += 1;
        }
        let next = rungs.get(level + 1).cloned();
        let dead = |d: f64| d >= tol && d <= 10.0 * tol;
        if !next.is_some_and(dead) {
            verdict = Some(Verdict::LADDER[level]);
        }
    } else if rungs[0] > 10.0 * tol {
        verdict = Some(Verdict::None);
    }
    Ok(MetricClass {
        verdict,
        table,
        rungs,
        tol,
    })
}

/// Classifies the metric induced by `f` on its grid.
pub fn classify_metric(f: &Immersion, chart: &ProductChart, tol: f64, h: f64) -> Result<MetricClass> {
    let g = |p: &[f64]| f.first_fundamental_form(p);
    classify_metric_fn(&g, f.grid(), chart, tol, h)
}
