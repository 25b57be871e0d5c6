//! Sampled partial-tube triples written by `decompose`.

use nalgebra::DVector;
use partube::immersion::Immersion;
use partube::decomp::ExtractionResult;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::scene::Signature;
use crate::CliError;

/// Parameters and values of a map on its grid, in grid order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Samples {
    pub params: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
}

impl Samples {
    fn of(f: &Immersion) -> Result<Samples, CliError> {
        Ok(Samples {
            params: f.grid().points(),
            values: f.sample_values()?.iter().map(|v| v.as_slice().to_vec()).collect(),
        })
    }
}

/// A triple `(f0, f1, phi)` sampled on the fiber and base grids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Fragment {
    pub chart: Vec<usize>,
    pub fiber_signature: Signature,
    pub fiber: Samples,
    pub base: Samples,
    /// Per base sample, the frame vectors `phi(e_j)`.
    pub frames: Vec<Vec<Vec<f64>>>,
}

impl Fragment {
    pub fn from_extraction(r: &ExtractionResult) -> Result<Fragment, CliError> {
        let base = Samples::of(&r.base)?;
        let frames = base
            .params
            .iter()
            .map(|p| Ok(r.phi.frame(p)?.iter().map(|v| v.as_slice().to_vec()).collect()))
            .collect::<Result<_, CliError>>()?;
        Ok(Fragment {
            chart: r.chart.dims().to_vec(),
            fiber_signature: if r.phi.fiber().is_lorentzian() {
                Signature::Lorentzian
            } else {
                Signature::Euclidean
            },
            fiber: Samples::of(&r.fiber)?,
            base,
            frames,
        })
    }

    /// `f1(p1_j) + phi_{p1_j}(f0(p0_i))`.
    pub fn evaluate(&self, i: usize, j: usize) -> DVector<f64> {
        let mut x = DVector::from_row_slice(&self.base.values[j]);
        for (y, v) in self.fiber.values[i].iter().zip(&self.frames[j]) {
            x.axpy(*y, &DVector::from_row_slice(v), 1.0);
        }
        x
    }

    /// Largest relative mismatch `|evaluate - f| / max(1, |f|)` (max norms)
    /// against `f` at every pair of fiber and base samples.
    pub fn rebuild_defect(&self, f: &Immersion) -> Result<f64, CliError> {
        let mut worst = 0.0f64;
        for (i, p0) in self.fiber.params.iter().enumerate() {
            for (j, p1) in self.base.params.iter().enumerate() {
                let p: Vec<f64> = p0.iter().chain(p1).cloned().collect();
                let want = f.value(&p)?;
                let got = self.evaluate(i, j);
                if got.len() != want.len() {
                    return Err(CliError::Usage("fragment and immersion have different ambient dimensions".into()));
                }
                worst = worst.max((got - &want).amax() / want.amax().max(1.0));
            }
        }
        Ok(worst)
    }
}
