//! Principal normals of immersions with flat normal bundle, by joint
//! diagonalisation of the commuting shape operators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Immersion;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrincipalTolerances {
    /// Relative bound on shape-operator commutators.
    pub flat_tol: f64,
    /// Relative distance under which eigenvalue vectors are merged.
    pub cluster_tol: f64,
    /// Relative tangential residual accepted for normal vectors.
    pub normal_tol: f64,
}

impl Default for PrincipalTolerances {
    fn default() -> Self {
        PrincipalTolerances {
            flat_tol: 1e-8,
            cluster_tol: 1e-6,
            normal_tol: 1e-9,
        }
    }
}

/// One joint eigenspace: orthonormal vectors and the eigenvalue of each
/// input matrix on it.
#[derive(Clone, Debug)]
pub struct JointCluster {
    pub vectors: Vec<DVector<f64>>,
    pub eigenvalues: DVector<f64>,
}

/// Largest commutator norm, relative to the squared matrix scale.
pub fn commutator_defect(mats: &[DMatrix<f64>]) -> f64 {
    let scale = mats.iter().map(|m| m.amax()).fold(1.0, f64::max);
    let mut worst = 0.0f64;
    for (i, a) in mats.iter().enumerate() {
        for b in &mats[i + 1..] {
            worst = worst.max((a * b - b * a).amax());
        }
    }
    worst / (scale * scale)
}

/// Simultaneous eigen-decomposition of commuting symmetric matrices.
///
/// A seeded random combination is diagonalised; eigenvectors are grouped by
/// their eigenvalue vectors and the groups are returned in lexicographic
/// order of those vectors, so the result does not depend on the seed.
pub fn joint_eigen(
    mats: &[DMatrix<f64>],
    dim: usize,
    seed: u64,
    cluster_tol: f64,
) -> Result<Vec<JointCluster>> {
    let s = mats.len();
    if s == 0 {
        return Ok(vec![JointCluster {
            vectors: (0..dim)
                .map(|i| DVector::from_fn(dim, |j, _| if i == j { 1.0 } else { 0.0 }))
                .collect(),
            eigenvalues: DVector::zeros(0),
        }]);
    }
    let scale = mats.iter().map(|m| m.amax()).fold(1.0, f64::max);
    let bar = cluster_tol * scale;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = DMatrix::zeros(dim, dim);
    for m in mats {
        c += m * rng.gen_range(0.5..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    }
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut clusters: Vec<JointCluster> = Vec::new();
    for i in order {
        let w = eig.eigenvectors.column(i).into_owned();
        let lam = DVector::from_fn(s, |j, _| (&mats[j] * &w).dot(&w));
        match clusters.last_mut() {
            Some(cl) if (&cl.eigenvalues - &lam).amax() <= bar => {
                let n = cl.vectors.len() as f64;
                cl.eigenvalues = (&cl.eigenvalues * n + lam) / (n + 1.0);
                cl.vectors.push(w);
            }
            _ => clusters.push(JointCluster {
                vectors: vec![w],
                eigenvalues: lam,
            }),
        }
    }
    for (a, ca) in clusters.iter().enumerate() {
        for cb in &clusters[a + 1..] {
            let sep = (&ca.eigenvalues - &cb.eigenvalues).amax();
            if sep < 10.0 * bar {
                return Err(Error::ClusteringAmbiguous { separation: sep });
            }
        }
    }
    clusters.sort_by(|a, b| {
        a.eigenvalues
            .iter()
            .zip(b.eigenvalues.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(clusters)
}

/// Principal normals `eta_a` with their tangent eigenspaces.
#[derive(Clone, Debug)]
pub struct PrincipalNormals {
    pub normals: Vec<DVector<f64>>,
    /// `g`-orthonormal coordinate vectors spanning each eigenspace.
    pub subspaces: Vec<Vec<DVector<f64>>>,
    pub commutator_defect: f64,
    /// `max |alpha(X, Y) - sum_a <X^a, Y^a> eta_a|` over coordinate pairs.
    pub reconstruction_defect: f64,
}

impl PrincipalNormals {
    pub fn count(&self) -> usize {
        self.normals.len()
    }
}

pub fn principal_normal_decomposition(
    f: &Immersion,
    p: &[f64],
    seed: u64,
    tol: PrincipalTolerances,
) -> Result<PrincipalNormals> {
    let l = f.local(p)?;
    let amb = f.ambient();
    let k = l.k();
    let normals = l.normal_basis(tol.normal_tol)?;
    let mats: Vec<DMatrix<f64>> = normals.iter().map(|xi| l.shape_symmetric(xi)).collect();
    let comm = commutator_defect(&mats);
    if comm > tol.flat_tol {
        return Err(Error::NonFlatNormalBundle { defect: comm });
    }
    let clusters = joint_eigen(&mats, k, seed, tol.cluster_tol)?;
    let frame = l.orthonormal_frame();
    let mut etas = Vec::new();
    let mut subspaces = Vec::new();
    for cl in &clusters {
        let mut eta = DVector::zeros(amb.dim());
        for (j, xi) in normals.iter().enumerate() {
            eta += xi * (amb.norm_sq(xi).signum() * cl.eigenvalues[j]);
        }
        etas.push(eta);
        subspaces.push(cl.vectors.iter().map(|w| &frame * w).collect::<Vec<_>>());
    }
    let mut recon = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            let mut model = DVector::zeros(amb.dim());
            for (eta, sub) in etas.iter().zip(&subspaces) {
                let c: f64 = sub
                    .iter()
                    .map(|w| (&l.g * w)[i] * (&l.g * w)[j])
                    .sum();
                model += eta * c;
            }
            recon = recon.max((l.sff(i, j) - model).norm());
        }
    }
    Ok(PrincipalNormals {
        normals: etas,
        subspaces,
        commutator_defect: comm,
        reconstruction_defect: recon,
    })
}
