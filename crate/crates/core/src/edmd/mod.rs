//! Extended dynamic mode decomposition of the Koopman operator and the Lie
//! derivative it induces, plus exact Lie matrices for polynomial systems.

mod exact;
mod threshold;

pub use exact::{exact_lie_matrix, ExactSystem};
pub use threshold::threshold_refine;

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::SnapshotSet;
use crate::error::{Error, Result};
use crate::polybasis::{dictionary_size, extraction_matrix, BasisEvaluator, BasisSpec};

/// Default relative cut-off for singular values of `P`.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
/// Above this many snapshots [`edmd`] uses Gram products.
pub const GRAM_THRESHOLD: usize = 100_000;
/// Relative eigenvalue cut-off of `P P^T` on the Gram path.
pub const DEFAULT_GRAM_TOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LieKind {
    DataDriven,
    ExactMap,
    ExactOde,
    ExactSde,
}

/// Outcome of [`threshold_refine`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub rounds: usize,
    pub zeroed_fraction: f64,
    /// `true` if the sparsity pattern repeated before the round limit.
    pub converged: bool,
}

/// Approximate or exact Lie derivative on the degree-`k` dictionary, with
/// rows expanded in the degree-`l` dictionary.
#[derive(Clone, Debug, PartialEq)]
pub struct LieMatrix {
    pub entries: DMatrix<f64>,
    pub k: u32,
    pub l: u32,
    /// Degree-`l` dictionary.
    pub spec: BasisSpec,
    pub tau: f64,
    pub kind: LieKind,
    pub threshold: Option<ThresholdReport>,
    /// Numerical rank of the data matrix, for data-driven matrices.
    pub rank: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct LieFile {
    kind: LieKind,
    k: u32,
    l: u32,
    spec: BasisSpec,
    tau: f64,
    threshold: Option<ThresholdReport>,
    rank: Option<usize>,
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl LieMatrix {
    pub fn kx(&self) -> usize {
        self.entries.nrows()
    }

    pub fn lx(&self) -> usize {
        self.entries.ncols()
    }

    /// Number of nonzero entries.
    pub fn nnz(&self) -> usize {
        self.entries.iter().filter(|v| **v != 0.0).count()
    }

    /// JSON with a header and the entries in row-major order.
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        let (rows, cols) = self.entries.shape();
        let f = LieFile {
            kind: self.kind,
            k: self.k,
            l: self.l,
            spec: self.spec.clone(),
            tau: self.tau,
            threshold: self.threshold.clone(),
            rank: self.rank,
            rows,
            cols,
            entries: self.entries.transpose().as_slice().to_vec(),
        };
        serde_json::to_writer(w, &f)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let f: LieFile = serde_json::from_reader(r)?;
        if f.entries.len() != f.rows * f.cols
            || f.rows != dictionary_size(f.spec.dimension, f.k)
            || f.cols != dictionary_size(f.spec.dimension, f.l)
        {
            return Err(Error::Format("Lie matrix shape does not match its degrees".into()));
        }
        Ok(LieMatrix {
            entries: DMatrix::from_row_slice(f.rows, f.cols, &f.entries),
            k: f.k,
            l: f.l,
            spec: f.spec,
            tau: f.tau,
            kind: f.kind,
            threshold: f.threshold,
            rank: f.rank,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_json(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_json(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn check_degrees(k: u32, l: u32) -> Result<()> {
    if k > l {
        return Err(Error::DegreeOrder { k, l });
    }
    Ok(())
}

fn check_compatible(snapshots: &SnapshotSet, spec: &BasisSpec) -> Result<()> {
    if snapshots.dimension != spec.dimension {
        return Err(Error::DimensionMismatch(format!(
            "snapshots have dimension {}, dictionary {}",
            snapshots.dimension, spec.dimension
        )));
    }
    if snapshots.is_empty() {
        return Err(Error::Config("empty snapshot set".into()));
    }
    Ok(())
}

/// `P` (`l_x x m`, columns `p_l(x_i)`) and `Q` (`k_x x m`, columns `p_k(z_i)`).
pub fn build_data_matrices(
    snapshots: &SnapshotSet,
    k: u32,
    l: u32,
    spec: &BasisSpec,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_degrees(k, l)?;
    check_compatible(snapshots, spec)?;
    let m = snapshots.len();
    let sl = spec.with_degree(l);
    let sk = spec.with_degree(k);
    let mut p = DMatrix::zeros(sl.size(), m);
    let mut q = DMatrix::zeros(sk.size(), m);
    let mut el = BasisEvaluator::new(&sl);
    let mut ek = BasisEvaluator::new(&sk);
    for (i, (x, z)) in snapshots.iter().enumerate() {
        el.eval_into(x, p.column_mut(i).as_mut_slice())?;
        ek.eval_into(z, q.column_mut(i).as_mut_slice())?;
    }
    Ok((p, q))
}

/// Accumulated products `P P^T`, `Q P^T` and `tr(Q Q^T)`.
#[derive(Clone, Debug)]
pub struct GramData {
    pub m: usize,
    pub ppt: DMatrix<f64>,
    pub qpt: DMatrix<f64>,
    pub qq_trace: f64,
}

const BLOCK: usize = 4096;

impl GramData {
    /// Builds the products in parallel over blocks of snapshots without
    /// forming `P` or `Q`. The block reduction order is fixed, so results do
    /// not depend on the thread count.
    pub fn from_snapshots(snapshots: &SnapshotSet, k: u32, l: u32, spec: &BasisSpec) -> Result<Self> {
        check_degrees(k, l)?;
        check_compatible(snapshots, spec)?;
        let m = snapshots.len();
        let sl = spec.with_degree(l);
        let sk = spec.with_degree(k);
        let (lx, kx) = (sl.size(), sk.size());
        let blocks: Vec<(DMatrix<f64>, DMatrix<f64>, f64)> = (0..m.div_ceil(BLOCK))
            .into_par_iter()
            .map(|b| {
                let lo = b * BLOCK;
                let hi = (lo + BLOCK).min(m);
                let mut p = DMatrix::zeros(lx, hi - lo);
                let mut q = DMatrix::zeros(kx, hi - lo);
                let mut el = BasisEvaluator::new(&sl);
                let mut ek = BasisEvaluator::new(&sk);
                for i in lo..hi {
                    el.eval_into(snapshots.x(i), p.column_mut(i - lo).as_mut_slice())?;
                    ek.eval_into(snapshots.z(i), q.column_mut(i - lo).as_mut_slice())?;
                }
                let pt = p.transpose();
                Ok((&p * &pt, &q * &pt, q.norm_squared()))
            })
            .collect::<Result<_>>()?;
        let mut ppt = DMatrix::zeros(lx, lx);
        let mut qpt = DMatrix::zeros(kx, lx);
        let mut qq_trace = 0.0;
        for (a, b, c) in blocks {
            ppt += a;
            qpt += b;
            qq_trace += c;
        }
        Ok(GramData {
            m,
            ppt,
            qpt,
            qq_trace,
        })
    }

    pub fn from_matrices(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Self {
        let pt = p.transpose();
        GramData {
            m: p.ncols(),
            ppt: p * &pt,
            qpt: q * &pt,
            qq_trace: q.norm_squared(),
        }
    }

    /// `|Q - K P|_F^2` expanded through the stored products.
    pub fn residual_sq(&self, kmat: &DMatrix<f64>) -> f64 {
        let cross = (kmat.transpose() * &self.qpt).trace();
        let quad = (kmat * &self.ppt * kmat.transpose()).trace();
        (self.qq_trace - 2.0 * cross + quad).max(0.0)
    }
}

/// Koopman matrix together with the numerical rank used.
#[derive(Clone, Debug)]
pub struct KoopmanFit {
    pub k: DMatrix<f64>,
    pub rank: usize,
}

/// `K = Q P^+` with the pseudo-inverse from an SVD of `P`; singular values
/// below `rank_tol * sigma_max` are discarded.
pub fn koopman_matrix(p: &DMatrix<f64>, q: &DMatrix<f64>, rank_tol: f64) -> Result<KoopmanFit> {
    if p.ncols() != q.ncols() {
        return Err(Error::DimensionMismatch("P and Q have different column counts".into()));
    }
    let svd = p.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > rank_tol * smax)
        .collect();
    let r = keep.len();
    // K = Q V S^-1 U^T restricted to the kept triplets
    let mut qv = DMatrix::zeros(q.nrows(), r);
    for (c, &i) in keep.iter().enumerate() {
        let v = vt.row(i).transpose();
        let col = q * v / svd.singular_values[i];
        qv.set_column(c, &col);
    }
    let mut ur = DMatrix::zeros(p.nrows(), r);
    for (c, &i) in keep.iter().enumerate() {
        ur.set_column(c, &u.column(i));
    }
    Ok(KoopmanFit {
        k: qv * ur.transpose(),
        rank: r,
    })
}

/// Symmetric pseudo-inverse with eigenvalues below `tol * lambda_max`
/// discarded; returns it with the retained rank.
pub(crate) fn sym_pinv(a: &DMatrix<f64>, tol: f64) -> (DMatrix<f64>, usize) {
    let eig = a.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, n);
    let mut rank = 0;
    for i in 0..n {
        let l = eig.eigenvalues[i];
        if l > tol * lmax && l > 0.0 {
            let v = eig.eigenvectors.column(i);
            out += (&v * v.transpose()) / l;
            rank += 1;
        }
    }
    (out, rank)
}

/// `K = (Q P^T)(P P^T)^+`.
pub fn koopman_from_gram(g: &GramData, gram_tol: f64) -> KoopmanFit {
    let (pinv, rank) = sym_pinv(&g.ppt, gram_tol);
    KoopmanFit {
        k: &g.qpt * pinv,
        rank,
    }
}

/// `L = (K - Theta) / tau`.
pub fn lie_matrix(kmat: &DMatrix<f64>, k: u32, l: u32, tau: f64, spec: &BasisSpec) -> Result<LieMatrix> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("timestep must be positive, got {tau}")));
    }
    let theta = extraction_matrix(k, l, spec)?;
    if kmat.shape() != theta.shape() {
        return Err(Error::DimensionMismatch(format!(
            "Koopman matrix is {:?}, expected {:?}",
            kmat.shape(),
            theta.shape()
        )));
    }
    Ok(LieMatrix {
        entries: (kmat - theta) / tau,
        k,
        l,
        spec: spec.with_degree(l),
        tau,
        kind: LieKind::DataDriven,
        threshold: None,
        rank: None,
    })
}

/// How [`edmd`] forms the Koopman matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdmdPath {
    /// Direct SVD for small data, Gram products above [`GRAM_THRESHOLD`].
    Auto,
    Direct,
    Gram,
}

/// Data-driven Lie matrix from snapshots.
pub fn edmd(
    snapshots: &SnapshotSet,
    k: u32,
    l: u32,
    spec: &BasisSpec,
    path: EdmdPath,
) -> Result<LieMatrix> {
    let gram = match path {
        EdmdPath::Auto => snapshots.len() > GRAM_THRESHOLD,
        EdmdPath::Direct => false,
        EdmdPath::Gram => true,
    };
    let fit = if gram {
        koopman_from_gram(&GramData::from_snapshots(snapshots, k, l, spec)?, DEFAULT_GRAM_TOL)
    } else {
        let (p, q) = build_data_matrices(snapshots, k, l, spec)?;
        koopman_matrix(&p, &q, DEFAULT_RANK_TOL)?
    };
    let mut lie = lie_matrix(&fit.k, k, l, snapshots.tau, spec)?;
    lie.rank = Some(fit.rank);
    Ok(lie)
}

/// Koopman matrix `K = tau L + Theta` of a Lie matrix.
pub fn koopman_of(lie: &LieMatrix) -> DMatrix<f64> {
    let theta = extraction_matrix(lie.k, lie.l, &lie.spec).expect("degrees checked at construction");
    &lie.entries * lie.tau + theta
}

/// `|L y|_inf`, the invariance residual of a moment vector.
pub fn invariance_residual(lie: &LieMatrix, y: &[f64]) -> f64 {
    (&lie.entries * DVector::from_column_slice(y)).amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate_map, Logistic, Provenance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_data(n: usize, m: usize, seed: u64) -> SnapshotSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = SnapshotSet::new(n, 1.0, vec![(-1.0, 1.0); n], Provenance::default()).unwrap();
        for _ in 0..m {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            s.push(&x, &x);
        }
        s
    }

    #[test]
    fn single_logistic_snapshot() {
        let s = simulate_map(&Logistic, &[0.0], 1, vec![(-1.0, 1.0)], "logistic").unwrap();
        let spec = BasisSpec::chebyshev_unit(1, 2);
        let (p, q) = build_data_matrices(&s, 1, 2, &spec).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 0.0, -1.0]);
        assert_eq!(q.as_slice(), &[1.0, -1.0]);
    }

    #[test]
    fn identity_map_gives_extraction_and_zero_lie() {
        let spec = BasisSpec::chebyshev_unit(2, 4);
        let s = identity_data(2, 200, 1);
        let (p, q) = build_data_matrices(&s, 2, 4, &spec).unwrap();
        let theta = extraction_matrix(2, 4, &spec).unwrap();
        assert!((&q - &theta * &p).amax() < 1e-15);
        let fit = koopman_matrix(&p, &q, DEFAULT_RANK_TOL).unwrap();
        assert!((&fit.k - &theta).amax() < 1e-10);
        let lie = edmd(&s, 2, 4, &spec, EdmdPath::Direct).unwrap();
        assert!(lie.entries.amax() < 1e-10);
        let lie = edmd(&s, 2, 4, &spec, EdmdPath::Gram).unwrap();
        assert!(lie.entries.amax() < 1e-8);
    }

    #[test]
    fn square_invertible_data_is_interpolated() {
        let spec = BasisSpec::chebyshev_unit(1, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = SnapshotSet::new(1, 1.0, vec![(-1.0, 1.0)], Provenance::default()).unwrap();
        for _ in 0..6 {
            s.push(&[rng.random_range(-1.0..1.0)], &[rng.random_range(-1.0..1.0)]);
        }
        let (p, q) = build_data_matrices(&s, 3, 5, &spec).unwrap();
        let fit = koopman_matrix(&p, &q, DEFAULT_RANK_TOL).unwrap();
        assert!((&fit.k * &p - &q).amax() < 1e-10);
    }

    #[test]
    fn least_squares_optimality() {
        let spec = BasisSpec::chebyshev_unit(1, 6);
        let s = simulate_map(&Logistic, &[0.3], 300, vec![(-1.0, 1.0)], "logistic").unwrap();
        let mut noisy = SnapshotSet::new(1, 1.0, vec![(-1.0, 1.0)], Provenance::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (x, z) in s.iter() {
            noisy.push(x, &[(z[0] + 0.05 * rng.random_range(-1.0..1.0)).clamp(-1.0, 1.0)]);
        }
        let (p, q) = build_data_matrices(&noisy, 3, 6, &spec).unwrap();
        let fit = koopman_matrix(&p, &q, DEFAULT_RANK_TOL).unwrap();
        let best = (&q - &fit.k * &p).norm();
        for _ in 0..100 {
            let pert = DMatrix::from_fn(4, 7, |_, _| rng.random_range(-1e-3..1e-3));
            let other = &fit.k + pert;
            assert!((&q - &other * &p).norm() >= best - 1e-12);
        }
        let g = GramData::from_matrices(&p, &q);
        assert!((g.residual_sq(&fit.k).sqrt() - best).abs() < 1e-6);
    }

    #[test]
    fn gram_and_direct_paths_agree() {
        let spec = BasisSpec::chebyshev_unit(1, 8);
        let s = simulate_map(&Logistic, &[0.3], 5000, vec![(-1.0, 1.0)], "logistic").unwrap();
        let a = edmd(&s, 4, 8, &spec, EdmdPath::Direct).unwrap();
        let b = edmd(&s, 4, 8, &spec, EdmdPath::Gram).unwrap();
        assert!((&a.entries - &b.entries).amax() < 1e-7);
        assert!(a.entries.row(0).amax() < 1e-10);
    }

    #[test]
    fn continuous_time_scaling() {
        let spec = BasisSpec::chebyshev_unit(1, 4);
        let kmat = extraction_matrix(2, 4, &spec).unwrap() * 2.0;
        let l1 = lie_matrix(&kmat, 2, 4, 1.0, &spec).unwrap();
        let l2 = lie_matrix(&kmat, 2, 4, 0.5, &spec).unwrap();
        assert!((&l1.entries * 2.0 - &l2.entries).amax() < 1e-15);
        assert!(lie_matrix(&kmat, 2, 4, 0.0, &spec).is_err());
    }

    #[test]
    fn json_round_trip() {
        let spec = BasisSpec::chebyshev_unit(1, 6);
        let s = simulate_map(&Logistic, &[0.3], 100, vec![(-1.0, 1.0)], "logistic").unwrap();
        let lie = edmd(&s, 3, 6, &spec, EdmdPath::Direct).unwrap();
        let mut buf = Vec::new();
        lie.write_json(&mut buf).unwrap();
        let back = LieMatrix::read_json(&buf[..]).unwrap();
        assert_eq!(back, lie);
    }
}
