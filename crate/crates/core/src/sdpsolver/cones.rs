use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// One factor of the product cone, with its dimension parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cone {
    /// `{0}^d`.
    Zero(usize),
    /// Nonnegative orthant of dimension `d`.
    NonNeg(usize),
    /// `{(t, v) : |v| <= t}` of total dimension `d`.
    Soc(usize),
    /// Positive semidefinite `s x s` matrices, vectorized with [`svec`].
    Psd(usize),
}

impl Cone {
    /// Number of rows the cone occupies.
    pub fn rows(&self) -> usize {
        match *self {
            Cone::Zero(d) | Cone::NonNeg(d) | Cone::Soc(d) => d,
            Cone::Psd(s) => s * (s + 1) / 2,
        }
    }

    /// Projects `v` onto the cone in place.
    pub fn project(&self, v: &mut [f64]) {
        match *self {
            Cone::Zero(_) => v.iter_mut().for_each(|x| *x = 0.0),
            Cone::NonNeg(_) => v.iter_mut().for_each(|x| *x = x.max(0.0)),
            Cone::Soc(_) => project_soc(v),
            Cone::Psd(s) => {
                let m = psd_project(&smat(v, s));
                v.copy_from_slice(&svec(&m));
            }
        }
    }
}

fn project_soc(v: &mut [f64]) {
    let t = v[0];
    let nv = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
    if nv <= t {
        return;
    }
    if nv <= -t {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let a = 0.5 * (t + nv);
    v[0] = a;
    let f = a / nv;
    v[1..].iter_mut().for_each(|x| *x *= f);
}

/// Lower triangle, column by column, off-diagonal entries scaled by `sqrt 2`
/// so that `svec(A) . svec(B) = trace(A B)`.
pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let s = m.nrows();
    let r2 = std::f64::consts::SQRT_2;
    let mut out = Vec::with_capacity(s * (s + 1) / 2);
    for j in 0..s {
        out.push(m[(j, j)]);
        for i in j + 1..s {
            out.push(r2 * 0.5 * (m[(i, j)] + m[(j, i)]));
        }
    }
    out
}

/// Inverse of [`svec`].
pub fn smat(v: &[f64], s: usize) -> DMatrix<f64> {
    let r2 = std::f64::consts::SQRT_2;
    let mut m = DMatrix::zeros(s, s);
    let mut k = 0;
    for j in 0..s {
        m[(j, j)] = v[k];
        k += 1;
        for i in j + 1..s {
            let x = v[k] / r2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            k += 1;
        }
    }
    m
}

/// Position of entry `(i, j)`, `i >= j`, in [`svec`] order.
pub fn svec_index(i: usize, j: usize, s: usize) -> usize {
    debug_assert!(i >= j);
    j * s - j * j.saturating_sub(1) / 2 + (i - j)
}

/// Nearest positive semidefinite matrix in the Frobenius norm: negative
/// eigenvalues are clipped to zero.
pub fn psd_project(m: &DMatrix<f64>) -> DMatrix<f64> {
    let s = m.nrows();
    if s == 1 {
        return DMatrix::from_element(1, 1, m[(0, 0)].max(0.0));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return sym;
    }
    let mut out = DMatrix::zeros(s, s);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > 0.0 {
            let v = eig.eigenvectors.column(k);
            out.syger(l, &v, &v, 1.0);
        }
    }
    // syger fills the lower triangle
    for j in 0..s {
        for i in j + 1..s {
            out[(j, i)] = out[(i, j)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, s: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(s, s, |_, _| rng.random_range(-1.0..1.0));
        (&a + a.transpose()) * 0.5
    }

    #[test]
    fn svec_round_trip_and_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_sym(&mut rng, 5);
        let b = random_sym(&mut rng, 5);
        assert!((smat(&svec(&a), 5) - &a).amax() < 1e-15);
        let ip: f64 = svec(&a).iter().zip(svec(&b)).map(|(x, y)| x * y).sum();
        assert!((ip - (&a * &b).trace()).abs() < 1e-13);
        for j in 0..5 {
            for i in j..5 {
                let mut e = DMatrix::zeros(5, 5);
                e[(i, j)] = 1.0;
                e[(j, i)] = 1.0;
                let v = svec(&e);
                assert!(v[svec_index(i, j, 5)] > 0.5);
            }
        }
    }

    #[test]
    fn psd_projection_cases() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, -1.0]));
        let p = psd_project(&d);
        assert!((p - DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 0.0]))).amax() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let psd = &b * b.transpose();
        assert!((psd_project(&psd) - &psd).amax() < 1e-14);
    }

    #[test]
    fn psd_projection_is_nearest() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_sym(&mut rng, 10);
        let p = psd_project(&m);
        assert!(p.clone().symmetric_eigenvalues().min() > -1e-12);
        let dist = (&p - &m).norm();
        for _ in 0..100 {
            let b = DMatrix::from_fn(10, 10, |_, _| rng.random_range(-1.0..1.0));
            let other = &b * b.transpose() * rng.random_range(0.0..0.3);
            assert!((&other - &m).norm() >= dist - 1e-12);
        }
    }

    #[test]
    fn soc_projection() {
        let mut v = vec![1.0, 3.0, 4.0];
        Cone::Soc(3).project(&mut v);
        assert!((v[0] - 3.0).abs() < 1e-15);
        assert!((v[1] * v[1] + v[2] * v[2]).sqrt() - v[0] < 1e-14);
        let mut w = vec![-10.0, 1.0, 0.0];
        Cone::Soc(3).project(&mut w);
        assert_eq!(w, vec![0.0; 3]);
        let mut inside = vec![5.0, 3.0, 4.0];
        Cone::Soc(3).project(&mut inside);
        assert_eq!(inside, vec![5.0, 3.0, 4.0]);
    }
}
