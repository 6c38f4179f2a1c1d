use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polybasis::{BasisEvaluator, BasisSpec};

/// Where a snapshot set came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub system: String,
    pub seed: Option<u64>,
    /// Internal integration step, when the data came from an integrator.
    pub step: Option<f64>,
}

/// `m` pairs `(x_i, z_i)` where `z_i` is the state `tau` time units after `x_i`.
///
/// Every stored point lies in `domain_box`; [`SnapshotSet::push`] drops pairs
/// with an endpoint outside it.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSet {
    pub dimension: usize,
    pub tau: f64,
    pub domain_box: Vec<(f64, f64)>,
    pub provenance: Provenance,
    x: Vec<f64>,
    z: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    n: usize,
    m: usize,
    tau: f64,
    domain_box: Vec<(f64, f64)>,
    provenance: Provenance,
}

const BINARY_MAGIC: &[u8; 8] = b"IMSNAP01";

impl SnapshotSet {
    pub fn new(
        dimension: usize,
        tau: f64,
        domain_box: Vec<(f64, f64)>,
        provenance: Provenance,
    ) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Config(format!("timestep must be positive, got {tau}")));
        }
        if domain_box.len() != dimension {
            return Err(Error::DimensionMismatch(format!(
                "box has {} axes for dimension {dimension}",
                domain_box.len()
            )));
        }
        Ok(SnapshotSet {
            dimension,
            tau,
            domain_box,
            provenance,
            x: Vec::new(),
            z: Vec::new(),
        })
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(&self.domain_box)
            .all(|(&v, &(a, b))| v >= a && v <= b)
    }

    /// Appends a pair; returns `false` (and stores nothing) if either point is
    /// outside the box or not finite.
    pub fn push(&mut self, x: &[f64], z: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.dimension);
        if !(self.contains(x) && self.contains(z)) {
            return false;
        }
        self.x.extend_from_slice(x);
        self.z.extend_from_slice(z);
        true
    }

    pub fn append(&mut self, other: &SnapshotSet) {
        self.x.extend_from_slice(&other.x);
        self.z.extend_from_slice(&other.z);
    }

    pub fn len(&self) -> usize {
        self.x.len() / self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn z(&self, i: usize) -> &[f64] {
        &self.z[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.x
            .chunks_exact(self.dimension)
            .zip(self.z.chunks_exact(self.dimension))
    }

    /// Keeps the first `m` pairs.
    pub fn truncate(&mut self, m: usize) {
        self.x.truncate(m * self.dimension);
        self.z.truncate(m * self.dimension);
    }

    /// Affine image of both endpoints mapping `domain_box` onto `[-1, 1]^n`.
    pub fn to_unit_box(&self) -> SnapshotSet {
        let scale = |v: &[f64]| -> Vec<f64> {
            v.chunks_exact(self.dimension)
                .flat_map(|p| {
                    p.iter()
                        .zip(&self.domain_box)
                        .map(|(&u, &(a, b))| ((2.0 * u - a - b) / (b - a)).clamp(-1.0, 1.0))
                        .collect::<Vec<_>>()
                })
                .collect()
        };
        SnapshotSet {
            dimension: self.dimension,
            tau: self.tau,
            domain_box: vec![(-1.0, 1.0); self.dimension],
            provenance: self.provenance.clone(),
            x: scale(&self.x),
            z: scale(&self.z),
        }
    }

    fn header(&self, format: &str) -> Header {
        Header {
            format: format.to_string(),
            n: self.dimension,
            m: self.len(),
            tau: self.tau,
            domain_box: self.domain_box.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// CSV layout: one `# {json header}` line, a column line
    /// `x0,...,x{n-1},z0,...,z{n-1}`, then one row per snapshot. Values use
    /// the shortest representation that round-trips exactly.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# {}", serde_json::to_string(&self.header("csv"))?)?;
        let cols: Vec<String> = (0..self.dimension)
            .map(|i| format!("x{i}"))
            .chain((0..self.dimension).map(|i| format!("z{i}")))
            .collect();
        writeln!(w, "{}", cols.join(","))?;
        let mut line = String::new();
        for (x, z) in self.iter() {
            line.clear();
            for (j, v) in x.iter().chain(z).enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{v:?}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Format("empty snapshot file".into()))??;
        let json = first
            .strip_prefix("# ")
            .ok_or_else(|| Error::Format("missing header line".into()))?;
        let h: Header = serde_json::from_str(json)?;
        lines
            .next()
            .ok_or_else(|| Error::Format("missing column line".into()))??;
        let mut set = SnapshotSet::new(h.n, h.tau, h.domain_box, h.provenance)?;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Format(format!("{s}: {e}")))
                })
                .collect::<Result<_>>()?;
            if vals.len() != 2 * h.n {
                return Err(Error::Format(format!("row with {} columns", vals.len())));
            }
            set.x.extend_from_slice(&vals[..h.n]);
            set.z.extend_from_slice(&vals[h.n..]);
        }
        if set.len() != h.m {
            return Err(Error::Format(format!(
                "header declares {} rows, found {}",
                h.m,
                set.len()
            )));
        }
        Ok(set)
    }

    /// Binary layout: magic `IMSNAP01`, u64 little-endian header length, JSON
    /// header, then `m` records of `2n` little-endian f64 (`x_i` then `z_i`).
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header("binary"))?;
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for (x, z) in self.iter() {
            for v in x.iter().chain(z) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Format("bad snapshot magic".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let h: Header = serde_json::from_slice(&header)?;
        let mut set = SnapshotSet::new(h.n, h.tau, h.domain_box, h.provenance)?;
        let mut buf = [0u8; 8];
        for _ in 0..h.m {
            for j in 0..2 * h.n {
                r.read_exact(&mut buf)?;
                let v = f64::from_le_bytes(buf);
                if j < h.n {
                    set.x.push(v);
                } else {
                    set.z.push(v);
                }
            }
        }
        Ok(set)
    }

    /// Writes CSV or binary depending on the extension (`.csv` is CSV).
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        if path.extension().is_some_and(|e| e == "csv") {
            self.write_csv(f)
        } else {
            self.write_binary(f)
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        if path.extension().is_some_and(|e| e == "csv") {
            SnapshotSet::read_csv(f)
        } else {
            SnapshotSet::read_binary(f)
        }
    }
}

/// Time averages `(1/m) Σ b_γ(x_i)` of every dictionary element.
pub fn empirical_moments(snapshots: &SnapshotSet, spec: &BasisSpec) -> Result<Vec<f64>> {
    if snapshots.is_empty() {
        return Err(Error::Config("empty snapshot set".into()));
    }
    let mut ev = BasisEvaluator::new(spec);
    let mut acc = vec![0.0; spec.size()];
    let mut row = vec![0.0; spec.size()];
    for (x, _) in snapshots.iter() {
        ev.eval_into(x, &mut row)?;
        for (a, r) in acc.iter_mut().zip(&row) {
            *a += r;
        }
    }
    let m = snapshots.len() as f64;
    for a in acc.iter_mut() {
        *a /= m;
    }
    acc[0] = 1.0;
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polybasis::BasisFamily;

    fn sample() -> SnapshotSet {
        let mut s = SnapshotSet::new(
            2,
            0.5,
            vec![(-1.0, 1.0), (-2.0, 2.0)],
            Provenance {
                system: "test".into(),
                seed: Some(7),
                step: None,
            },
        )
        .unwrap();
        s.push(&[0.1, -0.3], &[0.2, 1.0 / 3.0]);
        s.push(&[-0.7, 1.9], &[0.0, 0.0]);
        assert!(!s.push(&[1.5, 0.0], &[0.0, 0.0]));
        s
    }

    #[test]
    fn drops_out_of_box_pairs() {
        assert_eq!(sample().len(), 2);
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let s = sample();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(SnapshotSet::read_csv(&buf[..]).unwrap(), s);
        let mut bin = Vec::new();
        s.write_binary(&mut bin).unwrap();
        assert_eq!(SnapshotSet::read_binary(&bin[..]).unwrap(), s);
    }

    #[test]
    fn empirical_moment_cases() {
        let spec = BasisSpec::chebyshev_unit(2, 3);
        let mut one = SnapshotSet::new(2, 1.0, vec![(-1.0, 1.0); 2], Provenance::default()).unwrap();
        one.push(&[0.3, -0.2], &[0.0, 0.0]);
        assert_eq!(empirical_moments(&one, &spec).unwrap(), spec.eval(&[0.3, -0.2]).unwrap());

        let mono = BasisSpec::new(BasisFamily::Monomial, 1, 5, vec![(-1.0, 1.0)]).unwrap();
        let mut sym = SnapshotSet::new(1, 1.0, vec![(-1.0, 1.0)], Provenance::default()).unwrap();
        sym.push(&[-0.6], &[0.0]);
        sym.push(&[0.6], &[0.0]);
        let y = empirical_moments(&sym, &mono).unwrap();
        assert_eq!(y[0], 1.0);
        for j in [1, 3, 5] {
            assert!(y[j].abs() < 1e-15);
        }
    }
}
