//! Stationary Gaussian simulation of the harmonic coefficients.
//!
//! Each multipole `l` carries `2l + 1` independent scalar AR(p) paths that
//! share the coefficient row `phi_l` and innovation variance `C_{l;Z}`.
//! Every `(l, m, replication)` stream owns a counter-based generator keyed
//! by the master seed, so output is identical no matter how work is
//! scheduled across threads.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SpharError};
use crate::linalg;
use crate::model::{is_stationary, SpharModel};
use crate::real::{cast, Real};

/// Deterministic stream derivation from a 64-bit master seed.
///
/// Sub-streams are keyed by `(ell, m, replication)` through a splitmix64
/// chain, so the same tuple always yields the same Gaussian path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSpec {
    master_seed: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Generator for the `(ell, m, replication)` stream.
    pub fn stream(&self, ell: usize, m: i64, replication: usize) -> ChaCha8Rng {
        let mut state = self.master_seed;
        for v in [ell as u64, m as u64, replication as u64] {
            let mut tag = v;
            state ^= splitmix64(&mut tag);
            splitmix64(&mut state);
        }
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

/// Simulated harmonic coefficients `a_{l,m}(t)` for `l < L`, `t = 1..n`.
///
/// `series[l]` is a `(2l + 1) x n` matrix whose row `m + l` is the path of
/// azimuth `m`. The generating order `p` is carried along because the
/// regression design needs it.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicSample<F> {
    n: usize,
    p: usize,
    series: Vec<Array2<F>>,
}

impl<F: Real> HarmonicSample<F> {
    pub fn new(n: usize, p: usize, series: Vec<Array2<F>>) -> Result<Self> {
        for (l, block) in series.iter().enumerate() {
            if block.nrows() != 2 * l + 1 || block.ncols() != n {
                return Err(SpharError::Dimension(format!(
                    "multipole {l} block is {}x{}, expected {}x{n}",
                    block.nrows(),
                    block.ncols(),
                    2 * l + 1
                )));
            }
        }
        Ok(Self { n, p, series })
    }

    /// Number of observed time points `n`.
    pub fn len_time(&self) -> usize {
        self.n
    }

    /// Order of the generating model.
    pub fn order(&self) -> usize {
        self.p
    }

    /// Truncation level `L`.
    pub fn truncation(&self) -> usize {
        self.series.len()
    }

    /// All paths of multipole `ell`, one row per azimuth.
    pub fn series(&self, ell: usize) -> &Array2<F> {
        &self.series[ell]
    }

    /// Value `a_{l,m}(t)` with `t` 1-based and `m` in `-l..=l`.
    pub fn value(&self, ell: usize, m: i64, t: usize) -> F {
        self.series[ell][[(m + ell as i64) as usize, t - 1]]
    }

    /// Write the `(ell, m, t, value)` CSV form.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(SpharError::io(path))?;
        let mut out = BufWriter::new(file);
        let write = |out: &mut BufWriter<fs::File>, text: String| {
            out.write_all(text.as_bytes()).map_err(SpharError::io(path))
        };
        write(&mut out, "ell,m,t,value\n".to_string())?;
        for (l, block) in self.series.iter().enumerate() {
            for row in 0..block.nrows() {
                let m = row as i64 - l as i64;
                for t in 0..self.n {
                    write(&mut out, format!("{l},{m},{},{}\n", t + 1, block[[row, t]]))?;
                }
            }
        }
        out.flush().map_err(SpharError::io(path))
    }

    /// Read the CSV form back; the generating order is not stored in the
    /// file and must be supplied.
    pub fn read_csv(path: &Path, p: usize) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(SpharError::io(path))?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == "ell,m,t,value" => {}
            _ => {
                return Err(SpharError::Parse {
                    path: path.into(),
                    line: 1,
                    message: "expected header `ell,m,t,value`".into(),
                })
            }
        }
        let mut records: Vec<(usize, i64, usize, F)> = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let parse = |message: String| SpharError::Parse {
                path: path.into(),
                line: idx + 1,
                message,
            };
            let mut fields = line.split(',');
            let mut next = |name: &str| {
                fields
                    .next()
                    .ok_or_else(|| parse(format!("missing field `{name}`")))
            };
            let ell: usize = next("ell")?
                .trim()
                .parse()
                .map_err(|e| parse(format!("{e}")))?;
            let m: i64 = next("m")?
                .trim()
                .parse()
                .map_err(|e| parse(format!("{e}")))?;
            let t: usize = next("t")?
                .trim()
                .parse()
                .map_err(|e| parse(format!("{e}")))?;
            let value: f64 = next("value")?
                .trim()
                .parse()
                .map_err(|e| parse(format!("{e}")))?;
            records.push((ell, m, t, cast(value)));
        }
        let truncation = records.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let n = records.iter().map(|r| r.2).max().unwrap_or(0);
        let mut series: Vec<Array2<F>> = (0..truncation)
            .map(|l| Array2::zeros((2 * l + 1, n)))
            .collect();
        let mut seen: Vec<Array2<u8>> = (0..truncation)
            .map(|l| Array2::zeros((2 * l + 1, n)))
            .collect();
        for (ell, m, t, value) in records {
            let row = m + ell as i64;
            if row < 0 || row >= (2 * ell + 1) as i64 || t == 0 || t > n {
                return Err(SpharError::Parse {
                    path: path.into(),
                    line: 0,
                    message: format!("record (ell = {ell}, m = {m}, t = {t}) out of range"),
                });
            }
            series[ell][[row as usize, t - 1]] = value;
            seen[ell][[row as usize, t - 1]] = 1;
        }
        if seen.iter().any(|block| block.iter().any(|&s| s == 0)) {
            return Err(SpharError::Parse {
                path: path.into(),
                line: 0,
                message: "incomplete sample: some (ell, m, t) records are missing".into(),
            });
        }
        Self::new(n, p, series)
    }

    /// Write the compact binary layout: a header of `L`, `n`, `p` as
    /// little-endian `u64`, then row-major `f64` values per multipole block.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(SpharError::io(path))?;
        let mut out = BufWriter::new(file);
        let mut put = |bytes: &[u8]| out.write_all(bytes).map_err(SpharError::io(path));
        put(&(self.truncation() as u64).to_le_bytes())?;
        put(&(self.n as u64).to_le_bytes())?;
        put(&(self.p as u64).to_le_bytes())?;
        for block in &self.series {
            for v in block.iter() {
                put(&v.to_f64().unwrap_or(f64::NAN).to_le_bytes())?;
            }
        }
        out.flush().map_err(SpharError::io(path))
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(SpharError::io(path))?;
        let word = |offset: usize| -> Result<u64> {
            bytes
                .get(offset..offset + 8)
                .map(|s| u64::from_le_bytes(s.try_into().unwrap()))
                .ok_or_else(|| SpharError::Parse {
                    path: path.into(),
                    line: 0,
                    message: "truncated header".into(),
                })
        };
        let truncation = word(0)? as usize;
        let n = word(8)? as usize;
        let p = word(16)? as usize;
        let values: usize = (0..truncation).map(|l| (2 * l + 1) * n).sum();
        if bytes.len() != 24 + 8 * values {
            return Err(SpharError::Parse {
                path: path.into(),
                line: 0,
                message: format!(
                    "payload holds {} bytes, header implies {}",
                    bytes.len() - 24.min(bytes.len()),
                    8 * values
                ),
            });
        }
        let mut offset = 24;
        let mut series = Vec::with_capacity(truncation);
        for l in 0..truncation {
            let rows = 2 * l + 1;
            let mut block = Array2::zeros((rows, n));
            for r in 0..rows {
                for t in 0..n {
                    let raw = f64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap());
                    block[[r, t]] = cast(raw);
                    offset += 8;
                }
            }
            series.push(block);
        }
        Self::new(n, p, series)
    }
}

/// Simulate the `2 ell + 1` paths of one multipole.
///
/// Paths start from a zero state and the first `burn_in` values are
/// discarded, which erases the transient for any row with roots bounded
/// away from the unit circle.
#[allow(clippy::too_many_arguments)]
pub fn simulate_multipole<F>(
    phi_row: &[F],
    c_z: F,
    count: usize,
    n: usize,
    burn_in: usize,
    seeds: &SeedSpec,
    ell: usize,
    replication: usize,
) -> Result<Array2<F>>
where
    F: Real,
    StandardNormal: Distribution<F>,
{
    if c_z <= F::zero() {
        return Err(SpharError::Domain(format!(
            "innovation variance must be positive, got {c_z}"
        )));
    }
    if count != 2 * ell + 1 {
        return Err(SpharError::Dimension(format!(
            "multipole {ell} requires 2*ell + 1 = {} paths, got {count}",
            2 * ell + 1
        )));
    }
    if !is_stationary(phi_row, F::zero()) {
        return Err(SpharError::NonStationary {
            context: format!("ell = {ell}"),
            modulus: f64::NAN,
            required: 1.0,
        });
    }
    let p = phi_row.len();
    let sigma = c_z.sqrt();
    let mut out = Array2::zeros((count, n));
    for row in 0..count {
        let m = row as i64 - ell as i64;
        let mut rng = seeds.stream(ell, m, replication);
        let mut lags = vec![F::zero(); p];
        for t in 0..burn_in + n {
            let noise: F = rng.sample(StandardNormal);
            let mut x = sigma * noise;
            for (j, &phi) in phi_row.iter().enumerate() {
                x += phi * lags[j];
            }
            for j in (1..p).rev() {
                lags[j] = lags[j - 1];
            }
            if p > 0 {
                lags[0] = x;
            }
            if t >= burn_in {
                out[[row, t - burn_in]] = x;
            }
        }
    }
    Ok(out)
}

/// Simulate the full coefficient field of a model.
pub fn simulate_field<F>(
    model: &SpharModel<F>,
    n: usize,
    burn_in: usize,
    seeds: &SeedSpec,
    replication: usize,
) -> Result<HarmonicSample<F>>
where
    F: Real,
    StandardNormal: Distribution<F>,
{
    let mut series = Vec::with_capacity(model.truncation());
    for ell in 0..model.truncation() {
        series.push(simulate_multipole(
            model.phi_row(ell),
            model.noise(ell),
            2 * ell + 1,
            n,
            burn_in,
            seeds,
            ell,
            replication,
        )?);
    }
    HarmonicSample::new(n, model.order(), series)
}

/// Autocovariances `C(0..=max_lag)` of the stationary AR(p) subprocess,
/// from the Yule-Walker equations with innovation variance `c_z`.
pub fn theoretical_autocovariance<F: Real>(
    phi_row: &[F],
    c_z: F,
    max_lag: usize,
) -> Result<Vec<F>> {
    if c_z <= F::zero() {
        return Err(SpharError::Domain(format!(
            "innovation variance must be positive, got {c_z}"
        )));
    }
    let p = phi_row.len();
    // Equations for k = 0..=p: C(k) - sum_j phi_j C(|k - j|) = c_z * [k == 0].
    let mut a = Array2::zeros((p + 1, p + 1));
    for k in 0..=p {
        a[[k, k]] += F::one();
        for (j, &phi) in phi_row.iter().enumerate() {
            let lag = (k as i64 - (j + 1) as i64).unsigned_abs() as usize;
            a[[k, lag]] -= phi;
        }
    }
    let mut rhs = vec![F::zero(); p + 1];
    rhs[0] = c_z;
    let mut cov = linalg::solve(a.view(), &rhs)?;
    if !cov[0].is_finite() || cov[0] <= F::zero() {
        return Err(SpharError::Singular(
            "Yule-Walker system produced a non-positive variance".into(),
        ));
    }
    for h in p + 1..=max_lag {
        let mut value = F::zero();
        for (j, &phi) in phi_row.iter().enumerate() {
            value += phi * cov[h - j - 1];
        }
        cov.push(value);
    }
    cov.truncate(max_lag + 1);
    Ok(cov)
}

/// Sample autocovariance at the given lag, averaged over all paths of a
/// simulated block.
pub fn sample_autocovariance<F: Real>(block: &Array2<F>, lag: usize) -> F {
    let n = block.ncols();
    let count = block.nrows();
    let mut acc = F::zero();
    for row in 0..count {
        for t in lag..n {
            acc += block[[row, t]] * block[[row, t - lag]];
        }
    }
    acc / cast::<F>((count * (n - lag)) as f64)
}
