//! Synthetic problem instances: Gaussian rank-r factors, optional
//! ill-conditioning, uniform sampling at a target over-sampling ratio,
//! additive noise on the training entries, a clean disjoint test set, and
//! contiguous column partitioning across agents.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::completion::SparseObservations;
use crate::error::{Error, Result};
use crate::linalg::thin_svd;

/// Recipe for one synthetic instance.
#[derive(Clone, Debug)]
pub struct SyntheticSpec {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    /// Over-sampling ratio: |train| / (mr + nr - r^2).
    pub os: f64,
    /// Standard deviation of the Gaussian noise added to training entries.
    pub noise_std: f64,
    /// When set, the ground truth's singular values decay exponentially from
    /// 1 down to 1/cond.
    pub cond: Option<f64>,
    /// Test-set size as a fraction of the training-set size.
    pub test_fraction: f64,
    pub n_agents: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.r < 1 || self.m <= self.r || self.n < self.r {
            return Err(Error::InvalidDimensions {
                m: self.m,
                r: self.r,
            });
        }
        if !(self.os.is_finite() && self.os > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "os must be > 0, got {}",
                self.os
            )));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise_std must be >= 0, got {}",
                self.noise_std
            )));
        }
        if let Some(cond) = self.cond {
            if !(cond.is_finite() && cond > 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "cond must be > 1, got {cond}"
                )));
            }
            if self.r < 2 {
                return Err(Error::InvalidConfig(
                    "cond requires rank >= 2 (a rank-1 matrix has condition number 1)".into(),
                ));
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "test_fraction must be in (0,1), got {}",
                self.test_fraction
            )));
        }
        if self.n_agents == 0 || self.n_agents > self.n {
            return Err(Error::InvalidConfig(format!(
                "n_agents must be in 1..={}, got {}",
                self.n, self.n_agents
            )));
        }
        let budget = self.os * degrees_of_freedom(self.m, self.n, self.r) as f64;
        if budget > (self.m * self.n) as f64 {
            return Err(Error::InfeasibleSampling {
                requested: budget as usize,
                rows: self.m,
                cols: self.n,
            });
        }
        Ok(())
    }
}

/// A generated problem, already split across agents.
#[derive(Clone, Debug)]
pub struct Instance {
    /// Per-agent training blocks, columns re-indexed locally.
    pub blocks: Vec<SparseObservations>,
    /// Per-agent held-out test blocks over the same local columns.
    pub heldout: Vec<SparseObservations>,
    pub rank: usize,
    pub m: usize,
    pub n: usize,
    /// Global column range of each agent.
    pub col_ranges: Vec<Range<usize>>,
}

impl Instance {
    pub fn n_agents(&self) -> usize {
        self.blocks.len()
    }

    pub fn train_len(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn test_len(&self) -> usize {
        self.heldout.iter().map(|b| b.len()).sum()
    }
}

/// Degrees of freedom of an m×n rank-r matrix: mr + nr - r^2.
pub fn degrees_of_freedom(m: usize, n: usize, r: usize) -> usize {
    m * r + n * r - r * r
}

/// Training-set size implied by the over-sampling ratio (rounded to nearest).
pub fn sample_count(m: usize, n: usize, r: usize, os: f64) -> usize {
    (os * degrees_of_freedom(m, n, r) as f64).round() as usize
}

/// Contiguous column ranges: every agent takes ceil(n / n_agents) columns,
/// the last takes what remains. Matches splitting 138493 columns across 4
/// agents as 34624, 34624, 34624, 34621.
pub fn partition_columns(n: usize, n_agents: usize) -> Result<Vec<Range<usize>>> {
    if n_agents == 0 {
        return Err(Error::InvalidConfig("n_agents must be >= 1".into()));
    }
    if n_agents > n {
        return Err(Error::InvalidConfig(format!(
            "n_agents {n_agents} exceeds column count {n}"
        )));
    }
    let chunk = n.div_ceil(n_agents);
    Ok((0..n_agents)
        .map(|a| (a * chunk).min(n)..((a + 1) * chunk).min(n))
        .collect())
}

/// Draws `k` distinct values from `0..total` by a virtual Fisher-Yates
/// shuffle (O(k) memory), in draw order.
fn sample_distinct<R: Rng + ?Sized>(rng: &mut R, total: usize, k: usize) -> Vec<usize> {
    debug_assert!(k <= total);
    let mut swaps: HashMap<usize, usize> = HashMap::new();
    let mut out = Vec::with_capacity(k);
    for cursor in 0..k {
        let j = rng.random_range(cursor..total);
        let value_j = *swaps.get(&j).unwrap_or(&j);
        let value_cursor = *swaps.get(&cursor).unwrap_or(&cursor);
        swaps.insert(j, value_cursor);
        out.push(value_j);
    }
    out
}

/// Rank-r ground truth in factored form: entry (i, j) is
/// `left.row(i) · right.row(j)`.
struct GroundTruth {
    left: DMatrix<f64>,
    right: DMatrix<f64>,
}

impl GroundTruth {
    fn entry(&self, i: usize, j: usize) -> f64 {
        let r = self.left.ncols();
        let mut v = 0.0;
        for k in 0..r {
            v += self.left[(i, k)] * self.right[(j, k)];
        }
        v
    }
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// Builds the factored ground truth A B^T, optionally rescaling its singular
/// values to decay exponentially from 1 down to 1/cond.
///
/// The rescaling computes the thin SVD of A B^T without materializing it:
/// with A = Qa Ra and B = Qb Rb, svd(Ra Rb^T) = U S V^T gives
/// A B^T = (Qa U) S (Qb V)^T, and S is replaced by the target decay.
fn build_ground_truth<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> GroundTruth {
    let a = gaussian_matrix(spec.m, spec.r, rng);
    let b = gaussian_matrix(spec.n, spec.r, rng);
    match spec.cond {
        None => GroundTruth { left: a, right: b },
        Some(cond) => {
            let qa = a.qr();
            let qb = b.qr();
            let core = qa.r() * qb.r().transpose();
            let svd = thin_svd(&core);
            let mut left = qa.q() * svd.u;
            for k in 0..spec.r {
                let sigma = cond.powf(-(k as f64) / (spec.r as f64 - 1.0));
                for i in 0..spec.m {
                    left[(i, k)] *= sigma;
                }
            }
            GroundTruth {
                left,
                right: qb.q() * svd.v,
            }
        }
    }
}

/// Generates one instance: ground truth, disjoint train/test index draws,
/// noise on training values, and the per-agent column split. Deterministic
/// given the seed.
pub fn generate(spec: &SyntheticSpec) -> Result<Instance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth = build_ground_truth(spec, &mut rng);

    let n_train = sample_count(spec.m, spec.n, spec.r, spec.os);
    let n_test = (spec.test_fraction * n_train as f64).ceil() as usize;
    let total = spec.m * spec.n;
    if n_train + n_test > total {
        return Err(Error::InfeasibleSampling {
            requested: n_train + n_test,
            rows: spec.m,
            cols: spec.n,
        });
    }

    // Linear indices are column-major (col * m + row), so ascending order
    // matches the blocks' storage order.
    let drawn = sample_distinct(&mut rng, total, n_train + n_test);
    let mut train_idx = drawn[..n_train].to_vec();
    let mut test_idx = drawn[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let ranges = partition_columns(spec.n, spec.n_agents)?;
    let agent_of_col = |col: usize| -> usize {
        ranges
            .iter()
            .position(|range| range.contains(&col))
            .expect("ranges cover 0..n")
    };

    let mut train_triples: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); spec.n_agents];
    for idx in train_idx {
        let col = idx / spec.m;
        let row = idx % spec.m;
        let mut value = truth.entry(row, col);
        if spec.noise_std > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            value += spec.noise_std * z;
        }
        let agent = agent_of_col(col);
        train_triples[agent].push((row, col - ranges[agent].start, value));
    }
    let mut test_triples: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); spec.n_agents];
    for idx in test_idx {
        let col = idx / spec.m;
        let row = idx % spec.m;
        let agent = agent_of_col(col);
        test_triples[agent].push((row, col - ranges[agent].start, truth.entry(row, col)));
    }

    let mut blocks = Vec::with_capacity(spec.n_agents);
    let mut heldout = Vec::with_capacity(spec.n_agents);
    for (agent, range) in ranges.iter().enumerate() {
        let width = range.end - range.start;
        blocks.push(SparseObservations::from_triples(
            spec.m,
            width,
            &train_triples[agent],
        )?);
        heldout.push(SparseObservations::from_triples(
            spec.m,
            width,
            &test_triples[agent],
        )?);
    }
    Ok(Instance {
        blocks,
        heldout,
        rank: spec.r,
        m: spec.m,
        n: spec.n,
        col_ranges: ranges,
    })
}

/// Returns a copy of the observations with every value multiplied by `c`.
/// Used to move a sigma_1 = 1 conditioned instance to a different data scale.
pub fn scale_values(obs: &SparseObservations, c: f64) -> Result<SparseObservations> {
    let triples: Vec<(usize, usize, f64)> = obs.iter().map(|(i, j, v)| (i, j, c * v)).collect();
    SparseObservations::from_triples(obs.n_rows(), obs.n_cols(), &triples)
}

/// Writes an instance in the sparse text format:
/// a header `m n r n_agents`, then one `row col value split agent` line per
/// entry (0-based global indices, split is `train` or `test`, agent 1-based).
pub fn write_instance(instance: &Instance, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "{} {} {} {}",
        instance.m,
        instance.n,
        instance.rank,
        instance.n_agents()
    )?;
    for (agent, (block, held)) in instance
        .blocks
        .iter()
        .zip(instance.heldout.iter())
        .enumerate()
    {
        let start = instance.col_ranges[agent].start;
        for (row, col, value) in block.iter() {
            writeln!(out, "{} {} {} train {}", row, start + col, value, agent + 1)?;
        }
        for (row, col, value) in held.iter() {
            writeln!(out, "{} {} {} test {}", row, start + col, value, agent + 1)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn base_spec() -> SyntheticSpec {
        SyntheticSpec {
            m: 20,
            n: 30,
            r: 2,
            os: 3.0,
            noise_std: 0.0,
            cond: None,
            test_fraction: 0.1,
            n_agents: 3,
            seed: 7,
        }
    }

    #[test]
    fn sample_count_formula() {
        // 10x10 rank 1 at OS 1: 10 + 10 - 1 = 19 entries.
        assert_eq!(sample_count(10, 10, 1, 1.0), 19);
    }

    #[test]
    fn partition_examples() {
        assert_eq!(partition_columns(10, 2).unwrap(), vec![0..5, 5..10]);
        assert_eq!(partition_columns(7, 1).unwrap(), vec![0..7]);
        let ml = partition_columns(138_493, 4).unwrap();
        let sizes: Vec<usize> = ml.iter().map(|r| r.end - r.start).collect();
        assert_eq!(sizes, vec![34_624, 34_624, 34_624, 34_621]);
        assert_eq!(ml.last().unwrap().end, 138_493);
        assert!(partition_columns(5, 0).is_err());
        assert!(partition_columns(3, 4).is_err());
    }

    #[test]
    fn partition_covers_everything_contiguously() {
        for n in [1usize, 5, 17, 100, 1013] {
            for agents in 1..=n.min(9) {
                let ranges = partition_columns(n, agents).unwrap();
                assert_eq!(ranges.len(), agents);
                assert_eq!(ranges[0].start, 0);
                assert_eq!(ranges.last().unwrap().end, n);
                for pair in ranges.windows(2) {
                    assert_eq!(pair[0].end, pair[1].start);
                }
            }
        }
    }

    #[test]
    fn generated_counts_and_disjointness() {
        let spec = base_spec();
        let inst = generate(&spec).unwrap();
        let expected_train = sample_count(20, 30, 2, 3.0);
        assert_eq!(inst.train_len(), expected_train);
        assert_eq!(
            inst.test_len(),
            (0.1 * expected_train as f64).ceil() as usize
        );

        // Train and test never overlap, and all global indices are in range.
        let mut seen: HashSet<(usize, usize)> = HashSet::new();
        for (agent, range) in inst.col_ranges.iter().enumerate() {
            for (row, col, _) in inst.blocks[agent].iter().chain(inst.heldout[agent].iter()) {
                let global = (row, range.start + col);
                assert!(global.0 < 20 && global.1 < 30);
                assert!(seen.insert(global), "duplicate index {global:?}");
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = base_spec();
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        for (x, y) in a.blocks.iter().zip(b.blocks.iter()) {
            assert_eq!(x, y);
        }
        for (x, y) in a.heldout.iter().zip(b.heldout.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn conditioning_imposes_singular_value_decay() {
        let spec = SyntheticSpec {
            m: 30,
            n: 40,
            r: 5,
            cond: Some(500.0),
            os: 4.0,
            noise_std: 0.0,
            test_fraction: 0.1,
            n_agents: 2,
            seed: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let truth = build_ground_truth(&spec, &mut rng);
        let dense = &truth.left * truth.right.transpose();
        let mut sv: Vec<f64> = dense
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let expected: Vec<f64> = (0..5).map(|k| 500f64.powf(-(k as f64) / 4.0)).collect();
        for (got, want) in sv.iter().zip(expected.iter()) {
            assert!((got - want).abs() < 1e-10, "sigma {got} vs {want}");
        }
        assert!((sv[0] / sv[4] - 500.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_sampling_is_rejected() {
        let mut spec = base_spec();
        spec.os = 7.0; // 7 * (40 + 60 - 4) = 672 > 600 cells
        assert!(matches!(
            spec.validate(),
            Err(Error::InfeasibleSampling { .. })
        ));
    }

    #[test]
    fn cond_with_rank_one_is_rejected() {
        let mut spec = base_spec();
        spec.r = 1;
        spec.cond = Some(10.0);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn sample_distinct_draws_unique_indices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let drawn = sample_distinct(&mut rng, 1000, 400);
        assert_eq!(drawn.len(), 400);
        let unique: HashSet<_> = drawn.iter().collect();
        assert_eq!(unique.len(), 400);
        assert!(drawn.iter().all(|&i| i < 1000));
    }

    #[test]
    fn noiseless_instance_is_solved_exactly_by_alternation() {
        // End-to-end oracle: with no noise and generous OS, alternating the
        // closed-form weight solve between row and column factors drives the
        // held-out error to machine precision.
        use crate::completion::{solve_weights, test_error, SparseObservations};
        use crate::grassmann::random_point;

        let spec = SyntheticSpec {
            m: 50,
            n: 200,
            r: 2,
            os: 6.0,
            noise_std: 0.0,
            cond: None,
            test_fraction: 0.1,
            n_agents: 1,
            seed: 11,
        };
        let inst = generate(&spec).unwrap();
        let block = &inst.blocks[0];
        let held = &inst.heldout[0];

        // Transposed view of the block for the row-factor half-step.
        let transposed: Vec<(usize, usize, f64)> =
            block.iter().map(|(i, j, v)| (j, i, v)).collect();
        let block_t =
            SparseObservations::from_triples(block.n_cols(), block.n_rows(), &transposed).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut u = random_point(spec.m, spec.r, &mut rng).unwrap();
        let mut w = solve_weights(&u, block, 0.0).unwrap();
        for _ in 0..60 {
            // Column factor as a subspace from the weight solve on the
            // transposed block, then refit.
            let v_point =
                crate::grassmann::SubspacePoint::from_basis(orthonormal(w.matrix().clone()))
                    .unwrap();
            let u_raw = solve_weights(&v_point, &block_t, 0.0).unwrap();
            u = crate::grassmann::SubspacePoint::from_basis(orthonormal(u_raw.matrix().clone()))
                .unwrap();
            w = solve_weights(&u, block, 0.0).unwrap();
        }
        let (rmse, _) = test_error(&u, &w, held).unwrap();
        assert!(rmse < 1e-9, "rmse {rmse:.3e}");
    }

    fn orthonormal(m: DMatrix<f64>) -> DMatrix<f64> {
        let qr = m.qr();
        qr.q()
    }
}
