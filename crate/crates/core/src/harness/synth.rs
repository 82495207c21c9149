//! Synthetic tabulated design spaces with a known importance ordering.
//!
//! Objective `j` of sample `s` is
//! `Σ_q γ^q·v_q[s_q] + β·Σ_{q<r} u_qr[s_q, s_r] + ε·η(s)` (q counted from 1),
//! shifted so its minimum over the space is 1. Each `v_q` table is standardized
//! to zero mean and unit population variance, so with `β = ε = 0` feature `q`'s
//! importance is exactly `(|S| / n_q)·γ^{2q}`. The `u_qr` tables are standardized
//! and then scaled by `1/√(pairs)`, making the whole interaction sum unit
//! variance: `β` is its standard deviation regardless of `c`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{Dataset, FeatureSpec, ParameterSpace, Sense};

pub const MAX_SYNTH_SIZE: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub option_counts: Vec<usize>,
    pub gamma: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub objectives: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// Nine features, 1728 samples.
    fn default() -> Self {
        SyntheticSpec {
            option_counts: vec![3, 3, 3, 2, 2, 2, 2, 2, 2],
            gamma: 0.6,
            beta: 0.05,
            epsilon: 0.0,
            objectives: 1,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    /// Same profile with an unrelated value-table seed: a "similar design".
    pub fn sibling(&self) -> SyntheticSpec {
        SyntheticSpec { seed: self.seed ^ 0x9e37_79b9_7f4a_7c15, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synthetic spec: {}", m)));
        if self.option_counts.len() < 2 {
            return bad("need at least two features".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) || !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad("beta and epsilon must be finite and non-negative".into());
        }
        if self.objectives == 0 {
            return bad("need at least one objective".into());
        }
        Ok(())
    }

    pub fn space(&self) -> Result<ParameterSpace> {
        ParameterSpace::new(
            self.option_counts
                .iter()
                .enumerate()
                .map(|(q, &n)| FeatureSpec::new(format!("f{}", q + 1), (0..n).map(|o| format!("v{}", o))))
                .collect(),
        )
    }

    pub fn objective_names(&self) -> Vec<String> {
        (1..=self.objectives).map(|j| format!("obj{}", j)).collect()
    }
}

fn standardized<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    for x in &mut v {
        *x = if sd > 0.0 { (*x - mean) / sd } else { 0.0 };
    }
    v
}

/// SplitMix64 finalizer mapped to `[-1, 1]`.
fn hash_noise(seed: u64, objective: u64, index: u64) -> f64 {
    let mut z = seed ^ objective.wrapping_mul(0xd1b5_4a32_d192_ed03) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

/// Materializes the full ground-truth table.
pub fn synth_space(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let space = spec.space()?;
    if space.size() > MAX_SYNTH_SIZE {
        return Err(Error::Config(format!(
            "synthetic space has {} samples; exhaustive mode allows at most {}",
            space.size(),
            MAX_SYNTH_SIZE
        )));
    }
    let c = space.dims();
    let counts = &spec.option_counts;
    let weights: Vec<f64> = (1..=c).map(|q| spec.gamma.powi(q as i32)).collect();

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(spec.objectives);
    for j in 0..spec.objectives {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(j as u64);
        let v: Vec<Vec<f64>> = counts.iter().map(|&n| standardized(n, &mut rng)).collect();
        let pair_scale = 1.0 / ((c * (c - 1) / 2) as f64).sqrt();
        let mut u: Vec<Vec<f64>> = Vec::new();
        for q in 0..c {
            for r in q + 1..c {
                let mut t = standardized(counts[q] * counts[r], &mut rng);
                t.iter_mut().for_each(|x| *x *= pair_scale);
                u.push(t);
            }
        }
        let mut col = Vec::with_capacity(space.size() as usize);
        for (idx, s) in space.enumerate().enumerate() {
            let x = s.indices();
            let mut y: f64 = (0..c).map(|q| weights[q] * v[q][x[q] as usize]).sum();
            if spec.beta > 0.0 {
                let mut pair = 0;
                let mut inter = 0.0;
                for q in 0..c {
                    for r in q + 1..c {
                        inter += u[pair][x[q] as usize * counts[r] + x[r] as usize];
                        pair += 1;
                    }
                }
                y += spec.beta * inter;
            }
            if spec.epsilon > 0.0 {
                y += spec.epsilon * hash_noise(spec.seed, j as u64, idx as u64);
            }
            col.push(y);
        }
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        for y in &mut col {
            *y += 1.0 - lo;
        }
        columns.push(col);
    }

    let mut data =
        Dataset::new(space.clone(), spec.objective_names())?.with_senses(vec![Sense::Minimize; spec.objectives])?;
    for (idx, s) in space.enumerate().enumerate() {
        data.insert(s, columns.iter().map(|c| c[idx]).collect())?;
    }
    Ok(data)
}
