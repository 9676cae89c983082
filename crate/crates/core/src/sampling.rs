//! Every random choice the algorithm makes, derived from one master seed.
//!
//! Each draw uses its own ChaCha8 stream keyed by
//! `(master_seed, purpose, t, q, p, i)`, so results never depend on which
//! thread performs a draw or in what order.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FeatureSet, PartitionScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PiPolicy {
    /// Independent uniform permutation per block and iteration.
    #[default]
    Uniform,
    /// `π_q(p) = (p + t) mod P` for every block.
    Cyclic,
}

impl std::str::FromStr for PiPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(PiPolicy::Uniform),
            "cyclic" => Ok(PiPolicy::Cyclic),
            other => Err(Error::Config(format!("unknown pi policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    FeatureSet = 1,
    CoordinateSet = 2,
    ObservationSet = 3,
    Assignment = 4,
    LocalObservation = 5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngPolicy {
    pub master_seed: u64,
    pub pi_policy: PiPolicy,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl RngPolicy {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            pi_policy: PiPolicy::Uniform,
        }
    }

    pub fn with_pi_policy(mut self, pi_policy: PiPolicy) -> Self {
        self.pi_policy = pi_policy;
        self
    }

    /// Independent generator for one labelled draw.
    pub fn stream(&self, purpose: Purpose, t: u64, q: u64, p: u64, i: u64) -> ChaCha8Rng {
        let mut h = splitmix(self.master_seed);
        for word in [purpose as u64, t, q, p, i] {
            h = splitmix(h ^ word);
        }
        let mut seed = [0u8; 32];
        let mut s = h;
        for chunk in seed.chunks_exact_mut(8) {
            s = splitmix(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

/// The feature sets `B ⊇ C` and observation set `D` of one outer iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    /// Features entering the inner products.
    pub b: FeatureSet,
    /// Gradient coordinates that are evaluated.
    pub c: FeatureSet,
    /// Sorted observation indices.
    pub d: Vec<usize>,
    pub t: u64,
}

impl SampleSet {
    /// `B = C = all features`, `D = all observations`.
    pub fn full(scheme: &PartitionScheme, t: u64) -> Self {
        Self {
            b: FeatureSet::full(scheme.n_features()),
            c: FeatureSet::full(scheme.n_features()),
            d: (0..scheme.n_obs()).collect(),
            t,
        }
    }
}

pub fn draw_sets(
    scheme: &PartitionScheme,
    b: usize,
    c: usize,
    d: usize,
    t: u64,
    rng: &RngPolicy,
) -> Result<SampleSet> {
    let m = scheme.n_features();
    let n = scheme.n_obs();
    if !(1 <= c && c <= b && b <= m) {
        return Err(Error::Size(format!(
            "need 1 <= c <= b <= M, got c={c} b={b} M={m}"
        )));
    }
    if !(1..=n).contains(&d) {
        return Err(Error::Size(format!("need 1 <= d <= N, got d={d} N={n}")));
    }
    let b_idx = if b == m {
        (0..m).collect()
    } else {
        index::sample(&mut rng.stream(Purpose::FeatureSet, t, 0, 0, 0), m, b).into_vec()
    };
    let b_set = FeatureSet::new(m, b_idx)?;
    let c_idx = if c == b {
        b_set.indices().to_vec()
    } else {
        let picks = index::sample(&mut rng.stream(Purpose::CoordinateSet, t, 0, 0, 0), b, c);
        picks.iter().map(|i| b_set.indices()[i]).collect()
    };
    let c_set = FeatureSet::new(m, c_idx)?;
    let mut d_idx = if d == n {
        (0..n).collect()
    } else {
        index::sample(&mut rng.stream(Purpose::ObservationSet, t, 0, 0, 0), n, d).into_vec()
    };
    d_idx.sort_unstable();
    Ok(SampleSet {
        b: b_set,
        c: c_set,
        d: d_idx,
        t,
    })
}

/// One permutation of the sub-block indices per feature block.
///
/// `perms[q][p]` is the sub-block of block `q` updated by observation
/// partition `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub perms: Vec<Vec<usize>>,
}

impl Assignment {
    pub fn subblock(&self, q: usize, p: usize) -> usize {
        self.perms[q][p]
    }

    /// `π_q^{-1}`
    pub fn inverse(&self, q: usize) -> Vec<usize> {
        let mut inv = vec![0; self.perms[q].len()];
        for (p, &k) in self.perms[q].iter().enumerate() {
            inv[k] = p;
        }
        inv
    }

    pub fn is_valid(&self, scheme: &PartitionScheme) -> bool {
        self.perms.len() == scheme.feature_blocks()
            && self.perms.iter().all(|perm| {
                let mut sorted = perm.clone();
                sorted.sort_unstable();
                sorted == (0..scheme.obs_partitions()).collect::<Vec<_>>()
            })
    }
}

pub fn draw_assignment(scheme: &PartitionScheme, t: u64, rng: &RngPolicy) -> Assignment {
    let p_count = scheme.obs_partitions();
    let perms = (0..scheme.feature_blocks())
        .map(|q| match rng.pi_policy {
            PiPolicy::Uniform => {
                let mut perm: Vec<usize> = (0..p_count).collect();
                perm.shuffle(&mut rng.stream(Purpose::Assignment, t, q as u64, 0, 0));
                perm
            }
            PiPolicy::Cyclic => (0..p_count)
                .map(|p| (p + (t % p_count as u64) as usize) % p_count)
                .collect(),
        })
        .collect();
    Assignment { perms }
}

/// Row (local to partition `p`) used by worker `(p, q)` at inner step `i`.
pub fn draw_local_observation(
    n: usize,
    t: u64,
    i: u64,
    p: usize,
    q: usize,
    rng: &RngPolicy,
) -> usize {
    if n <= 1 {
        return 0;
    }
    rng.stream(Purpose::LocalObservation, t, q as u64, p as u64, i)
        .random_range(0..n)
}

/// Turns `(b, c, d)` fractions into counts: round half up, then clamp to
/// `1 <= c <= b <= M` and `1 <= d <= N`.
pub fn resolve_fractions(
    scheme: &PartitionScheme,
    b_frac: f64,
    c_frac: f64,
    d_frac: f64,
) -> Result<(usize, usize, usize)> {
    for (name, value) in [("b", b_frac), ("c", c_frac), ("d", d_frac)] {
        if !(value > 0.0 && value <= 1.0) {
            return Err(Error::Fraction { name, value });
        }
    }
    let round = |frac: f64, total: usize| ((frac * total as f64) + 0.5).floor() as usize;
    let m = scheme.n_features();
    let n = scheme.n_obs();
    let b = round(b_frac, m).clamp(1, m);
    let c = round(c_frac, m).clamp(1, b);
    let d = round(d_frac, n).clamp(1, n);
    Ok((b, c, d))
}
