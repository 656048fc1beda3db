//! Group memberships: `pi = softmax(Phi h)`, relaxed one-hot assignments via
//! Gumbel-softmax, hard assignments and the concentration diagnostic.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::tape::softmax_in_place;
use crate::numerics::{Tape, Tensor, Var};
use crate::rng;

/// Group embedding matrix of one layer, `K x d` (rows are group vectors).
#[derive(Clone, Debug, PartialEq)]
pub struct GroupEmbeddings {
    pub layer: usize,
    pub phi: Tensor,
}

impl GroupEmbeddings {
    pub fn new(layer: usize, phi: Tensor) -> Result<Self> {
        if phi.rank() != 2 || phi.rows() == 0 {
            return Err(Error::dim("group embeddings", phi.shape(), &[]));
        }
        Ok(GroupEmbeddings { layer, phi })
    }

    pub fn group_count(&self) -> usize {
        self.phi.rows()
    }

    pub fn dim(&self) -> usize {
        self.phi.cols()
    }
}

/// Where Gumbel noise is added before the tempered softmax.
///
/// `Log` perturbs `log pi` (equivalently the logits `Phi h`, since softmax
/// ignores a per-row constant): the argmax is then distributed exactly as
/// `pi`. `Probability` perturbs `pi` itself, which concentrates far less at
/// low temperature because the entries of `pi` differ by at most 1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseSpace {
    #[default]
    Log,
    Probability,
}

/// Memberships of a set of nodes at one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct MembershipState {
    pub layer: usize,
    /// `n x K`, rows on the simplex.
    pub pi: Tensor,
    /// `n x K` relaxed one-hot rows.
    pub z: Tensor,
    pub tau: f64,
}

impl MembershipState {
    pub fn hard(&self) -> Vec<usize> {
        (0..self.z.rows()).map(|i| hard_assignment(self.z.row(i))).collect()
    }

    pub fn dominant(&self) -> Vec<usize> {
        (0..self.pi.rows()).map(|i| hard_assignment(self.pi.row(i))).collect()
    }
}

fn check_dims(phi: &Tensor, h: &Tensor) -> Result<()> {
    if phi.rank() != 2 || h.rank() != 2 || phi.cols() != h.cols() {
        return Err(Error::dim("membership_distribution", phi.shape(), h.shape()));
    }
    Ok(())
}

/// Membership logits `h Phi^T` (`n x K`).
pub fn membership_logits(phi: &Tensor, h: &Tensor) -> Result<Tensor> {
    check_dims(phi, h)?;
    let mut t = Tape::new();
    let (p, x) = (t.constant(phi.clone()), t.constant(h.clone()));
    let out = t.matmul_t(x, p)?;
    Ok(t.value(out).clone())
}

/// `pi_i = softmax(Phi h_i)` for every row of `h`.
///
/// This is the mean of `Dir(softmax(Phi h_i))`; the Dirichlet itself is only
/// sampled for analysis, see [`dirichlet_draw`].
pub fn membership_distribution(phi: &Tensor, h: &Tensor) -> Result<Tensor> {
    let mut logits = membership_logits(phi, h)?;
    let k = logits.cols();
    for row in logits.data_mut().chunks_mut(k) {
        softmax_in_place(row);
    }
    Ok(logits)
}

/// Differentiable logits and memberships on a tape: `(h Phi^T, softmax)`.
pub fn membership_on_tape(t: &mut Tape, phi: Var, h: Var) -> Result<(Var, Var)> {
    check_dims(t.value(phi), t.value(h))?;
    let logits = t.matmul_t(h, phi)?;
    let pi = t.softmax_rows(logits)?;
    Ok((logits, pi))
}

/// One standard Gumbel draw, with the uniform kept strictly inside (0, 1).
pub fn gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    -(-u.ln()).ln()
}

/// Gumbel noise for a batch: row `r` is drawn from a stream keyed by
/// `(seed, layer, nodes[r])`, so a node's noise is independent of which
/// other nodes share its batch.
pub fn gumbel_matrix(seed: u64, layer: usize, nodes: &[usize], k: usize) -> Tensor {
    let mut data = Vec::with_capacity(nodes.len() * k);
    for &node in nodes {
        let mut r = rng::derived(seed, &[rng::tag::GUMBEL, layer as u64, node as u64]);
        data.extend((0..k).map(|_| gumbel(&mut r)));
    }
    Tensor::new(vec![nodes.len(), k], data).expect("gumbel draws are finite")
}

/// Tempered softmax of a perturbed row with explicit noise (a test hook when
/// the noise is zero).
pub fn gumbel_softmax_with_noise(pi: &[f64], noise: &[f64], tau: f64, space: NoiseSpace) -> Vec<f64> {
    let mut z: Vec<f64> = pi
        .iter()
        .zip(noise)
        .map(|(&p, &g)| {
            let base = match space {
                NoiseSpace::Log => p.max(f64::MIN_POSITIVE).ln(),
                NoiseSpace::Probability => p,
            };
            (base + g) / tau
        })
        .collect();
    softmax_in_place(&mut z);
    z
}

/// Relaxed one-hot sample from `pi` at temperature `tau`.
pub fn gumbel_softmax_sample(pi: &[f64], tau: f64, seed: u64, space: NoiseSpace) -> Result<Vec<f64>> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::Config(format!("temperature {tau} must be positive")));
    }
    let mut r = rng::stream(seed);
    let noise: Vec<f64> = (0..pi.len()).map(|_| gumbel(&mut r)).collect();
    Ok(gumbel_softmax_with_noise(pi, &noise, tau, space))
}

/// Relaxed assignments on a tape. `logits` and `pi` come from
/// [`membership_on_tape`]; `noise` is `n x K` (zeros for noise-free inference).
pub fn relaxed_assignment(
    t: &mut Tape,
    logits: Var,
    pi: Var,
    noise: &Tensor,
    tau: f64,
    space: NoiseSpace,
) -> Result<Var> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::Config(format!("temperature {tau} must be positive")));
    }
    let base = match space {
        NoiseSpace::Log => logits,
        NoiseSpace::Probability => pi,
    };
    let g = t.constant(noise.clone());
    let perturbed = t.add(base, g)?;
    let tempered = t.scale(perturbed, 1.0 / tau)?;
    t.softmax_rows(tempered)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn hard_assignment(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// One-hot rows of the hard assignments of `z`.
pub fn one_hot_rows(z: &Tensor) -> Tensor {
    let k = z.cols();
    let mut out = Tensor::zeros(z.shape());
    for i in 0..z.rows() {
        let j = hard_assignment(z.row(i));
        out.data_mut()[i * k + j] = 1.0;
    }
    out
}

/// Population variance of the entries of `pi`.
pub fn concentration(pi: &[f64]) -> f64 {
    if pi.is_empty() {
        return 0.0;
    }
    let n = pi.len() as f64;
    let mean = pi.iter().sum::<f64>() / n;
    pi.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n
}

/// Draw from `Dir(alpha)` through normalized Gamma variates. Used for
/// analysis exports only; nothing is differentiated through it.
pub fn dirichlet_draw<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let mut draws = Vec::with_capacity(alpha.len());
    for &a in alpha {
        let gamma = Gamma::new(a, 1.0).map_err(|e| Error::Numeric(format!("Dirichlet parameter {a}: {e}")))?;
        draws.push(gamma.sample(rng));
    }
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        Ok(draws.into_iter().map(|x| x / total).collect())
    } else {
        // Every variate underflowed; the draw is a vertex of the simplex.
        let mut out = vec![0.0; alpha.len()];
        out[hard_assignment(alpha)] = 1.0;
        Ok(out)
    }
}
