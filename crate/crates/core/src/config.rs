use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::membership::NoiseSpace;
use crate::objective::{ContextForm, ContextMode};

/// Every training hyperparameter. Deserialization rejects unknown keys and
/// fills missing ones with the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of aggregation layers `L`.
    pub layers: usize,
    /// Groups per layer, strictly decreasing.
    pub groups: Vec<usize>,
    /// Output dimension of each layer; the input dimension comes from the data.
    pub dims: Vec<usize>,
    pub heads: usize,
    pub tau: f64,
    /// Linear anneal of the temperature from 1.0 to 0.1 over the epochs.
    pub tau_anneal: bool,
    /// Add Gumbel noise to `pi` itself rather than to `log pi`.
    pub gumbel_on_probabilities: bool,
    pub hard_lookup: bool,
    /// Append each target to its own neighbor sample.
    pub self_loops: bool,
    pub gamma: f64,
    pub beta: f64,
    pub fanouts: Vec<usize>,
    pub walks_per_node: usize,
    pub walk_length: usize,
    /// Largest co-occurrence window; layer `l` uses `min(l, window)`.
    pub window: usize,
    pub negative_ratio: usize,
    /// Positive pairs drawn per target per layer in each batch.
    pub positives_per_target: usize,
    pub must_links: usize,
    pub cannot_links: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub disable_lambda: bool,
    pub membership_agnostic_q: bool,
    /// Storage of the membership-based context vectors.
    pub context_form: ContextForm,
    pub disable_reg: bool,
    pub classification: bool,
    pub classification_weight: f64,
    /// Optimize the unsupervised objective for `epochs`, then add the
    /// classification loss for `finetune_epochs`.
    pub two_phase: bool,
    pub finetune_epochs: usize,
    pub regenerate_walks: bool,
    /// Write zero wall-clock times so metrics logs are byte-reproducible.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            layers: 2,
            groups: vec![12, 5],
            dims: vec![64, 64],
            heads: 4,
            tau: 0.5,
            tau_anneal: false,
            gumbel_on_probabilities: false,
            hard_lookup: false,
            self_loops: true,
            gamma: 1.0,
            beta: 0.1,
            fanouts: vec![25, 25],
            walks_per_node: 50,
            walk_length: 5,
            window: 2,
            negative_ratio: 1,
            positives_per_target: 10,
            must_links: 256,
            cannot_links: 256,
            lr: 0.005,
            weight_decay: 5e-4,
            epochs: 200,
            patience: 20,
            batch_size: 256,
            seed: 0,
            disable_lambda: false,
            membership_agnostic_q: false,
            context_form: ContextForm::Additive,
            disable_reg: false,
            classification: true,
            classification_weight: 1.0,
            two_phase: false,
            finetune_epochs: 50,
            regenerate_walks: false,
            deterministic: false,
        }
    }
}

/// The three single-component ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    MinusLambda,
    MinusQ,
    MinusReg,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::MinusLambda, Ablation::MinusQ, Ablation::MinusReg];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::MinusLambda => "minus_lambda",
            Ablation::MinusQ => "minus_Q",
            Ablation::MinusReg => "minus_reg",
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: TrainConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        let l = self.layers;
        if l == 0 {
            return fail("at least one layer is required".into());
        }
        for (name, len) in [("groups", self.groups.len()), ("dims", self.dims.len()), ("fanouts", self.fanouts.len())] {
            if len != l {
                return fail(format!("`{name}` has {len} entries for {l} layers"));
            }
        }
        if self.groups.contains(&0) || self.dims.contains(&0) || self.fanouts.contains(&0) {
            return fail("group counts, dims and fan-outs must be positive".into());
        }
        if self.groups.windows(2).any(|w| w[0] <= w[1]) {
            return fail(format!("group counts {:?} must strictly decrease", self.groups));
        }
        if self.heads == 0 {
            return fail("at least one head is required".into());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return fail(format!("temperature {} must be positive", self.tau));
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("beta", self.beta),
            ("weight_decay", self.weight_decay),
            ("classification_weight", self.classification_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("`{name}` = {v} must be a non-negative number"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("learning rate {} must be positive", self.lr));
        }
        if self.walk_length < 2 {
            return fail(format!("walk length {} < 2", self.walk_length));
        }
        for (name, v) in [
            ("walks_per_node", self.walks_per_node),
            ("window", self.window),
            ("negative_ratio", self.negative_ratio),
            ("positives_per_target", self.positives_per_target),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return fail(format!("`{name}` must be positive"));
            }
        }
        Ok(())
    }

    /// Temperature used during `epoch` (0-based).
    pub fn tau_at(&self, epoch: usize) -> f64 {
        if !self.tau_anneal {
            return self.tau;
        }
        let span = self.total_epochs().saturating_sub(1).max(1) as f64;
        let frac = (epoch as f64 / span).min(1.0);
        1.0 + (0.1 - 1.0) * frac
    }

    pub fn total_epochs(&self) -> usize {
        if self.two_phase {
            self.epochs + self.finetune_epochs
        } else {
            self.epochs
        }
    }

    pub fn noise_space(&self) -> NoiseSpace {
        if self.gumbel_on_probabilities {
            NoiseSpace::Probability
        } else {
            NoiseSpace::Log
        }
    }

    /// Window used for context pairs of layer `layer` (1-based).
    pub fn window_for(&self, layer: usize) -> usize {
        layer.min(self.window)
    }

    pub fn context_mode(&self) -> ContextMode {
        if self.membership_agnostic_q {
            ContextMode::Agnostic
        } else {
            ContextMode::Membership(self.context_form)
        }
    }

    pub fn with_ablation(&self, which: Ablation) -> TrainConfig {
        let mut c = self.clone();
        match which {
            Ablation::MinusLambda => c.disable_lambda = true,
            Ablation::MinusQ => c.membership_agnostic_q = true,
            Ablation::MinusReg => c.disable_reg = true,
        }
        c
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
