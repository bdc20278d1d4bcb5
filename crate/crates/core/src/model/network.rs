use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::AplConfig;
use super::layers::{
    cross_attention_prototypes, mixed_self_attention, normal_tensor, AttentionProj, Linear,
    SnnEncoder,
};
use crate::autodiff::{Bound, ParamId, ParamStore, Tape, Tensor, Var};
use crate::data::{CaseRecord, PathwayDefinition};
use crate::error::{AplError, Result};
use crate::survival::SurvivalOutput;

/// A learnable query bank and the projections that attend with it.
#[derive(Debug, Clone, Copy)]
pub struct PrototypeBranch {
    pub queries: ParamId,
    pub attn: AttentionProj,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub patch_proj: Linear,
    pub encoders: Vec<SnnEncoder>,
    pub hist: Option<PrototypeBranch>,
    pub gene: Option<PrototypeBranch>,
    pub fusion: Option<AttentionProj>,
    pub predictor: Linear,
}

/// Whether stochastic layers are active.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut dyn RngCore),
}

/// Handles into the tape after one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub logits: Var,
    /// `N_H × d_model` projected patches.
    pub x_h: Var,
    /// `N_G × d_model` pathway tokens.
    pub x_g: Var,
    pub hist_prototypes: Option<Var>,
    pub hist_attention: Option<Var>,
    pub gene_prototypes: Option<Var>,
    pub gene_attention: Option<Var>,
    pub fusion_attention: Option<Var>,
}

/// Detached result of [`AplModel::forward`].
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub survival: SurvivalOutput,
    /// `n_hist_queries × N_H`.
    pub hist_attention: Option<Tensor>,
    /// `n_gene_queries × N_G`.
    pub gene_attention: Option<Tensor>,
    pub fusion_attention: Option<Tensor>,
}

/// The multimodal prototype network.
///
/// Parameter shapes, with `d = d_model`, `h = snn_hidden`, `g_i` the gene
/// count of pathway `i` and `B = n_bins` (weights stored `in×out`):
///
/// | name                          | shape            | present when        |
/// |-------------------------------|------------------|---------------------|
/// | `patch_proj.weight` / `.bias` | `d_in×d` / `d`   | always              |
/// | `pathway.{i}.fc1.weight/bias` | `g_i×h` / `h`    | always              |
/// | `pathway.{i}.fc2.weight/bias` | `h×d` / `d`      | always              |
/// | `hist_queries`                | `n_hist×d`       | histology prototypes|
/// | `hist_attn.{q,k,v}.weight/bias` | `d×d` / `d`    | histology prototypes|
/// | `gene_queries`                | `n_gene×d`       | genomic prototypes  |
/// | `gene_attn.{q,k,v}.weight/bias` | `d×d` / `d`    | genomic prototypes  |
/// | `fusion_attn.{q,k,v}.weight/bias` | `d×d` / `d`  | self-attention      |
/// | `predictor.weight` / `.bias`  | `p×B` / `B`      | always              |
///
/// `p = d` with self-attention and `2d` without, so the total is
/// `d_in·d + d + Σ_i (g_i·h + h + h·d + d) + [n_hist·d + 3(d²+d)]
/// + [n_gene·d + 3(d²+d)] + [3(d²+d)] + p·B + B`.
#[derive(Debug, Clone)]
pub struct AplModel {
    pub config: AplConfig,
    pub pathways: Vec<PathwayDefinition>,
    pub params: ParamStore,
    pub(crate) layout: Layout,
}

/// Builds a model with weights drawn from `seed`, overriding `config.seed`.
pub fn init_model(config: &AplConfig, pathways: &[PathwayDefinition], seed: u64) -> Result<AplModel> {
    let config = AplConfig {
        seed,
        ..config.clone()
    };
    AplModel::new(config, pathways.to_vec())
}

impl AplModel {
    pub fn new(config: AplConfig, pathways: Vec<PathwayDefinition>) -> Result<Self> {
        config.validate()?;
        if pathways.is_empty() {
            return Err(AplError::Config("model needs at least one pathway".into()));
        }
        if let Some(p) = pathways.iter().find(|p| p.gene_ids.is_empty()) {
            return Err(AplError::Pathway {
                name: p.name.clone(),
                message: "pathway has no genes".into(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let rng: &mut dyn RngCore = &mut rng;
        let mut store = ParamStore::new();
        let d = config.d_model;

        let patch_proj = Linear::register(&mut store, "patch_proj", config.d_in, d, rng)?;
        let encoders = pathways
            .iter()
            .enumerate()
            .map(|(i, p)| {
                SnnEncoder::register(
                    &mut store,
                    &format!("pathway.{i}"),
                    p.gene_ids.len(),
                    config.snn_hidden,
                    d,
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let mut branch = |store: &mut ParamStore, prefix: &str, n_q: usize| -> Result<PrototypeBranch> {
            Ok(PrototypeBranch {
                queries: store.register(format!("{prefix}_queries"), normal_tensor(&[n_q, d], rng))?,
                attn: AttentionProj::register(store, &format!("{prefix}_attn"), d, rng)?,
            })
        };
        let ab = config.ablation;
        let hist = ab
            .use_hist_prototypes
            .then(|| branch(&mut store, "hist", config.n_hist_queries))
            .transpose()?;
        let gene = ab
            .use_gene_prototypes
            .then(|| branch(&mut store, "gene", config.n_gene_queries))
            .transpose()?;
        let fusion = ab
            .use_self_attention
            .then(|| AttentionProj::register(&mut store, "fusion_attn", d, rng))
            .transpose()?;
        let predictor = Linear::register(&mut store, "predictor", config.predictor_in(), config.n_bins, rng)?;

        Ok(AplModel {
            config,
            pathways,
            params: store,
            layout: Layout {
                patch_proj,
                encoders,
                hist,
                gene,
                fusion,
                predictor,
            },
        })
    }

    pub fn pathway_sizes(&self) -> Vec<usize> {
        self.pathways.iter().map(|p| p.gene_ids.len()).collect()
    }

    pub fn hist_branch(&self) -> Option<PrototypeBranch> {
        self.layout.hist
    }

    pub fn gene_branch(&self) -> Option<PrototypeBranch> {
        self.layout.gene
    }

    pub fn fusion_proj(&self) -> Option<AttentionProj> {
        self.layout.fusion
    }

    pub fn patch_projector(&self) -> Linear {
        self.layout.patch_proj
    }

    pub fn pathway_encoders(&self) -> &[SnnEncoder] {
        &self.layout.encoders
    }

    pub fn predictor(&self) -> Linear {
        self.layout.predictor
    }

    /// `X_H`: affine projection of every patch row.
    pub fn encode_patches(&self, tape: &mut Tape, bound: &Bound, patches: Var) -> Result<Var> {
        match tape.value(patches).dims2() {
            Some((n, d)) if n >= 1 && d == self.config.d_in => {}
            _ => {
                return Err(AplError::Data(format!(
                    "patch embeddings of shape {:?} do not match d_in = {}",
                    tape.shape(patches),
                    self.config.d_in
                )))
            }
        }
        self.layout.patch_proj.forward(tape, bound, patches)
    }

    /// `X_G`: one token per pathway, each from its own encoder.
    pub fn encode_pathways(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        inputs: &[Vec<f64>],
        mode: &mut Mode<'_>,
    ) -> Result<Var> {
        if inputs.len() != self.pathways.len() {
            return Err(AplError::Data(format!(
                "case has {} pathway inputs, model expects {}",
                inputs.len(),
                self.pathways.len()
            )));
        }
        let p = self.config.dropout;
        let mut tokens = Vec::with_capacity(inputs.len());
        for ((x, enc), def) in inputs.iter().zip(&self.layout.encoders).zip(&self.pathways) {
            if x.len() != def.gene_ids.len() {
                return Err(AplError::Pathway {
                    name: def.name.clone(),
                    message: format!("input has {} values, expected {}", x.len(), def.gene_ids.len()),
                });
            }
            let x = tape.constant(Tensor::matrix(1, x.len(), x.clone())?);
            let dropout = match mode {
                Mode::Train(rng) if p > 0.0 => Some((p, &mut **rng as &mut dyn RngCore)),
                _ => None,
            };
            tokens.push(enc.forward(tape, bound, x, dropout)?);
        }
        tape.concat_rows_many(&tokens)
    }

    /// Records the full network on `tape` for one case.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        case: &CaseRecord,
        mode: &mut Mode<'_>,
    ) -> Result<ForwardVars> {
        let patches = tape.constant(case.patch_embeddings.clone());
        let x_h = self.encode_patches(tape, bound, patches)?;
        let x_g = self.encode_pathways(tape, bound, &case.pathway_inputs, mode)?;

        let (mut h, mut hist_prototypes, mut hist_attention) = (x_h, None, None);
        if let Some(b) = &self.layout.hist {
            let (q, a) = cross_attention_prototypes(tape, bound, &b.attn, bound.var(b.queries), x_h)?;
            (h, hist_prototypes, hist_attention) = (q, Some(q), Some(a));
        }
        let (mut g, mut gene_prototypes, mut gene_attention) = (x_g, None, None);
        if let Some(b) = &self.layout.gene {
            let (q, a) = cross_attention_prototypes(tape, bound, &b.attn, bound.var(b.queries), x_g)?;
            (g, gene_prototypes, gene_attention) = (q, Some(q), Some(a));
        }

        let (pooled, fusion_attention) = match &self.layout.fusion {
            Some(proj) => {
                let m = tape.concat_rows(h, g)?;
                let (mut fused, attn) = mixed_self_attention(tape, bound, proj, m)?;
                if self.config.residual_fusion {
                    fused = tape.add(fused, m)?;
                }
                let pooled = tape.mean_rows(fused)?;
                (tape.reshape(pooled, &[1, self.config.d_model])?, Some(attn))
            }
            None => {
                let d = self.config.d_model;
                let ph = tape.mean_rows(h)?;
                let ph = tape.reshape(ph, &[1, d])?;
                let pg = tape.mean_rows(g)?;
                let pg = tape.reshape(pg, &[1, d])?;
                let both = tape.concat_rows(ph, pg)?;
                (tape.reshape(both, &[1, 2 * d])?, None)
            }
        };
        let logits = self.layout.predictor.forward(tape, bound, pooled)?;
        let logits = tape.reshape(logits, &[self.config.n_bins])?;
        Ok(ForwardVars {
            logits,
            x_h,
            x_g,
            hist_prototypes,
            hist_attention,
            gene_prototypes,
            gene_attention,
            fusion_attention,
        })
    }

    /// Runs one case on a private tape and detaches the results.
    pub fn forward(&self, case: &CaseRecord, mut mode: Mode<'_>) -> Result<ForwardOutput> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let vars = self.forward_on_tape(&mut tape, &bound, case, &mut mode)?;
        let take = |v: Option<Var>| v.map(|v| tape.value(v).clone());
        Ok(ForwardOutput {
            survival: SurvivalOutput::from_logits(tape.value(vars.logits).data().to_vec()),
            hist_attention: take(vars.hist_attention),
            gene_attention: take(vars.gene_attention),
            fusion_attention: take(vars.fusion_attention),
        })
    }

    /// Eval-mode risk score for each case.
    pub fn predict_risks(&self, cases: &[CaseRecord]) -> Result<Vec<f64>> {
        cases
            .iter()
            .map(|c| Ok(self.forward(c, Mode::Eval)?.survival.risk))
            .collect()
    }
}
