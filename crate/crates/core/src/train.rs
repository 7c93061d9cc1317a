//! End-to-end training loop: source-only warm phase with target-style
//! augmentation, periodic self-training break-points with threshold-gated
//! pseudo-labeling, and bit-exact checkpointing.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::batch::{create_batch, create_batch_unbalanced, BatchOptions, ClassPool};
use crate::data::dataset::Dataset;
use crate::data::transform::ViewTransformConfig;
use crate::error::{Error, Result};
use crate::model::loss::supclr_backward;
use crate::model::mlp::{ModelDims, ModelParams};
use crate::model::optim::{optimizer_step, OptimizerConfig, OptimizerState};
use crate::model::schedule::ScheduleConfig;
use crate::sphere::{
    class_compactness, class_sparsity, classify, compute_prototypes, PrototypeSet, ThresholdState,
    UnitVector,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub total_iters: usize,
    pub source_only_iters: usize,
    pub breakpoint_period: usize,
    pub alpha_m: f64,
    pub tau: f64,
    pub schedule: ScheduleConfig,
    pub optimizer: OptimizerConfig,
    pub view: ViewTransformConfig,
    /// Encoder hidden/output dims; input dim comes from the data.
    pub encoder_dims: Vec<usize>,
    /// Head dims; the last entry is the embedding dimension d_z.
    pub head_dims: Vec<usize>,
    pub seed: u64,
    pub log_every: usize,
    // toggles
    pub self_training: bool,
    pub style_transfer: bool,
    pub source_balance: bool,
    pub two_view_aug: bool,
    /// Restrict the style pool to target samples of known classes (label
    /// oracle ablation).
    pub oracle_style_pool: bool,
    /// Apply the full view transform to pseudo-labeled target samples.
    pub augment_pseudo: bool,
    /// Cap on source samples per class embedded at break-points.
    pub max_samples_per_class: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            total_iters: 4000,
            source_only_iters: 2000,
            breakpoint_period: 500,
            alpha_m: 0.5,
            tau: 0.07,
            schedule: ScheduleConfig::default(),
            optimizer: OptimizerConfig::default(),
            view: ViewTransformConfig::default(),
            encoder_dims: vec![64, 32],
            head_dims: vec![32, 16],
            seed: 0,
            log_every: 100,
            self_training: true,
            style_transfer: true,
            source_balance: true,
            two_view_aug: false,
            oracle_style_pool: false,
            augment_pseudo: true,
            max_samples_per_class: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.source_only_iters > self.total_iters {
            return Err(Error::InvalidConfig(
                "source_only_iters must not exceed total_iters".into(),
            ));
        }
        if self.breakpoint_period == 0 {
            return Err(Error::InvalidConfig("breakpoint_period must be > 0".into()));
        }
        if !(self.alpha_m > 0.0 && self.alpha_m <= 1.0) {
            return Err(Error::InvalidConfig("alpha_m must be in (0, 1]".into()));
        }
        if self.tau <= 0.0 {
            return Err(Error::InvalidConfig("tau must be positive".into()));
        }
        if self.schedule.total_iters < self.total_iters {
            return Err(Error::InvalidConfig(
                "schedule.total_iters must cover total_iters".into(),
            ));
        }
        self.schedule.validate()?;
        Ok(())
    }

    /// Break-point iterations: source_only, source_only + period, ... while
    /// they land at or before total_iters. None when the warm phase covers
    /// the whole run.
    pub fn breakpoints(&self) -> Vec<usize> {
        if self.source_only_iters >= self.total_iters {
            return Vec::new();
        }
        (self.source_only_iters..=self.total_iters)
            .step_by(self.breakpoint_period)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoEntry {
    pub target_index: usize,
    pub label: usize,
    pub distance: f64,
}

/// Pseudo-labeled target samples, rebuilt from scratch at every break-point.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PseudoLabelSet {
    pub entries: Vec<PseudoEntry>,
    pub created_at_iteration: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BreakpointRecord {
    pub iter: usize,
    pub theta: f64,
    pub phi: f64,
    pub alpha: f64,
    pub alpha_c: f64,
    pub pseudo_count: usize,
    pub pseudo_per_class: BTreeMap<usize, usize>,
    /// Largest prototype distance among the selected pseudo-labels; `None`
    /// when nothing was selected. Always below alpha_c by construction.
    pub pseudo_max_distance: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Step { iter: usize, loss: f64, lr: f64 },
    Breakpoint(BreakpointRecord),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainerState {
    pub params: ModelParams,
    pub optimizer: OptimizerState,
    pub pseudo: PseudoLabelSet,
    pub threshold_history: Vec<BreakpointRecord>,
    pub iteration: usize,
    pub rng: ChaCha8Rng,
}

pub struct TrainOutcome {
    pub state: TrainerState,
    pub log: Vec<LogRecord>,
}

/// Embed every source sample with no augmentation, up to the per-class cap.
fn embed_sources(
    params: &ModelParams,
    sources: &[Dataset],
    cap: Option<usize>,
) -> Result<Vec<(UnitVector, usize)>> {
    let mut out = Vec::new();
    let mut per_class: BTreeMap<usize, usize> = BTreeMap::new();
    for ds in sources {
        for s in &ds.samples {
            let y = match s.label.known() {
                Some(y) => y,
                None => continue,
            };
            if let Some(cap) = cap {
                let seen = per_class.entry(y).or_insert(0);
                if *seen >= cap {
                    continue;
                }
                *seen += 1;
            }
            let z = params
                .forward(&s.features)
                .map_err(|e| Error::DegenerateEmbedding(e.to_string()))?;
            out.push((z, y));
        }
    }
    Ok(out)
}

/// One self-training break-point: clean source pass, prototypes, threshold,
/// then a fresh pseudo-label set gated by alpha_c.
pub fn breakpoint_self_training(
    params: &ModelParams,
    sources: &[Dataset],
    target: &Dataset,
    alpha_m: f64,
    select_pseudo: bool,
    cap: Option<usize>,
    iter: usize,
) -> Result<(PseudoLabelSet, BreakpointRecord, ThresholdState, PrototypeSet)> {
    let embeddings = embed_sources(params, sources, cap)?;
    let prototypes =
        compute_prototypes(&embeddings).map_err(|e| Error::DegenerateEmbedding(e.to_string()))?;
    let theta =
        class_sparsity(&prototypes).map_err(|e| Error::DegenerateEmbedding(e.to_string()))?;
    let phi = class_compactness(&embeddings, &prototypes)
        .map_err(|e| Error::DegenerateEmbedding(e.to_string()))?;
    let threshold = ThresholdState::new(theta, phi, alpha_m);

    let mut pseudo = PseudoLabelSet {
        entries: Vec::new(),
        created_at_iteration: iter,
    };
    if select_pseudo {
        for (i, s) in target.samples.iter().enumerate() {
            let z = params
                .forward(&s.features)
                .map_err(|e| Error::DegenerateEmbedding(e.to_string()))?;
            let pred = classify(&z, &prototypes, threshold.alpha_c)?;
            if pred.min_distance < threshold.alpha_c {
                pseudo.entries.push(PseudoEntry {
                    target_index: i,
                    label: pred.nearest_class,
                    distance: pred.min_distance,
                });
            }
        }
    }

    let mut per_class: BTreeMap<usize, usize> = BTreeMap::new();
    for e in &pseudo.entries {
        *per_class.entry(e.label).or_insert(0) += 1;
    }
    let record = BreakpointRecord {
        iter,
        theta,
        phi,
        alpha: threshold.alpha,
        alpha_c: threshold.alpha_c,
        pseudo_count: pseudo.entries.len(),
        pseudo_per_class: per_class,
        pseudo_max_distance: pseudo
            .entries
            .iter()
            .map(|e| e.distance)
            .fold(None, |acc: Option<f64>, d| {
                Some(acc.map_or(d, |a| a.max(d)))
            }),
    };
    Ok((pseudo, record, threshold, prototypes))
}

fn known_class_count(sources: &[Dataset]) -> usize {
    sources
        .iter()
        .flat_map(|d| d.samples.iter())
        .filter_map(|s| s.label.known())
        .max()
        .map(|y| y + 1)
        .unwrap_or(0)
}

/// Fresh trainer state for a run.
pub fn init_trainer(sources: &[Dataset], cfg: &TrainConfig) -> Result<TrainerState> {
    cfg.validate()?;
    let d_x = sources
        .first()
        .and_then(|d| d.feature_dim())
        .ok_or(Error::EmptyInput)?;
    let dims = ModelDims {
        d_x,
        encoder: cfg.encoder_dims.clone(),
        head: cfg.head_dims.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = ModelParams::init(&dims, &mut rng);
    let optimizer = OptimizerState::new(cfg.optimizer, &params);
    Ok(TrainerState {
        params,
        optimizer,
        pseudo: PseudoLabelSet::default(),
        threshold_history: Vec::new(),
        iteration: 0,
        rng,
    })
}

/// Run (or resume) training until `cfg.total_iters`.
pub fn resume_training(
    mut state: TrainerState,
    sources: &[Dataset],
    target: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if target.is_empty() {
        return Err(Error::InvalidConfig("target dataset is empty".into()));
    }
    let known = known_class_count(sources);
    if known == 0 {
        return Err(Error::InvalidConfig("sources carry no labels".into()));
    }

    // style pool: whole target by default, known-class subset for the oracle
    // ablation (the one training-side path allowed to reveal labels)
    let style_pool: Vec<&[f64]> = if cfg.oracle_style_pool {
        target
            .samples
            .iter()
            .filter(|s| s.label.reveal() < known)
            .map(|s| s.features.as_slice())
            .collect()
    } else {
        target.features().collect()
    };
    if style_pool.is_empty() {
        return Err(Error::EmptyStylePool);
    }

    let mut view_cfg = cfg.view.clone();
    if !cfg.style_transfer {
        view_cfg.style_prob = 0.0;
    }
    let identity_view = ViewTransformConfig {
        style_prob: 0.0,
        jitter_prob: 0.0,
        collapse_prob: 0.0,
        keep_ratio_range: (1.0, 1.0),
        jitter_scale: 0.0,
    };

    let source_pools: Vec<ClassPool> = sources
        .iter()
        .enumerate()
        .map(|(i, ds)| {
            ClassPool::from_labeled(
                i,
                ds.samples
                    .iter()
                    .filter_map(|s| s.label.known().map(|y| (s.features.as_slice(), y))),
                true,
            )
        })
        .collect();

    let breakpoints = cfg.breakpoints();
    let is_breakpoint = |it: usize| breakpoints.binary_search(&it).is_ok();

    let mut log = Vec::new();
    while state.iteration < cfg.total_iters {
        let it = state.iteration;
        if it >= cfg.source_only_iters && is_breakpoint(it) {
            let (pseudo, record, _, _) = breakpoint_self_training(
                &state.params,
                sources,
                target,
                cfg.alpha_m,
                cfg.self_training,
                cfg.max_samples_per_class,
                it,
            )?;
            state.pseudo = pseudo;
            state.threshold_history.push(record.clone());
            log.push(LogRecord::Breakpoint(record));
        }

        // pools for this step: sources, plus the pseudo-labeled target as an
        // extra domain once it is non-empty
        let mut pools: Vec<ClassPool> = source_pools.clone();
        if !state.pseudo.entries.is_empty() {
            pools.push(ClassPool::from_labeled(
                sources.len(),
                state
                    .pseudo
                    .entries
                    .iter()
                    .map(|e| (target.samples[e.target_index].features.as_slice(), e.label)),
                false,
            ));
        }

        let opts = BatchOptions {
            view_cfg: &view_cfg,
            pseudo_view_cfg: if cfg.augment_pseudo {
                None
            } else {
                Some(&identity_view)
            },
            style_pool: &style_pool,
            two_view_aug: cfg.two_view_aug,
        };
        let batch = if cfg.source_balance {
            create_batch(&pools, known, &opts, &mut state.rng)?
        } else {
            create_batch_unbalanced(&pools, known * pools.len(), &opts, &mut state.rng)?
        };

        let lr = cfg.schedule.lr_at(it)?;
        let (loss, grads) = supclr_backward(&state.params, &batch, cfg.tau)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { it, loss });
        }
        optimizer_step(&mut state.optimizer, &mut state.params, &grads, lr)?;
        state.iteration += 1;

        if cfg.log_every > 0 && (it % cfg.log_every == 0 || state.iteration == cfg.total_iters) {
            log.push(LogRecord::Step { iter: it, loss, lr });
        }
    }

    // closing break-point, when the cadence lands exactly on total_iters
    if is_breakpoint(cfg.total_iters)
        && state
            .threshold_history
            .last()
            .map(|r| r.iter != cfg.total_iters)
            .unwrap_or(true)
    {
        let (pseudo, record, _, _) = breakpoint_self_training(
            &state.params,
            sources,
            target,
            cfg.alpha_m,
            cfg.self_training,
            cfg.max_samples_per_class,
            cfg.total_iters,
        )?;
        state.pseudo = pseudo;
        state.threshold_history.push(record.clone());
        log.push(LogRecord::Breakpoint(record));
    }

    Ok(TrainOutcome { state, log })
}

/// Train from scratch.
pub fn run_training(
    sources: &[Dataset],
    target: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let state = init_trainer(sources, cfg)?;
    resume_training(state, sources, target, cfg)
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    state: TrainerState,
}

pub fn save_checkpoint(state: &TrainerState, path: &Path) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    serde_json::to_writer(
        file,
        &Checkpoint {
            version: CHECKPOINT_VERSION,
            state: state.clone(),
        },
    )?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainerState> {
    let file = BufReader::new(File::open(path)?);
    let ckpt: Checkpoint = serde_json::from_reader(file)?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            expected: CHECKPOINT_VERSION,
            found: ckpt.version,
        });
    }
    Ok(ckpt.state)
}
