//! Open-set evaluation: per-class accuracies, OS*, UNK, OS, HOS, AUROC and
//! the improved cross-entropy baseline.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::batch::{create_batch, create_batch_unbalanced, BatchOptions, ClassPool};
use crate::data::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::mlp::{ModelDims, ModelParams};
use crate::model::optim::{optimizer_step, OptimizerState};
use crate::sphere::{classify, PredictedLabel, PrototypeSet, ThresholdState};
use crate::train::{breakpoint_self_training, TrainConfig};

/// One evaluated target sample. `true_label` is `None` for samples of
/// unknown classes; the normality score is the distance to the nearest
/// prototype (higher = more likely unknown).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub true_label: Option<usize>,
    pub predicted: PredictedLabel,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    OpenSet,
    ClosedSet,
    Universal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: EvalMode,
    /// Per known class: (correct, total) over target samples of that class.
    pub class_counts: BTreeMap<usize, (usize, usize)>,
    pub unknown_total: usize,
    pub unknown_rejected: usize,
    pub per_class_accuracy: BTreeMap<usize, f64>,
    pub os_star: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unk: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub os: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hos: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auroc: Option<f64>,
}

/// Harmonic mean of known-class accuracy and unknown-rejection accuracy.
pub fn hos(os_star: f64, unk: f64) -> f64 {
    if os_star + unk == 0.0 {
        0.0
    } else {
        2.0 * os_star * unk / (os_star + unk)
    }
}

/// Average accuracy over all classes counting unknown as one extra class:
/// (|C_s| OS* + UNK) / (|C_s| + 1).
pub fn os_score(os_star: f64, unk: f64, num_known: usize) -> f64 {
    let c = num_known as f64;
    (c / (c + 1.0)) * os_star + (1.0 / (c + 1.0)) * unk
}

/// Area under the ROC curve with unknown as the positive class and the
/// normality score as detector, by the rank statistic with midranks for
/// ties.
pub fn auroc(records: &[PredictionRecord]) -> Result<f64> {
    let n_pos = records.iter().filter(|r| r.true_label.is_none()).count();
    let n_neg = records.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut indexed: Vec<(f64, bool)> = records
        .iter()
        .map(|r| (r.score, r.true_label.is_none()))
        .collect();
    indexed.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("scores must not be NaN"));

    // midranks over tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < indexed.len() {
        let mut j = i;
        while j < indexed.len() && indexed[j].0 == indexed[i].0 {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0; // average of ranks i+1..=j
        for k in i..j {
            if indexed[k].1 {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Recompute the final inference threshold and prototypes on a trained model
/// over all source data.
pub fn final_threshold(
    params: &ModelParams,
    sources: &[Dataset],
    cap: Option<usize>,
) -> Result<(ThresholdState, PrototypeSet)> {
    // alpha_m is irrelevant here: final inference uses the full alpha
    let (_, _, threshold, prototypes) =
        breakpoint_self_training(params, sources, &dummy_target(), 1.0, false, cap, 0)?;
    Ok((threshold, prototypes))
}

fn dummy_target() -> Dataset {
    Dataset { samples: vec![] }
}

/// Classify every target sample against the prototypes with the revealed
/// labels attached.
pub fn evaluate_target(
    params: &ModelParams,
    target: &Dataset,
    prototypes: &PrototypeSet,
    alpha: f64,
) -> Result<Vec<PredictionRecord>> {
    let mut records = Vec::with_capacity(target.len());
    for s in &target.samples {
        let z = params.forward(&s.features)?;
        let pred = classify(&z, prototypes, alpha)?;
        let true_y = s.label.reveal();
        let true_label = if prototypes.get(true_y).is_some() {
            Some(true_y)
        } else {
            None
        };
        records.push(PredictionRecord {
            true_label,
            predicted: pred.label,
            score: pred.min_distance,
        });
    }
    Ok(records)
}

/// Aggregate prediction records into a metrics report.
pub fn metrics_report(records: &[PredictionRecord], num_known: usize, mode: EvalMode) -> MetricsReport {
    let mut class_counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut unknown_total = 0;
    let mut unknown_rejected = 0;
    for r in records {
        match r.true_label {
            Some(y) => {
                let entry = class_counts.entry(y).or_insert((0, 0));
                entry.1 += 1;
                if r.predicted == PredictedLabel::Known(y) {
                    entry.0 += 1;
                }
            }
            None => {
                unknown_total += 1;
                if r.predicted == PredictedLabel::Unknown {
                    unknown_rejected += 1;
                }
            }
        }
    }
    let per_class_accuracy: BTreeMap<usize, f64> = class_counts
        .iter()
        .map(|(&y, &(c, t))| (y, c as f64 / t as f64))
        .collect();
    let os_star = if per_class_accuracy.is_empty() {
        0.0
    } else {
        per_class_accuracy.values().sum::<f64>() / per_class_accuracy.len() as f64
    };

    if mode == EvalMode::ClosedSet {
        return MetricsReport {
            mode,
            class_counts,
            unknown_total,
            unknown_rejected,
            per_class_accuracy,
            os_star,
            unk: None,
            os: None,
            hos: None,
            auroc: None,
        };
    }

    let unk = if unknown_total > 0 {
        unknown_rejected as f64 / unknown_total as f64
    } else {
        0.0
    };
    MetricsReport {
        mode,
        class_counts,
        unknown_total,
        unknown_rejected,
        per_class_accuracy,
        os_star,
        unk: Some(unk),
        os: Some(os_score(os_star, unk, num_known)),
        hos: Some(hos(os_star, unk)),
        auroc: auroc(records).ok(),
    }
}

/// Embedding dump row format:
/// `split,domain,true_label,pred_label,score,z0..z{d_z-1}`.
pub fn dump_embeddings(
    path: &Path,
    params: &ModelParams,
    sources: &[Dataset],
    target: &Dataset,
    prototypes: &PrototypeSet,
    alpha: f64,
) -> Result<()> {
    let d_z = params.d_z();
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "split,domain,true_label,pred_label,score")?;
    for i in 0..d_z {
        write!(out, ",z{i}")?;
    }
    writeln!(out)?;
    let mut write_rows = |split: &str, ds: &Dataset| -> Result<()> {
        for s in &ds.samples {
            let z = params.forward(&s.features)?;
            let pred = classify(&z, prototypes, alpha)?;
            let pred_label = match pred.label {
                PredictedLabel::Known(y) => y as i64,
                PredictedLabel::Unknown => -1,
            };
            write!(
                out,
                "{split},{},{},{pred_label},{}",
                s.domain_id,
                s.label.reveal(),
                pred.min_distance
            )?;
            for v in z.as_slice() {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    };
    for ds in sources {
        write_rows("source", ds)?;
    }
    write_rows("target", target)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Improved cross-entropy baseline
// ---------------------------------------------------------------------------

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Nearest-rank percentile of a sorted copy of `values`; p in [0, 1].
fn percentile(values: &[f64], p: f64) -> f64 {
    if p <= 0.0 || values.is_empty() {
        return f64::NEG_INFINITY;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Same encoder under cross-entropy with a linear classification head.
/// Rejection at eval uses max-softmax below the `reject_percentile` of the
/// source training distribution; self-training (when enabled) pseudo-labels
/// target samples whose max-softmax clears the cautious 95th source
/// percentile.
pub fn ce_baseline_train_eval(
    sources: &[Dataset],
    target: &Dataset,
    cfg: &TrainConfig,
    reject_percentile: f64,
    mode: EvalMode,
) -> Result<(MetricsReport, Vec<PredictionRecord>)> {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    cfg.validate()?;
    if target.is_empty() {
        return Err(Error::InvalidConfig("target dataset is empty".into()));
    }
    let d_x = sources
        .first()
        .and_then(|d| d.feature_dim())
        .ok_or(Error::EmptyInput)?;
    let known = sources
        .iter()
        .flat_map(|d| d.samples.iter())
        .filter_map(|s| s.label.known())
        .max()
        .map(|y| y + 1)
        .ok_or(Error::EmptyInput)?;

    // encoder dims from the config, linear head sized by the class count
    let dims = ModelDims {
        d_x,
        encoder: cfg.encoder_dims.clone(),
        head: vec![known],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(&dims, &mut rng);
    let mut optimizer = OptimizerState::new(cfg.optimizer, &params);

    let style_pool: Vec<&[f64]> = target.features().collect();
    let mut view_cfg = cfg.view.clone();
    if !cfg.style_transfer {
        view_cfg.style_prob = 0.0;
    }

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

    let max_softmax_over = |params: &ModelParams, ds: &Dataset| -> Result<Vec<f64>> {
        ds.samples
            .iter()
            .map(|s| {
                let cache = params.forward_linear_cached(&s.features)?;
                let probs = softmax(&cache.out);
                Ok(probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            })
            .collect()
    };

    let breakpoints = cfg.breakpoints();
    let mut pseudo: Vec<(usize, usize)> = Vec::new(); // (target index, label)
    for it in 0..cfg.total_iters {
        if cfg.self_training && breakpoints.binary_search(&it).is_ok() {
            // cautious self-training gate: 95th percentile of source
            // max-softmax
            let source_conf: Vec<f64> = sources
                .iter()
                .map(|ds| max_softmax_over(&params, ds))
                .collect::<Result<Vec<_>>>()?
                .concat();
            let gate = percentile(&source_conf, 0.95);
            pseudo.clear();
            for (i, s) in target.samples.iter().enumerate() {
                let cache = params.forward_linear_cached(&s.features)?;
                let probs = softmax(&cache.out);
                let (argmax, maxp) = probs
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (j, &p)| {
                        if p > acc.1 {
                            (j, p)
                        } else {
                            acc
                        }
                    });
                if maxp >= gate {
                    pseudo.push((i, argmax));
                }
            }
        }

        let mut pools: Vec<ClassPool> = source_pools.clone();
        if !pseudo.is_empty() {
            pools.push(ClassPool::from_labeled(
                sources.len(),
                pseudo
                    .iter()
                    .map(|&(i, y)| (target.samples[i].features.as_slice(), y)),
                false,
            ));
        }
        let opts = BatchOptions {
            view_cfg: &view_cfg,
            pseudo_view_cfg: None,
            style_pool: &style_pool,
            two_view_aug: cfg.two_view_aug,
        };
        let batch = if cfg.source_balance {
            create_batch(&pools, known, &opts, &mut rng)?
        } else {
            create_batch_unbalanced(&pools, known * pools.len(), &opts, &mut rng)?
        };

        let lr = cfg.schedule.lr_at(it)?;
        let mut grads = params.zeros_like();
        let mut loss = 0.0;
        for (x, &y) in batch.inputs.iter().zip(&batch.labels) {
            let cache = params.forward_linear_cached(x)?;
            let probs = softmax(&cache.out);
            loss += -probs[y].max(1e-300).ln();
            let mut d_logits = probs;
            d_logits[y] -= 1.0;
            params.backward_linear_into(x, &cache, &d_logits, &mut grads);
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { it, loss });
        }
        optimizer_step(&mut optimizer, &mut params, &grads, lr)?;
    }

    // rejection threshold from the source max-softmax distribution
    let source_conf: Vec<f64> = sources
        .iter()
        .map(|ds| max_softmax_over(&params, ds))
        .collect::<Result<Vec<_>>>()?
        .concat();
    let threshold = percentile(&source_conf, reject_percentile);

    let mut records = Vec::with_capacity(target.len());
    for s in &target.samples {
        let cache = params.forward_linear_cached(&s.features)?;
        let probs = softmax(&cache.out);
        let (argmax, maxp) = probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (j, &p)| {
                if p > acc.1 {
                    (j, p)
                } else {
                    acc
                }
            });
        let predicted = if maxp < threshold {
            PredictedLabel::Unknown
        } else {
            PredictedLabel::Known(argmax)
        };
        let true_y = s.label.reveal();
        records.push(PredictionRecord {
            true_label: if true_y < known { Some(true_y) } else { None },
            predicted,
            score: 1.0 - maxp,
        });
    }
    let report = metrics_report(&records, known, mode);
    Ok((report, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(true_label: Option<usize>, predicted: PredictedLabel, score: f64) -> PredictionRecord {
        PredictionRecord {
            true_label,
            predicted,
            score,
        }
    }

    #[test]
    fn hos_golden_value() {
        // percent scale, consistent in both arguments
        assert!((hos(43.2, 86.0) - 57.5).abs() < 0.05);
        assert_eq!(hos(0.7, 0.7), 0.7);
        assert_eq!(hos(0.5, 0.0), 0.0);
        assert_eq!(hos(0.0, 0.0), 0.0);
    }

    #[test]
    fn os_golden_value() {
        assert!((os_score(43.2, 86.0, 100) - 43.6).abs() < 0.05);
        assert_eq!(os_score(0.4, 0.4, 7), 0.4);
        assert!((os_score(1.0, 0.0, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn auroc_perfect_separation() {
        let records = vec![
            rec(Some(0), PredictedLabel::Known(0), 0.1),
            rec(Some(1), PredictedLabel::Known(1), 0.2),
            rec(None, PredictedLabel::Unknown, 0.8),
            rec(None, PredictedLabel::Unknown, 0.9),
        ];
        assert_eq!(auroc(&records).unwrap(), 1.0);
    }

    #[test]
    fn auroc_all_ties_is_half() {
        let records = vec![
            rec(Some(0), PredictedLabel::Known(0), 0.5),
            rec(None, PredictedLabel::Unknown, 0.5),
            rec(Some(1), PredictedLabel::Known(1), 0.5),
            rec(None, PredictedLabel::Unknown, 0.5),
        ];
        assert!((auroc(&records).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn auroc_single_class_errors() {
        let records = vec![rec(Some(0), PredictedLabel::Known(0), 0.5)];
        assert!(matches!(auroc(&records), Err(Error::SingleClass)));
    }

    #[test]
    fn report_recomputes_from_confusion_counts() {
        let records = vec![
            rec(Some(0), PredictedLabel::Known(0), 0.1),
            rec(Some(0), PredictedLabel::Unknown, 0.6),
            rec(Some(1), PredictedLabel::Known(1), 0.2),
            rec(None, PredictedLabel::Unknown, 0.9),
            rec(None, PredictedLabel::Known(0), 0.3),
        ];
        let report = metrics_report(&records, 2, EvalMode::OpenSet);
        let (c0, t0) = report.class_counts[&0];
        let (c1, t1) = report.class_counts[&1];
        let os_star = (c0 as f64 / t0 as f64 + c1 as f64 / t1 as f64) / 2.0;
        assert_eq!(report.os_star, os_star);
        assert_eq!(
            report.unk.unwrap(),
            report.unknown_rejected as f64 / report.unknown_total as f64
        );
        assert_eq!(report.hos.unwrap(), hos(os_star, report.unk.unwrap()));
    }

    #[test]
    fn closed_set_report_drops_open_set_fields() {
        let records = vec![
            rec(Some(0), PredictedLabel::Known(0), 0.1),
            rec(Some(1), PredictedLabel::Unknown, 0.8),
        ];
        let report = metrics_report(&records, 2, EvalMode::ClosedSet);
        assert!(report.unk.is_none());
        assert!(report.hos.is_none());
        // rejection counted as error
        assert_eq!(report.per_class_accuracy[&1], 0.0);
        let json = serde_json::to_string(&report).unwrap();
        assert!(!json.contains("\"hos\""));
    }

    #[test]
    fn percentile_zero_rejects_nothing() {
        assert_eq!(percentile(&[0.1, 0.5, 0.9], 0.0), f64::NEG_INFINITY);
        assert_eq!(percentile(&[0.1, 0.5, 0.9], 1.0), 0.9);
        // 5th percentile of a small sample is its minimum
        assert_eq!(percentile(&[0.3, 0.1, 0.9], 0.05), 0.1);
    }
}
