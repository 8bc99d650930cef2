//! Staged schedule: recommendation, imitation pretraining, generation, then
//! joint training. Each stage reads its predecessor's checkpoint from the run
//! directory and writes its own, so `all` equals the four stages run one by one.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::bridge::JointBridge;
use super::config::{Stage, TrainConfig};
use super::data::DataSet;
use super::evaluate::evaluate;
use super::models::{beams, build_vocab, generation_paths, training_inputs, Models, TurnSet};
use crate::converse::{
    self, path_posterior, semantic_encoding, ConverseModel, ConverseTrainConfig, LossBreakdown,
    Objective,
};
use crate::error::{DicrError, Result};
use crate::eval::MetricsReport;
use crate::kg::{train_embeddings, EmbeddingTable};
use crate::nn::Adam;
use crate::reasoner::{self, curves_csv, greedy_recall1, PolicyNetworks};

pub const CONFIG_FILE: &str = "config.txt";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const REPORT_FILE: &str = "report.txt";

pub fn checkpoint_path(run_dir: &Path, stage: Stage) -> PathBuf {
    run_dir.join("checkpoints").join(format!("{stage}.ckpt"))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| DicrError::path(path, e))
}

fn loss_csv(rows: &[(usize, LossBreakdown)]) -> String {
    let mut out = String::from("epoch,kl,bow,bce,nll,total\n");
    for (e, l) in rows {
        out.push_str(&format!(
            "{e},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            l.kl, l.bow, l.bce, l.nll, l.total
        ));
    }
    out
}

/// Per-epoch statistics of the joint stage.
#[derive(Debug, Clone, PartialEq)]
pub struct JointEpoch {
    pub epoch: usize,
    pub reward: f64,
    pub terminal: f64,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSummary {
    pub hit_before: Option<f64>,
    pub hit_after: Option<f64>,
    pub epochs: Vec<JointEpoch>,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub data: DataSet,
    pub run_dir: PathBuf,
    /// Checked between epochs; when set the stage saves and stops.
    pub interrupt: Option<Arc<AtomicBool>>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, data: DataSet, run_dir: &Path) -> Result<Self> {
        cfg.validate()?;
        for d in [
            run_dir.to_path_buf(),
            run_dir.join("checkpoints"),
            run_dir.join("logs"),
        ] {
            std::fs::create_dir_all(&d).map_err(|e| DicrError::path(&d, e))?;
        }
        Ok(Trainer {
            cfg,
            data,
            run_dir: run_dir.to_path_buf(),
            interrupt: None,
        })
    }

    pub fn checkpoint(&self, stage: Stage) -> PathBuf {
        checkpoint_path(&self.run_dir, stage)
    }

    fn log_path(&self, name: &str) -> PathBuf {
        self.run_dir.join("logs").join(format!("{name}.csv"))
    }

    fn check_interrupt(&self, stage: Stage) -> Result<()> {
        match &self.interrupt {
            Some(flag) if flag.load(Ordering::SeqCst) => {
                Err(DicrError::Interrupted(stage.to_string()))
            }
            _ => Ok(()),
        }
    }

    /// Saves `models` as the partial checkpoint of `stage`, then honours an
    /// interrupt request.
    fn epoch_end(&self, stage: Stage, models: &Models) -> Result<()> {
        if self.interrupt.is_some() {
            models.save(stage, &self.checkpoint(stage).with_extension("partial"))?;
        }
        self.check_interrupt(stage)
    }

    /// Runs `stage` (or the whole schedule) and returns the checkpoints written.
    pub fn run(&self, stage: Stage) -> Result<Vec<PathBuf>> {
        self.cfg.save(&self.run_dir.join(CONFIG_FILE))?;
        let stages: Vec<Stage> = if stage == Stage::All {
            Stage::SEQUENCE.to_vec()
        } else {
            vec![stage]
        };
        let mut out = Vec::new();
        for s in stages {
            log::info!("stage {s}");
            match s {
                Stage::Rec => self.stage_rec()?,
                Stage::Imitation => self.stage_converse(Stage::Imitation)?,
                Stage::Gen => self.stage_converse(Stage::Gen)?,
                Stage::Joint => {
                    self.stage_joint()?;
                }
                Stage::All => unreachable!("expanded above"),
            }
            out.push(self.checkpoint(s));
        }
        Ok(out)
    }

    /// Loads the prerequisite checkpoint of `stage`.
    fn require(&self, stage: Stage) -> Result<Models> {
        let prev = stage.prerequisite().expect("stage has a prerequisite");
        let path = self.checkpoint(prev);
        if !path.is_file() {
            return Err(DicrError::Ordering {
                stage: stage.to_string(),
                missing: prev.to_string(),
            });
        }
        let mut models = Models::load(&path)?;
        // Optimisation settings come from the current run; shapes from the checkpoint.
        let shapes = models.cfg.clone();
        models.cfg = self.cfg.clone();
        if models.cfg.policy() != shapes.policy() || models.cfg.converse() != shapes.converse() {
            return Err(DicrError::Checkpoint(format!(
                "`{prev}` checkpoint was trained with different model dimensions"
            )));
        }
        Ok(models)
    }

    pub fn train_embeddings(&self) -> Result<EmbeddingTable> {
        let trained = train_embeddings(&self.data.kg, &self.cfg.transe())?;
        let mut csv = String::from("epoch,loss\n");
        for (i, l) in trained.epoch_losses.iter().enumerate() {
            csv.push_str(&format!("{},{l:.6}\n", i + 1));
        }
        write(&self.log_path("embeddings"), &csv)?;
        trained.table.save(&self.run_dir.join(EMBEDDINGS_FILE))?;
        Ok(trained.table)
    }

    fn embeddings(&self) -> Result<EmbeddingTable> {
        let path = self.run_dir.join(EMBEDDINGS_FILE);
        if path.is_file() {
            let emb = EmbeddingTable::load(&path)?;
            if emb.dim == self.cfg.embed_dim && emb.entities.rows == self.data.kg.num_entities() {
                return Ok(emb);
            }
            log::warn!(
                "{} does not match the graph or embed_dim; retraining",
                path.display()
            );
        }
        self.train_embeddings()
    }

    fn stage_rec(&self) -> Result<()> {
        let emb = self.embeddings()?;
        let train = TurnSet::build(&self.data, &self.cfg, &emb, "train", true)?;
        let valid = TurnSet::build(&self.data, &self.cfg, &emb, "valid", false)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let mut models = Models {
            cfg: self.cfg.clone(),
            policy: PolicyNetworks::new(self.cfg.policy(), &emb, &mut rng)?,
            emb,
            converse: None,
        };
        let mut nets = models.policy.clone();
        let stats = reasoner::train_rec(
            &mut nets,
            &self.data.kg,
            &models.emb,
            &train.rec,
            &valid.rec,
            &self.cfg.rec(),
            |_, n| {
                if self.interrupt.is_some() {
                    let snapshot = Models {
                        policy: n.clone(),
                        ..models.clone()
                    };
                    self.epoch_end(Stage::Rec, &snapshot)?;
                }
                Ok(())
            },
        )?;
        models.policy = nets;
        write(&self.log_path("rec"), &curves_csv(&stats))?;
        models.save(Stage::Rec, &self.checkpoint(Stage::Rec))
    }

    fn converse_cfg(&self, epochs: usize) -> ConverseTrainConfig {
        ConverseTrainConfig {
            epochs,
            batch_size: self.cfg.batch_size,
            lr: self.cfg.converse_lr,
            clip_norm: self.cfg.clip_norm,
            seed: self.cfg.seed,
        }
    }

    /// Imitation pretraining (fresh model) or generation training.
    fn stage_converse(&self, stage: Stage) -> Result<()> {
        let mut models = self.require(stage)?;
        if stage == Stage::Imitation {
            let vocab = build_vocab(&self.data, &self.cfg)?;
            vocab.save(&self.run_dir.join(VOCAB_FILE))?;
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed.wrapping_add(1));
            let model = ConverseModel::new(self.cfg.converse(), vocab.len(), &mut rng)?;
            models.converse = Some((model, vocab));
        }
        let turns = TurnSet::build(&self.data, &self.cfg, &models.emb, "train", true)?;
        let all = beams(&models.env(&self.data.kg), &turns.rec, self.cfg.beam_width)?;
        let paths: Vec<_> = all
            .iter()
            .map(|b| generation_paths(b, self.cfg.n_paths))
            .collect();
        let (objective, epochs) = match stage {
            Stage::Imitation => (Objective::Imitation, self.cfg.imitation_epochs),
            _ => (Objective::Generation, self.cfg.gen_epochs),
        };
        let (mut model, vocab) = models.converse.take().ok_or_else(|| DicrError::Ordering {
            stage: stage.to_string(),
            missing: Stage::Imitation.to_string(),
        })?;
        let inputs = training_inputs(&self.data, &self.cfg, &vocab, &turns, &paths);
        let mut rows = Vec::new();
        converse::train_converse(
            &mut model,
            &inputs,
            objective,
            &self.converse_cfg(epochs),
            |e, l, m| {
                rows.push((e + 1, *l));
                if self.interrupt.is_some() {
                    let snapshot = Models {
                        converse: Some((m.clone(), vocab.clone())),
                        ..models.clone()
                    };
                    self.epoch_end(stage, &snapshot)?;
                }
                Ok(())
            },
        )?;
        write(&self.log_path(stage.as_str()), &loss_csv(&rows))?;
        models.converse = Some((model, vocab));
        models.save(stage, &self.checkpoint(stage))
    }

    /// Alternates bridged reasoner epochs and generation epochs, refreshing
    /// beams and posteriors at the start of every epoch.
    pub fn stage_joint(&self) -> Result<JointSummary> {
        let mut models = self.require(Stage::Joint)?;
        let hash_before = self.data.content_hash();
        let turns = TurnSet::build(&self.data, &self.cfg, &models.emb, "train", true)?;
        let hit_before = evaluate(&models, &self.data, "valid", self.cfg.n_paths)?.hit;
        let rec_cfg = self.cfg.rec();
        let conv_cfg = self.converse_cfg(self.cfg.joint_epochs);
        let mut rec_opt = Adam::new(&models.policy.store, rec_cfg.lr).with_clip(rec_cfg.clip_norm);
        let mut conv_opt = {
            let (m, _) = models.converse()?;
            Adam::new(&m.store, conv_cfg.lr).with_clip(conv_cfg.clip_norm)
        };
        let mut epochs = Vec::with_capacity(self.cfg.joint_epochs);
        for j in 0..self.cfg.joint_epochs {
            let all = beams(&models.env(&self.data.kg), &turns.rec, self.cfg.beam_width)?;
            let paths: Vec<_> = all
                .iter()
                .map(|b| generation_paths(b, self.cfg.n_paths))
                .collect();
            let (model, vocab) = models.converse()?;
            let inputs = training_inputs(&self.data, &self.cfg, vocab, &turns, &paths);
            let posteriors: Vec<Vec<f64>> = inputs
                .par_iter()
                .zip(&paths)
                .map(|(inp, ps)| {
                    if ps.is_empty() {
                        Ok(Vec::new())
                    } else {
                        path_posterior(model, inp)
                    }
                })
                .collect::<Result<_>>()?;
            let statements: Vec<Option<Vec<f64>>> = inputs
                .par_iter()
                .map(|inp| {
                    inp.statement
                        .as_ref()
                        .map(|s| semantic_encoding(model, s))
                        .transpose()
                })
                .collect::<Result<_>>()?;
            let (reward, terminal, _) = {
                let bridge = JointBridge::new(
                    model,
                    vocab,
                    &self.data.kg,
                    &self.data.templates,
                    self.cfg.reward_transform,
                    &paths,
                    &posteriors,
                    &statements,
                );
                let mut nets = models.policy.clone();
                let r = reasoner::train_epoch(
                    &mut nets,
                    &mut rec_opt,
                    &self.data.kg,
                    &models.emb,
                    &turns.rec,
                    &rec_cfg,
                    rec_cfg.epochs + j + 1,
                    Some(&bridge),
                )?;
                models.policy = nets;
                r
            };
            let (mut model, vocab) = models.converse.take().expect("checked above");
            let loss = converse::train_epoch(
                &mut model,
                &mut conv_opt,
                &inputs,
                Objective::Generation,
                &conv_cfg,
                j,
            )?;
            models.converse = Some((model, vocab));
            log::info!(
                "joint epoch {}: reward {reward:.4} terminal {terminal:.3} loss {:.4}",
                j + 1,
                loss.total
            );
            epochs.push(JointEpoch {
                epoch: j + 1,
                reward,
                terminal,
                loss,
            });
            self.epoch_end(Stage::Joint, &models)?;
        }
        let hit_after = evaluate(&models, &self.data, "valid", self.cfg.n_paths)?.hit;
        log::info!("joint valid hit: before {hit_before:?}, after {hit_after:?}");
        if self.data.content_hash() != hash_before {
            return Err(DicrError::Precondition(
                "joint training modified the graph or corpus".into(),
            ));
        }
        let fmt = |h: Option<f64>| h.map_or("null".to_string(), |v| format!("{v:.6}"));
        let mut csv = String::from("epoch,reward,terminal,kl,bow,bce,nll,total\n");
        for e in &epochs {
            let l = &e.loss;
            csv.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                e.epoch, e.reward, e.terminal, l.kl, l.bow, l.bce, l.nll, l.total
            ));
        }
        csv.push_str(&format!(
            "# valid hit before {}, after {}\n",
            fmt(hit_before),
            fmt(hit_after)
        ));
        write(&self.log_path("joint"), &csv)?;
        models.save(Stage::Joint, &self.checkpoint(Stage::Joint))?;
        self.report(&models)?;
        Ok(JointSummary {
            hit_before,
            hit_after,
            epochs,
        })
    }

    /// Test-split report of `models`, also written to the run directory.
    pub fn report(&self, models: &Models) -> Result<MetricsReport> {
        let r = evaluate(models, &self.data, "test", self.cfg.n_paths)?;
        r.save(&self.run_dir.join(REPORT_FILE))?;
        Ok(r)
    }

    /// Greedy Recall@1 of a checkpoint's reasoner on `split`.
    pub fn recall1(&self, models: &Models, split: &str) -> Result<f64> {
        let turns = TurnSet::build(&self.data, &models.cfg, &models.emb, split, false)?;
        greedy_recall1(&models.env(&self.data.kg), &turns.rec)
    }
}
