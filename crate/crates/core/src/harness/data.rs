//! Loading or generating the graph and query splits of an experiment.

use std::collections::HashSet;
use std::path::Path;

use crate::dataset::{generate_synthetic, load_queries, save_queries, Query, Split, SyntheticDataset};
use crate::error::{Error, Result};
use crate::kg_store::{load_triples, save_triples, AugmentFlags, EntityId, KnowledgeGraph, RelationId, Vocab};
use crate::policy::PolicyConfig;

use super::config::ExperimentConfig;

/// Graph (augmented for the configured mode), vocabulary and splits.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub graph: KnowledgeGraph,
    pub vocab: Vocab,
    pub train: Vec<Query>,
    pub valid: Vec<Query>,
    pub test: Vec<Query>,
    /// Queries planted unreachable, when the benchmark is synthetic.
    pub unreachable: Option<HashSet<(EntityId, RelationId)>>,
}

impl Prepared {
    pub fn split(&self, split: Split) -> &[Query] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn policy_config(&self, cfg: &ExperimentConfig) -> PolicyConfig {
        PolicyConfig {
            entity_slots: self.graph.entity_slots(),
            relation_slots: self.graph.layout().total(),
            dim: cfg.model.dim,
            hidden: cfg.model.hidden,
            ffnn_layers: cfg.model.ffnn_layers,
        }
    }
}

pub fn augmentation(cfg: &ExperimentConfig) -> AugmentFlags {
    AugmentFlags {
        inverse: true,
        noop: true,
        noanswer: cfg.uses_noanswer(),
    }
}

/// Builds the experiment data: from `data.dir` when set, otherwise from
/// the synthetic spec.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let flags = augmentation(cfg);
    match &cfg.data.dir {
        Some(dir) => {
            let (graph, vocab) = load_dataset_graph(dir)?;
            let load = |s: Split| load_queries(&dir.join(format!("{s}.tsv")), &vocab, s);
            Ok(Prepared {
                graph: graph.augment(flags)?,
                train: load(Split::Train)?,
                valid: load(Split::Valid)?,
                test: load(Split::Test)?,
                vocab,
                unreachable: None,
            })
        }
        None => {
            let ds = generate_synthetic(&cfg.data.synthetic)?;
            Ok(from_synthetic(ds, flags)?)
        }
    }
}

fn from_synthetic(ds: SyntheticDataset, flags: AugmentFlags) -> Result<Prepared> {
    let unreachable = ds
        .queries
        .iter()
        .zip(&ds.unreachable)
        .filter(|(_, &u)| u)
        .map(|(q, _)| (q.e_q, q.r_q))
        .collect();
    Ok(Prepared {
        train: ds.split(Split::Train),
        valid: ds.split(Split::Valid),
        test: ds.split(Split::Test),
        graph: ds.graph.augment(flags)?,
        vocab: ds.vocab,
        unreachable: Some(unreachable),
    })
}

fn load_dataset_graph(dir: &Path) -> Result<(KnowledgeGraph, Vocab)> {
    let graph_path = dir.join("graph.tsv");
    if dir.join("entities.tsv").exists() {
        let vocab = Vocab::load(dir)?.freeze();
        load_triples(&graph_path, Some(vocab))
    } else {
        let (g, v) = load_triples(&graph_path, None)?;
        Ok((g, v.freeze()))
    }
}

/// Writes a generated benchmark as a dataset directory readable through
/// `data.dir`, plus `rules.tsv` and `unreachable.tsv` for inspection.
pub fn write_synthetic(ds: &SyntheticDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    ds.vocab.save(dir)?;
    save_triples(&ds.graph, &ds.vocab, &dir.join("graph.tsv"))?;
    for s in Split::ALL {
        save_queries(&dir.join(format!("{s}.tsv")), &ds.vocab, &ds.split(s))?;
    }
    let rules: String = ds
        .rules
        .iter()
        .map(|r| {
            format!(
                "{}\t{}\t{}\n",
                ds.vocab.relation_name(r.head),
                ds.vocab.relation_name(r.first),
                ds.vocab.relation_name(r.second)
            )
        })
        .collect();
    let path = dir.join("rules.tsv");
    std::fs::write(&path, rules).map_err(|e| Error::io(&path, e))?;
    let unreachable: Vec<Query> = ds
        .queries
        .iter()
        .zip(&ds.unreachable)
        .filter(|(_, &u)| u)
        .map(|(q, _)| q.clone())
        .collect();
    save_queries(&dir.join("unreachable.tsv"), &ds.vocab, &unreachable)
}
