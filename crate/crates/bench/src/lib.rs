//! Shared fixtures for the benchmarks under `benches/`.

use georeason_core::geodata::Gazetteer;
use georeason_core::model::{Matrix, Model, ModelConfig, Vocab};
use georeason_core::pipeline::{build_corpus, corpus_vocab, training_pairs, Corpus, CorpusConfig, Summarizer};
use georeason_core::pretrain::TrainingPair;
use georeason_core::synth::{generate_synthetic_world, SyntheticWorld};

/// Seeded synthetic world with its corpus, vocabulary and encoded pairs.
pub struct Fixture {
    pub world: SyntheticWorld,
    pub gazetteer: Gazetteer,
    pub corpus: Corpus,
    pub corpus_config: CorpusConfig,
    pub vocab: Vocab,
    pub pairs: Vec<TrainingPair>,
}

impl Fixture {
    pub fn new(n_entities: usize, n_docs: usize, max_seq_len: usize) -> Self {
        let world = generate_synthetic_world(0, n_entities, n_docs).expect("synthetic world");
        let gazetteer = world.gazetteer().expect("gazetteer");
        let corpus_config = CorpusConfig::default();
        let corpus = build_corpus(&gazetteer, &world.documents, &world.triples, &corpus_config, Summarizer::Template)
            .expect("corpus");
        let vocab = corpus_vocab(&corpus, &gazetteer, corpus_config.vocab_size).expect("vocab");
        let pairs = training_pairs(&corpus, &vocab, max_seq_len);
        Fixture {
            world,
            gazetteer,
            corpus,
            corpus_config,
            vocab,
            pairs,
        }
    }

    pub fn model(&self, d_model: usize, n_layers: usize, max_seq_len: usize) -> Model {
        let cfg = ModelConfig {
            d_model,
            n_heads: 4,
            n_layers,
            d_ff: 4 * d_model,
            max_seq_len,
            ..ModelConfig::new(self.vocab.len())
        };
        Model::new(cfg, 0).expect("model")
    }
}

/// Deterministic dense `rows x cols` matrix with no zero rows.
pub fn embeddings(rows: usize, cols: usize, phase: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|i| (i as f64 * 0.37 + phase).sin() + 1e-3)
        .collect();
    Matrix::from_vec(rows, cols, data)
}
