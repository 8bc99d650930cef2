//! Dialog corpus ingestion, gold interest-shift paths, splits and toy worlds.

pub mod dialog;
pub mod examples;
pub mod gold;
pub mod split;
pub mod templates;
pub mod toy;
pub mod vocab;

pub use dialog::{
    load_corpus, parse_corpus, serialize_corpus, Dialog, LoadedCorpus, Speaker, Turn,
};
pub use examples::{build_examples, ExampleConfig, TrainingExample};
pub use gold::{extract_gold_path, gold_paths_per_target, shortest_paths_from, GoldShiftPath};
pub use split::{split_dialogs, split_sizes, DatasetSplit};
pub use templates::{tokenize_path, RelationTemplates};
pub use toy::{generate_toy_world, PlantedShift, ToyConfig, ToyWorld};
pub use vocab::{WordVocab, BOS, EOS, PAD, SPECIALS, SYS, UNK, USR};
