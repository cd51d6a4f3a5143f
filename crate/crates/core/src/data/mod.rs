mod column;
mod corpus;
mod split;
mod stats;
mod synth;
mod vocab;

pub use column::{format_column, parse_column, read_column_file, write_column_file, DOCSTART};
pub use corpus::{
    is_valid_label, label_order, sort_labels, split_label, Corpus, Document, Sentence, TokenAnn, OUTSIDE,
};
pub use split::{subsample_size, subsample_train, SplitCorpus, DEV_SHARE, TRAIN_SHARE};
pub use stats::{corpus_stats, CorpusStats};
pub use synth::{generate_synthetic, SynthSpec, SyntheticCorpora, DEFAULT_PHI_TYPES, NUMBER_SLOT};
pub use vocab::{
    build_vocabulary, EncodedSentence, Vocabulary, PAD_SYMBOL, SINGLETON_UNK_PROB, UNK_SYMBOL,
};
