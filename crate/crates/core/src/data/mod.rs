//! Datasets and task generators: IDX images, permuted pixel sequences and
//! the variable-delay copy task.

mod copy;
mod idx;
mod seq;

pub use copy::{
    chance_recall_loss, chance_sequence_loss, gen_copy_batch, CopyTaskConfig, TaskBatch, BLANK, GO,
    N_SYMBOLS, SEQ_LEN, TOKEN_DIM,
};
pub use idx::{
    encode_images, encode_labels, load_idx, load_split, parse_images, parse_labels, write_idx, IdxDataset,
    IMAGE_MAGIC, LABEL_MAGIC,
};
pub use seq::{pixel_permutation, sequential_splits, sequentialize, SeqDataset, SeqSplits, VALIDATION_SIZE};
