pub mod augment;
pub mod classifier;
pub mod corpus;
pub mod crf;
pub mod eval;
pub mod labeling;
pub mod model_file;
pub mod optim;
