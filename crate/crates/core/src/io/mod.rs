//! Array files, results logs and round checkpoints.

pub mod array;
pub mod checkpoint;
pub mod results;

pub use array::{read_array, write_array, ArrayData, ArrayFile, ArrayFormat, DType};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use results::{append_json_line, ResultsLog, RESULTS_EXTENSION};
