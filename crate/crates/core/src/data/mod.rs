//! Data plane: the interchange container, EDF reading, and dataset-specific
//! labelling and windowing rules.

mod chb;
mod container;
mod datasets;
mod edf;
mod labels;
mod recording;
mod windows;

pub use chb::{
    parse_chb_summary, segment_chb, seizure_context, task_channels, task_states, ChbConfig, ChbFileSummary,
    ChbSegmentation, SeizureState, CHB_CHANNELS_18, CHB_CHANNELS_22, SEIZURE_LABEL,
};
pub use container::{
    decode_container, encode_container, read_container, write_container, CONTAINER_MAGIC, CONTAINER_VERSION,
};
pub use datasets::{load_chbmit, load_deap, load_seed, load_windows_dir, DatasetKind, SubjectWindows, CONTAINER_EXT};
pub use edf::{encode_edf, parse_edf, read_edf, EdfHeader, EdfSignal};
pub use labels::{label_deap, label_seed, seed_central_crop, DEAP_THRESHOLD, SEED_CROP_S};
pub use recording::{Annotation, EegRecording, TrialInfo};
pub use windows::{split_windows, LabeledWindow, TaskTag, ZScore};
