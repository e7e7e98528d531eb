//! Synthetic walking EEG, trial files, data splits and gait cycles.

mod cycles;
mod split;
mod synth;
mod trial_csv;

pub use cycles::{
    cycle_overlay, detect_peaks, extract_cycle, normalize_cycle, segment_gait_cycles, write_cycles_csv,
    GaitCycle, OverlayRow, PeakCriteria, write_overlay_csv, CYCLE_POINTS,
};
pub use split::{
    fraction_ranges, split_fraction, split_ged, split_mobi, GedBoundaries, Split, SplitSpec, MOBI_TRAIN,
    MOBI_VAL,
};
pub use synth::{synth_generate, synth_session, SynthSpec, SMALL_MONTAGE, SOURCE_CHANNELS};
pub use trial_csv::{
    load_trial_csv, load_trial_dir, read_trial_csv, save_trial_csv, trial_file_name, write_trial_csv,
};
