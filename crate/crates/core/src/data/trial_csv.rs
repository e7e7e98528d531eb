use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::ElectrodeLayout;
use crate::signal::{TrialRecord, JOINT_NAMES};
use crate::tensor::Tensor;

/// Writes `time,ch_<name>…,joint_<name>…` with shortest round-trip floats.
pub fn write_trial_csv<W: Write>(trial: &TrialRecord, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string()];
    header.extend(trial.channels.iter().map(|c| format!("ch_{c}")));
    header.extend(JOINT_NAMES.iter().map(|j| format!("joint_{j}")));
    w.write_record(&header)?;
    let t = trial.len();
    let (eeg, joints) = (trial.eeg.data(), trial.joints.data());
    let mut rec = Vec::with_capacity(header.len());
    for i in 0..t {
        rec.clear();
        rec.push((i as f64 / trial.fs).to_string());
        rec.extend((0..trial.n_channels()).map(|c| eeg[c * t + i].to_string()));
        rec.extend((0..trial.n_joints()).map(|j| joints[j * t + i].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trial_csv(trial: &TrialRecord, path: &Path) -> Result<()> {
    write_trial_csv(trial, std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// Parses a trial; `fs` comes from the time column, which must be uniform.
/// Channel names are checked against `layout` when given.
pub fn read_trial_csv<R: Read>(reader: R, path: &Path, layout: Option<&ElectrodeLayout>) -> Result<TrialRecord> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("time") {
        return Err(perr(1, "first column must be `time`".into()));
    }
    let mut channels = Vec::new();
    let mut joint_cols = vec![None; JOINT_NAMES.len()];
    for (i, h) in header.iter().enumerate().skip(1) {
        if let Some(name) = h.strip_prefix("ch_") {
            if !joint_cols.iter().all(Option::is_none) {
                return Err(perr(1, "channel columns must precede joint columns".into()));
            }
            channels.push(name.to_string());
        } else if let Some(name) = h.strip_prefix("joint_") {
            let j = JOINT_NAMES
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| perr(1, format!("unknown joint column `{h}`")))?;
            joint_cols[j] = Some(i);
        } else {
            return Err(perr(1, format!("unexpected column `{h}`")));
        }
    }
    if let Some(j) = joint_cols.iter().position(Option::is_none) {
        return Err(perr(1, format!("missing column `joint_{}`", JOINT_NAMES[j])));
    }
    if channels.is_empty() {
        return Err(perr(1, "no EEG channel columns".into()));
    }
    if let Some(layout) = layout {
        for c in &channels {
            if layout.index_of(c).is_none() {
                return Err(perr(1, format!("channel `{c}` is not in the montage")));
            }
        }
    }

    let c = channels.len();
    let mut times = Vec::new();
    let mut eeg_cols: Vec<Vec<f64>> = vec![Vec::new(); c];
    let mut joint_vals: Vec<Vec<f64>> = vec![Vec::new(); JOINT_NAMES.len()];
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(perr(line, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            let v: f64 = rec[i]
                .trim()
                .parse()
                .map_err(|_| perr(line, format!("`{}` is not a number", &rec[i])))?;
            if !v.is_finite() {
                return Err(perr(line, format!("non-finite value in column {}", header[i])));
            }
            Ok(v)
        };
        times.push(num(0)?);
        for (ch, col) in eeg_cols.iter_mut().enumerate() {
            col.push(num(ch + 1)?);
        }
        for (j, col) in joint_cols.iter().enumerate() {
            joint_vals[j].push(num(col.unwrap())?);
        }
    }
    if times.len() < 2 {
        return Err(perr(2, "need at least two samples to infer the rate".into()));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(perr(3, "time must increase".into()));
    }
    for (k, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.max(1e-3) {
            return Err(perr(k + 3, format!("non-uniform time step {} (expected {dt})", w[1] - w[0])));
        }
    }
    let fs = 1.0 / dt;
    let fs = if (fs - fs.round()).abs() < 1e-6 { fs.round() } else { fs };
    let t = times.len();
    TrialRecord::new(
        Tensor::new(&[c, t], eeg_cols.concat())?,
        Tensor::new(&[JOINT_NAMES.len(), t], joint_vals.concat())?,
        fs,
        channels,
    )
}

pub fn load_trial_csv(path: &Path, layout: Option<&ElectrodeLayout>) -> Result<TrialRecord> {
    read_trial_csv(std::fs::File::open(path)?, path, layout)
}

/// File name used for trial `(block, trial)`.
pub fn trial_file_name(block: u32, trial: u32) -> String {
    format!("block{block}_trial{trial:02}.csv")
}

fn parse_trial_file_name(stem: &str) -> Option<(u32, u32)> {
    let rest = stem.strip_prefix("block")?;
    let (b, t) = rest.split_once("_trial")?;
    Some((b.parse().ok()?, t.parse().ok()?))
}

/// Loads every `block<b>_trial<t>.csv` in `dir`, ordered by block then trial.
pub fn load_trial_dir(dir: &Path, layout: Option<&ElectrodeLayout>) -> Result<Vec<TrialRecord>> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let ids = path.file_stem().and_then(|s| s.to_str()).and_then(parse_trial_file_name);
        if let Some((b, t)) = ids {
            found.push((b, t, path));
        }
    }
    if found.is_empty() {
        return Err(Error::Config(format!(
            "no block<b>_trial<t>.csv files in {}",
            dir.display()
        )));
    }
    found.sort();
    found
        .into_iter()
        .map(|(b, t, path)| Ok(load_trial_csv(&path, layout)?.with_ids(1, b, t)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthSpec};

    fn parse(text: &str) -> Result<TrialRecord> {
        read_trial_csv(text.as_bytes(), Path::new("mem.csv"), Some(&ElectrodeLayout::standard_10_10()))
    }

    const HEAD: &str = "time,ch_Cz,ch_C3,joint_lhip,joint_lknee,joint_lankle,joint_rhip,joint_rknee,joint_rankle\n";

    #[test]
    fn minimal_two_rows() {
        let text = format!("{HEAD}0,1,2,3,4,5,6,7,8\n0.001,1,2,3,4,5,6,7,8\n");
        let tr = parse(&text).unwrap();
        assert_eq!(tr.len(), 2);
        assert_eq!(tr.fs, 1000.0);
        assert_eq!(tr.channels, vec!["Cz", "C3"]);
    }

    #[test]
    fn schema_errors_name_lines() {
        let no_joint = "time,ch_Cz,joint_lhip\n0,1,2\n0.001,1,2\n";
        assert!(matches!(parse(no_joint), Err(Error::Parse { line: 1, .. })));
        let ragged = format!("{HEAD}0,1,2,3,4,5,6,7,8\n0.001,1,2,3\n");
        assert!(matches!(parse(&ragged), Err(Error::Parse { line: 3, .. })));
        let uneven = format!("{HEAD}0,1,2,3,4,5,6,7,8\n0.001,1,2,3,4,5,6,7,8\n0.003,1,2,3,4,5,6,7,8\n");
        assert!(matches!(parse(&uneven), Err(Error::Parse { line: 4, .. })));
        let unknown = "time,ch_XYZ,joint_lhip,joint_lknee,joint_lankle,joint_rhip,joint_rknee,joint_rankle\n0,1,2,3,4,5,6,7\n0.001,1,2,3,4,5,6,7\n";
        assert!(matches!(parse(unknown), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn file_names_parse() {
        assert_eq!(parse_trial_file_name("block2_trial07"), Some((2, 7)));
        assert_eq!(trial_file_name(3, 5), "block3_trial05.csv");
        assert_eq!(parse_trial_file_name("notes"), None);
    }

    #[test]
    fn round_trip_is_lossless() {
        let tr = synth_generate(&SynthSpec { duration_s: 0.5, ..SynthSpec::default() }).unwrap();
        let mut buf = Vec::new();
        write_trial_csv(&tr, &mut buf).unwrap();
        let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.fs, tr.fs);
        assert!(back.eeg.max_abs_diff(&tr.eeg) <= 1e-12);
        assert!(back.joints.max_abs_diff(&tr.joints) <= 1e-12);
    }
}
