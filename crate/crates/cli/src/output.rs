use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Context;
use screwgrasp::evaluation::{TableOutput, TrialObject, TrialsOutput, HISTOGRAM_BIN};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "n/a".into())
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// One row per (object, trial) in object order; failed trials keep their row
/// with an empty `y_max` and the error message. Wall time is left out so
/// reruns are byte-identical.
pub fn trials_csv(objects: &[TrialObject], screws: usize, out: &TrialsOutput) -> String {
    let mut s = String::from("object_id,trial,lx,ly,lz,mx,my,mz,y_max,spearman,precision,top_k,top_m,error\n");
    for obj in objects {
        for trial in 0..screws {
            let report = out.reports.iter().find(|r| r.object_id == obj.id && r.trial == trial);
            match report {
                Some(r) => {
                    let (l, m) = (r.screw.direction(), r.screw.moment());
                    writeln!(
                        s,
                        "{},{trial},{},{},{},{},{},{},{},{},{},{},{},",
                        obj.id, l.x, l.y, l.z, m.x, m.y, m.z, r.y_max, r.spearman, opt(r.precision), r.top_k, r.top_m
                    )
                    .unwrap();
                }
                None => {
                    let err = out
                        .failures
                        .iter()
                        .find(|f| f.object_id == obj.id && f.trial == trial)
                        .map(|f| f.error.replace(',', ";"))
                        .unwrap_or_default();
                    writeln!(s, "{},{trial},,,,,,,,,,,,{err}", obj.id).unwrap();
                }
            }
        }
    }
    s
}

pub fn histogram_csv(out: &TrialsOutput) -> String {
    let mut s = String::from("bin,count\n");
    for (k, c) in out.histogram.iter().enumerate() {
        writeln!(s, "{:.2},{c}", k as f64 * HISTOGRAM_BIN).unwrap();
    }
    s
}

pub fn per_object_csv(out: &TrialsOutput) -> String {
    let mut s = String::from("object_id,n_trials,mean_y_max\n");
    for m in &out.per_object {
        writeln!(s, "{},{},{}", m.object_id, m.n_trials, m.mean_y_max).unwrap();
    }
    s
}

pub fn write_trials(dir: &Path, objects: &[TrialObject], screws: usize, out: &TrialsOutput) -> anyhow::Result<()> {
    write(&dir.join("trials.csv"), &trials_csv(objects, screws, out))?;
    write(&dir.join("histogram.csv"), &histogram_csv(out))?;
    write(&dir.join("per_object.csv"), &per_object_csv(out))?;
    write(&dir.join("summary.json"), &(serde_json::to_string_pretty(&out.summary)? + "\n"))
}

pub fn table_csv(out: &TableOutput) -> String {
    let mut s = String::from("object_id,task,n_trials,n_failed,mean_y_max\n");
    for r in &out.rows {
        writeln!(s, "{},{},{},{},{}", r.object_id, r.task.name(), r.n_trials, r.n_failed, r.mean_y_max).unwrap();
    }
    s
}

/// Same row discipline as [`trials_csv`].
pub fn table_trials_csv(trials: usize, out: &TableOutput) -> String {
    let mut s = String::from("object_id,task,trial,lx,ly,lz,mx,my,mz,y_max,spearman,error\n");
    for row in &out.rows {
        let task = row.task.name();
        for trial in 0..trials {
            match out.reports.iter().find(|r| r.object_id == row.object_id && r.trial == trial) {
                Some(r) => {
                    let (l, m) = (r.screw.direction(), r.screw.moment());
                    writeln!(
                        s,
                        "{},{task},{trial},{},{},{},{},{},{},{},{},",
                        row.object_id, l.x, l.y, l.z, m.x, m.y, m.z, r.y_max, r.spearman
                    )
                    .unwrap();
                }
                None => {
                    let err = out
                        .failures
                        .iter()
                        .find(|f| f.object_id == row.object_id && f.trial == trial)
                        .map(|f| f.error.replace(',', ";"))
                        .unwrap_or_default();
                    writeln!(s, "{},{task},{trial},,,,,,,,,{err}", row.object_id).unwrap();
                }
            }
        }
    }
    s
}

pub fn write_table(dir: &Path, trials: usize, out: &TableOutput) -> anyhow::Result<()> {
    write(&dir.join("table.csv"), &table_csv(out))?;
    write(&dir.join("table_trials.csv"), &table_trials_csv(trials, out))
}
