//! Result emission: per-slot CSV records, JSON summaries and figure data.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::{RunSummary, StepRecord, SweepSummary};

/// Column layout of `records.csv`.
pub const RECORD_HEADER: [&str; 27] = [
    "run_seed",
    "slot",
    "system",
    "x0",
    "x1",
    "x2",
    "x3",
    "theta_abs",
    "action",
    "alpha_u",
    "alpha_d",
    "xi_u",
    "xi_d",
    "beta_u",
    "beta_d",
    "p_u",
    "p_d",
    "loop_case",
    "q_beta_u",
    "q_beta_d",
    "q_p_u",
    "q_p_d",
    "q_c_u",
    "q_c_d",
    "q_c",
    "gpr_var_u_mean",
    "gpr_var_d_mean",
];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    }
}

/// Writes the record stream; an empty stream still gets the header row.
pub fn write_records_csv(path: &Path, records: &[StepRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    writer
        .write_record(RECORD_HEADER)
        .map_err(|e| csv_err(path, e))?;
    for record in records {
        writer.serialize(record).map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_records_csv(path: &Path) -> Result<Vec<StepRecord>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row.map_err(|e| csv_err(path, e))?);
    }
    Ok(out)
}

pub fn write_summary_json(path: &Path, summary: &RunSummary) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)
        .map_err(|e| Error::Numerical(format!("summary serialization: {e}")))?;
    fs::write(path, text + "\n").map_err(io_err(path))?;
    Ok(())
}

pub fn read_summary_json(path: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Emits one run's artifacts into a directory.
pub fn emit_results(out_dir: &Path, summary: &RunSummary, records: &[StepRecord]) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_records_csv(&out_dir.join("records.csv"), records)?;
    write_summary_json(&out_dir.join("summary.json"), summary)?;
    Ok(())
}

/// Emits sweep aggregates plus the figure data series. One sweep per
/// scheduler; the figure files collate all of them.
pub fn emit_sweeps(out_dir: &Path, sweeps: &[SweepSummary]) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    for sweep in sweeps {
        let name = format!("sweep_{}.json", sweep.scheduler.name());
        let path = out_dir.join(name);
        let text = serde_json::to_string_pretty(sweep)
            .map_err(|e| Error::Numerical(format!("sweep serialization: {e}")))?;
        fs::write(&path, text + "\n").map_err(io_err(&path))?;
    }
    write_capacity_data(&out_dir.join("plotdata_fig19.csv"), sweeps)?;
    write_error_curves(&out_dir.join("plotdata_fig20.csv"), sweeps)?;
    write_rate_histograms(&out_dir.join("plotdata_fig21.csv"), sweeps)?;
    write_trajectory_data(&out_dir.join("plotdata_fig22.csv"), sweeps)?;
    Ok(())
}

/// Served-system capacity per scheduler.
fn write_capacity_data(path: &Path, sweeps: &[SweepSummary]) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["scheduler", "systems", "slots", "served_count"])
        .map_err(|e| csv_err(path, e))?;
    for s in sweeps {
        w.write_record([
            s.scheduler.name().to_string(),
            s.systems.to_string(),
            s.slots.to_string(),
            s.served_count.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Seed-averaged |theta| curves per system.
fn write_error_curves(path: &Path, sweeps: &[SweepSummary]) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["scheduler", "system", "slot", "mean_theta_abs"])
        .map_err(|e| csv_err(path, e))?;
    for s in sweeps {
        for (i, trace) in s.mean_theta_trace.iter().enumerate() {
            for (slot, v) in trace.iter().enumerate() {
                w.write_record([
                    s.scheduler.name().to_string(),
                    i.to_string(),
                    slot.to_string(),
                    format!("{v}"),
                ])
                .map_err(|e| csv_err(path, e))?;
            }
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Communication-rate histograms, bins of width 0.1 on [0, 1].
fn write_rate_histograms(path: &Path, sweeps: &[SweepSummary]) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["scheduler", "direction", "bin_lo", "bin_hi", "count"])
        .map_err(|e| csv_err(path, e))?;
    for s in sweeps {
        for (direction, hist) in [("uplink", &s.rate_hist_u), ("downlink", &s.rate_hist_d)] {
            for (b, count) in hist.iter().enumerate() {
                w.write_record([
                    s.scheduler.name().to_string(),
                    direction.to_string(),
                    format!("{:.1}", b as f64 / 10.0),
                    format!("{:.1}", (b + 1) as f64 / 10.0),
                    count.to_string(),
                ])
                .map_err(|e| csv_err(path, e))?;
            }
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// State and AoI trajectory of system 0 in the first seed.
fn write_trajectory_data(path: &Path, sweeps: &[SweepSummary]) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["scheduler", "slot", "theta_abs", "beta_u", "beta_d"])
        .map_err(|e| csv_err(path, e))?;
    for s in sweeps {
        let first = match s.per_seed.first() {
            Some(f) => f,
            None => continue,
        };
        let (Some(theta), Some(bu), Some(bd)) = (
            first.theta_traces.as_ref(),
            first.aoi_u_traces.as_ref(),
            first.aoi_d_traces.as_ref(),
        ) else {
            continue;
        };
        for slot in 0..s.slots {
            w.write_record([
                s.scheduler.name().to_string(),
                slot.to_string(),
                format!("{}", theta[0][slot]),
                bu[0][slot].to_string(),
                bd[0][slot].to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}
