use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ProtocolConfig, Scenario};
use super::svg::{render, Series};
use super::sweep::{run_power_sweep, run_pressure_sweep, SweepTable};
use super::trap::{run_preselection, run_pumpdown, run_stability_map, write_map_csv};
use crate::error::{Error, Result, Stage};
use crate::odmr::{fit_double_gaussian, synthesize_spectrum, FitOptions, NoiseSpec, Spectrum};
use crate::thermometry::{invert_zfs, temperature_from_fit, ThermoEstimate};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub format: Format,
    pub outputs: Vec<String>,
    /// Rows whose status is not ok, for the tabular scenarios.
    pub failed_rows: usize,
    pub config: ProtocolConfig,
}

/// Write through a temporary sibling file and rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid("output path", "has no file name"))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| -> Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Rendered files of one run, in memory until every computation succeeded.
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
    failed_rows: usize,
}

impl Outputs {
    fn new() -> Self {
        Outputs {
            files: Vec::new(),
            failed_rows: 0,
        }
    }

    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(name, text.into_bytes());
        Ok(())
    }
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn read_spectrum(c: &ProtocolConfig, rel: &str) -> Result<Spectrum> {
    let path = c.resolve(rel);
    let file = fs::File::open(&path).map_err(|e| Error::Config(format!("cannot read spectrum {}: {e}", path.display())))?;
    Spectrum::read_csv(file).map_err(|e| match e {
        Error::Config(_) => e,
        other => Error::Config(format!("{}: {other}", path.display())),
    })
}

fn sweep_outputs(out: &mut Outputs, table: &SweepTable, format: Format) -> Result<()> {
    let stem = match table.scenario {
        Scenario::SweepPressure => "sweep_pressure",
        _ => "sweep_power",
    };
    match format {
        Format::Csv => out.add(format!("{stem}.csv"), csv_bytes(|b| table.write_csv(b))?),
        Format::Json => out.json(format!("{stem}.json"), table)?,
    }
    out.failed_rows = table.rows.iter().filter(|r| !r.ok()).count();
    let (scale, x_label) = match table.scenario {
        Scenario::SweepPressure => (1.0, "pressure (mbar)"),
        _ => (1e6, "laser power (µW)"),
    };
    let pick = |f: fn(&super::sweep::SweepRow) -> Option<f64>| -> Vec<(f64, f64)> {
        table.rows.iter().filter_map(|r| f(r).map(|v| (r.control * scale, v))).collect()
    };
    let svg = render(
        stem,
        x_label,
        "temperature (K)",
        &[Series::line("model", pick(|r| r.true_t_k)), Series::points("inferred", pick(|r| r.t_inferred_k))],
    );
    out.add(format!("{stem}.svg"), svg.into_bytes());
    Ok(())
}

fn estimate_csv(e: &ThermoEstimate) -> Result<Vec<u8>> {
    csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["temperature_k", "sigma_t_k", "d_ghz", "extrapolated"])?;
        w.write_record([e.temperature_k.to_string(), e.sigma_t_k.to_string(), e.d_ghz.to_string(), e.extrapolated.to_string()])?;
        w.flush()?;
        Ok(())
    })
}

fn compute(c: &ProtocolConfig, format: Format) -> Result<Outputs> {
    let mut out = Outputs::new();
    match c.scenario {
        Scenario::SweepPower => sweep_outputs(&mut out, &run_power_sweep(c)?, format)?,
        Scenario::SweepPressure => sweep_outputs(&mut out, &run_pressure_sweep(c)?, format)?,
        Scenario::Preselect => {
            let r = run_preselection(c)?;
            out.json("preselect.json", &r)?;
            let pts: Vec<(f64, f64)> = r.scan.iter().map(|p| (p.drive_hz, if p.stable { 1.0 } else { 0.0 })).collect();
            out.add("preselect.svg", render("preselection scan", "drive frequency (Hz)", "stable", &[Series::both("scan", pts)]).into_bytes());
        }
        Scenario::Pumpdown => {
            let r = run_pumpdown(c)?;
            match format {
                Format::Csv => {
                    out.add("pumpdown.csv", csv_bytes(|b| r.write_csv(b))?);
                    out.add("ramp.csv", csv_bytes(|b| r.write_ramp_csv(b))?);
                }
                Format::Json => out.json("pumpdown.json", &r)?,
            }
            out.failed_rows = r.rows.iter().filter(|row| row.status != "ok").count();
            let pick = |f: fn(&super::trap::PumpdownRow) -> Option<f64>| -> Vec<(f64, f64)> {
                r.rows.iter().filter_map(|row| f(row).map(|v| (row.pressure_mbar.log10(), v * 1e6))).collect()
            };
            let svg = render(
                "pump-down",
                "log10 pressure (mbar)",
                "µm",
                &[
                    Series::both("equilibrium shift", pick(|r| r.equilibrium_shift_m)),
                    Series::both("micromotion", pick(|r| r.micromotion_m)),
                ],
            );
            out.add("pumpdown.svg", svg.into_bytes());
        }
        Scenario::StabilityMap => {
            let map = run_stability_map(c)?;
            match format {
                Format::Csv => out.add("stability_map.csv", csv_bytes(|b| write_map_csv(&map, b))?),
                Format::Json => out.json("stability_map.json", &map)?,
            }
            let series: Vec<Series> = c
                .stability_map
                .gamma_norm
                .iter()
                .map(|&g| {
                    let pts = map.iter().filter(|p| p.gamma_norm == g && p.stable).map(|p| (p.q, p.a)).collect();
                    Series::points(&format!("stable, γ̃ = {g}"), pts)
                })
                .collect();
            out.add("stability_map.svg", render("Mathieu stability", "q", "a", &series).into_bytes());
        }
        Scenario::SynthOdmr => {
            let sp = c.spin_params(c.synth.d_zfs_ghz)?;
            let noise = NoiseSpec {
                kind: c.odmr.noise,
                seed: c.seed,
                scale: c.odmr.noise_scale,
            };
            let s = synthesize_spectrum(&sp, &c.field()?, &c.line(c.synth.contrast), &c.grid(), &noise).map_err(|e| e.at(Stage::Synthesis))?;
            match format {
                Format::Csv => out.add("spectrum.csv", csv_bytes(|b| s.write_csv(b))?),
                Format::Json => {
                    #[derive(Serialize)]
                    struct Columns<'a> {
                        freq_ghz: &'a [f64],
                        pl_cps: &'a [f64],
                    }
                    out.json("spectrum.json", &Columns { freq_ghz: &s.frequencies, pl_cps: &s.pl })?
                }
            }
            let pts = s.frequencies.iter().copied().zip(s.pl.iter().copied()).collect();
            out.add("spectrum.svg", render("synthetic ESR spectrum", "frequency (GHz)", "PL (cps)", &[Series::line("spectrum", pts)]).into_bytes());
        }
        Scenario::FitOdmr => {
            let s = read_spectrum(c, &c.fit.spectrum_path)?;
            let opts = FitOptions {
                line_shape: c.fit.line_shape,
                ..FitOptions::default()
            };
            let fit = fit_double_gaussian(&s, &opts).map_err(|e| e.at(Stage::Fit))?;
            let rec = fit.record();
            match format {
                Format::Json => out.json("fit.json", &rec)?,
                Format::Csv => {
                    // the covariance stays in the JSON form only
                    let mut v = serde_json::to_value(&rec)?;
                    let obj = v.as_object_mut().expect("record is an object");
                    obj.remove("covariance");
                    let bytes = csv_bytes(|b| {
                        let mut w = csv::Writer::from_writer(b);
                        w.write_record(obj.keys())?;
                        w.write_record(obj.values().map(|x| match x {
                            serde_json::Value::String(s) => s.clone(),
                            other => other.to_string(),
                        }))?;
                        w.flush()?;
                        Ok(())
                    })?;
                    out.add("fit.csv", bytes);
                }
            }
            let data = s.frequencies.iter().copied().zip(s.pl.iter().copied()).collect();
            let model = s.frequencies.iter().map(|&f| (f, fit.model(f))).collect();
            let svg = render("double-dip fit", "frequency (GHz)", "PL (cps)", &[Series::line("data", data), Series::line("fit", model)]);
            out.add("fit.svg", svg.into_bytes());
            if !fit.converged {
                out.failed_rows = 1;
            }
        }
        Scenario::InvertTemp => {
            let zfs = c.zfs();
            let est = match (&c.invert.spectrum_path, c.invert.d_ghz) {
                (Some(path), _) => {
                    let s = read_spectrum(c, path)?;
                    let fit = fit_double_gaussian(&s, &FitOptions::default()).map_err(|e| e.at(Stage::Fit))?;
                    temperature_from_fit(&fit, &zfs, c.spin.d_offset_ghz)?
                }
                (None, Some(d)) => {
                    let d = d - c.spin.d_offset_ghz;
                    let t = invert_zfs(&zfs, d).map_err(|e| e.at(Stage::Inversion))?;
                    ThermoEstimate {
                        temperature_k: t.value,
                        sigma_t_k: c.invert.d_sigma_ghz / zfs.slope_unchecked(t.value).abs(),
                        d_ghz: d,
                        extrapolated: t.extrapolated,
                    }
                }
                (None, None) => return Err(Error::Config("invert needs d_ghz or spectrum_path".into())),
            };
            match format {
                Format::Json => out.json("temperature.json", &est)?,
                Format::Csv => out.add("temperature.csv", estimate_csv(&est)?),
            }
        }
    }
    Ok(out)
}

/// Run the configured scenario and write its outputs plus a manifest into
/// `out_dir`. Nothing is written unless the whole computation succeeds.
/// Returns the file names written, manifest last.
pub fn run_to_dir(c: &ProtocolConfig, out_dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
    let out = compute(c, format)?;
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (name, bytes) in &out.files {
        let path = out_dir.join(name);
        write_atomic(&path, bytes)?;
        written.push(path);
    }
    let manifest = Manifest {
        tool: "levitrap".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario: c.scenario,
        seed: c.seed,
        format,
        outputs: out.files.iter().map(|(n, _)| n.clone()).collect(),
        failed_rows: out.failed_rows,
        config: c.clone(),
    };
    let path = out_dir.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_atomic(&path, text.as_bytes())?;
    written.push(path);
    Ok(written)
}
