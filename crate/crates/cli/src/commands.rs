use serde::Serialize;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};
use crate::manifest::{config_digest, OutputFile, RunManifest};
use crate::run_config::RunConfig;
use fesim_core::channel_sim::{derive_seed, ChipSimulator, RegisterMap};
use fesim_core::characterization::{
    enc_from_noise, extract_gain, fit_rice, fit_scurve, measure_time_walk, rice_constant_for, run_noise_occupancy,
    run_threshold_scan, sha256_hex, FitReport, SCurveFit, ScanCurve,
};
use fesim_core::noise_model::{EncSweep, InputTransistor, SliceOptimum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn as_str(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(CliError::config(format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    EncSweep,
    Scan,
    RegistersDump,
    /// Apply a register file to the configuration.
    RegistersLoad(Option<PathBuf>),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::EncSweep => "enc-sweep",
            Command::Scan => "scan",
            Command::RegistersDump => "registers-dump",
            Command::RegistersLoad(_) => "registers-load",
        }
    }

    pub fn from_name(name: &str) -> CliResult<Self> {
        match name {
            "enc-sweep" => Ok(Command::EncSweep),
            "scan" => Ok(Command::Scan),
            "registers-dump" => Ok(Command::RegistersDump),
            "registers-load" => Ok(Command::RegistersLoad(None)),
            other => Err(CliError::config(format!("unknown command `{other}` in manifest"))),
        }
    }
}

pub struct RunContext {
    pub out_dir: PathBuf,
    pub format: Format,
    pub seed: u64,
}

struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<OutputFile>,
}

impl Outputs<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.push(OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write(name, text.as_bytes())
    }

    fn rows<T: Serialize>(&mut self, stem: &str, format: Format, rows: &[T]) -> CliResult<()> {
        match format {
            Format::Json => self.json(&format!("{stem}.json"), &rows),
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                for r in rows {
                    w.serialize(r).map_err(|e| CliError::runtime(e.to_string()))?;
                }
                let bytes = w.into_inner().map_err(|e| CliError::runtime(e.to_string()))?;
                self.write(&format!("{stem}.csv"), &bytes)
            }
        }
    }

    fn curve(&mut self, stem: &str, format: Format, curve: &ScanCurve) -> CliResult<()> {
        match format {
            Format::Json => self.json(&format!("{stem}.json"), curve),
            Format::Csv => self.write(&format!("{stem}.csv"), curve.to_csv_string()?.as_bytes()),
        }
    }
}

/// Runs one command and writes its outputs plus `manifest.json` into the
/// context's output directory.
pub fn execute(command: &Command, config: &RunConfig, ctx: &RunContext) -> CliResult<RunManifest> {
    std::fs::create_dir_all(&ctx.out_dir).map_err(|e| CliError::io(&ctx.out_dir, e))?;
    let mut config = config.clone();
    config.seed = Some(ctx.seed);
    let mut out = Outputs {
        dir: &ctx.out_dir,
        files: Vec::new(),
    };
    match command {
        Command::EncSweep => enc_sweep(&config, ctx, &mut out)?,
        Command::Scan => scan(&config, ctx, &mut out)?,
        Command::RegistersDump => {
            let regs = RegisterMap::from_chip(&config.resolved_chip()?)?;
            out.write("registers.toml", regs.to_toml_string()?.as_bytes())?;
        }
        Command::RegistersLoad(file) => {
            if let Some(path) = file {
                let text =
                    std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
                let regs = RegisterMap::from_toml_str(&text).map_err(|e| CliError::from(e).context(path.display()))?;
                let mut chip = config.resolved_chip()?;
                regs.apply(&mut chip)?;
                config.chip = chip;
                config.rc_code = None;
            }
            out.write("config.toml", config.to_toml_string()?.as_bytes())?;
        }
    }
    let manifest = RunManifest {
        command: command.name().to_string(),
        config_digest: config_digest(command.name(), ctx.format.as_str(), ctx.seed, &config)?,
        seed: ctx.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        format: ctx.format.as_str().to_string(),
        outputs: out.files,
        config,
    };
    manifest.write(&ctx.out_dir)?;
    Ok(manifest)
}

#[derive(Serialize)]
struct GridRow {
    w_um: f64,
    l_um: f64,
    id_ma: f64,
    tp_ns: f64,
    c_pf: f64,
    i_ua: f64,
    enc_p: f64,
    enc_s: f64,
    enc_tot: f64,
}

#[derive(Serialize)]
struct OptimumRow {
    w_um: f64,
    id_ma: f64,
    #[serde(flatten)]
    optimum: SliceOptimum,
}

#[derive(Serialize)]
struct SweepSummary {
    order: u32,
    points: usize,
    optima: Vec<OptimumRow>,
}

fn enc_sweep(config: &RunConfig, ctx: &RunContext, out: &mut Outputs) -> CliResult<()> {
    let spec = config
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::config("enc-sweep needs a [sweep] section"))?;
    let sweep = EncSweep {
        order: spec.order,
        peaking_times: spec.tp_ns.values("sweep.tp_ns")?,
        capacitances: spec.c_pf.values("sweep.c_pf")?,
        leakages: spec.i_ua.values("sweep.i_ua")?,
    };
    sweep.validate()?;
    let base: InputTransistor = config.transistor;
    let widths = spec.width_um.clone().unwrap_or_else(|| vec![base.width]);
    let drains = spec.drain_ma.clone().unwrap_or_else(|| vec![base.drain_current]);
    if widths.is_empty() || drains.is_empty() {
        return Err(CliError::config(
            "sweep: width_um and drain_ma must be non-empty when given",
        ));
    }
    let mut rows = Vec::new();
    let mut optima = Vec::new();
    for &w in &widths {
        for &id in &drains {
            let tr = InputTransistor {
                width: w,
                drain_current: id,
                ..base
            };
            let r = sweep.run(&tr)?;
            rows.extend(r.points.iter().map(|p| GridRow {
                w_um: w,
                l_um: tr.length,
                id_ma: id,
                tp_ns: p.tp_ns,
                c_pf: p.c_pf,
                i_ua: p.i_ua,
                enc_p: p.enc_p,
                enc_s: p.enc_s,
                enc_tot: p.enc_tot,
            }));
            optima.extend(r.optima.into_iter().map(|o| OptimumRow {
                w_um: w,
                id_ma: id,
                optimum: o,
            }));
        }
    }
    out.rows("enc_grid", ctx.format, &rows)?;
    out.json(
        "enc_summary.json",
        &SweepSummary {
            order: spec.order,
            points: rows.len(),
            optima,
        },
    )
}

#[derive(Serialize)]
struct ChargeFit {
    q_fc: f64,
    curve: String,
    report: FitReport,
}

#[derive(Serialize)]
struct RcGain {
    rc_code: u8,
    peaking_time_ns: f64,
    fits: Vec<ChargeFit>,
    gain: FitReport,
}

#[derive(Serialize)]
struct RiceSummary {
    report: FitReport,
    expected_f0_mhz: f64,
    peak_statistics_ok: bool,
    low_statistics_thresholds_mv: Vec<f64>,
}

#[derive(Serialize)]
struct TotRow {
    q_fc: f64,
    tot_ns: f64,
    tot_err_ns: f64,
}

#[derive(Serialize)]
struct WalkSummary {
    walk_ns: f64,
    threshold_mv: f64,
    report: FitReport,
    time_over_threshold: Vec<TotRow>,
}

fn scan(config: &RunConfig, ctx: &RunContext, out: &mut Outputs) -> CliResult<()> {
    if config.threshold_scan.is_none() && config.noise_scan.is_none() && config.time_walk.is_none() {
        return Err(CliError::config(
            "scan needs at least one of [threshold_scan], [noise_scan], [time_walk]",
        ));
    }
    let chip = config.resolved_chip()?;
    let seed = ctx.seed;

    if let Some(spec) = &config.threshold_scan {
        if spec.charges_fc.is_empty() {
            return Err(CliError::config("threshold_scan.charges_fc: empty list"));
        }
        let base_rc = chip.channel(spec.channel)?.rc_code;
        let codes = spec.rc_codes.clone().unwrap_or_else(|| vec![base_rc]);
        let mut settings = Vec::new();
        for (ri, &rc) in codes.iter().enumerate() {
            let mut c = chip.clone();
            c.set_rc_code(rc);
            let sim = ChipSimulator::new(c)?;
            let gain_cfg = sim.channel(spec.channel)?.gain;
            let mut fits: Vec<(f64, SCurveFit)> = Vec::new();
            let mut reports = Vec::new();
            for (qi, &q) in spec.charges_fc.iter().enumerate() {
                let thresholds = spec.thresholds_for(gain_cfg, q)?;
                let point_seed = derive_seed(seed, (ri * 100 + qi) as u64);
                let (curve, _) = run_threshold_scan(&sim, spec.channel, q, &thresholds, spec.n_inj, point_seed)?;
                let stem = format!("scurve_rc{rc}_q{q:.2}");
                out.curve(&stem, ctx.format, &curve)?;
                let fit = fit_scurve(&curve).map_err(|e| CliError::from(e).context(format!("S-curve fit {stem}")))?;
                reports.push(ChargeFit {
                    q_fc: q,
                    curve: format!("{stem}.{}", ctx.format.as_str()),
                    report: FitReport::scurve(&curve, &fit)?,
                });
                fits.push((q, fit));
            }
            let gain = extract_gain(&fits).map_err(|e| CliError::from(e).context(format!("gain fit rc{rc}")))?;
            let mean_sigma = fits.iter().map(|(_, f)| f.sigma).sum::<f64>() / fits.len() as f64;
            let enc = enc_from_noise(mean_sigma, gain.gain)?;
            let medians: Vec<(f64, f64)> = fits.iter().map(|(q, f)| (*q, f.median)).collect();
            settings.push(RcGain {
                rc_code: rc,
                peaking_time_ns: sim.shape(spec.channel)?.peaking_time(),
                fits: reports,
                gain: FitReport::gain(&medians, &gain, Some(enc)),
            });
        }
        out.json("scurve_fits.json", &settings)?;
    }

    if let Some(spec) = &config.noise_scan {
        let sim = ChipSimulator::new(chip.clone())?;
        let thresholds = spec.thresholds_mv.values("noise_scan.thresholds_mv")?;
        let scan = run_noise_occupancy(
            &sim,
            spec.channel,
            &thresholds,
            spec.duration_ns,
            derive_seed(seed, 5000),
        )?;
        out.curve("noise_occupancy", ctx.format, &scan.curve)?;
        let shape = sim.shape(spec.channel)?;
        let kappa = rice_constant_for(&chip.noise, shape)?;
        let fit = fit_rice(&scan.curve, kappa).map_err(|e| CliError::from(e).context("Rice fit"))?;
        let summary = RiceSummary {
            report: FitReport::rice(&scan.curve, &fit)?,
            expected_f0_mhz: kappa / shape.peaking_time() * 1e3,
            peak_statistics_ok: scan.peak_statistics_ok(),
            low_statistics_thresholds_mv: scan.flagged().iter().map(|&i| thresholds[i]).collect(),
        };
        out.json("rice_fit.json", &summary)?;
    }

    if let Some(spec) = &config.time_walk {
        let sim = ChipSimulator::new(chip.clone())?;
        let tw = measure_time_walk(
            &sim,
            spec.channel,
            &spec.charges_fc,
            spec.threshold_fc,
            spec.n_inj,
            derive_seed(seed, 6000),
        )?;
        out.curve("time_walk", ctx.format, &tw.curve)?;
        let summary = WalkSummary {
            walk_ns: tw.walk,
            threshold_mv: tw.threshold_mv,
            report: FitReport::time_walk(&tw.curve, tw.walk, tw.threshold_mv)?,
            time_over_threshold: spec
                .charges_fc
                .iter()
                .zip(tw.tot.iter().zip(&tw.tot_err))
                .map(|(&q, (&t, &e))| TotRow {
                    q_fc: q,
                    tot_ns: t,
                    tot_err_ns: e,
                })
                .collect(),
        };
        out.json("time_walk.json", &summary)?;
    }
    Ok(())
}

/// Result of re-running a stored manifest.
#[derive(Debug)]
pub struct RerunReport {
    pub manifest: RunManifest,
    pub mismatched: Vec<String>,
}

pub fn rerun(stored: &RunManifest, out_dir: &Path) -> CliResult<RerunReport> {
    let command = Command::from_name(&stored.command)?;
    let ctx = RunContext {
        out_dir: out_dir.to_path_buf(),
        format: Format::parse(&stored.format)?,
        seed: stored.seed,
    };
    let manifest = execute(&command, &stored.config, &ctx)?;
    let mut mismatched: Vec<String> = stored
        .outputs
        .iter()
        .filter(|o| !manifest.outputs.contains(o))
        .map(|o| o.path.clone())
        .collect();
    if manifest.config_digest != stored.config_digest {
        mismatched.push("config_digest".into());
    }
    Ok(RerunReport { manifest, mismatched })
}
