use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use ffpc_core::assembly::{
    DEFAULT_FACET_ROC, DEFAULT_FIBER_INDEX, DEFAULT_GRIN_CORE_RADIUS, DEFAULT_GRIN_N0, DEFAULT_MM_CORE_RADIUS,
    DEFAULT_SM_MODE_FIELD_RADIUS,
};
use ffpc_core::cavity::Mirror;
use ffpc_core::io::{read_knife_edge, read_spectrum, write_coupling, write_eta_curve, write_spectrum, write_sweep};
use ffpc_core::*;

use crate::config::{Config, ConfigError};
use crate::{Cli, CliError, Command, Format};

pub const CONFIG_DIR_VAR: &str = "FFPC_CONFIG_DIR";
const DEFAULT_N_MAX: u64 = 12;

type Res<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Res<()> {
    match &cli.command {
        Command::Design => design(cli, &load_config(cli)?),
        Command::Mode => mode(cli, &load_config(cli)?),
        Command::Match => matching(cli, &load_config(cli)?),
        Command::Sweep => sweep(cli, &load_config(cli)?),
        Command::Spectrum => spectrum(cli, load_config(cli)?),
        Command::Analyze { input } => analyze_file(cli, input),
        Command::FitBeam { input } => fit_beam_file(cli, input),
        Command::CalibrateGrin => calibrate(cli, &load_config(cli)?),
    }
}

fn config_path(cli: &Cli) -> Option<PathBuf> {
    cli.config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_DIR_VAR).map(|d| PathBuf::from(d).join("ffpc.conf")))
}

fn load_config(cli: &Cli) -> Res<Config> {
    let path = config_path(cli)
        .ok_or_else(|| CliError::Usage(format!("no configuration: pass --config or set {CONFIG_DIR_VAR}")))?;
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    Ok(Config::parse(&text)?)
}

fn header(name: &str, cfg: &Config) -> Vec<String> {
    let mut lines = vec![format!("; ffpc {name} {}", env!("CARGO_PKG_VERSION"))];
    lines.extend(cfg.render());
    lines
}

fn emit(cli: &Cli, write: impl FnOnce(&mut dyn Write) -> Res<()>) -> Res<()> {
    match &cli.out {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            write(&mut f)?;
            f.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

/// `key = value` report preceded by the configuration as `#` comments.
fn emit_report(cli: &Cli, comments: &[String], lines: &[String]) -> Res<()> {
    emit(cli, |w| {
        if cli.out.is_some() {
            for c in comments {
                writeln!(w, "# {c}")?;
            }
        }
        for l in lines {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })
}

fn wavelength(cfg: &Config) -> Res<f64> {
    Ok(cfg.require("optics", "wavelength")?)
}

fn lensing(cfg: &Config) -> Res<bool> {
    Ok(cfg.flag("assembly", "include_facet_lensing")?.unwrap_or(true))
}

fn assembly(cfg: &Config, lengths_required: bool) -> Res<AssemblySpec> {
    let length = |section: &str| -> std::result::Result<f64, ConfigError> {
        if lengths_required {
            cfg.require(section, "length")
        } else {
            cfg.quantity_or(section, "length", 0.0)
        }
    };
    let sm = "assembly.single_mode";
    let grin = "assembly.graded_index";
    let mm = "assembly.multimode_spacer";
    let segments = [
        FiberSegmentSpec::SingleMode {
            length: length(sm)?,
            mode_field_radius: cfg.quantity_or(sm, "mode_field_radius", DEFAULT_SM_MODE_FIELD_RADIUS)?,
            index: cfg.quantity_or(sm, "index", DEFAULT_FIBER_INDEX)?,
        },
        FiberSegmentSpec::GradedIndex {
            length: length(grin)?,
            profile: GrinProfile::new(
                cfg.quantity_or(grin, "n0", DEFAULT_GRIN_N0)?,
                cfg.quantity_or(grin, "g", ffpc_core::assembly::CALIBRATED_GRIN_G)?,
                cfg.quantity_or(grin, "core_radius", DEFAULT_GRIN_CORE_RADIUS)?,
            )?,
        },
        FiberSegmentSpec::MultimodeSpacer {
            length: length(mm)?,
            index: cfg.quantity_or(mm, "index", DEFAULT_FIBER_INDEX)?,
            core_radius: cfg.quantity_or(mm, "core_radius", DEFAULT_MM_CORE_RADIUS)?,
        },
    ];
    Ok(AssemblySpec::new(
        &segments,
        cfg.quantity_or("assembly", "facet_roc", DEFAULT_FACET_ROC)?,
        cfg.quantity_or("assembly", "splice_mfd_scale", ffpc_core::assembly::CALIBRATED_SPLICE_MFD_SCALE)?,
    )?)
}

fn target(cfg: &Config) -> Res<BeamState> {
    Ok(BeamState::in_vacuum(
        cfg.require("target", "waist_radius")?,
        cfg.require("target", "waist_position")?,
        wavelength(cfg)?,
    )?)
}

fn input_beam(cfg: &Config) -> Res<BeamState> {
    let lambda = wavelength(cfg)?;
    match cfg.word("input", "source") {
        Some("assembly") => Ok(output_mode(&assembly(cfg, true)?, lambda, lensing(cfg)?)?),
        Some("single_mode") => {
            let w = cfg.quantity_or("assembly.single_mode", "mode_field_radius", DEFAULT_SM_MODE_FIELD_RADIUS)?;
            Ok(BeamState::in_vacuum(w, 0.0, lambda)?)
        }
        Some("beam") => Ok(BeamState::in_vacuum(
            cfg.require("input", "waist_radius")?,
            cfg.require("input", "waist_position")?,
            lambda,
        )?),
        _ => Err(ConfigError::missing("input", "source").into()),
    }
}

fn geometry(cfg: &Config, length: f64) -> Res<CavityGeometry> {
    let mut g = CavityGeometry::new(length, cfg.require("cavity", "r1")?, cfg.require("cavity", "r2")?, wavelength(cfg)?)?;
    g.aperture1 = cfg.quantity_or("cavity", "aperture1", g.aperture1)?;
    g.aperture2 = cfg.quantity_or("cavity", "aperture2", g.aperture2)?;
    g.t1 = cfg.quantity_or("cavity", "t1", g.t1)?;
    g.t2 = cfg.quantity_or("cavity", "t2", g.t2)?;
    g.loss1 = cfg.quantity_or("cavity", "loss1", g.loss1)?;
    g.loss2 = cfg.quantity_or("cavity", "loss2", g.loss2)?;
    Ok(g.validated()?)
}

fn cavity_mode(cfg: &Config) -> Res<CavityMode> {
    Ok(solve_mode(&geometry(cfg, cfg.require("cavity", "length")?)?)?)
}

fn n_max(cfg: &Config) -> Res<u32> {
    let n = cfg.integer("decomposition", "n_max")?.unwrap_or(DEFAULT_N_MAX);
    u32::try_from(n).map_err(|_| CliError::Usage(format!("[decomposition] n_max = {n} is too large")))
}

fn scan_config(cfg: &Config, fsr: f64, seed: Option<u64>) -> Res<ScanConfig> {
    let mut s = ScanConfig::one_fsr(fsr);
    s.span = cfg.quantity_or("scan", "span", s.span)?;
    if let Some(n) = cfg.integer("scan", "samples")? {
        s.samples = n as usize;
    }
    s.sideband_frequency = cfg.quantity_or("scan", "sideband_frequency", s.sideband_frequency)?;
    s.sideband_fraction = cfg.quantity_or("scan", "sideband_fraction", s.sideband_fraction)?;
    s.noise_rms = cfg.quantity_or("scan", "noise_rms", s.noise_rms)?;
    s.scan_stretch = cfg.quantity_or("scan", "scan_stretch", s.scan_stretch)?;
    s.double_sided = cfg.flag("scan", "double_sided")?.unwrap_or(false);
    s.finesse_tolerance = cfg.quantity_or("scan", "finesse_tolerance", s.finesse_tolerance)?;
    s.seed = match seed {
        Some(v) => v,
        None => cfg.integer("scan", "seed")?.unwrap_or(0),
    };
    s.validate()?;
    Ok(s)
}

fn um(v: f64) -> String {
    format!("{:.3}", v * 1e6)
}

fn design(cli: &Cli, cfg: &Config) -> Res<()> {
    let template = assembly(cfg, false)?;
    let mut c = DesignConstraints::first_half_pitch(&template.grin_profile());
    c.grin_length = (
        cfg.quantity_or("design", "grin_min", c.grin_length.0)?,
        cfg.quantity_or("design", "grin_max", c.grin_length.1)?,
    );
    c.mm_length = (
        cfg.quantity_or("design", "mm_min", c.mm_length.0)?,
        cfg.quantity_or("design", "mm_max", c.mm_length.1)?,
    );
    let d = design_assembly(&target(cfg)?, &template, &c, lensing(cfg)?)?;
    let lines = vec![
        format!("grin_length_um = {}", um(d.grin_length)),
        format!("mm_length_um = {}", um(d.mm_length)),
        format!("residual_w0_nm = {:.3e}", d.residual.waist_radius * 1e9),
        format!("residual_z0_nm = {:.3e}", d.residual.waist_position * 1e9),
    ];
    emit_report(cli, &header("design", cfg), &lines)
}

fn mode(cli: &Cli, cfg: &Config) -> Res<()> {
    let m = cavity_mode(cfg)?;
    let f = finesse(&m, ModeOrder::FUNDAMENTAL)?;
    let lines = vec![
        format!("waist_radius_um = {}", um(m.waist_radius)),
        format!("waist_position_um = {}", um(m.waist_position)),
        format!("spot_mirror1_um = {}", um(m.spot_on(Mirror::One))),
        format!("spot_mirror2_um = {}", um(m.spot_on(Mirror::Two))),
        format!("g1 = {:.6}", m.g1),
        format!("g2 = {:.6}", m.g2),
        format!("fsr_GHz = {:.6}", m.fsr / 1e9),
        format!("gouy_rad = {:.6}", m.gouy),
        format!("finesse = {:.1}", f.finesse),
        format!("linewidth_MHz = {:.6}", f.linewidth / 1e6),
        format!("clip1_ppm = {:.3e}", f.clip1 * 1e6),
        format!("clip2_ppm = {:.3e}", f.clip2 * 1e6),
    ];
    emit_report(cli, &header("mode", cfg), &lines)
}

fn matching(cli: &Cli, cfg: &Config) -> Res<()> {
    let m = cavity_mode(cfg)?;
    let input = input_beam(cfg)?;
    let set = decompose(&input, &m, n_max(cfg)?)?;
    let mut comments = header("match", cfg);
    comments.push(format!("; eta00 = {}", eta00(&input, &m)?));
    comments.push(format!("; residual = {:e}", set.residual()));
    emit(cli, |w| Ok(write_coupling(w, &comments, &set)?))
}

fn sweep(cli: &Cli, cfg: &Config) -> Res<()> {
    let start = cfg.require("sweep", "start")?;
    let lengths = length_grid(start, cfg.quantity_or("sweep", "stop", start)?, cfg.require("sweep", "step")?)?;
    let template = geometry(cfg, start)?;
    let opts = SweepOptions {
        n_max: n_max(cfg)?,
        double_sided: cfg.flag("sweep", "double_sided")?.unwrap_or(false),
    };
    let rows = sweep_length(&input_beam(cfg)?, &template, &lengths, opts)?;
    let comments = header("sweep", cfg);
    emit(cli, |w| {
        match cli.format {
            Format::Csv => write_sweep(w, &comments, &rows)?,
            Format::Eta => write_eta_curve(w, &comments, &rows)?,
        }
        Ok(())
    })
}

fn spectrum(cli: &Cli, mut cfg: Config) -> Res<()> {
    let m = cavity_mode(&cfg)?;
    let scan = scan_config(&cfg, m.fsr, cli.seed)?;
    cfg.set("scan", "seed", scan.seed.to_string())?;
    let set = decompose(&input_beam(&cfg)?, &m, n_max(&cfg)?)?;
    let (model, tracked) = clipped_model(&m, &set)?;
    let sp = synthesize(&m, &tracked, &model, &scan)?;
    let comments = header("spectrum", &cfg);
    emit(cli, |w| Ok(write_spectrum(w, &comments, &sp)?))
}

fn leading_comments(text: &str) -> String {
    text.lines()
        .take_while(|l| l.trim_start().starts_with('#'))
        .map(|l| l.trim_start().trim_start_matches('#').trim())
        .collect::<Vec<_>>()
        .join("\n")
}

/// `--config` if given, otherwise the configuration embedded in `text`.
fn embedded_config(cli: &Cli, text: &str) -> Res<Config> {
    if cli.config.is_some() {
        return load_config(cli);
    }
    Ok(Config::parse(&leading_comments(text))?)
}

fn analyze_file(cli: &Cli, input: &PathBuf) -> Res<()> {
    let text = std::fs::read_to_string(input)?;
    let cfg = embedded_config(cli, &text)?;
    let fsr = cfg.quantity("cavity", "length")?.map(ffpc_core::cavity::fsr);
    let (sp, _) = read_spectrum(&text, fsr)?;
    let span = sp.detuning[sp.len() - 1] - sp.detuning[0];
    let mut scan = scan_config(&cfg, fsr.unwrap_or(span), None)?;
    scan.samples = sp.len();
    let a = analyze(&sp, &scan)?;
    let mut lines = vec![
        format!("peaks = {}", a.mode_peaks().count()),
        format!("beta = {:.6}", a.beta),
        format!("linewidth_MHz = {:.6}", a.linewidth / 1e6),
    ];
    if let Some(f) = a.finesse {
        lines.push(format!("finesse = {f:.1}"));
    }
    lines.push(format!("calibrated = {}", a.calibrated));
    lines.push(format!("axis_scale = {:.6}", a.axis_scale));
    lines.push(format!("uniform_finesse = {}", a.uniform_finesse));
    for warning in &a.warnings {
        lines.push(format!("warning = {warning}"));
    }
    lines.push("center_MHz,height,fwhm_MHz,fwhm_std_MHz,prominence,sideband".into());
    for p in &a.peaks {
        lines.push(format!(
            "{:.6},{:.6e},{:.6},{:.3e},{:.6e},{}",
            p.center / 1e6,
            p.height,
            p.fwhm / 1e6,
            p.fwhm_std / 1e6,
            p.prominence,
            p.sideband
        ));
    }
    emit_report(cli, &header("analyze", &cfg), &lines)
}

fn fit_beam_file(cli: &Cli, input: &PathBuf) -> Res<()> {
    let text = std::fs::read_to_string(input)?;
    let cfg = embedded_config(cli, &text)?;
    let (data, _) = read_knife_edge(&text)?;
    let fit = fit_beam(&data, wavelength(&cfg)?)?;
    // 95% two-sided normal interval.
    let z = 1.959_964;
    let lines = vec![
        format!("waist_radius_um = {:.4}", fit.beam.waist_radius * 1e6),
        format!("waist_radius_ci95_um = {:.4}", z * fit.waist_radius_std() * 1e6),
        format!("waist_position_um = {:.3}", fit.beam.waist_position * 1e6),
        format!("waist_position_ci95_um = {:.3}", z * fit.waist_position_std() * 1e6),
        format!("monotone = {}", data.is_monotone()),
        format!("iterations = {}", fit.iterations),
    ];
    emit_report(cli, &header("fit-beam", &cfg), &lines)
}

fn calibrate(cli: &Cli, cfg: &Config) -> Res<()> {
    let c = calibrate_grin(&assembly(cfg, true)?, &target(cfg)?, lensing(cfg)?)?;
    let lines = vec![
        format!("g_per_m = {:.6}", c.profile.g),
        format!("half_pitch_um = {}", um(c.profile.half_pitch())),
        format!("splice_mfd_scale = {:.6}", c.splice_mfd_scale),
        format!("residual_w0_nm = {:.3e}", c.residual.waist_radius * 1e9),
        format!("residual_z0_nm = {:.3e}", c.residual.waist_position * 1e9),
    ];
    emit_report(cli, &header("calibrate-grin", cfg), &lines)
}
