use std::fs;
use std::path::{Path, PathBuf};

use microexp_core::ablation::{run_ablation, AblationGrid};
use microexp_core::dataio::clip::load_clip;
use microexp_core::dataio::index::manifest_path;
use microexp_core::dataio::samples::{face_crop_landmarks, read_landmarks_for, sample_from_clip};
use microexp_core::dataio::{load_subset, split_dataset, synth_dataset, DatasetIndex, Subset, SynthParams, TemporalMode};
use microexp_core::models::{build, init_params, shape_report};
use microexp_core::saliency::{
    binarize, export_frames, input_gradient, region_energy_report, SaliencySidecar, SaliencySign,
};
use microexp_core::trainer::metrics::format_percent;
use microexp_core::trainer::report::MetricsReport;
use microexp_core::trainer::{evaluate, load_checkpoint, train as train_model, Checkpoint, TrainConfig};
use microexp_core::{ArchKind, ArchSpec, Precision, Scalar};
use serde::Serialize;

use crate::config::{echo_config, ArchConfig, RunConfig};
use crate::{ArchFlags, CliError, KindArg, PrecisionArg, SignArg, TemporalArg, TrainFlags};

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn temporal_mode(t: TemporalArg) -> TemporalMode {
    match t {
        TemporalArg::Uniform => TemporalMode::Uniform,
        TemporalArg::Head => TemporalMode::Head,
    }
}

impl ArchFlags {
    fn apply(&self, arch: &mut ArchConfig) {
        if let Some(k) = self.kind {
            arch.kind = Some(match k {
                KindArg::Stcnn => ArchKind::Stcnn,
                KindArg::FuseIntermediate => ArchKind::FuseIntermediate,
                KindArg::FuseLate => ArchKind::FuseLate,
            });
        }
        if let Some(d) = self.depth {
            arch.depth = Some(d);
        }
        if let Some(h) = self.hw {
            arch.input_hw = Some(h);
        }
        if let Some(k) = self.kernel {
            arch.kernel = Some(k);
        }
        if let Some(f) = self.filters {
            arch.filters = Some(f);
        }
        if let Some(h) = &self.hidden {
            arch.hidden = Some(h.clone());
        }
    }
}

impl TrainFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        let t = &mut cfg.train;
        if let Some(v) = self.seed {
            t.seed = v;
        }
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.lr {
            t.learning_rate = v;
        }
        if let Some(p) = self.precision {
            t.precision = match p {
                PrecisionArg::F32 => Precision::F32,
                PrecisionArg::F64 => Precision::F64,
            };
        }
        if let Some(v) = self.eval_every {
            t.eval_every = v;
        }
        if let Some(v) = self.split_fraction {
            cfg.data.split_fraction = v;
        }
        if let Some(v) = self.split_seed {
            cfg.data.split_seed = Some(v);
        }
        if let Some(v) = self.sampling {
            cfg.data.temporal = Some(temporal_mode(v));
        }
    }
}

pub fn synth(classes: usize, per_class: usize, hw: usize, depth: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct SynthEcho {
        synth: SynthRecord,
    }
    #[derive(Serialize)]
    struct SynthRecord {
        classes: usize,
        per_class: usize,
        hw: usize,
        depth: usize,
        seed: u64,
    }
    let index = synth_dataset(
        SynthParams {
            classes,
            per_class,
            hw,
            depth,
            seed,
        },
        out,
    )?;
    echo_config(
        out,
        &SynthEcho {
            synth: SynthRecord {
                classes,
                per_class,
                hw,
                depth,
                seed,
            },
        },
    )?;
    println!(
        "wrote {} clips ({classes} classes, {hw}x{hw}x{depth}) to {}",
        index.entries.len(),
        out.display()
    );
    Ok(())
}

pub fn inspect(config: Option<&Path>, flags: &ArchFlags) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(config)?;
    flags.apply(&mut cfg.arch);
    let spec = cfg.arch.resolve(None)?;
    let report = shape_report(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    println!("{} (input {} per stream)", spec.kind, spec.input_shape().map_err(|e| CliError::Usage(e.to_string()))?);
    println!("{report}");
    if !report.is_buildable() {
        println!("architecture is UNBUILDABLE for this input");
    }
    Ok(())
}

/// Loads the manifest, splitting and persisting the split when it has none.
fn load_split_data(cfg: &mut RunConfig, data: Option<&Path>) -> Result<DatasetIndex, CliError> {
    let path = data
        .map(Path::to_path_buf)
        .or_else(|| cfg.data.manifest.clone())
        .ok_or_else(|| CliError::Usage("no dataset given (use --data or [data] manifest)".into()))?;
    let mut index = DatasetIndex::load(&path)?;
    if !index.is_split() {
        let seed = cfg.data.split_seed.unwrap_or(cfg.train.seed);
        split_dataset(&mut index, cfg.data.split_fraction, seed).map_err(|e| CliError::Usage(e.to_string()))?;
        index.save(&manifest_path(&path))?;
    }
    if let Some(t) = cfg.data.temporal {
        index.temporal = t;
    }
    cfg.data.manifest = Some(fs::canonicalize(manifest_path(&path)).unwrap_or(path));
    cfg.data.split_seed = index.split_seed;
    if let Some(f) = index.split_fraction {
        cfg.data.split_fraction = f;
    }
    cfg.data.temporal = Some(index.temporal);
    Ok(index)
}

pub fn train(
    config: Option<&Path>,
    data: Option<&Path>,
    out: &Path,
    arch_flags: &ArchFlags,
    train_flags: &TrainFlags,
) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(config)?;
    arch_flags.apply(&mut cfg.arch);
    train_flags.apply(&mut cfg);
    cfg.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let index = load_split_data(&mut cfg, data)?;
    let spec = cfg.arch.resolve(Some(index.classes.len()))?;
    cfg.arch = ArchConfig::from_spec(&spec);
    create_dir(out)?;
    let ckpt_path = out.join("checkpoint.mex3");
    cfg.train.checkpoint = Some(ckpt_path.clone());
    echo_config(out, &cfg)?;

    let log = match cfg.train.precision {
        Precision::F32 => train_typed::<f32>(&spec, &index, &cfg.train)?,
        Precision::F64 => train_typed::<f64>(&spec, &index, &cfg.train)?,
    };
    let report = MetricsReport::new(&index.classes, &log)?;
    write_file(&out.join("metrics.txt"), report.render())?;
    write_file(&out.join("metrics.toml"), report.to_toml()?)?;
    println!("final val accuracy: {}", format_percent(report.final_val_accuracy));
    println!("checkpoint: {}", ckpt_path.display());
    Ok(())
}

fn train_typed<T: Scalar>(
    spec: &ArchSpec,
    index: &DatasetIndex,
    cfg: &TrainConfig,
) -> Result<microexp_core::trainer::EpochLog, CliError> {
    let mut g = build::<T>(spec)?;
    init_params(&mut g, cfg.seed);
    let (_, log) = train_model(&mut g, spec, index, cfg, &mut |row| {
        let opt = |v: Option<f64>| v.map(format_percent).unwrap_or_else(|| "-".into());
        println!(
            "epoch {:>4}  loss {:.6}  train {}  val {}  ({:.1}s)",
            row.epoch,
            row.train_loss,
            opt(row.train_accuracy),
            opt(row.val_accuracy),
            row.wall_time
        );
    })?;
    Ok(log)
}

pub fn eval(ckpt_path: &Path, data: &Path) -> Result<(), CliError> {
    let ckpt = load_checkpoint(ckpt_path)?;
    let index = DatasetIndex::load(data)?;
    if index.classes.len() != ckpt.arch.num_classes {
        return Err(CliError::Runtime(format!(
            "checkpoint has {} classes, dataset has {}",
            ckpt.arch.num_classes,
            index.classes.len()
        )));
    }
    if !index.is_split() {
        return Err(CliError::Runtime("dataset has no train/val split".into()));
    }
    let matrix = match ckpt.precision {
        Precision::F32 => eval_typed::<f32>(&ckpt, &index)?,
        Precision::F64 => eval_typed::<f64>(&ckpt, &index)?,
    };
    println!(
        "accuracy: {} ({}/{})",
        format_percent(matrix.accuracy()),
        matrix.trace(),
        matrix.total()
    );
    print!("{}", matrix.render(&index.classes));
    Ok(())
}

fn eval_typed<T: Scalar>(
    ckpt: &Checkpoint,
    index: &DatasetIndex,
) -> Result<microexp_core::trainer::ConfusionMatrix, CliError> {
    let g = ckpt.build_graph::<T>()?;
    let val = load_subset::<T>(index, Subset::Val, &ckpt.arch)?;
    Ok(evaluate(&g, &val, ckpt.arch.num_classes)?.1)
}

#[allow(clippy::too_many_arguments)]
pub fn ablate(
    config: Option<&Path>,
    data: Option<&Path>,
    out: &Path,
    spatial: Vec<usize>,
    temporal: Vec<usize>,
    jobs: usize,
    arch_flags: &ArchFlags,
    train_flags: &TrainFlags,
) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct AblationEcho<'a> {
        grid: &'a AblationGrid,
        jobs: usize,
        #[serde(flatten)]
        run: &'a RunConfig,
    }
    if spatial.is_empty() || temporal.is_empty() || spatial.contains(&0) || temporal.contains(&0) {
        return Err(CliError::Usage("ablation grid needs positive spatial and temporal extents".into()));
    }
    let grid = AblationGrid { spatial, temporal };
    let mut cfg = RunConfig::load(config)?;
    arch_flags.apply(&mut cfg.arch);
    train_flags.apply(&mut cfg);
    cfg.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let index = load_split_data(&mut cfg, data)?;
    let base = cfg.arch.resolve(Some(index.classes.len()))?;
    cfg.arch = ArchConfig::from_spec(&base);
    create_dir(out)?;
    echo_config(
        out,
        &AblationEcho {
            grid: &grid,
            jobs,
            run: &cfg,
        },
    )?;
    let report = match cfg.train.precision {
        Precision::F32 => ablate_typed::<f32>(&base, &cfg.train, &grid, &index, jobs)?,
        Precision::F64 => ablate_typed::<f64>(&base, &cfg.train, &grid, &index, jobs)?,
    };
    let text = report.render();
    write_file(&out.join("ablation.txt"), &text)?;
    write_file(&out.join("ablation.toml"), report.to_toml()?)?;
    print!("{text}");
    Ok(())
}

fn ablate_typed<T: Scalar>(
    base: &ArchSpec,
    cfg: &TrainConfig,
    grid: &AblationGrid,
    index: &DatasetIndex,
    jobs: usize,
) -> Result<microexp_core::ablation::AblationReport, CliError> {
    let train = load_subset::<T>(index, Subset::Train, base)?;
    let val = load_subset::<T>(index, Subset::Val, base)?;
    Ok(run_ablation(base, cfg, grid, &train, &val, jobs)?)
}

pub struct SaliencyArgs {
    pub ckpt: PathBuf,
    pub clip: PathBuf,
    pub landmarks: Option<PathBuf>,
    pub class: usize,
    pub percentile: f64,
    pub sign: SignArg,
    pub sampling: TemporalArg,
    pub regions: bool,
    pub out: PathBuf,
}

pub fn saliency(args: SaliencyArgs) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct SaliencyEcho {
        checkpoint: PathBuf,
        clip: PathBuf,
        #[serde(skip_serializing_if = "Option::is_none")]
        landmarks: Option<PathBuf>,
        class: usize,
        percentile: f64,
        sign: SaliencySign,
        temporal: TemporalMode,
    }
    if !(args.percentile > 0.0 && args.percentile < 100.0) {
        return Err(CliError::Usage(format!("--percentile {} outside (0, 100)", args.percentile)));
    }
    let ckpt = load_checkpoint(&args.ckpt)?;
    if args.class >= ckpt.arch.num_classes {
        return Err(CliError::Usage(format!(
            "--class {} out of range for a {}-class checkpoint",
            args.class, ckpt.arch.num_classes
        )));
    }
    let sign = match args.sign {
        SignArg::Abs => SaliencySign::Abs,
        SignArg::Relu => SaliencySign::Relu,
    };
    let temporal = temporal_mode(args.sampling);
    if args.regions && args.landmarks.is_none() {
        return Err(CliError::Runtime("landmarks required for the region energy report".into()));
    }
    if args.regions && ckpt.arch.kind != ArchKind::Stcnn {
        return Err(CliError::Runtime(
            "region energy report needs a face-input (stcnn) checkpoint".into(),
        ));
    }
    create_dir(&args.out)?;
    echo_config(
        &args.out,
        &SaliencyEcho {
            checkpoint: args.ckpt.clone(),
            clip: args.clip.clone(),
            landmarks: args.landmarks.clone(),
            class: args.class,
            percentile: args.percentile,
            sign,
            temporal,
        },
    )?;
    let sidecar = match ckpt.precision {
        Precision::F32 => saliency_typed::<f32>(&ckpt, &args, sign, temporal)?,
        Precision::F64 => saliency_typed::<f64>(&ckpt, &args, sign, temporal)?,
    };
    write_file(
        &args.out.join("saliency.toml"),
        toml::to_string(&sidecar).map_err(|e| CliError::Runtime(e.to_string()))?,
    )?;
    if let Some(r) = sidecar.region_energy {
        println!("eyes {:.4}  mouth {:.4}  other {:.4}", r.eyes, r.mouth, r.other);
    }
    println!("saliency frames written to {}", args.out.display());
    Ok(())
}

fn saliency_typed<T: Scalar>(
    ckpt: &Checkpoint,
    args: &SaliencyArgs,
    sign: SaliencySign,
    temporal: TemporalMode,
) -> Result<SaliencySidecar, CliError> {
    let g = ckpt.build_graph::<T>()?;
    let clip = load_clip(&args.clip)?;
    let landmarks = match &args.landmarks {
        Some(p) => Some(read_landmarks_for(&clip, p)?),
        None => None,
    };
    let sample = sample_from_clip::<T>(&clip, landmarks.as_ref(), &ckpt.arch, temporal, 0)?;
    let mut volumes = input_gradient(&g, &sample, args.class, sign)?;
    for (vol, name) in volumes.iter_mut().zip(ckpt.arch.input_names()) {
        vol.input = name.to_string();
    }
    let mut region_energy = None;
    for vol in &volumes {
        let dir = args.out.join(&vol.input);
        let binary = binarize(&vol.values, args.percentile)?;
        export_frames(&vol.values, false, &dir.join("continuous"))?;
        export_frames(&binary, true, &dir.join("binary"))?;
        if let (ArchKind::Stcnn, Some(lm)) = (ckpt.arch.kind, &landmarks) {
            let projected = face_crop_landmarks(&clip, lm, &ckpt.arch, temporal)?;
            region_energy = Some(region_energy_report(&binary, &projected)?);
        }
    }
    Ok(SaliencySidecar {
        source_id: clip.source_id.clone(),
        target_class: args.class,
        class_name: ckpt.classes.get(args.class).cloned().unwrap_or_default(),
        percentile: args.percentile,
        sign,
        inputs: volumes.iter().map(|v| v.input.clone()).collect(),
        region_energy,
    })
}
