use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use vidrel::backbone::{Backbone, BackboneKind, Preset, CLIP_LEN, CROP_SIZE};
use vidrel::downstream::{
    attention_overlays, extract_descriptors, finetune, pca_embed, retrieve, stage_attention, write_scatter_svg,
    Distance, LabeledVideoDataset, RetrievalMode,
};
use vidrel::fingerprint::{check, fingerprint};
use vidrel::nn::Matrix;
use vidrel::relations::{center_crop, crop_frame, FrameLoader, RelationSet, SampleIndex, StreamStats};
use vidrel::shots::{build_manifest, Manifest, Threshold};
use vidrel::train::{export_single_stack, pretrain, BackboneExport, PretrainData, SiameseModel};
use vidrel::video::{discover_videos, generate_synthetic_corpus, PatternStyle, RawVideo};
use vidrel::{downstream, seed};

use crate::config::RunConfig;
use crate::{Cli, Command, GlobalArgs};

/// File written next to a generated corpus describing how it was made.
const CORPUS_FILE: &str = "corpus.json";

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of videos (multi-shot corpus only).
    #[arg(long)]
    pub videos: Option<usize>,
    /// Rendering style: standard or easy.
    #[arg(long, value_parser = parse_enum::<PatternStyle>)]
    pub style: Option<PatternStyle>,
    /// Render the labeled action set (train.json, test.json) instead.
    #[arg(long)]
    pub actions: bool,
}

#[derive(Debug, Args)]
pub struct EditShotsArgs {
    /// Directory of videos (containers or frame archives).
    #[arg(long)]
    pub videos: PathBuf,
    /// Manifest path (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Segment length K.
    #[arg(long)]
    pub k: Option<usize>,
    /// Shortest tail kept as its own segment.
    #[arg(long)]
    pub min_len: Option<usize>,
    /// Fixed cut threshold, replacing the adaptive rule.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BuildSamplesArgs {
    /// Segment manifest from edit-shots.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Index path (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Number of samples.
    #[arg(long)]
    pub count: Option<usize>,
    /// Comma-separated relation codes, e.g. C_S,C_V,P_I.
    #[arg(long)]
    pub relations: Option<String>,
    /// Derive pattern clips from the first clip's own window.
    #[arg(long)]
    pub aligned: bool,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Segment manifest from edit-shots.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Stored sample index; drawn from the manifest when absent.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Comma-separated relation codes; defaults to all seven.
    #[arg(long)]
    pub relations: Option<String>,
    /// c3d, r3d or r2plus1d.
    #[arg(long, value_parser = parse_from_str::<BackboneKind>)]
    pub backbone: Option<BackboneKind>,
    /// tiny or full.
    #[arg(long, value_parser = parse_from_str::<Preset>)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Samples drawn from the manifest when no index is given.
    #[arg(long)]
    pub count: Option<usize>,
    /// Best checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON-lines training log; defaults to `<out>.log.jsonl`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Also write the single-stack backbone here.
    #[arg(long)]
    pub export: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Pretrained checkpoint or backbone; random initialization when absent.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Training split file.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Test split file, evaluated after every epoch.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Classifier path.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON-lines log; defaults to `<out>.log.jsonl`.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    /// Pretrained checkpoint or backbone.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Gallery split file.
    #[arg(long)]
    pub train_split: PathBuf,
    /// Query split file.
    #[arg(long)]
    pub test_split: PathBuf,
    /// Comma-separated cut-offs.
    #[arg(long, value_delimiter = ',')]
    pub topk: Option<Vec<usize>>,
    /// cosine or euclidean.
    #[arg(long, value_parser = parse_from_str::<Distance>)]
    pub distance: Option<Distance>,
    /// video or clip.
    #[arg(long, value_parser = parse_from_str::<RetrievalMode>)]
    pub mode: Option<RetrievalMode>,
    /// Table path; the extension picks the format (json, csv or md).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Method name in the table.
    #[arg(long, default_value = "vidrel")]
    pub method: String,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Pretrained checkpoint or backbone.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Labeled split file.
    #[arg(long)]
    pub videos: PathBuf,
    /// SVG scatter plot; coordinates go to the same path with a .csv extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AttnArgs {
    /// Pretrained checkpoint or backbone.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Video file or frame archive.
    #[arg(long)]
    pub video: PathBuf,
    /// 1-based backbone stage.
    #[arg(long)]
    pub stage: Option<usize>,
    /// First frame of the clip.
    #[arg(long)]
    pub clip_start: Option<usize>,
    /// Output directory for the overlay PNGs.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let mut cfg = RunConfig::load(g.config.as_deref(), g.seed)?;
    match &cli.command {
        Command::Synth(a) => synth(g, &mut cfg, a),
        Command::EditShots(a) => edit_shots(g, &mut cfg, a),
        Command::BuildSamples(a) => build_samples(g, &mut cfg, a),
        Command::Pretrain(a) => pretrain_cmd(g, &mut cfg, a),
        Command::Finetune(a) => finetune_cmd(g, &mut cfg, a),
        Command::Retrieve(a) => retrieve_cmd(g, &mut cfg, a),
        Command::Embed(a) => embed(g, &mut cfg, a),
        Command::Attn(a) => attn(g, &mut cfg, a),
    }
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_from_str<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

/// Validates the resolved configuration and writes it to
/// `<run_dir>/config.<stage>.toml`.
fn begin(g: &GlobalArgs, cfg: &RunConfig, stage: &str, out: &Path) -> Result<()> {
    cfg.validate()?;
    let dir = match &g.run_dir {
        Some(d) => d.clone(),
        None => parent_dir(out),
    };
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(format!("config.{stage}.toml"));
    fs::write(&path, cfg.to_toml()?).with_context(|| format!("cannot write {}", path.display()))
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    let dir = parent_dir(path);
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// JSON-lines sink flushed after every record.
struct JsonLog(BufWriter<fs::File>);

impl JsonLog {
    fn create(path: &Path) -> Result<Self> {
        ensure_parent(path)?;
        let f = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        Ok(Self(BufWriter::new(f)))
    }

    fn record<T: Serialize>(&mut self, value: &T) {
        // A failed log write must not abort a training run.
        let line = serde_json::to_string(value).expect("serializable record");
        let _ = writeln!(self.0, "{line}").and_then(|_| self.0.flush());
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn synth(g: &GlobalArgs, cfg: &mut RunConfig, a: &SynthArgs) -> Result<()> {
    if let Some(n) = a.videos {
        cfg.synth.num_videos = n;
    }
    if let Some(s) = a.style {
        cfg.synth.style = s;
    }
    begin(g, cfg, "synth", &a.out.join(CORPUS_FILE))?;
    let fp = cfg.synth_fingerprint();
    if a.actions {
        let (train, test) = downstream::generate_action_dataset(&cfg.actions, &a.out)?;
        write_json(
            &a.out.join(CORPUS_FILE),
            &json!({ "kind": "actions", "fingerprint": fp, "spec": cfg.actions }),
        )?;
        println!(
            "wrote {} training and {} test videos in {} classes to {}",
            train.len(),
            test.len(),
            train.class_count(),
            a.out.display()
        );
    } else {
        let corpus = generate_synthetic_corpus(&cfg.synth, &a.out)?;
        write_json(
            &a.out.join(CORPUS_FILE),
            &json!({ "kind": "corpus", "fingerprint": fp, "spec": cfg.synth }),
        )?;
        println!(
            "wrote {} videos with {} shots to {}",
            corpus.videos.len(),
            corpus.shots.len(),
            a.out.display()
        );
    }
    Ok(())
}

fn edit_shots(g: &GlobalArgs, cfg: &mut RunConfig, a: &EditShotsArgs) -> Result<()> {
    if let Some(k) = a.k {
        cfg.shots.k = k;
    }
    if let Some(m) = a.min_len {
        cfg.shots.min_len = m;
    }
    if let Some(t) = a.threshold {
        cfg.shots.threshold = Threshold::Fixed(t);
    }
    begin(g, cfg, "edit-shots", &a.out)?;
    let videos = discover_videos(&a.videos, &cfg.decode)?;
    if videos.is_empty() {
        bail!("no videos found in {}", a.videos.display());
    }
    let manifest = build_manifest(&videos, &cfg.shots, cfg.manifest_fingerprint())?;
    ensure_parent(&a.out)?;
    manifest.write(&a.out)?;
    println!(
        "{} videos, {} shots, {} segments -> {}",
        videos.len(),
        manifest.shot_ids().count(),
        manifest.len(),
        a.out.display()
    );
    Ok(())
}

fn read_manifest(cfg: &RunConfig, path: &Path, force: bool) -> Result<Manifest> {
    let manifest = Manifest::read(path)?;
    check("manifest", &cfg.manifest_fingerprint(), manifest.fingerprint(), force)?;
    Ok(manifest)
}

fn apply_relations(cfg: &mut RunConfig, relations: Option<&str>) -> Result<()> {
    if let Some(r) = relations {
        cfg.sampler.relations = RelationSet::parse(r)?;
    }
    Ok(())
}

fn build_samples(g: &GlobalArgs, cfg: &mut RunConfig, a: &BuildSamplesArgs) -> Result<()> {
    apply_relations(cfg, a.relations.as_deref())?;
    if let Some(c) = a.count {
        cfg.samples.count = c;
    }
    if a.aligned {
        cfg.sampler.aligned = true;
    }
    begin(g, cfg, "build-samples", &a.out)?;
    let manifest = read_manifest(cfg, &a.manifest, g.force)?;
    let index = SampleIndex::build(
        &manifest,
        &cfg.sampler,
        cfg.samples.count,
        cfg.samples.seed,
        cfg.samples_fingerprint(),
    )?;
    ensure_parent(&a.out)?;
    index.write(&a.out)?;
    let stats = StreamStats::of(&index.plans);
    println!("{} samples -> {}", stats.total, a.out.display());
    for c in cfg.sampler.relations.categories() {
        let clean = stats.clean.get(c).copied().unwrap_or(0);
        let fallback = stats.after_fallback.get(c).copied().unwrap_or(0);
        println!("  {:<4} {clean:>6} (+{fallback} after fallback)", c.code());
    }
    Ok(())
}

fn pretrain_cmd(g: &GlobalArgs, cfg: &mut RunConfig, a: &PretrainArgs) -> Result<()> {
    apply_relations(cfg, a.relations.as_deref())?;
    if let Some(k) = a.backbone {
        cfg.backbone.kind = k;
    }
    if let Some(p) = a.preset {
        cfg.backbone.preset = p;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(b) = a.batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(c) = a.count {
        cfg.samples.count = c;
    }
    begin(g, cfg, "pretrain", &a.out)?;
    let manifest = read_manifest(cfg, &a.manifest, g.force)?;
    let validation = cfg.train.validation_count(cfg.samples.count);
    let data = match &a.samples {
        Some(path) => {
            let index = SampleIndex::read(path)?;
            check(
                "sample index",
                &cfg.samples_fingerprint(),
                &index.header.fingerprint,
                g.force,
            )?;
            if index.header.sampler.relations != cfg.sampler.relations {
                bail!("sample index relations differ from the configured relation set");
            }
            PretrainData::from_index(&index, &manifest, validation)?
        }
        None => PretrainData::from_manifest(&manifest, &cfg.sampler, cfg.samples.count, validation, cfg.samples.seed)?,
    };
    let loader = FrameLoader::for_manifest(&manifest, &cfg.decode)?;
    let model = SiameseModel::new(
        cfg.backbone.config(),
        cfg.sampler.relations.clone(),
        &mut seed::rng(seed::mix_str(cfg.train.seed, "init")),
    )?;
    let log_path = a.log.clone().unwrap_or_else(|| with_suffix(&a.out, ".log.jsonl"));
    let mut log = JsonLog::create(&log_path)?;
    let fp = cfg.pretrain_fingerprint();
    println!(
        "pretraining {} ({} params) on {} samples, validating on {}",
        cfg.backbone.kind.name(),
        model.backbone.params.trainable_scalars(),
        data.train.len(),
        data.validation.len()
    );
    let outcome = pretrain(model, &data, &loader, &cfg.train, &fp, |r| {
        log.record(r);
        println!(
            "epoch {:>4} {:<5} loss {:.4} acc {:.3}",
            r.epoch,
            serde_json::to_value(r.split)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default(),
            r.loss,
            r.overall_acc
        );
    })?;
    ensure_parent(&a.out)?;
    outcome.best.write(&a.out)?;
    if let Some(path) = &a.export {
        ensure_parent(path)?;
        export_single_stack(&outcome.best).write(path)?;
    }
    println!(
        "best epoch {} validation accuracy {:.3} -> {}",
        outcome.best.epoch,
        outcome.best.validation_accuracy,
        a.out.display()
    );
    Ok(())
}

/// Backbone from a checkpoint or export, checked against the configuration.
fn load_backbone(cfg: &RunConfig, path: &Path, force: bool) -> Result<BackboneExport> {
    let export = BackboneExport::read_any(path)?;
    check(
        "checkpoint",
        &cfg.pretrain_fingerprint(),
        &export.source_fingerprint,
        force,
    )?;
    Ok(export)
}

fn read_split(cfg: &RunConfig, path: &Path) -> Result<LabeledVideoDataset> {
    Ok(LabeledVideoDataset::read(path, &cfg.decode)?)
}

fn finetune_cmd(g: &GlobalArgs, cfg: &mut RunConfig, a: &FinetuneArgs) -> Result<()> {
    if let Some(e) = a.epochs {
        cfg.finetune.epochs = e;
    }
    begin(g, cfg, "finetune", &a.out)?;
    let (backbone, source) = match &a.ckpt {
        Some(p) => {
            let e = load_backbone(cfg, p, g.force)?;
            (e.backbone, e.source_fingerprint)
        }
        None => {
            let b = Backbone::new(
                cfg.backbone.config(),
                &mut seed::rng(seed::mix_str(cfg.finetune.seed, "init")),
            )?;
            (b, "random".to_string())
        }
    };
    let train = read_split(cfg, &a.dataset)?;
    let test = a.test.as_deref().map(|p| read_split(cfg, p)).transpose()?;
    let log_path = a.log.clone().unwrap_or_else(|| with_suffix(&a.out, ".log.jsonl"));
    let mut log = JsonLog::create(&log_path)?;
    let outcome = finetune(backbone, &train, test.as_ref(), &cfg.finetune, |r| {
        log.record(r);
        match r.test_acc {
            Some(t) => println!(
                "epoch {:>4} loss {:.4} train {:.3} test {:.3}",
                r.epoch, r.loss, r.train_acc, t
            ),
            None => println!("epoch {:>4} loss {:.4} train {:.3}", r.epoch, r.loss, r.train_acc),
        }
    })?;
    let fp = fingerprint(&json!({ "source": source, "finetune": cfg.finetune }));
    ensure_parent(&a.out)?;
    outcome.classifier.write(&a.out, &fp)?;
    if let Some(e) = outcome.crossed_at {
        println!("test accuracy target reached at epoch {e}");
    }
    println!("classifier -> {}", a.out.display());
    Ok(())
}

fn retrieve_cmd(g: &GlobalArgs, cfg: &mut RunConfig, a: &RetrieveArgs) -> Result<()> {
    if let Some(k) = &a.topk {
        cfg.retrieval.top_k = k.clone();
    }
    if let Some(d) = a.distance {
        cfg.retrieval.distance = d;
    }
    if let Some(m) = a.mode {
        cfg.retrieval.mode = m;
    }
    let anchor = a.out.clone().unwrap_or_else(|| PathBuf::from("retrieval.md"));
    begin(g, cfg, "retrieve", &anchor)?;
    let export = load_backbone(cfg, &a.ckpt, g.force)?;
    let train = read_split(cfg, &a.train_split)?;
    let test = read_split(cfg, &a.test_split)?;
    train.check_disjoint(&test)?;
    let gallery = extract_descriptors(&export.backbone, &train)?;
    let queries = extract_descriptors(&export.backbone, &test)?;
    let r = &cfg.retrieval;
    let table = retrieve(&queries, &gallery, &r.top_k, r.distance, r.mode)?;
    let fp = fingerprint(&json!({ "source": export.source_fingerprint, "retrieval": cfg.retrieval }));
    print!("{}", table.to_markdown(&a.method));
    if let Some(out) = &a.out {
        ensure_parent(out)?;
        let ext = out.extension().and_then(|e| e.to_str()).unwrap_or("");
        let text = match ext {
            "json" => {
                serde_json::to_string_pretty(&json!({ "fingerprint": fp, "method": a.method, "table": table }))? + "\n"
            }
            "csv" => format!("# fingerprint {fp}\n{}", table.to_csv(&a.method)),
            "md" => format!("<!-- fingerprint {fp} -->\n{}", table.to_markdown(&a.method)),
            other => bail!("unsupported table format {other:?}; use .json, .csv or .md"),
        };
        fs::write(out, text).with_context(|| format!("cannot write {}", out.display()))?;
    }
    Ok(())
}

fn embed(g: &GlobalArgs, cfg: &mut RunConfig, a: &EmbedArgs) -> Result<()> {
    begin(g, cfg, "embed", &a.out)?;
    let export = load_backbone(cfg, &a.ckpt, g.force)?;
    let ds = read_split(cfg, &a.videos)?;
    let descriptors = extract_descriptors(&export.backbone, &ds)?;
    let rows: Vec<Vec<f64>> = descriptors.iter().map(|d| d.vector.clone()).collect();
    let pca = pca_embed(&Matrix::from_rows(&rows), 2)?;
    let labels = ds.labels();
    let fp = fingerprint(&json!({ "source": export.source_fingerprint, "videos": ds.split }));
    ensure_parent(&a.out)?;
    write_scatter_svg(
        &a.out,
        &pca.coords,
        &labels,
        &ds.class_names,
        Some(&format!("fingerprint {fp}")),
    )?;
    let mut csv = format!("# fingerprint {fp}\nvideo_id,label,x,y\n");
    for (i, d) in descriptors.iter().enumerate() {
        let row = pca.coords.row(i);
        csv.push_str(&format!(
            "{},{},{},{}\n",
            d.video_id, ds.class_names[labels[i]], row[0], row[1]
        ));
    }
    let csv_path = a.out.with_extension("csv");
    fs::write(&csv_path, csv).with_context(|| format!("cannot write {}", csv_path.display()))?;
    let ratio = pca.explained_ratio();
    println!(
        "{} videos, explained variance {:.3} + {:.3} -> {}",
        descriptors.len(),
        ratio[0],
        ratio[1],
        a.out.display()
    );
    Ok(())
}

fn attn(g: &GlobalArgs, cfg: &mut RunConfig, a: &AttnArgs) -> Result<()> {
    if let Some(s) = a.stage {
        cfg.attention.stage = s;
    }
    if let Some(c) = a.clip_start {
        cfg.attention.clip_start = c;
    }
    begin(g, cfg, "attn", &a.out.join("maps.json"))?;
    let export = load_backbone(cfg, &a.ckpt, g.force)?;
    let video = RawVideo::open(&a.video, &cfg.decode)?;
    let start = cfg.attention.clip_start;
    let end = start + CLIP_LEN;
    if end > video.frame_count {
        bail!(
            "clip [{start}, {end}) does not fit in {} frames of {}",
            video.frame_count,
            a.video.display()
        );
    }
    let frames = video.decode_frames(start..end)?.into_frames();
    let clip = frames
        .iter()
        .map(|f| crop_frame(f, center_crop(), CROP_SIZE))
        .collect::<vidrel::Result<Vec<_>>>()?;
    let maps = stage_attention(&export.backbone, &clip, cfg.attention.stage)?;
    let overlays = attention_overlays(&export.backbone, &clip, cfg.attention.stage, cfg.attention.alpha)?;
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    for (i, img) in overlays.iter().enumerate() {
        let p = a.out.join(format!("frame_{i:02}.png"));
        img.save(&p).with_context(|| format!("cannot write {}", p.display()))?;
    }
    let fp = fingerprint(&json!({ "source": export.source_fingerprint, "attention": cfg.attention }));
    write_json(
        &a.out.join("maps.json"),
        &json!({
            "fingerprint": fp,
            "video_id": video.video_id,
            "clip_start": start,
            "stage": cfg.attention.stage,
            "height": maps.height,
            "width": maps.width,
            "maps": maps.maps,
        }),
    )?;
    println!("{} overlays -> {}", overlays.len(), a.out.display());
    Ok(())
}
