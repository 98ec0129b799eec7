use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use stereoprobe::artifact::{write_atomic, Artifact, ModelRsm, Predictions, RsaGrid};
use stereoprobe::backend::{is_model_spec, Backend};
use stereoprobe::config::RunConfig;
use stereoprobe::desk::{pretrain, PretrainConfig};
use stereoprobe::emotions::{profile_model, EmotionLexicon, EmotionProfiles};
use stereoprobe::evaluate::{recall_at_k, BackendSource, MatchMode, PredictionSource, StaticSource};
use stereoprobe::finetune::{finetune_mlm, shift_report, CorpusSpec, Fraction, ModelSide, ShiftOptions};
use stereoprobe::harvest::transport::{EngineConfig, HttpTransport, RecordingTransport, ReplayTransport};
use stereoprobe::harvest::{self, load_dataset, write_dataset, CurationConfig, Engine, SuggestionTransport};
use stereoprobe::plots::{self, Svg};
use stereoprobe::probe::{PredictionCache, PredictionSet, Prober};
use stereoprobe::registry::{load_registry, Registry, SocialGroup, TemplateSet};
use stereoprobe::rsa::{model_grid, Rsm};

use crate::{recipe, Command, GroupArgs};

/// What a successful command leaves for the exit status.
#[derive(Default)]
pub struct Outcome {
    /// Groups that could not be processed; nonempty means partial failure.
    pub failed: Vec<String>,
}

pub fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Harvest { .. } => "harvest",
        Command::Probe { .. } => "probe",
        Command::Recall { .. } => "recall",
        Command::Emotions { .. } => "emotions",
        Command::Rsa { .. } => "rsa",
        Command::Finetune { .. } => "finetune",
        Command::Diff { .. } => "diff",
        Command::Report { .. } => "report",
        Command::DeskInit { .. } => "desk-init",
        Command::Recipe { .. } => "recipe",
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Ok(cfg.with_env_overrides())
}

fn templates(cfg: &RunConfig) -> Result<TemplateSet> {
    Ok(match &cfg.template_file {
        Some(p) => TemplateSet::load(p)?,
        None => TemplateSet::bundled(),
    })
}

fn registry(cfg: &RunConfig) -> Result<Registry> {
    let mut reg = match &cfg.registry_file {
        Some(p) => Registry::from_groups(load_registry(p)?)?,
        None => Registry::bundled(),
    };
    if let Some(p) = &cfg.extra_groups_file {
        reg.extend(load_registry(p)?)?;
    }
    Ok(reg)
}

/// Fold group flags into the config so they end up in the provenance.
fn apply_groups(cfg: &mut RunConfig, args: &GroupArgs) {
    if let Some(file) = &args.groups {
        cfg.registry_file = Some(file.clone());
    }
    if !args.group.is_empty() {
        cfg.groups = args.group.clone();
    }
}

fn selected_groups(cfg: &RunConfig) -> Result<Vec<SocialGroup>> {
    let reg = registry(cfg)?;
    if cfg.groups.is_empty() {
        return Ok(reg.groups().to_vec());
    }
    cfg.groups
        .iter()
        .map(|n| {
            reg.find(n)
                .cloned()
                .ok_or_else(|| anyhow!(stereoprobe::Error::Validation(format!("unknown group {n:?}"))))
        })
        .collect()
}

fn set_model(cfg: &mut RunConfig, model: Option<String>) -> Result<String> {
    if let Some(m) = model {
        cfg.models = vec![m];
    }
    match cfg.models.as_slice() {
        [m] => Ok(m.clone()),
        [] => bail!(stereoprobe::Error::Validation("no model given (--model or `models` in the config)".into())),
        _ => bail!(stereoprobe::Error::Validation("this command takes exactly one model".into())),
    }
}

fn lexicon(cfg: &RunConfig) -> Result<EmotionLexicon> {
    Ok(match &cfg.lexicon {
        Some(p) => EmotionLexicon::load(p)?,
        None => {
            log::warn!("no lexicon configured; using the bundled 70-word fixture lexicon");
            EmotionLexicon::fixture()
        }
    })
}

fn cache(cfg: &RunConfig) -> Result<Option<PredictionCache>> {
    cfg.cache_dir
        .as_ref()
        .map(|d| PredictionCache::open(d.clone()))
        .transpose()
        .map_err(Into::into)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn write_artifact<T: Serialize>(kind: &str, cfg: &RunConfig, data: T, out: &Path) -> Result<()> {
    ensure_parent(out)?;
    Artifact::new(kind, cfg, data).write(out)?;
    log::info!("wrote {}", out.display());
    Ok(())
}

fn write_svgs(dir: &Path, svgs: &[Svg], prefix: &str) -> Result<usize> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for s in svgs {
        write_atomic(&dir.join(format!("{prefix}{}", s.name)), s.body.as_bytes())?;
    }
    Ok(svgs.len())
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut text = String::new();
    for it in items {
        text.push_str(&serde_json::to_string(it)?);
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Predictions for `groups` through a live backend, split into successes
/// and failures.
fn elicit(prober: &Prober, groups: &[SocialGroup]) -> (Vec<PredictionSet>, BTreeMap<String, String>) {
    let mut sets = Vec::new();
    let mut failed = BTreeMap::new();
    for (g, r) in groups.iter().zip(prober.predictions_all(groups)) {
        match r {
            Ok(s) => sets.push(s),
            Err(e) => {
                log::warn!("{}: {e}", g.name);
                failed.insert(g.name.clone(), e.to_string());
            }
        }
    }
    (sets, failed)
}

/// Prediction sets read from a cache directory, restricted to `groups`.
fn cached_sets(dir: &Path, model: Option<&str>, groups: &[SocialGroup], k: usize) -> Result<(String, Vec<PredictionSet>, BTreeMap<String, String>)> {
    let cache = PredictionCache::open(dir.to_path_buf())?;
    let model_id = match model {
        Some(m) => m.to_string(),
        None => match cache.model_ids()?.as_slice() {
            [one] => one.clone(),
            [] => bail!(stereoprobe::Error::Validation(format!("cache {} is empty", dir.display()))),
            many => bail!(stereoprobe::Error::Validation(format!(
                "cache {} holds several models ({}); pick one with --before-model/--after-model",
                dir.display(),
                many.join(", ")
            ))),
        },
    };
    let mut by_group: BTreeMap<String, PredictionSet> = BTreeMap::new();
    for s in cache.sets_for_model(&model_id)? {
        if s.k >= k {
            by_group.entry(s.group.key()).or_insert(s);
        }
    }
    let mut sets = Vec::new();
    let mut failed = BTreeMap::new();
    for g in groups {
        match by_group.remove(&g.key()) {
            Some(s) => sets.push(s),
            None => {
                failed.insert(g.name.clone(), format!("not in cache {} at k >= {k}", dir.display()));
            }
        }
    }
    Ok((model_id, sets, failed))
}

/// Rankings from cached sets only; reachability is approximated by the
/// attributes the cache mentions.
fn static_source(model_id: &str, sets: &[PredictionSet]) -> StaticSource {
    let words: BTreeSet<String> = sets.iter().flat_map(|s| s.union.iter().cloned()).collect();
    let mut src = StaticSource::new(model_id, words);
    for s in sets {
        src.add_set(s);
    }
    src
}

/// A model given either as a backend spec or as a cache directory.
enum Side {
    Live(Backend),
    Cached(PathBuf),
}

fn side(arg: &str) -> Result<Side> {
    if is_model_spec(arg) {
        Ok(Side::Live(Backend::open(arg)?))
    } else if Path::new(arg).is_dir() {
        Ok(Side::Cached(PathBuf::from(arg)))
    } else {
        bail!(stereoprobe::Error::Validation(format!(
            "{arg:?} is neither a backend spec (fixture:, desk:, bridge:) nor a cache directory"
        )))
    }
}

fn side_sets(
    s: &Side,
    hint: Option<&str>,
    cfg: &RunConfig,
    templates: &TemplateSet,
    groups: &[SocialGroup],
) -> Result<(String, Vec<PredictionSet>, BTreeMap<String, String>)> {
    match s {
        Side::Live(b) => {
            let prober = Prober::new(b.mlm(), templates, cache(cfg)?, cfg.k);
            let (sets, failed) = elicit(&prober, groups);
            Ok((b.mlm().model_id().to_string(), sets, failed))
        }
        Side::Cached(dir) => cached_sets(dir, hint, groups, cfg.k),
    }
}

fn live_source<'a>(s: &'a Side, tpl: &'a TemplateSet, cache: Option<PredictionCache>, depth: usize) -> Option<BackendSource<'a>> {
    match s {
        Side::Live(b) => Some(BackendSource::new(Prober::new(b.mlm(), tpl, cache, depth))),
        Side::Cached(_) => None,
    }
}

fn log_coverage(p: &EmotionProfiles) {
    let covered: usize = p.groups.values().map(|v| v.covered).sum();
    let total: usize = p.groups.values().map(|v| v.total).sum();
    log::warn!(
        "{}: lexicon covers {covered} of {total} attributes ({:.1}%) over {} groups; {} groups skipped",
        p.model_id,
        if total == 0 { 0.0 } else { 100.0 * covered as f64 / total as f64 },
        p.groups.len(),
        p.skipped.len()
    );
    for v in p.groups.values() {
        log::info!("{}: coverage {}/{}", v.group, v.covered, v.total);
    }
}

pub fn run(config: Option<&Path>, command: Command) -> Result<Outcome> {
    let mut cfg = load_config(config)?;
    match command {
        Command::Harvest {
            engines,
            groups,
            out,
            replay,
            record,
            manual_review,
            force,
        } => {
            if !engines.is_empty() {
                cfg.engines = engines
                    .iter()
                    .map(|e| e.parse::<Engine>())
                    .collect::<stereoprobe::Result<Vec<_>>>()?;
            }
            apply_groups(&mut cfg, &groups);
            cfg.validate()?;
            if let Some(canonical) = &cfg.dataset {
                if canonical.exists() && out.exists() && std::fs::canonicalize(canonical)? == std::fs::canonicalize(&out)? {
                    bail!(stereoprobe::Error::Validation(format!(
                        "refusing to overwrite the canonical dataset {}",
                        canonical.display()
                    )));
                }
            }
            if out.exists() && !force {
                bail!(stereoprobe::Error::Validation(format!(
                    "{} exists; pass --force to replace it",
                    out.display()
                )));
            }
            let groups = selected_groups(&cfg)?;
            let tpl = templates(&cfg)?;
            let mut curation = match &cfg.curation_dir {
                Some(d) => CurationConfig::load_dir(d)?,
                None => CurationConfig::default(),
            };
            curation.manual_review = manual_review;
            let transport: Box<dyn SuggestionTransport> = match (&replay, &record) {
                (Some(dir), _) => Box::new(ReplayTransport::new(dir.clone())),
                (None, rec) => {
                    let engine_cfg = match &cfg.engine_config {
                        Some(p) => EngineConfig::load(p)?,
                        None => EngineConfig::default(),
                    };
                    let live = HttpTransport::new(engine_cfg);
                    match rec {
                        Some(dir) => Box::new(RecordingTransport::new(live, dir.clone())),
                        None => Box::new(live),
                    }
                }
            };
            let result = harvest::harvest(&groups, &tpl, &cfg.engines, transport.as_ref(), &curation);
            ensure_parent(&out)?;
            write_dataset(&result.records, &out)?;
            write_jsonl(&sidecar(&out, ".multiword.jsonl"), &result.multi_word)?;
            if manual_review {
                write_jsonl(&sidecar(&out, ".review.jsonl"), &result.review)?;
            }
            for f in &result.failures {
                log::warn!("{} via {}: {}", f.query, f.engine, f.error);
            }
            println!(
                "{} records for {} groups -> {}",
                result.records.len(),
                groups.len(),
                out.display()
            );
            let failed: BTreeSet<String> = result.failures.iter().map(|f| f.group.clone()).collect();
            Ok(Outcome {
                failed: failed.into_iter().collect(),
            })
        }

        Command::Probe {
            model,
            groups,
            k,
            cache: cache_dir,
            out,
        } => {
            let spec = set_model(&mut cfg, model)?;
            apply_groups(&mut cfg, &groups);
            if let Some(k) = k {
                cfg.k = k;
            }
            if cache_dir.is_some() {
                cfg.cache_dir = cache_dir;
            }
            cfg.validate()?;
            let groups = selected_groups(&cfg)?;
            let tpl = templates(&cfg)?;
            let backend = Backend::open(&spec)?;
            let prober = Prober::new(backend.mlm(), &tpl, cache(&cfg)?, cfg.k);
            let (sets, failed) = elicit(&prober, &groups);
            let payload = Predictions {
                model_id: backend.mlm().model_id().to_string(),
                k: cfg.k,
                sets,
                failed: failed.clone(),
            };
            write_artifact("predictions", &cfg, payload, &out)?;
            Ok(Outcome {
                failed: failed.into_keys().collect(),
            })
        }

        Command::Recall {
            model,
            dataset,
            k,
            stemmed,
            cache: cache_dir,
            out,
            plots: plot_dir,
        } => {
            let spec = set_model(&mut cfg, model)?;
            if dataset.is_some() {
                cfg.dataset = dataset;
            }
            if !k.is_empty() {
                cfg.k_grid = k;
            }
            if cache_dir.is_some() {
                cfg.cache_dir = cache_dir;
            }
            cfg.validate()?;
            let path = cfg
                .dataset
                .clone()
                .ok_or_else(|| anyhow!(stereoprobe::Error::Validation("no dataset given".into())))?;
            let data = load_dataset(&path)?;
            let tpl = templates(&cfg)?;
            let depth = cfg.k_grid.iter().copied().max().unwrap_or(cfg.k);
            let backend = Backend::open(&spec)?;
            let source = BackendSource::new(Prober::new(backend.mlm(), &tpl, cache(&cfg)?, depth));
            let mode = if stemmed { MatchMode::Stemmed } else { MatchMode::Exact };
            let report = recall_at_k(&data, &source, &tpl, &cfg.k_grid, mode)?;
            for w in &report.warnings {
                log::warn!("{w}");
            }
            let failed = report.skipped_groups.clone();
            if let Some(dir) = plot_dir {
                write_svgs(&dir, &plots::recall_plots(&report), "")?;
            }
            write_artifact("recall", &cfg, report, &out)?;
            Ok(Outcome { failed })
        }

        Command::Emotions {
            model,
            groups,
            k,
            lexicon: lex,
            cache: cache_dir,
            out,
            plots: plot_dir,
        } => {
            let spec = set_model(&mut cfg, model)?;
            apply_groups(&mut cfg, &groups);
            if let Some(k) = k {
                cfg.k = k;
            }
            if lex.is_some() {
                cfg.lexicon = lex;
            }
            if cache_dir.is_some() {
                cfg.cache_dir = cache_dir;
            }
            cfg.validate()?;
            let groups = selected_groups(&cfg)?;
            let tpl = templates(&cfg)?;
            let lexicon = lexicon(&cfg)?;
            let s = side(&spec)?;
            let (_, sets, failed) = side_sets(&s, None, &cfg, &tpl, &groups)?;
            let profiles = profile_model(&sets, &lexicon)?;
            log_coverage(&profiles);
            if let Some(dir) = plot_dir {
                let svgs: Vec<Svg> = plots::emotion_radar(&profiles)
                    .into_iter()
                    .chain(plots::emotion_heatmap(&profiles))
                    .collect();
                write_svgs(&dir, &svgs, "")?;
            }
            write_artifact("emotions", &cfg, profiles, &out)?;
            Ok(Outcome {
                failed: failed.into_keys().collect(),
            })
        }

        Command::Rsa {
            models,
            groups,
            k,
            lexicon: lex,
            cache: cache_dir,
            out,
            plots: plot_dir,
        } => {
            if !models.is_empty() {
                cfg.models = models;
            }
            if cfg.models.is_empty() {
                bail!(stereoprobe::Error::Validation("no models given".into()));
            }
            apply_groups(&mut cfg, &groups);
            if let Some(k) = k {
                cfg.k = k;
            }
            if lex.is_some() {
                cfg.lexicon = lex;
            }
            if cache_dir.is_some() {
                cfg.cache_dir = cache_dir;
            }
            cfg.validate()?;
            let groups = selected_groups(&cfg)?;
            let tpl = templates(&cfg)?;
            let lexicon = lexicon(&cfg)?;
            let mut rsms = Vec::new();
            let mut failed = BTreeSet::new();
            for spec in cfg.models.clone() {
                let s = side(&spec)?;
                let (id, sets, f) = side_sets(&s, None, &cfg, &tpl, &groups)?;
                failed.extend(f.into_keys());
                let profiles = profile_model(&sets, &lexicon)?;
                log_coverage(&profiles);
                rsms.push((id, Rsm::from_profiles(&profiles, &groups)?));
            }
            let grid = model_grid(&rsms, cfg.include_diagonal)?;
            if let Some(dir) = plot_dir {
                let mut svgs = vec![plots::model_grid_heatmap(&grid)];
                svgs.extend(rsms.iter().map(|(id, r)| plots::rsm_heatmap(r, id)));
                write_svgs(&dir, &svgs, "")?;
            }
            let payload = RsaGrid {
                grid,
                rsms: rsms
                    .into_iter()
                    .map(|(model_id, rsm)| ModelRsm { model_id, rsm })
                    .collect(),
            };
            write_artifact("rsa-grid", &cfg, payload, &out)?;
            Ok(Outcome {
                failed: failed.into_iter().collect(),
            })
        }

        Command::Finetune {
            model,
            corpus,
            fraction,
            seed,
            source,
            out,
        } => {
            let spec = set_model(&mut cfg, model)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let fraction = Fraction::new(fraction)?;
            let source = source.unwrap_or_else(|| {
                corpus
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "corpus".into())
            });
            let backend = Backend::open(&spec)?;
            let trainable = backend.trainable().ok_or_else(|| {
                anyhow!(stereoprobe::Error::Validation(format!("backend {spec} cannot be fine-tuned")))
            })?;
            let corpus_spec = CorpusSpec::new(&source, &corpus, fraction, cfg.seed);
            let run = finetune_mlm(trainable, &corpus_spec, &cfg.training, &out)?;
            println!("{}", run.model_spec);
            write_artifact("finetune", &cfg, run, &out.join("finetune.json"))?;
            Ok(Outcome::default())
        }

        Command::Diff {
            before,
            after,
            before_model,
            after_model,
            top,
            groups,
            k,
            dataset,
            lexicon: lex,
            source,
            out,
            plots: plot_dir,
        } => {
            cfg.models = vec![before.clone(), after.clone()];
            if let Some(t) = top {
                cfg.top_n = t;
            }
            apply_groups(&mut cfg, &groups);
            if let Some(k) = k {
                cfg.k = k;
            }
            if dataset.is_some() {
                cfg.dataset = dataset;
            }
            if lex.is_some() {
                cfg.lexicon = lex;
            }
            cfg.validate()?;
            let groups = selected_groups(&cfg)?;
            let tpl = templates(&cfg)?;
            let lexicon = lexicon(&cfg)?;
            let data = cfg.dataset.as_ref().map(|p| load_dataset(p)).transpose()?;

            let sb = side(&before)?;
            let sa = side(&after)?;
            let (id_b, sets_b, fail_b) = side_sets(&sb, before_model.as_deref(), &cfg, &tpl, &groups)?;
            let (id_a, sets_a, fail_a) = side_sets(&sa, after_model.as_deref(), &cfg, &tpl, &groups)?;
            let failed: BTreeSet<String> = fail_b.into_keys().chain(fail_a.into_keys()).collect();
            let keep = |sets: Vec<PredictionSet>| -> Vec<PredictionSet> {
                sets.into_iter().filter(|s| !failed.contains(&s.group.name)).collect()
            };
            let (sets_b, sets_a) = (keep(sets_b), keep(sets_a));
            let shared: Vec<SocialGroup> = groups.iter().filter(|g| !failed.contains(&g.name)).cloned().collect();

            let depth = cfg.k_grid.iter().copied().max().unwrap_or(cfg.k).max(cfg.k);
            let lb = live_source(&sb, &tpl, cache(&cfg)?, depth);
            let la = live_source(&sa, &tpl, cache(&cfg)?, depth);
            let (stb, sta) = (static_source(&id_b, &sets_b), static_source(&id_a, &sets_a));
            let src_b: &dyn PredictionSource = match &lb {
                Some(s) => s,
                None => &stb,
            };
            let src_a: &dyn PredictionSource = match &la {
                Some(s) => s,
                None => &sta,
            };
            let opts = ShiftOptions {
                top_n: cfg.top_n,
                k_grid: cfg.k_grid.clone(),
                include_diagonal: cfg.include_diagonal,
            };
            let report = shift_report(
                &ModelSide {
                    source: src_b,
                    sets: sets_b,
                },
                &ModelSide {
                    source: src_a,
                    sets: sets_a,
                },
                &source,
                data.as_deref(),
                &tpl,
                &shared,
                Some(&lexicon),
                &opts,
            )?;
            if let Some(dir) = plot_dir {
                let value = serde_json::to_value(Artifact::new("shift", &cfg, &report))?;
                write_svgs(&dir, &plots::render_artifact(&value)?, "")?;
            }
            write_artifact("shift", &cfg, report, &out)?;
            Ok(Outcome {
                failed: failed.into_iter().collect(),
            })
        }

        Command::Report { artifacts, out } => {
            let mut total = 0;
            for path in &artifacts {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let value: serde_json::Value = serde_json::from_str(&text)
                    .map_err(|e| stereoprobe::Error::Render {
                        field: "<root>".into(),
                        message: format!("{}: {e}", path.display()),
                    })?;
                let svgs = plots::render_artifact(&value).with_context(|| format!("rendering {}", path.display()))?;
                if svgs.is_empty() {
                    log::warn!("{}: nothing to draw", path.display());
                }
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                total += write_svgs(&out, &svgs, &format!("{stem}_"))?;
            }
            println!("{total} figures -> {}", out.display());
            Ok(Outcome::default())
        }

        Command::DeskInit {
            out,
            model_id,
            seed,
            per_group,
        } => {
            cfg.validate()?;
            let reg = registry(&cfg)?;
            let tpl = templates(&cfg)?;
            let mut pc = PretrainConfig::default();
            if let Some(s) = seed {
                pc.seed = s;
            }
            if let Some(n) = per_group {
                pc.per_group = n;
            }
            let model = pretrain(&model_id, &reg, &tpl, &[], &pc)?;
            ensure_parent(&out)?;
            model.save(&out)?;
            println!("desk:{}", out.display());
            Ok(Outcome::default())
        }

        Command::Recipe { full_scale } => {
            print!("{}", if full_scale { recipe::FULL_SCALE } else { recipe::DESK_SCALE });
            Ok(Outcome::default())
        }
    }
}
