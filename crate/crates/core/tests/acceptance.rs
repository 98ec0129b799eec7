//! Acceptance criteria 1-9. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line, in order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stereoprobe::artifact::{Artifact, Predictions, RsaGrid};
use stereoprobe::desk::{pretrain, DeskModel, PretrainConfig, MODEL_FILE};
use stereoprobe::emotions::{profile_model, EmotionLexicon, EmotionProfiles, Emotion, emotion_vector};
use stereoprobe::evaluate::{recall_at_k, BackendSource, MatchMode, RecallReport, StaticSource};
use stereoprobe::finetune::{
    finetune_mlm, load_corpus, shift_report, CorpusSpec, FinetuneRun, Fraction, ModelSide, ShiftOptions, ShiftReport,
    TrainableMlm, TrainingConfig,
};
use stereoprobe::harvest::dataset::{parse_jsonl, to_jsonl};
use stereoprobe::harvest::{category_counts, Engine, StereotypeRecord};
use stereoprobe::probe::fixture::{Fallback, FixtureEntry, FixtureSpec};
use stereoprobe::probe::{Casing, Elicitor, FixtureBackend, PredictionCache, Prober, Prompt};
use stereoprobe::registry::{Category, Form, Registry, SocialGroup, TemplateSet};
use stereoprobe::rsa::{build_rsm, cosine, delta_rho, rsa_correlation, spearman, Rsm};

type Check = Result<String, String>;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

// 1 ------------------------------------------------------------------------

fn word(i: usize) -> String {
    let a = (b'a' + (i / 26) as u8) as char;
    let b = (b'a' + (i % 26) as u8) as char;
    format!("attr{a}{b}")
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let specials = ["[MASK]", "[CLS]", "[SEP]", "?", "##ing"];
    let words: Vec<String> = (0..45).map(word).collect();
    let vocabulary: Vec<String> = specials.iter().map(|s| s.to_string()).chain(words.iter().cloned()).collect();
    if vocabulary.len() != 50 {
        return Err(format!("fixture has {} tokens", vocabulary.len()));
    }
    let ts = TemplateSet::bundled();
    let group = SocialGroup::new("dentists", Category::Profession).unwrap();
    let prompt = Prompt::base(1);

    // 40 listed words with random mass, the last 5 share the remainder; the
    // first word has identical mass in both sentences.
    let random_probs = |rng: &mut ChaCha8Rng| -> BTreeMap<String, f64> {
        let raw: Vec<f64> = (0..40).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum::<f64>() / 0.9;
        words[..40].iter().cloned().zip(raw.into_iter().map(|x| x / total)).collect()
    };
    let mut post = random_probs(&mut rng);
    let mut prior = random_probs(&mut rng);
    let shared = 0.015625;
    let diff = post[&words[0]] - shared;
    *post.get_mut(&words[0]).unwrap() = shared;
    *post.get_mut(&words[1]).unwrap() += diff;
    let diff = prior[&words[0]] - shared;
    *prior.get_mut(&words[0]).unwrap() = shared;
    *prior.get_mut(&words[1]).unwrap() += diff;

    let mask = "[MASK]".to_string();
    let backend_probe = FixtureBackend::from_spec(FixtureSpec {
        model_id: "probe".into(),
        mask_token: mask.clone(),
        casing: Casing::Uncased,
        vocabulary: vocabulary.clone(),
        special_tokens: specials[..3].iter().map(|s| s.to_string()).collect(),
        fallback: Fallback::Uniform,
        entries: vec![],
    })
    .unwrap();
    let el = Elicitor::new(&backend_probe, &ts);
    let post_text = el.post_text(&group, &prompt).unwrap();
    let (prior_text, prior_slot) = el.prior_text(Form::People, &prompt).unwrap();

    let backend = FixtureBackend::from_spec(FixtureSpec {
        model_id: "typicality-50".into(),
        mask_token: mask,
        casing: Casing::Uncased,
        vocabulary: vocabulary.clone(),
        special_tokens: specials[..3].iter().map(|s| s.to_string()).collect(),
        fallback: Fallback::Error,
        entries: vec![
            FixtureEntry {
                text: post_text,
                slot: 0,
                probs: post.clone(),
            },
            FixtureEntry {
                text: prior_text,
                slot: prior_slot,
                probs: prior.clone(),
            },
        ],
    })
    .map_err(|e| e.to_string())?;
    let el = Elicitor::new(&backend, &ts);

    // oracle: ln(p_post) - ln(p_prior) with the unlisted remainder spread evenly
    let full = |listed: &BTreeMap<String, f64>| -> HashMap<String, f64> {
        let rest = (1.0 - listed.values().sum::<f64>()) / 10.0;
        vocabulary
            .iter()
            .map(|t| (t.clone(), listed.get(t).copied().unwrap_or(rest)))
            .collect()
    };
    let (fp, fq) = (full(&post), full(&prior));
    let mut worst = 0.0f64;
    for w in &words {
        let expected = fp[w].ln() - fq[w].ln();
        let got = el.typicality(&group, &prompt, w).map_err(|e| e.to_string())?;
        worst = worst.max((got - expected).abs());
    }
    ensure(worst <= 1e-9, || format!("max deviation from oracle {worst:e}"))?;
    let zero = el.typicality(&group, &prompt, &words[0]).map_err(|e| e.to_string())?;
    ensure(zero == 0.0, || format!("equal post and prior gave {zero:e}, expected exactly 0"))?;
    let ranked = el.elicit_prompt(&group, &prompt, 45).map_err(|e| e.to_string())?;
    ensure(ranked.predictions.len() == 45, || "special tokens leaked into the ranking".into())?;
    for p in &ranked.predictions {
        let expected = fp[&p.attribute].ln() - fq[&p.attribute].ln();
        ensure((p.typicality - expected).abs() <= 1e-9, || format!("ranked typicality of {} off", p.attribute))?;
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("max |error| {worst:.1e}, zero case exact, {:?}", start.elapsed()))
}

// 2 ------------------------------------------------------------------------

fn criterion_2() -> Check {
    let start = Instant::now();
    let grid = [1usize, 5, 10, 25, 50, 100, 200];
    let ts = TemplateSet::bundled();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let vocab: Vec<String> = (0..400).map(|i| format!("{}{}", word(i % 676), "x".repeat(i / 676))).collect();
    let reachable: BTreeSet<String> = vocab[..300].iter().cloned().collect();
    let cats = [Category::Age, Category::Race, Category::Profession, Category::Religion];

    let mut worst = 0.0f64;
    for trial in 0..20 {
        let mut src = StaticSource::new(&format!("m{trial}"), reachable.clone());
        let mut lists: HashMap<String, Vec<String>> = HashMap::new();
        let mut data = Vec::new();
        for g in 0..12 {
            let name = format!("group{}", word(g));
            let mut pool: Vec<String> = reachable.iter().cloned().collect();
            pool.shuffle(&mut rng);
            pool.truncate(200);
            src.insert(&name, Prompt::base(1), pool.clone());
            lists.insert(name.clone(), pool);
            let cat = cats[g % cats.len()];
            for _ in 0..rng.gen_range(1..15) {
                data.push(StereotypeRecord {
                    query: format!("Why are {name} so"),
                    category: cat,
                    group: name.clone(),
                    attribute: vocab[rng.gen_range(0..vocab.len())].clone(),
                    engine: Engine::Google,
                });
            }
        }
        let report = recall_at_k(&data, &src, &ts, &grid, MatchMode::Exact).map_err(|e| e.to_string())?;

        // brute force: set membership among the first k
        let mut hits: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut totals: BTreeMap<String, usize> = BTreeMap::new();
        let mut reach: BTreeMap<String, usize> = BTreeMap::new();
        for r in &data {
            let list = &lists[&r.group];
            for key in [r.category.as_str(), "overall"] {
                let h = hits.entry(key.to_string()).or_insert_with(|| vec![0; grid.len()]);
                for (i, &k) in grid.iter().enumerate() {
                    if list[..k].contains(&r.attribute) {
                        h[i] += 1;
                    }
                }
                *totals.entry(key.to_string()).or_default() += 1;
                *reach.entry(key.to_string()).or_default() += usize::from(reachable.contains(&r.attribute));
            }
        }
        ensure(report.curves.len() == hits.len(), || "category sets differ".into())?;
        for (cat, h) in &hits {
            let curve = report.curves.get(cat).ok_or_else(|| format!("missing curve {cat}"))?;
            let n = totals[cat] as f64;
            let ceiling = reach[cat] as f64 / n;
            ensure((report.reachability[cat] - ceiling).abs() < 1e-12, || format!("reachability of {cat}"))?;
            for (i, &x) in curve.iter().enumerate() {
                worst = worst.max((x - h[i] as f64 / n).abs());
                ensure(x <= ceiling + 1e-12, || format!("{cat} recall {x} above reachability {ceiling}"))?;
                if i > 0 {
                    ensure(x >= curve[i - 1], || format!("{cat} recall decreases at k={}", grid[i]))?;
                }
            }
        }
    }
    ensure(worst == 0.0, || format!("oracle mismatch {worst:e}"))?;

    // the bundled fixture backend against the hand-computed golden report
    let backend = FixtureBackend::load(&root().join("data/fixtures/fixture_backend.json")).map_err(|e| e.to_string())?;
    let data = stereoprobe::harvest::load_dataset(&root().join("data/dataset/sample.jsonl")).map_err(|e| e.to_string())?;
    let source = BackendSource::new(Prober::new(&backend, &ts, None, 200));
    let report = recall_at_k(&data, &source, &ts, &[5, 10, 25, 50, 100, 200], MatchMode::Exact).map_err(|e| e.to_string())?;
    let golden: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root().join("data/golden/recall_sample.json")).unwrap()).unwrap();
    let got = serde_json::to_value(&report).unwrap();
    if got != golden {
        let keys: Vec<&String> = golden
            .as_object()
            .unwrap()
            .iter()
            .filter(|(k, v)| got.get(k.as_str()) != Some(v))
            .map(|(k, _)| k)
            .collect();
        return Err(format!("fixture report differs from golden in {keys:?}"));
    }

    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("20 random datasets match the oracle on k in {grid:?}, golden fixture report matches, {:?}", start.elapsed()))
}

// 3 ------------------------------------------------------------------------

fn lexicon_oracle() -> BTreeMap<String, [u8; 10]> {
    let text = std::fs::read_to_string(root().join("data/lexicon/fixture_lexicon.txt")).unwrap();
    let order = ["fear", "joy", "sadness", "trust", "surprise", "anticipation", "disgust", "anger", "negative", "positive"];
    let mut out: BTreeMap<String, [u8; 10]> = BTreeMap::new();
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let f: Vec<&str> = line.split('\t').collect();
        let i = order.iter().position(|o| *o == f[1]).unwrap();
        out.entry(f[0].to_string()).or_default()[i] |= u8::from(f[2] == "1");
    }
    out
}

fn criterion_3() -> Check {
    let lex = EmotionLexicon::fixture();
    let set: BTreeSet<String> = ["selfish", "vocal"].iter().map(|s| s.to_string()).collect();
    let v = emotion_vector("g", &set, &lex).map_err(|e| e.to_string())?;
    for e in Emotion::ALL {
        let want = if matches!(e, Emotion::Anger | Emotion::Disgust | Emotion::Negative) { 0.5 } else { 0.0 };
        ensure(v.score(e) == want, || format!("{e:?} = {}, expected {want}", v.score(e)))?;
    }

    let oracle = lexicon_oracle();
    let words: Vec<&String> = oracle.keys().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..200 {
        let mut set = BTreeSet::new();
        for _ in 0..rng.gen_range(1..20) {
            set.insert(words[rng.gen_range(0..words.len())].clone());
        }
        for i in 0..rng.gen_range(0..5) {
            set.insert(format!("notaword{trial}x{i}"));
        }
        let covered: Vec<&[u8; 10]> = set.iter().filter_map(|w| oracle.get(w)).collect();
        let v = emotion_vector("g", &set, &lex).map_err(|e| e.to_string())?;
        ensure(v.covered == covered.len() && v.total == set.len(), || format!("trial {trial}: coverage counts"))?;
        for d in 0..10 {
            let count: usize = covered.iter().map(|f| f[d] as usize).sum();
            let want = count as f64 / covered.len() as f64;
            ensure(v.scores[d] == want, || format!("trial {trial} dim {d}: {} vs {want}", v.scores[d]))?;
        }
    }
    Ok("{selfish, vocal} profile exact; 200 random sets match the counting oracle".into())
}

// 4 ------------------------------------------------------------------------

fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&o| o < v).count() as f64;
            let equal = x.iter().filter(|&&o| o == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn oracle_spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    let (rx, ry) = (oracle_ranks(x), oracle_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

fn random_vectors(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..10).map(|_| rng.gen_range(0.01..1.0)).collect()).collect()
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for t in 0..100 {
        let n = rng.gen_range(3..15);
        let names: Vec<String> = (0..n).map(word).collect();
        let m = build_rsm(names, &random_vectors(&mut rng, n)).map_err(|e| e.to_string())?;
        let r = rsa_correlation(&m, &m, false).map_err(|e| e.to_string())?;
        ensure(r.mean == 1.0, || format!("rsm {t}: rsa(M, M) = {}", r.mean))?;
    }

    let mut worst = 0.0f64;
    let mut defined = 0;
    for t in 0..1000 {
        let n = rng.gen_range(2..30);
        // coarse values so ties are common
        let levels: f64 = if t % 2 == 0 { 5.0 } else { 1000.0 };
        let x: Vec<f64> = (0..n).map(|_| (rng.gen_range(0.0..1.0) * levels).floor()).collect();
        let y: Vec<f64> = (0..n).map(|_| (rng.gen_range(0.0..1.0) * levels).floor()).collect();
        match (spearman(&x, &y), oracle_spearman(&x, &y)) {
            (Some(a), Some(b)) => {
                worst = worst.max((a - b).abs());
                defined += 1;
            }
            (None, None) => {}
            (a, b) => return Err(format!("pair {t}: {a:?} vs oracle {b:?}")),
        }
    }
    ensure(worst <= 1e-9, || format!("spearman off by {worst:e}"))?;

    for t in 0..50 {
        let n = rng.gen_range(3..12);
        let names: Vec<String> = (0..n).map(word).collect();
        let vs = random_vectors(&mut rng, n);
        let m = build_rsm(names.clone(), &vs).map_err(|e| e.to_string())?;
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let pn: Vec<String> = perm.iter().map(|&i| names[i].clone()).collect();
        let pv: Vec<Vec<f64>> = perm.iter().map(|&i| vs[i].clone()).collect();
        let pm = build_rsm(pn, &pv).map_err(|e| e.to_string())?;
        for i in 0..n {
            for j in 0..n {
                ensure(pm.values[i][j] == m.values[perm[i]][perm[j]], || format!("trial {t}: not permutation-equivariant"))?;
            }
        }
        let c: f64 = rng.gen_range(0.001..1000.0);
        let scaled: Vec<f64> = vs[0].iter().map(|v| v * c).collect();
        let (a, b) = (cosine(&vs[0], &vs[1]), cosine(&scaled, &vs[1]));
        ensure((a - b).abs() <= 1e-12, || format!("cosine not scale invariant: {a} vs {b}"))?;
    }
    Ok(format!("rsa(M,M)=1 on 100 RSMs; spearman within {worst:.1e} of oracle on 1000 pairs ({defined} defined); equivariance and scale invariance hold"))
}

// 5 ------------------------------------------------------------------------

fn criterion_5() -> Check {
    let start = Instant::now();
    let ts = TemplateSet::bundled();
    let reg = Registry::bundled();
    let backend = FixtureBackend::load(&root().join("data/fixtures/fixture_backend.json")).map_err(|e| e.to_string())?;
    let names = ["black people", "british people", "californians", "comedians", "Norway", "conservatives", "mormons"];
    let groups: Vec<SocialGroup> = names.iter().map(|n| reg.find(n).cloned().ok_or(format!("no group {n}"))).collect::<Result<_, _>>()?;
    let data = stereoprobe::harvest::load_dataset(&root().join("data/dataset/sample.jsonl")).map_err(|e| e.to_string())?;
    let lex = EmotionLexicon::fixture();

    let side = |prober: Prober<'_>| -> Result<Vec<_>, String> {
        prober.predictions_all(&groups).into_iter().map(|r| r.map_err(|e| e.to_string())).collect()
    };
    let sets_a = side(Prober::new(&backend, &ts, None, 200))?;
    let sets_b = side(Prober::new(&backend, &ts, None, 200))?;
    let src_a = BackendSource::new(Prober::new(&backend, &ts, None, 200));
    let src_b = BackendSource::new(Prober::new(&backend, &ts, None, 200));
    let report = shift_report(
        &ModelSide { source: &src_a, sets: sets_a },
        &ModelSide { source: &src_b, sets: sets_b },
        "none",
        Some(&data),
        &ts,
        &groups,
        Some(&lex),
        &ShiftOptions::default(),
    )
    .map_err(|e| e.to_string())?;

    let d = report.delta_rho.as_ref().ok_or("no delta rho")?;
    ensure(d.overall.delta_rho == Some(0.0), || format!("overall delta rho {:?}", d.overall.delta_rho))?;
    for (cat, s) in &d.categories {
        ensure(s.delta_rho.is_none_or(|x| x == 0.0), || format!("{cat}: delta rho {:?}", s.delta_rho))?;
    }
    for diff in &report.diffs {
        ensure(diff.added.is_empty() && diff.removed.is_empty(), || format!("{} changed", diff.group))?;
    }
    let recall = report.recall.as_ref().ok_or("no recall section")?;
    ensure(recall.deltas.values().flatten().all(|&x| x == 0.0), || "nonzero recall delta".into())?;
    ensure(!report.incomplete, || format!("report incomplete: {:?}", report.missing))?;
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("delta rho 0 exactly, no added/removed, zero recall deltas, {:?}", start.elapsed()))
}

// 6, 7 -----------------------------------------------------------------------

const DESK_GROUPS: [&str; 10] = [
    "police officers",
    "teachers",
    "women",
    "men",
    "Russians",
    "Black people",
    "old people",
    "Christians",
    "conservatives",
    "Norway",
];

fn desk_groups(reg: &Registry) -> Result<Vec<SocialGroup>, String> {
    DESK_GROUPS
        .iter()
        .map(|n| reg.find(n).cloned().ok_or(format!("registry lacks {n}")))
        .collect()
}

fn profiles(model: &DeskModel, ts: &TemplateSet, groups: &[SocialGroup], lex: &EmotionLexicon) -> Result<(Vec<stereoprobe::probe::PredictionSet>, EmotionProfiles), String> {
    let el = Elicitor::new(model, ts);
    let sets: Vec<_> = el
        .elicit_all(groups, 200)
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let p = profile_model(&sets, lex).map_err(|e| e.to_string())?;
    Ok((sets, p))
}

fn criterion_6(base: &DeskModel, pretrain_time: Duration) -> Check {
    let start = Instant::now();
    let reg = Registry::bundled();
    let ts = TemplateSet::bundled();
    let lex = EmotionLexicon::fixture();
    let groups = desk_groups(&reg)?;
    let (sets, prof) = profiles(base, &ts, &groups, &lex)?;
    let rsm = Rsm::from_profiles(&prof, &groups).map_err(|e| e.to_string())?;
    let data = stereoprobe::harvest::load_dataset(&root().join("data/dataset/sample.jsonl")).map_err(|e| e.to_string())?;
    let source = BackendSource::new(Prober::new(base, &ts, None, 200));
    recall_at_k(&data, &source, &ts, &[5, 10, 25, 50, 100, 200], MatchMode::Exact).map_err(|e| e.to_string())?;
    let total = pretrain_time + start.elapsed();

    let mut sizes = Vec::new();
    for s in &sets {
        let n = s.union.len();
        sizes.push(n);
        ensure((50..=1000).contains(&n), || format!("{}: union size {n}", s.group.name))?;
    }
    for v in prof.groups.values() {
        eprintln!("    coverage {:<16} {:>3}/{:<3} = {:.3}", v.group, v.covered, v.total, v.coverage());
        ensure(v.scores.iter().all(|s| (0.0..=1.0).contains(s)), || format!("{}: score outside [0, 1]", v.group))?;
    }
    within(total, Duration::from_secs(15 * 60))?;
    Ok(format!(
        "desk substitute, 10 groups at k=200: union sizes {}..{}, RSM {}x{}, {total:?} including pretraining",
        sizes.iter().min().unwrap(),
        sizes.iter().max().unwrap(),
        rsm.len(),
        rsm.len()
    ))
}

fn criterion_7(base: &DeskModel) -> Check {
    let start = Instant::now();
    let reg = Registry::bundled();
    let ts = TemplateSet::bundled();
    let lex = EmotionLexicon::fixture();
    let groups = desk_groups(&reg)?;
    let corpus = CorpusSpec::new("fixture-news", &root().join("data/corpus/finetune_fixture.jsonl"), Fraction::FULL, 7);
    let docs = load_corpus(&corpus).map_err(|e| e.to_string())?;
    ensure(docs.len() == 200, || format!("fixture corpus has {} documents", docs.len()))?;
    let cfg = TrainingConfig::default();
    ensure(cfg.epochs == 1 && cfg.learning_rate == 5e-5 && cfg.batch_size == 8, || "training defaults changed".into())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let before_ppl = base.pseudo_perplexity(&docs, cfg.max_len).map_err(|e| e.to_string())?;
    let run = finetune_mlm(base, &corpus, &cfg, dir.path()).map_err(|e| e.to_string())?;
    let tuned = DeskModel::load(&dir.path().join(MODEL_FILE)).map_err(|e| e.to_string())?;
    let after_ppl = tuned.pseudo_perplexity(&docs, cfg.max_len).map_err(|e| e.to_string())?;
    ensure(after_ppl <= before_ppl, || format!("pseudo-perplexity rose {before_ppl:.4} -> {after_ppl:.4}"))?;

    let (_, pb) = profiles(base, &ts, &groups, &lex)?;
    let (_, pa) = profiles(&tuned, &ts, &groups, &lex)?;
    let rb = Rsm::from_profiles(&pb, &groups).map_err(|e| e.to_string())?;
    let ra = Rsm::from_profiles(&pa, &groups).map_err(|e| e.to_string())?;
    let shared: Vec<String> = rb.groups.iter().filter(|g| ra.groups.contains(g)).cloned().collect();
    let d = delta_rho(
        &rb.submatrix(&shared).map_err(|e| e.to_string())?,
        &ra.submatrix(&shared).map_err(|e| e.to_string())?,
        &groups,
        false,
    )
    .map_err(|e| e.to_string())?;
    let overall = d.overall.delta_rho.ok_or("overall delta rho undefined")?;
    ensure((-2.0..=0.0).contains(&overall), || format!("delta rho {overall} outside [-2, 0]"))?;
    within(start.elapsed(), Duration::from_secs(20 * 60))?;
    Ok(format!(
        "{} steps, pseudo-perplexity {before_ppl:.4} -> {after_ppl:.4}, delta rho {overall:.4}, {:?}",
        run.steps,
        start.elapsed()
    ))
}

// 8 ------------------------------------------------------------------------

fn criterion_8() -> Check {
    let text = std::fs::read_to_string(root().join("data/reference/delta_rho_by_source.csv")).map_err(|e| e.to_string())?;
    let rows: Vec<&str> = text.lines().skip(1).collect();
    ensure(rows.len() == 25, || format!("{} reference rows, expected 25 (5 models x 5 outlets)", rows.len()))?;
    for r in &rows {
        let vals: Vec<f64> = r.split(',').skip(2).map(|v| v.parse().unwrap()).collect();
        ensure(vals.len() == 9 && vals.iter().all(|v| (-1.0..=0.0).contains(v)), || format!("bad reference row {r}"))?;
    }
    let script = root().join("scripts/full_scale.sh");
    ensure(script.exists(), || "scripts/full_scale.sh missing".into())?;
    Ok("not reproducible at desk scale; full-scale recipe and reference targets shipped".into())
}

// 9 ------------------------------------------------------------------------

fn round_trip<T: serde::Serialize + serde::de::DeserializeOwned>(path: &Path) -> Result<(), String> {
    let original = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let parsed: Artifact<T> = serde_json::from_str(&original).map_err(|e| format!("{}: {e}", path.display()))?;
    let again = parsed.to_json().map_err(|e| e.to_string())?;
    ensure(again == original, || format!("{} does not round-trip byte-identically", path.display()))
}

fn copy_dir(from: &Path, to: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(to)?;
    for e in std::fs::read_dir(from)? {
        let e = e?;
        std::fs::copy(e.path(), to.join(e.file_name()))?;
    }
    Ok(())
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn criterion_9() -> Check {
    let golden = root().join("data/golden");

    let sample = root().join("data/dataset/sample.jsonl");
    let text = std::fs::read_to_string(&sample).map_err(|e| e.to_string())?;
    let records = parse_jsonl(&text, "sample").map_err(|e| e.to_string())?;
    ensure(to_jsonl(&records).map_err(|e| e.to_string())? == text, || "dataset does not round-trip".into())?;

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let src_dir = tmp.path().join("src");
    copy_dir(&golden.join("cache"), &src_dir).map_err(|e| e.to_string())?;
    let src = PredictionCache::open(src_dir.clone()).map_err(|e| e.to_string())?;
    let dst = PredictionCache::open(tmp.path().join("dst")).map_err(|e| e.to_string())?;
    for model in src.model_ids().map_err(|e| e.to_string())? {
        for set in src.sets_for_model(&model).map_err(|e| e.to_string())? {
            dst.cache_predictions(&set).map_err(|e| e.to_string())?;
        }
    }
    let (a, b) = (dir_bytes(&src_dir), dir_bytes(dst.dir()));
    let differing: Vec<&String> = a.keys().chain(b.keys()).filter(|k| a.get(*k) != b.get(*k)).collect();
    ensure(differing.is_empty(), || format!("prediction cache does not round-trip: {differing:?}"))?;

    round_trip::<RecallReport>(&golden.join("recall_fixture.json"))?;
    round_trip::<Predictions>(&golden.join("predictions_fixture.json"))?;
    round_trip::<EmotionProfiles>(&golden.join("emotions_fixture.json"))?;
    round_trip::<RsaGrid>(&golden.join("rsa_desk.json"))?;
    round_trip::<ShiftReport>(&golden.join("shift_desk.json"))?;
    round_trip::<FinetuneRun>(&golden.join("finetune_desk.json"))?;

    let canonical = std::env::var_os("STEREOPROBE_DATASET")
        .map(PathBuf::from)
        .unwrap_or_else(|| root().join("data/dataset/stereotypes.jsonl"));
    let data = stereoprobe::harvest::load_dataset(&canonical)
        .map_err(|e| format!("round trips pass, but the canonical dataset is unavailable ({e}); category counts unverified"))?;
    let counts: BTreeMap<&str, usize> = category_counts(&data).into_iter().map(|(c, n)| (c.as_str(), n)).collect();
    let want: BTreeMap<&str, usize> = [
        ("profession", 713),
        ("race", 412),
        ("country", 396),
        ("gender", 198),
        ("age", 171),
        ("lifestyle", 123),
        ("political", 50),
        ("religion", 36),
    ]
    .into_iter()
    .collect();
    ensure(counts == want, || format!("category counts {counts:?}"))?;
    Ok("dataset, cache and six artifact kinds round-trip byte-identically; counts match".into())
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut line = |n: usize, result: Check| {
        match result {
            Ok(msg) => eprintln!("PASS criterion {n}: {msg}"),
            Err(msg) => {
                failed += 1;
                eprintln!("FAIL criterion {n}: {msg}");
            }
        }
    };
    line(1, criterion_1());
    line(2, criterion_2());
    line(3, criterion_3());
    line(4, criterion_4());
    line(5, criterion_5());

    let t = Instant::now();
    let base = pretrain("desk-mini", &Registry::bundled(), &TemplateSet::bundled(), &[], &PretrainConfig::default());
    let pretrain_time = t.elapsed();
    match &base {
        Ok(base) => {
            line(6, criterion_6(base, pretrain_time));
            line(7, criterion_7(base));
        }
        Err(e) => {
            line(6, Err(format!("pretraining failed: {e}")));
            line(7, Err(format!("pretraining failed: {e}")));
        }
    }
    line(8, criterion_8());
    line(9, criterion_9());

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        eprintln!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
