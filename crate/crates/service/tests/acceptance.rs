//! One line per acceptance criterion. Exits nonzero if any criterion fails;
//! criteria that need data not available here report NOT RUN.

mod common;

use std::collections::{BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use polariscope::ann::{exact_knn, AnnIndex, AnnParams};
use polariscope::annotate::{categorize_heading, normalize_heading, Assignment, RuleSet};
use polariscope::classify::{cluster_accuracy, train_and_evaluate, LabeledSet, SplitConfig, SvmConfig};
use polariscope::clean::{Gazetteer, DEFAULT_PARTY_TERMS};
use polariscope::corpus::{Category, PartyKind, Politician};
use polariscope::embed::{
    pvdm_step, sgns_step, tokenize, train_doc2vec, train_word2vec, AttentionRecord, D2VConfig, D2VMode, DatasetKind, EmbeddingSet,
    Provenance, SharedMatrix, W2VConfig, W2VModel,
};
use polariscope::polarize::{attention_top_words, candidate_polarization, party_ratio};
use polariscope::store::{self, StoreError};
use polariscope::synth::{party_signal_corpus, SignalCorpusConfig};
use polariscope_service::pipeline::{ordering_checks, AccuracyRow};
use polariscope_service::Workdir;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use PartyKind::{Democratic as D, Other as O, Republican as R};

enum Status {
    Pass(String),
    NotRun(String),
}

fn main() {
    let criteria: Vec<(&str, fn() -> Result<Status>)> = vec![
        ("pipeline integrity", pipeline_integrity),
        ("numerical core", numerical_core),
        ("ANN oracle equivalence", ann_oracle),
        ("classification properties", classification_properties),
        ("classification ordering on real data", real_data_ordering),
        ("polarization metric", polarization_metric),
        ("persistence", persistence),
        ("API contract", api_contract),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(Ok(Status::Pass(detail))) => println!("PASS     {name} ({secs:.2}s): {detail}"),
            Ok(Ok(Status::NotRun(why))) => println!("NOT RUN  {name}: {why}"),
            Ok(Err(e)) => {
                failed += 1;
                println!("FAIL     {name} ({secs:.2}s): {e:#}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL     {name} ({secs:.2}s): panicked");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn pipeline_integrity() -> Result<Status> {
    let dir = tempfile::tempdir()?;
    let start = Instant::now();
    common::run_fixture_pipeline(dir.path())?;
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "fixture pipeline took {elapsed:?}");

    let wd = Workdir::new(dir.path());
    let annotated = store::load_corpus(&wd.annotated_corpus())?;
    let clean = store::load_corpus(&wd.clean_corpus())?;
    ensure!(annotated.len() == 12 && clean.len() == 12, "expected 12 politicians");
    let rules = RuleSet::default_rules(false);
    let mut sections = 0;
    for p in &annotated {
        sections += annotate_invariant(p, &rules)?;
    }

    let gaz = Gazetteer::shipped();
    let stoplist: BTreeSet<&str> = DEFAULT_PARTY_TERMS.iter().copied().collect();
    let mut survived = 0;
    for (a, c) in annotated.iter().zip(&clean) {
        ensure!(a.id == c.id, "corpus order differs");
        let before = a.categories.as_ref().context("missing categories")?;
        let after = c.clean.as_ref().context("missing clean text")?;
        let political = after.get(Category::Political);
        ensure!(!political.chars().any(|ch| ch.is_ascii_digit()), "{}: digit in political text", c.id);
        if let Some(t) = tokenize(political).into_iter().find(|t| stoplist.contains(t.as_str())) {
            anyhow::bail!("{}: party term {t:?} in political text", c.id);
        }
        ensure!(gaz.find_locations(political).is_empty(), "{}: location left in political text", c.id);
        let bg_after = after.get(Category::Background).to_lowercase();
        let bg_before = before.get(Category::Background);
        for (s, e) in gaz.find_locations(bg_before) {
            let phrase: String = bg_before.chars().skip(s).take(e - s).collect::<String>().to_lowercase();
            ensure!(bg_after.contains(&phrase), "{}: location {phrase:?} lost from background", c.id);
            survived += 1;
        }
    }
    ensure!(survived > 0, "fixture background has no gazetteer locations to check");
    Ok(Status::Pass(format!("{:.2}s end to end, {sections} sections routed, {survived} background locations kept", elapsed.as_secs_f64())))
}

/// Every non-empty section appears in the category its heading maps to, and
/// the category lengths account for every section character plus one
/// newline between consecutive sections.
fn annotate_invariant(p: &Politician, rules: &RuleSet) -> Result<usize> {
    let cats = p.categories.as_ref().context("missing categories")?;
    let mut chars: HashMap<Category, usize> = HashMap::new();
    let mut parts: HashMap<Category, usize> = HashMap::new();
    let mut n = 0;
    for s in p.sections.iter().filter(|s| !s.text.is_empty()) {
        let target = if s.heading == "__lead__" {
            rules.lead_category
        } else {
            match categorize_heading(&normalize_heading(&s.heading), rules) {
                Assignment::Mapped(c) => c,
                Assignment::Unmapped => Category::Other,
            }
        };
        ensure!(cats.get(target).contains(&s.text), "{}: section {:?} not in {}", p.id, s.heading, target.as_str());
        *chars.entry(target).or_default() += s.text.chars().count();
        *parts.entry(target).or_default() += 1;
        n += 1;
    }
    for c in Category::ALL {
        let expected = chars.get(&c).copied().unwrap_or(0) + parts.get(&c).map_or(0, |k| k - 1);
        ensure!(cats.get(c).chars().count() == expected, "{}: {} has {} chars, sections account for {expected}", p.id, c.as_str(), cats.get(c).chars().count());
    }
    Ok(n)
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Negative-sampling loss written out from its definition.
fn ref_loss(h: &[f64], pos: &[f64], negs: &[Vec<f64>]) -> f64 {
    -sig(dot(pos, h)).ln() - negs.iter().map(|u| sig(-dot(u, h)).ln()).sum::<f64>()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Largest relative error between the applied update (lr = 1, so minus the
/// gradient) and central differences of `loss` over every parameter.
fn fd_worst(before: &[Vec<f64>], after: &[Vec<f64>], loss: impl Fn(&[Vec<f64>]) -> f64) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for which in 0..before.len() {
        for idx in 0..before[which].len() {
            let mut p = before.to_vec();
            let mut m = before.to_vec();
            p[which][idx] += h;
            m[which][idx] -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            let analytic = before[which][idx] - after[which][idx];
            if fd.abs() > 1e-8 || analytic.abs() > 1e-8 {
                worst = worst.max(rel_err(fd, analytic));
            }
        }
    }
    worst
}

fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-0.6..0.6)).collect()
}

fn numerical_core() -> Result<Status> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let row = |m: &[f64], dim: usize, r: usize| m[r * dim..(r + 1) * dim].to_vec();

    let (v, dim) = (24, 16);
    let (center, context, negs) = (3usize, 7usize, [1usize, 12, 7, 20, 12]);
    let before = vec![rand_vec(v * dim, &mut rng), rand_vec(v * dim, &mut rng)];
    let input = SharedMatrix::from_values(v, dim, &before[0]);
    let output = SharedMatrix::from_values(v, dim, &before[1]);
    let neg32: Vec<u32> = negs.iter().map(|&n| n as u32).collect();
    sgns_step(&input, &output, center as u32, context as u32, &neg32, 1.0);
    let sgns = fd_worst(&before, &[input.to_vec(), output.to_vec()], |m| {
        let nv: Vec<Vec<f64>> = negs.iter().map(|&n| row(&m[1], dim, n)).collect();
        ref_loss(&row(&m[0], dim, center), &row(&m[1], dim, context), &nv)
    });
    ensure!(sgns < 1e-4, "skip-gram gradient relative error {sgns:e}");

    let (v, nd, dim) = (20, 3, 12);
    let (doc, ctx, center, negs) = (1usize, [2usize, 5, 2, 9], 4usize, [0usize, 11, 5]);
    let before = vec![rand_vec(nd * dim, &mut rng), rand_vec(v * dim, &mut rng), rand_vec(v * dim, &mut rng)];
    let docs = SharedMatrix::from_values(nd, dim, &before[0]);
    let win = SharedMatrix::from_values(v, dim, &before[1]);
    let wout = SharedMatrix::from_values(v, dim, &before[2]);
    let ctx32: Vec<u32> = ctx.iter().map(|&c| c as u32).collect();
    let neg32: Vec<u32> = negs.iter().map(|&n| n as u32).collect();
    pvdm_step(&docs, &win, &wout, doc, &ctx32, center as u32, &neg32, 1.0);
    let pvdm = fd_worst(&before, &[docs.to_vec(), win.to_vec(), wout.to_vec()], |m| {
        let mut h = row(&m[0], dim, doc);
        for &c in &ctx {
            for (a, b) in h.iter_mut().zip(row(&m[1], dim, c)) {
                *a += b;
            }
        }
        h.iter_mut().for_each(|x| *x /= (1 + ctx.len()) as f64);
        let nv: Vec<Vec<f64>> = negs.iter().map(|&n| row(&m[2], dim, n)).collect();
        ref_loss(&h, &row(&m[2], dim, center), &nv)
    });
    ensure!(pvdm < 1e-4, "PV-DM gradient relative error {pvdm:e}");

    let lines = [
        "the senator voted for the tax bill",
        "the senator opposed the gun bill",
        "the farmer grew corn and wheat",
        "the farmer sold wheat and corn",
        "congress passed the tax bill",
    ];
    let corpus: Vec<Vec<String>> = (0..40).flat_map(|_| lines.iter()).map(|l| l.split(' ').map(String::from).collect()).collect();
    let cfg = W2VConfig { dim: 16, window: 2, epochs: 8, min_count: 1, subsample: 0.0, seed: 9, workers: 1, ..Default::default() };
    let bits = |m: &W2VModel| m.input.to_vec().iter().chain(m.output.to_vec().iter()).map(|x| x.to_bits()).collect::<Vec<_>>();
    let a = train_word2vec(&corpus, &cfg)?;
    let b = train_word2vec(&corpus, &cfg)?;
    ensure!(bits(&a) == bits(&b), "single-worker training is not reproducible");
    let l = &a.report.epoch_losses;
    ensure!(l.windows(2).all(|w| w[1] <= w[0] * 1.05), "epoch losses rise beyond 5%: {l:?}");
    ensure!(l.last() < l.first(), "loss did not decrease: {l:?}");
    Ok(Status::Pass(format!("grad rel err {sgns:.1e} (SGNS), {pvdm:.1e} (PV-DM); {} epochs, loss {:.3} -> {:.3}", l.len(), l[0], l[l.len() - 1])))
}

fn random_unit_set(n: usize, dim: usize, seed: u64) -> Result<EmbeddingSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = EmbeddingSet::new(dim, DatasetKind::Other, Provenance::External);
    for i in 0..n {
        set.push(format!("v{i:04}"), (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect())?;
    }
    set.normalize()?;
    Ok(set)
}

fn ann_oracle() -> Result<Status> {
    let start = Instant::now();
    let set = random_unit_set(1000, 25, 17)?;
    let idx = AnnIndex::build(set.clone(), AnnParams { n_trees: 50, ..AnnParams::default() })?;
    for i in 0..set.len() {
        let q = set.row(i);
        let got = idx.query(q, 10, Some(set.len()))?;
        let want = exact_knn(&set, q, 10)?;
        let ids = |v: &[polariscope::ann::Neighbor]| v.iter().map(|n| n.id.clone()).collect::<Vec<_>>();
        ensure!(ids(&got) == ids(&want), "query {i}: full search differs from exact ranking");
    }
    let recall = idx.measure_recall(10, 1000, 3, None)?;
    ensure!(recall >= 0.95, "recall@10 {recall:.3} with 50 trees");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(Status::Pass(format!("1000/1000 full searches exact, recall@10 {recall:.3}, {:.2}s", elapsed.as_secs_f64())))
}

fn classification_properties() -> Result<Status> {
    let docs = party_signal_corpus(&SignalCorpusConfig::default());
    let pairs: Vec<(String, Vec<String>)> = docs.iter().map(|d| (d.id.clone(), d.tokens.clone())).collect();
    let cfg = D2VConfig {
        base: W2VConfig { dim: 32, epochs: 20, min_count: 1, subsample: 0.0, ..W2VConfig::default() },
        mode: D2VMode::PvDbow,
        ..D2VConfig::default()
    };
    let set = train_doc2vec(&pairs, &cfg, DatasetKind::Political)?.to_embedding_set();
    let vectors = docs.iter().map(|d| set.get(&d.id).unwrap().iter().map(|&x| x as f64).collect()).collect();
    let labeled =
        LabeledSet::new(docs.iter().map(|d| d.id.clone()).collect(), vectors, docs.iter().map(|d| d.label).collect(), DatasetKind::Political)?;
    let acc = train_and_evaluate(&labeled, &SplitConfig::default(), &SvmConfig::default())?.accuracy;
    ensure!(acc >= 0.95, "planted-signal accuracy {acc:.3}");
    let runs: Vec<f64> = (0..10)
        .map(|s| train_and_evaluate(&labeled.shuffled_labels(100 + s), &SplitConfig { seed: s, ..SplitConfig::default() }, &SvmConfig::default()).map(|r| r.accuracy))
        .collect::<Result<_, _>>()?;
    let shuffled = runs.iter().sum::<f64>() / runs.len() as f64;
    ensure!((shuffled - 0.5).abs() <= 0.07, "shuffled-label mean {shuffled:.3}");

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..500 {
        let n = rng.random_range(1..60);
        let labels: Vec<i8> = (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
        let assign: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let (a, _) = cluster_accuracy(&assign, &labels);
        ensure!(a >= 0.5, "cluster accuracy {a} below 0.5");
        let consistent: Vec<usize> = labels.iter().map(|&l| usize::from(l == 1)).collect();
        let flipped: Vec<usize> = consistent.iter().map(|c| 1 - c).collect();
        ensure!(cluster_accuracy(&consistent, &labels).0 == 1.0 && cluster_accuracy(&flipped, &labels).0 == 1.0, "consistent clusters below 1.0");
    }
    Ok(Status::Pass(format!("planted signal {acc:.3}, shuffled mean {shuffled:.3}, cluster accuracy bounds hold on 500 draws")))
}

/// Needs a working directory built from a real scrape; point
/// POLARISCOPE_REAL_WORKDIR at one after running `classify` there.
fn real_data_ordering() -> Result<Status> {
    let Ok(dir) = std::env::var("POLARISCOPE_REAL_WORKDIR") else {
        return Ok(Status::NotRun("set POLARISCOPE_REAL_WORKDIR to a classified workdir built from scraped pages".into()));
    };
    let wd = Workdir::new(&dir);
    let rows: Vec<AccuracyRow> = store::load_json(&wd.report("classify.json")).with_context(|| format!("{dir}: run `polariscope classify` first"))?;
    let checks = ordering_checks(&rows);
    let summary: Vec<String> = checks.iter().map(|c| format!("{}: {:?}", c.claim, c.holds)).collect();
    ensure!(checks.iter().all(|c| c.holds == Some(true)), "{}", summary.join("; "));
    Ok(Status::Pass(summary.join("; ")))
}

fn angle_set(points: &[(String, f64)]) -> Result<EmbeddingSet> {
    let mut s = EmbeddingSet::new(2, DatasetKind::Political, Provenance::External);
    for (id, deg) in points {
        let r = deg.to_radians();
        s.push(id.clone(), vec![r.cos() as f32, r.sin() as f32])?;
    }
    s.normalize()?;
    Ok(s)
}

/// Candidate at 0°, twenty neighbors at 1°..20° of which the first `same`
/// share its party, then distant members of the other party.
fn twenty_neighbor_ratio(party: PartyKind, same: usize) -> Result<f64> {
    let other = if party == D { R } else { D };
    let mut pts = vec![("c".to_string(), 0.0)];
    let mut parties = HashMap::from([("c".to_string(), party)]);
    for i in 1..=20 {
        pts.push((format!("n{i:02}"), i as f64));
        parties.insert(format!("n{i:02}"), if i <= same { party } else { other });
    }
    for i in 0..10 {
        pts.push((format!("far{i}"), 150.0 + i as f64));
        parties.insert(format!("far{i}"), other);
    }
    let idx = AnnIndex::build(angle_set(&pts)?, AnnParams::default())?;
    Ok(candidate_polarization(&idx, "c", 20, &parties, None)?.ratio)
}

fn polarization_metric() -> Result<Status> {
    let mut ns = vec![R; 18];
    ns.extend([D, D]);
    ensure!(party_ratio(R, &ns) == (18, 0.9), "18 of 20");
    let mut ns = vec![D; 16];
    ns.extend([R; 4]);
    ensure!(party_ratio(D, &ns) == (16, 0.8), "16 of 20");
    ensure!(twenty_neighbor_ratio(R, 18)? == 0.9, "indexed 18/2 fixture");
    ensure!(twenty_neighbor_ratio(D, 16)? == 0.8, "indexed 16/4 fixture");

    // Exhaustive oracle: angular distance on the circle, ties by id,
    // self and minor-party members skipped.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts: Vec<(String, f64, PartyKind)> = (0..40)
        .map(|i| (format!("p{i:02}"), rng.random_range(0.0..360.0), [D, R, D, R, O][rng.random_range(0..5)]))
        .collect();
    let set = angle_set(&pts.iter().map(|(i, a, _)| (i.clone(), *a)).collect::<Vec<_>>())?;
    let parties: HashMap<String, PartyKind> = pts.iter().map(|(i, _, p)| (i.clone(), *p)).collect();
    let idx = AnnIndex::build(set, AnnParams { n_trees: 5, leaf_capacity: 3, seed: 4 })?;
    let majors = pts.iter().filter(|p| p.2 != O).count();
    let mut compared = 0;
    for (q, qa, qp) in pts.iter().filter(|p| p.2 != O) {
        for k in 1..majors {
            let mut others: Vec<(f64, &str, PartyKind)> = pts
                .iter()
                .filter(|(i, _, p)| i != q && *p != O)
                .map(|(i, a, p)| {
                    let d = (a - qa).rem_euclid(360.0);
                    (d.min(360.0 - d), i.as_str(), *p)
                })
                .collect();
            others.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(y.1)));
            let expect: Vec<&str> = others.iter().take(k).map(|x| x.1).collect();
            let same = others.iter().take(k).filter(|x| x.2 == *qp).count();
            let s = candidate_polarization(&idx, q, k, &parties, None)?;
            let got: Vec<&str> = s.neighbors.iter().map(|n| n.id.as_str()).collect();
            ensure!(got == expect, "{q} k={k}: {got:?} vs {expect:?}");
            ensure!(s.ratio == same as f64 / k as f64, "{q} k={k}: ratio {}", s.ratio);
            compared += 1;
        }
    }

    let record = AttentionRecord {
        id: "x".into(),
        tokens: (1..=100).map(|i| format!("w{i}")).collect(),
        scores: (1..=100).map(f64::from).collect(),
        layer_note: String::new(),
    };
    let top = attention_top_words(&record, 90.0)?;
    ensure!(top.tokens.len() == 11, "p90 over 1..100 selected {}", top.tokens.len());
    Ok(Status::Pass(format!("0.9 and 0.8 exact, {compared} oracle comparisons, p90 selects {}", top.tokens.len())))
}

fn flip_detected(path: &Path, load: impl Fn() -> Result<(), StoreError>) -> Result<usize> {
    let good = std::fs::read(path)?;
    let mut checked = 0;
    for pos in [0, good.len() / 3, good.len() / 2, good.len() - 1] {
        let mut bad = good.clone();
        bad[pos] ^= 0x20;
        std::fs::write(path, &bad)?;
        ensure!(load().is_err(), "{}: flipped byte {pos} went unnoticed", path.display());
        checked += 1;
    }
    std::fs::write(path, &good)?;
    load().map_err(|e| anyhow::anyhow!("restored file fails: {e}"))?;
    Ok(checked)
}

fn persistence() -> Result<Status> {
    let src = Workdir::new(common::fixture_workdir());
    let dir = tempfile::tempdir()?;
    let corpus = store::load_corpus(&src.clean_corpus())?;
    let cpath = dir.path().join("corpus.jsonl");
    store::save_corpus(&corpus, &cpath)?;
    ensure!(store::load_corpus(&cpath)? == corpus, "corpus round trip");

    let (kind, prov) = (DatasetKind::Political, Provenance::TrainedD2V);
    let set = store::load_embeddings(&src.embeddings(kind, polariscope_service::Source::D2v), kind, prov)?;
    let epath = dir.path().join("set.pemb");
    store::save_embeddings(&set, &epath)?;
    let back = store::load_embeddings(&epath, kind, prov)?;
    ensure!(back.ids() == set.ids(), "embedding ids round trip");
    ensure!(set.iter().zip(back.iter()).all(|(a, b)| a.1.iter().zip(b.1).all(|(x, y)| x.to_bits() == y.to_bits())), "embedding values round trip");

    let idx = AnnIndex::build(set.clone(), AnnParams { n_trees: 7, leaf_capacity: 2, seed: 5 })?;
    let ipath = dir.path().join("set.pann");
    store::save_index(&idx, &ipath)?;
    let reloaded = store::load_index(&ipath, back)?;
    for id in set.ids() {
        for k in 1..set.len() {
            ensure!(idx.query_id(id, k, None)? == reloaded.query_id(id, k, None)?, "reloaded index differs for {id} k={k}");
        }
    }

    let rows: Vec<AccuracyRow> = store::load_json(&src.report("classify.json"))?;
    let jpath = dir.path().join("rows.json");
    store::save_json(&rows, &jpath)?;
    let again: Vec<AccuracyRow> = store::load_json(&jpath)?;
    ensure!(serde_json::to_value(&again)? == serde_json::to_value(&rows)?, "report round trip");

    let mut flips = flip_detected(&cpath, || store::load_corpus(&cpath).map(drop))?;
    flips += flip_detected(&epath, || store::load_embeddings(&epath, kind, prov).map(drop))?;
    flips += flip_detected(&ipath, || store::load_index(&ipath, set.clone()).map(drop))?;
    flips += flip_detected(&jpath, || store::load_json::<Vec<AccuracyRow>>(&jpath).map(drop))?;
    Ok(Status::Pass(format!("4 formats round-trip, {flips}/{flips} single-byte flips rejected, reloaded index identical")))
}

fn api_contract() -> Result<Status> {
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    rt.block_on(async {
        let schema = common::schema_failures().await;
        ensure!(schema.is_empty(), "schema: {schema:?}");
        let errors = common::error_code_failures().await;
        ensure!(errors.is_empty(), "errors: {errors:?}");
        let (recompute, n) = common::recomputation_failures().await;
        ensure!(recompute.is_empty(), "recomputation: {recompute:?}");
        Ok(Status::Pass(format!(
            "{} endpoints schema-valid, {} error cases, {n} ratios recomputed from neighbors",
            common::OK_CASES.len(),
            common::ERROR_CASES.len()
        )))
    })
}
