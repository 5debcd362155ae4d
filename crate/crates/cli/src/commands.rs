use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use clinsent::corpus::{distribution, filter_by_domain, generate_synthetic, parse_corpus, Corpus, GenSpec, RiskDomain, SentimentLabel, Split};
use clinsent::embedding::{load_store_inferred, Embedding, EmbeddingError, EmbeddingProvider, HashingEmbedder};
use clinsent::lexicon::{evaluate_baseline, load_lexicon, Lexicon, LexiconBaseline, LexiconConfig};
use clinsent::metrics::{
    multi_rater_agreement, parse_annotation_matrix, parse_rows_tsv, tally_by_domain, EvalReport, MetricsError, PrfRow,
};
use clinsent::neuralnet::Hyperparams;
use clinsent::persist::{load_suite, save_suite};
use clinsent::semisup::{augment_suite, AugmentMethod, UnlabeledPool};
use clinsent::suite::{domain_seed, evaluate_suite, grid_search, predict_example, train_suite, GridResult, GridSpec};
use clinsent::{Store, Suite};

use crate::config::{EmbeddingSource, MethodName};
use crate::error::CliError;
use crate::manifest::{write_atomic, Recorder};
use crate::Command;

/// The configured source of sentence vectors.
pub enum Provider {
    Store(Store),
    Hashing(HashingEmbedder),
}

impl EmbeddingProvider<f64> for Provider {
    fn dim(&self) -> usize {
        match self {
            Provider::Store(s) => EmbeddingProvider::<f64>::dim(s),
            Provider::Hashing(h) => EmbeddingProvider::<f64>::dim(h),
        }
    }

    fn embed(&self, id: &str, text: &str) -> Result<Embedding<f64>, EmbeddingError> {
        match self {
            Provider::Store(s) => s.embed(id, text),
            Provider::Hashing(h) => h.embed(id, text),
        }
    }
}

pub fn dispatch(cmd: &Command, rec: &mut Recorder) -> Result<(), CliError> {
    match cmd {
        Command::Validate { corpus, .. } => validate(rec, corpus),
        Command::Stats { corpus } => stats(rec, corpus),
        Command::GenSynth { genspec, as_pool, name } => gen_synth(rec, genspec.as_deref(), *as_pool, name.as_deref()),
        Command::Baseline { corpus, split, .. } => baseline(rec, corpus, (*split).into()),
        Command::Train { corpus, grid, .. } => train(rec, corpus, grid.as_deref()),
        Command::Predict { model, corpus, split, .. } => predict(rec, model, corpus, (*split).into()),
        Command::Evaluate { corpus, predictions, rows, aggregate_only, name, split } => match (rows, corpus, predictions) {
            (Some(rows), _, _) => evaluate_rows(rec, rows, *aggregate_only, name.clone()),
            (None, Some(c), Some(p)) => evaluate_predictions(rec, c, p, (*split).into(), *aggregate_only, name.clone()),
            _ => Err(CliError::validation("evaluate needs --rows, or --corpus with --predictions")),
        },
        Command::Agreement { annotations } => agreement(rec, annotations),
        Command::Augment { model, corpus, pool, .. } => augment(rec, model, corpus, pool),
        Command::Report { evals } => report(rec, evals),
    }
}

fn open(rec: &mut Recorder, path: &Path) -> Result<BufReader<File>, CliError> {
    let f = File::open(path).map_err(|e| CliError::validation(format!("cannot open {}: {e}", path.display())))?;
    rec.input(path)?;
    Ok(BufReader::new(f))
}

fn read_corpus(rec: &mut Recorder, path: &Path) -> Result<Corpus, CliError> {
    let reader = open(rec, path)?;
    parse_corpus(reader).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn provider(rec: &mut Recorder) -> Result<Provider, CliError> {
    match rec.config().embeddings.clone() {
        EmbeddingSource::Store(path) => {
            let reader = open(rec, &path)?;
            let store = load_store_inferred(reader).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
            Ok(Provider::Store(store))
        }
        EmbeddingSource::Hashing(cfg) => {
            rec.seed("hashing_embedder", cfg.seed);
            HashingEmbedder::new(cfg).map(Provider::Hashing).map_err(CliError::validation)
        }
    }
}

fn load_model(rec: &mut Recorder, dir: &Path) -> Result<Suite, CliError> {
    let suite = load_suite::<f64>(dir).map_err(CliError::validation)?;
    rec.input(dir)?;
    rec.seed("suite", suite.seed());
    Ok(suite)
}

fn check_dims(suite: &Suite, p: &Provider) -> Result<(), CliError> {
    if suite.dim() != p.dim() {
        return Err(CliError::validation(format!(
            "model expects {}-dimensional vectors but the embedding source yields {}",
            suite.dim(),
            p.dim()
        )));
    }
    Ok(())
}

fn out_path(rec: &Recorder, name: &str) -> Result<PathBuf, CliError> {
    let dir = &rec.config().out;
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    Ok(dir.join(name))
}

fn write_out(rec: &mut Recorder, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let path = out_path(rec, name)?;
    write_atomic(&path, bytes)?;
    rec.output(&path);
    Ok(path)
}

fn write_eval(rec: &mut Recorder, stem: &str, report: &EvalReport) -> Result<(), CliError> {
    write_out(rec, &format!("{stem}.json"), report.to_json().as_bytes())?;
    write_out(rec, &format!("{stem}.tsv"), report.to_tsv().as_bytes())?;
    Ok(())
}

fn print_eval(report: &EvalReport, aggregate_only: bool) {
    let tsv = report.to_tsv();
    if aggregate_only {
        let mut lines = tsv.lines();
        lines.next().into_iter().chain(lines.filter(|l| l.starts_with("all\t"))).for_each(|l| println!("{l}"));
    } else {
        print!("{tsv}");
    }
}

fn validate(rec: &mut Recorder, corpus: &Path) -> Result<(), CliError> {
    let corpus = read_corpus(rec, corpus)?;
    let p = provider(rec)?;
    for ex in corpus.examples() {
        p.embed(&ex.id, &ex.text).map_err(|e| CliError::validation(format!("example {}: {e}", ex.id)))?;
    }
    println!(
        "ok: {} examples, {} annotations, {}-dimensional vectors",
        corpus.len(),
        corpus.annotation_count(),
        p.dim()
    );
    Ok(())
}

fn stats(rec: &mut Recorder, corpus: &Path) -> Result<(), CliError> {
    let corpus = read_corpus(rec, corpus)?;
    let tsv = distribution(&corpus).to_tsv();
    write_out(rec, "stats.tsv", tsv.as_bytes())?;
    print!("{tsv}");
    Ok(())
}

#[derive(Serialize)]
struct PoolLine<'a> {
    id: &'a str,
    text: &'a str,
}

fn gen_synth(rec: &mut Recorder, genspec: Option<&Path>, as_pool: bool, name: Option<&str>) -> Result<(), CliError> {
    let spec = match genspec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
            rec.input(path)?;
            GenSpec::from_json(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        }
        None => GenSpec::table2(),
    };
    let seed = rec.config().seed;
    rec.seed("synthetic", seed);
    let corpus = generate_synthetic(&spec, seed).map_err(CliError::validation)?;
    let (default_name, body) = if as_pool {
        let mut body = String::new();
        for ex in corpus.examples() {
            body.push_str(&serde_json::to_string(&PoolLine { id: &ex.id, text: &ex.text }).map_err(CliError::runtime)?);
            body.push('\n');
        }
        ("pool.jsonl", body)
    } else {
        ("synthetic.jsonl", corpus.to_jsonl_string())
    };
    let path = write_out(rec, name.unwrap_or(default_name), body.as_bytes())?;
    println!("wrote {} sentences to {}", corpus.len(), path.display());
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct PredictionLine {
    id: String,
    domain: RiskDomain,
    label: SentimentLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scores: Option<BTreeMap<SentimentLabel, f64>>,
}

fn jsonl(lines: &[PredictionLine]) -> Result<String, CliError> {
    let mut out = String::new();
    for l in lines {
        out.push_str(&serde_json::to_string(l).map_err(CliError::runtime)?);
        out.push('\n');
    }
    Ok(out)
}

fn baseline(rec: &mut Recorder, corpus: &Path, split: Split) -> Result<(), CliError> {
    let corpus = read_corpus(rec, corpus)?;
    let settings = rec.config().lexicon.clone();
    let lexicon = match &settings.path {
        Some(path) => {
            let reader = open(rec, path)?;
            load_lexicon(reader).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        }
        None => Lexicon::standin(),
    };
    let config = LexiconConfig::new(settings.tau).map_err(CliError::validation)?;
    let baseline = LexiconBaseline { lexicon, config };

    let mut lines = Vec::new();
    for ex in corpus.examples().iter().filter(|e| e.split == split) {
        let label = baseline.predict(&ex.text);
        lines.extend(ex.domains().map(|domain| PredictionLine { id: ex.id.clone(), domain, label, scores: None }));
    }
    write_out(rec, "baseline_predictions.jsonl", jsonl(&lines)?.as_bytes())?;
    let report = evaluate_baseline(&baseline, &corpus, split, Some("baseline".into())).map_err(CliError::validation)?;
    write_eval(rec, "baseline_eval", &report)?;
    print_eval(&report, false);
    Ok(())
}

#[derive(Serialize)]
struct GridReport {
    chosen: Hyperparams,
    /// Mean held-out macro-F1 of each cell, averaged over domains.
    cell_means: Vec<f64>,
    per_domain: BTreeMap<RiskDomain, GridResult>,
}

/// Tunes each domain by cross-validation and keeps the cell with the best
/// macro-F1 averaged over all domains, so the suite shares one setting.
fn tune(rec: &mut Recorder, corpus: &Corpus, p: &Provider, grid_path: &Path) -> Result<Hyperparams, CliError> {
    let text = fs::read_to_string(grid_path).map_err(|e| CliError::validation(format!("{}: {e}", grid_path.display())))?;
    rec.input(grid_path)?;
    let mut grid: GridSpec =
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", grid_path.display())))?;
    grid.folds = rec.config().folds;
    grid.validate().map_err(CliError::validation)?;
    let base = rec.config().hyperparams.clone();
    let alpha = rec.config().alpha;
    let seed = rec.config().seed;

    let train = corpus.split(Split::Train);
    let mut per_domain = BTreeMap::new();
    for domain in RiskDomain::ALL {
        let pairs = filter_by_domain(&train, domain)
            .iter()
            .map(|it| Ok((p.embed(it.id, it.text)?.into_inner(), it.label)))
            .collect::<Result<Vec<_>, EmbeddingError>>()
            .map_err(CliError::validation)?;
        let s = domain_seed(seed, domain);
        rec.seed(format!("grid/{domain}"), s);
        let result = grid_search::<f64, _>(&pairs, &base, &grid, alpha, s).map_err(CliError::runtime)?;
        per_domain.insert(domain, result);
    }
    let n_cells = grid.cells(&base).len();
    let cell_means: Vec<f64> = (0..n_cells)
        .map(|i| per_domain.values().map(|r: &GridResult| r.cells[i].mean_macro_f1).sum::<f64>() / per_domain.len() as f64)
        .collect();
    let best = (0..n_cells).fold(0, |b, i| if cell_means[i] > cell_means[b] { i } else { b });
    let chosen = per_domain.values().next().expect("seven domains").cells[best].hyper.clone();
    log::info!("grid search chose cell {best} with mean macro-F1 {:.4}", cell_means[best]);
    let report = GridReport { chosen: chosen.clone(), cell_means, per_domain };
    write_out(rec, "grid.json", serde_json::to_string_pretty(&report).map_err(CliError::runtime)?.as_bytes())?;
    Ok(chosen)
}

fn train(rec: &mut Recorder, corpus: &Path, grid: Option<&Path>) -> Result<(), CliError> {
    let corpus = read_corpus(rec, corpus)?;
    let p = provider(rec)?;
    let hyper = match grid {
        Some(g) => tune(rec, &corpus, &p, g)?,
        None => rec.config().hyperparams.clone(),
    };
    let (alpha, seed) = (rec.config().alpha, rec.config().seed);
    rec.seed("suite", seed);
    for d in RiskDomain::ALL {
        rec.seed(format!("domain/{d}"), domain_seed(seed, d));
    }
    let suite: Suite = train_suite(&corpus, &p, &hyper, alpha, seed).map_err(|e| match e {
        clinsent::suite::SuiteError::NoTrainingData(_) | clinsent::suite::SuiteError::Embedding(_) => CliError::validation(e),
        _ => CliError::runtime(e),
    })?;
    let dir = out_path(rec, "model")?;
    save_suite(&suite, &dir).map_err(CliError::runtime)?;
    rec.output(&dir);
    let report = evaluate_suite(&suite, &corpus, &p, Split::Train, Some("training fit".into())).map_err(CliError::runtime)?;
    println!("trained 7 domain models into {} (training macro-F1 {:.3})", dir.display(), report.all.macro_f1());
    Ok(())
}

fn predict(rec: &mut Recorder, model: &Path, corpus: &Path, split: Split) -> Result<(), CliError> {
    let suite = load_model(rec, model)?;
    let corpus = read_corpus(rec, corpus)?;
    let p = provider(rec)?;
    check_dims(&suite, &p)?;
    let mut lines = Vec::new();
    for ex in corpus.examples().iter().filter(|e| e.split == split) {
        let preds = predict_example(&suite, ex, &p).map_err(CliError::validation)?;
        lines.extend(preds.into_iter().map(|(domain, pred)| PredictionLine {
            id: ex.id.clone(),
            domain,
            label: pred.label,
            scores: Some(SentimentLabel::ALL.iter().map(|&l| (l, pred.scores[l.index()])).collect()),
        }));
    }
    let path = write_out(rec, "predictions.jsonl", jsonl(&lines)?.as_bytes())?;
    println!("wrote {} predictions to {}", lines.len(), path.display());
    Ok(())
}

fn read_predictions(rec: &mut Recorder, path: &Path) -> Result<HashMap<(String, RiskDomain), SentimentLabel>, CliError> {
    let reader = open(rec, path)?;
    let mut map = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: String| CliError::validation(format!("{} line {}: {m}", path.display(), i + 1));
        let p: PredictionLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if map.insert((p.id.clone(), p.domain), p.label).is_some() {
            return Err(bad(format!("duplicate prediction for {} / {}", p.id, p.domain)));
        }
    }
    Ok(map)
}

fn evaluate_predictions(
    rec: &mut Recorder,
    corpus: &Path,
    predictions: &Path,
    split: Split,
    aggregate_only: bool,
    name: Option<String>,
) -> Result<(), CliError> {
    let corpus = read_corpus(rec, corpus)?;
    let preds = read_predictions(rec, predictions)?;
    let examples = corpus.examples().iter().filter(|e| e.split == split);
    let matrices = tally_by_domain(examples, |ex| {
        ex.domains()
            .map(|d| {
                preds
                    .get(&(ex.id.clone(), d))
                    .map(|&l| (d, l))
                    .ok_or_else(|| CliError::validation(format!("no prediction for example {} in domain {d}", ex.id)))
            })
            .collect()
    })?;
    let report = EvalReport::from_confusions(name, &matrices).map_err(CliError::validation)?;
    write_eval(rec, "eval", &report)?;
    print_eval(&report, aggregate_only);
    Ok(())
}

fn evaluate_rows(rec: &mut Recorder, rows: &Path, aggregate_only: bool, name: Option<String>) -> Result<(), CliError> {
    let reader = open(rec, rows)?;
    let parsed = parse_rows_tsv(reader).map_err(|e| CliError::validation(format!("{}: {e}", rows.display())))?;
    let report = EvalReport::from_rows(name, parsed).map_err(|e: MetricsError| CliError::validation(format!("{}: {e}", rows.display())))?;
    write_eval(rec, "eval", &report)?;
    print_eval(&report, aggregate_only);
    Ok(())
}

fn agreement(rec: &mut Recorder, annotations: &Path) -> Result<(), CliError> {
    let reader = open(rec, annotations)?;
    let matrix = parse_annotation_matrix(reader).map_err(|e| CliError::validation(format!("{}: {e}", annotations.display())))?;
    let report = multi_rater_agreement(&matrix);
    write_out(rec, "agreement.json", serde_json::to_string_pretty(&report).map_err(CliError::runtime)?.as_bytes())?;
    println!("items\t{}\nraters\t{}", report.items, report.raters);
    println!("fleiss_kappa\t{:.3}", report.fleiss_kappa);
    println!("mean_pairwise_cohen_kappa\t{:.3}", report.mean_pairwise_cohen);
    println!("mean_pairwise_scott_pi\t{:.3}", report.mean_pairwise_scott);
    Ok(())
}

fn augment(rec: &mut Recorder, model: &Path, corpus: &Path, pool: &Path) -> Result<(), CliError> {
    let suite = load_model(rec, model)?;
    let corpus = read_corpus(rec, corpus)?;
    let p = provider(rec)?;
    check_dims(&suite, &p)?;
    let reader = open(rec, pool)?;
    let pool: UnlabeledPool<f64> =
        UnlabeledPool::from_jsonl(reader, &p).map_err(|e| CliError::validation(format!("{}: {e}", pool.display())))?;

    let cfg = rec.config().clone();
    let method = match cfg.semisup.method {
        MethodName::SelfTrain => AugmentMethod::SelfTrain { floor: cfg.semisup.floor },
        MethodName::Knn => AugmentMethod::Knn { k: cfg.semisup.k },
    };
    let (augmented, reports) =
        augment_suite(&suite, &corpus, &p, &pool, method, cfg.semisup.ratio, &cfg.hyperparams, cfg.alpha)
            .map_err(CliError::runtime)?;
    let dir = out_path(rec, "model-augmented")?;
    save_suite(&augmented, &dir).map_err(CliError::runtime)?;
    rec.output(&dir);
    write_out(rec, "augmentation.json", serde_json::to_string_pretty(&reports).map_err(CliError::runtime)?.as_bytes())?;
    for (d, r) in &reports {
        println!(
            "{d}\t{}\tlabeled {}\tpseudo {}\tachieved {}{}",
            r.method,
            r.labeled_count,
            r.pseudo_count,
            r.achieved_ratio,
            if r.shortfall { "\tshortfall" } else { "" }
        );
    }
    Ok(())
}

const REPORT_HEADER: [&str; 11] =
    ["Model", "Domain", "Pos P", "Pos R", "Pos F1", "Neg P", "Neg R", "Neg F1", "Neu P", "Neu R", "Neu F1"];

fn report_row(model: &str, domain: &str, row: &PrfRow) -> String {
    let mut cells = vec![model.to_string(), domain.to_string()];
    cells.extend(row.to_array().iter().map(|v| format!("{v:.3}")));
    cells.join("\t")
}

/// One block per report: the averaged row first, then each domain.
pub fn render_report(reports: &[(String, EvalReport)]) -> String {
    let mut out = REPORT_HEADER.join("\t");
    out.push('\n');
    for (name, r) in reports {
        out.push_str(&report_row(name, "All", &r.all));
        out.push('\n');
        for (d, row) in &r.domains {
            out.push_str(&report_row("", &d.to_string(), row));
            out.push('\n');
        }
    }
    out
}

fn report(rec: &mut Recorder, evals: &[PathBuf]) -> Result<(), CliError> {
    let mut reports = Vec::new();
    for path in evals {
        let reader = open(rec, path)?;
        let r: EvalReport =
            serde_json::from_reader(reader).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let name = r.model.clone().unwrap_or_else(|| path.file_stem().unwrap_or_default().to_string_lossy().into_owned());
        reports.push((name, r));
    }
    let table = render_report(&reports);
    write_out(rec, "report.tsv", table.as_bytes())?;
    print!("{table}");
    Ok(())
}
