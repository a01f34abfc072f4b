use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use engage_core::analysis::{
    compare_group_scalar, md_given_seeker_position, position_long_rows, ps_first_response_quartiles,
    quartile_long_rows, response_time_ratio, retention, retention_long_rows, write_long_csv, write_positions_csv,
    write_quartiles_csv, write_retention_csv, BootstrapConfig, GroupBy, LongRow, RetentionOptions, RetentionRole,
    ScalarField,
};
use engage_core::format::{file_sha256, Provenance};
use engage_core::generator::{
    generate_corpus, read_spec, read_truth_csv, recovery_score, sample_spec, write_spec, write_truth_csv,
    GroundTruthSpec,
};
use engage_core::indicators::{indicator_record, write_indicators_csv};
use engage_core::ingest::{corpus_to_posts, ingest, read_corpus, write_corpus_with, write_posts_to};
use engage_core::mixture::{
    assign, elbow_select, gibbs_fit_with_trace, read_model, sweep_k, write_assignments_csv, write_curve_csv,
    write_model, write_trace_csv, EngagementModel, FitConfig,
};
use engage_core::scaling::{apply_scaling, scale_corpus, ScalingConfig};
use engage_core::taxonomy::{build_taxonomy_with, read_label_overrides, render_report, TaxonomyReport};
use engage_core::{Corpus, EngageError, InteractionDegree, Thread};
use log::info;
use serde_json::json;

use crate::args::*;

fn provenance(seed: Option<u64>, inputs: &[(&str, &Path)]) -> Result<Provenance> {
    let mut p = Provenance { seed, ..Provenance::default() };
    for (name, path) in inputs {
        let sha = file_sha256(path).with_context(|| format!("reading {}", path.display()))?;
        p = p.input(*name, sha);
    }
    Ok(p)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    read_corpus(path).with_context(|| format!("reading corpus {}", path.display()))
}

fn load_model(path: &Path) -> Result<EngagementModel> {
    Ok(read_model(path).with_context(|| format!("reading model {}", path.display()))?.0)
}

fn fit_config(k: usize, f: &FitFlags) -> FitConfig {
    FitConfig {
        n_sweeps: f.sweeps,
        early_stop_frac: f.early_stop,
        min_cluster_for_mom: f.min_cluster,
        ..FitConfig::new(k, f.seed)
    }
}

fn boot_options(b: &BootFlags) -> RetentionOptions {
    RetentionOptions {
        horizon_seconds: b.horizon,
        bootstrap: BootstrapConfig { n_boot: b.boot, level: b.level, seed: b.seed },
    }
}

pub fn ingest_cmd(a: &IngestArgs) -> Result<()> {
    let f = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let (corpus, report) = ingest(BufReader::new(f))?;
    if corpus.is_empty() {
        return Err(EngageError::EmptyCorpus.into());
    }
    let cfg = ScalingConfig { delta_cap: a.scaling.delta_cap, epsilon: a.scaling.epsilon, log_transform: a.scaling.log_deltas };
    let corpus = scale_corpus(corpus, &cfg)?;
    let prov = provenance(None, &[("posts", &a.input)])?;
    write_corpus_with(&corpus, &a.output, &prov)?;
    let summary = json!({ "provenance": prov, "validation": report });
    match &a.report {
        Some(p) => write_json(p, &summary)?,
        None => println!("{}", serde_json::to_string_pretty(&summary)?),
    }
    info!("wrote {} threads to {}", corpus.len(), a.output.display());
    Ok(())
}

pub fn simulate_cmd(a: &SimulateArgs) -> Result<()> {
    let mut spec = match (&a.spec, a.k) {
        (Some(path), _) => read_spec(path).with_context(|| format!("reading spec {}", path.display()))?,
        (None, Some(k)) => sample_spec(k, 50.0 / k.max(1) as f64, 50.0 / 4.0, a.seed)?,
        (None, None) => GroundTruthSpec::well_separated(a.n_threads, a.seed),
    };
    if a.spec.is_none() {
        spec.n_threads = a.n_threads;
        spec.seed = a.seed;
    }
    if let Some(f) = a.isolated_fraction {
        spec.options.isolated_fraction = f;
    }
    let synth = generate_corpus(&spec)?;
    let inputs: Vec<(&str, &Path)> = a.spec.iter().map(|p| ("spec", p.as_path())).collect();
    let prov = provenance(Some(spec.seed), &inputs)?;
    write_corpus_with(&synth.corpus, &a.output, &prov)?;
    if let Some(p) = &a.truth {
        write_truth_csv(&synth.truth, create(p)?, &prov)?;
    }
    if let Some(p) = &a.posts {
        write_posts_to(&corpus_to_posts(&synth.corpus), create(p)?)?;
    }
    if let Some(p) = &a.spec_out {
        write_spec(&spec, p, &prov)?;
    }
    println!(
        "generated {} threads ({} non-isolated) from {} clusters, seed {}; {} role repairs",
        synth.corpus.len(),
        synth.truth.len(),
        spec.k(),
        spec.seed,
        synth.report.repairs + synth.report.first_reply_overrides
    );
    Ok(())
}

pub fn fit_cmd(a: &FitArgs) -> Result<()> {
    let corpus = load_corpus(&a.input)?;
    let cfg = fit_config(a.k, &a.fit);
    let (model, trace) = gibbs_fit_with_trace(&corpus, &cfg)?;
    let prov = provenance(Some(cfg.seed), &[("corpus", &a.input)])?;
    write_model(&model, &a.output, &prov)?;
    if let Some(p) = &a.log {
        write_trace_csv(&trace, create(p)?, &prov)?;
    }
    println!(
        "fitted K={} on {} threads in {} sweeps{}; log-likelihood {:.3} -> {:.3}",
        model.k,
        model.n_threads_fit,
        model.sweeps_run,
        if trace.stopped_early { " (early stop)" } else { "" },
        trace.initial_log_likelihood,
        trace.final_log_likelihood()
    );
    if let Some(p) = &a.truth {
        let truth = read_truth_csv(File::open(p).with_context(|| format!("opening {}", p.display()))?)?;
        let ari = recovery_score(&truth, &model.assignments)?;
        println!("ARI {ari:.4}");
    }
    Ok(())
}

fn parse_k_values(s: &str) -> Result<Vec<usize>> {
    let parse = |x: &str| x.trim().parse::<usize>().with_context(|| format!("bad K value {x:?}"));
    let ks: Vec<usize> = match s.split_once("..") {
        Some((lo, hi)) => {
            let (lo, hi) = (parse(lo)?, parse(hi.trim_start_matches('='))?);
            (lo..=hi).collect()
        }
        None => s.split(',').map(parse).collect::<Result<_>>()?,
    };
    if ks.is_empty() || ks.contains(&0) {
        bail!(EngageError::Config(format!("K values {s:?} must be non-empty and positive")));
    }
    Ok(ks)
}

pub fn sweep_k_cmd(a: &SweepKArgs) -> Result<()> {
    let corpus = load_corpus(&a.input)?;
    let ks = parse_k_values(&a.k)?;
    let cfg = fit_config(ks[0], &a.fit);
    let curve = sweep_k(&corpus, &ks, &cfg)?;
    let prov = provenance(Some(cfg.seed), &[("corpus", &a.input)])?;
    write_curve_csv(&curve, create(&a.output)?, &prov)?;
    for (k, ll) in &curve {
        println!("K={k:<4} log-likelihood {ll:.3}");
    }
    if let Some(k) = elbow_select(&curve) {
        println!("elbow K={k}");
    }
    Ok(())
}

fn corpus_for_model(corpus: Corpus, model: &EngagementModel, rescale: bool) -> Result<Corpus> {
    if rescale && corpus.scaling != Some(model.scaling) {
        Ok(apply_scaling(corpus, &model.scaling)?)
    } else {
        Ok(corpus)
    }
}

pub fn assign_cmd(a: &AssignArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let corpus = corpus_for_model(load_corpus(&a.input)?, &model, a.rescale)?;
    let rows = assign(&model, &corpus)?;
    let prov = provenance(Some(model.seed), &[("model", &a.model), ("corpus", &a.input)])?;
    match a.format {
        OutputFormat::Csv => write_assignments_csv(&rows, create(&a.output)?, &prov)?,
        OutputFormat::Json => write_json(&a.output, &json!({ "provenance": prov, "assignments": rows }))?,
    }
    println!("assigned {} threads", rows.len());
    Ok(())
}

fn build_report(
    model_path: &Path,
    corpus_path: &Path,
    labels: Option<&PathBuf>,
) -> Result<(EngagementModel, Corpus, TaxonomyReport)> {
    let model = load_model(model_path)?;
    let corpus = load_corpus(corpus_path)?;
    let overrides = match labels {
        Some(p) => read_label_overrides(p).with_context(|| format!("reading labels {}", p.display()))?,
        None => BTreeMap::new(),
    };
    let tax = build_taxonomy_with(&model, &corpus, &overrides)?;
    let mut inputs = vec![("model", model_path), ("corpus", corpus_path)];
    if let Some(p) = labels {
        inputs.push(("labels", p.as_path()));
    }
    let report = render_report(&tax, &model, &provenance(Some(model.seed), &inputs)?);
    Ok((model, corpus, report))
}

fn write_taxonomy(report: &TaxonomyReport, dir: &Path) -> Result<()> {
    let mut w = create(&dir.join("taxonomy.json"))?;
    w.write_all(report.to_json()?.as_bytes())?;
    w.flush()?;
    let mut w = create(&dir.join("taxonomy.txt"))?;
    w.write_all(report.to_text().as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn taxonomy_cmd(a: &TaxonomyArgs) -> Result<()> {
    let (_, _, report) = build_report(&a.model, &a.input, a.labels.as_ref())?;
    write_taxonomy(&report, &a.output)?;
    print!("{}", report.to_text());
    Ok(())
}

pub fn retention_cmd(a: &RetentionArgs) -> Result<()> {
    let corpus = load_corpus(&a.input)?;
    let role: RetentionRole = a.role.parse()?;
    let group_by: GroupBy = a.group_by.parse()?;
    let taxonomy = match &a.taxonomy {
        Some(p) => Some(TaxonomyReport::read(p).with_context(|| format!("reading taxonomy {}", p.display()))?),
        None => None,
    };
    let table = retention(&corpus, role, group_by, taxonomy.as_ref().map(|t| &t.taxonomy), &boot_options(&a.boot))?;
    let mut inputs = vec![("corpus", a.input.as_path())];
    if let Some(p) = &a.taxonomy {
        inputs.push(("taxonomy", p.as_path()));
    }
    let prov = provenance(Some(a.boot.seed), &inputs)?;
    match a.format {
        OutputFormat::Csv => write_retention_csv(&table, create(&a.output)?, &prov)?,
        OutputFormat::Json => write_json(&a.output, &json!({ "provenance": prov, "table": table }))?,
    }
    for r in &table.rows {
        println!(
            "{:<32} n={:<8} retained {:.3} [{:.3}, {:.3}]",
            r.group, r.n_users, r.fraction, r.ci_low, r.ci_high
        );
    }
    Ok(())
}

pub fn report_cmd(a: &ReportArgs) -> Result<()> {
    let (model, corpus, report) = build_report(&a.model, &a.input, a.labels.as_ref())?;
    let dir = &a.output;
    write_taxonomy(&report, dir)?;
    let tax = &report.taxonomy;
    let opts = boot_options(&a.boot);
    let mut inputs = vec![("model", a.model.as_path()), ("corpus", a.input.as_path())];
    if let Some(p) = &a.labels {
        inputs.push(("labels", p.as_path()));
    }
    let prov = provenance(Some(a.boot.seed), &inputs)?;

    let records: Vec<_> = corpus.threads.iter().map(indicator_record).collect();
    write_indicators_csv(&records, create(&dir.join("indicators.csv"))?, &prov)?;

    let mut long: Vec<LongRow> = Vec::new();
    let mut tables = serde_json::Map::new();
    for (role, role_name) in [(RetentionRole::Seeker, "seeker"), (RetentionRole::PeerSupporter, "peer")] {
        for group_by in [GroupBy::Degree, GroupBy::Party, GroupBy::Size, GroupBy::Speed, GroupBy::Pattern] {
            let table = retention(&corpus, role, group_by, Some(tax), &opts)?;
            write_retention_csv(&table, create(&dir.join(format!("retention_{role_name}_{group_by}.csv")))?, &prov)?;
            long.extend(retention_long_rows(&table));
            tables.insert(format!("{role_name}_{group_by}"), serde_json::to_value(&table)?);
        }
    }

    let positions = md_given_seeker_position(&corpus, &opts.bootstrap)?;
    write_positions_csv(&positions, create(&dir.join("md_by_seeker_position.csv"))?, &prov)?;
    long.extend(position_long_rows(&positions));

    let quartiles = match ps_first_response_quartiles(&corpus, &opts) {
        Ok(q) => {
            write_quartiles_csv(&q, create(&dir.join("peer_retention_by_response_quartile.csv"))?, &prov)?;
            long.extend(quartile_long_rows(&q));
            serde_json::to_value(&q)?
        }
        Err(e) => json!({ "skipped": e.to_string() }),
    };
    write_long_csv(&long, create(&dir.join("plot_data.csv"))?, &prov)?;

    let ratio = |filter: &(dyn Fn(&Thread) -> bool + Sync)| match response_time_ratio(&corpus, filter, &opts.bootstrap) {
        Ok(r) => serde_json::to_value(r).unwrap_or_default(),
        Err(e) => json!({ "skipped": e.to_string() }),
    };
    let mut ratios = serde_json::Map::new();
    ratios.insert("all".into(), ratio(&|_| true));
    for p in &tax.patterns {
        let label = p.label;
        let f = |t: &Thread| tax.pattern_of(&t.thread_id, t.is_isolated()) == Some(label);
        ratios.insert(label.to_string(), ratio(&f));
    }

    let mut comparisons = serde_json::Map::new();
    for field in [ScalarField::WordCount, ScalarField::Score] {
        let r = compare_group_scalar(
            &corpus,
            InteractionDegree::RepeatedSeekerInteraction,
            InteractionDegree::MutualDiscourse,
            field,
        );
        let v = match r {
            Ok(r) => serde_json::to_value(r)?,
            Err(e) => json!({ "skipped": e.to_string() }),
        };
        comparisons.insert(format!("{field:?}"), v);
    }

    let summary = json!({
        "format": engage_core::format::TABLE_FORMAT,
        "provenance": prov,
        "model": { "k": model.k, "n_threads_fit": model.n_threads_fit, "sweeps_run": model.sweeps_run, "seed": model.seed },
        "retention": tables,
        "md_by_seeker_position": positions,
        "peer_retention_by_response_quartile": quartiles,
        "response_time_ratio": ratios,
        "seeker_reply_rsi_vs_md": comparisons,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    print!("{}", report.to_text());
    println!("\nwrote report bundle to {}", dir.display());
    Ok(())
}
