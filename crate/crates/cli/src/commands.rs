use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Serialize;
use serde_json::{json, Value};

use custext::artifact;
use custext::attacks::{aligned_pairs, analytic_inversion_success, inversion_attack, query_attack, QueryAttackConfig};
use custext::corpus::{sanitize_corpus, CorpusFormat};
use custext::mapping::read_frequencies;
use custext::sampler::baseline_ratio_check;
use custext::sanitizer::{read_stopwords, Mode};
use custext::sweep::{sweep, write_sweep_csv, SweepConfig};
use custext::{
    dp_ratio_check, generate_mapping, load_embeddings, tokenize, Document, EmbeddingTable, MappingTable, SamplerParams,
    SanitizeConfig, Sanitizer, SeedOrder,
};

use crate::args::{
    AttackCommand, BuildMapArgs, Cli, Command, ExportArgs, InvertArgs, QueryArgs, SanitizeArgs, SweepArgs,
    VerifyDpArgs,
};

pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

type Outcome = Result<Value, Failure>;

fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

fn check_epsilon(eps: f64) -> Result<(), Failure> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        usage(format!("epsilon must be a positive finite number, got {eps}"))
    }
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

fn load_map(path: &Path) -> Result<MappingTable, Failure> {
    Ok(artifact::load(path).with_context(|| format!("loading mapping {}", path.display()))?)
}

fn load_table(path: &Path, dim: Option<usize>) -> Result<EmbeddingTable, Failure> {
    Ok(load_embeddings(path, dim).with_context(|| format!("reading embeddings {}", path.display()))?)
}

fn load_stopwords(path: Option<&PathBuf>, lowercase: bool) -> Result<HashSet<String>, Failure> {
    match path {
        None => Ok(HashSet::new()),
        Some(p) => {
            let file = File::open(p).with_context(|| format!("opening stopwords {}", p.display()))?;
            Ok(read_stopwords(file, lowercase).with_context(|| format!("reading stopwords {}", p.display()))?)
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>, Failure> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let lines = BufReader::new(file)
        .lines()
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(lines)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), Failure> {
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    version: &'a str,
    result: Value,
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return usage("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Data(anyhow!(e)))?;
    }
    let (name, result) = match &cli.command {
        Command::BuildMap(a) => ("build-map", build_map(a)?),
        Command::Sanitize(a) => ("sanitize", sanitize(a)?),
        Command::Attack(AttackCommand::Query(a)) => ("attack query", attack_query(a)?),
        Command::Attack(AttackCommand::Invert(a)) => ("attack invert", attack_invert(a)?),
        Command::Sweep(a) => ("sweep", run_sweep(a)?),
        Command::VerifyDp(a) => ("verify-dp", verify_dp(a)?),
        Command::ExportJsonl(a) => ("export-jsonl", export_jsonl(a)?),
    };
    let summary = Summary {
        command: name,
        version: env!("CARGO_PKG_VERSION"),
        result,
    };
    match &cli.global.summary_json {
        Some(path) => {
            let mut w = create(path)?;
            serde_json::to_writer_pretty(&mut w, &summary).context("serializing summary")?;
            writeln!(w).with_context(|| format!("writing {}", path.display()))?;
            finish(w, path)?;
        }
        None => eprintln!("{}", serde_json::to_string(&summary).context("serializing summary")?),
    }
    Ok(())
}

fn build_map(a: &BuildMapArgs) -> Outcome {
    if a.k == 0 {
        return usage("--K must be at least 1");
    }
    let table = load_table(&a.embeddings, a.dim)?;
    let order = match (a.order.as_str(), &a.frequencies) {
        ("vocab", _) => SeedOrder::Vocab,
        ("frequency", Some(path)) => {
            let file = File::open(path).with_context(|| format!("opening frequencies {}", path.display()))?;
            let counts = read_frequencies(file).with_context(|| format!("reading frequencies {}", path.display()))?;
            SeedOrder::from_frequencies(table.vocab(), &counts)
        }
        _ => return usage("--order frequency requires --frequencies"),
    };
    let mapping = generate_mapping(&table, a.k, a.measure, &order)
        .with_context(|| format!("building mapping from {}", a.embeddings.display()))?;
    artifact::save(&mapping, &a.out).with_context(|| format!("writing mapping {}", a.out.display()))?;
    if let Some(path) = &a.jsonl {
        let mut w = create(path)?;
        artifact::write_jsonl(&mapping, &mut w).with_context(|| format!("writing {}", path.display()))?;
        finish(w, path)?;
    }
    let sizes: Vec<usize> = mapping.groups().iter().map(|g| g.len()).collect();
    Ok(json!({
        "config": {
            "embeddings": show(&a.embeddings),
            "k": a.k,
            "measure": a.measure.name(),
            "order": a.order,
            "frequencies": a.frequencies.as_deref().map(show),
            "dim": a.dim,
            "out": show(&a.out),
            "jsonl": a.jsonl.as_deref().map(show),
        },
        "vocab_size": table.len(),
        "dim": table.dim(),
        "duplicates_dropped": table.duplicates(),
        "groups": sizes.len(),
        "smallest_group": sizes.iter().min(),
        "singleton_groups": sizes.iter().filter(|&&s| s == 1).count(),
        "vocab_hash": hex(mapping.vocab_hash()),
    }))
}

fn sanitize(a: &SanitizeArgs) -> Outcome {
    check_epsilon(a.epsilon)?;
    let lowercase = !a.no_lowercase;
    let stopwords = load_stopwords(a.stopwords.as_ref(), lowercase)?;
    if a.mode == Mode::CustextPlus && stopwords.is_empty() {
        return usage("--mode custext_plus requires a nonempty --stopwords list");
    }
    if a.mode == Mode::Baseline && a.embeddings.is_none() {
        return usage("--mode baseline requires --embeddings");
    }
    let mapping = load_map(&a.map)?;
    let table = match &a.embeddings {
        Some(p) => Some(load_table(p, Some(mapping.dim()))?),
        None => None,
    };
    let config = SanitizeConfig {
        epsilon: a.epsilon,
        k: mapping.k(),
        measure: mapping.measure(),
        mode: a.mode,
        stopwords,
        seed: a.seed,
        number_policy: a.number_policy,
        lowercase,
    };
    let sanitizer = Sanitizer::new(&mapping, &config, table.as_ref())
        .with_context(|| format!("mapping {} cannot be used with this configuration", a.map.display()))?;
    let format = match a.tsv_col {
        Some(column) => CorpusFormat::Tsv {
            column,
            header: a.tsv_header,
        },
        None => CorpusFormat::PlainText,
    };
    let summary = sanitize_corpus(&a.input, &a.out, &sanitizer, format)
        .with_context(|| format!("sanitizing {} into {}", a.input.display(), a.out.display()))?;
    Ok(json!({
        "config": {
            "map": show(&a.map),
            "epsilon": a.epsilon,
            "k": mapping.k(),
            "measure": mapping.measure().name(),
            "mode": a.mode,
            "stopwords": a.stopwords.as_deref().map(show),
            "stopword_count": config.stopwords.len(),
            "seed": a.seed,
            "in": show(&a.input),
            "out": show(&a.out),
            "format": format,
            "embeddings": a.embeddings.as_deref().map(show),
            "number_policy": a.number_policy,
            "lowercase": lowercase,
            "baseline_eps_prime": sanitizer.baseline_eps_prime(),
        },
        "lines": summary.lines,
        "counts": summary.counts,
    }))
}

fn attack_query(a: &QueryArgs) -> Outcome {
    for &e in &a.epsilon {
        check_epsilon(e)?;
    }
    if a.trials < 100 {
        return usage(format!("--trials must be at least 100, got {}", a.trials));
    }
    if !(a.confidence > 0.0 && a.confidence < 1.0) {
        return usage(format!("--confidence must lie in (0, 1), got {}", a.confidence));
    }
    let mapping = load_map(&a.map)?;
    let tokens = a
        .token
        .iter()
        .map(|s| {
            mapping
                .token(s)
                .ok_or_else(|| anyhow!("token {s:?} is not in the vocabulary of {}", a.map.display()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let config = QueryAttackConfig {
        trials: a.trials,
        confidence: a.confidence,
        max_queries: a.max_queries,
        seed: a.seed,
    };
    let mut csv = String::from("token,epsilon,n,success,trials,no_protection,censored\n");
    let mut results = Vec::new();
    for (surface, &x) in a.token.iter().zip(&tokens) {
        for &eps in &a.epsilon {
            let params = SamplerParams::new(eps).map_err(anyhow::Error::from)?;
            let r = query_attack(&mapping, x, params, &config).map_err(anyhow::Error::from)?;
            csv.push_str(&format!(
                "{surface},{eps},{},{:.4},{},{},{}\n",
                r.n, r.success, r.trials, r.no_protection, r.censored
            ));
            results.push(json!({
                "token": surface,
                "epsilon": eps,
                "n": r.n,
                "success": r.success,
                "no_protection": r.no_protection,
                "censored": r.censored,
            }));
        }
    }
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(csv.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
            finish(w, path)?;
        }
        None => print!("{csv}"),
    }
    Ok(json!({
        "config": {
            "map": show(&a.map),
            "epsilon": a.epsilon,
            "token": a.token,
            "trials": a.trials,
            "confidence": a.confidence,
            "max_queries": a.max_queries,
            "seed": a.seed,
            "out": a.out.as_deref().map(show),
        },
        "results": results,
    }))
}

fn attack_invert(a: &InvertArgs) -> Outcome {
    check_epsilon(a.epsilon)?;
    let lowercase = !a.no_lowercase;
    let mapping = load_map(&a.map)?;
    let stopwords = load_stopwords(a.stopwords.as_ref(), lowercase)?;
    let truth: Vec<Vec<String>> = read_lines(&a.truth)?
        .iter()
        .map(|l| tokenize(l, lowercase).texts().map(str::to_owned).collect())
        .collect();
    let sanitized: Vec<Vec<String>> = read_lines(&a.input)?
        .iter()
        .map(|l| l.split_whitespace().map(str::to_owned).collect())
        .collect();
    let pairs = aligned_pairs(&mapping, &truth, &sanitized, &stopwords)
        .with_context(|| format!("aligning {} with {}", a.input.display(), a.truth.display()))?;
    let params = SamplerParams::new(a.epsilon).map_err(anyhow::Error::from)?;
    let r = inversion_attack(&mapping, params, pairs);
    let analytic = analytic_inversion_success(&mapping, params);
    println!(
        "success_rate {:.6}\nprivacy_level {:.6}\ntokens_evaluated {}\nskipped {}\nanalytic_success {:.6}",
        r.success_rate,
        r.privacy_level(),
        r.tokens_evaluated,
        r.skipped,
        analytic
    );
    Ok(json!({
        "config": {
            "map": show(&a.map),
            "epsilon": a.epsilon,
            "in": show(&a.input),
            "truth": show(&a.truth),
            "stopwords": a.stopwords.as_deref().map(show),
            "lowercase": lowercase,
        },
        "success_rate": r.success_rate,
        "privacy_level": r.privacy_level(),
        "tokens_evaluated": r.tokens_evaluated,
        "skipped": r.skipped,
        "analytic_success": analytic,
    }))
}

fn map_dir_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))?;
    let mut files = Vec::new();
    for e in entries {
        let path = e.with_context(|| format!("listing {}", dir.display()))?.path();
        if path.extension().is_some_and(|x| x == "bin") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn run_sweep(a: &SweepArgs) -> Outcome {
    for &e in &a.epsilons {
        check_epsilon(e)?;
    }
    if a.mode == Mode::Baseline {
        return usage("sweep supports --mode custext and custext_plus only");
    }
    if a.trials < 100 {
        return usage(format!("--trials must be at least 100, got {}", a.trials));
    }
    if !a.k.is_empty() && a.embeddings.is_none() {
        return usage("--K requires --embeddings");
    }
    if a.k.contains(&0) {
        return usage("--K values must be at least 1");
    }
    let mut map_files = a.map.clone();
    if let Some(dir) = &a.map_dir {
        map_files.extend(map_dir_files(dir)?);
    }
    if map_files.is_empty() && a.k.is_empty() {
        return usage("sweep needs mappings: give --map, --map-dir, or --K with --embeddings");
    }
    let stopwords = load_stopwords(a.stopwords.as_ref(), true)?;
    if a.mode == Mode::CustextPlus && stopwords.is_empty() {
        return usage("--mode custext_plus requires a nonempty --stopwords list");
    }
    let table = match &a.embeddings {
        Some(p) => Some(load_table(p, None)?),
        None => None,
    };
    let mut mappings = Vec::new();
    for path in &map_files {
        mappings.push(load_map(path)?);
    }
    if let Some(t) = &table {
        for &k in &a.k {
            mappings.push(generate_mapping(t, k, a.measure, &SeedOrder::Vocab).context("building mapping")?);
        }
    }
    let lines = read_lines(&a.corpus)?;
    let doc = Document::from_lines(lines.iter().map(String::as_str), true);
    let config = SweepConfig {
        epsilons: a.epsilons.clone(),
        mode: a.mode,
        stopwords,
        seed: a.seed,
        number_policy: a.number_policy,
        query_tokens: a.query_token.clone(),
        query: QueryAttackConfig {
            trials: a.trials,
            seed: a.seed,
            ..Default::default()
        },
    };
    let refs: Vec<&MappingTable> = mappings.iter().collect();
    let rows = sweep(&doc, &refs, table.as_ref(), &config).with_context(|| format!("sweeping {}", a.corpus.display()))?;
    let mut w = create(&a.out)?;
    write_sweep_csv(&rows, &mut w).with_context(|| format!("writing {}", a.out.display()))?;
    finish(w, &a.out)?;
    Ok(json!({
        "config": {
            "map": map_files.iter().map(|p| show(p)).collect::<Vec<_>>(),
            "k": a.k,
            "measure": a.measure.name(),
            "epsilons": a.epsilons,
            "corpus": show(&a.corpus),
            "out": show(&a.out),
            "embeddings": a.embeddings.as_deref().map(show),
            "mode": a.mode,
            "stopwords": a.stopwords.as_deref().map(show),
            "seed": a.seed,
            "query_token": a.query_token,
            "trials": a.trials,
            "number_policy": a.number_policy,
        },
        "rows": rows.len(),
    }))
}

fn verify_dp(a: &VerifyDpArgs) -> Outcome {
    if a.baseline {
        return verify_baseline(a);
    }
    let map = a.map.as_ref().expect("clap requires --map without --baseline");
    for &e in &a.epsilon {
        check_epsilon(e)?;
    }
    let mapping = load_map(map)?;
    let mut cells = Vec::new();
    let mut all_hold = true;
    for (i, &eps) in a.epsilon.iter().enumerate() {
        let report = dp_ratio_check(&mapping, SamplerParams::new(eps).map_err(anyhow::Error::from)?);
        let holds = report.holds();
        all_hold &= holds;
        let rel = if holds { "≤" } else { ">" };
        println!(
            "K={} epsilon={eps}: worst ratio {:.9} {rel} e^{eps} = {:.9} ({})",
            mapping.k(),
            report.worst_ratio(),
            report.bound,
            if holds { "holds" } else { "VIOLATED" }
        );
        if i + 1 == a.epsilon.len() {
            if let Some(path) = &a.csv {
                let mut w = create(path)?;
                report.write_csv(&mapping, &mut w).with_context(|| format!("writing {}", path.display()))?;
                finish(w, path)?;
            }
        }
        cells.push(json!({
            "epsilon": eps,
            "worst_ratio": report.worst_ratio(),
            "bound": report.bound,
            "holds": holds,
        }));
    }
    if !all_hold {
        return Err(Failure::Data(anyhow!("mapping {} violates the e^epsilon bound", map.display())));
    }
    Ok(json!({
        "config": {
            "map": show(map),
            "epsilon": a.epsilon,
            "csv": a.csv.as_deref().map(show),
        },
        "k": mapping.k(),
        "measure": mapping.measure().name(),
        "cells": cells,
    }))
}

fn verify_baseline(a: &VerifyDpArgs) -> Outcome {
    let path = a.embeddings.as_ref().expect("clap requires --embeddings with --baseline");
    for &e in &a.eps_prime {
        check_epsilon(e)?;
    }
    let table = load_table(path, None)?;
    let mut cells = Vec::new();
    let mut all_hold = true;
    for &eps_prime in &a.eps_prime {
        let r = baseline_ratio_check(&table, eps_prime).map_err(anyhow::Error::from)?;
        let holds = r.holds();
        all_hold &= holds;
        println!(
            "baseline eps'={eps_prime} d_max={:.9} epsilon={:.9}: worst ratio {:.9} {} e^epsilon = {:.9} ({})",
            r.d_max,
            r.epsilon,
            r.worst_ratio,
            if holds { "≤" } else { ">" },
            r.epsilon.exp(),
            if holds { "holds" } else { "VIOLATED" }
        );
        cells.push(json!(r));
    }
    if !all_hold {
        return Err(Failure::Data(anyhow!("baseline on {} violates the e^epsilon bound", path.display())));
    }
    Ok(json!({
        "config": {
            "embeddings": show(path),
            "eps_prime": a.eps_prime,
        },
        "cells": cells,
    }))
}

fn export_jsonl(a: &ExportArgs) -> Outcome {
    let mapping = load_map(&a.map)?;
    let mut w = create(&a.out)?;
    artifact::write_jsonl(&mapping, &mut w).with_context(|| format!("writing {}", a.out.display()))?;
    finish(w, &a.out)?;
    Ok(json!({
        "config": { "map": show(&a.map), "out": show(&a.out) },
        "groups": mapping.groups().len(),
    }))
}
