//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use custext::artifact;
use custext::rng::{Domain, RandomStream};
use custext::sampler::{em_sample, output_distribution};
use custext::synth::{gaussian_table, write_embeddings};
use custext::{em_probabilities, generate_mapping, tokenize, EmbeddingTable, MappingTable, Measure, SamplerParams, SeedOrder, TokenId};
use tempfile::TempDir;

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Check + 'a>);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        // Negated so that a NaN fails the check.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn custext(dir: &Path, args: &[&str]) -> Result<Output, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_custext"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "custext {} exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn save_table(t: &EmbeddingTable, path: &Path) {
    let mut w = std::io::BufWriter::new(fs::File::create(path).unwrap());
    write_embeddings(t, &mut w).unwrap();
    w.flush().unwrap();
}

fn params(eps: f64) -> SamplerParams {
    SamplerParams::new(eps).unwrap()
}

fn tv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f64>() / 2.0
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
    dot / (euclid(a, &vec![0.0; a.len()]) * euclid(b, &vec![0.0; b.len()]))
}

/// `lines` records of 5 to 14 tokens; each token is a stopword with
/// probability `stop_rate`, otherwise uniform over the vocabulary.
fn synthetic_corpus(t: &EmbeddingTable, lines: usize, stopwords: &[String], stop_rate: f64, seed: u64) -> String {
    use rand::Rng;
    let mut rng = RandomStream::new(seed).substream(Domain::Synthetic, lines as u64, 1);
    let mut text = String::new();
    for _ in 0..lines {
        let n = rng.gen_range(5..15);
        let words: Vec<String> = (0..n)
            .map(|_| {
                if !stopwords.is_empty() && rng.gen_bool(stop_rate) {
                    stopwords[rng.gen_range(0..stopwords.len())].clone()
                } else {
                    t.surface(TokenId(rng.gen_range(0..t.len() as u32))).to_owned()
                }
            })
            .collect();
        text.push_str(&words.join(" "));
        text.push('\n');
    }
    text
}

fn empirical(m: &MappingTable, x: TokenId, eps: f64, draws: u64, seed: u64) -> Vec<f64> {
    let a = m.assignment(x).unwrap();
    let stream = RandomStream::new(seed);
    let mut counts = vec![0u64; a.group.len()];
    for i in 0..draws {
        let mut rng = stream.substream(Domain::Sampling, x.0 as u64, i);
        counts[a.group.position(em_sample(m, x, params(eps), &mut rng).unwrap()).unwrap()] += 1;
    }
    counts.iter().map(|&c| c as f64 / draws as f64).collect()
}

fn criterion_1(dir: &Path) -> Check {
    let t = gaussian_table(1000, 50, 101);
    save_table(&t, &dir.join("c1.txt"));
    let epsilons = [0.1, 1.0, 2.0, 3.0, 8.0];
    let mut verify_secs = 0.0;
    let mut worst_slack: f64 = 0.0;
    let mut cells = 0;
    for measure in ["euclidean", "cosine"] {
        for k in [2, 5, 20] {
            let map = format!("c1-{measure}-{k}.bin");
            custext(dir, &["build-map", "--embeddings", "c1.txt", "--K", &k.to_string(), "--measure", measure, "--out", &map])?;
            let start = Instant::now();
            let out = custext(dir, &["verify-dp", "--map", &map, "--epsilon", "0.1,1,2,3,8"])?;
            verify_secs += start.elapsed().as_secs_f64();
            let text = stdout(&out);
            let lines: Vec<&str> = text.lines().collect();
            ensure!(lines.len() == epsilons.len(), "expected {} report lines, got {text}", epsilons.len());
            for (line, eps) in lines.iter().zip(epsilons) {
                let f: Vec<&str> = line.split_whitespace().collect();
                let ratio: f64 = f[4].parse().map_err(|_| format!("unparsable line {line}"))?;
                let bound = f64::exp(eps);
                ensure!(line.ends_with("(holds)"), "{measure} K={k}: {line}");
                ensure!(ratio <= bound * (1.0 + 1e-9), "{measure} K={k} eps={eps}: {ratio} > {bound}");
                worst_slack = worst_slack.max(ratio / bound);
                cells += 1;
            }
        }
    }
    ensure!(verify_secs < 30.0, "verify-dp took {verify_secs:.1}s");
    Ok(format!("{cells} cells, max ratio/e^eps = {worst_slack:.4}, verify-dp {verify_secs:.2}s total"))
}

fn brute_force_groups(t: &EmbeddingTable, k: usize, measure: Measure) -> Vec<Vec<u32>> {
    let n = t.len();
    let key = |i: usize, j: usize| {
        let (a, b) = (t.vector(TokenId(i as u32)), t.vector(TokenId(j as u32)));
        match measure {
            Measure::Euclidean => euclid(a, b),
            Measure::Cosine => -cosine(a, b),
        }
    };
    let matrix: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| key(i, j)).collect()).collect();
    let mut unmapped: Vec<usize> = (0..n).collect();
    let mut groups = Vec::new();
    while !unmapped.is_empty() {
        let seed = unmapped.remove(0);
        let mut rest = unmapped.clone();
        rest.sort_by(|&a, &b| matrix[seed][a].total_cmp(&matrix[seed][b]).then(a.cmp(&b)));
        rest.truncate(k - 1);
        unmapped.retain(|i| !rest.contains(i));
        let mut g: Vec<u32> = std::iter::once(seed).chain(rest).map(|i| i as u32).collect();
        g.sort_unstable();
        groups.push(g);
    }
    groups
}

fn criterion_2(dir: &Path) -> Check {
    let t = gaussian_table(100, 10, 202);
    save_table(&t, &dir.join("c2.txt"));
    let mut checked = 0;
    for measure in [Measure::Euclidean, Measure::Cosine] {
        for k in [2, 3, 7] {
            let map = format!("c2-{}-{k}.bin", measure.name());
            custext(dir, &["build-map", "--embeddings", "c2.txt", "--K", &k.to_string(), "--measure", measure.name(), "--out", &map])?;
            let m = artifact::load(dir.join(&map)).map_err(|e| e.to_string())?;
            let got: Vec<Vec<u32>> = m
                .groups()
                .iter()
                .map(|g| {
                    let mut v: Vec<u32> = g.members().iter().map(|t| t.0).collect();
                    v.sort_unstable();
                    v
                })
                .collect();
            let expected = brute_force_groups(&t, k, measure);
            ensure!(got == expected, "{} K={k}: groups differ from brute force", measure.name());
            checked += got.len();
        }
    }
    Ok(format!("6 configurations, {checked} groups identical to brute force"))
}

fn criterion_3() -> Check {
    let t = gaussian_table(400, 20, 303);
    let m = generate_mapping(&t, 20, Measure::Euclidean, &SeedOrder::Vocab).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..20u64 {
        let x = TokenId((i * 7919 % 400) as u32);
        let (_, p) = output_distribution(&m, x, params(2.0)).unwrap();
        let q = empirical(&m, x, 2.0, 100_000, 33);
        worst = worst.max(tv(&p, &q));
    }
    ensure!(worst < 0.01, "worst TV {worst:.5}");
    let p_self = em_probabilities(&[0.0, -1.0], params(2.0))[0];
    ensure!((p_self - 0.7311).abs() <= 0.005, "analytic self-probability {p_self}");
    let toy = custext::read_embeddings("a 0.0\nb 1.0\nc 10.0\nd 11.0\n".as_bytes(), None).unwrap();
    let tm = generate_mapping(&toy, 2, Measure::Euclidean, &SeedOrder::Vocab).unwrap();
    let q = empirical(&tm, TokenId(0), 2.0, 100_000, 34)[0];
    ensure!((q - 0.7311).abs() <= 0.005, "empirical self-rate {q}");
    Ok(format!("worst TV over 20 tokens {worst:.5}; toy self-probability {p_self:.4} (empirical {q:.4})"))
}

/// P(strict majority for the first outcome) after `n` draws with success
/// probability `p`, summed exactly.
fn majority_probability(p: f64, n: u64) -> f64 {
    let mut pmf = (1.0 - p).powi(n as i32);
    let mut tail = 0.0;
    for k in 0..=n {
        if 2 * k > n {
            tail += pmf;
        }
        pmf *= (n - k) as f64 / (k + 1) as f64 * p / (1.0 - p);
    }
    tail
}

fn query_ns(out: &Output) -> Vec<u64> {
    stdout(out).lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect()
}

fn criterion_4(dir: &Path) -> Check {
    let start = Instant::now();
    let p_self = em_probabilities(&[0.0, -1.0], params(2.0))[0];
    let oracle = (0..).map(|m| 2 * m + 1).find(|&n| majority_probability(p_self, n) >= 0.95).unwrap();
    ensure!(oracle == 11, "binomial oracle gives {oracle}");
    fs::write(dir.join("toy.txt"), "a 0.0\nb 1.0\nc 10.0\nd 11.0\n").unwrap();
    custext(dir, &["build-map", "--embeddings", "toy.txt", "--K", "2", "--out", "toy.bin"])?;
    let out = custext(dir, &["attack", "query", "--map", "toy.bin", "--epsilon", "2", "--token", "a", "--trials", "1000"])?;
    let n_toy = query_ns(&out)[0];
    ensure!((9..=13).contains(&n_toy), "toy N = {n_toy}");

    let t = gaussian_table(1000, 50, 404);
    save_table(&t, &dir.join("c4.txt"));
    custext(dir, &["build-map", "--embeddings", "c4.txt", "--K", "20", "--out", "c4.bin"])?;
    let tokens = ["tok00000", "tok00500", "tok00999"];
    let out = custext(dir, &["attack", "query", "--map", "c4.bin", "--epsilon", "1,2,3,8", "--token", &tokens.join(","), "--trials", "1000"])?;
    let ns = query_ns(&out);
    let mut curves = Vec::new();
    for (tok, curve) in tokens.iter().zip(ns.chunks(4)) {
        ensure!(curve.windows(2).all(|w| w[0] >= w[1]), "{tok}: N not monotone {curve:?}");
        ensure!(curve.iter().all(|&n| n >= 1), "{tok}: N < 1");
        curves.push(format!("{tok} {curve:?}"));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s");
    Ok(format!(
        "toy N = {n_toy} (oracle {oracle}); K=20 N at eps 1,2,3,8: {} (reference trend 1000, 200, 80, 5); {secs:.1}s",
        curves.join("; ")
    ))
}

fn criterion_5(dir: &Path) -> Check {
    let t = gaussian_table(2000, 16, 505);
    save_table(&t, &dir.join("c5.txt"));
    custext(dir, &["build-map", "--embeddings", "c5.txt", "--K", "20", "--out", "c5.bin"])?;
    let stopwords: Vec<String> = (0..100).map(|i| t.surface(TokenId(i * 20)).to_owned()).collect();
    fs::write(dir.join("stop.txt"), stopwords.join("\n") + "\n").unwrap();
    let corpus = synthetic_corpus(&t, 10_000, &stopwords, 0.35, 55);
    fs::write(dir.join("c5-corpus.txt"), &corpus).unwrap();
    custext(
        dir,
        &["sanitize", "--map", "c5.bin", "--epsilon", "2", "--mode", "custext_plus", "--stopwords", "stop.txt", "--seed", "42", "--in", "c5-corpus.txt", "--out", "c5-san.txt"],
    )?;
    let m = artifact::load(dir.join("c5.bin")).map_err(|e| e.to_string())?;
    let stop: HashSet<&str> = stopwords.iter().map(String::as_str).collect();
    let sanitized = fs::read_to_string(dir.join("c5-san.txt")).unwrap();
    let (orig_lines, san_lines): (Vec<&str>, Vec<&str>) = (corpus.lines().collect(), sanitized.lines().collect());
    ensure!(orig_lines.len() == 10_000 && san_lines.len() == 10_000, "line count {}", san_lines.len());
    let (mut stop_n, mut replaced_n) = (0u64, 0u64);
    for (i, (o, s)) in orig_lines.iter().zip(&san_lines).enumerate() {
        let orig = tokenize(o, true);
        let out: Vec<&str> = s.split(' ').filter(|w| !w.is_empty()).collect();
        ensure!(orig.len() == out.len(), "line {}: token count changed", i + 1);
        for (a, b) in orig.texts().zip(out) {
            if stop.contains(a) {
                ensure!(a == b, "line {}: stopword {a:?} became {b:?}", i + 1);
                stop_n += 1;
            } else {
                let x = m.token(a).ok_or(format!("line {}: unexpected OOV {a:?}", i + 1))?;
                let y = m.token(b).ok_or(format!("line {}: output {b:?} outside the vocabulary", i + 1))?;
                ensure!(m.assignment(x).unwrap().group.position(y).is_some(), "line {}: {b:?} not in group of {a:?}", i + 1);
                replaced_n += 1;
            }
        }
    }
    Ok(format!("{stop_n} stopword occurrences byte-identical, {replaced_n} tokens replaced within their groups"))
}

fn criterion_6(dir: &Path) -> Check {
    let small = gaussian_table(80, 5, 606);
    save_table(&small, &dir.join("c6-small.txt"));
    let ids: Vec<TokenId> = small.vocab().ids().collect();
    let d_max = ids
        .iter()
        .flat_map(|&x| ids.iter().map(move |&y| (x, y)))
        .map(|(x, y)| euclid(small.vector(x), small.vector(y)))
        .fold(0.0, f64::max);
    let mut lines = Vec::new();
    for eps_prime in [0.1, 0.5, 1.0] {
        let rows: Vec<Vec<f64>> = ids
            .iter()
            .map(|&x| {
                let w: Vec<f64> = ids.iter().map(|&y| (-eps_prime * euclid(small.vector(x), small.vector(y)) / 2.0).exp()).collect();
                let z: f64 = w.iter().sum();
                w.iter().map(|v| v / z).collect()
            })
            .collect();
        let mut worst: f64 = 1.0;
        for y in 0..ids.len() {
            let col: Vec<f64> = rows.iter().map(|r| r[y]).collect();
            let hi = col.iter().copied().fold(0.0, f64::max);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            worst = worst.max(hi / lo);
        }
        let eps = eps_prime * d_max;
        ensure!(worst <= eps.exp() * (1.0 + 1e-9), "oracle: eps'={eps_prime}: {worst} > e^{eps}");
        lines.push(format!("eps'={eps_prime}: {worst:.3} <= e^{eps:.3}"));
    }
    let out = custext(dir, &["verify-dp", "--baseline", "--embeddings", "c6-small.txt", "--eps-prime", "0.1,0.5,1"])?;
    let text = stdout(&out);
    ensure!(text.lines().count() == 3 && text.lines().all(|l| l.ends_with("(holds)")), "verify-dp --baseline: {text}");

    fs::write(dir.join("c6-toy.txt"), "a 1 0\nb 1 0.5\nc 0 1\nd 0.5 1\n").unwrap();
    let random = gaussian_table(200, 10, 607);
    save_table(&random, &dir.join("c6-random.txt"));
    let toy = custext::load_embeddings(dir.join("c6-toy.txt"), None).unwrap();
    let mut utility = Vec::new();
    for (name, table, k) in [("toy", &toy, 2), ("random", &random, 20)] {
        let emb = format!("c6-{name}.txt");
        let map = format!("c6-{name}.bin");
        custext(dir, &["build-map", "--embeddings", &emb, "--K", &k.to_string(), "--out", &map])?;
        let corpus = synthetic_corpus(table, 500, &[], 0.0, 66);
        let input = format!("c6-{name}-corpus.txt");
        fs::write(dir.join(&input), &corpus).unwrap();
        for eps in ["1", "2", "8"] {
            let mut means = Vec::new();
            for mode in ["custext", "baseline"] {
                let out_file = format!("c6-{name}-{mode}-{eps}.txt");
                custext(
                    dir,
                    &["sanitize", "--map", &map, "--epsilon", eps, "--mode", mode, "--embeddings", &emb, "--seed", "6", "--in", &input, "--out", &out_file],
                )?;
                let san = fs::read_to_string(dir.join(&out_file)).unwrap();
                let (mut sum, mut n) = (0.0, 0u64);
                for (a, b) in corpus.split_whitespace().zip(san.split_whitespace()) {
                    let (x, y) = (table.token(a).unwrap(), table.token(b).unwrap());
                    sum += cosine(table.vector(x), table.vector(y));
                    n += 1;
                }
                means.push(sum / n as f64);
            }
            ensure!(means[0] > means[1], "{name} eps={eps}: custext {:.4} <= baseline {:.4}", means[0], means[1]);
            utility.push(format!("{name} eps={eps}: {:.3} vs {:.3}", means[0], means[1]));
        }
    }
    Ok(format!("baseline ratios {}; mean cosine custext vs baseline: {}", lines.join(", "), utility.join(", ")))
}

fn criterion_7(dir: &Path) -> Check {
    let t = gaussian_table(200, 10, 707);
    save_table(&t, &dir.join("c7.txt"));
    custext(dir, &["build-map", "--embeddings", "c7.txt", "--K", "20", "--out", "c7.bin"])?;
    let m = artifact::load(dir.join("c7.bin")).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for i in 0..10u32 {
        let x = TokenId(i * 19);
        let q = empirical(&m, x, 1e-6, 100_000, 77);
        let uniform = vec![1.0 / q.len() as f64; q.len()];
        worst = worst.max(tv(&q, &uniform));
    }
    ensure!(worst < 0.02, "eps=1e-6: worst TV from uniform {worst:.4}");
    let corpus = synthetic_corpus(&t, 2000, &[], 0.0, 78);
    fs::write(dir.join("c7-corpus.txt"), &corpus).unwrap();
    custext(dir, &["sanitize", "--map", "c7.bin", "--epsilon", "100", "--seed", "7", "--in", "c7-corpus.txt", "--out", "c7-san.txt"])?;
    let san = fs::read_to_string(dir.join("c7-san.txt")).unwrap();
    let (mut same, mut total) = (0u64, 0u64);
    for (a, b) in corpus.split_whitespace().zip(san.split_whitespace()) {
        total += 1;
        same += u64::from(a == b);
    }
    let rate = same as f64 / total as f64;
    ensure!(rate > 0.999, "eps=100: self-replacement rate {rate:.5}");
    Ok(format!("eps=1e-6 worst TV {worst:.4} over 10 tokens; eps=100 self rate {rate:.5} over {total} tokens"))
}

fn pipeline(dir: &Path, threads: &str) -> Result<Vec<(String, Vec<u8>)>, String> {
    let t = gaussian_table(300, 12, 808);
    save_table(&t, &dir.join("emb.txt"));
    let stopwords: Vec<String> = (0..10).map(|i| t.surface(TokenId(i * 30)).to_owned()).collect();
    fs::write(dir.join("stop.txt"), stopwords.join("\n") + "\n").unwrap();
    fs::write(dir.join("corpus.txt"), synthetic_corpus(&t, 400, &stopwords, 0.3, 88)).unwrap();
    let th = ["--threads", threads];
    let steps: Vec<Vec<&str>> = vec![
        vec!["build-map", "--embeddings", "emb.txt", "--K", "10", "--measure", "cosine", "--out", "map.bin", "--jsonl", "map.jsonl", "--summary-json", "s1.json"],
        vec!["sanitize", "--map", "map.bin", "--epsilon", "2", "--mode", "custext_plus", "--stopwords", "stop.txt", "--seed", "42", "--in", "corpus.txt", "--out", "san.txt", "--summary-json", "s2.json"],
        vec!["attack", "query", "--map", "map.bin", "--epsilon", "1,2,3,8", "--token", &stopwords[1], "--trials", "500", "--seed", "3", "--out", "query.csv", "--summary-json", "s3.json"],
        vec!["attack", "invert", "--map", "map.bin", "--epsilon", "2", "--in", "san.txt", "--truth", "corpus.txt", "--stopwords", "stop.txt", "--summary-json", "s4.json"],
        vec!["sweep", "--map", "map.bin", "--embeddings", "emb.txt", "--epsilons", "0.5,2,8", "--corpus", "corpus.txt", "--trials", "200", "--seed", "5", "--out", "sweep.csv", "--summary-json", "s5.json"],
        vec!["verify-dp", "--map", "map.bin", "--epsilon", "1,2", "--csv", "dp.csv", "--summary-json", "s6.json"],
    ];
    let mut outputs = Vec::new();
    for (i, step) in steps.iter().enumerate() {
        let mut args = th.to_vec();
        args.extend(step);
        let out = custext(dir, &args)?;
        outputs.push((format!("stdout of step {}", i + 1), out.stdout));
    }
    for f in ["map.bin", "map.jsonl", "san.txt", "query.csv", "sweep.csv", "dp.csv", "s1.json", "s2.json", "s3.json", "s4.json", "s5.json", "s6.json"] {
        outputs.push((f.to_owned(), fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}"))?));
    }
    Ok(outputs)
}

fn criterion_8() -> Check {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let first = pipeline(a.path(), "1")?;
    let second = pipeline(b.path(), "4")?;
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        ensure!(x == y, "{name} differs between runs");
    }
    let bytes: usize = first.iter().map(|(_, v)| v.len()).sum();
    Ok(format!("{} artifacts identical across two runs (1 vs 4 threads), {bytes} bytes", first.len()))
}

fn criterion_9(dir: &Path) -> Check {
    let t = gaussian_table(10_000, 300, 909);
    save_table(&t, &dir.join("c9.txt"));
    let start = Instant::now();
    custext(dir, &["build-map", "--embeddings", "c9.txt", "--K", "20", "--out", "c9.bin"])?;
    let secs = start.elapsed().as_secs_f64();
    let m = artifact::load(dir.join("c9.bin")).map_err(|e| e.to_string())?;
    ensure!(m.groups().len() == 500, "{} groups", m.groups().len());
    ensure!(secs < 60.0, "build-map took {secs:.1}s");
    Ok(format!("10,000 x 300, K=20: {} groups in {secs:.1}s", m.groups().len()))
}

fn main() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let criteria: Vec<Criterion> = vec![
        ("epsilon-DP exactness", Box::new(|| criterion_1(d))),
        ("mapping oracle equivalence", Box::new(|| criterion_2(d))),
        ("sampler fidelity", Box::new(criterion_3)),
        ("query attack", Box::new(|| criterion_4(d))),
        ("custext_plus contract", Box::new(|| criterion_5(d))),
        ("baseline rescaling", Box::new(|| criterion_6(d))),
        ("epsilon extremes", Box::new(|| criterion_7(d))),
        ("determinism", Box::new(criterion_8)),
        ("scale sanity", Box::new(|| criterion_9(d))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {} PASS {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
