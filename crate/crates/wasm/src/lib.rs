//! Browser bindings over a small built-in embedding table. Every export
//! returns a JSON string; the plain functions with the same names minus the
//! `js_` prefix carry the logic and are tested natively.

use std::cell::RefCell;
use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};

use custext::attacks::{query_attack, QueryAttackConfig};
use custext::sampler::output_distribution;
use custext::sanitizer::{Mode, TokenAction};
use custext::{generate_mapping, read_embeddings, tokenize, EmbeddingTable, MappingTable, Measure, SamplerParams, SanitizeConfig, Sanitizer, SeedOrder};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const EMBEDDINGS: &str = include_str!("../assets/toy_embeddings.txt");
const STOPWORDS: &str = include_str!("../assets/stopwords.txt");

/// Query-attack trials per ε; fewer than the CLI default to stay interactive.
const DEMO_TRIALS: usize = 300;

thread_local! {
    static TABLE: EmbeddingTable = read_embeddings(EMBEDDINGS.as_bytes(), None).expect("built-in table parses");
    static MAPPINGS: RefCell<HashMap<(usize, Measure), MappingTable>> = RefCell::new(HashMap::new());
}

fn measure(name: &str) -> Result<Measure, String> {
    name.parse()
}

fn with_mapping<T>(k: usize, measure: Measure, f: impl FnOnce(&MappingTable) -> Result<T, String>) -> Result<T, String> {
    if k == 0 {
        return Err("K must be at least 1".into());
    }
    MAPPINGS.with(|cache| {
        let mut cache = cache.borrow_mut();
        let m = match cache.entry((k, measure)) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(
                TABLE
                    .with(|t| generate_mapping(t, k, measure, &SeedOrder::Vocab))
                    .map_err(|e| e.to_string())?,
            ),
        };
        f(m)
    })
}

fn params(epsilon: f64) -> Result<SamplerParams, String> {
    SamplerParams::new(epsilon).map_err(|e| e.to_string())
}

fn json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// Words of the built-in vocabulary, in file order.
pub fn vocabulary() -> String {
    TABLE.with(|t| serde_json::to_string(t.vocab().surfaces()).expect("strings serialize"))
}

#[derive(Serialize)]
struct Distribution<'a> {
    word: &'a str,
    members: Vec<&'a str>,
    probabilities: Vec<f64>,
    self_probability: f64,
}

/// Output distribution of `word` over its group.
pub fn group_distribution(word: &str, epsilon: f64, k: usize, measure_name: &str) -> Result<String, String> {
    let p = params(epsilon)?;
    with_mapping(k, measure(measure_name)?, |m| {
        let x = m.token(&word.to_lowercase()).ok_or_else(|| format!("{word:?} is not in the demo vocabulary"))?;
        let (members, probabilities) = output_distribution(m, x, p).map_err(|e| e.to_string())?;
        let position = members.iter().position(|&y| y == x).expect("token is in its own group");
        json(&Distribution {
            word: m.surface(x),
            members: members.iter().map(|&y| m.surface(y)).collect(),
            self_probability: probabilities[position],
            probabilities,
        })
    })
}

#[derive(Serialize)]
struct SanitizedToken {
    input: String,
    output: String,
    action: &'static str,
}

#[derive(Serialize)]
struct Sanitized {
    text: String,
    tokens: Vec<SanitizedToken>,
}

fn action_name(a: TokenAction) -> &'static str {
    match a {
        TokenAction::Replaced => "replaced",
        TokenAction::StopwordPassthrough => "stopword",
        TokenAction::OovRetained => "oov",
        TokenAction::NumericRandomized => "number",
    }
}

/// Sanitizes one line of text. `plus` copies built-in stopwords unchanged.
pub fn sanitize_text(text: &str, epsilon: f64, k: usize, measure_name: &str, seed: u64, plus: bool) -> Result<String, String> {
    with_mapping(k, measure(measure_name)?, |m| {
        let mut config = SanitizeConfig::for_mapping(m, epsilon, seed);
        if plus {
            config.mode = Mode::CustextPlus;
            config.stopwords = STOPWORDS.lines().map(str::to_owned).collect::<HashSet<_>>();
        }
        let sanitizer = Sanitizer::new(m, &config, None).map_err(|e| e.to_string())?;
        let record = tokenize(text, true);
        let out = sanitizer.sanitize_record(0, &record).map_err(|e| e.to_string())?;
        let tokens = record
            .texts()
            .zip(&out.tokens)
            .zip(&out.actions)
            .map(|((i, o), &a)| SanitizedToken {
                input: i.to_owned(),
                output: o.clone(),
                action: action_name(a),
            })
            .collect();
        json(&Sanitized { text: out.text(), tokens })
    })
}

#[derive(Serialize)]
struct CurvePoint {
    epsilon: f64,
    n: u64,
    no_protection: bool,
    censored: bool,
}

/// Query-attack N for `word` at each ε in `epsilons`.
pub fn query_curve(word: &str, k: usize, measure_name: &str, epsilons: &[f64]) -> Result<String, String> {
    with_mapping(k, measure(measure_name)?, |m| {
        let x = m.token(&word.to_lowercase()).ok_or_else(|| format!("{word:?} is not in the demo vocabulary"))?;
        let config = QueryAttackConfig {
            trials: DEMO_TRIALS,
            // Keeps a near-zero ε from stalling the page.
            max_queries: 1 << 20,
            ..Default::default()
        };
        let points = epsilons
            .iter()
            .map(|&e| {
                let r = query_attack(m, x, params(e)?, &config).map_err(|e| e.to_string())?;
                Ok(CurvePoint {
                    epsilon: e,
                    n: r.n,
                    no_protection: r.no_protection,
                    censored: r.censored,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        json(&points)
    })
}

#[wasm_bindgen(js_name = vocabulary)]
pub fn js_vocabulary() -> String {
    vocabulary()
}

#[wasm_bindgen(js_name = groupDistribution)]
pub fn js_group_distribution(word: &str, epsilon: f64, k: usize, measure: &str) -> Result<String, JsError> {
    group_distribution(word, epsilon, k, measure).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = sanitizeText)]
pub fn js_sanitize_text(text: &str, epsilon: f64, k: usize, measure: &str, seed: u32, plus: bool) -> Result<String, JsError> {
    sanitize_text(text, epsilon, k, measure, seed as u64, plus).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = queryCurve)]
pub fn js_query_curve(word: &str, k: usize, measure: &str, epsilons: Vec<f64>) -> Result<String, JsError> {
    query_curve(word, k, measure, &epsilons).map_err(|e| JsError::new(&e))
}
