//! Brute-force answer extraction written from the scoring rules alone.

use std::collections::BTreeSet;

use cogbias::extraction::ExtractionConfig;
use cogbias::template::AnswerChoice;

pub fn normalize(s: &str) -> Vec<char> {
    let mut words: Vec<String> = Vec::new();
    let mut cur = String::new();
    for c in s.chars() {
        if c == '\'' || c == '\u{2019}' || c == '\u{2018}' || c == '`' {
            continue;
        }
        if c.is_alphanumeric() {
            for l in c.to_lowercase() {
                cur.push(l);
            }
        } else if !cur.is_empty() {
            words.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words.join(" ").chars().collect()
}

pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

pub struct OraclePresence {
    pub score: f64,
    /// (offset, len) of windows above the threshold.
    pub matches: Vec<(usize, usize)>,
}

pub fn presence(text: &[char], answer: &[char], cfg: &ExtractionConfig) -> OraclePresence {
    let (n, m) = (text.len(), answer.len());
    if m == 0 || n < m {
        return OraclePresence { score: 0.0, matches: vec![] };
    }
    let sims: Vec<f64> = (0..=n - m)
        .map(|i| 1.0 - levenshtein(&text[i..i + m], answer) as f64 / m as f64)
        .collect();
    let max = sims.iter().cloned().fold(0.0, f64::max);
    let sum: f64 = sims.iter().sum();
    let avg = if n == m { max } else { (sum / (n - m) as f64).min(max) };
    let matches = sims
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > cfg.similarity_threshold)
        .map(|(i, _)| (i, m))
        .collect();
    OraclePresence {
        score: cfg.presence_weights.avg * avg + cfg.presence_weights.max * max,
        matches,
    }
}

fn words(text: &[char]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < text.len() {
        if text[i] == ' ' {
            i += 1;
            continue;
        }
        let s = i;
        while i < text.len() && text[i] != ' ' {
            i += 1;
        }
        out.push((s, i));
    }
    out
}

pub fn sentiment_counts(text: &[char], matches: &[(usize, usize)], cfg: &ExtractionConfig) -> (usize, usize) {
    let ws = words(text);
    let w = cfg.sentiment_window as isize;
    let mut inside = BTreeSet::new();
    let mut context = BTreeSet::new();
    for &(off, len) in matches {
        let hit: Vec<usize> = (0..ws.len())
            .filter(|&k| ws[k].0 < off + len && ws[k].1 > off)
            .collect();
        let (Some(&lo), Some(&hi)) = (hit.first(), hit.last()) else {
            continue;
        };
        inside.extend(hit.iter().copied());
        for k in 0..ws.len() as isize {
            let before = k >= lo as isize - w && k < lo as isize;
            let after = k > hi as isize && k <= hi as isize + w;
            if before || after {
                context.insert(k as usize);
            }
        }
    }
    let (mut p, mut n) = (0, 0);
    for k in context.difference(&inside) {
        let word: String = text[ws[*k].0..ws[*k].1].iter().collect();
        if cfg.positive_terms.contains(&word) {
            p += 1;
        } else if cfg.negative_terms.contains(&word) {
            n += 1;
        }
    }
    (p, n)
}

pub fn strip(text: &str) -> String {
    let mut out = text.to_string();
    while let Some(a) = out.find("<think>") {
        match out[a..].find("</think>") {
            Some(b) => out = format!("{} {}", &out[..a], &out[a + b + "</think>".len()..]),
            None => {
                out.truncate(a);
                break;
            }
        }
    }
    out
}

pub struct OracleChoice {
    pub key: String,
    pub confidence: f64,
    pub first: Option<usize>,
}

pub fn extract(response: &str, answers: &[AnswerChoice], cfg: &ExtractionConfig) -> (Vec<OracleChoice>, Option<String>) {
    let body = if cfg.strip_reasoning { strip(response) } else { response.to_string() };
    let text = normalize(&body);
    let mut scored = Vec::new();
    for a in answers {
        let keyed = presence(&text, &normalize(&format!("{}. {}", a.key, a.text)), cfg);
        let bare = presence(&text, &normalize(&a.text), cfg);
        let best = if keyed.score > bare.score { keyed } else { bare };
        let (p, n) = sentiment_counts(&text, &best.matches, cfg);
        let weight = (1.0 + p as f64) / (2.0 + p as f64 + n as f64);
        scored.push(OracleChoice {
            key: a.key.clone(),
            confidence: best.score * weight,
            first: best.matches.first().map(|m| m.0),
        });
    }
    let mut pick: Option<usize> = None;
    for (i, c) in scored.iter().enumerate() {
        let better = match pick {
            None => true,
            Some(j) => {
                let b = &scored[j];
                c.confidence > b.confidence
                    || (c.confidence == b.confidence && c.first.unwrap_or(usize::MAX) < b.first.unwrap_or(usize::MAX))
            }
        };
        if better {
            pick = Some(i);
        }
    }
    let selected = pick
        .filter(|&i| scored[i].confidence >= cfg.unrelated_cutoff)
        .map(|i| scored[i].key.clone());
    (scored, selected)
}
