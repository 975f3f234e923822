//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero when any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cogbias::extraction::{extract, ExtractionConfig};
use cogbias::gateway::{BiasProfile, ModelConfig, Simulator};
use cogbias::pipeline::{self, RunManifest, RunOptions};
use cogbias::scoring::{classify, resistance, Classification, Dimension};
use cogbias::stats::{anova_temperature, cell_scores, f_tail, ols_fit, DesignMatrix};
use cogbias::{expand_prompt_set, fill_template, parse_template, BiasCategory, PhraseLexicon};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Verdict::*;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn data(rel: &str) -> String {
    common::data_dir().join(rel).display().to_string()
}

fn demo_manifest(dir: &Path, k: usize, profile: &str, models: &str) -> RunManifest {
    let body = format!(
        r#"corpus = "{corpus}"
lexicon = "{lexicon}"
extraction = "{extraction}"
base_seed = 2024
k = {k}
output = "out"
parallelism = 2

[simulate]
profile = "{profile}"
seed = 7

{models}"#,
        corpus = data("corpus"),
        lexicon = data("lexicon.toml"),
        extraction = data("extraction.toml"),
    );
    RunManifest::load(&common::write_manifest(dir, &body)).unwrap()
}

const ONE_MODEL: &str = "[[models]]\nmodel_id = \"sim\"\nendpoint = \"http://localhost\"\ntemperatures = [0.2]\n";

fn simulate() -> RunOptions {
    RunOptions {
        simulate: true,
        ..Default::default()
    }
}

fn expansion_arithmetic() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let lexicon = common::write_stub_corpus(tmp.path(), 220);
    let body = format!(
        "corpus = \"corpus\"\nlexicon = \"{}\"\nbase_seed = 1\nk = 25\noutput = \"out\"\n\n{ONE_MODEL}",
        lexicon.display()
    );
    let manifest = RunManifest::load(&common::write_manifest(tmp.path(), &body)).unwrap();
    let start = Instant::now();
    let stub = pipeline::cmd_expand(&manifest).unwrap();
    let elapsed = start.elapsed();

    let demo_dir = tempfile::tempdir().unwrap();
    let demo = pipeline::cmd_expand(&demo_manifest(demo_dir.path(), 25, &data("profiles/demo.toml"), ONE_MODEL)).unwrap();
    check(
        stub.instances == 5500 && stub.prompts == 27500 && elapsed < Duration::from_secs(60)
            && demo.templates == 8 && demo.instances == 200 && demo.prompts == 1000,
        format!("stub {stub} in {elapsed:.2?}; demo {demo}"),
    )
}

fn extraction_fixtures() -> Verdict {
    let cfg = ExtractionConfig::default();
    let flight = extract(common::FLIGHT_RESPONSE, &common::flight_choices(), &cfg).selected;
    let photo = extract(common::PHOTOGRAPHER_RESPONSE, &common::photographer_choices(), &cfg).selected;
    let cases = usize::from(flight.as_deref() == Some("B")) + usize::from(photo.as_deref() == Some("A"));

    let items = common::fixtures();
    let (mut correct, mut none, mut none_right) = (0, 0, 0);
    for f in &items {
        let got = extract(&f.response, &f.answers, &cfg).selected;
        correct += usize::from(got == f.expected);
        if got.is_none() {
            none += 1;
            none_right += usize::from(f.expected.is_none());
        }
    }
    let accuracy = correct as f64 / items.len() as f64;
    let precision = none_right as f64 / none.max(1) as f64;
    check(
        cases == 2 && items.len() == 200 && accuracy >= 0.95 && precision >= 0.90,
        format!(
            "case studies {cases}/2; accuracy {accuracy:.3} on {} fixtures; unrelated precision {precision:.3}",
            items.len()
        ),
    )
}

fn oracle_equivalence() -> Verdict {
    let cfg = ExtractionConfig::default();
    let items = common::fixtures();
    let mut same_choice = 0;
    let mut worst: f64 = 0.0;
    for f in &items {
        let fast = extract(&f.response, &f.answers, &cfg);
        let (slow, selected) = common::oracle::extract(&f.response, &f.answers, &cfg);
        same_choice += usize::from(fast.selected == selected);
        for (a, b) in fast.choices.iter().zip(&slow) {
            worst = worst.max((a.confidence - b.confidence).abs());
        }
    }
    check(
        same_choice == items.len() && worst < 1e-9,
        format!("selected identical on {same_choice}/{}; max |S_a diff| {worst:.2e}", items.len()),
    )
}

fn closed_loop() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let levels = [0.1, 0.3, 0.5, 0.8];
    let targets: BTreeMap<BiasCategory, f64> = BiasCategory::ALL
        .iter()
        .enumerate()
        .map(|(i, b)| (*b, levels[i % levels.len()]))
        .collect();
    let mut profile = String::from("unrelated_rate = 0.05\n[biases]\n");
    for (b, p) in &targets {
        profile.push_str(&format!("{} = {p}\n", b.slug()));
    }
    let profile_path = tmp.path().join("profile.toml");
    std::fs::write(&profile_path, profile).unwrap();
    let manifest = demo_manifest(tmp.path(), 500, &profile_path.display().to_string(), ONE_MODEL);

    let start = Instant::now();
    pipeline::cmd_pipeline(&manifest, &simulate()).unwrap();
    let cls = pipeline::cmd_score(&manifest, &[Dimension::Bias]).unwrap();
    let elapsed = start.elapsed();

    let mut misses = Vec::new();
    let mut n_min = usize::MAX;
    for row in resistance(&cls, &[Dimension::Bias]) {
        let bias = row.key.bias.unwrap();
        let q = 1.0 - targets[&bias];
        let half = 2.576 * (q * (1.0 - q) / row.n_total as f64).sqrt();
        let got = row.score.unwrap();
        n_min = n_min.min(row.n_total);
        if (got - q).abs() > half {
            misses.push(format!("{bias}: {got:.4} vs {q}±{half:.4}"));
        }
    }
    check(
        misses.is_empty() && n_min == 2500 && elapsed < Duration::from_secs(300),
        format!("{} prompts per bias in {elapsed:.2?}; outside CI: {misses:?}", n_min),
    )
}

fn random_design(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<f64>) {
    let p = rng.random_range(2..=5);
    let n = rng.random_range(p + 3..=30);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut row = vec![1.0];
            row.extend((1..p).map(|_| rng.random_range(-3.0..3.0)));
            row
        })
        .collect();
    let y = x
        .iter()
        .map(|r| r.iter().enumerate().map(|(j, v)| v * j as f64 * 0.5).sum::<f64>() + rng.random_range(-1.0..1.0))
        .collect();
    (x, y)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn statistics() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ols_ok = 0;
    for _ in 0..20 {
        let (x, y) = random_design(&mut rng);
        let names = (0..x[0].len()).map(|j| if j == 0 { "intercept".into() } else { format!("x{j}") }).collect();
        let fit = ols_fit(&DesignMatrix::from_rows(names, &x).unwrap(), &y).unwrap();
        let reference = common::reference_stats::normal_equations(&x, &y);
        let (n, p) = (x.len() as f64, x[0].len() as f64);
        let mean = y.iter().sum::<f64>() / n;
        let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let f_ref = ((tss - reference.rss) / (p - 1.0)) / (reference.rss / (n - p));
        let beta_ok = fit.beta.iter().zip(&reference.beta).all(|(a, b)| close(*a, *b, 1e-8));
        if beta_ok && close(fit.f, f_ref, 1e-8) && close(fit.r2, reference.r2, 1e-8) {
            ols_ok += 1;
        }
    }

    let mut worst: f64 = 0.0;
    let mut grid = 0;
    for f in [0.05, 0.5, 1.0, 2.5, 4.0, 10.0, 30.0] {
        for df1 in [1.0, 2.0, 3.0, 5.0, 10.0] {
            for df2 in [1.0, 4.0, 10.0, 30.0, 120.0] {
                let quad = common::reference_stats::f_tail_quadrature(f, df1, df2);
                worst = worst.max((f_tail(f, df1, df2).unwrap() - quad).abs());
                grid += 1;
            }
        }
    }

    let (beta, se, pval) = injected_temperature_effect();
    check(
        ols_ok == 20 && worst < 1e-8 && (beta - 0.1).abs() <= 2.0 * se && pval < 0.01,
        format!(
            "ols {ols_ok}/20 designs; f_tail max diff {worst:.2e} over {grid} points; \
             temperature beta {beta:.4} (se {se:.4}), p {pval:.2e}"
        ),
    )
}

/// Two models, temperatures 0 to 2, biased probability falling by 0.1 per
/// unit of temperature, one bias, 200 instances per level.
fn injected_temperature_effect() -> (f64, f64, f64) {
    let template = parse_template(&std::fs::read_to_string(data("corpus/prospect-theory-bonus.toml")).unwrap()).unwrap();
    let lexicon = PhraseLexicon::load(Path::new(&data("lexicon.toml"))).unwrap();
    let instances = fill_template(&template, &lexicon, 11, 200).unwrap();
    let prompts = expand_prompt_set(&instances).unwrap();
    let profile = BiasProfile::from_toml_str(
        "default_p = 0.5\nunrelated_rate = 0.05\ntemperature_slope = -0.1\n[model_offsets]\n\"sim-b\" = -0.1\n",
    )
    .unwrap();
    let sim = Simulator::new(profile, 3);
    let cfg = ExtractionConfig::default();
    let mut cls = Vec::new();
    for model in ["sim-a", "sim-b"] {
        for step in 0..=8 {
            let config = ModelConfig::new(model, "simulated", step as f64 * 0.25);
            for prompt in &prompts {
                let (_, text) = sim.decide(prompt, &config);
                cls.push(Classification {
                    prompt: prompt.key.clone(),
                    bias: prompt.bias,
                    model_id: model.into(),
                    temperature: config.temperature,
                    outcome: classify(&extract(&text, &prompt.answers, &cfg), &prompt.answers),
                });
            }
        }
    }
    let effect = anova_temperature(&cell_scores(&cls), template.bias).unwrap();
    (effect.beta, effect.std_err, effect.p)
}

fn determinism() -> Verdict {
    let models = "[[models]]\nmodel_id = \"sim-a\"\nendpoint = \"http://localhost\"\ntemperatures = [0.2, 0.8]\nparams_b = 2.0\n\n\
                  [[models]]\nmodel_id = \"sim-b\"\nendpoint = \"http://localhost\"\ntemperatures = [0.2, 0.8]\nparams_b = 20.0\nreasoning = true\n";
    let mut trees = Vec::new();
    for _ in 0..2 {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = demo_manifest(tmp.path(), 25, &data("profiles/demo.toml"), models);
        pipeline::cmd_pipeline(&manifest, &simulate()).unwrap();
        let layout = manifest.layout();
        trees.push((common::tree_contents(&layout.reports()), common::tree_contents(&layout.analysis())));
    }
    let files = trees[0].0.len() + trees[0].1.len();
    check(
        files > 0 && trees[0] == trees[1],
        format!("{files} report and analysis files compared"),
    )
}

fn live_smoke() -> Verdict {
    let (Ok(endpoint), Ok(model)) = (std::env::var("COGBIAS_LIVE_ENDPOINT"), std::env::var("COGBIAS_LIVE_MODEL")) else {
        return Skip("set COGBIAS_LIVE_ENDPOINT and COGBIAS_LIVE_MODEL to run".into());
    };
    let tmp = tempfile::tempdir().unwrap();
    let models = format!(
        "[[models]]\nmodel_id = \"{model}\"\nendpoint = \"{endpoint}\"\ntemperatures = [0.2]\n"
    );
    let manifest = demo_manifest(tmp.path(), 25, &data("profiles/demo.toml"), &models);
    if let Err(e) = pipeline::cmd_pipeline(&manifest, &RunOptions::default()) {
        return Fail(e.to_string());
    }
    let cls = pipeline::cmd_score(&manifest, &[Dimension::Bias]).unwrap();
    let interior = resistance(&cls, &[Dimension::Bias])
        .iter()
        .filter(|r| r.score.is_some_and(|s| s > 0.0 && s < 1.0))
        .count();
    check(interior >= 6, format!("{interior}/8 biases strictly inside (0, 1)"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 7] = [
        ("expansion arithmetic", expansion_arithmetic),
        ("extraction fixtures", extraction_fixtures),
        ("oracle equivalence", oracle_equivalence),
        ("closed-loop metric recovery", closed_loop),
        ("statistics vs oracle", statistics),
        ("determinism", determinism),
        ("live smoke", live_smoke),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Fail(format!("panicked: {msg}"))
        });
        let (tag, detail) = match verdict {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Skip(d) => ("SKIP", d),
        };
        println!("criterion {}: {tag} {name}: {detail}", i + 1);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
