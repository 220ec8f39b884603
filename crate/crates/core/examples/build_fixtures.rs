//! Regenerates the recorded cassettes and synthetic data under `fixtures/`.
//!
//! Responses come from scripted transports, not a provider, so the cassettes
//! exercise the full record/replay path with known content.
//!
//!     cargo run -p leash-core --example build_fixtures

use std::path::{Path, PathBuf};
use std::sync::Arc;

use leash_core::codebook::{Answer, AnswerValue, CodedRecord, RecordSource, ScreeningPass, ScreeningRecord, Verdict};
use leash_core::codec::{Element, ElementSchema};
use leash_core::gateway::{Cassette, CassetteMode, CompletionRequest, Gateway, ScriptedTransport};
use leash_core::harness::{
    self, ApprovalPolicy, Exp1Config, Regime, SchemaSeed, ABSTENTION_MARKER, ABSTENTION_SENTENCE,
};
use leash_core::model::RunParams;
use leash_core::orchestrator::{AuditStore, Orchestrator};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// (key, label, two-stage score, multi-stage score, supporting sentence)
const ELEMENTS: [(&str, &str, i64, i64, &str); 17] = [
    (
        "legal-limits",
        "Legal limits on rulers' powers",
        9,
        9,
        "the trust is bounded by the law that binds us all",
    ),
    (
        "sovereignty",
        "Sovereignty vs. government offices",
        8,
        9,
        "The council that sent you is above you, and the law is above the council.",
    ),
    (
        "entrenchment",
        "Entrenchment of constraints",
        7,
        7,
        "must rest on a rule that existed before you and will remain after you",
    ),
    (
        "writtenness",
        "Writtenness and custom",
        9,
        9,
        "The written code of the realm stands above every order you issue.",
    ),
    (
        "allocation",
        "Allocation and checks of power",
        9,
        8,
        "None of them shall take up the work of another without your written leave",
    ),
    (
        "supremacy",
        "Supremacy of constitutional norms",
        8,
        9,
        "the code prevails and your instruction is void",
    ),
    (
        "rights",
        "Rights as limits on power",
        8,
        8,
        "is owed the same protection of body and property",
    ),
    (
        "procedural",
        "Procedural limits",
        9,
        9,
        "Keep the ledgers open, and let the clerks answer to the council each season.",
    ),
    (
        "jurisdictional",
        "Jurisdictional limits",
        6,
        8,
        "Your authority ends at the river.",
    ),
    (
        "amendment",
        "Amendment rules",
        2,
        0,
        "These instructions are principles and not a list.",
    ),
    (
        "interpretation",
        "Interpretation and enforcement",
        8,
        9,
        "review their judgments from time to time",
    ),
    (
        "conventions",
        "Binding political conventions",
        7,
        8,
        "Keep the old customs of the markets and the villages where they do no harm.",
    ),
    (
        "due-process",
        "Due process and fair adjudication",
        8,
        8,
        "hear the accused in open court and let them answer the charge",
    ),
    (
        "consent",
        "Consent in lawmaking",
        3,
        2,
        "take counsel with the elders of the districts before you decide",
    ),
    (
        "stability",
        "Stability and continuity",
        7,
        8,
        "Leave the office as you found it",
    ),
    (
        "abstract-commitments",
        "Abstract commitments enabling adaptation",
        9,
        9,
        "Where they are silent, reason from their purpose.",
    ),
    (
        "remedies",
        "Remedies for constitutional breach",
        8,
        7,
        "you shall restore what was taken and remove the official",
    ),
];

/// Slot of the 1-10 abstention cell that answers with eight items.
const OUTLIER_ATTEMPT: u32 = 17;

fn main() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let params: RunParams = toml::from_str(&read(&root.join("params.toml"))).expect("params.toml");
    let letter = read(&root.join("letter.txt"));
    let sentences: Vec<String> = letter
        .split(['.', '\n'])
        .map(str::trim)
        .filter(|s| s.len() > 20)
        .map(str::to_string)
        .collect();

    build_exp1(&root, &params, &letter, sentences.clone());
    build_exp2(&root, &params, &letter);
    build_screening(&root);
    build_corpus(&root);
    build_coding(&root, &params);
    println!("fixtures written under {}", root.display());
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn write(p: &Path, text: &str) {
    if let Some(d) = p.parent() {
        std::fs::create_dir_all(d).unwrap();
    }
    std::fs::write(p, text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
}

fn recorder(cassette: &Path, transport: ScriptedTransport) -> (Orchestrator, tempfile::TempDir) {
    let _ = std::fs::remove_file(cassette);
    let c = Arc::new(Cassette::open(cassette, CassetteMode::Record).unwrap());
    // one call at a time keeps the cassette line order stable across rebuilds
    let gw = Gateway::new(c, Arc::new(transport)).with_max_in_flight(1);
    let audit = tempfile::tempdir().unwrap();
    (Orchestrator::new(AuditStore::new(audit.path()).unwrap(), gw), audit)
}

fn evidence(sentences: &[String], n: usize, offset: usize) -> String {
    (0..n)
        .map(|i| format!("<evidence>{}</evidence>", sentences[(offset + i) % sentences.len()]))
        .collect::<Vec<_>>()
        .join("\n")
}

fn build_exp1(root: &Path, params: &RunParams, letter: &str, sentences: Vec<String>) {
    let config = Exp1Config::from_toml_str(&read(&root.join("exp1/config.toml"))).unwrap();
    let transport = ScriptedTransport::text(move |req: &CompletionRequest| {
        let prompt = req.prompt_text();
        let a = req.attempt as usize;
        if prompt.contains(ABSTENTION_SENTENCE) {
            if prompt.contains("between 1 and 10") && req.attempt == OUTLIER_ATTEMPT {
                return evidence(&sentences, 8, a);
            }
            return ABSTENTION_MARKER.to_string();
        }
        // synthetic counts for the forced cells, not measurements of any model
        let n = if prompt.contains("between 1 and 10") {
            1 + (a * 7) % 10
        } else {
            (a * 3) % 8
        };
        evidence(&sentences, n, a)
    });
    let (orch, _audit) = recorder(&root.join("exp1/cassette.jsonl"), transport);
    let cells = harness::run_abstention_grid(&orch, letter, &config, params, "exp1").unwrap();
    print!("{}", harness::grid_csv(&cells));
}

fn schema() -> ElementSchema {
    ElementSchema {
        elements: ELEMENTS.iter().map(|(k, l, ..)| Element::new(*k, *l)).collect(),
    }
}

fn report(score: i64, quote: &str) -> String {
    let quotes = if score > 0 {
        format!("<quote1>{quote}</quote1>")
    } else {
        String::new()
    };
    let expl = if score > 0 {
        "The letter expresses this element directly."
    } else {
        "The letter does not address this element."
    };
    format!("<explanation>{expl}</explanation>\n<quotations>{quotes}</quotations>\n<score>{score}</score>")
}

fn build_exp2(root: &Path, params: &RunParams, letter: &str) {
    let schema_json = serde_json::to_string_pretty(&serde_json::json!({ "dimensions": schema().elements })).unwrap();
    write(&root.join("exp2/schema.json"), &(schema_json.clone() + "\n"));
    let seed = SchemaSeed::Corpus(read(&root.join("seed.txt")));
    for regime in Regime::ALL {
        let schema_json = schema_json.clone();
        let transport = ScriptedTransport::text(move |req: &CompletionRequest| {
            let p = req.prompt_text();
            if p.contains("Reference article:") {
                return format!("Here is the schema.\n```json\n{schema_json}\n```");
            }
            if p.contains("Work through the schema elements") {
                return ELEMENTS
                    .iter()
                    .map(|(_, _, two, _, q)| report(*two, q))
                    .collect::<Vec<_>>()
                    .join("\n\n");
            }
            if let Some(rest) = p.split("of the schema, \"").nth(1) {
                let label = rest.split("\", and ignore").next().unwrap_or_default();
                let (_, _, _, multi, q) = ELEMENTS.iter().find(|e| e.1 == label).expect("known element");
                return report(*multi, q);
            }
            if p.contains("Combine them") {
                return "Overall the letter expresses most elements strongly. Procedure, writtenness and \
                        legal limits score highest; amendment rules are effectively absent."
                    .into();
            }
            let items = read_mapping_names();
            items
                .iter()
                .enumerate()
                .map(|(i, n)| format!("{}. {n}", i + 1))
                .collect::<Vec<_>>()
                .join("\n")
        });
        let (orch, _audit) = recorder(&root.join(format!("exp2/{regime}.jsonl")), transport);
        let out = harness::run_regime(
            &orch,
            regime,
            letter,
            Some(&seed),
            params,
            ApprovalPolicy::AutoApprove,
            regime.as_str(),
        )
        .unwrap();
        match out {
            harness::RegimeOutcome::Complete(r) => println!("{regime}: {} reports", r.reports.len()),
            other => panic!("{regime}: {other:?}"),
        }
    }
}

fn read_mapping_names() -> Vec<String> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    harness::parse_mapping(&read(&root.join("exp2/mapping.csv")))
        .unwrap()
        .into_iter()
        .map(|r| r.baseline_element)
        .collect()
}

fn build_screening(root: &Path) {
    let models = ["screen-a", "screen-b", "screen-c"];
    let records: Vec<ScreeningRecord> = (0..20u32)
        .map(|i| {
            let bits = (i * 5 + 3) % 8;
            ScreeningRecord {
                record_id: format!("S{i:02}"),
                abstract_text: format!("Synthetic abstract {i}."),
                passes: models
                    .iter()
                    .enumerate()
                    .map(|(j, m)| ScreeningPass {
                        model: m.to_string(),
                        verdict: if bits & (1 << j) != 0 {
                            Verdict::Relevant
                        } else {
                            Verdict::NotRelevant
                        },
                    })
                    .collect(),
            }
        })
        .collect();
    write(
        &root.join("codebook/screening.json"),
        &(serde_json::to_string_pretty(&records).unwrap() + "\n"),
    );
}

fn pick<R: Rng>(rng: &mut R, codes: &[&str]) -> String {
    codes[rng.random_range(0..codes.len())].to_string()
}

fn build_corpus(root: &Path) {
    let dir = root.join("codebook/corpus");
    let _ = std::fs::remove_dir_all(&dir);
    let mut rng = StdRng::seed_from_u64(56);
    for i in 0..56 {
        let mut rec = CodedRecord::new(
            format!("P{i:03}"),
            RecordSource::Human {
                coder: "synthetic".into(),
            },
        );
        let mut put = |id: &str, v: AnswerValue| {
            rec.answers.insert(id.into(), Answer::new(id, v));
        };
        let ordinal = [
            ("Q10", 1, 5),
            ("Q11", 0, 2),
            ("Q12", 0, 3),
            ("Q13", 0, 4),
            ("Q14", 1, 3),
            ("Q15", 1, 5),
            ("Q16", 0, 3),
            ("Q17", 0, 3),
            ("Q22", 0, 3),
            ("Q23", 0, 3),
        ];
        for (id, lo, hi) in ordinal {
            let code = if rng.random_bool(0.08) {
                "NR".to_string()
            } else {
                rng.random_range(lo..=hi).to_string()
            };
            put(id, AnswerValue::single(code));
        }
        put(
            "Q18",
            AnswerValue::single(pick(&mut rng, &["INTERACTIVE", "FIXED", "AGENTIC", "NR"])),
        );
        put("Q25", AnswerValue::single(pick(&mut rng, &["NO", "YES", "NA"])));
        put(
            "Q27",
            AnswerValue::single(pick(&mut rng, &["VERBATIM", "REPOSITORY", "PARTIAL", "NO"])),
        );
        let q29: Vec<&str> = ["1", "2", "3"].into_iter().filter(|_| rng.random_bool(0.4)).collect();
        put(
            "Q29",
            if q29.is_empty() {
                AnswerValue::multi(["NONE"])
            } else {
                AnswerValue::multi(q29)
            },
        );
        let q30: Vec<&str> = ["1", "2", "3"].into_iter().filter(|_| rng.random_bool(0.35)).collect();
        put(
            "Q30",
            if q30.is_empty() {
                AnswerValue::multi(["NONE"])
            } else {
                AnswerValue::multi(q30)
            },
        );
        put("Q31", AnswerValue::single(pick(&mut rng, &["NO", "YES", "NA"])));
        put("Q32", AnswerValue::single(pick(&mut rng, &["NO", "BRIEF", "DETAILED"])));
        put(
            "Q33",
            AnswerValue::single(pick(&mut rng, &["NONE", "HUMAN_HUMAN", "HUMAN_LLM", "BOTH"])),
        );
        write(
            &dir.join(format!("P{i:03}.json")),
            &(serde_json::to_string_pretty(&rec).unwrap() + "\n"),
        );
    }
}

const PAPERS: [(&str, &str, &str); 2] = [
    (
        "W1",
        "Coding protest posts with a language model",
        "We asked a model to label 4,000 forum posts for protest intent using a fixed prompt. \
Two authors checked a random sample of 200 labels. The prompts are printed in the appendix. \
The model saw each post once and returned a single label.",
    ),
    (
        "W2",
        "Agentic summaries of council minutes",
        "An agent read council minutes, decided which documents to open, and wrote thematic summaries. \
No human reviewed the summaries before analysis. Code and data are not shared. \
The agent ran until it judged the summary complete.",
    ),
];

fn build_coding(root: &Path, params: &RunParams) {
    let dir = root.join("codebook/coding");
    let _ = std::fs::remove_dir_all(&dir);
    let mut manifest = String::from("record_id,title,abstract,fulltext_path\n");
    for (id, title, body) in PAPERS {
        write(&dir.join(format!("papers/{id}.txt")), &format!("{body}\n"));
        manifest.push_str(&format!(
            "{id},{title},\"{}\",papers/{id}.txt\n",
            body.split(". ").next().unwrap()
        ));
    }
    write(&dir.join("manifest.csv"), &manifest);
    let transport = ScriptedTransport::text(|req: &CompletionRequest| {
        let p = req.prompt_text();
        let w1 = p.contains("protest intent");
        let q = |s: &str| serde_json::json!({ "text": "Stated in the paper.", "quotes": [s] });
        // run 3 of W1 disagrees on task nature
        let q10 = if w1 && req.attempt == 3 {
            "2"
        } else if w1 {
            "3"
        } else {
            "4"
        };
        let answers = if w1 {
            serde_json::json!({
                "Q00": { "value": "YES", "rationale": q("label 4,000 forum posts") },
                "Q10": { "value": q10, "rationale": q("label 4,000 forum posts for protest intent") },
                "Q16": { "value": "1", "rationale": q("using a fixed prompt") },
                "Q17": { "value": "2", "rationale": q("Two authors checked a random sample of 200 labels") },
                "Q18": { "value": "FIXED", "rationale": q("using a fixed prompt") },
                "Q29": { "value": ["1"], "rationale": q("The prompts are printed in the appendix") },
            })
        } else {
            serde_json::json!({
                "Q00": { "value": "YES", "rationale": q("An agent read council minutes") },
                "Q10": { "value": q10, "rationale": q("wrote thematic summaries") },
                "Q16": { "value": "0", "rationale": q("decided which documents to open") },
                "Q17": { "value": "0", "rationale": q("No human reviewed the summaries") },
                "Q18": { "value": "AGENTIC", "rationale": q("The agent ran until it judged the summary complete") },
                "Q29": { "value": ["NONE"], "rationale": q("Code and data are not shared") },
            })
        };
        serde_json::to_string_pretty(&serde_json::json!({ "answers": answers })).unwrap()
    });
    let (orch, _audit) = recorder(&dir.join("cassette.jsonl"), transport);
    let out = tempfile::tempdir().unwrap();
    let coded = leash_core::codebook::code_corpus(
        &orch,
        dir.join("manifest.csv"),
        &leash_core::codebook::Instrument::standard(),
        params,
        5,
        out.path(),
    )
    .unwrap();
    for c in coded {
        println!(
            "coded {}: {} runs, {} with violations",
            c.record_id,
            c.runs.len(),
            c.violations.len()
        );
    }
}
