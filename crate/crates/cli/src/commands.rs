use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use leash_core::codebook::{code_corpus, load_coded_dir, Instrument};
use leash_core::codec::parse_elements_schema;
use leash_core::harness::{
    concordance, concordance_csv, grid_csv, run_abstention_grid, run_regime, ApprovalPolicy, Exp1Config, Regime,
    RegimeOutcome, RegimeReport, SchemaSeed,
};
use leash_core::indices::{compute_indices, construct_correlations, emit_plane, ConstructIndices, Scaling};
use leash_core::model::{validate_pipeline, PipelineSpec};
use leash_core::orchestrator::{
    pending_checkpoints, Decision, Orchestrator, OrchestratorError, RunOptions, RunState, RunStatus, Verdict,
};
use serde::Serialize;
use serde_json::json;

use crate::config::CliConfig;
use crate::error::{CliError, EXIT_VALIDATION};
use crate::{CheckpointAction, Cli, Command, DecisionArgs};

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let cfg = CliConfig::resolve(&cli.global)?;
    match cli.command {
        Command::Validate { spec } => validate(&spec),
        Command::Run {
            spec,
            inputs,
            run_id,
            parent,
        } => {
            let spec_text = read(&spec)?;
            let pipeline = PipelineSpec::from_toml_str(&spec_text)?;
            let inputs = parse_inputs(&inputs)?;
            let opts = RunOptions {
                run_id,
                parent,
                spec_path: Some(spec.display().to_string()),
            };
            let state = cfg.orchestrator()?.run(&pipeline, inputs, cfg.params()?, opts)?;
            emit(None, &summary_json(&state))
        }
        Command::Resume { run_id, spec } => {
            let spec = spec.map(|p| PipelineSpec::load(&p)).transpose()?;
            let state = cfg.orchestrator()?.resume(&run_id, spec.as_ref())?;
            emit(None, &summary_json(&state))
        }
        Command::Checkpoints { action } => checkpoints(&cfg, action),
        Command::Exp1 {
            grid,
            letter,
            run_prefix,
            out,
        } => {
            let config = Exp1Config::from_toml_str(&read(&grid)?)?;
            let cells = run_abstention_grid(
                &cfg.orchestrator()?,
                &read(&letter)?,
                &config,
                &cfg.params()?,
                &run_prefix,
            )?;
            emit(out.as_deref(), &grid_csv(&cells))
        }
        Command::Exp2 {
            regime,
            letter,
            seed,
            schema,
            auto_approve,
            compare,
            run_prefix,
            out,
        } => {
            let seed = match (seed, schema) {
                (Some(p), _) => Some(SchemaSeed::Corpus(read(&p)?)),
                (None, Some(p)) => Some(SchemaSeed::Approved(
                    parse_elements_schema(&read(&p)?).map_err(|e| CliError::validation(e.code(), e.to_string()))?,
                )),
                (None, None) => None,
            };
            let approval = if auto_approve {
                ApprovalPolicy::AutoApprove
            } else {
                ApprovalPolicy::Halt
            };
            let run = Exp2Run {
                orch: cfg.orchestrator()?,
                letter: read(&letter)?,
                seed,
                params: cfg.params()?,
                approval,
                prefix: run_prefix,
            };
            let first = match run.regime(parse_regime(&regime)?)? {
                Ok(r) => r,
                Err(halt) => return emit(out.as_deref(), &halt),
            };
            match compare {
                None => emit(out.as_deref(), &scores_csv(&first)),
                Some(other) => match run.regime(parse_regime(&other)?)? {
                    Ok(second) => {
                        let c = concordance(&first.scores(), &second.scores())?;
                        emit(out.as_deref(), &concordance_csv(&c))
                    }
                    Err(halt) => emit(out.as_deref(), &halt),
                },
            }
        }
        Command::CodeCorpus {
            manifest,
            runs,
            out,
            instrument,
        } => {
            let instrument = match instrument {
                Some(p) => Instrument::load(p)?,
                None => Instrument::standard(),
            };
            let coded = code_corpus(&cfg.orchestrator()?, &manifest, &instrument, &cfg.params()?, runs, &out)?;
            let rows: Vec<_> = coded
                .iter()
                .map(|c| {
                    json!({
                        "record_id": c.record_id,
                        "run_id": c.run_id,
                        "runs": c.runs.len(),
                        "runs_with_violations": c.violations.len(),
                    })
                })
                .collect();
            emit(None, &(serde_json::to_string_pretty(&rows).expect("json") + "\n"))
        }
        Command::Indices {
            coded_dir,
            scaling,
            out,
        } => {
            let rows = index_rows(&coded_dir, scaling.as_deref())?;
            #[derive(Serialize)]
            struct Row<'a> {
                id: &'a str,
                #[serde(flatten)]
                indices: &'a ConstructIndices,
            }
            let correlations: Vec<_> = construct_correlations(&rows)
                .into_iter()
                .map(|(a, b, r)| json!({ "a": a.as_str(), "b": b.as_str(), "r": r }))
                .collect();
            let doc = json!({
                "records": rows.iter().map(|(id, i)| Row { id, indices: i }).collect::<Vec<_>>(),
                "correlations": correlations,
            });
            emit(
                out.as_deref(),
                &(serde_json::to_string_pretty(&doc).expect("json") + "\n"),
            )
        }
        Command::Plane {
            coded_dir,
            scaling,
            out,
        } => {
            let rows = index_rows(&coded_dir, scaling.as_deref())?;
            emit(out.as_deref(), &emit_plane(&rows))
        }
        Command::Serve { port, host } => serve(&cfg, &host, port),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::new(1, "io", format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn validate(path: &Path) -> Result<(), CliError> {
    let spec = PipelineSpec::load(path)?;
    let violations = validate_pipeline(&spec);
    if !violations.is_empty() {
        return Err(OrchestratorError::InvalidSpec(violations).into());
    }
    let doc = json!({
        "ok": true,
        "id": spec.id,
        "stages": spec.stages.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(),
        "checkpoints": spec.stages.iter().filter(|s| s.checkpoint).map(|s| s.id.as_str()).collect::<Vec<_>>(),
        "required_inputs": spec.required_inputs(),
        "digest": spec.digest(),
    });
    emit(None, &(doc.to_string() + "\n"))
}

fn parse_inputs(pairs: &[String]) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for p in pairs {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| CliError::validation("invalid-input", format!("`{p}` is not NAME=VALUE")))?;
        let v = match v.strip_prefix('@') {
            Some(path) => read(Path::new(path))?,
            None => v.to_string(),
        };
        out.insert(k.to_string(), v);
    }
    Ok(out)
}

fn summary_json(state: &RunState) -> String {
    let doc = json!({
        "run_id": state.run_id,
        "status": state.status,
        "stage_states": state.stage_states,
    });
    doc.to_string() + "\n"
}

fn checkpoints(cfg: &CliConfig, action: CheckpointAction) -> Result<(), CliError> {
    let (run_id, verdict, artifact, slot, d) = match action {
        CheckpointAction::List => {
            let pending = pending_checkpoints(&cfg.store()?)?;
            return emit(None, &(serde_json::to_string_pretty(&pending).expect("json") + "\n"));
        }
        CheckpointAction::Approve { run_id, d } => (run_id, Verdict::Approve, None, None, d),
        CheckpointAction::Reject { run_id, d } => (run_id, Verdict::Reject, None, None, d),
        CheckpointAction::Edit {
            run_id,
            artifact,
            slot,
            d,
        } => (run_id, Verdict::Edit, Some(read(&artifact)?), slot, d),
    };
    let DecisionArgs {
        stage,
        author,
        note,
        no_resume,
    } = d;
    let continues = verdict != Verdict::Reject && !no_resume;
    // build the full gateway first so a config problem does not leave a decision behind
    let orch = if continues {
        cfg.orchestrator()?
    } else {
        cfg.offline_orchestrator()?
    };
    let current = orch.state(&run_id)?;
    let stage = match stage {
        Some(s) => s,
        None => match &current.status {
            RunStatus::AwaitingApproval { stage } | RunStatus::Rejected { stage } => stage.clone(),
            other => {
                return Err(OrchestratorError::NotAwaiting {
                    stage: "-".into(),
                    status: serde_json::to_value(other)
                        .ok()
                        .and_then(|v| v.get("state").and_then(|s| s.as_str()).map(str::to_string))
                        .unwrap_or_default(),
                }
                .into())
            }
        },
    };
    let decision = Decision {
        checkpoint: stage,
        slot,
        verdict,
        edited_artifact: artifact,
        author,
        note,
    };
    let mut state = orch.resolve_checkpoint(&run_id, decision).map_err(|e| match e {
        // a bad edit is the reviewer's input failing validation, not a provider fault
        OrchestratorError::ContractViolation { .. } => CliError::new(EXIT_VALIDATION, e.code(), e.to_string()),
        other => other.into(),
    })?;
    if continues && state.status == RunStatus::Running {
        state = orch.resume(&run_id, None)?;
    }
    emit(None, &summary_json(&state))
}

fn parse_regime(s: &str) -> Result<Regime, CliError> {
    Ok(s.parse()?)
}

struct Exp2Run {
    orch: Orchestrator,
    letter: String,
    seed: Option<SchemaSeed>,
    params: leash_core::model::RunParams,
    approval: ApprovalPolicy,
    prefix: String,
}

impl Exp2Run {
    /// The finished report, or a status line when the run stopped at a checkpoint.
    fn regime(&self, regime: Regime) -> Result<Result<RegimeReport, String>, CliError> {
        if regime.uses_schema() && self.seed.is_none() {
            return Err(CliError::config(format!("{regime} needs --seed or --schema")));
        }
        let run_id = format!("{}-{regime}", self.prefix);
        let out = run_regime(
            &self.orch,
            regime,
            &self.letter,
            self.seed.as_ref(),
            &self.params,
            self.approval,
            &run_id,
        )?;
        Ok(match out {
            RegimeOutcome::Complete(r) => Ok(r),
            RegimeOutcome::Halted { run_id, stage } => {
                Err(json!({ "run_id": run_id, "status": "awaiting-approval", "stage": stage }).to_string() + "\n")
            }
            RegimeOutcome::Rejected { run_id, stage } => {
                Err(json!({ "run_id": run_id, "status": "rejected", "stage": stage }).to_string() + "\n")
            }
        })
    }
}

fn scores_csv(r: &RegimeReport) -> String {
    if r.reports.is_empty() {
        return r.synthesis.clone().unwrap_or_default();
    }
    let mut out = String::from("element,score\n");
    for (k, s) in r.scores() {
        out.push_str(&format!("{k},{s}\n"));
    }
    out
}

fn index_rows(dir: &Path, scaling: Option<&Path>) -> Result<Vec<(String, ConstructIndices)>, CliError> {
    let scaling = match scaling {
        Some(p) => Scaling::load(p)?,
        None => Scaling::standard(),
    };
    let records = load_coded_dir(dir)?;
    if records.is_empty() {
        return Err(CliError::validation(
            "empty-input",
            format!("no coded records under {}", dir.display()),
        ));
    }
    records
        .iter()
        .map(|r| Ok((r.paper_id.clone(), compute_indices(r, &scaling)?)))
        .collect()
}

fn serve(cfg: &CliConfig, host: &str, port: u16) -> Result<(), CliError> {
    let orch = match cfg.orchestrator() {
        Ok(o) => o,
        Err(e) => {
            tracing_warn(&format!(
                "decisions will be recorded but runs cannot continue: {}",
                e.message
            ));
            cfg.offline_orchestrator()?
        }
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        println!("listening on http://{}", listener.local_addr()?);
        let state = leash_server::AppState::new(orch);
        leash_server::serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })?;
    Ok(())
}

fn tracing_warn(msg: &str) {
    eprintln!("{}", json!({ "level": "warn", "message": msg }));
}
