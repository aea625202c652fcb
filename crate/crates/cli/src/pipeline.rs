//! The predict stage: per-procedure context assembly, prompting, backend
//! dispatch under a bounded worker pool, journaling, and idempotent resume.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, Result};

use tacmap_core::corpus::ProcedureExample;
use tacmap_core::extraction::{extract_tactics, ModeTag, Prediction};
use tacmap_core::llm::{
    build_prompt, ChatBackend, Journal, JournalRecord, LlmClient, LlmRequest, PromptVariant,
    RequestTag,
};
use tacmap_core::retrieval::{ContextAssembler, RetrievalMode};

pub struct PredictJob<'a> {
    pub procedures: &'a [ProcedureExample],
    pub assembler: ContextAssembler<'a>,
    pub mode: RetrievalMode,
    pub variant: PromptVariant,
    pub backend: &'a dyn ChatBackend,
    pub model_id: String,
    pub journal: &'a Journal,
    /// Records from an interrupted run, keyed by procedure id; entries whose
    /// prompt digest still matches are reused instead of re-queried.
    pub prior: HashMap<String, JournalRecord>,
    pub budget: usize,
}

#[derive(Debug, Default)]
pub struct PredictStats {
    pub total: usize,
    pub resumed: usize,
    pub context_unavailable: usize,
}

fn process_one(job: &PredictJob<'_>, procedure: &ProcedureExample) -> Result<(Prediction, bool, bool)> {
    let context = job.assembler.assemble(procedure, job.mode)?;
    if context.unavailable {
        // recorded as context-unavailable, never dispatched
        return Ok((
            Prediction {
                procedure_id: procedure.procedure_id.clone(),
                mode: ModeTag::from(job.mode),
                prompt_variant: Some(job.variant),
                predicted: Default::default(),
                raw_response: String::new(),
                url_matched: context.url_matched,
            },
            false,
            true,
        ));
    }
    let prompt = build_prompt(job.variant, procedure, Some(&context))?;
    let request = LlmRequest::new(prompt, &job.model_id);
    let digest = request.prompt_sha256();

    let (response_text, resumed) = match job.prior.get(&procedure.procedure_id) {
        Some(record) if record.prompt_sha256 == digest => (record.response_text.clone(), true),
        _ => {
            let client = LlmClient::new(job.backend, Some(job.journal));
            let tag = RequestTag {
                procedure_id: procedure.procedure_id.clone(),
                mode: job.mode.label().to_string(),
                variant: job.variant.label().to_string(),
            };
            (client.query(&tag, &request)?.text, false)
        }
    };

    Ok((
        Prediction {
            procedure_id: procedure.procedure_id.clone(),
            mode: ModeTag::from(job.mode),
            prompt_variant: Some(job.variant),
            predicted: extract_tactics(&response_text),
            raw_response: response_text,
            url_matched: context.url_matched,
        },
        resumed,
        false,
    ))
}

/// Run the job over all procedures with at most `budget` in-flight requests.
/// Output is ordered by procedure id regardless of completion order.
pub fn run_predict(job: &PredictJob<'_>) -> Result<(Vec<Prediction>, PredictStats)> {
    let budget = job.budget.max(1);
    let cursor = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Prediction, bool, bool)>> =
        Mutex::new(Vec::with_capacity(job.procedures.len()));
    let failure: Mutex<Option<anyhow::Error>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..budget.min(job.procedures.len().max(1)) {
            scope.spawn(|| loop {
                if failure.lock().expect("failure lock").is_some() {
                    return;
                }
                let i = cursor.fetch_add(1, Ordering::SeqCst);
                if i >= job.procedures.len() {
                    return;
                }
                match process_one(job, &job.procedures[i]) {
                    Ok((prediction, resumed, unavailable)) => {
                        results
                            .lock()
                            .expect("results lock")
                            .push((i, prediction, resumed, unavailable));
                    }
                    Err(e) => {
                        *failure.lock().expect("failure lock") = Some(e);
                        return;
                    }
                }
            });
        }
    });

    if let Some(e) = failure.into_inner().expect("failure lock") {
        return Err(anyhow!(e));
    }
    let mut rows = results.into_inner().expect("results lock");
    rows.sort_by_key(|(i, _, _, _)| *i);
    let mut stats = PredictStats { total: rows.len(), ..Default::default() };
    let predictions = rows
        .into_iter()
        .map(|(_, prediction, resumed, unavailable)| {
            stats.resumed += usize::from(resumed);
            stats.context_unavailable += usize::from(unavailable);
            prediction
        })
        .collect();
    Ok((predictions, stats))
}

/// Prior journal records for this (mode, variant), keyed by procedure id.
pub fn prior_records(
    journal_path: &std::path::Path,
    mode: RetrievalMode,
    variant: PromptVariant,
) -> Result<HashMap<String, JournalRecord>> {
    if !journal_path.exists() {
        return Ok(HashMap::new());
    }
    let mut map = HashMap::new();
    for record in Journal::load(journal_path)? {
        if record.mode == mode.label() && record.variant == variant.label() {
            map.insert(record.procedure_id.clone(), record);
        }
    }
    Ok(map)
}
