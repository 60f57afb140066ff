use serde_json::{Map, Value};

use super::provider::ProviderRequest;
use super::schema::{check_structure, OutputSchema, VerifierReport};
use super::{RunnerError, TaskContext};

/// Regeneration attempts after a rejected output (so `R + 1` calls at most).
pub const REGENERATIONS: u32 = 2;

/// A hybrid skill: fixed schema, evidence prompt, semantic verifier and the
/// conversion of an accepted output into artifacts.
pub trait HybridSkill: Send + Sync {
    fn schema(&self, ctx: &TaskContext<'_>) -> OutputSchema;

    /// The evidence part of the prompt. May fail on unusable inputs.
    fn prompt(&self, ctx: &TaskContext<'_>) -> Result<String, RunnerError>;

    /// Second verifier stage, run only on structurally valid output.
    fn verify(&self, ctx: &TaskContext<'_>, output: &Map<String, Value>) -> VerifierReport;

    fn accept(
        &self,
        ctx: &mut TaskContext<'_>,
        output: Map<String, Value>,
    ) -> Result<(), RunnerError>;
}

pub(super) fn run_hybrid(
    ctx: &mut TaskContext<'_>,
    skill: &dyn HybridSkill,
) -> Result<(), RunnerError> {
    let schema = skill.schema(ctx);
    let evidence = skill.prompt(ctx)?;
    let system = format!("{}\n\n{}", ctx.skill.body.trim(), schema.instructions());
    let recorder = ctx.provider()?;

    let mut last = VerifierReport::pass();
    for attempt in 0..=REGENERATIONS {
        ctx.check_limits()?;
        let mut prompt = evidence.clone();
        if attempt > 0 {
            prompt.push_str(&format!(
                "\n## Rejected previous attempt\n{}\n",
                last.summary()
            ));
        }
        let request = ProviderRequest::new(system.clone(), prompt)
            .schema(schema.to_value())
            .seed(ctx.seed());
        let text = recorder.complete(request)?;
        match check_structure(&schema, &text) {
            Err(report) => last = report,
            Ok(output) => {
                let report = skill.verify(ctx, &output);
                if report.ok {
                    return skill.accept(ctx, output);
                }
                last = report;
            }
        }
        tracing::debug!(
            task = ctx.task_id,
            attempt,
            "hybrid output rejected: {}",
            last.summary()
        );
    }
    Err(RunnerError::VerifierRejected {
        attempts: REGENERATIONS + 1,
        report: last,
    })
}
