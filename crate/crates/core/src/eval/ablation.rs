use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluate;
use crate::corpus::{
    assemble_test_instances, assemble_training_instances, AdversarialSource, Corpus, TestKind,
};
use crate::generator::{generate_batch, GenerationSettings};
use crate::llm::{CompletionBackend, GenerationConfig, LlmClient};
use crate::prompt::{ExampleFraction, ExampleSet, InstructionType};
use crate::ranker::{train, CorpusStats, TrainConfig};
use crate::seed::json_digest;

pub type BackendFactory = Arc<dyn Fn() -> Box<dyn CompletionBackend> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationCellSpec {
    pub e_fraction: ExampleFraction,
    pub reuse: bool,
    pub k: usize,
    pub instruction: InstructionType,
    /// Extra generated training instances appended before training.
    pub augmentation: usize,
}

impl Default for AblationCellSpec {
    fn default() -> Self {
        Self {
            e_fraction: ExampleFraction::Full,
            reuse: false,
            k: 2,
            instruction: InstructionType::Direct,
            augmentation: 0,
        }
    }
}

impl AblationCellSpec {
    pub fn label(&self) -> String {
        let mut s = format!("|E|={}%", self.e_fraction);
        if self.reuse {
            s.push_str("+reuse");
        }
        s.push_str(&format!(" k={} {}", self.k, self.instruction));
        if self.augmentation > 0 {
            s.push_str(&format!(" +{}", self.augmentation));
        }
        s
    }
}

/// Axis values; [`AblationAxes::cells`] takes their cartesian product and drops
/// combinations the prompt builder rejects (I_imp with k > 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationAxes {
    pub e_fractions: Vec<(ExampleFraction, bool)>,
    pub ks: Vec<usize>,
    pub instructions: Vec<InstructionType>,
    pub augmentation: Vec<usize>,
}

impl AblationAxes {
    pub fn cells(&self) -> Vec<AblationCellSpec> {
        let mut out = Vec::new();
        for &(e_fraction, reuse) in &self.e_fractions {
            for &k in &self.ks {
                for &instruction in &self.instructions {
                    if instruction == InstructionType::Implicit && k > 0 {
                        continue;
                    }
                    for &augmentation in &self.augmentation {
                        out.push(AblationCellSpec {
                            e_fraction,
                            reuse,
                            k,
                            instruction,
                            augmentation,
                        });
                    }
                }
            }
        }
        out
    }

    /// {0.1% + REUSE, 0.1%, 1%, 10%, 100%} at k = 2, I_dir.
    pub fn example_set_grid() -> Vec<AblationCellSpec> {
        let mut e = vec![(ExampleFraction::Tenth, true)];
        e.extend(ExampleFraction::ALL.iter().map(|f| (*f, false)));
        Self {
            e_fractions: e,
            ks: vec![2],
            instructions: vec![InstructionType::Direct],
            augmentation: vec![0],
        }
        .cells()
    }

    /// k ∈ {0, 1, 2} at |E| = 100%, I_dir.
    pub fn k_grid() -> Vec<AblationCellSpec> {
        (0..=2)
            .map(|k| AblationCellSpec {
                k,
                ..Default::default()
            })
            .collect()
    }

    /// I_dir and I_pos at k = 2, I_imp at k = 0.
    pub fn instruction_grid() -> Vec<AblationCellSpec> {
        [
            (InstructionType::Direct, 2),
            (InstructionType::WithPositive, 2),
            (InstructionType::Implicit, 0),
        ]
        .into_iter()
        .map(|(instruction, k)| AblationCellSpec {
            instruction,
            k,
            ..Default::default()
        })
        .collect()
    }

    pub fn augmentation_grid(sizes: &[usize]) -> Vec<AblationCellSpec> {
        sizes
            .iter()
            .map(|&augmentation| AblationCellSpec {
                augmentation,
                ..Default::default()
            })
            .collect()
    }
}

pub struct AblationInputs<'a> {
    pub train: &'a Corpus,
    pub test: &'a Corpus,
    /// Contexts used for the augmentation axis.
    pub augmentation: Option<&'a Corpus>,
    pub backend: BackendFactory,
    pub generation: GenerationConfig,
    pub training: TrainConfig,
    pub attempt_cap: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub spec: AblationCellSpec,
    pub seed: u64,
    pub config_hash: String,
    pub negatives_hash: Option<String>,
    pub model_hash: Option<String>,
    pub example_set_before: usize,
    pub example_set_after: usize,
    pub processed_targets: usize,
    pub skipped_targets: usize,
    pub train_instances: usize,
    pub r1_random: Option<f64>,
    pub r1_adversarial: Option<f64>,
    pub r1_mean: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub cells: Vec<AblationCell>,
}

#[derive(Serialize)]
struct CellProvenance<'a> {
    spec: &'a AblationCellSpec,
    generation: &'a GenerationConfig,
    training: &'a TrainConfig,
    attempt_cap: u32,
    seed: u64,
}

/// Run every cell; a failing cell is recorded and the grid continues.
pub fn run_ablation(cells: &[AblationCellSpec], inputs: &AblationInputs<'_>) -> AblationGrid {
    let cells = cells
        .par_iter()
        .map(|spec| {
            let config_hash = json_digest(&CellProvenance {
                spec,
                generation: &inputs.generation,
                training: &inputs.training,
                attempt_cap: inputs.attempt_cap,
                seed: inputs.seed,
            });
            let mut cell = AblationCell {
                spec: *spec,
                seed: inputs.seed,
                config_hash,
                negatives_hash: None,
                model_hash: None,
                example_set_before: 0,
                example_set_after: 0,
                processed_targets: 0,
                skipped_targets: 0,
                train_instances: 0,
                r1_random: None,
                r1_adversarial: None,
                r1_mean: None,
                error: None,
            };
            if let Err(e) = run_cell(spec, inputs, &mut cell) {
                log::warn!("ablation cell {} failed: {e}", spec.label());
                cell.error = Some(e);
            }
            cell
        })
        .collect();
    AblationGrid { cells }
}

fn run_cell(spec: &AblationCellSpec, inputs: &AblationInputs<'_>, cell: &mut AblationCell) -> Result<(), String> {
    let settings = GenerationSettings {
        instruction: spec.instruction,
        k: spec.k,
        attempt_cap: inputs.attempt_cap,
        seed: inputs.seed,
    };
    let client = LlmClient::new((inputs.backend)(), inputs.generation.clone()).map_err(|e| e.to_string())?;
    let mut examples = ExampleSet::from_corpus(inputs.train, spec.e_fraction, spec.reuse, inputs.seed)
        .map_err(|e| e.to_string())?;
    cell.example_set_before = examples.len();

    let outcome = generate_batch(&inputs.train.records, &mut examples, &settings, &client)
        .map_err(|e| e.to_string())?;
    cell.example_set_after = examples.len();
    cell.processed_targets = outcome.results.len();
    cell.skipped_targets = outcome.skipped.len();
    let table = outcome.table("generated");
    cell.negatives_hash = Some(json_digest(&table.to_entries()));

    let mut instances = assemble_training_instances(inputs.train, AdversarialSource::Generated, Some(&table), inputs.seed)
        .map_err(|e| e.to_string())?;
    if spec.augmentation > 0 {
        let extra = inputs
            .augmentation
            .ok_or("augmentation requested but no augmentation contexts supplied")?;
        if extra.len() < spec.augmentation {
            return Err(format!(
                "augmentation of {} requested but only {} contexts supplied",
                spec.augmentation,
                extra.len()
            ));
        }
        let subset = Corpus::new(extra.split, extra.records[..spec.augmentation].to_vec()).map_err(|e| e.to_string())?;
        let aug = generate_batch(&subset.records, &mut examples, &settings, &client).map_err(|e| e.to_string())?;
        let aug_instances = assemble_training_instances(
            &subset,
            AdversarialSource::Generated,
            Some(&aug.table("generated")),
            inputs.seed,
        )
        .map_err(|e| e.to_string())?;
        instances.extend(aug_instances);
    }
    cell.train_instances = instances.len();

    let stats = CorpusStats::from_instances(&instances);
    let model = train(&instances, &inputs.training, &stats).map_err(|e| e.to_string())?;
    cell.model_hash = Some(json_digest(&model.weights));

    let score = |kind| -> Result<f64, String> {
        let tests = assemble_test_instances(inputs.test, kind, inputs.seed).map_err(|e| e.to_string())?;
        Ok(evaluate(&model, &tests, &stats).map_err(|e| e.to_string())?.recall_at_1)
    };
    let (r, a) = (score(TestKind::Random)?, score(TestKind::Adversarial)?);
    cell.r1_random = Some(r);
    cell.r1_adversarial = Some(a);
    cell.r1_mean = Some((r + a) / 2.0);
    Ok(())
}

/// Aligned text table: setting, R@1 on the random and adversarial tests, and their mean.
pub fn format_ablation_table(grid: &AblationGrid) -> String {
    let fmt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    let width = grid
        .cells
        .iter()
        .map(|c| c.spec.label().len())
        .max()
        .unwrap_or(0)
        .max("Setting".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>7}  {:>7}  {:>7}  {:>9}",
        "Setting", "Random", "Adv", "Mean", "|E| after"
    );
    for c in &grid.cells {
        let _ = write!(
            out,
            "{:<width$}  {:>7}  {:>7}  {:>7}  {:>9}",
            c.spec.label(),
            fmt(c.r1_random),
            fmt(c.r1_adversarial),
            fmt(c.r1_mean),
            c.example_set_after
        );
        if let Some(e) = &c.error {
            let _ = write!(out, "  error: {e}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_have_expected_shape() {
        assert_eq!(AblationAxes::example_set_grid().len(), 5);
        assert!(AblationAxes::example_set_grid()[0].reuse);
        assert_eq!(AblationAxes::k_grid().iter().map(|c| c.k).collect::<Vec<_>>(), [0, 1, 2]);
        let inst = AblationAxes::instruction_grid();
        assert_eq!(inst[2].instruction, InstructionType::Implicit);
        assert_eq!(inst[2].k, 0);
    }

    #[test]
    fn cartesian_drops_implicit_with_examples() {
        let axes = AblationAxes {
            e_fractions: vec![(ExampleFraction::One, false), (ExampleFraction::Full, false)],
            ks: vec![0, 2],
            instructions: vec![InstructionType::Direct, InstructionType::Implicit],
            augmentation: vec![0],
        };
        assert_eq!(axes.cells().len(), 6);
    }
}
