use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use daml_core::config::{config_hash, train_config_from_kv, train_config_to_kv};
use daml_core::metrics::{evaluate, render_report_csv, render_report_table, ReportRow};
use daml_core::objectives::{MutualScope, Variant};
use daml_core::trainer::{fit, TrainConfig};

use crate::commands::{load_dataset, set_variant, DataSet};
use crate::logs::{curve_rows, mean_rows, render_ablation, render_train_log, CURVES_HEADER};
use crate::manifest::{write_atomic, Manifest};
use crate::{read_input, resolve_out, CliError};

pub struct CompareArgs {
    pub config: PathBuf,
    pub data: PathBuf,
    pub out: PathBuf,
    pub variants: Vec<String>,
    pub seeds: Vec<u64>,
    pub jobs: usize,
    pub prober_domains: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
struct JobSpec {
    variant: Variant,
    seed: u64,
    scope: Option<MutualScope>,
}

impl JobSpec {
    /// Task label for report rows; the prober sweep encodes its scope here
    /// so rows stay distinguishable in one table.
    fn task(&self) -> String {
        match self.scope {
            None => "synthetic".to_string(),
            Some(sc) => format!("prober-{}", sc.as_str()),
        }
    }

    fn dir_name(&self) -> String {
        match self.scope {
            None => format!("{}-s{}", self.variant.as_str(), self.seed),
            Some(sc) => format!("{}-{}-s{}", self.variant.as_str(), sc.as_str(), self.seed),
        }
    }
}

struct JobOutcome {
    dir: String,
    row: ReportRow,
    curves: Vec<String>,
}

pub fn compare(args: &CompareArgs) -> Result<(), CliError> {
    let raw = read_input(&args.config)?;
    let mut base = train_config_from_kv(&raw)?;
    let variants = args
        .variants
        .iter()
        .map(|v| Variant::parse(v))
        .collect::<Result<Vec<_>, _>>()?;
    if variants.is_empty() {
        return Err(CliError::Usage("at least one variant is required".to_string()));
    }
    if args.seeds.is_empty() {
        return Err(CliError::Usage("at least one seed is required".to_string()));
    }
    if args.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".to_string()));
    }
    let scopes = args
        .prober_domains
        .iter()
        .map(|s| MutualScope::parse(s))
        .collect::<Result<Vec<_>, _>>()?;
    if !scopes.is_empty() {
        if let Some(v) = variants.iter().find(|v| {
            let mut probe = base.clone();
            set_variant(&mut probe, **v);
            !probe.with_prober()
        }) {
            return Err(CliError::Usage(format!(
                "--prober-domains sweeps the prober's training domain, but variant {} has no prober",
                v.as_str()
            )));
        }
    }

    let num_labels = base.dims.num_labels as u8;
    let ds = load_dataset(&args.data, num_labels, true)?;
    base.dims.extractor.vocab = ds.vocab.len();

    let mut jobs = Vec::new();
    for &variant in &variants {
        for &seed in &args.seeds {
            if scopes.is_empty() {
                jobs.push(JobSpec { variant, seed, scope: None });
            } else {
                for &sc in &scopes {
                    jobs.push(JobSpec { variant, seed, scope: Some(sc) });
                }
            }
        }
    }

    let out = resolve_out(&args.out);
    std::fs::create_dir_all(&out)?;
    let mut manifest = Manifest::new("compare");
    manifest.push("config_hash", config_hash(&base));
    manifest.push_config(&train_config_to_kv(&base));
    manifest.push_input("config", &args.config)?;
    for (name, digest) in &ds.digests {
        manifest.push(&format!("input.{name}"), digest);
    }
    manifest.push("jobs", jobs.len());
    manifest.push("workers", args.jobs);

    let results = run_jobs(&jobs, args.jobs, |job| run_one(job, &base, &ds, &out));

    let mut rows = Vec::new();
    let mut curves = Vec::new();
    let mut failures = Vec::new();
    for (job, result) in jobs.iter().zip(results) {
        match result {
            Ok(outcome) => {
                manifest.push(&format!("metric.{}.target_test_acc", outcome.dir), outcome.row.accuracy);
                manifest.push(&format!("metric.{}.target_test_rmse", outcome.dir), outcome.row.rmse);
                rows.push(outcome.row);
                curves.extend(outcome.curves);
            }
            Err(e) => failures.push((job.dir_name(), e)),
        }
    }

    let mut table = render_report_csv(&rows);
    for line in mean_rows(&rows) {
        table.push_str(&line);
        table.push('\n');
    }
    let comparison_path = out.join("comparison.csv");
    write_atomic(&comparison_path, table.as_bytes())?;
    manifest.push("output.comparison", comparison_path.display());

    let mut curve_table = String::from(CURVES_HEADER);
    curve_table.push('\n');
    for line in &curves {
        curve_table.push_str(line);
        curve_table.push('\n');
    }
    let curves_path = out.join("curves.csv");
    write_atomic(&curves_path, curve_table.as_bytes())?;
    manifest.push("output.curves", curves_path.display());

    if !scopes.is_empty() {
        let mut by_cell: HashMap<(u64, String), f64> = HashMap::new();
        for row in &rows {
            by_cell.insert((row.seed, row.task.clone()), row.accuracy);
        }
        // A failed job leaves its cell as NaN; the run still exits nonzero.
        let ablation = render_ablation(&args.seeds, &scopes, |seed, sc| {
            by_cell
                .get(&(seed, format!("prober-{}", sc.as_str())))
                .copied()
                .unwrap_or(f64::NAN)
        });
        let ablation_path = out.join("ablation.csv");
        write_atomic(&ablation_path, ablation.as_bytes())?;
        manifest.push("output.ablation", ablation_path.display());
    }

    for (name, e) in &failures {
        manifest.push(&format!("failed.{name}"), e);
    }
    manifest.write(&out.join("manifest.txt"))?;

    print!("{}", render_report_table(&rows));
    if !failures.is_empty() {
        for (name, e) in &failures {
            eprintln!("job {name} failed: {e}");
        }
        return Err(CliError::Runtime(format!("{} of {} jobs failed", failures.len(), jobs.len())));
    }
    Ok(())
}

/// Pull jobs off a shared cursor from `workers` threads; results land at
/// their job's index, so output order never depends on scheduling.
fn run_jobs<F>(jobs: &[JobSpec], workers: usize, run: F) -> Vec<Result<JobOutcome, CliError>>
where
    F: Fn(&JobSpec) -> Result<JobOutcome, CliError> + Sync,
{
    let cursor = AtomicUsize::new(0);
    let slots = Mutex::new((0..jobs.len()).map(|_| None).collect::<Vec<_>>());
    std::thread::scope(|scope| {
        for _ in 0..workers.min(jobs.len()).max(1) {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let outcome = run(&jobs[i]);
                slots.lock().unwrap()[i] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("each job index is claimed exactly once"))
        .collect()
}

fn run_one(job: &JobSpec, base: &TrainConfig, ds: &DataSet, out_root: &Path) -> Result<JobOutcome, CliError> {
    let mut cfg = base.clone();
    set_variant(&mut cfg, job.variant);
    cfg.seed = job.seed;
    if let Some(sc) = job.scope {
        cfg.prober_domain = sc;
    }
    cfg.validate()?;

    let dir = out_root.join(job.dir_name());
    std::fs::create_dir_all(&dir)?;
    let result = fit(&cfg, &ds.corpora, ds.vocab.tokens())?;
    result.checkpoint.save(&dir.join("model.ckpt"))?;
    write_atomic(&dir.join("train_log.csv"), render_train_log(&result.log).as_bytes())?;

    // Score the artifact that was just written, not the live groups, so the
    // table always reflects what a later eval of the checkpoint would see.
    let mut groups = result.checkpoint.restore_groups()?;
    let best = result.checkpoint.best_group;
    let docs = ds.target_test.as_ref().expect("compare loads the target test split");
    let metrics = evaluate(|d| groups[best].predict(d), docs, cfg.dims.num_labels as u8)?;

    let task = job.task();
    Ok(JobOutcome {
        dir: job.dir_name(),
        row: ReportRow {
            task: task.clone(),
            variant: job.variant.as_str().to_string(),
            seed: job.seed,
            split: "target_test".to_string(),
            accuracy: metrics.accuracy,
            rmse: metrics.rmse,
        },
        curves: curve_rows(&task, job.variant.as_str(), job.seed, &result.log),
    })
}
