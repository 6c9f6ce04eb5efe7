//! Every example runs to completion.

#[path = "../examples/synth_dataset.rs"]
mod synth_dataset;
#[path = "../examples/pose_raster.rs"]
mod pose_raster;
#[path = "../examples/sprite_sheet.rs"]
mod sprite_sheet;
#[path = "../examples/image_metrics.rs"]
mod image_metrics;
#[path = "../examples/noise_schedule.rs"]
mod noise_schedule;
#[path = "../examples/checkpoint.rs"]
mod checkpoint;
#[path = "../examples/train_stages.rs"]
mod train_stages;
#[path = "../examples/generate_sequence.rs"]
mod generate_sequence;
#[path = "../examples/evaluate_run.rs"]
mod evaluate_run;

fn out() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn synth_dataset_runs() {
    synth_dataset::run_example(out().path()).unwrap();
}

#[test]
fn pose_raster_runs() {
    pose_raster::run_example(out().path()).unwrap();
}

#[test]
fn sprite_sheet_runs() {
    sprite_sheet::run_example(out().path()).unwrap();
}

#[test]
fn image_metrics_runs() {
    image_metrics::run_example().unwrap();
}

#[test]
fn noise_schedule_runs() {
    noise_schedule::run_example().unwrap();
}

#[test]
fn checkpoint_runs() {
    checkpoint::run_example(out().path()).unwrap();
}

#[test]
fn train_stages_runs() {
    train_stages::run_example(out().path()).unwrap();
}

#[test]
fn generate_sequence_runs() {
    generate_sequence::run_example(out().path()).unwrap();
}

#[test]
fn evaluate_run_runs() {
    evaluate_run::run_example(out().path()).unwrap();
}
