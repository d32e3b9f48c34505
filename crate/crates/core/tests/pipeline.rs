use knobforge::pipeline::{run_on, PipelineConfig, PipelineInputs};
use knobforge::synth::{generate_corpus, test_observations, SynthSpec};

fn inputs(seed: u64) -> PipelineInputs {
    let c = generate_corpus(&SynthSpec {
        n_workloads: 10,
        seed,
        ..SynthSpec::default()
    })
    .unwrap();
    PipelineInputs {
        test: Some(test_observations(&c.test)),
        offline: c.offline,
        online_b: c.online_b,
        online_c: c.online_c,
    }
}

#[test]
fn both_stages_share_one_feature_list() {
    let run = run_on(&inputs(1), &PipelineConfig::default()).unwrap();
    let final_model = run.stage2.model.as_ref().unwrap();
    assert_eq!(final_model.feature_names(), run.feature_names.as_slice());
    for w in &run.stage1.workloads {
        assert_eq!(w.augmented.table.schema().feature_names(), run.feature_names);
    }
}

#[test]
fn results_are_ordered_by_workload_and_repeatable() {
    let inp = inputs(2);
    let a = run_on(&inp, &PipelineConfig::default()).unwrap();
    let b = run_on(&inp, &PipelineConfig::default()).unwrap();
    let ids: Vec<&str> = a.stage1.workloads.iter().map(|w| w.workload_id.as_str()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    assert_eq!(a.stage1.predictions(), b.stage1.predictions());
    assert_eq!(a.stage2.predictions, b.stage2.predictions);
    assert_eq!(a.audit.records(), b.audit.records());
}

#[test]
fn stage2_repository_offers_stage1_augmentations() {
    let run = run_on(&inputs(3), &PipelineConfig::default()).unwrap();
    let m = &run.stage2.mappings[0];
    assert_eq!(m.scores.len(), 10 + run.stage1.workloads.len());
    assert!(m.scores.iter().any(|s| s.source_id.starts_with("aug:")));
    let d1 = run.stage1.augmented().unwrap().unwrap();
    let d2 = run.stage2.augmented_final.as_ref().unwrap();
    assert_eq!(&d2.origins()[..d1.origins().len()], d1.origins());
}
