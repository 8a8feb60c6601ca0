use sras_core::gridfisher::*;
use sras_core::random::seeded;
use sras_core::retrieval::{donor_distinct_top1, shuffled_label_top1, OperatorComparator, RetrievalRecord};
use sras_core::spd::{spd_lift, SymMatrix, DEFAULT_EPS_REG, DEFAULT_EPS_SPD};

fn worst_relative_error(est: &SymMatrix, truth: &SymMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            worst = worst.max((est.get(i, j) - truth.get(i, j)).abs() / truth.get(i, j).abs());
        }
    }
    worst
}

#[test]
fn estimate_tracks_generator_fisher() {
    let g = ConditionGrid::standard();
    for seed in 0..3 {
        let pop = tuned_population(&g, 12, seed).unwrap();
        let truth = pop.analytic_fisher(&g).unwrap();
        // every pair of axes is coupled
        assert!((0..3).all(|i| (0..3).all(|j| truth.get(i, j).abs() > 1.0)));
        let r = pop.sample_record(&g, 200, 1.0, ("e", "d", "l"), &mut seeded(seed + 10)).unwrap();
        let est = experiment_operators(&r, &g, NoiseMode::Fisher, DEFAULT_EPS_SPD).unwrap();
        assert_eq!(est.valid_points, 6 * 3 * 4);
        let err = worst_relative_error(est.summary.operator(), &truth);
        assert!(err < 0.1, "seed {seed}: {err}");
    }
}

#[test]
fn fewer_trials_give_worse_estimates() {
    let g = ConditionGrid::standard();
    let pop = tuned_population(&g, 12, 7).unwrap();
    let truth = pop.analytic_fisher(&g).unwrap();
    let err = |trials: usize| {
        (0..3)
            .map(|s| {
                let r = pop.sample_record(&g, trials, 1.0, ("e", "d", "l"), &mut seeded(s)).unwrap();
                let est = experiment_operators(&r, &g, NoiseMode::Fisher, DEFAULT_EPS_SPD).unwrap();
                worst_relative_error(est.summary.operator(), &truth)
            })
            .sum::<f64>()
    };
    assert!(err(200) < err(10));
}

fn records(cohort: &[(SyntheticPopulation, ExperimentRecord)], mode: NoiseMode) -> Vec<RetrievalRecord> {
    cohort
        .iter()
        .map(|(_, r)| {
            let op = experiment_operators(r, &ConditionGrid::standard(), mode, DEFAULT_EPS_SPD).unwrap();
            let shape = family_restriction(&op.summary, &GridAxis::ALL, true).unwrap();
            RetrievalRecord {
                id: r.id.clone(),
                donor: r.donor.clone(),
                label: r.label.clone(),
                operator: spd_lift(shape.operator(), DEFAULT_EPS_REG).unwrap(),
            }
        })
        .collect()
}

#[test]
fn cohort_labels_balance_across_donors() {
    let g = ConditionGrid::standard();
    let cohort = donor_cohort(&g, &CohortConfig::default(), 0).unwrap();
    assert_eq!(cohort.len(), 12);
    let a = cohort.iter().filter(|(_, r)| r.label == "A").count();
    assert_eq!(a, 6);
    for d in 0..4 {
        let labels: Vec<&str> = cohort
            .iter()
            .filter(|(_, r)| r.donor == format!("d{d}"))
            .map(|(_, r)| r.label.as_str())
            .collect();
        assert!(labels.contains(&"A") && labels.contains(&"B"));
    }
}

#[test]
fn noise_whitening_recovers_labels() {
    let g = ConditionGrid::standard();
    for seed in 0..2 {
        let cohort = donor_cohort(&g, &CohortConfig::default(), seed).unwrap();
        let fisher = donor_distinct_top1(&records(&cohort, NoiseMode::Fisher), OperatorComparator::Sras).unwrap();
        let naive = donor_distinct_top1(&records(&cohort, NoiseMode::Naive), OperatorComparator::Sras).unwrap();
        let (tf, tn) = (fisher.top1.unwrap(), naive.top1.unwrap());
        assert!(tf > 0.8 && tf > tn, "seed {seed}: fisher {tf} naive {tn}");
        assert_eq!(fisher.n_queries, 12);
        let shuffled = shuffled_label_top1(&records(&cohort, NoiseMode::Fisher), OperatorComparator::Sras, 200, seed)
            .unwrap()
            .unwrap();
        assert!((shuffled - 0.5).abs() < 0.15, "{shuffled}");
    }
}

#[test]
fn grid_summaries_survive_json() {
    let g = ConditionGrid::standard();
    let pop = tuned_population(&g, 4, 1).unwrap();
    let r = pop.sample_record(&g, 5, 1.0, ("e", "d", "l"), &mut seeded(1)).unwrap();
    let op = experiment_operators(&r, &g, NoiseMode::Fisher, DEFAULT_EPS_SPD).unwrap();
    let back = sras_core::summaries::SensitivitySummary::from_json(&op.summary.to_json()).unwrap();
    assert_eq!(back, op.summary);
    let csv = trials_to_csv(std::slice::from_ref(&r));
    assert_eq!(trials_from_csv(&csv).unwrap(), vec![r]);
}
