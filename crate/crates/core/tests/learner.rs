use corelearn::learner::objective::average_objective_value;
use corelearn::learner::{autocl_average_from, autocl_average_scored, autocl_practical_from, Algorithm, InitStrategy, TrainConfig};
use corelearn::{Coreset, LossModel, Query, ScoredQueries, WeightedLabeledSet};

fn small_set() -> WeightedLabeledSet {
    WeightedLabeledSet::uniform(
        (0..12).map(|i| vec![(i as f64 * 0.9).sin(), (i as f64 * 0.4).cos()]).collect(),
        (0..12).map(|i| (i as f64 * 1.3).sin()).collect(),
    )
    .unwrap()
}

fn queries(k: usize) -> Vec<Query> {
    (0..k).map(|i| Query::new(vec![(i as f64).sin() * 1.5, (i as f64 * 0.7).cos()]).unwrap()).collect()
}

#[test]
fn exact_copy_is_a_training_fixed_point() {
    let p = small_set();
    let loss = LossModel::linear();
    let train = ScoredQueries::new(&p, &loss, &queries(30)).unwrap();
    for algorithm in [Algorithm::Average, Algorithm::Practical] {
        let cfg = TrainConfig { epochs: 5, batch_size: 10, algorithm, early_stop_on_validation: false, ..TrainConfig::default() };
        let (c, report) = match algorithm {
            Algorithm::Average => autocl_average_from(&p, &train, None, &loss, &cfg, p.as_coreset()),
            Algorithm::Practical => autocl_practical_from(&p, &train, None, &loss, &cfg, p.as_coreset()),
        }
        .unwrap();
        assert!(report.epoch_train_loss.iter().all(|&l| l == 0.0), "{algorithm:?}: {:?}", report.epoch_train_loss);
        assert_eq!(c, p.as_coreset());
        assert_eq!(report.epoch_train_loss.len(), 5);
    }
}

#[test]
fn one_point_coreset_is_found() {
    // P = {p=[1], b=1}, w=[1]; universe {0.5, 2}
    let p = WeightedLabeledSet::new(vec![vec![1.0]], vec![1.0], vec![1.0]).unwrap();
    let loss = LossModel::linear();
    let qs = vec![Query::new(vec![0.5]).unwrap(), Query::new(vec![2.0]).unwrap()];
    let train = ScoredQueries::new(&p, &loss, &qs).unwrap();
    let mean = train.full_costs().iter().sum::<f64>() / 2.0;

    // oracle: grid search over (c, y) with u = 1 finds a zero-loss coreset
    let mut grid_best = f64::INFINITY;
    for i in 0..=400 {
        for j in 0..=400 {
            let (c, y) = (i as f64 * 0.01 - 2.0, j as f64 * 0.01 - 2.0);
            let cs = Coreset::new(vec![vec![c]], vec![1.0], vec![y]).unwrap();
            grid_best = grid_best.min(average_objective_value(&cs, &loss, &qs, mean, 1.0, 1.0));
        }
    }
    assert!(grid_best < 1e-6, "{grid_best}");

    let cfg = TrainConfig {
        coreset_size: 1,
        epochs: 2000,
        learning_rate: 0.01,
        algorithm: Algorithm::Average,
        init: InitStrategy::Gaussian,
        early_stop_on_validation: false,
        seed: 3,
        ..TrainConfig::default()
    };
    let (_, report) = autocl_average_scored(&p, &train, None, &loss, &cfg).unwrap();
    let best = *report.best_so_far().last().unwrap();
    assert!(best < 1e-6, "best training loss {best}");
    assert!(report.best_so_far().windows(2).all(|w| w[1] <= w[0]));
}
