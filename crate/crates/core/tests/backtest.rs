use drofolio::backtest::{read_equity_curve, write_equity_curve};
use drofolio::pipeline::FactorSelection;
use drofolio::simulation::{simulate_panel, DgpParams};
use drofolio::{metrics, rolling_backtest, ReturnPanel, StrategyKind, StrategySpec};
use nalgebra::DMatrix;

fn panel(p: usize, t: usize, seed: u64) -> ReturnPanel {
    simulate_panel(&DgpParams::fixture(p), t, seed).unwrap().0
}

fn spec(kind: StrategyKind) -> StrategySpec {
    let mut s = StrategySpec::new(kind, 5e-4);
    s.calibration.factors = FactorSelection::Fixed(2);
    s.calibration.quantile_draws = 20_000;
    if kind == StrategyKind::BczDro {
        s = s.with_fixed(0.01, -0.05);
    }
    s
}

#[test]
fn future_returns_do_not_change_past_weights() {
    let base = panel(12, 90, 1);
    for kind in StrategyKind::ALL {
        let a = rolling_backtest(&base, &spec(kind), 40, 10).unwrap();
        // Scramble everything from the third rebalance onward.
        let cut = 60;
        let r = base.returns();
        let noisy = DMatrix::from_fn(12, 90, |i, j| if j >= cut { -3.0 * r[(i, j)] + 0.01 } else { r[(i, j)] });
        let other = ReturnPanel::new(noisy, base.asset_ids().to_vec(), base.time_index().to_vec()).unwrap();
        let b = rolling_backtest(&other, &spec(kind), 40, 10).unwrap();
        for (x, y) in a.weights_history.iter().zip(&b.weights_history).take(3) {
            assert_eq!(x, y, "{kind}");
        }
        if kind != StrategyKind::EqualWeight {
            assert_ne!(a.weights_history[3], b.weights_history[3], "{kind}");
        }
    }
}

#[test]
fn metrics_recompute_from_returns_and_weights_sum_to_one() {
    let p = panel(15, 80, 2);
    let report = rolling_backtest(&p, &spec(StrategyKind::HdDro), 50, 7).unwrap();
    assert_eq!(report.portfolio_returns.len(), 30);
    assert_eq!(metrics(&report.portfolio_returns).unwrap(), report.metrics);
    for w in &report.weights_history {
        assert!((w.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
    }
}

#[test]
fn report_is_byte_identical_across_runs_and_thread_counts() {
    let p = panel(10, 70, 3);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let r = rolling_backtest(&p, &spec(StrategyKind::HdDro), 30, 5).unwrap();
            serde_json::to_vec(&r).unwrap()
        })
    };
    let a = run(1);
    assert_eq!(a, run(1));
    assert_eq!(a, run(4));
}

#[test]
fn equity_csv_round_trips_bit_for_bit() {
    let p = panel(10, 60, 4);
    let report = rolling_backtest(&p, &spec(StrategyKind::MvPoet), 30, 4).unwrap();
    let mut buf = Vec::new();
    write_equity_curve(&report, &mut buf, &["seed 4".into()]).unwrap();
    let back = read_equity_curve(buf.as_slice()).unwrap();
    assert_eq!(back.returns, report.portfolio_returns);
    assert_eq!(back.times, report.return_times);
    assert_eq!(metrics(&back.returns).unwrap(), report.metrics);
}

#[test]
fn last_block_is_truncated() {
    let p = panel(8, 53, 5);
    let report = rolling_backtest(&p, &spec(StrategyKind::EqualWeight), 30, 10).unwrap();
    assert_eq!(report.weights_history.len(), 3);
    assert_eq!(report.portfolio_returns.len(), 23);
}

#[test]
fn window_errors_name_the_window() {
    // More assets than periods in each window makes the sample covariance
    // singular.
    let p = panel(40, 60, 6);
    let err = rolling_backtest(&p, &spec(StrategyKind::MvSample), 20, 10).unwrap_err();
    assert!(err.to_string().contains("window 0"), "{err}");
}
