use lde_core::scenario::{run_scenario, RunOptions, ResultRow, Scenario};

fn rows(text: &str) -> Vec<ResultRow> {
    let rows = run_scenario(&Scenario::from_toml(text).unwrap(), RunOptions::default()).unwrap();
    assert!(rows.iter().all(|r| r.error.is_none()), "{rows:?}");
    rows
}

fn analytic(rows: &[ResultRow]) -> Vec<f64> {
    rows.iter().map(|r| r.mse_analytic.unwrap()).collect()
}

// Single draws at different N are too noisy to order; 16 realizations per
// point are.
#[test]
fn more_nodes_lower_mse() {
    let mse = analytic(&rows(
        "design = \"hybrid\"\ntrials = 100\nrealizations = 16\nseed = 21\n[sweep]\naxis = \"n_nodes\"\nvalues = [10, 20]\n",
    ));
    assert!(mse[1] < mse[0], "{mse:?}");
}

#[test]
fn robust_rows_never_exceed_agnostic_rows() {
    let grid = "n_nodes = 20\ntrials = 100\nrealizations = 2\nseed = 22\n[sweep]\naxis = \"sigma2_csi\"\nvalues = [0.0, 0.01, 0.05, 0.1, 0.2]\n";
    for (robust, agnostic) in [("robust", "agnostic"), ("robust-hybrid", "agnostic-hybrid")] {
        let r = analytic(&rows(&format!("design = \"{robust}\"\n{grid}")));
        let a = analytic(&rows(&format!("design = \"{agnostic}\"\n{grid}")));
        assert_eq!(r[0], a[0]);
        for (x, y) in r.iter().zip(&a) {
            assert!(x <= y, "{robust} {r:?} vs {agnostic} {a:?}");
        }
    }
}

#[test]
fn matched_rows_stay_above_the_floor_and_agree_with_monte_carlo() {
    for design in ["digital", "hybrid", "noiseless"] {
        let text = format!(
            "design = \"{design}\"\nn_nodes = 8\nsnr_ob_db = 0.0\ntrials = 4000\nseed = 23\n[sweep]\naxis = \"n_rf_node\"\nvalues = [1, 2, 3]\n"
        );
        let text = if design == "digital" { text.replace("n_rf_node\"\nvalues = [1, 2, 3]", "q\"\nvalues = [1, 2, 3]") } else { text };
        for r in rows(&text) {
            let (a, m, se, b) = (r.mse_analytic.unwrap(), r.mse_mc.unwrap(), r.mc_stderr.unwrap(), r.benchmark.unwrap());
            assert!(a >= b - 1e-9, "{design}: {a} below floor {b}");
            assert!((a - m).abs() <= 5.0 * se, "{design}: analytic {a}, MC {m} ± {se}");
        }
    }
}
