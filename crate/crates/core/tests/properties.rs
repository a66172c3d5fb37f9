use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lde_core::channel::{assemble_channel, channel_from_text, channel_to_text, draw_clusters};
use lde_core::digital::Problem;
use lde_core::linalg::{self, cn_matrix, fro_norm};
use lde_core::model::{stack_model, transmit_power, ObservationModel, SystemConfig};

fn small_config(n: usize, n_tx: usize, n_rx: usize, k: usize, q: usize, l: usize) -> SystemConfig {
    let mut cfg = SystemConfig::desk(n);
    cfg.n_tx = n_tx;
    cfg.n_rx = n_rx;
    cfg.clusters = k;
    cfg.q = q;
    cfg.l = l;
    cfg.n_rf_node = n_tx.min(k);
    cfg.n_rf_fc = n_rx.min(k);
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transmit_power_ignores_unitary_rotation(seed in any::<u64>(), n_tx in 1usize..7, l in 1usize..4, q in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = cn_matrix(n_tx, l, 1.0, &mut rng);
        let c = cn_matrix(l, q, 1.0, &mut rng);
        let g = cn_matrix(q, q, 1.0, &mut rng);
        let r_theta = &g * g.adjoint();
        let r_n = linalg::scaled_identity(l, 0.3);
        let u = cn_matrix(n_tx, n_tx, 1.0, &mut rng).qr().q();
        let base = transmit_power(&p, &c, &r_theta, &r_n);
        let rotated = transmit_power(&(u * &p), &c, &r_theta, &r_n);
        prop_assert!((base - rotated).abs() <= 1e-10 * base.max(1.0));
    }

    #[test]
    fn stacking_recovers_blocks(seed in any::<u64>(), n in 1usize..6, n_tx in 1usize..5, l in 1usize..4) {
        let cfg = small_config(n, n_tx, 4, 3, 2, l);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = assemble_channel(&draw_clusters(&cfg, &mut rng), &cfg).unwrap();
        let model = ObservationModel::random(&cfg, &mut rng).unwrap();
        let p = Problem::perfect(&ch.h, &model).initial_precoders(&cfg.rho, &mut rng);
        let st = stack_model(&model.c, &ch.h, &p).unwrap();
        for i in 0..n {
            prop_assert_eq!(st.observation_block(i), model.c[i].clone());
            prop_assert_eq!(st.channel_block(i), ch.h[i].clone());
            prop_assert_eq!(st.precoder_block(i), p[i].clone());
        }
        let direct = Problem::perfect(&ch.h, &model).signal(&p);
        prop_assert!(fro_norm(&(&st.h * &st.p * &st.c - direct)) < 1e-10);
    }

    #[test]
    fn channel_text_round_trips(seed in any::<u64>(), n in 1usize..4, n_tx in 1usize..5, n_rx in 1usize..5, k in 1usize..4) {
        let cfg = small_config(n, n_tx, n_rx, k, 2, 1);
        let ch = assemble_channel(&draw_clusters(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)), &cfg).unwrap();
        prop_assert_eq!(channel_from_text(&channel_to_text(&ch)).unwrap(), ch);
    }

    #[test]
    fn designed_precoders_respect_budgets(seed in any::<u64>(), n in 1usize..5, rho in 0.1f64..5.0) {
        let mut cfg = small_config(n, 4, 6, 4, 2, 2);
        cfg.rho = vec![rho; n];
        cfg.bcd.max_iter = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = assemble_channel(&draw_clusters(&cfg, &mut rng), &cfg).unwrap();
        let model = ObservationModel::random(&cfg, &mut rng).unwrap();
        let problem = Problem::perfect(&ch.h, &model);
        let (t, trace) = problem.bcd(&cfg.rho, &cfg.bcd, &mut rng).unwrap();
        for pw in problem.powers(&t.precoders) {
            prop_assert!(pw <= rho * (1.0 + 1e-9));
        }
        for w in trace.mse_per_iter.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9);
        }
    }
}
