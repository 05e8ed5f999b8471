mod common;

use audience_core::events::{count_matrix, counts_upto, ingest_events, IngestOptions};
use audience_core::kernels::KernelBank;
use audience_core::simulate::{simulate_logs, GroundTruthModel};
use audience_core::{BehavioralLog, CategoryIndex, KernelParams};
use common::{arb_events, log_of};
use proptest::prelude::*;

fn reingest(log: &BehavioralLog) -> BehavioralLog {
    let mut buf = Vec::new();
    log.write_csv(&mut buf).unwrap();
    ingest_events(buf.as_slice(), &IngestOptions::default()).unwrap().0
}

proptest! {
    #[test]
    fn csv_roundtrip_is_identity(events in arb_events(60, 100)) {
        let log = log_of(events);
        prop_assert_eq!(reingest(&log), log);
    }

    #[test]
    fn counts_upto_matches_scan(events in arb_events(60, 50), t in 0.0f64..55.0) {
        let log = log_of(events.clone());
        for u in 0..6 {
            let id = format!("u{u}");
            for (c, cat) in common::CATEGORIES.iter().enumerate() {
                let Some(ci) = log.categories().index_of(cat) else { continue };
                let brute = events
                    .iter()
                    .filter(|e| e.user_id == id && e.category_id == *cat && e.timestamp_days < t)
                    .count();
                prop_assert_eq!(counts_upto(&log, &id, ci, t), brute, "user {} category {}", u, c);
            }
        }
    }

    #[test]
    fn count_rows_sum_to_user_totals(events in arb_events(60, 50), grain_eighths in 1u32..40) {
        let log = log_of(events);
        let grain = grain_eighths as f64 / 8.0;
        let cells = (log.window() / grain).ceil() as usize + 1;
        for c in 0..log.num_categories() {
            let m = count_matrix(&log, c, grain, cells).unwrap();
            for (u, user) in log.users().iter().enumerate() {
                prop_assert_eq!(m.row_sum(u), user.timestamps(c).len() as u64);
            }
        }
    }
}

#[test]
fn simulated_thousand_rows_roundtrip() {
    let categories = CategoryIndex::new(["x", "y"]);
    let model = GroundTruthModel {
        kernels: KernelBank::uniform(categories.clone(), KernelParams::weibull(20.0, 3.0)),
        categories,
        base_rates: vec![0.02, 0.01],
        network: vec![vec![0.3, 0.1], vec![0.2, 0.3]],
        horizon: 365.0,
        users: 90,
    };
    let log = simulate_logs(&model, 5).unwrap();
    assert!(log.num_events() >= 1000, "only {} rows", log.num_events());
    assert_eq!(reingest(&log), log);
}
