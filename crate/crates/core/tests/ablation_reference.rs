//! Importances and training MSE on the published per-prompt F2 tables,
//! checked against scikit-learn's GradientBoostingRegressor(n_estimators=40,
//! learning_rate=0.1, max_depth=3, random_state=42) fitted on the same rows.

mod common;

use std::fs::File;

use cia_core::ablation::{importance_report, read_score_table, rows_by_context, GbdtParams};

// [d1, d3, d4, d5, d6, d7] and training MSE.
const REFERENCE: [(&str, [f64; 6], f64); 4] = [
    ("GPT4o/WASP", [0.0077, 0.5733, 0.0297, 0.1199, 0.2247, 0.0446], 0.0010005092),
    ("LLaMa-3-405B/WASP", [0.0264, 0.4162, 0.1192, 0.1335, 0.2575, 0.0472], 0.0004448108),
    ("GPT4o/SAT-DLink", [0.0712, 0.3485, 0.1125, 0.2174, 0.2086, 0.0418], 0.0037743336),
    ("LLaMa-3-405B/SAT-DLink", [0.2027, 0.1726, 0.2109, 0.1398, 0.1638, 0.1102], 0.0009435634),
];

#[test]
fn importances_match_the_reference_implementation() {
    let records = read_score_table(File::open(common::fixture("prompt_variant_scores.csv")).unwrap()).unwrap();
    let groups = rows_by_context(&records, false).unwrap();
    for (context, want, mse) in REFERENCE {
        let (_, rows) = groups
            .iter()
            .find(|(c, _)| c == context)
            .unwrap_or_else(|| panic!("no context {context}"));
        assert_eq!(rows.len(), 64);
        let rep = importance_report(context.to_string(), rows, &GbdtParams::default()).unwrap();
        for (i, d) in [1u8, 3, 4, 5, 6, 7].into_iter().enumerate() {
            let got = rep.score(d).unwrap();
            assert!((got - want[i]).abs() < 5e-4, "{context} detail {d}: {got} vs {}", want[i]);
        }
        assert!((rep.train_mse - mse).abs() < 1e-9, "{context} mse {}", rep.train_mse);
    }
}
