//! Precision, recall, F2, effectiveness and cost from confusion counts,
//! including the published stage totals and a box-plot summary.
//!
//! cargo run --example evaluate_metrics

use cia_core::metrics::{boxplot_summary, cost, f2_score, pct1, render_report, ConfusionCounts, EvalReport, ReportFormat};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (r, p) in [(0.818, 0.857), (0.909, 0.294)] {
        println!("R={:.1} P={:.1} -> F2={:.1}", r * 100.0, p * 100.0, pct1(f2_score(p, r)));
    }

    // Stage totals (TP, FP) over N_c rationales and N_req requirements. The
    // counts are pooled into one row, so the denominator goes in as N_c * N_req.
    for (name, tp, fp, n_c, n_req) in [("72 req / 5 CR final", 19, 12, 5, 72), ("192 req / 11 CR w/o", 26, 12, 11, 192)] {
        let c = [ConfusionCounts::new("all", tp, fp, 0)];
        let per = cost(&c, n_req * n_c)?;
        println!("{name}: cost {:.1}%", pct1(per));
    }

    let counts = vec![
        ConfusionCounts::new("C1", 3, 2, 0),
        ConfusionCounts::new("C2", 4, 1, 2),
        ConfusionCounts::new("C3", 0, 1, 3),
    ];
    let report = EvalReport::from_counts(counts, 72)?;
    print!("\n{}", render_report(&report, ReportFormat::Markdown));

    let f2s = [0.52, 0.61, 0.64, 0.66, 0.70, 0.71, 0.73, 0.75, 0.91];
    println!("\n{:?}", boxplot_summary(&f2s)?);
    Ok(())
}
