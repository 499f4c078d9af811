//! Entity precision, recall and F1 from verdict counts, printed as the
//! review tool's metrics table.
//!
//! ```text
//! cargo run --example metrics_table -- 752 9 55
//! ```

use kgen::eval::{Counts, MetricsReport, SigmaCounts};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let (tp, fp, fn_) = match args[..] {
        [tp, fp, fn_] => (tp, fp, fn_),
        [] => (752, 9, 55),
        _ => return Err("usage: metrics_table [TP FP FN]".into()),
    };
    let entities = Counts {
        tp,
        fp,
        fn_,
        pending: 0,
    };
    let report = MetricsReport::from_counts(
        entities,
        Counts::default(),
        Counts::default(),
        SigmaCounts::default(),
        SigmaCounts::default(),
    );
    print!("{}", report.to_table());
    Ok(())
}
