//! Acceptance run: one line per criterion, each backed by a suite on its
//! default corpus and judged against the committed ledger.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use journe_lab::{judge, Ledger, Suite};

struct Criterion {
    id: u32,
    title: &'static str,
    suite: Suite,
    limit: Option<Duration>,
}

const fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

const CRITERIA: [Criterion; 14] = [
    Criterion { id: 1, title: "grid nested-or-disjoint", suite: Suite::Grids, limit: secs(10) },
    Criterion { id: 2, title: "shifted cover witnesses", suite: Suite::ShiftedCover, limit: None },
    Criterion { id: 3, title: "grid weak type, norm one", suite: Suite::WeakType, limit: secs(30) },
    Criterion { id: 4, title: "small weak-type excess", suite: Suite::SmallWeak, limit: None },
    Criterion { id: 5, title: "packing Σ|R| ≤ 2|sh|", suite: Suite::Packing, limit: None },
    Criterion { id: 6, title: "good/bad termination", suite: Suite::GoodBad, limit: None },
    Criterion { id: 7, title: "Journé ratios", suite: Suite::Journe, limit: secs(300) },
    Criterion { id: 8, title: "small enlargement", suite: Suite::SmallEnlargement, limit: None },
    Criterion { id: 9, title: "Carleson norm chain", suite: Suite::Carleson, limit: None },
    Criterion { id: 10, title: "John–Nirenberg, p = 2", suite: Suite::JohnNirenberg, limit: None },
    Criterion { id: 11, title: "weak embedding instance", suite: Suite::WeakInstance, limit: None },
    Criterion { id: 12, title: "F-set sums in 3-D", suite: Suite::Few, limit: None },
    Criterion { id: 13, title: "uniform embeddedness", suite: Suite::UniformHigh, limit: None },
    Criterion { id: 14, title: "embeddedness breakpoints", suite: Suite::EmbScan, limit: None },
];

fn main() -> ExitCode {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("ledger.json");
    let mut ledger = match Ledger::load(&path) {
        Ok(l) => l,
        Err(e) => {
            println!("acceptance: cannot load {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    };
    let mut failed = 0;
    for c in &CRITERIA {
        let start = Instant::now();
        let verdict = c.suite.run(&c.suite.default_config()).and_then(|o| judge(o, &mut ledger, false));
        let took = start.elapsed();
        let in_time = c.limit.is_none_or(|l| took <= l);
        let limit = c.limit.map(|l| format!(" (limit {}s)", l.as_secs())).unwrap_or_default();
        let (ok, detail) = match &verdict {
            Ok(v) => (v.pass && in_time, v.summary()),
            Err(e) => (false, format!("{}: error: {e}", c.suite)),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "[{}] criterion {:>2} {}: {} [{:.1}s{}]",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.title,
            detail,
            took.as_secs_f64(),
            limit
        );
    }
    println!("acceptance: {} of {} criteria passed", CRITERIA.len() - failed, CRITERIA.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
