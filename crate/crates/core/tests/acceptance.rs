//! Acceptance suite: one line per criterion, non-zero exit on any failure.
//!
//! Criteria 5, 6 and 8 train into `target/acceptance` (or
//! `$GRIPLINE_ACCEPTANCE_DIR`). Training is deterministic and resumes from
//! checkpoints, so finished runs are reused rather than repeated. Set
//! `GRIPLINE_SKIP_LONG=1` to report those criteria as skipped instead.

use std::path::PathBuf;
use std::time::Instant;

use gripline_core::verify::{self, Report, Status};

fn acceptance_root() -> PathBuf {
    std::env::var_os("GRIPLINE_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance")
        })
}

fn main() {
    let started = Instant::now();
    let mut reports: Vec<Report> = Vec::new();
    let mut timed = |f: &dyn Fn() -> Report| {
        let t = Instant::now();
        let r = f();
        println!("{}  ({:.1} s)", r.line(), t.elapsed().as_secs_f64());
        reports.push(r);
    };
    timed(&verify::reward_arithmetic);
    timed(&verify::friction_circle);
    timed(&verify::gae_and_losses);
    timed(&|| verify::determinism(3));
    timed(&verify::grip_sensitivity);
    let long = if std::env::var_os("GRIPLINE_SKIP_LONG").is_some_and(|v| v != "0") {
        verify::long_skipped("GRIPLINE_SKIP_LONG is set")
    } else {
        let root = acceptance_root();
        println!("long criteria use {}", root.display());
        let t = Instant::now();
        let out = verify::long_suite(&root, &mut |m| eprintln!("  {m}"));
        println!("long criteria took {:.1} s", t.elapsed().as_secs_f64());
        out
    };
    for r in long {
        println!("{}", r.line());
        reports.push(r);
    }
    println!();
    for r in &reports {
        print!("{r}");
    }
    let failed = reports.iter().filter(|r| r.status == Status::Fail).count();
    let skipped = reports
        .iter()
        .filter(|r| r.status == Status::Skipped)
        .count();
    println!(
        "acceptance: {} passed, {failed} failed, {skipped} skipped in {:.1} s",
        reports.len() - failed - skipped,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
