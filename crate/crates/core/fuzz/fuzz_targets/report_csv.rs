#![no_main]

use libfuzzer_sys::fuzz_target;
use polenav::harness::{parse_report, render_plot, summarize, write_report};

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_report(data) {
        assert_eq!(parse_report(&write_report(&rows)).expect("re-encoded report parses"), rows);
        let _ = render_plot(&summarize(&rows));
    }
});
