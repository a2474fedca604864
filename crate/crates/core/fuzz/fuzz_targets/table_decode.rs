#![no_main]

use libfuzzer_sys::fuzz_target;
use polenav::replay::LookupTable;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = LookupTable::from_bytes(data) {
        assert_eq!(table.to_bytes(), data);
        for q in 0..table.n_queries().min(8) {
            let _ = table.lookup(q);
        }
    }
});
