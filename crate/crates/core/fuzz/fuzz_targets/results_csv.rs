#![no_main]
use libfuzzer_sys::fuzz_target;
use shadowleak::experiments::ResultTable;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = ResultTable::read_csv(data) {
        assert!(table.rows.iter().all(|r| (0.0..=1.0).contains(&r.accuracy)));
        let again = ResultTable::read_csv(table.to_csv_string().as_bytes()).expect("own output parses");
        assert_eq!(again.rows.len(), table.rows.len());
    }
});
