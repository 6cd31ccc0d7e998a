#![no_main]
use libfuzzer_sys::fuzz_target;
use shadowleak::experiments::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_toml(text) {
        let _ = cfg.sweep.snr_grid();
        let _ = ExperimentConfig::from_toml(&cfg.to_toml());
    }
});
