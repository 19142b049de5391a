//! Property-based invariants across the pattern, channel, and recovery stack.

use proptest::prelude::*;

use iqsync::channel::{simulate_detections, ppm_timebin, DetectionSet, LinkParams};
use iqsync::pattern::{pack_symbols, unpack_symbols, LevelSelector, SyncConfig};
use iqsync::recovery::recover_offset;

fn config_strategy() -> impl Strategy<Value = (u32, u32, u64)> {
    (1u32..=9, any::<u64>()).prop_flat_map(|(l_max, seed)| {
        (Just(l_max), 1u32..=l_max + 1, Just(seed))
    })
}

fn link_strategy() -> impl Strategy<Value = (f64, f64, i64, u64)> {
    (
        0.0f64..=1.0,
        0.0f64..=0.05,
        -2000i64..=2000,
        any::<u64>(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pattern_is_deterministic_and_randomly_addressable(
        (l_max, d_i, seed) in config_strategy()
    ) {
        let cfg = SyncConfig::new(l_max, d_i, seed, 1600).unwrap();
        let take = cfg.counts().total_symbols.min(2048) as usize;
        let a: Vec<_> = cfg.pattern().take(take).collect();
        let b: Vec<_> = cfg.pattern().take(take).collect();
        prop_assert_eq!(&a, &b);
        let selector = LevelSelector::new(seed);
        for record in a.iter().step_by(17) {
            prop_assert_eq!(cfg.symbol_at(&selector, record.k_s).unwrap(), *record);
        }
    }

    #[test]
    fn levels_respect_group_ranges((l_max, d_i, seed) in config_strategy()) {
        let cfg = SyncConfig::new(l_max, d_i, seed, 1600).unwrap();
        for record in cfg.pattern().take(4096) {
            let lo = record.k_g as u32 * d_i;
            let hi = (lo + d_i - 1).min(l_max);
            prop_assert!((lo..=hi).contains(&record.level));
            prop_assert!(record.symbol <= 1);
        }
    }

    #[test]
    fn detections_are_sorted_unique_and_reproducible(
        (l_max, d_i, seed) in config_strategy(),
        (p_sig, p_noise, offset, rng_seed) in link_strategy(),
    ) {
        let cfg = SyncConfig::new(l_max, d_i, seed, 1600).unwrap();
        let lp = LinkParams {
            p_sig,
            p_noise,
            offset_timebins: offset,
            frac_offset: 0.0,
            jitter_sigma: 0.0,
            rng_seed,
        };
        let d = simulate_detections(&cfg, &lp).unwrap();
        prop_assert!(d.timebins().windows(2).all(|w| w[0] < w[1]));
        let again = simulate_detections(&cfg, &lp).unwrap();
        prop_assert_eq!(&d, &again);
        // Every index stays inside the padded receiver window.
        let bound = 2 * cfg.counts().total_symbols as i128 + offset.unsigned_abs() as i128;
        prop_assert!(d.timebins().iter().all(|&tb| (tb as i128) < bound));
    }

    #[test]
    fn noiseless_detections_map_back_to_pattern(
        (l_max, d_i, seed) in config_strategy(),
        offset in -500i64..=500,
        rng_seed in any::<u64>(),
    ) {
        let cfg = SyncConfig::new(l_max, d_i, seed, 1600).unwrap();
        let lp = LinkParams {
            p_sig: 0.6,
            p_noise: 0.0,
            offset_timebins: offset,
            frac_offset: 0.0,
            jitter_sigma: 0.0,
            rng_seed,
        };
        let d = simulate_detections(&cfg, &lp).unwrap();
        let selector = LevelSelector::new(seed);
        for &tb in d.timebins() {
            let original = tb as i64 - offset;
            prop_assert!(original >= 0);
            let k_s = (original as u64) >> 1;
            let record = cfg.symbol_at(&selector, k_s).unwrap();
            prop_assert_eq!(ppm_timebin(k_s, record.symbol), original as u64);
        }
    }

    #[test]
    fn recovery_is_pure_and_range_bounded(
        l_max in 1u32..=8,
        d_i_index in 0u32..=8,
        raw in prop::collection::vec(0u64..1_000_000, 0..400),
    ) {
        let d_i = 1 + d_i_index % (l_max + 1);
        let d = DetectionSet::from_unsorted(raw);
        let a = recover_offset(l_max, d_i, &d).unwrap();
        let b = recover_offset(l_max, d_i, &d).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.delta_timebins.abs() <= 1i64 << l_max);
        prop_assert_eq!(a.delta_symbols, a.delta_timebins / 2);
        prop_assert_eq!(a.level_counters.len() as u32, l_max + 1);
        let n = d.len() as i64;
        prop_assert!(a.level_counters.iter().all(|c| c.abs() <= n));
        let visit_bound = d.len() as u64 * d_i as u64 + (l_max + 1) as u64;
        prop_assert!(a.loop_iterations <= visit_bound);
        prop_assert_eq!(a.no_data, d.is_empty());
    }

    #[test]
    fn packed_symbols_roundtrip(bits in prop::collection::vec(0u8..=1, 0..600)) {
        let packed = pack_symbols(bits.iter().copied());
        let unpacked = unpack_symbols(&packed).unwrap();
        prop_assert_eq!(bits, unpacked);
    }
}

#[test]
fn lossless_recovery_roundtrip_no_interleaving() {
    // End-to-end: simulate then recover across the guaranteed range for a
    // mid-size configuration.
    let l_max = 8;
    let cfg = SyncConfig::new(l_max, 1, 0xabcd, 1600).unwrap();
    let d_max = 1i64 << (l_max - 1);
    for tb in [-2 * d_max, -177, -1, 0, 1, 100, 2 * d_max - 3] {
        let lp = LinkParams {
            p_sig: 1.0,
            p_noise: 0.0,
            offset_timebins: tb,
            frac_offset: 0.0,
            jitter_sigma: 0.0,
            rng_seed: 0,
        };
        let d = simulate_detections(&cfg, &lp).unwrap();
        let r = recover_offset(l_max, 1, &d).unwrap();
        assert_eq!(r.delta_timebins, tb);
    }
}
